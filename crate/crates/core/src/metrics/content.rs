//! Content measures against the canvas: occlusion and readability.

use std::path::Path;

use image::imageops::FilterType;

use crate::geometry::{Rect, RectUnion};
use crate::layout::{Category, Layout};
use crate::{Error, Result};

/// Row-major grayscale image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayMap {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width as usize * height as usize),
                actual: format!("{} pixels", data.len()),
            });
        }
        Ok(GrayMap {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        GrayMap {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: u32, height: u32, value: f64) -> Self {
        GrayMap {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    /// Load an image as luma in `[0, 1]`, resizing to `size` when given and
    /// different from the stored dimensions.
    pub fn load(path: &Path, size: Option<(u32, u32)>) -> Result<Self> {
        let mut img = image::open(path)?.into_luma8();
        if let Some((w, h)) = size {
            if img.dimensions() != (w, h) {
                img = image::imageops::resize(&img, w, h, FilterType::Triangle);
            }
        }
        let (width, height) = img.dimensions();
        Ok(GrayMap {
            width,
            height,
            data: img
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    fn check_size(&self, layout: &Layout) -> Result<()> {
        if (self.width, self.height) != (layout.canvas.width, layout.canvas.height) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", layout.canvas.width, layout.canvas.height),
                actual: format!("{}x{}", self.width, self.height),
            });
        }
        Ok(())
    }

    /// Central-difference gradient magnitude with replicated borders.
    pub fn gradient_magnitude(&self) -> GrayMap {
        let (w, h) = (self.width, self.height);
        GrayMap::from_fn(w, h, |x, y| {
            let gx = (self.get((x + 1).min(w - 1), y) - self.get(x.saturating_sub(1), y)) / 2.0;
            let gy = (self.get(x, (y + 1).min(h - 1)) - self.get(x, y.saturating_sub(1))) / 2.0;
            (gx * gx + gy * gy).sqrt()
        })
    }
}

/// Summed-area table for O(1) rectangle sums.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(map: &GrayMap) -> Self {
        let (w, h) = (map.width as usize, map.height as usize);
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += map.data[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Integral {
            width: stride,
            sums,
        }
    }

    fn rect_sum(&self, r: &Rect) -> f64 {
        let (x0, y0) = (r.x as usize, r.y as usize);
        let (x1, y1) = (r.right() as usize, r.bottom() as usize);
        let at = |x: usize, y: usize| self.sums[y * self.width + x];
        at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0)
    }
}

fn mean_over_union(map: &GrayMap, rects: &[Rect]) -> Option<f64> {
    let union = RectUnion::new(rects);
    if union.is_empty() {
        return None;
    }
    let integral = Integral::new(map);
    let total: f64 = union.cells().iter().map(|c| integral.rect_sum(c)).sum();
    Some(total / union.area() as f64)
}

/// Mean saliency over the pixel union of all valid element boxes; 0 when the
/// union is empty.
pub fn occlusion(layout: &Layout, saliency: &GrayMap) -> Result<f64> {
    saliency.check_size(layout)?;
    let rects: Vec<Rect> = layout.valid_elements().map(|e| e.rect()).collect();
    Ok(mean_over_union(saliency, &rects).unwrap_or(0.0))
}

/// Mean gradient magnitude of `canvas_image` over the pixels covered by
/// valid Text elements, or `None` when the layout has no such element.
pub fn readability(layout: &Layout, canvas_image: &GrayMap) -> Result<Option<f64>> {
    canvas_image.check_size(layout)?;
    let rects: Vec<Rect> = layout
        .valid_elements()
        .filter(|e| e.category == Category::Text)
        .map(|e| e.rect())
        .collect();
    if rects.is_empty() {
        return Ok(None);
    }
    Ok(mean_over_union(&canvas_image.gradient_magnitude(), &rects))
}
