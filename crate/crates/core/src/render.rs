//! SVG/PNG overlays of layouts and binary text masks.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use base64::Engine as _;
use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::layout::{Category, Layout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    /// Indexed by [`Category::index`].
    pub colors: [Rgb; 4],
    pub fill_opacity: f64,
    pub stroke_width: u32,
    pub labels: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            colors: [
                Rgb(0xd6, 0x27, 0x28), // Logo: red
                Rgb(0x2c, 0xa0, 0x2c), // Text: green
                Rgb(0x1f, 0x77, 0xb4), // Underlay: blue
                Rgb(0xff, 0x7f, 0x0e), // Embellishment: orange
            ],
            fill_opacity: 0.4,
            stroke_width: 2,
            labels: false,
        }
    }
}

impl RenderStyle {
    pub fn color(&self, category: Category) -> Rgb {
        self.colors[category.index()]
    }
}

/// Load an image as RGBA, resized to `width` x `height` if it differs.
pub fn load_background(path: &Path, width: u32, height: u32) -> Result<RgbaImage> {
    let img = image::open(path)?.to_rgba8();
    if img.dimensions() == (width, height) {
        Ok(img)
    } else {
        Ok(image::imageops::resize(
            &img,
            width,
            height,
            image::imageops::FilterType::Triangle,
        ))
    }
}

pub fn save_png(img: &RgbaImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Background for [`render_svg`].
#[derive(Debug, Clone, Copy)]
pub enum Background<'a> {
    /// Linked by reference.
    Href(&'a str),
    /// Embedded as a base64 PNG data URI.
    Png(&'a [u8]),
}

fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
}

/// One `<rect>` per element in layout order over a canvas-sized viewport.
pub fn render_svg(
    layout: &Layout,
    style: &RenderStyle,
    background: Option<Background<'_>>,
) -> String {
    let (w, h) = (layout.canvas.width, layout.canvas.height);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    match background {
        Some(Background::Href(href)) => {
            let _ = writeln!(
                out,
                "<image href=\"{}\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\"/>",
                escape_attr(href)
            );
        }
        Some(Background::Png(bytes)) => {
            let data = base64::engine::general_purpose::STANDARD.encode(bytes);
            let _ = writeln!(
                out,
                "<image href=\"data:image/png;base64,{data}\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\"/>"
            );
        }
        None => {}
    }
    for e in &layout.elements {
        let color = style.color(e.category).hex();
        let _ = writeln!(
            out,
            "<rect data-category=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"{}\" stroke=\"{color}\" stroke-width=\"{}\"/>",
            e.category, e.x, e.y, e.w, e.h, style.fill_opacity, style.stroke_width
        );
        if style.labels {
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>",
                e.x + 2,
                e.y + 12,
                e.category
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Rasterize the overlay at canvas resolution onto `background` (resized to
/// the canvas) or white.
pub fn render_png(
    layout: &Layout,
    style: &RenderStyle,
    background: Option<&RgbaImage>,
) -> RgbaImage {
    let (w, h) = (layout.canvas.width, layout.canvas.height);
    let mut img = match background {
        Some(bg) if bg.dimensions() == (w, h) => bg.clone(),
        Some(bg) => image::imageops::resize(bg, w, h, image::imageops::FilterType::Triangle),
        None => RgbaImage::from_pixel(w, h, Rgba([255, 255, 255, 255])),
    };
    let blend = |px: &mut Rgba<u8>, c: Rgb, alpha: f64| {
        for (ch, v) in px.0.iter_mut().zip([c.0, c.1, c.2]) {
            *ch = (*ch as f64 * (1.0 - alpha) + v as f64 * alpha).round() as u8;
        }
    };
    for e in &layout.elements {
        let c = style.color(e.category);
        let sw = style.stroke_width;
        for y in e.y..e.y + e.h {
            for x in e.x..e.x + e.w {
                let border =
                    x < e.x + sw || y < e.y + sw || x + sw >= e.x + e.w || y + sw >= e.y + e.h;
                blend(
                    img.get_pixel_mut(x, y),
                    c,
                    if border { 1.0 } else { style.fill_opacity },
                );
            }
        }
    }
    img
}

/// Canvas-sized binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32) {
        self.bits[y as usize * self.width as usize + x as usize] = true;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Write as a 1-bit grayscale PNG (set pixels white).
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let row_bytes = (self.width as usize).div_ceil(8);
        let mut data = vec![0u8; row_bytes * self.height as usize];
        for y in 0..self.height as usize {
            for x in 0..self.width as usize {
                if self.bits[y * self.width as usize + x] {
                    data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer
            .write_image_data(&data)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    /// Read any PNG, treating non-zero luma as set.
    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (width, height) = img.dimensions();
        Ok(BinaryMask {
            width,
            height,
            bits: img.into_raw().into_iter().map(|v| v > 0).collect(),
        })
    }
}

/// Pixels inside any Text element box (grown by `dilation` pixels) are set.
pub fn build_text_mask(layout: &Layout, dilation: u32) -> BinaryMask {
    let (w, h) = (layout.canvas.width, layout.canvas.height);
    let mut mask = BinaryMask::new(w, h);
    for e in layout
        .elements
        .iter()
        .filter(|e| e.category == Category::Text)
    {
        let r = e.rect().dilate(dilation, w, h);
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                mask.set(x, y);
            }
        }
    }
    mask
}
