//! Integer rectangle arithmetic shared by metrics and rendering.

use serde::{Deserialize, Serialize};

/// Axis-aligned half-open pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if (x0 as u64) < x1 && (y0 as u64) < y1 {
            Some(Rect::new(
                x0,
                y0,
                (x1 - x0 as u64) as u32,
                (y1 - y0 as u64) as u32,
            ))
        } else {
            None
        }
    }

    pub fn intersection_area(&self, other: &Rect) -> u64 {
        self.intersection(other).map_or(0, |r| r.area())
    }

    /// `true` when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Intersection over union; 0 when both rectangles are empty.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Grow by `margin` pixels on every side, clipped to `[0, width) × [0, height)`.
    pub fn dilate(&self, margin: u32, width: u32, height: u32) -> Rect {
        let x0 = self.x.saturating_sub(margin);
        let y0 = self.y.saturating_sub(margin);
        let x1 = (self.right() + margin as u64).min(width as u64) as u32;
        let y1 = (self.bottom() + margin as u64).min(height as u64) as u32;
        Rect::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }
}

/// Union of rectangles decomposed into disjoint cells on the grid spanned by
/// all rectangle edges (coordinate compression).
#[derive(Debug, Clone, Default)]
pub struct RectUnion {
    cells: Vec<Rect>,
}

impl RectUnion {
    pub fn new<'a>(rects: impl IntoIterator<Item = &'a Rect>) -> Self {
        let rects: Vec<Rect> = rects
            .into_iter()
            .filter(|r| !r.is_empty())
            .copied()
            .collect();
        if rects.is_empty() {
            return RectUnion::default();
        }
        let mut xs: Vec<u64> = rects.iter().flat_map(|r| [r.x as u64, r.right()]).collect();
        let mut ys: Vec<u64> = rects
            .iter()
            .flat_map(|r| [r.y as u64, r.bottom()])
            .collect();
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();

        let mut cells = Vec::new();
        for yw in ys.windows(2) {
            // Merge horizontally adjacent covered cells into runs per band.
            let mut run: Option<(u64, u64)> = None;
            for xw in xs.windows(2) {
                let covered = rects.iter().any(|r| {
                    r.x as u64 <= xw[0]
                        && xw[1] <= r.right()
                        && r.y as u64 <= yw[0]
                        && yw[1] <= r.bottom()
                });
                match (covered, run) {
                    (true, Some((start, _))) => run = Some((start, xw[1])),
                    (true, None) => run = Some((xw[0], xw[1])),
                    (false, Some((start, end))) => {
                        cells.push(band_cell(start, end, yw[0], yw[1]));
                        run = None;
                    }
                    (false, None) => {}
                }
            }
            if let Some((start, end)) = run {
                cells.push(band_cell(start, end, yw[0], yw[1]));
            }
        }
        RectUnion { cells }
    }

    /// Disjoint rectangles whose union equals the input union.
    pub fn cells(&self) -> &[Rect] {
        &self.cells
    }

    pub fn area(&self) -> u64 {
        self.cells.iter().map(Rect::area).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn band_cell(x0: u64, x1: u64, y0: u64, y1: u64) -> Rect {
    Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
}
