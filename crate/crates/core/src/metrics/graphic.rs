//! Graphic measures: validity, overlap, alignment, underlay.

use crate::layout::{Category, Element, Layout};
use crate::{Error, Result};

/// Fraction of elements, over the whole set, that pass [`is_valid`].
pub fn validity(layouts: &[Layout]) -> Result<f64> {
    let (valid, total) = layouts.iter().fold((0usize, 0usize), |(v, t), l| {
        (v + l.valid_elements().count(), t + l.elements.len())
    });
    if total == 0 {
        return Err(Error::UndefinedMetric("validity over zero elements".into()));
    }
    Ok(valid as f64 / total as f64)
}

/// Mean over ordered pairs of valid non-Underlay elements of
/// `area(a ∩ b) / area(a)`; 0 with fewer than two such elements.
pub fn overlap(layout: &Layout) -> f64 {
    let boxes: Vec<_> = layout
        .valid_elements()
        .filter(|e| e.category != Category::Underlay)
        .map(Element::rect)
        .collect();
    if boxes.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        for (j, b) in boxes.iter().enumerate() {
            if i != j {
                sum += a.intersection_area(b) as f64 / a.area() as f64;
            }
        }
    }
    sum / (boxes.len() * (boxes.len() - 1)) as f64
}

/// The six alignment lines of an element in normalized coordinates:
/// left, x-center, right, top, y-center, bottom.
fn alignment_lines(e: &Element, width: f64, height: f64) -> [f64; 6] {
    let (x, y, w, h) = (e.x as f64, e.y as f64, e.w as f64, e.h as f64);
    [
        x / width,
        (x + w / 2.0) / width,
        (x + w) / width,
        y / height,
        (y + h / 2.0) / height,
        (y + h) / height,
    ]
}

/// Mean over valid elements of the smallest distance, across the six
/// alignment lines, to the same line of any other valid element.
pub fn alignment(layout: &Layout) -> f64 {
    let (w, h) = (layout.canvas.width as f64, layout.canvas.height as f64);
    let lines: Vec<[f64; 6]> = layout
        .valid_elements()
        .map(|e| alignment_lines(e, w, h))
        .collect();
    if lines.len() < 2 {
        return 0.0;
    }
    let total: f64 = lines
        .iter()
        .enumerate()
        .map(|(i, a)| {
            lines
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, b)| (0..6).map(move |k| (a[k] - b[k]).abs()))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / lines.len() as f64
}

/// Per-layout underlay scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnderlayScore {
    /// Mean over underlays of the best coverage `area(u ∩ e) / area(e)`.
    pub loose: f64,
    /// Fraction of underlays that fully contain some element.
    pub strict: f64,
}

/// Underlay containment scores, or `None` when the layout has no valid
/// Underlay element.
pub fn underlay(layout: &Layout) -> Option<UnderlayScore> {
    let (unders, others): (Vec<&Element>, Vec<&Element>) = layout
        .valid_elements()
        .partition(|e| e.category == Category::Underlay);
    if unders.is_empty() {
        return None;
    }
    let mut loose = 0.0;
    let mut strict = 0usize;
    for u in &unders {
        let ur = u.rect();
        let mut best = 0.0f64;
        let mut contains = false;
        for e in &others {
            let inter = ur.intersection_area(&e.rect());
            best = best.max(inter as f64 / e.area() as f64);
            contains |= inter == e.area();
        }
        loose += best;
        strict += contains as usize;
    }
    let n = unders.len() as f64;
    Some(UnderlayScore {
        loose: loose / n,
        strict: strict as f64 / n,
    })
}
