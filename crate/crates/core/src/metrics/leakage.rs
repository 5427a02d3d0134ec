//! Probe for layouts that land on inpainted regions.

use crate::geometry::Rect;
use crate::layout::Layout;
use crate::{Error, Result};

/// Fraction of generated elements whose IoU with some inpainted region of the
/// same sample exceeds `iou_threshold`. 0 when there are no elements.
pub fn leakage_probe(
    generated: &[Layout],
    inpainted_regions: &[Vec<Rect>],
    iou_threshold: f64,
) -> Result<f64> {
    if generated.len() != inpainted_regions.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} region lists", generated.len()),
            actual: inpainted_regions.len().to_string(),
        });
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (layout, regions) in generated.iter().zip(inpainted_regions) {
        for e in &layout.elements {
            total += 1;
            let r = e.rect();
            if regions.iter().any(|g| r.iou(g) > iou_threshold) {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Canvas, Category, Element};

    fn layout(rects: &[Rect]) -> Layout {
        Layout::new(
            Canvas::new(500, 500).unwrap(),
            rects
                .iter()
                .map(|r| Element::new(Category::Text, r.x, r.y, r.w, r.h))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn no_regions() {
        let l = layout(&[Rect::new(0, 0, 10, 10)]);
        assert_eq!(leakage_probe(&[l], &[vec![]], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn planted_elements() {
        let rects = [Rect::new(0, 0, 10, 10), Rect::new(100, 100, 50, 20)];
        let l = layout(&rects);
        for t in [0.0, 0.5, 0.99] {
            assert_eq!(
                leakage_probe(std::slice::from_ref(&l), &[rects.to_vec()], t).unwrap(),
                1.0
            );
        }
    }

    #[test]
    fn one_of_four() {
        // IoU of (0,0,100,100) with (0,0,100,60) is 6000 / 10000.
        let l = layout(&[
            Rect::new(0, 0, 100, 100),
            Rect::new(200, 0, 10, 10),
            Rect::new(300, 0, 10, 10),
            Rect::new(400, 0, 10, 10),
        ]);
        let regions = vec![Rect::new(0, 0, 100, 60)];
        assert_eq!(leakage_probe(&[l], &[regions], 0.5).unwrap(), 0.25);
    }

    #[test]
    fn misaligned_inputs() {
        assert!(leakage_probe(&[], &[vec![]], 0.5).is_err());
    }
}
