//! Fixed-length layout features for Fréchet distance.

use crate::layout::{Category, Layout};

/// Maps a layout to a fixed-length vector. Distances are only comparable
/// between sets embedded by the same featurizer.
pub trait Featurizer: Sync {
    fn dim(&self) -> usize;
    fn features(&self, layout: &Layout) -> Vec<f64>;
}

/// Per-element slot width: one-hot category plus normalized x, y, w, h.
pub const SLOT_WIDTH: usize = Category::ALL.len() + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricFeatures {
    pub vector: Vec<f64>,
    /// Set when the layout had more than `max_elems` elements.
    pub truncated: bool,
}

/// Elements sorted by (y, x, category), each encoded as
/// `[one-hot(4), x/W, y/H, w/W, h/H]`, zero-padded to `max_elems` slots.
pub fn geometric_featurizer(layout: &Layout, max_elems: usize) -> GeometricFeatures {
    let mut elems = layout.elements.clone();
    elems.sort_by_key(|e| (e.y, e.x, e.category, e.w, e.h));
    let truncated = elems.len() > max_elems;
    if truncated {
        log::warn!(
            "layout has {} elements, features keep the first {max_elems}",
            elems.len()
        );
    }
    let (cw, ch) = (layout.canvas.width as f64, layout.canvas.height as f64);
    let mut vector = vec![0.0; max_elems * SLOT_WIDTH];
    for (slot, e) in vector.chunks_exact_mut(SLOT_WIDTH).zip(&elems) {
        slot[e.category.index()] = 1.0;
        slot[4] = e.x as f64 / cw;
        slot[5] = e.y as f64 / ch;
        slot[6] = e.w as f64 / cw;
        slot[7] = e.h as f64 / ch;
    }
    GeometricFeatures { vector, truncated }
}

/// The default featurizer, backed by [`geometric_featurizer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometricFeaturizer {
    pub max_elems: usize,
}

impl Default for GeometricFeaturizer {
    fn default() -> Self {
        GeometricFeaturizer { max_elems: 20 }
    }
}

impl Featurizer for GeometricFeaturizer {
    fn dim(&self) -> usize {
        self.max_elems * SLOT_WIDTH
    }

    fn features(&self, layout: &Layout) -> Vec<f64> {
        geometric_featurizer(layout, self.max_elems).vector
    }
}
