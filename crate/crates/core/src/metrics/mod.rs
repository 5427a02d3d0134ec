//! Graphic and content measures for generated layouts.
//!
//! Every measure is computed over valid elements only (see
//! [`crate::layout::is_valid`]). Per-layout values may be computed in
//! parallel; aggregation is always a compensated sum in input order so the
//! result does not depend on scheduling.

mod content;
mod features;
mod frechet;
mod graphic;
mod leakage;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use content::{occlusion, readability, GrayMap};
pub use features::{
    geometric_featurizer, Featurizer, GeometricFeatures, GeometricFeaturizer, SLOT_WIDTH,
};
pub use frechet::{frechet_distance, frechet_gaussians, FeatureSet, Gaussian, COVARIANCE_RIDGE};
pub use graphic::{alignment, overlap, underlay, validity, UnderlayScore};
pub use leakage::leakage_probe;

use crate::layout::Layout;
use crate::Result;

/// Neumaier-compensated mean; `None` for an empty input.
pub fn stable_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0usize;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
        n += 1;
    }
    (n > 0).then(|| (sum + comp) / n as f64)
}

/// Copy of `layout` keeping only valid elements.
pub fn valid_only(layout: &Layout) -> Layout {
    Layout {
        canvas: layout.canvas.clone(),
        elements: layout.valid_elements().copied().collect(),
        texts: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphicMeasures {
    pub val: f64,
    pub ove: f64,
    pub ali: f64,
    /// `None` when no layout contains a valid Underlay.
    pub und_l: Option<f64>,
    pub und_s: Option<f64>,
}

/// Validity over the whole set; overlap and alignment averaged over layouts;
/// underlay averaged over layouts that contain an Underlay.
pub fn graphic_measures(layouts: &[Layout]) -> Result<GraphicMeasures> {
    let val = validity(layouts)?;
    let per: Vec<(f64, f64, Option<UnderlayScore>)> = layouts
        .par_iter()
        .map(|l| (overlap(l), alignment(l), underlay(l)))
        .collect();
    let unds: Vec<UnderlayScore> = per.iter().filter_map(|p| p.2).collect();
    Ok(GraphicMeasures {
        val,
        ove: stable_mean(per.iter().map(|p| p.0)).unwrap_or(0.0),
        ali: stable_mean(per.iter().map(|p| p.1)).unwrap_or(0.0),
        und_l: stable_mean(unds.iter().map(|u| u.loose)),
        und_s: stable_mean(unds.iter().map(|u| u.strict)),
    })
}

/// Embed both layout sets (valid elements only) and return their Fréchet distance.
pub fn layout_frechet(a: &[Layout], b: &[Layout], featurizer: &dyn Featurizer) -> Result<f64> {
    let embed = |set: &[Layout]| -> Result<FeatureSet> {
        FeatureSet::new(
            set.par_iter()
                .map(|l| featurizer.features(&valid_only(l)))
                .collect(),
        )
    };
    frechet_distance(&embed(a)?, &embed(b)?)
}

/// Aggregate evaluation result, in the column order
/// `val ove ali und_l und_s FD rea occ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub val: f64,
    pub ove: f64,
    pub ali: f64,
    pub und_l: Option<f64>,
    pub und_s: Option<f64>,
    pub fd: Option<f64>,
    pub rea: Option<f64>,
    pub occ: Option<f64>,
    pub n_samples: usize,
    pub n_failures: usize,
    /// Failure counts keyed by kind (`abnormal_format`, `overflow`, `transport`).
    #[serde(default)]
    pub failures: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn failure_rate(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.n_failures as f64 / self.n_samples as f64
        }
    }

    /// Fixed-width plain-text table.
    pub fn to_table(&self) -> String {
        let cols: [(&str, Option<f64>); 8] = [
            ("val", Some(self.val)),
            ("ove", Some(self.ove)),
            ("ali", Some(self.ali)),
            ("und_l", self.und_l),
            ("und_s", self.und_s),
            ("FD", self.fd),
            ("rea", self.rea),
            ("occ", self.occ),
        ];
        let mut header = String::new();
        let mut row = String::new();
        for (name, v) in cols {
            let _ = write!(header, "{name:>10}");
            match v {
                Some(v) => {
                    let _ = write!(row, "{v:>10.4}");
                }
                None => {
                    let _ = write!(row, "{:>10}", "-");
                }
            }
        }
        format!(
            "{header}\n{row}\nsamples: {}  failures: {}\n",
            self.n_samples, self.n_failures
        )
    }
}
