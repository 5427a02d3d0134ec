//! Tooling for content-aware poster layouts expressed as HTML.
//!
//! The crate covers the full non-training surface around an HTML-speaking
//! layout model:
//!
//! - [`layout`]: categories, canvases, elements, discretization and the
//!   synchronized permutation used when building training pairs.
//! - [`codec`]: the `<rect data-category=...>` template, its lenient parser,
//!   and prompt assembly.
//! - [`tasks`]: the seven conditional generation tasks (Gen-I, Gen-IT,
//!   Gen-ITS, Gen-ITP, Completion, Recover, Refinement).
//! - [`metrics`]: graphic and content measures, Fréchet distance and the
//!   inpainting leakage probe.
//! - [`dataset`]: CGL/PKU ingestion, JSONL interchange and stable splits.
//! - [`harness`]: batch generation against a completion backend plus
//!   evaluation of the resulting ledger.
//! - [`render`]: SVG/PNG overlays and text masks.
//! - [`augment`]: depth-guided augmentation driven by external model
//!   endpoints.

pub mod augment;
pub mod codec;
pub mod dataset;
mod error;
pub mod geometry;
pub mod harness;
pub mod http;
pub mod layout;
pub mod metrics;
pub mod render;
pub mod tasks;

pub use error::{Error, Result};
pub use layout::{Canvas, Category, Element, Layout, MaskedElement, Profile, Slot};
