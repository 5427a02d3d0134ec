//! Construction of (input, target) pairs for the seven conditional tasks.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{self, assemble_prompt, PromptParts};
use crate::layout::{permutation, Canvas, Element, Layout, MaskedElement, Slot};
use crate::{Error, Result};

/// Largest fraction of attribute slots Recover may mask.
pub const RECOVER_MAX_RATIO: f64 = 0.8;
/// Standard deviation of the Refinement noise, in normalized coordinates.
pub const REFINEMENT_SIGMA: f64 = 0.01;

const TASK_PREFIX: &str = "I want to generate layout in poster design format. ";

// RNG streams derived from a sample seed. The permutation uses the plain seed.
const MASK_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Image only.
    GenI,
    /// Image and element categories.
    GenIT,
    /// Image, categories and sizes.
    GenITS,
    /// Image, categories and positions.
    GenITP,
    /// Image and a strict subset of fully specified elements.
    Completion,
    /// Image and a layout with a random subset of attributes masked.
    Recover,
    /// Image and a layout perturbed by Gaussian noise.
    Refinement,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::GenI,
        TaskKind::GenIT,
        TaskKind::GenITS,
        TaskKind::GenITP,
        TaskKind::Completion,
        TaskKind::Recover,
        TaskKind::Refinement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::GenI => "Gen-I",
            TaskKind::GenIT => "Gen-IT",
            TaskKind::GenITS => "Gen-ITS",
            TaskKind::GenITP => "Gen-ITP",
            TaskKind::Completion => "Completion",
            TaskKind::Recover => "Recover",
            TaskKind::Refinement => "Refinement",
        }
    }

    /// Slots masked on every element, for the kinds with a fixed pattern.
    pub fn fixed_mask(self) -> Option<&'static [Slot]> {
        match self {
            TaskKind::GenI => Some(&Slot::ALL),
            TaskKind::GenIT => Some(&Slot::GEOMETRY),
            TaskKind::GenITS => Some(&[Slot::X, Slot::Y]),
            TaskKind::GenITP => Some(&[Slot::Width, Slot::Height]),
            TaskKind::Refinement => Some(&[]),
            TaskKind::Completion | TaskKind::Recover => None,
        }
    }

    /// The instruction line that opens the prompt.
    pub fn task_definition(self) -> String {
        let body = match self {
            TaskKind::Recover => {
                "Please recover the layout html   according to the bbox , categories, size, image I provide"
            }
            TaskKind::GenI => "Please generate the layout html according to the image I provide",
            TaskKind::GenIT => "Please generate the layout html according to the categories and image I provide",
            TaskKind::GenITS => {
                "Please generate the layout html according to the categories, size and image I provide"
            }
            TaskKind::GenITP => {
                "Please generate the layout html according to the categories, position and image I provide"
            }
            TaskKind::Completion => {
                "Please complete the layout html according to the partial layout and image I provide"
            }
            TaskKind::Refinement => {
                "Please refine the layout html according to the noisy layout and image I provide"
            }
        };
        format!("{TASK_PREFIX}{body} (in html format)")
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name().replace('-', "").to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::domain(format!("unknown task kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskParams {
    /// Let Recover mask the category slot as well as geometry.
    pub recover_mask_category: bool,
    /// Fixed Recover ratio in (0, 0.8]; drawn uniformly per sample when unset.
    pub recover_ratio: Option<f64>,
    /// Emit one fully masked rect per element for Gen-I, revealing the count.
    pub element_count_hint: bool,
    pub refinement_sigma: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            recover_mask_category: false,
            recover_ratio: None,
            element_count_hint: false,
            refinement_sigma: REFINEMENT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub id: String,
    /// Id of the ground-truth record the sample was built from.
    pub source_id: String,
    pub kind: TaskKind,
    pub canvas: Canvas,
    pub task_definition: String,
    pub input_html: String,
    pub target_html: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
    pub seed: u64,
}

impl TaskSample {
    pub fn prompt_parts(&self) -> PromptParts {
        PromptParts {
            task_definition: self.task_definition.clone(),
            text_constraint: self.texts.clone(),
            html_body: self.input_html.clone(),
            image_placeholder: None,
        }
    }

    pub fn prompt(&self) -> String {
        assemble_prompt(&self.prompt_parts())
    }
}

/// Build a task sample from a ground-truth layout.
///
/// Masking is applied to a copy of `gt`, then input and target are reordered
/// by the same permutation drawn from `seed` and serialized.
pub fn build(kind: TaskKind, gt: &Layout, seed: u64, params: &TaskParams) -> Result<TaskSample> {
    gt.check()?;
    let n = gt.elements.len();
    let inputs: Vec<MaskedElement> = match kind {
        TaskKind::Completion => completion_inputs(gt, seed)?,
        TaskKind::Recover => {
            let per = if params.recover_mask_category { 5 } else { 4 };
            let slots: &[Slot] = if per == 5 {
                &Slot::ALL
            } else {
                &Slot::GEOMETRY
            };
            let ratio = match params.recover_ratio {
                Some(r) => r,
                None => sample_recover_ratio(seed),
            };
            let picked = mask_schedule_recover(n * per, ratio, seed)?;
            let mut masks = vec![Vec::new(); n];
            for i in picked {
                masks[i / per].push(slots[i % per]);
            }
            gt.elements
                .iter()
                .zip(&masks)
                .map(|(&e, m)| MaskedElement::from(e).masked_all(m))
                .collect()
        }
        TaskKind::Refinement => perturb_with_sigma(gt, seed, params.refinement_sigma)?
            .elements
            .into_iter()
            .map(MaskedElement::from)
            .collect(),
        fixed => {
            let slots = fixed.fixed_mask().unwrap();
            gt.elements
                .iter()
                .map(|&e| MaskedElement::from(e).masked_all(slots))
                .collect()
        }
    };
    let order = permutation(n, seed);
    let mut sample = compose(kind, gt, &inputs, &order, seed)?;
    if kind == TaskKind::GenI && !params.element_count_hint {
        sample.input_html = codec::serialize_elements(&gt.canvas, &[]);
    }
    Ok(sample)
}

/// Per-sample seed derived from the run seed, the source id and the task, so
/// a sample does not depend on its position in the batch.
pub fn sample_seed(base_seed: u64, source_id: &str, kind: TaskKind) -> u64 {
    crate::dataset::split_hash(&format!("{source_id}/{}", kind.name())) ^ base_seed.rotate_left(29)
}

/// Built samples and `(sample id, reason)` for each task that could not be
/// built.
pub type Batch = (Vec<TaskSample>, Vec<(String, String)>);

/// Build every requested task for every record. Records a task cannot be
/// built for (too few elements, say) are reported in the second list.
pub fn build_batch(
    records: &[crate::dataset::SampleRecord],
    kinds: &[TaskKind],
    base_seed: u64,
    params: &TaskParams,
) -> Result<Batch> {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for record in records {
        let gt = record.layout()?;
        for &kind in kinds {
            let seed = sample_seed(base_seed, &record.id, kind);
            match build(kind, &gt, seed, params) {
                Ok(mut s) => {
                    s.id = format!("{}/{}", record.id, kind.name());
                    s.source_id = record.id.clone();
                    samples.push(s);
                }
                Err(e) => skipped.push((format!("{}/{}", record.id, kind.name()), e.to_string())),
            }
        }
    }
    Ok((samples, skipped))
}

/// Assemble a sample from explicit per-element inputs (in ground-truth order)
/// and an explicit element order.
pub fn compose(
    kind: TaskKind,
    gt: &Layout,
    inputs: &[MaskedElement],
    order: &[usize],
    seed: u64,
) -> Result<TaskSample> {
    let n = gt.elements.len();
    if inputs.len() != n {
        return Err(Error::domain(format!(
            "{} inputs for {n} elements",
            inputs.len()
        )));
    }
    let mut seen = vec![false; n];
    if order.len() != n
        || !order
            .iter()
            .all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::domain("order is not a permutation of the elements"));
    }
    for (m, e) in inputs.iter().zip(&gt.elements) {
        if kind == TaskKind::Refinement {
            // Noisy geometry is expected to differ; only categories must agree.
            if m.category != Some(e.category) {
                return Err(Error::domain(
                    "refinement input changed an element category",
                ));
            }
        } else {
            m.unmask_with(e)?;
        }
    }
    let target = gt.reordered(order);
    let permuted: Vec<MaskedElement> = order.iter().map(|&i| inputs[i]).collect();
    Ok(TaskSample {
        id: String::new(),
        source_id: String::new(),
        kind,
        canvas: gt.canvas.clone(),
        task_definition: kind.task_definition(),
        input_html: codec::serialize_elements(&gt.canvas, &permuted),
        target_html: codec::serialize(&target, None)?,
        texts: target.texts.clone(),
        seed,
    })
}

fn mask_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MASK_STREAM);
    rng
}

fn completion_inputs(gt: &Layout, seed: u64) -> Result<Vec<MaskedElement>> {
    let n = gt.elements.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "completion needs at least two elements to give a strict non-empty subset, got {n}"
        )));
    }
    let mut rng = mask_rng(seed);
    let given = rng.random_range(1..n);
    let mut inputs = vec![MaskedElement::PLACEHOLDER; n];
    for i in index::sample(&mut rng, n, given) {
        inputs[i] = gt.elements[i].into();
    }
    Ok(inputs)
}

/// Recover ratio drawn uniformly from (0, 0.8].
fn sample_recover_ratio(seed: u64) -> f64 {
    let mut rng = mask_rng(seed);
    rng.set_stream(MASK_STREAM + 16);
    let u: f64 = rng.random();
    RECOVER_MAX_RATIO * (1.0 - u)
}

/// Uniformly chosen attribute slots to mask, sorted ascending.
///
/// The count is `round(ratio * n_attrs)`, at least 1 and never more than
/// `floor(0.8 * n_attrs)`.
pub fn mask_schedule_recover(n_attrs: usize, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= RECOVER_MAX_RATIO) {
        return Err(Error::domain(format!(
            "recover ratio {ratio} outside (0, 0.8]"
        )));
    }
    let cap = (RECOVER_MAX_RATIO * n_attrs as f64).floor() as usize;
    if cap == 0 {
        return Err(Error::domain(format!(
            "{n_attrs} attribute slots leave nothing to mask under the 80% cap"
        )));
    }
    let count = ((ratio * n_attrs as f64).round() as usize).clamp(1, cap);
    let mut picked = index::sample(&mut mask_rng(seed), n_attrs, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Perturb every coordinate by N(0, 0.01) in normalized canvas units.
pub fn perturb_refinement(gt: &Layout, seed: u64) -> Result<Layout> {
    perturb_with_sigma(gt, seed, REFINEMENT_SIGMA)
}

/// [`perturb_refinement`] with an explicit standard deviation.
///
/// Each of x, y, w, h is shifted independently, rounded back to pixels and
/// clamped so that `x + w <= width` and `y + h <= height`.
pub fn perturb_with_sigma(gt: &Layout, seed: u64, sigma: f64) -> Result<Layout> {
    let noise =
        Normal::new(0.0, sigma).map_err(|e| Error::domain(format!("sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    let (cw, ch) = (gt.canvas.width as f64, gt.canvas.height as f64);
    let mut shift = |v: u32, extent: f64| -> i64 {
        (v as f64 + noise.sample(&mut rng) * extent).round() as i64
    };

    let elements = gt
        .elements
        .iter()
        .map(|e| {
            let (x, y, w, h) = (
                shift(e.x, cw),
                shift(e.y, ch),
                shift(e.w, cw),
                shift(e.h, ch),
            );
            let x = x.clamp(0, cw as i64);
            let y = y.clamp(0, ch as i64);
            let w = w.clamp(0, cw as i64 - x);
            let h = h.clamp(0, ch as i64 - y);
            Element::new(e.category, x as u32, y as u32, w as u32, h as u32)
        })
        .collect();
    let out = Layout {
        canvas: gt.canvas.clone(),
        elements,
        texts: gt.texts.clone(),
    };
    out.check()?;
    Ok(out)
}

/// Fill every mask token of `input_html` with the value at the same position
/// in `target_html`. An input with no rects (Gen-I without a count hint)
/// yields the target unchanged.
pub fn unmask_html(input_html: &str, target_html: &str) -> Result<Vec<Element>> {
    let (_, inputs) = codec::parse_masked(input_html)?;
    let (_, targets) = codec::parse_masked(target_html)?;
    let targets: Vec<Element> = targets
        .iter()
        .map(|t| {
            t.concrete()
                .ok_or_else(|| Error::domain("target contains a mask token"))
        })
        .collect::<Result<_>>()?;
    if inputs.is_empty() {
        return Ok(targets);
    }
    if inputs.len() != targets.len() {
        return Err(Error::domain(format!(
            "input has {} rects, target has {}",
            inputs.len(),
            targets.len()
        )));
    }
    inputs
        .iter()
        .zip(&targets)
        .map(|(i, t)| i.unmask_with(t))
        .collect()
}
