//! Depth-guided poster augmentation.
//!
//! For each source poster: caption it, estimate depth, generate
//! `n_candidates` depth-conditioned images from the caption prompt, score each
//! against the original, and keep the `k_selected` most similar. Kept images
//! inherit the source layout unchanged. All four models are external
//! endpoints behind [`AugmentModels`].

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{append_jsonl, read_jsonl, Provenance, SampleRecord};
use crate::http::{Endpoint, TransportError};
use crate::{Error, Result};

pub const DEFAULT_CAPTION_TEMPLATE: &str = "Please generate {Caption} in advertisement poster.";
pub const CAPTION_PLACEHOLDER: &str = "{Caption}";

/// Whether a scorer returns similarity (higher is closer) or distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreConvention {
    #[default]
    Similarity,
    /// Negated on read, e.g. for perceptual distances.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerEndpoint {
    #[serde(flatten)]
    pub endpoint: Endpoint,
    #[serde(default)]
    pub convention: ScoreConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEndpoint {
    #[serde(flatten)]
    pub endpoint: Endpoint,
    /// Passed through verbatim (steps, guidance, ...).
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub captioner: Endpoint,
    pub depth_estimator: Endpoint,
    pub image_generator: GeneratorEndpoint,
    pub similarity_scorer: ScorerEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    #[serde(default = "default_n")]
    pub n_candidates: usize,
    #[serde(default = "default_k")]
    pub k_selected: usize,
    #[serde(default = "default_template")]
    pub caption_template: String,
    /// Root that source `image_ref`s resolve against.
    #[serde(default)]
    pub image_root: PathBuf,
    /// Root under which `aug/<source_id>/<index>.png` is written.
    #[serde(default)]
    pub output_root: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub endpoints: Option<Endpoints>,
}

fn default_n() -> usize {
    10
}
fn default_k() -> usize {
    3
}
fn default_template() -> String {
    DEFAULT_CAPTION_TEMPLATE.to_string()
}
fn default_parallelism() -> usize {
    2
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            n_candidates: default_n(),
            k_selected: default_k(),
            caption_template: default_template(),
            image_root: PathBuf::new(),
            output_root: PathBuf::new(),
            parallelism: default_parallelism(),
            endpoints: None,
        }
    }
}

impl AugmentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AugmentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=self.n_candidates).contains(&self.k_selected) {
            return Err(Error::Config(format!(
                "need 1 <= k_selected ({}) <= n_candidates ({})",
                self.k_selected, self.n_candidates
            )));
        }
        if !self.caption_template.contains(CAPTION_PLACEHOLDER) {
            return Err(Error::Config(format!(
                "caption template lacks {CAPTION_PLACEHOLDER}"
            )));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn prompt_for(&self, caption: &str) -> String {
        self.caption_template.replace(CAPTION_PLACEHOLDER, caption)
    }
}

/// The four external models. Images travel as encoded bytes (PNG/JPEG).
pub trait AugmentModels: Sync {
    fn caption(&self, image: &[u8]) -> std::result::Result<String, TransportError>;
    fn depth(&self, image: &[u8]) -> std::result::Result<Vec<u8>, TransportError>;
    /// `index` distinguishes the candidates of one job.
    fn generate(
        &self,
        prompt: &str,
        depth: &[u8],
        index: usize,
    ) -> std::result::Result<Vec<u8>, TransportError>;
    /// Higher means more similar.
    fn similarity(
        &self,
        reference: &[u8],
        candidate: &[u8],
    ) -> std::result::Result<f64, TransportError>;
}

/// [`AugmentModels`] over HTTP JSON endpoints with base64 image payloads:
///
/// | model     | request                                   | reply        |
/// |-----------|-------------------------------------------|--------------|
/// | captioner | `{image}`                                 | `{caption}`  |
/// | depth     | `{image}`                                 | `{depth}`    |
/// | generator | `{prompt, depth, index, params}`          | `{image}`    |
/// | scorer    | `{reference, candidate}`                  | `{score}`    |
#[derive(Debug, Clone)]
pub struct HttpModels {
    pub endpoints: Endpoints,
}

fn field<'a>(v: &'a Value, name: &str) -> std::result::Result<&'a Value, TransportError> {
    v.get(name)
        .ok_or_else(|| TransportError::Decode(format!("reply lacks {name:?}")))
}

fn b64_field(v: &Value, name: &str) -> std::result::Result<Vec<u8>, TransportError> {
    let s = field(v, name)?
        .as_str()
        .ok_or_else(|| TransportError::Decode(format!("{name:?} is not a string")))?;
    B64.decode(s)
        .map_err(|e| TransportError::Decode(format!("{name:?}: {e}")))
}

impl AugmentModels for HttpModels {
    fn caption(&self, image: &[u8]) -> std::result::Result<String, TransportError> {
        let (v, _) = self
            .endpoints
            .captioner
            .post_json_retrying(&json!({ "image": B64.encode(image) }))?;
        field(&v, "caption")?
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| TransportError::Decode("caption is not a string".into()))
    }

    fn depth(&self, image: &[u8]) -> std::result::Result<Vec<u8>, TransportError> {
        let (v, _) = self
            .endpoints
            .depth_estimator
            .post_json_retrying(&json!({ "image": B64.encode(image) }))?;
        b64_field(&v, "depth")
    }

    fn generate(
        &self,
        prompt: &str,
        depth: &[u8],
        index: usize,
    ) -> std::result::Result<Vec<u8>, TransportError> {
        let gen = &self.endpoints.image_generator;
        let body = json!({
            "prompt": prompt,
            "depth": B64.encode(depth),
            "index": index,
            "params": gen.params,
        });
        let (v, _) = gen.endpoint.post_json_retrying(&body)?;
        b64_field(&v, "image")
    }

    fn similarity(
        &self,
        reference: &[u8],
        candidate: &[u8],
    ) -> std::result::Result<f64, TransportError> {
        let s = &self.endpoints.similarity_scorer;
        let body =
            json!({ "reference": B64.encode(reference), "candidate": B64.encode(candidate) });
        let (v, _) = s.endpoint.post_json_retrying(&body)?;
        let score = field(&v, "score")?
            .as_f64()
            .ok_or_else(|| TransportError::Decode("score is not a number".into()))?;
        Ok(match s.convention {
            ScoreConvention::Similarity => score,
            ScoreConvention::Distance => -score,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub image_ref: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentJob {
    pub source_id: String,
    pub caption: String,
    pub prompt: String,
    pub depth_ref: String,
    pub candidates: Vec<Candidate>,
    /// Image refs of the kept candidates, best first.
    pub selected: Vec<String>,
}

/// Indices of the `k` largest scores, best first; ties keep index order.
/// NaN scores rank below every number.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::domain(format!(
            "k = {k} exceeds {} scores",
            scores.len()
        )));
    }
    let key = |i: usize| {
        if scores[i].is_nan() {
            f64::NEG_INFINITY
        } else {
            scores[i]
        }
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    order.truncate(k);
    Ok(order)
}

/// Image reference of candidate `index` for `source_id`, relative to the
/// output root.
pub fn candidate_ref(source_id: &str, index: usize) -> String {
    format!("aug/{source_id}/{index}.png")
}

fn write_bytes(root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// A finished job and the records it produced.
pub type JobOutput = (AugmentJob, Vec<SampleRecord>);

/// Run one augmentation job. Nothing is written unless every endpoint call
/// succeeds.
pub fn run_job(
    source: &SampleRecord,
    cfg: &AugmentConfig,
    models: &dyn AugmentModels,
) -> Result<JobOutput> {
    cfg.validate()?;
    let transport =
        |what: &str, e: TransportError| Error::Transport(format!("{}: {what}: {e}", source.id));

    let image_path = cfg.image_root.join(&source.canvas.image_ref);
    let original = fs::read(&image_path).map_err(|e| Error::io(&image_path, e))?;
    let caption = models
        .caption(&original)
        .map_err(|e| transport("captioner", e))?;
    let prompt = cfg.prompt_for(&caption);
    let depth = models
        .depth(&original)
        .map_err(|e| transport("depth estimator", e))?;

    let mut images = Vec::with_capacity(cfg.n_candidates);
    let mut scores = Vec::with_capacity(cfg.n_candidates);
    for i in 0..cfg.n_candidates {
        let img = models
            .generate(&prompt, &depth, i)
            .map_err(|e| transport("image generator", e))?;
        scores.push(
            models
                .similarity(&original, &img)
                .map_err(|e| transport("similarity scorer", e))?,
        );
        images.push(img);
    }
    let selected = select_top_k(&scores, cfg.k_selected)?;

    let depth_ref = format!("aug/{}/depth.png", source.id);
    write_bytes(&cfg.output_root, &depth_ref, &depth)?;
    for (i, img) in images.iter().enumerate() {
        write_bytes(&cfg.output_root, &candidate_ref(&source.id, i), img)?;
    }

    let records = selected
        .iter()
        .map(|&i| {
            let mut canvas = source.canvas.clone();
            canvas.image_ref = candidate_ref(&source.id, i);
            canvas.saliency_ref = None;
            SampleRecord {
                schema_version: source.schema_version,
                id: format!("{}-aug{i}", source.id),
                dataset: source.dataset,
                canvas,
                elements: source.elements.clone(),
                texts: source.texts.clone(),
                // Same split as the parent so augmented copies never cross splits.
                split: source.split,
                provenance: Provenance::Augmented,
                parent_id: Some(source.id.clone()),
            }
        })
        .collect();
    let job = AugmentJob {
        source_id: source.id.clone(),
        caption,
        prompt,
        depth_ref,
        candidates: scores
            .iter()
            .enumerate()
            .map(|(i, &score)| Candidate {
                image_ref: candidate_ref(&source.id, i),
                score,
            })
            .collect(),
        selected: selected
            .iter()
            .map(|&i| candidate_ref(&source.id, i))
            .collect(),
    };
    Ok((job, records))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentSummary {
    pub completed: usize,
    /// Sources whose records already exist in the output.
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

/// Run jobs for every original record not yet augmented in `out_path`,
/// appending new records there and job details to `<out_path>.jobs.jsonl`.
pub fn run_all(
    sources: &[SampleRecord],
    cfg: &AugmentConfig,
    models: &dyn AugmentModels,
    out_path: &Path,
) -> Result<AugmentSummary> {
    cfg.validate()?;
    let done: HashSet<String> = if out_path.exists() {
        read_jsonl::<SampleRecord>(out_path)?
            .into_iter()
            .filter_map(|r| r.parent_id)
            .collect()
    } else {
        HashSet::new()
    };
    let jobs_path = PathBuf::from(format!("{}.jobs.jsonl", out_path.display()));
    let todo: Vec<&SampleRecord> = sources
        .iter()
        .filter(|r| r.provenance == Provenance::Original)
        .collect();

    let mut summary = AugmentSummary::default();
    let pending: Vec<&SampleRecord> = todo
        .into_iter()
        .filter(|r| {
            let seen = done.contains(&r.id);
            summary.skipped += seen as usize;
            !seen
        })
        .collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<JobOutput>>>> =
        Mutex::new((0..pending.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..cfg.parallelism.min(pending.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(src) = pending.get(i) else { break };
                let r = run_job(src, cfg, models);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });

    // Sequential, input-ordered writes.
    for (src, r) in pending.iter().zip(results.into_inner().unwrap()) {
        match r.expect("every job finishes") {
            Ok((job, records)) => {
                append_jsonl(out_path, &records)?;
                append_jsonl(&jobs_path, [&job])?;
                summary.completed += 1;
            }
            Err(e) => {
                log::warn!("augmentation of {} failed: {e}", src.id);
                summary.failed.push((src.id.clone(), e.to_string()));
            }
        }
    }
    Ok(summary)
}
