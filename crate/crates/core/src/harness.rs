//! Batch generation against a text-completion backend, and evaluation of the
//! resulting ledger.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::codec::{self, FailureKind, ParseOutcome};
use crate::dataset::SampleRecord;
use crate::http::{with_retries, Endpoint, TransportError};
use crate::layout::{Layout, Profile};
use crate::metrics::{self, Featurizer, GrayMap, MetricReport};
use crate::tasks::TaskSample;
use crate::{Error, Result};

pub const DEFAULT_TOP_P: f64 = 0.9;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub top_p: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Retries on transport errors. Parse failures are never retried.
    pub max_retries: u32,
    pub timeout: Duration,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            top_p: DEFAULT_TOP_P,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_retries: 2,
            timeout: Duration::from_secs(120),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Body of one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub top_p: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Canvas image reference for multimodal backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    /// Id of the sample being answered. Never sent over the wire; offline
    /// backends use it because prompts need not be unique.
    #[serde(skip)]
    pub sample_id: String,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError>;
}

impl<F> CompletionBackend for F
where
    F: Fn(&CompletionRequest) -> std::result::Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError> {
        self(request)
    }
}

/// Backend speaking `POST {model, prompt, top_p, temperature, max_tokens}`.
/// Accepts `{"text": ...}`, `{"completion": ...}` or
/// `{"choices": [{"text": ...}]}` in reply.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub endpoint: Endpoint,
}

impl HttpBackend {
    pub fn new(endpoint: Endpoint) -> Self {
        HttpBackend { endpoint }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError> {
        let body =
            serde_json::to_value(request).map_err(|e| TransportError::Decode(e.to_string()))?;
        let reply = self.endpoint.post_json(&body)?;
        completion_text(&reply)
            .ok_or_else(|| TransportError::Decode(format!("no completion text in {reply}")))
    }
}

fn completion_text(reply: &Value) -> Option<String> {
    reply
        .get("text")
        .or_else(|| reply.get("completion"))
        .or_else(|| reply.pointer("/choices/0/text"))
        .or_else(|| reply.pointer("/choices/0/message/content"))
        .and_then(Value::as_str)
        .map(str::to_owned)
}

/// Offline backend that answers each known sample with its task's target.
#[derive(Debug, Clone, Default)]
pub struct EchoBackend {
    answers: HashMap<String, String>,
}

impl EchoBackend {
    pub fn from_samples(samples: &[TaskSample]) -> Self {
        EchoBackend {
            answers: samples
                .iter()
                .map(|s| (s.id.clone(), s.target_html.clone()))
                .collect(),
        }
    }
}

impl CompletionBackend for EchoBackend {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError> {
        Ok(self
            .answers
            .get(&request.sample_id)
            .cloned()
            .unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub model: String,
    pub sampling: SamplingConfig,
    /// Maximum in-flight requests.
    pub parallelism: usize,
    pub profile: Profile,
    /// Record wall-clock latency per sample. Disable for byte-reproducible
    /// ledgers.
    pub record_latency: bool,
    /// Send the canvas image reference with each request.
    pub attach_image: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            model: "default".into(),
            sampling: SamplingConfig::default(),
            parallelism: 4,
            profile: Profile::Cgl,
            record_latency: true,
            attach_image: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Success,
    AbnormalFormat,
    Overflow,
    Transport,
}

impl EntryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryStatus::Success => "success",
            EntryStatus::AbnormalFormat => "abnormal_format",
            EntryStatus::Overflow => "overflow",
            EntryStatus::Transport => "transport",
        }
    }
}

/// Terminal record for one dispatched sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: String,
    pub source_id: String,
    pub status: EntryStatus,
    pub retries: u32,
    /// Completion exactly as returned; absent on transport failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub entries: Vec<LedgerEntry>,
}

impl RunLedger {
    pub fn failure_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in self
            .entries
            .iter()
            .filter(|e| e.status != EntryStatus::Success)
        {
            *out.entry(e.status.as_str().to_string()).or_default() += 1;
        }
        out
    }

    pub fn successes(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries
            .iter()
            .filter(|e| e.status == EntryStatus::Success)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::dataset::write_jsonl(path, &self.entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(RunLedger {
            entries: crate::dataset::read_jsonl(path)?,
        })
    }
}

fn run_one(
    sample: &TaskSample,
    backend: &dyn CompletionBackend,
    cfg: &HarnessConfig,
) -> LedgerEntry {
    let request = CompletionRequest {
        model: cfg.model.clone(),
        prompt: sample.prompt(),
        top_p: cfg.sampling.top_p,
        temperature: cfg.sampling.temperature,
        max_tokens: cfg.sampling.max_tokens,
        image: cfg.attach_image.then(|| sample.canvas.image_ref.clone()),
        sample_id: sample.id.clone(),
    };
    let started = Instant::now();
    let mut attempts = 0u32;
    let result = with_retries(cfg.sampling.max_retries, || {
        attempts += 1;
        backend.complete(&request)
    });
    let latency_ms = cfg
        .record_latency
        .then(|| started.elapsed().as_millis() as u64);
    let mut entry = LedgerEntry {
        id: sample.id.clone(),
        source_id: sample.source_id.clone(),
        status: EntryStatus::Transport,
        retries: attempts.saturating_sub(1),
        raw_output: None,
        layout: None,
        detail: None,
        latency_ms,
    };
    match result {
        Err(e) => entry.detail = Some(e.to_string()),
        Ok((raw, _)) => {
            match codec::parse_with_profile(&raw, &sample.canvas, cfg.profile) {
                ParseOutcome::Parsed(layout) => {
                    entry.status = EntryStatus::Success;
                    entry.layout = Some(layout);
                }
                ParseOutcome::Failed { kind, detail } => {
                    entry.status = match kind {
                        FailureKind::AbnormalFormat => EntryStatus::AbnormalFormat,
                        FailureKind::Overflow => EntryStatus::Overflow,
                    };
                    entry.detail = Some(detail);
                }
            }
            entry.raw_output = Some(raw);
        }
    }
    entry
}

/// Send every sample's prompt to `backend` with at most `cfg.parallelism`
/// requests in flight. The ledger lists entries in input order regardless
/// of completion order.
pub fn generate(
    samples: &[TaskSample],
    backend: &dyn CompletionBackend,
    cfg: &HarnessConfig,
) -> Result<RunLedger> {
    cfg.sampling.validate()?;
    if cfg.parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = samples.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(Error::domain(format!("duplicate sample id {:?}", dup.id)));
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, LedgerEntry)>();
    let mut slots: Vec<Option<LedgerEntry>> = vec![None; samples.len()];
    std::thread::scope(|scope| {
        for _ in 0..cfg.parallelism.min(samples.len().max(1)) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = samples.get(i) else { break };
                if tx.send((i, run_one(sample, backend, cfg))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, entry) in rx {
            slots[i] = Some(entry);
        }
    });
    Ok(RunLedger {
        entries: slots
            .into_iter()
            .map(|e| e.expect("every sample yields one entry"))
            .collect(),
    })
}

/// Evaluate the successful layouts of a sealed ledger.
///
/// Ledger entries are matched to ground truth through `source_id`. Content
/// measures are computed only when `assets` is given and every needed image
/// resolves under it; otherwise they are omitted with a warning.
pub fn evaluate(
    ledger: &RunLedger,
    ground_truth: &[SampleRecord],
    assets: Option<&Path>,
    featurizer: &dyn Featurizer,
) -> Result<MetricReport> {
    let gt: HashMap<&str, &SampleRecord> =
        ground_truth.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut generated = Vec::new();
    let mut reference = Vec::new();
    for entry in ledger.successes() {
        let record = gt.get(entry.source_id.as_str()).ok_or_else(|| {
            Error::domain(format!(
                "no ground truth for {:?} (entry {:?})",
                entry.source_id, entry.id
            ))
        })?;
        generated.push(
            entry
                .layout
                .clone()
                .expect("successful entries carry a layout"),
        );
        reference.push(record.layout()?);
    }
    if generated.is_empty() {
        return Err(Error::UndefinedMetric(
            "ledger has no successful generations".into(),
        ));
    }

    let mut warnings = Vec::new();
    let graphic = metrics::graphic_measures(&generated)?;
    let fd = if generated.len() < 2 {
        warnings.push("FD needs at least two layouts; omitted".to_string());
        None
    } else {
        Some(metrics::layout_frechet(&generated, &reference, featurizer)?)
    };

    let (rea, occ) = match assets {
        None => {
            warnings.push("no asset root given; rea and occ omitted".to_string());
            (None, None)
        }
        Some(root) => content_measures(&generated, root, &mut warnings)?,
    };
    for w in &warnings {
        log::warn!("{w}");
    }

    let failures = ledger.failure_counts();
    Ok(MetricReport {
        val: graphic.val,
        ove: graphic.ove,
        ali: graphic.ali,
        und_l: graphic.und_l,
        und_s: graphic.und_s,
        fd,
        rea,
        occ,
        n_samples: ledger.entries.len(),
        n_failures: failures.values().sum(),
        failures,
        warnings,
    })
}

fn content_measures(
    layouts: &[Layout],
    root: &Path,
    warnings: &mut Vec<String>,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut rea = Some(Vec::new());
    let mut occ = Some(Vec::new());
    for l in layouts {
        let size = Some((l.canvas.width, l.canvas.height));
        if let Some(values) = rea.as_mut() {
            let path = root.join(&l.canvas.image_ref);
            match (!l.canvas.image_ref.is_empty())
                .then(|| GrayMap::load(&path, size))
                .transpose()
            {
                Ok(Some(img)) => {
                    if let Some(v) = metrics::readability(&metrics::valid_only(l), &img)? {
                        values.push(v);
                    }
                }
                Ok(None) | Err(_) => {
                    warnings.push(format!(
                        "canvas image {} unavailable; rea omitted",
                        path.display()
                    ));
                    rea = None;
                }
            }
        }
        if let Some(values) = occ.as_mut() {
            match l.canvas.saliency_ref.as_deref().map(|s| root.join(s)) {
                Some(path) => match GrayMap::load(&path, size) {
                    Ok(map) => values.push(metrics::occlusion(l, &map)?),
                    Err(_) => {
                        warnings.push(format!(
                            "saliency map {} unavailable; occ omitted",
                            path.display()
                        ));
                        occ = None;
                    }
                },
                None => {
                    warnings.push(format!(
                        "no saliency map for {:?}; occ omitted",
                        l.canvas.image_ref
                    ));
                    occ = None;
                }
            }
        }
    }
    Ok((
        rea.and_then(metrics::stable_mean),
        occ.and_then(metrics::stable_mean),
    ))
}

/// Request body used by [`HttpBackend`], exposed for wire-level tests.
pub fn request_body(request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "prompt": request.prompt,
        "top_p": request.top_p,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(img) = &request.image {
        body["image"] = Value::String(img.clone());
    }
    body
}
