use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use posterkit::augment::{self, AugmentConfig, HttpModels};
use posterkit::dataset::{self, read_jsonl, write_jsonl, IngestOptions, SampleRecord, Split};
use posterkit::harness::{
    self, EchoBackend, HarnessConfig, HttpBackend, RunLedger, SamplingConfig,
};
use posterkit::http::Endpoint;
use posterkit::metrics::GeometricFeaturizer;
use posterkit::render::{self, Background, RenderStyle};
use posterkit::tasks::{self, TaskKind, TaskParams, TaskSample};
use posterkit::{Layout, Profile};

#[derive(Parser)]
#[command(
    name = "posterkit",
    version,
    about = "Poster layout tasks, generation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw annotations into JSONL sample records.
    Ingest(IngestArgs),
    /// Build task samples from sample records.
    Tasks(TasksArgs),
    /// Query a model for every task sample and write a run ledger.
    Generate(GenerateArgs),
    /// Score a run ledger against ground truth.
    Evaluate(EvaluateArgs),
    /// Draw layouts as SVG or PNG, optionally with text masks.
    Render(RenderArgs),
    /// Create depth-guided augmented copies of posters.
    Augment(AugmentArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    profile: Profile,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "saliency")]
    saliency_subdir: String,
}

#[derive(Args)]
struct TasksArgs {
    #[arg(long)]
    records: PathBuf,
    /// Comma-separated task names; all tasks when omitted.
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<TaskKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only records from this split.
    #[arg(long)]
    split: Option<String>,
    /// Fixed Recover mask ratio in (0, 0.8].
    #[arg(long)]
    recover_ratio: Option<f64>,
    #[arg(long)]
    recover_mask_category: bool,
    /// Emit one masked rect per element for Gen-I.
    #[arg(long)]
    count_hint: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// Completion endpoint. Required unless --echo is given.
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long, default_value = "")]
    route: String,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    credential_env: Option<String>,
    /// Answer every prompt with its own target (pipeline check).
    #[arg(long)]
    echo: bool,
    #[arg(long, default_value = "default")]
    model: String,
    #[arg(long, default_value_t = harness::DEFAULT_TOP_P)]
    top_p: f64,
    #[arg(long, default_value_t = harness::DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long, default_value_t = harness::DEFAULT_MAX_TOKENS)]
    max_tokens: u32,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 120.0)]
    timeout_secs: f64,
    #[arg(long, default_value = "cgl")]
    profile: Profile,
    /// Omit latencies so identical runs give identical ledgers.
    #[arg(long)]
    no_latency: bool,
    #[arg(long)]
    attach_image: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Root for canvas images and saliency maps.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    max_elems: usize,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Sample records or a run ledger (JSONL).
    #[arg(long)]
    layouts: PathBuf,
    /// Root for canvas images, drawn underneath when present.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Write PNG instead of SVG.
    #[arg(long)]
    png: bool,
    /// Also write `<id>.mask.png` covering Text elements.
    #[arg(long)]
    masks: bool,
    #[arg(long, default_value_t = 0)]
    dilate: u32,
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    cfg: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Tasks(a) => build_tasks(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Render(a) => render_all(a),
        Command::Augment(a) => run_augment(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let opts = IngestOptions {
        saliency_subdir: a.saliency_subdir,
    };
    let report = dataset::ingest_with(&a.annotations, &a.images, a.profile, &opts)?;
    write_jsonl(&a.out, &report.records)?;
    info!(
        "{} records; dropped {} posters with categories outside the profile; skipped {} posters without images; clamped {} boxes",
        report.records.len(),
        report.dropped_category,
        report.skipped_missing_image,
        report.clamped_elements
    );
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("unknown split {other:?}"),
    })
}

fn build_tasks(a: TasksArgs) -> Result<()> {
    let mut records: Vec<SampleRecord> = read_jsonl(&a.records)?;
    if let Some(s) = &a.split {
        let split = parse_split(s)?;
        records.retain(|r| r.split == split);
    }
    let kinds = if a.kinds.is_empty() {
        TaskKind::ALL.to_vec()
    } else {
        a.kinds
    };
    let params = TaskParams {
        recover_ratio: a.recover_ratio,
        recover_mask_category: a.recover_mask_category,
        element_count_hint: a.count_hint,
        ..TaskParams::default()
    };
    let (samples, skipped) = tasks::build_batch(&records, &kinds, a.seed, &params)?;
    for (id, why) in &skipped {
        warn!("skipped {id}: {why}");
    }
    write_jsonl(&a.out, &samples)?;
    info!("{} samples from {} records", samples.len(), records.len());
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let samples: Vec<TaskSample> = read_jsonl(&a.tasks)?;
    let cfg = HarnessConfig {
        model: a.model,
        sampling: SamplingConfig {
            top_p: a.top_p,
            temperature: a.temperature,
            max_tokens: a.max_tokens,
            max_retries: a.retries,
            timeout: Duration::from_secs_f64(a.timeout_secs),
        },
        parallelism: a.parallelism,
        profile: a.profile,
        record_latency: !a.no_latency,
        attach_image: a.attach_image,
    };
    let ledger = if a.echo {
        harness::generate(&samples, &EchoBackend::from_samples(&samples), &cfg)?
    } else {
        let Some(url) = a.backend_url else {
            bail!("--backend-url is required unless --echo is given");
        };
        let endpoint = Endpoint {
            url,
            route: a.route,
            credential_env: a.credential_env,
            timeout_secs: a.timeout_secs,
            // Retries are handled by the harness.
            max_retries: 0,
        };
        harness::generate(&samples, &HttpBackend::new(endpoint), &cfg)?
    };
    ledger.write(&a.out)?;
    let failures = ledger.failure_counts();
    info!(
        "{} samples, {} parsed, failures {:?}",
        ledger.entries.len(),
        ledger.successes().count(),
        failures
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ledger = RunLedger::read(&a.ledger)?;
    let gt: Vec<SampleRecord> = read_jsonl(&a.gt)?;
    let featurizer = GeometricFeaturizer {
        max_elems: a.max_elems,
    };
    let report = harness::evaluate(&ledger, &gt, a.assets.as_deref(), &featurizer)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

/// Load `(id, layout)` pairs from either sample records or a run ledger.
fn load_layouts(path: &Path) -> Result<Vec<(String, Layout)>> {
    if let Ok(records) = read_jsonl::<SampleRecord>(path) {
        return records
            .into_iter()
            .map(|r| Ok((r.id.clone(), r.layout()?)))
            .collect();
    }
    let ledger = RunLedger::read(path)
        .with_context(|| format!("{} is neither records nor a ledger", path.display()))?;
    Ok(ledger
        .entries
        .into_iter()
        .filter_map(|e| e.layout.map(|l| (e.id, l)))
        .collect())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn render_all(a: RenderArgs) -> Result<()> {
    let layouts = load_layouts(&a.layouts)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let style = RenderStyle {
        labels: a.labels,
        ..RenderStyle::default()
    };
    for (id, layout) in &layouts {
        let stem = file_stem(id);
        let image = a
            .assets
            .as_ref()
            .filter(|_| !layout.canvas.image_ref.is_empty())
            .map(|root| root.join(&layout.canvas.image_ref))
            .filter(|p| p.exists());
        if a.png {
            let bg = match &image {
                Some(p) => Some(render::load_background(
                    p,
                    layout.canvas.width,
                    layout.canvas.height,
                )?),
                None => None,
            };
            let img = render::render_png(layout, &style, bg.as_ref());
            render::save_png(&img, &a.out.join(format!("{stem}.png")))?;
        } else {
            let href = image.as_ref().map(|p| p.display().to_string());
            let svg = render::render_svg(layout, &style, href.as_deref().map(Background::Href));
            let path = a.out.join(format!("{stem}.svg"));
            fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        }
        if a.masks {
            render::build_text_mask(layout, a.dilate)
                .write_png(&a.out.join(format!("{stem}.mask.png")))?;
        }
    }
    info!(
        "rendered {} layouts into {}",
        layouts.len(),
        a.out.display()
    );
    Ok(())
}

fn run_augment(a: AugmentArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.cfg).with_context(|| format!("reading {}", a.cfg.display()))?;
    let cfg = AugmentConfig::from_toml(&text)?;
    let Some(endpoints) = cfg.endpoints.clone() else {
        bail!("{} defines no endpoints", a.cfg.display());
    };
    let sources: Vec<SampleRecord> = read_jsonl(&a.input)?;
    let summary = augment::run_all(&sources, &cfg, &HttpModels { endpoints }, &a.out)?;
    info!(
        "{} jobs completed, {} already done, {} failed",
        summary.completed,
        summary.skipped,
        summary.failed.len()
    );
    if !summary.failed.is_empty() {
        bail!("{} augmentation jobs failed", summary.failed.len());
    }
    Ok(())
}
