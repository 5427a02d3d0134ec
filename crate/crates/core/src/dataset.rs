//! Dataset ingestion, JSONL interchange and deterministic splits.

use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::layout::{Canvas, Category, Element, Layout, Profile};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Salt fed to the split hash before the id. Changing it reshuffles splits.
pub const SPLIT_SALT: &[u8] = b"posterkit-split-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Augmented,
}

/// One annotated poster in the interchange format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub schema_version: u32,
    pub id: String,
    pub dataset: Profile,
    pub canvas: Canvas,
    pub elements: Vec<Element>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
    pub split: Split,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl SampleRecord {
    pub fn original(
        id: impl Into<String>,
        dataset: Profile,
        canvas: Canvas,
        elements: Vec<Element>,
    ) -> Self {
        let id = id.into();
        SampleRecord {
            schema_version: SCHEMA_VERSION,
            split: assign_split(&id),
            id,
            dataset,
            canvas,
            elements,
            texts: None,
            provenance: Provenance::Original,
            parent_id: None,
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        let layout = Layout {
            canvas: self.canvas.clone(),
            elements: self.elements.clone(),
            texts: self.texts.clone(),
        };
        layout.check()?;
        Ok(layout)
    }
}

/// 64-bit FNV-1a over [`SPLIT_SALT`] followed by the id bytes, finished with
/// the MurmurHash3 `fmix64` avalanche step.
pub fn split_hash(id: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(SPLIT_SALT);
    h.write(id.as_bytes());
    let mut k = h.finish();
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Stable 8:1:1 train/val/test assignment from the id alone.
pub fn assign_split(id: &str) -> Split {
    let u = (split_hash(id) >> 11) as f64 / (1u64 << 53) as f64;
    if u < 0.8 {
        Split::Train
    } else if u < 0.9 {
        Split::Val
    } else {
        Split::Test
    }
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Append lines to a JSONL file, creating it if needed.
pub fn append_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a JSONL file, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| {
                Error::Annotation(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?,
        );
    }
    Ok(out)
}

/// Counters and records produced by one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: Vec<SampleRecord>,
    /// Posters dropped because an element category is unknown or excluded by
    /// the profile.
    pub dropped_category: usize,
    /// Posters skipped because the image file is missing or unreadable.
    pub skipped_missing_image: usize,
    /// Element coordinates clipped back onto the canvas.
    pub clamped_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    /// Saliency maps are looked up as `<images>/<saliency_subdir>/<stem>.png`.
    pub saliency_subdir: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            saliency_subdir: "saliency".into(),
        }
    }
}

/// Map a raw dataset label onto a category admitted by `profile`.
pub fn map_category(raw: &str, profile: Profile) -> Option<Category> {
    let c = match raw.trim().to_ascii_lowercase().as_str() {
        "logo" | "2" => Category::Logo,
        "text" | "1" => Category::Text,
        "underlay" | "3" => Category::Underlay,
        "embellishment" | "4" => Category::Embellishment,
        _ => return None,
    };
    profile.allows(c).then_some(c)
}

/// A poster as read by an adapter, before validation.
struct RawPoster {
    file_name: String,
    size: Option<(u32, u32)>,
    /// (label, left, top, width, height) in pixels.
    boxes: Vec<(String, f64, f64, f64, f64)>,
    texts: Option<Vec<String>>,
}

/// Ingest `annotation_file` with the adapter for `profile`:
///
/// - CGL: COCO-style JSON (`images`, `annotations` with `bbox = [x, y, w, h]`,
///   `categories` with names), optional per-image `texts`.
/// - PKU: CSV with `poster_path`, `cls_elem` (1 text, 2 logo, 3 underlay) and
///   `box_elem = "[x1, y1, x2, y2]"`, one row per element.
pub fn ingest(annotation_file: &Path, images_dir: &Path, profile: Profile) -> Result<IngestReport> {
    ingest_with(
        annotation_file,
        images_dir,
        profile,
        &IngestOptions::default(),
    )
}

pub fn ingest_with(
    annotation_file: &Path,
    images_dir: &Path,
    profile: Profile,
    options: &IngestOptions,
) -> Result<IngestReport> {
    let posters = match profile {
        Profile::Cgl => read_cgl(annotation_file)?,
        Profile::Pku => read_pku(annotation_file)?,
    };
    let mut report = IngestReport::default();
    for poster in posters {
        let image_path = images_dir.join(&poster.file_name);
        let (width, height) = match poster.size {
            Some(size) if image_path.is_file() => size,
            None if image_path.is_file() => match image::image_dimensions(&image_path) {
                Ok(size) => size,
                Err(e) => {
                    log::warn!("{}: {e}; skipping", image_path.display());
                    report.skipped_missing_image += 1;
                    continue;
                }
            },
            _ => {
                log::warn!("{}: image not found; skipping", image_path.display());
                report.skipped_missing_image += 1;
                continue;
            }
        };
        let mut canvas = Canvas::new(width, height)?.with_image(poster.file_name.clone());
        let stem = Path::new(&poster.file_name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let saliency_rel: PathBuf = [options.saliency_subdir.as_str(), &format!("{stem}.png")]
            .iter()
            .collect();
        if images_dir.join(&saliency_rel).is_file() {
            canvas = canvas.with_saliency(saliency_rel.to_string_lossy().replace('\\', "/"));
        }

        let mut elements = Vec::with_capacity(poster.boxes.len());
        let mut unmappable = false;
        for (label, x, y, w, h) in &poster.boxes {
            let Some(category) = map_category(label, profile) else {
                unmappable = true;
                break;
            };
            let (e, clamped) = snap_box(category, *x, *y, *w, *h, width, height);
            report.clamped_elements += clamped as usize;
            elements.push(e);
        }
        if unmappable {
            log::info!(
                "{}: unmappable category for {profile:?}; dropping",
                poster.file_name
            );
            report.dropped_category += 1;
            continue;
        }
        let id = poster
            .file_name
            .rsplit_once('.')
            .map_or(poster.file_name.as_str(), |(stem, _)| stem)
            .to_string();
        let mut record = SampleRecord::original(id, profile, canvas, elements);
        if let Some(texts) = poster.texts {
            let n_text = record
                .elements
                .iter()
                .filter(|e| e.category == Category::Text)
                .count();
            if texts.len() == n_text {
                record.texts = Some(texts);
            } else {
                log::warn!(
                    "{}: {} texts for {n_text} Text elements; texts ignored",
                    poster.file_name,
                    texts.len()
                );
            }
        }
        report.records.push(record);
    }
    Ok(report)
}

/// Round a box to pixels and clip it onto the canvas.
fn snap_box(
    category: Category,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    cw: u32,
    ch: u32,
) -> (Element, bool) {
    let x0 = x.round().clamp(0.0, cw as f64);
    let y0 = y.round().clamp(0.0, ch as f64);
    let x1 = (x + w).round().clamp(x0, cw as f64);
    let y1 = (y + h).round().clamp(y0, ch as f64);
    let clamped =
        x.round() != x0 || y.round() != y0 || (x + w).round() != x1 || (y + h).round() != y1;
    (
        Element::new(
            category,
            x0 as u32,
            y0 as u32,
            (x1 - x0) as u32,
            (y1 - y0) as u32,
        ),
        clamped,
    )
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: Option<u32>,
    height: Option<u32>,
    #[serde(default)]
    texts: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    bbox: [f64; 4],
    category_id: u64,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

fn read_cgl(path: &Path) -> Result<Vec<RawPoster>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let coco: CocoFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Annotation(format!("{}: {e}", path.display())))?;
    let names: HashMap<u64, &str> = coco
        .categories
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();
    let mut by_image: HashMap<u64, Vec<&CocoAnnotation>> = HashMap::new();
    for a in &coco.annotations {
        by_image.entry(a.image_id).or_default().push(a);
    }
    coco.images
        .iter()
        .map(|img| {
            let boxes = by_image
                .get(&img.id)
                .into_iter()
                .flatten()
                .map(|a| {
                    let label = names
                        .get(&a.category_id)
                        .map_or_else(|| "?".to_string(), |n| n.to_string());
                    let [x, y, w, h] = a.bbox;
                    (label, x, y, w, h)
                })
                .collect();
            Ok(RawPoster {
                file_name: img.file_name.clone(),
                size: img.width.zip(img.height),
                boxes,
                texts: img.texts.clone(),
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct PkuRow {
    poster_path: String,
    cls_elem: String,
    box_elem: String,
}

fn read_pku(path: &Path) -> Result<Vec<RawPoster>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Annotation(format!("{}: {e}", path.display())))?;
    let mut posters: Vec<RawPoster> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, row) in reader.deserialize::<PkuRow>().enumerate() {
        let row =
            row.map_err(|e| Error::Annotation(format!("{} row {}: {e}", path.display(), i + 1)))?;
        let coords: Vec<f64> = row
            .box_elem
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::Annotation(format!("{} row {}: box_elem: {e}", path.display(), i + 1))
            })?;
        let [x1, y1, x2, y2] = coords[..] else {
            return Err(Error::Annotation(format!(
                "{} row {}: box_elem needs 4 values",
                path.display(),
                i + 1
            )));
        };
        let slot = *index.entry(row.poster_path.clone()).or_insert_with(|| {
            posters.push(RawPoster {
                file_name: row.poster_path.clone(),
                size: None,
                boxes: Vec::new(),
                texts: None,
            });
            posters.len() - 1
        });
        posters[slot]
            .boxes
            .push((row.cls_elem, x1, y1, x2 - x1, y2 - y1));
    }
    Ok(posters)
}
