//! HTML layout template: serialization, lenient parsing, prompt assembly.
//!
//! The wire format is fixed byte-for-byte:
//!
//! ```text
//! <html>
//! <body>  
//! <svg width = "513", height = "750">
//! <rect data-category="Text", x="172", y="80", width="179", height="29"/>
//! </svg>
//! </body>
//! </html>
//! ```
//!
//! Note the trailing spaces after `<html>`, `<body>` and `</svg>`; lines are
//! joined with `\n` and there is no trailing newline.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::layout::{Canvas, Category, Layout, MaskedElement, Profile, Slot};
use crate::{Error, Result};

pub const MASK_TOKEN: &str = "<M>";
pub const HTML_MARKER: &str = "###bbox html:";
pub const TEXT_PREFIX: &str = "Text :  ";
pub const TEXT_SEPARATOR: &str = " & ";

const HTML_OPEN: &str = "<html> ";
const BODY_OPEN: &str = "<body>  ";
const SVG_CLOSE: &str = "</svg> ";
const BODY_CLOSE: &str = "</body>";
const HTML_CLOSE: &str = "</html>";

/// Serialize a layout. `masks`, when given, lists the masked slots for each
/// element in order.
pub fn serialize(layout: &Layout, masks: Option<&[Vec<Slot>]>) -> Result<String> {
    layout.check()?;
    let elements: Vec<MaskedElement> = match masks {
        None => layout
            .elements
            .iter()
            .copied()
            .map(MaskedElement::from)
            .collect(),
        Some(masks) => {
            if masks.len() != layout.elements.len() {
                return Err(Error::domain(format!(
                    "{} mask entries for {} elements",
                    masks.len(),
                    layout.elements.len()
                )));
            }
            layout
                .elements
                .iter()
                .zip(masks)
                .map(|(&e, slots)| MaskedElement::from(e).masked_all(slots))
                .collect()
        }
    };
    Ok(serialize_elements(&layout.canvas, &elements))
}

/// Serialize possibly-masked elements without any layout-level checks.
pub fn serialize_elements(canvas: &Canvas, elements: &[MaskedElement]) -> String {
    let mut out = String::with_capacity(96 + 80 * elements.len());
    out.push_str(HTML_OPEN);
    out.push('\n');
    out.push_str(BODY_OPEN);
    out.push('\n');
    let _ = writeln!(
        out,
        "<svg width = \"{}\", height = \"{}\">",
        canvas.width, canvas.height
    );
    for e in elements {
        out.push_str(&rect_line(e));
        out.push('\n');
    }
    out.push_str(SVG_CLOSE);
    out.push('\n');
    out.push_str(BODY_CLOSE);
    out.push('\n');
    out.push_str(HTML_CLOSE);
    out
}

fn rect_line(e: &MaskedElement) -> String {
    fn val<T: ToString>(v: Option<T>) -> String {
        v.map_or_else(|| MASK_TOKEN.to_string(), |v| v.to_string())
    }
    format!(
        "<rect data-category=\"{}\", x=\"{}\", y=\"{}\", width=\"{}\", height=\"{}\"/>",
        e.category.map_or(MASK_TOKEN, Category::as_str),
        val(e.x),
        val(e.y),
        val(e.w),
        val(e.h),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    AbnormalFormat,
    Overflow,
}

/// Result of parsing one model completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    Parsed(Layout),
    Failed { kind: FailureKind, detail: String },
}

impl ParseOutcome {
    pub fn failure_kind(&self) -> Option<FailureKind> {
        match self {
            ParseOutcome::Parsed(_) => None,
            ParseOutcome::Failed { kind, .. } => Some(*kind),
        }
    }

    pub fn layout(&self) -> Option<&Layout> {
        match self {
            ParseOutcome::Parsed(l) => Some(l),
            ParseOutcome::Failed { .. } => None,
        }
    }

    pub fn into_layout(self) -> Option<Layout> {
        match self {
            ParseOutcome::Parsed(l) => Some(l),
            ParseOutcome::Failed { .. } => None,
        }
    }

    fn abnormal(detail: impl Into<String>) -> Self {
        ParseOutcome::Failed {
            kind: FailureKind::AbnormalFormat,
            detail: detail.into(),
        }
    }
}

/// Parse a completion against `canvas`, accepting every category.
pub fn parse(text: &str, canvas: &Canvas) -> ParseOutcome {
    parse_with_profile(text, canvas, Profile::Cgl)
}

/// Parse a completion, accepting only categories admitted by `profile`.
///
/// Text outside the `<svg>…</svg>` span is ignored. Any syntactic problem in
/// any rect makes the whole completion [`FailureKind::AbnormalFormat`]; only
/// a syntactically clean completion can be classified as
/// [`FailureKind::Overflow`].
pub fn parse_with_profile(text: &str, canvas: &Canvas, profile: Profile) -> ParseOutcome {
    let body = match svg_body(text) {
        Some(b) => b,
        None => return ParseOutcome::abnormal("no <svg>...</svg> envelope"),
    };
    let rects = match scan_rects(body) {
        Ok(r) => r,
        Err(detail) => return ParseOutcome::abnormal(detail),
    };
    let mut elements = Vec::with_capacity(rects.len());
    for (i, r) in rects.iter().enumerate() {
        let Some(e) = r.concrete() else {
            return ParseOutcome::abnormal(format!("rect {i} contains a mask token"));
        };
        if !profile.allows(e.category) {
            return ParseOutcome::abnormal(format!(
                "rect {i}: category {} not in profile",
                e.category
            ));
        }
        elements.push(e);
    }
    if let Some(i) = elements.iter().position(|e| !e.fits(canvas)) {
        return ParseOutcome::Failed {
            kind: FailureKind::Overflow,
            detail: format!(
                "rect {i} {:?} exceeds {}x{} canvas",
                elements[i], canvas.width, canvas.height
            ),
        };
    }
    ParseOutcome::Parsed(Layout {
        canvas: canvas.clone(),
        elements,
        texts: None,
    })
}

/// Declared SVG size, if any, and the rects of a possibly masked body.
pub type MaskedBody = (Option<(u32, u32)>, Vec<MaskedElement>);

/// Extract rects from a serialized (possibly masked) template. Returns the
/// svg size when it is declared.
pub fn parse_masked(text: &str) -> Result<MaskedBody> {
    let body = svg_body(text).ok_or_else(|| Error::domain("no <svg>...</svg> envelope"))?;
    let rects = scan_rects(body).map_err(Error::Domain)?;
    Ok((svg_size(text), rects))
}

/// The `width`/`height` declared on the first `<svg` tag.
pub fn svg_size(text: &str) -> Option<(u32, u32)> {
    let start = find_tag(text, "<svg", 0)?;
    let end = tag_end(text, start)?;
    let attrs = attributes(&text[start + 4..end]);
    let get = |name: &str| {
        attrs
            .iter()
            .find(|(k, _)| *k == name)
            .and_then(|(_, v)| parse_uint(v))
    };
    Some((get("width")?, get("height")?))
}

/// Text between the first `<svg ...>` open tag and the next `</svg>`.
fn svg_body(text: &str) -> Option<&str> {
    let start = find_tag(text, "<svg", 0)?;
    let open_end = tag_end(text, start)?;
    let close = text[open_end..].find("</svg>")? + open_end;
    Some(&text[open_end + 1..close])
}

/// Find `<name` followed by whitespace, `/` or `>`.
fn find_tag(text: &str, open: &str, from: usize) -> Option<usize> {
    let mut pos = from;
    while let Some(off) = text[pos..].find(open) {
        let at = pos + off;
        match text[at + open.len()..].chars().next() {
            Some(c) if c.is_whitespace() || c == '/' || c == '>' => return Some(at),
            _ => pos = at + open.len(),
        }
    }
    None
}

/// Index of the `>` closing the tag starting at `start`, skipping quoted values.
fn tag_end(text: &str, start: usize) -> Option<usize> {
    let mut quoted = false;
    for (i, b) in text.bytes().enumerate().skip(start + 1) {
        match b {
            b'"' => quoted = !quoted,
            b'>' if !quoted => return Some(i),
            _ => {}
        }
    }
    None
}

fn attributes(tag: &str) -> Vec<(&str, &str)> {
    static ATTR: OnceLock<Regex> = OnceLock::new();
    let re =
        ATTR.get_or_init(|| Regex::new(r#"([A-Za-z_:][-A-Za-z0-9_:.]*)\s*=\s*"([^"]*)""#).unwrap());
    re.captures_iter(tag)
        .map(|c| (c.get(1).unwrap().as_str(), c.get(2).unwrap().as_str()))
        .collect()
}

fn parse_uint(v: &str) -> Option<u32> {
    let v = v.trim();
    if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    v.parse().ok()
}

fn scan_rects(body: &str) -> std::result::Result<Vec<MaskedElement>, String> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(start) = find_tag(body, "<rect", pos) {
        let i = out.len();
        let end = tag_end(body, start).ok_or_else(|| format!("rect {i} is not closed"))?;
        out.push(scan_rect(&body[start + 5..end]).map_err(|e| format!("rect {i}: {e}"))?);
        pos = end + 1;
    }
    Ok(out)
}

fn scan_rect(tag: &str) -> std::result::Result<MaskedElement, String> {
    let mut category = None;
    let mut coords: [Option<Option<u32>>; 4] = [None; 4];
    for (name, value) in attributes(tag) {
        let slot = match name {
            "data-category" => {
                if category.is_some() {
                    return Err("duplicate data-category".into());
                }
                category = Some(if value == MASK_TOKEN {
                    None
                } else {
                    Some(
                        value
                            .trim()
                            .parse::<Category>()
                            .map_err(|e| e.to_string())?,
                    )
                });
                continue;
            }
            "x" => 0,
            "y" => 1,
            "width" => 2,
            "height" => 3,
            _ => continue,
        };
        if coords[slot].is_some() {
            return Err(format!("duplicate {name}"));
        }
        coords[slot] = Some(if value == MASK_TOKEN {
            None
        } else {
            Some(
                parse_uint(value)
                    .ok_or_else(|| format!("{name}={value:?} is not a non-negative integer"))?,
            )
        });
    }
    let category = category.ok_or("missing data-category")?;
    let names = ["x", "y", "width", "height"];
    let mut vals = [None; 4];
    for (k, c) in coords.into_iter().enumerate() {
        vals[k] = c.ok_or_else(|| format!("missing {}", names[k]))?;
    }
    Ok(MaskedElement {
        category,
        x: vals[0],
        y: vals[1],
        w: vals[2],
        h: vals[3],
    })
}

/// The pieces of a model prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptParts {
    pub task_definition: String,
    /// Strings the Text elements must carry, rendered as `Text :  a & b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_constraint: Option<Vec<String>>,
    pub html_body: String,
    /// Opaque line placed before the task definition for multimodal backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_placeholder: Option<String>,
}

/// Concatenate prompt parts: optional image slot, task definition, optional
/// text constraint, the `###bbox html:` marker and the HTML body.
pub fn assemble_prompt(parts: &PromptParts) -> String {
    let mut out = String::new();
    if let Some(img) = &parts.image_placeholder {
        out.push_str(img);
        out.push('\n');
    }
    out.push_str(&parts.task_definition);
    out.push('\n');
    if let Some(texts) = parts.text_constraint.as_ref().filter(|t| !t.is_empty()) {
        out.push_str(TEXT_PREFIX);
        out.push_str(&texts.join(TEXT_SEPARATOR));
        out.push('\n');
    }
    out.push_str(HTML_MARKER);
    out.push('\n');
    out.push_str(&parts.html_body);
    out
}
