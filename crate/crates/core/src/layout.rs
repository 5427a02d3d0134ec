//! Domain model for content-aware layouts.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Rect;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Logo,
    Text,
    Underlay,
    Embellishment,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Logo,
        Category::Text,
        Category::Underlay,
        Category::Embellishment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Logo => "Logo",
            Category::Text => "Text",
            Category::Underlay => "Underlay",
            Category::Embellishment => "Embellishment",
        }
    }

    /// Position in [`Category::ALL`], used for one-hot encodings.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown category {s:?}")))
    }
}

/// Dataset profile; restricts the admissible categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Logo, Text, Underlay.
    Pku,
    /// PKU categories plus Embellishment.
    Cgl,
}

impl Profile {
    pub fn allows(self, category: Category) -> bool {
        match self {
            Profile::Pku => category != Category::Embellishment,
            Profile::Cgl => true,
        }
    }

    pub fn categories(self) -> &'static [Category] {
        match self {
            Profile::Pku => &Category::ALL[..3],
            Profile::Cgl => &Category::ALL,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pku" => Ok(Profile::Pku),
            "cgl" => Ok(Profile::Cgl),
            other => Err(Error::domain(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    /// Inpainted poster image, relative to an asset root.
    #[serde(default)]
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_ref: Option<String>,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain(format!(
                "canvas must be non-empty, got {width}x{height}"
            )));
        }
        Ok(Canvas {
            width,
            height,
            image_ref: String::new(),
            saliency_ref: None,
        })
    }

    pub fn with_image(mut self, image_ref: impl Into<String>) -> Self {
        self.image_ref = image_ref.into();
        self
    }

    pub fn with_saliency(mut self, saliency_ref: impl Into<String>) -> Self {
        self.saliency_ref = Some(saliency_ref.into());
        self
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub category: Category,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Element {
    pub const fn new(category: Category, x: u32, y: u32, w: u32, h: u32) -> Self {
        Element {
            category,
            x,
            y,
            w,
            h,
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn area(&self) -> u64 {
        self.rect().area()
    }

    pub fn fits(&self, canvas: &Canvas) -> bool {
        self.rect().right() <= canvas.width as u64 && self.rect().bottom() <= canvas.height as u64
    }
}

/// An attribute position inside a `<rect>`; the unit of masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Category,
    X,
    Y,
    Width,
    Height,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::Category, Slot::X, Slot::Y, Slot::Width, Slot::Height];
    pub const GEOMETRY: [Slot; 4] = [Slot::X, Slot::Y, Slot::Width, Slot::Height];
}

/// An element whose attributes may individually be replaced by the mask token.
/// `None` marks a masked attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MaskedElement {
    pub category: Option<Category>,
    pub x: Option<u32>,
    pub y: Option<u32>,
    pub w: Option<u32>,
    pub h: Option<u32>,
}

impl MaskedElement {
    /// Every attribute masked.
    pub const PLACEHOLDER: MaskedElement = MaskedElement {
        category: None,
        x: None,
        y: None,
        w: None,
        h: None,
    };

    pub fn is_masked(&self, slot: Slot) -> bool {
        match slot {
            Slot::Category => self.category.is_none(),
            Slot::X => self.x.is_none(),
            Slot::Y => self.y.is_none(),
            Slot::Width => self.w.is_none(),
            Slot::Height => self.h.is_none(),
        }
    }

    pub fn is_placeholder(&self) -> bool {
        *self == Self::PLACEHOLDER
    }

    pub fn masked(mut self, slot: Slot) -> Self {
        match slot {
            Slot::Category => self.category = None,
            Slot::X => self.x = None,
            Slot::Y => self.y = None,
            Slot::Width => self.w = None,
            Slot::Height => self.h = None,
        }
        self
    }

    pub fn masked_all(self, slots: &[Slot]) -> Self {
        slots.iter().fold(self, |m, &s| m.masked(s))
    }

    /// Fill masked attributes from `target`. Fails when a concrete attribute
    /// disagrees with the target.
    pub fn unmask_with(&self, target: &Element) -> Result<Element> {
        fn pick<T: PartialEq + fmt::Debug>(slot: Slot, have: Option<T>, want: T) -> Result<T> {
            match have {
                Some(v) if v != want => Err(Error::domain(format!(
                    "{slot:?} is {v:?} in the input but {want:?} in the target"
                ))),
                _ => Ok(want),
            }
        }
        Ok(Element {
            category: pick(Slot::Category, self.category, target.category)?,
            x: pick(Slot::X, self.x, target.x)?,
            y: pick(Slot::Y, self.y, target.y)?,
            w: pick(Slot::Width, self.w, target.w)?,
            h: pick(Slot::Height, self.h, target.h)?,
        })
    }

    /// The concrete element, if nothing is masked.
    pub fn concrete(&self) -> Option<Element> {
        Some(Element {
            category: self.category?,
            x: self.x?,
            y: self.y?,
            w: self.w?,
            h: self.h?,
        })
    }
}

impl From<Element> for MaskedElement {
    fn from(e: Element) -> Self {
        MaskedElement {
            category: Some(e.category),
            x: Some(e.x),
            y: Some(e.y),
            w: Some(e.w),
            h: Some(e.h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub canvas: Canvas,
    pub elements: Vec<Element>,
    /// One string per Text element, aligned by order of appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
}

impl Layout {
    /// Build a layout, rejecting elements that overflow the canvas.
    pub fn new(canvas: Canvas, elements: Vec<Element>) -> Result<Self> {
        let layout = Layout {
            canvas,
            elements,
            texts: None,
        };
        layout.check()?;
        Ok(layout)
    }

    pub fn with_texts(mut self, texts: Vec<String>) -> Result<Self> {
        self.texts = Some(texts);
        self.check()?;
        Ok(self)
    }

    /// Verify canvas bounds and text alignment.
    pub fn check(&self) -> Result<()> {
        if self.canvas.width == 0 || self.canvas.height == 0 {
            return Err(Error::domain("canvas must be non-empty"));
        }
        if let Some(i) = self.elements.iter().position(|e| !e.fits(&self.canvas)) {
            return Err(Error::domain(format!(
                "element {i} {:?} overflows {}x{} canvas",
                self.elements[i], self.canvas.width, self.canvas.height
            )));
        }
        if let Some(texts) = &self.texts {
            let n_text = self.count(Category::Text);
            if texts.len() != n_text {
                return Err(Error::domain(format!(
                    "{} texts for {n_text} Text elements",
                    texts.len()
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self, category: Category) -> usize {
        self.elements
            .iter()
            .filter(|e| e.category == category)
            .count()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Elements passing [`is_valid`].
    pub fn valid_elements(&self) -> impl Iterator<Item = &Element> + '_ {
        self.elements.iter().filter(|e| is_valid(e, &self.canvas))
    }

    /// Reorder elements by `order` (a permutation of indices), carrying the
    /// text strings along with their Text elements.
    pub fn reordered(&self, order: &[usize]) -> Layout {
        let elements: Vec<Element> = order.iter().map(|&i| self.elements[i]).collect();
        let texts = self.texts.as_ref().map(|texts| {
            let mut text_of = vec![None; self.elements.len()];
            let mut it = texts.iter();
            for (i, e) in self.elements.iter().enumerate() {
                if e.category == Category::Text {
                    text_of[i] = it.next().cloned();
                }
            }
            order.iter().filter_map(|&i| text_of[i].clone()).collect()
        });
        Layout {
            canvas: self.canvas.clone(),
            elements,
            texts,
        }
    }
}

/// Map a normalized coordinate to integer pixels on an axis of `axis_extent`.
pub fn discretize(x_cont: f64, axis_extent: u32) -> Result<u32> {
    if !(0.0..=1.0).contains(&x_cont) {
        return Err(Error::domain(format!("coordinate {x_cont} outside [0, 1]")));
    }
    if axis_extent == 0 {
        return Err(Error::domain("axis extent must be positive"));
    }
    let px = (x_cont * axis_extent as f64).round();
    Ok(px.clamp(0.0, axis_extent as f64) as u32)
}

/// An element is valid when it covers strictly more than 0.1% of the canvas.
pub fn is_valid(e: &Element, canvas: &Canvas) -> bool {
    // area / canvas_area > 1 / 1000, kept in integers.
    e.area() as u128 * 1000 > canvas.area() as u128
}

/// A permutation of `0..n` drawn uniformly from the seed.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Reorder `input` and `target` by the same seeded permutation, preserving the
/// pairing `input[i] ↔ target[i]`.
pub fn permute_synchronized<A: Clone, B: Clone>(
    input: &[A],
    target: &[B],
    seed: u64,
) -> Result<(Vec<A>, Vec<B>)> {
    if input.len() != target.len() {
        return Err(Error::domain(format!(
            "input has {} elements, target has {}",
            input.len(),
            target.len()
        )));
    }
    let order = permutation(input.len(), seed);
    Ok((
        order.iter().map(|&i| input[i].clone()).collect(),
        order.iter().map(|&i| target[i].clone()).collect(),
    ))
}
