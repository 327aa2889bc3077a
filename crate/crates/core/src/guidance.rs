//! Object-wise guidance and the soft masks derived from it.
//!
//! A [`GuidanceSet`] pairs prompt tokens with boxes. For every attention grid
//! resolution it is rasterized into a [`SoftMask`]: an additive field over
//! `(cell, token)` plus a boolean suppression matrix standing in for the
//! `-inf` logits outside each guided token's region. Cells are indexed
//! row-major, `cell = row * width + col`, with cell centers at
//! `((col + 0.5) / width, (row + 0.5) / height)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, DEFAULT_REFERENCE_SIZE};

/// Mask softness used unless the caller picks another.
pub const DEFAULT_SOFTNESS: f64 = 2.0;

/// Peak of the Gaussian field, reached at the box center.
pub const GAUSSIAN_PEAK: f64 = 1.0 / (2.0 * PI);

/// One box tied to the prompt token whose concept should appear inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceEntry {
    pub bbox: BoundingBox,
    /// Index into [`GuidanceSet::prompt`].
    pub concept: usize,
}

/// A tokenized prompt together with its object-wise guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSet {
    prompt: Vec<String>,
    entries: Vec<GuidanceEntry>,
    reference_size: u32,
}

impl GuidanceSet {
    pub fn new(
        prompt: Vec<String>,
        entries: Vec<GuidanceEntry>,
        reference_size: u32,
    ) -> Result<Self> {
        if reference_size == 0 {
            return Err(Error::InvalidGuidance(
                "reference size must be positive".into(),
            ));
        }
        if let Some((i, e)) = entries
            .iter()
            .enumerate()
            .find(|(_, e)| e.concept >= prompt.len())
        {
            return Err(Error::InvalidGuidance(format!(
                "entry {i} refers to token {} but the prompt has {} tokens",
                e.concept,
                prompt.len()
            )));
        }
        Ok(Self {
            prompt,
            entries,
            reference_size,
        })
    }

    /// Builds a set from `(concept name, box)` pairs, placing each distinct
    /// concept in the prompt once, in order of first appearance.
    pub fn from_named<S: AsRef<str>>(objects: &[(S, BoundingBox)]) -> Self {
        let mut prompt: Vec<String> = Vec::new();
        let entries = objects
            .iter()
            .map(|(name, bbox)| {
                let name = name.as_ref();
                let concept = match prompt.iter().position(|t| t.eq_ignore_ascii_case(name)) {
                    Some(i) => i,
                    None => {
                        prompt.push(name.to_string());
                        prompt.len() - 1
                    }
                };
                GuidanceEntry {
                    bbox: *bbox,
                    concept,
                }
            })
            .collect();
        Self {
            prompt,
            entries,
            reference_size: DEFAULT_REFERENCE_SIZE,
        }
    }

    /// A prompt with no guidance at all.
    pub fn unguided(prompt: Vec<String>) -> Self {
        Self {
            prompt,
            entries: Vec::new(),
            reference_size: DEFAULT_REFERENCE_SIZE,
        }
    }

    pub fn prompt(&self) -> &[String] {
        &self.prompt
    }

    pub fn entries(&self) -> &[GuidanceEntry] {
        &self.entries
    }

    pub fn reference_size(&self) -> u32 {
        self.reference_size
    }

    pub fn with_reference_size(mut self, reference_size: u32) -> Result<Self> {
        if reference_size == 0 {
            return Err(Error::InvalidGuidance(
                "reference size must be positive".into(),
            ));
        }
        self.reference_size = reference_size;
        Ok(self)
    }

    pub fn token_count(&self) -> usize {
        self.prompt.len()
    }

    /// Name of the token an entry refers to.
    pub fn concept_name(&self, entry: &GuidanceEntry) -> &str {
        &self.prompt[entry.concept]
    }

    /// Returns a copy with `token` at position 0, shifting entry indices.
    /// If the prompt already contains `token` the set is returned unchanged.
    pub fn with_leading_token(&self, token: &str) -> Self {
        if self.prompt.iter().any(|t| t == token) {
            return self.clone();
        }
        let mut prompt = Vec::with_capacity(self.prompt.len() + 1);
        prompt.push(token.to_string());
        prompt.extend(self.prompt.iter().cloned());
        let entries = self
            .entries
            .iter()
            .map(|e| GuidanceEntry {
                bbox: e.bbox,
                concept: e.concept + 1,
            })
            .collect();
        Self {
            prompt,
            entries,
            reference_size: self.reference_size,
        }
    }

    /// Boxes grouped by the token they guide.
    fn boxes_by_token(&self) -> BTreeMap<usize, Vec<(usize, BoundingBox)>> {
        let mut map: BTreeMap<usize, Vec<(usize, BoundingBox)>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            map.entry(e.concept).or_default().push((i, e.bbox));
        }
        map
    }
}

/// Spatial resolution of an attention map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("grid {width}x{height} has no cells")));
        }
        Ok(Self { width, height })
    }

    pub const fn square(side: usize) -> Self {
        Self {
            width: side,
            height: side,
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Normalized center of a cell.
    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let (row, col) = (cell / self.width, cell % self.width);
        (
            (col as f64 + 0.5) / self.width as f64,
            (row as f64 + 0.5) / self.height as f64,
        )
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Which mask, if any, a generation run adds to its attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Plain cross-attention.
    None,
    /// Constant value inside each box, no suppression.
    Flat,
    /// Gaussian field inside each box, suppression outside.
    Gaussian,
}

impl MaskMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskMode::None => "none",
            MaskMode::Flat => "flat",
            MaskMode::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for MaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(MaskMode::None),
            "flat" => Ok(MaskMode::Flat),
            "gaussian" | "gaussian+suppression" => Ok(MaskMode::Gaussian),
            other => Err(Error::Config(format!(
                "unknown mask mode `{other}` (expected none, flat or gaussian)"
            ))),
        }
    }
}

/// Additive logit field plus suppression flags, both `cells × tokens`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    grid: Grid,
    additive: DMatrix<f64>,
    suppress: DMatrix<bool>,
}

impl SoftMask {
    /// A mask that changes nothing.
    pub fn empty(grid: Grid, tokens: usize) -> Self {
        Self {
            grid,
            additive: DMatrix::zeros(grid.cells(), tokens),
            suppress: DMatrix::from_element(grid.cells(), tokens, false),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn tokens(&self) -> usize {
        self.additive.ncols()
    }

    pub fn additive(&self) -> &DMatrix<f64> {
        &self.additive
    }

    pub fn suppress(&self) -> &DMatrix<bool> {
        &self.suppress
    }

    pub fn has_suppression(&self) -> bool {
        self.suppress.iter().any(|&s| s)
    }

    pub fn is_empty(&self) -> bool {
        !self.has_suppression() && self.additive.iter().all(|&v| v == 0.0)
    }

    #[cfg(test)]
    pub(crate) fn parts_mut(&mut self) -> (&mut DMatrix<f64>, &mut DMatrix<bool>) {
        (&mut self.additive, &mut self.suppress)
    }
}

/// A box that covers no cell center at some resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmptyRegion {
    pub entry: usize,
    pub grid: Grid,
}

impl fmt::Display for EmptyRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "guidance entry {} covers no cell at {}; its token is suppressed everywhere outside its other boxes",
            self.entry, self.grid
        )
    }
}

/// Cells whose centers fall inside `b` (half-open on the max edges).
pub fn rasterize_box(b: &BoundingBox, grid: Grid) -> Vec<usize> {
    // a column is inside iff x_min <= (i + 0.5) / w < x_max, solved for i
    let span = |lo: f64, hi: f64, n: usize| {
        let nf = n as f64;
        let first = (lo * nf - 0.5).ceil().max(0.0) as usize;
        let mut range: Vec<usize> = (first..n)
            .take_while(|&i| (i as f64 + 0.5) / nf < hi)
            .collect();
        range.retain(|&i| (i as f64 + 0.5) / nf >= lo);
        range
    };
    let cols = span(b.x_min(), b.x_max(), grid.width);
    let rows = span(b.y_min(), b.y_max(), grid.height);
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| r * grid.width + c))
        .collect()
}

/// Gaussian field of a box, sampled at cell centers; zero outside the box.
pub fn gaussian_field(b: &BoundingBox, grid: Grid, softness: f64) -> Vec<f64> {
    let mut field = vec![0.0; grid.cells()];
    for cell in rasterize_box(b, grid) {
        let (x, y) = grid.cell_center(cell);
        field[cell] = gaussian_at(b, x, y, softness);
    }
    field
}

/// The Gaussian mask value at a normalized point, regardless of membership.
pub fn gaussian_at(b: &BoundingBox, x: f64, y: f64, softness: f64) -> f64 {
    let dx = softness * (2.0 * x - (b.x_max() + b.x_min())) / (b.x_max() - b.x_min());
    let dy = softness * (2.0 * y - (b.y_max() + b.y_min())) / (b.y_max() - b.y_min());
    GAUSSIAN_PEAK * (-0.5 * (dx * dx + dy * dy)).exp()
}

/// Gaussian soft mask with out-of-region suppression.
///
/// Boxes sharing a token combine by pointwise max; the token is suppressed
/// outside the union of its boxes. Tokens without boxes are left untouched.
pub fn build_soft_mask(
    g: &GuidanceSet,
    grid: Grid,
    softness: f64,
) -> Result<(SoftMask, Vec<EmptyRegion>)> {
    if !(softness > 0.0 && softness.is_finite()) {
        return Err(Error::Config(format!(
            "softness must be positive, got {softness}"
        )));
    }
    let mut mask = SoftMask::empty(grid, g.token_count());
    let mut warnings = Vec::new();
    for (token, boxes) in g.boxes_by_token() {
        let mut inside = vec![false; grid.cells()];
        for (entry, b) in boxes {
            let cells = rasterize_box(&b, grid);
            if cells.is_empty() {
                warnings.push(EmptyRegion { entry, grid });
            }
            for cell in cells {
                inside[cell] = true;
                let (x, y) = grid.cell_center(cell);
                let v = gaussian_at(&b, x, y, softness);
                let slot = &mut mask.additive[(cell, token)];
                *slot = slot.max(v);
            }
        }
        for (cell, inside) in inside.into_iter().enumerate() {
            mask.suppress[(cell, token)] = !inside;
        }
    }
    Ok((mask, warnings))
}

/// Constant-valued mask inside each box with no suppression, the
/// paint-with-words style baseline. Overlapping boxes do not stack.
pub fn build_flat_mask(g: &GuidanceSet, grid: Grid, value: f64) -> Result<SoftMask> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Config(format!(
            "flat mask value must be positive, got {value}"
        )));
    }
    let mut mask = SoftMask::empty(grid, g.token_count());
    for e in g.entries() {
        for cell in rasterize_box(&e.bbox, grid) {
            mask.additive[(cell, e.concept)] = value;
        }
    }
    Ok(mask)
}

/// Dispatches on `mode`; `flat_value` is only read in flat mode.
pub fn build_mask(
    mode: MaskMode,
    g: &GuidanceSet,
    grid: Grid,
    softness: f64,
    flat_value: f64,
) -> Result<(SoftMask, Vec<EmptyRegion>)> {
    match mode {
        MaskMode::None => Ok((SoftMask::empty(grid, g.token_count()), Vec::new())),
        MaskMode::Flat => Ok((build_flat_mask(g, grid, flat_value)?, Vec::new())),
        MaskMode::Gaussian => build_soft_mask(g, grid, softness),
    }
}
