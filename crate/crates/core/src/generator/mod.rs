//! A small deterministic stand-in for a text-to-image denoising loop.
//!
//! The latent is a `cells × channels` grid. At every step and every
//! configured resolution the latent is pooled to that resolution, projected to
//! queries, attended against the prompt's keys (optionally through a guidance
//! mask), and pulled towards the attended values. A light spatial smoothing
//! and a decaying noise term follow each step. Each cell is finally painted
//! with the color of the concept its latent projects onto most strongly.
//!
//! It is not a diffusion model. It is the minimal loop in which cross-attention
//! decides where each concept ends up, so the effect of a mask on layout can
//! be measured.

mod detect;
mod image;
mod vocab;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use self::detect::{oracle_detect, MIN_COMPONENT_CELLS};
pub use self::image::RenderedImage;
pub use self::vocab::{Concept, ConceptVocabulary, Rgb, BACKGROUND, SHARED_KEY_OFFSET};

use crate::attention::{
    attention, guided_attention, AttentionInputs, AttentionMap, WeightSchedule,
};
use crate::error::{Error, Result};
use crate::guidance::{
    build_mask, rasterize_box, EmptyRegion, Grid, GuidanceSet, MaskMode, DEFAULT_SOFTNESS,
    GAUSSIAN_PEAK,
};

/// Free parameters of the toy dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    /// Fraction of the latent replaced by the attended values per update.
    pub step_size: f64,
    /// Noise standard deviation at the first step; decays linearly to 0.
    pub noise_amplitude: f64,
    /// Blend factor of the 3x3 smoothing applied after every step.
    pub smoothing: f64,
    /// Scale of the latent-to-query projection.
    pub query_gain: f64,
    /// Seeded perturbation of the projection.
    pub query_jitter: f64,
    /// Height of the initial bump each prompted object gets.
    pub prior_amplitude: f64,
    /// Width (standard deviation, normalized units) of that bump.
    pub prior_width: f64,
    /// Standard deviation of the bump center around the image center.
    pub prior_jitter: f64,
    /// Initial background level.
    pub background_level: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            noise_amplitude: 0.35,
            smoothing: 0.5,
            query_gain: 6.0,
            query_jitter: 0.05,
            prior_amplitude: 1.5,
            prior_width: 0.3,
            prior_jitter: 0.15,
            background_level: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub steps: usize,
    /// Attention grids, applied in order at every step. The largest one is the
    /// latent grid and every other grid must divide it evenly.
    pub resolutions: Vec<Grid>,
    pub w_prime: f64,
    pub softness: f64,
    pub mask_mode: MaskMode,
    /// In-box value of the flat mask.
    pub flat_value: f64,
    pub seed: u64,
    pub dynamics: Dynamics,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            resolutions: vec![Grid::square(8), Grid::square(16)],
            w_prime: 0.2,
            softness: DEFAULT_SOFTNESS,
            mask_mode: MaskMode::Gaussian,
            flat_value: GAUSSIAN_PEAK,
            seed: 0,
            dynamics: Dynamics::default(),
        }
    }
}

impl GenerationConfig {
    pub fn with_mode(mut self, mode: MaskMode) -> Self {
        self.mask_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_weight(mut self, w_prime: f64) -> Self {
        self.w_prime = w_prime;
        self
    }

    /// The grid the latent lives on.
    pub fn latent_grid(&self) -> Result<Grid> {
        let latent = *self
            .resolutions
            .iter()
            .max_by_key(|g| g.cells())
            .ok_or_else(|| Error::Config("at least one resolution is required".into()))?;
        for g in &self.resolutions {
            if g.width == 0
                || g.height == 0
                || latent.width % g.width != 0
                || latent.height % g.height != 0
            {
                return Err(Error::Config(format!(
                    "resolution {g} does not divide the latent grid {latent}"
                )));
            }
        }
        Ok(latent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("at least one step is required".into()));
        }
        self.latent_grid()?;
        WeightSchedule::new(self.w_prime, self.steps)?;
        if !(self.softness > 0.0 && self.softness.is_finite()) {
            return Err(Error::Config(format!(
                "softness must be positive, got {}",
                self.softness
            )));
        }
        if !(self.flat_value > 0.0 && self.flat_value.is_finite()) {
            return Err(Error::Config(format!(
                "flat mask value must be positive, got {}",
                self.flat_value
            )));
        }
        Ok(())
    }
}

/// Latent state after the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub grid: Grid,
    pub state: DMatrix<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub image: RenderedImage,
    pub latent: LatentGrid,
    /// The guidance actually used, with the background token in front.
    pub guidance: GuidanceSet,
    /// Vocabulary index of every token in `guidance.prompt()`.
    pub tokens: Vec<usize>,
    pub warnings: Vec<EmptyRegion>,
}

/// One attention map produced during generation.
#[derive(Debug)]
pub struct AttentionStep<'a> {
    pub step: usize,
    pub grid: Grid,
    pub map: &'a AttentionMap,
}

pub fn generate(
    g: &GuidanceSet,
    vocab: &ConceptVocabulary,
    cfg: &GenerationConfig,
) -> Result<Generation> {
    generate_traced(g, vocab, cfg, |_| {})
}

/// Like [`generate`], handing every attention map to `observe` as it is made.
pub fn generate_traced(
    g: &GuidanceSet,
    vocab: &ConceptVocabulary,
    cfg: &GenerationConfig,
    mut observe: impl FnMut(&AttentionStep<'_>),
) -> Result<Generation> {
    cfg.validate()?;
    let (g, tokens) = resolve_tokens(g, vocab)?;
    let dim = vocab.value_dim();
    if vocab.key_dim() != dim || dim < vocab.len() {
        return Err(Error::InvalidVocabulary(
            "the generator needs equal key and value dimensions with one channel per concept"
                .into(),
        ));
    }
    let latent_grid = cfg.latent_grid()?;
    let dynamics = &cfg.dynamics;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let keys = DMatrix::from_fn(tokens.len(), dim, |t, j| vocab.concept(tokens[t]).key[j]);
    let values = DMatrix::from_fn(tokens.len(), dim, |t, j| vocab.concept(tokens[t]).value[j]);
    let projection = DMatrix::from_fn(dim, dim, |i, j| {
        let base = if i == j { dynamics.query_gain } else { 0.0 };
        base + dynamics.query_jitter * normal(&mut rng)
    });

    let mut masks = Vec::with_capacity(cfg.resolutions.len());
    let mut warnings = Vec::new();
    for &grid in &cfg.resolutions {
        let (mask, w) = build_mask(cfg.mask_mode, &g, grid, cfg.softness, cfg.flat_value)?;
        masks.push(mask);
        warnings.extend(w);
    }
    let schedule = WeightSchedule::new(cfg.w_prime, cfg.steps)?;

    let mut latent = initial_latent(latent_grid, &tokens, vocab, dynamics, &mut rng);
    for step in (1..=cfg.steps).rev() {
        for (grid, mask) in cfg.resolutions.iter().zip(&masks) {
            let queries = pool(&latent, latent_grid, *grid) * &projection;
            let inputs = AttentionInputs::new(queries, keys.clone())?;
            let map = match cfg.mask_mode {
                MaskMode::None => attention(&inputs)?,
                _ => guided_attention(&inputs, mask, &schedule, step)?,
            };
            observe(&AttentionStep {
                step,
                grid: *grid,
                map: &map,
            });
            let attended = upsample(&(map.weights() * &values), *grid, latent_grid);
            latent = latent * (1.0 - dynamics.step_size) + attended * dynamics.step_size;
        }
        latent = &latent * (1.0 - dynamics.smoothing)
            + smooth(&latent, latent_grid) * dynamics.smoothing;
        let level = if cfg.steps > 1 {
            (step - 1) as f64 / (cfg.steps - 1) as f64
        } else {
            0.0
        };
        add_noise(
            &mut latent,
            latent_grid,
            vocab.len(),
            dynamics.noise_amplitude * level,
            &mut rng,
        );
    }

    let labels = render_labels(&latent, vocab);
    Ok(Generation {
        image: RenderedImage::from_labels(latent_grid, &labels, vocab),
        latent: LatentGrid {
            grid: latent_grid,
            state: latent,
            seed: cfg.seed,
        },
        guidance: g,
        tokens,
        warnings,
    })
}

/// Maps prompt tokens to vocabulary concepts and puts the background token
/// first when the prompt lacks one.
fn resolve_tokens(g: &GuidanceSet, vocab: &ConceptVocabulary) -> Result<(GuidanceSet, Vec<usize>)> {
    let missing: Vec<String> = g
        .prompt()
        .iter()
        .filter(|t| vocab.index_of(t).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::VocabularyGap(missing));
    }
    let has_background = g
        .prompt()
        .iter()
        .any(|t| vocab.index_of(t) == Some(vocab.background()));
    let g = if has_background {
        g.clone()
    } else {
        g.with_leading_token(BACKGROUND)
    };
    let tokens = g
        .prompt()
        .iter()
        .map(|t| vocab.index_of(t).expect("checked above"))
        .collect();
    Ok((g, tokens))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn initial_latent(
    grid: Grid,
    tokens: &[usize],
    vocab: &ConceptVocabulary,
    dynamics: &Dynamics,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let dim = vocab.value_dim();
    // extra channels hold the state reached once attention rows sum to one
    let mut latent = DMatrix::from_fn(
        grid.cells(),
        dim,
        |_, j| if j >= vocab.len() { 1.0 } else { 0.0 },
    );
    latent
        .column_mut(vocab.background())
        .fill(dynamics.background_level);

    let mut objects: Vec<usize> = Vec::new();
    for &t in tokens {
        if t != vocab.background() && !objects.contains(&t) {
            objects.push(t);
        }
    }
    let two_var = 2.0 * dynamics.prior_width * dynamics.prior_width;
    for t in objects {
        let cx = 0.5 + dynamics.prior_jitter * normal(rng);
        let cy = 0.5 + dynamics.prior_jitter * normal(rng);
        for cell in 0..grid.cells() {
            let (x, y) = grid.cell_center(cell);
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            latent[(cell, t)] += dynamics.prior_amplitude * (-r2 / two_var).exp();
        }
    }
    add_noise(
        &mut latent,
        grid,
        vocab.len(),
        dynamics.noise_amplitude,
        rng,
    );
    latent
}

/// Adds spatially smoothed Gaussian noise to the concept channels.
fn add_noise(
    latent: &mut DMatrix<f64>,
    grid: Grid,
    channels: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) {
    let raw = DMatrix::from_fn(grid.cells(), channels, |_, _| normal(rng));
    if scale == 0.0 {
        return;
    }
    let smoothed = smooth(&raw, grid);
    for cell in 0..grid.cells() {
        for c in 0..channels {
            latent[(cell, c)] += scale * smoothed[(cell, c)];
        }
    }
}

/// 3x3 box filter with clamped edges, applied per channel.
fn smooth(m: &DMatrix<f64>, grid: Grid) -> DMatrix<f64> {
    let (w, h) = (grid.width as isize, grid.height as isize);
    DMatrix::from_fn(m.nrows(), m.ncols(), |cell, c| {
        let (r, col) = ((cell / grid.width) as isize, (cell % grid.width) as isize);
        let mut total = 0.0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let rr = (r + dr).clamp(0, h - 1);
                let cc = (col + dc).clamp(0, w - 1);
                total += m[((rr * w + cc) as usize, c)];
            }
        }
        total / 9.0
    })
}

/// Block-average from the latent grid down to `to`.
fn pool(m: &DMatrix<f64>, from: Grid, to: Grid) -> DMatrix<f64> {
    if from == to {
        return m.clone();
    }
    let (fx, fy) = (from.width / to.width, from.height / to.height);
    let norm = (fx * fy) as f64;
    DMatrix::from_fn(to.cells(), m.ncols(), |cell, c| {
        let (r, col) = (cell / to.width, cell % to.width);
        let mut total = 0.0;
        for rr in r * fy..(r + 1) * fy {
            for cc in col * fx..(col + 1) * fx {
                total += m[(rr * from.width + cc, c)];
            }
        }
        total / norm
    })
}

/// Nearest-neighbour upsampling from `from` to the latent grid.
fn upsample(m: &DMatrix<f64>, from: Grid, to: Grid) -> DMatrix<f64> {
    if from == to {
        return m.clone();
    }
    let (fx, fy) = (to.width / from.width, to.height / from.height);
    DMatrix::from_fn(to.cells(), m.ncols(), |cell, c| {
        let (r, col) = (cell / to.width, cell % to.width);
        m[((r / fy) * from.width + col / fx, c)]
    })
}

/// Concept with the largest value projection per cell; ties go to the lower index.
fn render_labels(latent: &DMatrix<f64>, vocab: &ConceptVocabulary) -> Vec<usize> {
    (0..latent.nrows())
        .map(|cell| {
            let row = latent.row(cell);
            let mut best = (0, f64::NEG_INFINITY);
            for (i, concept) in vocab.concepts().iter().enumerate() {
                let score = row
                    .iter()
                    .zip(concept.value.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                if score > best.1 {
                    best = (i, score);
                }
            }
            best.0
        })
        .collect()
}

/// Mean L1 change of the unguided tokens' attention relative to an unmasked
/// run with the same seed, split by whether a cell lies inside any guidance box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distortion {
    /// `None` when the boxes cover every cell.
    pub out_of_box: Option<f64>,
    /// `None` when no box covers any cell.
    pub in_box: Option<f64>,
}

/// Compares the finest-grid attention maps of a masked run against the same
/// run without a mask, step by step.
pub fn attention_distortion(
    g: &GuidanceSet,
    vocab: &ConceptVocabulary,
    cfg: &GenerationConfig,
) -> Result<Distortion> {
    let fine = cfg.latent_grid()?;
    let collect = |cfg: &GenerationConfig| -> Result<(Generation, Vec<DMatrix<f64>>)> {
        let mut maps = Vec::new();
        let out = generate_traced(g, vocab, cfg, |s| {
            if s.grid == fine {
                maps.push(s.map.weights().clone());
            }
        })?;
        Ok((out, maps))
    };
    let (run, guided) = collect(cfg)?;
    let (_, baseline) = collect(&cfg.clone().with_mode(MaskMode::None))?;

    let guidance = &run.guidance;
    let unguided: Vec<usize> = (0..guidance.token_count())
        .filter(|t| guidance.entries().iter().all(|e| e.concept != *t))
        .collect();
    let mut inside = vec![false; fine.cells()];
    for e in guidance.entries() {
        for cell in rasterize_box(&e.bbox, fine) {
            inside[cell] = true;
        }
    }

    let (mut sums, mut counts) = ([0.0; 2], [0usize; 2]);
    for (a, b) in guided.iter().zip(&baseline) {
        for (cell, &is_inside) in inside.iter().enumerate() {
            let l1: f64 = unguided
                .iter()
                .map(|&t| (a[(cell, t)] - b[(cell, t)]).abs())
                .sum();
            let k = usize::from(is_inside);
            sums[k] += l1;
            counts[k] += 1;
        }
    }
    let mean = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    Ok(Distortion {
        out_of_box: mean(0),
        in_box: mean(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn left_half() -> GuidanceSet {
        GuidanceSet::from_named(&[("circle", BoundingBox::new(0.0, 0.0, 0.5, 1.0).unwrap())])
    }

    #[test]
    fn pooling_round_trip() {
        let fine = Grid::square(4);
        let coarse = Grid::square(2);
        let m = DMatrix::from_fn(16, 1, |i, _| i as f64);
        let p = pool(&m, fine, coarse);
        assert_eq!(p[(0, 0)], (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        let u = upsample(&p, coarse, fine);
        assert_eq!(u[(5, 0)], p[(0, 0)]);
        assert_eq!(u[(15, 0)], p[(3, 0)]);
    }

    #[test]
    fn smoothing_keeps_constants() {
        let grid = Grid::new(5, 3).unwrap();
        let m = DMatrix::from_element(15, 2, 0.7);
        let s = smooth(&m, grid);
        assert!(s.iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn same_seed_same_bytes() {
        let vocab = ConceptVocabulary::toy();
        for mode in [MaskMode::None, MaskMode::Flat, MaskMode::Gaussian] {
            let cfg = GenerationConfig::default().with_mode(mode).with_seed(7);
            let a = generate(&left_half(), &vocab, &cfg).unwrap();
            let b = generate(&left_half(), &vocab, &cfg).unwrap();
            assert_eq!(a.image.to_ppm(4), b.image.to_ppm(4));
            assert_eq!(a.latent, b.latent);
        }
    }

    #[test]
    fn seeds_change_the_baseline() {
        let vocab = ConceptVocabulary::toy();
        let images: std::collections::HashSet<Vec<u8>> = (0..6)
            .map(|s| {
                let cfg = GenerationConfig::default()
                    .with_mode(MaskMode::None)
                    .with_seed(s);
                generate(&left_half(), &vocab, &cfg)
                    .unwrap()
                    .image
                    .to_ppm(1)
            })
            .collect();
        assert!(images.len() > 1);
    }

    #[test]
    fn every_cell_gets_a_palette_color() {
        let vocab = ConceptVocabulary::toy();
        let out = generate(&left_half(), &vocab, &GenerationConfig::default()).unwrap();
        assert!(out.image.labels(&vocab).iter().all(Option::is_some));
        assert_eq!(
            out.tokens,
            vec![vocab.background(), vocab.index_of("circle").unwrap()]
        );
    }

    #[test]
    fn unknown_concepts_are_listed() {
        let vocab = ConceptVocabulary::toy();
        let g = GuidanceSet::from_named(&[
            ("zebra", BoundingBox::full()),
            ("dog", BoundingBox::full()),
            ("kite", BoundingBox::full()),
        ]);
        match generate(&g, &vocab, &GenerationConfig::default()) {
            Err(Error::VocabularyGap(names)) => assert_eq!(names, vec!["zebra", "kite"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn guiding_the_background_everywhere_else_is_contradictory() {
        let vocab = ConceptVocabulary::toy();
        let g = GuidanceSet::from_named(&[
            ("background", BoundingBox::new(0.0, 0.0, 0.5, 1.0).unwrap()),
            ("dog", BoundingBox::new(0.0, 0.0, 0.5, 1.0).unwrap()),
        ]);
        assert!(matches!(
            generate(&g, &vocab, &GenerationConfig::default()),
            Err(Error::AllSuppressed { .. })
        ));
    }

    #[test]
    fn tiny_box_warns_at_coarse_resolution() {
        let vocab = ConceptVocabulary::toy();
        let g =
            GuidanceSet::from_named(&[("dog", BoundingBox::new(0.5, 0.5, 0.56, 0.56).unwrap())]);
        let out = generate(&g, &vocab, &GenerationConfig::default()).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].grid, Grid::square(8));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let vocab = ConceptVocabulary::toy();
        let g = left_half();
        let cfg = GenerationConfig {
            resolutions: vec![Grid::square(16), Grid::square(5)],
            ..GenerationConfig::default()
        };
        assert!(generate(&g, &vocab, &cfg).is_err());
        let cfg = GenerationConfig {
            steps: 0,
            ..GenerationConfig::default()
        };
        assert!(generate(&g, &vocab, &cfg).is_err());
        let cfg = GenerationConfig {
            resolutions: vec![],
            ..GenerationConfig::default()
        };
        assert!(generate(&g, &vocab, &cfg).is_err());
    }

    #[test]
    fn left_half_circle_over_fifty_seeds() {
        let vocab = ConceptVocabulary::toy();
        let g = left_half();
        let hits = |mode| {
            (0..50)
                .filter(|&seed| {
                    let cfg = GenerationConfig::default().with_mode(mode).with_seed(seed);
                    let out = generate(&g, &vocab, &cfg).unwrap();
                    crate::evaluation::match_guidance(&oracle_detect(&out.image, &vocab), &g)[0]
                        .success
                })
                .count()
        };
        assert!(hits(MaskMode::Gaussian) >= 40);
        assert!(hits(MaskMode::None) <= 15);
    }

    #[test]
    fn single_step_runs() {
        let vocab = ConceptVocabulary::toy();
        let cfg = GenerationConfig {
            steps: 1,
            ..GenerationConfig::default()
        };
        assert!(generate(&left_half(), &vocab, &cfg).is_ok());
    }
}
