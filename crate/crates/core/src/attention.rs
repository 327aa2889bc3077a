//! Cross-attention between spatial queries and prompt-token keys, with and
//! without a guidance mask.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::SoftMask;

/// Queries (`cells × d`) and keys (`tokens × d`) for one attention call.
#[derive(Debug, Clone)]
pub struct AttentionInputs {
    queries: DMatrix<f64>,
    keys: DMatrix<f64>,
}

impl AttentionInputs {
    pub fn new(queries: DMatrix<f64>, keys: DMatrix<f64>) -> Result<Self> {
        if keys.ncols() == 0 {
            return Err(Error::Shape("key dimension must be at least 1".into()));
        }
        if keys.nrows() == 0 {
            return Err(Error::Shape("at least one token is required".into()));
        }
        if queries.ncols() != keys.ncols() {
            return Err(Error::Shape(format!(
                "query dimension {} does not match key dimension {}",
                queries.ncols(),
                keys.ncols()
            )));
        }
        if !queries.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("queries"));
        }
        if !keys.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("keys"));
        }
        Ok(Self { queries, keys })
    }

    pub fn queries(&self) -> &DMatrix<f64> {
        &self.queries
    }

    pub fn keys(&self) -> &DMatrix<f64> {
        &self.keys
    }

    pub fn cells(&self) -> usize {
        self.queries.nrows()
    }

    pub fn tokens(&self) -> usize {
        self.keys.nrows()
    }

    pub fn dim(&self) -> usize {
        self.keys.ncols()
    }

    /// Unscaled `Q Kᵀ`.
    pub fn logits(&self) -> DMatrix<f64> {
        &self.queries * self.keys.transpose()
    }
}

/// Row-stochastic `cells × tokens` attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    weights: DMatrix<f64>,
}

impl AttentionMap {
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.weights
    }

    pub fn get(&self, cell: usize, token: usize) -> f64 {
        self.weights[(cell, token)]
    }
}

/// Scales the mask by `w′ · f(T) · max(Q Kᵀ)` with `f(T) = T / T_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub w_prime: f64,
    pub total_steps: usize,
}

impl WeightSchedule {
    pub fn new(w_prime: f64, total_steps: usize) -> Result<Self> {
        if !(w_prime >= 0.0 && w_prime.is_finite()) {
            return Err(Error::Config(format!(
                "mask weight must be non-negative, got {w_prime}"
            )));
        }
        if total_steps == 0 {
            return Err(Error::Config(
                "at least one denoising step is required".into(),
            ));
        }
        Ok(Self {
            w_prime,
            total_steps,
        })
    }

    /// Linear decay: 1 at the first (noisiest) step, 0 at step 0.
    pub fn decay(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::Config(format!(
                "step {step} is past the schedule's {} steps",
                self.total_steps
            )));
        }
        Ok(step as f64 / self.total_steps as f64)
    }
}

/// The mask weight `w` for one call. Negative logit maxima clamp to zero so the
/// mask never repels.
pub fn mask_weight(ws: &WeightSchedule, step: usize, logits: &DMatrix<f64>) -> Result<f64> {
    let peak = logits
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    Ok(ws.w_prime * ws.decay(step)? * peak)
}

/// `softmax(Q Kᵀ / √d)` over the token axis.
pub fn attention(inp: &AttentionInputs) -> Result<AttentionMap> {
    softmax_rows(scale(inp.logits(), inp.dim()), None)
}

/// Attention with the mask added to the logits and suppressed entries forced to
/// zero: `softmax((Q Kᵀ + w·S) / √d)`.
pub fn guided_attention(
    inp: &AttentionInputs,
    mask: &SoftMask,
    ws: &WeightSchedule,
    step: usize,
) -> Result<AttentionMap> {
    if mask.grid().cells() != inp.cells() {
        return Err(Error::Shape(format!(
            "mask grid {} has {} cells but there are {} queries",
            mask.grid(),
            mask.grid().cells(),
            inp.cells()
        )));
    }
    if mask.tokens() != inp.tokens() {
        return Err(Error::Shape(format!(
            "mask covers {} tokens but there are {} keys",
            mask.tokens(),
            inp.tokens()
        )));
    }
    let mut logits = inp.logits();
    let w = mask_weight(ws, step, &logits)?;
    if w != 0.0 {
        logits += mask.additive() * w;
    }
    let suppress = mask.has_suppression().then(|| mask.suppress());
    softmax_rows(scale(logits, inp.dim()), suppress)
}

fn scale(mut logits: DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let sqrt_d = (dim as f64).sqrt();
    logits.apply(|v| *v /= sqrt_d);
    logits
}

fn softmax_rows(logits: DMatrix<f64>, suppress: Option<&DMatrix<bool>>) -> Result<AttentionMap> {
    let (cells, tokens) = logits.shape();
    let is_suppressed = |cell: usize, token: usize| suppress.is_some_and(|s| s[(cell, token)]);
    let mut weights = DMatrix::zeros(cells, tokens);
    let mut row = vec![0.0; tokens];
    for cell in 0..cells {
        let mut peak = f64::NEG_INFINITY;
        for (token, v) in row.iter_mut().enumerate() {
            *v = if is_suppressed(cell, token) {
                f64::NEG_INFINITY
            } else {
                logits[(cell, token)]
            };
            peak = peak.max(*v);
        }
        if peak == f64::NEG_INFINITY {
            return Err(Error::AllSuppressed { cell });
        }
        let mut total = 0.0;
        for v in row.iter_mut() {
            // exp(-inf) is exactly 0
            *v = (*v - peak).exp();
            total += *v;
        }
        for (token, v) in row.iter().enumerate() {
            weights[(cell, token)] = v / total;
        }
    }
    Ok(AttentionMap { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::guidance::{build_soft_mask, Grid, GuidanceEntry, GuidanceSet};
    use proptest::prelude::*;

    fn inputs(q: &[f64], rows: usize, k: &[f64], tokens: usize) -> AttentionInputs {
        let d = k.len() / tokens;
        AttentionInputs::new(
            DMatrix::from_row_slice(rows, d, q),
            DMatrix::from_row_slice(tokens, d, k),
        )
        .unwrap()
    }

    /// A 1x1-grid mask with explicit additive values and suppression flags.
    fn cell_mask(additive: &[f64], suppress: &[bool]) -> SoftMask {
        let mut m = SoftMask::empty(Grid::square(1), additive.len());
        let (a, s) = m.parts_mut();
        for (i, (&v, &f)) in additive.iter().zip(suppress).enumerate() {
            a[(0, i)] = v;
            s[(0, i)] = f;
        }
        m
    }

    #[test]
    fn zero_queries_give_uniform_rows() {
        let inp = inputs(&[0.0, 0.0], 1, &[1.0, 2.0, -3.0, 0.5, 4.0, 4.0], 3);
        let m = attention(&inp).unwrap();
        for t in 0..3 {
            assert!((m.get(0, t) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_softmax_two_tokens() {
        let ln2 = 2f64.ln();
        let inp = inputs(&[1.0], 1, &[ln2, 0.0], 2);
        let m = attention(&inp).unwrap();
        assert!((m.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_token_rows_are_one() {
        let inp = inputs(&[0.3, -2.0, 5.0, 1.0, 7.0, 7.0], 3, &[1.5, -0.5], 1);
        let m = attention(&inp).unwrap();
        assert!(m.weights().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_non_finite_and_mismatched_inputs() {
        let k = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(
            AttentionInputs::new(DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0]), k.clone())
                .is_err()
        );
        assert!(AttentionInputs::new(DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]), k).is_err());
    }

    #[test]
    fn mask_weight_examples() {
        let ws = WeightSchedule::new(0.2, 50).unwrap();
        let logits = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, -3.0, 2.0]);
        assert!((mask_weight(&ws, 50, &logits).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mask_weight(&ws, 0, &logits).unwrap(), 0.0);
        let zero = WeightSchedule::new(0.0, 50).unwrap();
        assert_eq!(mask_weight(&zero, 37, &logits).unwrap(), 0.0);
        let negative = DMatrix::from_row_slice(1, 2, &[-1.0, -5.0]);
        assert_eq!(mask_weight(&ws, 50, &negative).unwrap(), 0.0);
        assert!(mask_weight(&ws, 51, &logits).is_err());
        assert!(WeightSchedule::new(-0.1, 10).is_err());
        assert!(WeightSchedule::new(0.1, 0).is_err());
    }

    #[test]
    fn suppressed_token_gets_exact_zero() {
        let inp = inputs(&[0.0], 1, &[1.0, 1.0], 2);
        let mask = cell_mask(&[0.0, 0.0], &[false, true]);
        let ws = WeightSchedule::new(0.2, 10).unwrap();
        let m = guided_attention(&inp, &mask, &ws, 10).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn additive_shifts_softmax_by_hand() {
        // logits [0, 0, 1] so max(QK^T) = 1 and w = 0.5; with d = 2 the
        // additive a = 2 sqrt(2) ln 2 on token 0 scales to exactly ln 2
        let inp = inputs(&[1.0, 0.0], 1, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0], 3);
        let a = 2.0 * 2f64.sqrt() * 2f64.ln();
        let mask = cell_mask(&[a, 0.0, 0.0], &[false; 3]);
        let ws = WeightSchedule::new(0.5, 4).unwrap();
        let m = guided_attention(&inp, &mask, &ws, 4).unwrap();
        let z = [2f64.ln(), 0.0, 1.0 / 2f64.sqrt()];
        let total: f64 = z.iter().map(|v| v.exp()).sum();
        for (t, zt) in z.iter().enumerate() {
            assert!((m.get(0, t) - zt.exp() / total).abs() < 1e-14);
        }
    }

    #[test]
    fn additive_matches_hand_softmax_with_zero_logits() {
        // all logits zero except a far-away cell setting max(QK^T) = 4, d = 1:
        // w = 0.25 * 1 * 4 = 1, so additive ln 2 at cell 0 gives [ln2, 0, 0]
        let inp = inputs(&[0.0, 1.0], 2, &[0.0, 0.0, 4.0], 3);
        let mut mask = SoftMask::empty(Grid::new(2, 1).unwrap(), 3);
        mask.parts_mut().0[(0, 0)] = 2f64.ln();
        let ws = WeightSchedule::new(0.25, 8).unwrap();
        let m = guided_attention(&inp, &mask, &ws, 8).unwrap();
        assert!((m.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((m.get(0, 1) - 0.25).abs() < 1e-15);
        assert!((m.get(0, 2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn all_suppressed_row_is_an_error() {
        let inp = inputs(&[0.0, 0.0], 2, &[1.0, 1.0], 2);
        let mut mask = SoftMask::empty(Grid::new(2, 1).unwrap(), 2);
        mask.parts_mut().1[(1, 0)] = true;
        mask.parts_mut().1[(1, 1)] = true;
        let ws = WeightSchedule::new(0.2, 10).unwrap();
        assert!(matches!(
            guided_attention(&inp, &mask, &ws, 3),
            Err(Error::AllSuppressed { cell: 1 })
        ));
    }

    #[test]
    fn mask_shape_must_match() {
        let inp = inputs(&[0.0, 0.0], 2, &[1.0, 1.0], 2);
        let ws = WeightSchedule::new(0.2, 10).unwrap();
        assert!(guided_attention(&inp, &SoftMask::empty(Grid::square(2), 2), &ws, 1).is_err());
        assert!(
            guided_attention(&inp, &SoftMask::empty(Grid::new(2, 1).unwrap(), 3), &ws, 1).is_err()
        );
    }

    fn random_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, usize)> {
        (1usize..5, 1usize..5).prop_flat_map(|(tokens, d)| {
            (
                proptest::collection::vec(-3.0..3.0f64, 16 * d),
                proptest::collection::vec(-3.0..3.0f64, tokens * d),
                Just(tokens),
                Just(d),
            )
        })
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(case in random_case(), w in 0.0..1.0f64, step in 0usize..=10) {
            let (q, k, tokens, _) = case;
            let inp = inputs(&q, 16, &k, tokens);
            let g = GuidanceSet::new(
                (0..tokens).map(|i| i.to_string()).collect(),
                vec![GuidanceEntry { bbox: BoundingBox::new(0.2, 0.1, 0.7, 0.6).unwrap(), concept: tokens - 1 }],
                512,
            ).unwrap();
            let (mask, _) = build_soft_mask(&g, Grid::square(4), 2.0).unwrap();
            let ws = WeightSchedule::new(w, 10).unwrap();
            match guided_attention(&inp, &mask, &ws, step) {
                Ok(m) => {
                    for cell in 0..16 {
                        let row = m.weights().row(cell);
                        prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                        prop_assert!(row.iter().all(|&v| v >= 0.0));
                        for t in 0..tokens {
                            if mask.suppress()[(cell, t)] { prop_assert_eq!(row[t], 0.0); }
                        }
                    }
                }
                // a single-token prompt guided to a box has nothing left outside it
                Err(Error::AllSuppressed { .. }) => prop_assert_eq!(tokens, 1),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn zero_weight_reduces_to_plain_attention(case in random_case(), step in 0usize..=10) {
            let (q, k, tokens, _) = case;
            let inp = inputs(&q, 16, &k, tokens);
            let g = GuidanceSet::new(
                (0..tokens).map(|i| i.to_string()).collect(),
                vec![GuidanceEntry { bbox: BoundingBox::full(), concept: 0 }],
                512,
            ).unwrap();
            let (mask, _) = build_soft_mask(&g, Grid::square(4), 2.0).unwrap();
            let ws = WeightSchedule::new(0.0, 10).unwrap();
            prop_assert_eq!(guided_attention(&inp, &mask, &ws, step).unwrap(), attention(&inp).unwrap());
        }

        #[test]
        fn shift_invariance(row in proptest::collection::vec(-30.0..30.0f64, 1..6), shift in -500.0..500.0f64) {
            let n = row.len();
            let base = softmax_rows(DMatrix::from_row_slice(1, n, &row), None).unwrap();
            let moved: Vec<f64> = row.iter().map(|v| v + shift).collect();
            let shifted = softmax_rows(DMatrix::from_row_slice(1, n, &moved), None).unwrap();
            for t in 0..n {
                prop_assert!((base.get(0, t) - shifted.get(0, t)).abs() < 1e-12);
            }
        }
    }
}
