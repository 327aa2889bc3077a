use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues down to `-EIGENVALUE_TOLERANCE` are treated as rounding noise
/// and clamped to zero.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-8;

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    count: usize,
}

impl FeatureStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, count: usize) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::Shape(format!(
                "covariance is {}x{} but the mean has {k} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if count < 2 {
            return Err(Error::TooFewSamples(count));
        }
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature statistics"));
        }
        if (&cov - cov.transpose()).amax() > 1e-9 {
            return Err(Error::Shape("covariance is not symmetric".into()));
        }
        Ok(Self { mean, cov, count })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased sample covariance of the rows of `features`.
pub fn fit_gaussian(features: &DMatrix<f64>) -> Result<FeatureStats> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let mean = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    // enforce exact symmetry against rounding in the product
    cov = (&cov + cov.transpose()) * 0.5;
    FeatureStats::new(mean, cov, n)
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½)`.
///
/// The trace of the cross term is taken as the sum of square roots of the
/// eigenvalues of `Σa^½ Σb Σa^½`, which is symmetric and shares its spectrum
/// with `Σa Σb`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let root_a = psd_sqrt(&a.cov)?;
    psd_eigenvalues(&b.cov)?;
    let cross = &root_a * &b.cov * &root_a;
    let cross = (&cross + cross.transpose()) * 0.5;
    let cross_trace: f64 = psd_eigenvalues(&cross)?.iter().map(|l| l.sqrt()).sum();
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross_trace;
    Ok(d.max(0.0))
}

/// Eigenvalues of a symmetric matrix with small negatives clamped to zero.
fn psd_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    clamp(SymmetricEigen::new(m.clone()).eigenvalues)
}

fn clamp(mut values: DVector<f64>) -> Result<DVector<f64>> {
    for v in values.iter_mut() {
        if *v < -EIGENVALUE_TOLERANCE {
            return Err(Error::NotPsd { eigenvalue: *v });
        }
        *v = v.max(0.0);
    }
    Ok(values)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = clamp(eig.eigenvalues)?.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(mean: &[f64], var: &[f64]) -> FeatureStats {
        FeatureStats::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(var)),
            10,
        )
        .unwrap()
    }

    /// `(μa − μb)² + (σa − σb)²` summed over independent dimensions.
    fn diagonal_oracle(ma: &[f64], va: &[f64], mb: &[f64], vb: &[f64]) -> f64 {
        (0..ma.len())
            .map(|i| (ma[i] - mb[i]).powi(2) + (va[i].sqrt() - vb[i].sqrt()).powi(2))
            .sum()
    }

    #[test]
    fn fit_examples() {
        let s = fit_gaussian(&DMatrix::from_row_slice(2, 1, &[0.0, 2.0])).unwrap();
        assert_eq!(s.mean()[0], 1.0);
        assert_eq!(s.cov()[(0, 0)], 2.0);

        let s = fit_gaussian(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(s.mean().as_slice(), &[0.5, 0.5]);
        assert_eq!(s.cov().as_slice(), &[0.5, -0.5, -0.5, 0.5]);

        let s = fit_gaussian(&DMatrix::from_row_slice(
            2,
            3,
            &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
        ))
        .unwrap();
        assert!(s.cov().iter().all(|&v| v == 0.0));

        assert!(matches!(
            fit_gaussian(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn one_dimensional_closed_forms() {
        let d = frechet_distance(&stats(&[0.0], &[1.0]), &stats(&[1.0], &[1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let d = frechet_distance(&stats(&[0.0], &[1.0]), &stats(&[0.0], &[4.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_stats_are_at_distance_zero() {
        let x = DMatrix::from_fn(40, 5, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 * 0.3 - (j as f64)
        });
        let s = fit_gaussian(&x).unwrap();
        assert!(frechet_distance(&s, &s).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            frechet_distance(&stats(&[0.0], &[1.0]), &stats(&[0.0, 0.0], &[1.0, 1.0])),
            Err(Error::DimensionMismatch(1, 2))
        ));
        let not_psd =
            FeatureStats::new(DVector::zeros(1), DMatrix::from_element(1, 1, -1.0), 5).unwrap();
        assert!(matches!(
            frechet_distance(&not_psd, &stats(&[0.0], &[1.0])),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            frechet_distance(&stats(&[0.0], &[1.0]), &not_psd),
            Err(Error::NotPsd { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(FeatureStats::new(DVector::zeros(2), asym, 5).is_err());
    }

    fn arb_diag(k: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-5.0..5.0f64, k),
            prop::collection::vec(0.0..4.0f64, k),
        )
    }

    proptest! {
        #[test]
        fn diagonal_matches_oracle(((ma, va), (mb, vb)) in (1usize..6).prop_flat_map(|k| (arb_diag(k), arb_diag(k)))) {
            let d = frechet_distance(&stats(&ma, &va), &stats(&mb, &vb)).unwrap();
            prop_assert!((d - diagonal_oracle(&ma, &va, &mb, &vb)).abs() < 1e-8);
        }

        #[test]
        fn symmetric_and_non_negative(
            xa in prop::collection::vec(-3.0..3.0f64, 30),
            xb in prop::collection::vec(-3.0..3.0f64, 30),
        ) {
            let a = fit_gaussian(&DMatrix::from_row_slice(10, 3, &xa)).unwrap();
            let b = fit_gaussian(&DMatrix::from_row_slice(10, 3, &xb)).unwrap();
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-6);
        }
    }
}
