//! Fréchet distance between two synthetic feature sets.

use layout_guidance::{fit_gaussian, frechet_distance};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sample(rng: &mut ChaCha8Rng, n: usize, k: usize, mean: f64, sd: f64) -> DMatrix<f64> {
    let dist = Normal::new(mean, sd).expect("valid normal");
    DMatrix::from_fn(n, k, |_, _| dist.sample(rng))
}

fn main() -> layout_guidance::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reference = fit_gaussian(&sample(&mut rng, 2000, 8, 0.0, 1.0))?;
    for (mean, sd) in [(0.0, 1.0), (0.5, 1.0), (0.0, 2.0), (1.0, 0.5)] {
        let other = fit_gaussian(&sample(&mut rng, 2000, 8, mean, sd))?;
        // the population value is 8 * (mean^2 + (sd - 1)^2)
        let expected = 8.0 * (mean * mean + (sd - 1.0) * (sd - 1.0));
        println!(
            "mean {mean:<4} sd {sd:<4} FID {:.3} (population {expected:.3})",
            frechet_distance(&reference, &other)?
        );
    }
    Ok(())
}
