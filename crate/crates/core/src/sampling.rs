//! Primitive distribution draws with the edge cases the models need.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};

/// Above this mean the exact Poisson samplers lose nothing to a rounded
/// normal approximation (relative skewness < 1e-6) and explosive chains
/// push means past 1e30, so we switch over.
const POISSON_NORMAL_CUTOFF: f64 = 1e12;

/// Draw from Poisson(lambda); lambda = 0 yields 0.
///
/// Counts are returned as f64 (integral by construction; above 2^53 every
/// representable f64 is an integer anyway).
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0 && lambda.is_finite(), "lambda = {lambda}");
    if lambda == 0.0 {
        return 0.0;
    }
    if lambda > POISSON_NORMAL_CUTOFF {
        let z: f64 = rng.sample(StandardNormal);
        return f64::mul_add(lambda.sqrt(), z, lambda).round().max(0.0);
    }
    Poisson::new(lambda)
        .expect("positive finite lambda")
        .sample(rng)
}

/// Draw from Gamma(shape, scale); shape = 0 is the degenerate point mass at 0.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    debug_assert!(shape >= 0.0 && scale > 0.0, "shape = {shape}, scale = {scale}");
    if shape == 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale)
        .expect("positive shape and scale")
        .sample(rng)
}

/// Standard normal draw.
#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Unit-mean, unit-variance exponential draw (bootstrap weight default).
#[inline]
pub fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Mean, variance, and their standard errors for a sample, in one pass
/// over the data. Used by moment-matching tests and study summaries.
#[derive(Debug, Clone, Copy)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

/// Sample mean/variance with standard errors (se_var from the empirical
/// fourth central moment).
pub fn moment_summary(xs: &[f64]) -> MomentSummary {
    let n = xs.len();
    assert!(n >= 2, "need at least two observations");
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let var = m2 / (nf - 1.0);
    let m4 = m4 / nf;
    // Var(s^2) ~ (m4 - var^2) / n for large n
    let se_var = ((m4 - var * var).max(0.0) / nf).sqrt();
    MomentSummary {
        n,
        mean,
        var,
        se_mean: (var / nf).sqrt(),
        se_var,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn poisson_zero_mean_is_zero() {
        let mut rng = stream_rng(0, &[1]);
        assert_eq!(poisson(&mut rng, 0.0), 0.0);
    }

    #[test]
    fn poisson_draws_are_integral() {
        let mut rng = stream_rng(0, &[2]);
        for &lambda in &[0.3, 7.0, 450.0, 3.0e13] {
            for _ in 0..200 {
                let x = poisson(&mut rng, lambda);
                assert_eq!(x.fract(), 0.0, "non-integer draw at lambda {lambda}");
                assert!(x >= 0.0);
            }
        }
    }

    #[test]
    fn poisson_moments_small_and_huge_mean() {
        let mut rng = stream_rng(7, &[3]);
        for &lambda in &[4.0, 2.0e13] {
            let draws: Vec<f64> = (0..40_000).map(|_| poisson(&mut rng, lambda)).collect();
            let s = moment_summary(&draws);
            assert!(
                (s.mean - lambda).abs() < 4.0 * s.se_mean,
                "mean {} vs {}",
                s.mean,
                lambda
            );
            assert!(
                (s.var - lambda).abs() < 4.0 * s.se_var,
                "var {} vs {}",
                s.var,
                lambda
            );
        }
    }

    #[test]
    fn gamma_zero_shape_is_zero() {
        let mut rng = stream_rng(0, &[4]);
        assert_eq!(gamma(&mut rng, 0.0, 2.0), 0.0);
    }

    #[test]
    fn gamma_tiny_shape_collapses_to_zero() {
        // The shape -> 0 limit is a point mass at 0; draws underflow exactly.
        let mut rng = stream_rng(0, &[5]);
        let x = gamma(&mut rng, 1e-13, 0.5);
        assert!(x.abs() < 1e-300, "draw {x}");
    }

    #[test]
    fn gamma_moments() {
        let mut rng = stream_rng(9, &[6]);
        let (shape, scale) = (0.7, 1.3);
        let draws: Vec<f64> = (0..40_000).map(|_| gamma(&mut rng, shape, scale)).collect();
        let s = moment_summary(&draws);
        assert!((s.mean - shape * scale).abs() < 4.0 * s.se_mean);
        assert!((s.var - shape * scale * scale).abs() < 4.0 * s.se_var);
    }
}
