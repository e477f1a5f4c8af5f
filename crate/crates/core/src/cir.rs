//! Square-root (CIR-type) diffusion: the common scaling limit of the affine
//! families near the unit root.
//!
//! dY_s = (mu + gamma * Y_s) ds + sigma * sqrt(Y_s) dB_s,  Y_0 = y0.
//!
//! Provides exact transition sampling, full-truncation Euler paths, the
//! Monte Carlo tabulation of the local-to-unity least-squares limit
//! functionals, and the explosive-regime limit mixture.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};
use crate::sampling;

/// Diffusion parameters. `gamma` is the drift slope (negative: mean
/// reverting; positive: explosive), `sigma2` the squared noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub mu: f64,
    pub gamma: f64,
    pub sigma2: f64,
}

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu >= 0.0
            && self.mu.is_finite()
            && self.sigma2 >= 0.0
            && self.sigma2.is_finite()
            && self.gamma.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("bad diffusion parameters {self:?}")))
        }
    }

    /// Does the boundary stay unattainable (2*mu >= sigma^2)?
    pub fn feller_holds(&self) -> bool {
        2.0 * self.mu >= self.sigma2
    }
}

/// Raw moments E[Y], E[Y^2], E[Y^3] of the stationary law under gamma = -1:
/// a gamma distribution with shape 2*mu/sigma^2 and scale sigma^2/2.
pub fn stationary_moments(mu: f64, sigma2: f64) -> [f64; 3] {
    let m1 = mu;
    let m2 = mu * (mu + sigma2 / 2.0);
    let m3 = mu * (mu + sigma2 / 2.0) * (mu + sigma2);
    [m1, m2, m3]
}

/// One full-truncation Euler path plus its Gaussian increments.
#[derive(Debug, Clone)]
pub struct EulerPath {
    /// Emitted values max(state, 0), length steps + 1.
    pub values: Vec<f64>,
    /// Brownian increments dB_j ~ N(0, h), length steps.
    pub increments: Vec<f64>,
}

#[inline]
fn euler_step(params: &CirParams, state: f64, h: f64, sigma: f64, db: f64) -> f64 {
    let plus = state.max(0.0);
    state + (params.mu + params.gamma * plus) * h + sigma * plus.sqrt() * db
}

/// Full-truncation Euler discretization over [0, horizon] with `steps` steps.
///
/// The internal state may dip below zero; drift and diffusion read its
/// positive part and the emitted path is clamped at zero, so every reported
/// value is nonnegative.
pub fn simulate_path_euler<R: Rng + ?Sized>(
    params: &CirParams,
    y0: f64,
    horizon: f64,
    steps: usize,
    rng: &mut R,
) -> Result<EulerPath> {
    params.validate()?;
    if !(y0 >= 0.0 && y0.is_finite()) {
        return Err(Error::InvalidInput(format!("y0 = {y0}")));
    }
    if steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need positive horizon and steps, got {horizon}, {steps}"
        )));
    }
    let h = horizon / steps as f64;
    let sh = h.sqrt();
    let sigma = params.sigma2.sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    let mut state = y0;
    values.push(y0);
    for _ in 0..steps {
        let db = sh * sampling::normal(rng);
        increments.push(db);
        state = euler_step(params, state, h, sigma, db);
        values.push(state.max(0.0));
    }
    Ok(EulerPath { values, increments })
}

/// Exact transition draw over a horizon `h`: a Poisson-mixed gamma law.
///
/// With c_h = sigma^2 (e^{gamma h} - 1) / (2 gamma), the next value is
/// Gamma(2 mu / sigma^2 + N, c_h) where N ~ Poisson(y e^{gamma h} / c_h).
pub fn sample_exact_transition<R: Rng + ?Sized>(
    params: &CirParams,
    y: f64,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    params.validate()?;
    if !(y >= 0.0 && y.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("y = {y}, h = {h}")));
    }
    if params.sigma2 == 0.0 {
        // deterministic linear drift flow
        return Ok(transition_mean(params, y, h));
    }
    let c = transition_scale(params, h);
    let lambda = y * (params.gamma * h).exp() / c;
    let n = sampling::poisson(rng, lambda);
    Ok(sampling::gamma(rng, 2.0 * params.mu / params.sigma2 + n, c))
}

/// Scale c_h of the exact transition; continuous at gamma = 0.
fn transition_scale(params: &CirParams, h: f64) -> f64 {
    if params.gamma == 0.0 {
        params.sigma2 * h / 2.0
    } else {
        params.sigma2 * ((params.gamma * h).exp() - 1.0) / (2.0 * params.gamma)
    }
}

/// Analytic conditional mean of Y_h given Y_0 = y.
pub fn transition_mean(params: &CirParams, y: f64, h: f64) -> f64 {
    if params.gamma == 0.0 {
        y + params.mu * h
    } else {
        let e = (params.gamma * h).exp();
        y * e + params.mu * (e - 1.0) / params.gamma
    }
}

/// Analytic conditional variance of Y_h given Y_0 = y.
pub fn transition_var(params: &CirParams, y: f64, h: f64) -> f64 {
    let c = transition_scale(params, h);
    let lambda_scale = if params.gamma == 0.0 {
        y
    } else {
        y * (params.gamma * h).exp()
    };
    // Gamma-with-Poisson-shape mixture: c^2 (2 mu / sigma^2) + 2 c * lambda_scale
    if params.sigma2 == 0.0 {
        0.0
    } else {
        c * c * 2.0 * params.mu / params.sigma2 + 2.0 * c * lambda_scale
    }
}

/// Monte Carlo table of a multi-component limit law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitTable {
    pub labels: Vec<String>,
    /// Column-major draws: columns[k][i] is draw i of component k.
    pub columns: Vec<Vec<f64>>,
    pub summary: Vec<ComponentSummary>,
    /// Cross-component sample covariance.
    pub cov: Vec<Vec<f64>>,
    pub meta: LimitMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub label: String,
    pub mean: f64,
    pub var: f64,
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitMeta {
    pub draws: usize,
    pub steps: usize,
    pub seed: u64,
    /// Paths redrawn because their design functionals were singular.
    pub resampled: usize,
    pub params: CirParams,
}

pub(crate) const QUANTILE_PROBS: [f64; 11] = [
    0.01, 0.025, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.975, 0.99,
];

/// Linear-interpolation sample quantile (sorted input).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0 && (0.0..=1.0).contains(&p));
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = h - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

fn summarize_columns(labels: &[String], columns: &[Vec<f64>]) -> (Vec<ComponentSummary>, Vec<Vec<f64>>) {
    let d = columns.len();
    let n = columns[0].len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for (j, cj) in columns.iter().enumerate() {
        for (k, ck) in columns.iter().enumerate().skip(j) {
            let s: f64 = cj
                .iter()
                .zip(ck.iter())
                .map(|(&a, &b)| (a - means[j]) * (b - means[k]))
                .sum();
            let v = s / (n - 1.0);
            cov[j][k] = v;
            cov[k][j] = v;
        }
    }
    let summary = labels
        .iter()
        .zip(columns.iter().enumerate())
        .map(|(label, (j, c))| {
            let mut sorted = c.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ComponentSummary {
                label: label.clone(),
                mean: means[j],
                var: cov[j][j],
                quantiles: QUANTILE_PROBS
                    .iter()
                    .map(|&p| (p, quantile_sorted(&sorted, p)))
                    .collect(),
            }
        })
        .collect();
    (summary, cov)
}

pub(crate) fn build_limit_table(
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
    meta: LimitMeta,
) -> LimitTable {
    let (summary, cov) = summarize_columns(&labels, &columns);
    LimitTable {
        labels,
        columns,
        summary,
        cov,
        meta,
    }
}

const SINGULAR_RETRY_BUDGET: usize = 100;

/// Path functionals for the local-to-unity least-squares limit: one Euler
/// path's (integral of Y^2, integral of Y, Ito integrals of Y^{3/2} and
/// Y^{1/2} against the same Brownian increments), fused into one pass.
fn ltu_functionals<R: Rng + ?Sized>(
    params: &CirParams,
    steps: usize,
    rng: &mut R,
) -> (f64, f64, f64, f64) {
    let h = 1.0 / steps as f64;
    let sh = h.sqrt();
    let sigma = params.sigma2.sqrt();
    let (mut a, mut b, mut i1, mut i2) = (0.0, 0.0, 0.0, 0.0);
    let mut state: f64 = 0.0;
    for _ in 0..steps {
        let y = state.max(0.0);
        let sy = y.sqrt();
        let db = sh * sampling::normal(rng);
        // left-endpoint sums share the increment that advances the path
        a += y * y * h;
        b += y * h;
        i1 += y * sy * db;
        i2 += sy * db;
        state = state + (params.mu + params.gamma * y) * h + sigma * sy * db;
    }
    (a, b, sigma * i1, sigma * i2)
}

/// Tabulate the joint limit law of the least-squares errors under
/// local-to-unity drift: draws of
/// [integral Y^2, integral Y; integral Y, 1]^{-1} [sigma Ito(Y^{3/2}), sigma Ito(Y^{1/2})]
/// from `m` Euler paths started at zero on [0, 1].
///
/// Numerically singular paths (degenerate design) are redrawn from fresh
/// streams and counted in the metadata.
pub fn tabulate_ltu_limit(
    params: &CirParams,
    m: usize,
    steps: usize,
    seed: u64,
) -> Result<LimitTable> {
    params.validate()?;
    if m == 0 || steps == 0 {
        return Err(Error::InvalidInput("need m > 0 and steps > 0".into()));
    }
    let results: Vec<Result<([f64; 2], usize)>> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut retries = 0usize;
            loop {
                let mut rng = stream_rng(seed, &[domain::EULER_PATH, i, retries as u64]);
                let (a, b, i1, i2) = ltu_functionals(params, steps, &mut rng);
                let det = a - b * b;
                if det.abs() > 1e-12 * a.max(f64::MIN_POSITIVE) {
                    let v1 = (i1 - b * i2) / det;
                    let v2 = (a * i2 - b * i1) / det;
                    return Ok(([v1, v2], retries));
                }
                retries += 1;
                if retries > SINGULAR_RETRY_BUDGET {
                    return Err(Error::SingularDesign {
                        retries: SINGULAR_RETRY_BUDGET,
                    });
                }
            }
        })
        .collect();
    let mut col1 = Vec::with_capacity(m);
    let mut col2 = Vec::with_capacity(m);
    let mut resampled = 0usize;
    for r in results {
        let (v, retries) = r?;
        col1.push(v[0]);
        col2.push(v[1]);
        resampled += retries;
    }
    Ok(build_limit_table(
        vec!["alpha_limit".into(), "mu_limit".into()],
        vec![col1, col2],
        LimitMeta {
            draws: m,
            steps,
            seed,
            resampled,
            params: *params,
        },
    ))
}

/// Draws from the mildly explosive least-squares limit: (2/sqrt(3)) * sigma *
/// Z^{-1/2} * Y with Z ~ Gamma(2 mu / sigma^2, sigma^2 / 2) independent of
/// Y ~ N(0, 1). The mixing variable Z is emitted as a second component.
pub fn sample_explosive_limit(mu: f64, sigma2: f64, m: usize, seed: u64) -> Result<LimitTable> {
    if !(mu > 0.0 && sigma2 > 0.0 && mu.is_finite() && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!("mu = {mu}, sigma2 = {sigma2}")));
    }
    if m == 0 {
        return Err(Error::InvalidInput("need m > 0".into()));
    }
    let shape = 2.0 * mu / sigma2;
    let scale = sigma2 / 2.0;
    let coef = 2.0 / 3.0f64.sqrt() * sigma2.sqrt();
    let draws: Vec<[f64; 2]> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[domain::EXPLOSIVE_LIMIT, i]);
            let z = sampling::gamma(&mut rng, shape, scale);
            let y = sampling::normal(&mut rng);
            [coef * y / z.sqrt(), z]
        })
        .collect();
    let col1 = draws.iter().map(|d| d[0]).collect();
    let col2 = draws.iter().map(|d| d[1]).collect();
    Ok(build_limit_table(
        vec!["alpha_limit".into(), "mixing_z".into()],
        vec![col1, col2],
        LimitMeta {
            draws: m,
            steps: 0,
            seed,
            resampled: 0,
            params: CirParams {
                mu,
                gamma: 1.0,
                sigma2,
            },
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::moment_summary;

    const UNIT: CirParams = CirParams {
        mu: 1.0,
        gamma: -1.0,
        sigma2: 1.0,
    };

    #[test]
    fn stationary_moment_formulas() {
        let m = stationary_moments(1.0, 1.0);
        assert_eq!(m, [1.0, 1.5, 3.0]);
        let m = stationary_moments(2.0, 1.0);
        assert_eq!(m, [2.0, 5.0, 15.0]);
    }

    #[test]
    fn feller_boundary() {
        assert!(CirParams {
            mu: 0.5,
            gamma: -1.0,
            sigma2: 1.0
        }
        .feller_holds());
        assert!(!CirParams {
            mu: 0.49,
            gamma: -1.0,
            sigma2: 1.0
        }
        .feller_holds());
    }

    #[test]
    fn exact_transition_mean_example() {
        // y = 2, h = 0.5: 2 e^{-1/2} + (1 - e^{-1/2})
        let mean = transition_mean(&UNIT, 2.0, 0.5);
        assert!((mean - 1.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn exact_transition_matches_analytic_moments() {
        let mut rng = crate::rng::stream_rng(17, &[50]);
        let (y, h) = (2.0, 0.5);
        let draws: Vec<f64> = (0..60_000)
            .map(|_| sample_exact_transition(&UNIT, y, h, &mut rng).unwrap())
            .collect();
        let s = moment_summary(&draws);
        assert!((s.mean - transition_mean(&UNIT, y, h)).abs() < 4.0 * s.se_mean);
        assert!((s.var - transition_var(&UNIT, y, h)).abs() < 4.0 * s.se_var);
    }

    #[test]
    fn exact_transition_long_horizon_is_stationary_gamma() {
        // from y = 0 over a long horizon the draw is Gamma(2 mu / s2, s2 / 2)
        let mut rng = crate::rng::stream_rng(18, &[51]);
        let draws: Vec<f64> = (0..60_000)
            .map(|_| sample_exact_transition(&UNIT, 0.0, 40.0, &mut rng).unwrap())
            .collect();
        let s = moment_summary(&draws);
        assert!((s.mean - 1.0).abs() < 4.0 * s.se_mean);
        assert!((s.var - 0.5).abs() < 4.0 * s.se_var);
    }

    #[test]
    fn zero_drift_slope_uses_limit_formulas() {
        let p = CirParams {
            mu: 1.0,
            gamma: 0.0,
            sigma2: 1.0,
        };
        assert_eq!(transition_mean(&p, 2.0, 0.5), 2.5);
        let mut rng = crate::rng::stream_rng(19, &[52]);
        let draws: Vec<f64> = (0..60_000)
            .map(|_| sample_exact_transition(&p, 2.0, 0.5, &mut rng).unwrap())
            .collect();
        let s = moment_summary(&draws);
        assert!((s.mean - 2.5).abs() < 4.0 * s.se_mean);
        assert!((s.var - transition_var(&p, 2.0, 0.5)).abs() < 4.0 * s.se_var);
    }

    #[test]
    fn euler_path_shape_and_nonnegativity() {
        let mut rng = crate::rng::stream_rng(20, &[53]);
        let p = simulate_path_euler(&UNIT, 0.0, 1.0, 400, &mut rng).unwrap();
        assert_eq!(p.values.len(), 401);
        assert_eq!(p.increments.len(), 400);
        assert!(p.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn euler_mean_approaches_ode_solution() {
        // E[Y_1] = 1 - e^{-1} from y0 = 0
        let target = 1.0 - (-1.0f64).exp();
        let m = 30_000;
        let mut rng = crate::rng::stream_rng(21, &[54]);
        let endpoints: Vec<f64> = (0..m)
            .map(|_| {
                simulate_path_euler(&UNIT, 0.0, 1.0, 500, &mut rng)
                    .unwrap()
                    .values[500]
            })
            .collect();
        let s = moment_summary(&endpoints);
        // 4 Monte Carlo SEs plus first-order discretization slack
        assert!(
            (s.mean - target).abs() < 4.0 * s.se_mean + 2.0 / 500.0,
            "mean {} vs {}",
            s.mean,
            target
        );
    }

    #[test]
    fn noiseless_euler_is_the_ode() {
        let p = CirParams {
            mu: 1.0,
            gamma: -1.0,
            sigma2: 0.0,
        };
        let mut rng = crate::rng::stream_rng(22, &[55]);
        let path = simulate_path_euler(&p, 0.0, 1.0, 4000, &mut rng).unwrap();
        let target = 1.0 - (-1.0f64).exp();
        assert!((path.values[4000] - target).abs() < 2.0 / 4000.0);
    }

    #[test]
    fn tabulation_has_sane_moments_and_no_resampling() {
        let t = tabulate_ltu_limit(&UNIT, 1500, 250, 99).unwrap();
        assert_eq!(t.labels.len(), 2);
        assert_eq!(t.columns[0].len(), 1500);
        assert_eq!(t.meta.resampled, 0);
        let a = &t.summary[0];
        let b = &t.summary[1];
        assert!(a.mean > -5.0 && a.mean < -2.5, "alpha-limit mean {}", a.mean);
        assert!(a.var > 8.0 && a.var < 32.0, "alpha-limit var {}", a.var);
        assert!(b.mean > 0.5 && b.mean < 1.7, "mu-limit mean {}", b.mean);
    }

    #[test]
    fn tabulation_zero_noise_collapses_to_zero_vector() {
        let p = CirParams {
            mu: 1.0,
            gamma: -1.0,
            sigma2: 0.0,
        };
        let t = tabulate_ltu_limit(&p, 8, 200, 1).unwrap();
        for k in 0..2 {
            assert!(t.columns[k].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn tabulation_degenerate_parameters_error_out() {
        // mu = 0, sigma2 = 0: the path is identically zero and the design
        // stays singular through the whole retry budget
        let p = CirParams {
            mu: 0.0,
            gamma: -1.0,
            sigma2: 0.0,
        };
        let e = tabulate_ltu_limit(&p, 2, 50, 1).unwrap_err();
        assert!(matches!(e, Error::SingularDesign { .. }));
    }

    #[test]
    fn explosive_limit_moments() {
        let t = sample_explosive_limit(1.0, 1.0, 200_000, 7).unwrap();
        // mixing variable: Gamma(2, 1/2) has mean 1, variance 1/2
        let z = &t.summary[1];
        assert!((z.mean - 1.0).abs() < 0.01, "z mean {}", z.mean);
        assert!((z.var - 0.5).abs() < 0.015, "z var {}", z.var);
        // the limit draw: symmetric around 0 with variance (4/3) E[Z^{-1}] = 8/3
        let a = &t.summary[0];
        assert!(a.mean.abs() < 0.02, "draw mean {}", a.mean);
        assert!((a.var - 8.0 / 3.0).abs() < 0.08, "draw var {}", a.var);
    }

    #[test]
    fn tabulation_is_reproducible() {
        let a = tabulate_ltu_limit(&UNIT, 64, 50, 5).unwrap();
        let b = tabulate_ltu_limit(&UNIT, 64, 50, 5).unwrap();
        assert_eq!(a.columns, b.columns);
    }
}
