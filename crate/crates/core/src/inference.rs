//! Plug-in and random-weighted-bootstrap inference for the mildly
//! stationary regime: asymptotic covariance, confidence intervals with the
//! slope interval capped at one, sandwich standard errors, the two-sided
//! test of a hypothesized slope, and p-value curves over a slope grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cir::{quantile_sorted, stationary_moments};
use crate::error::{Error, Result};
use crate::estimate::{self, EstimateResult};
use crate::rng::{domain, stream_rng};
use crate::sampling;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided normal critical value for a symmetric interval at `level`.
/// Level 1.0 yields an infinite critical value (the trivial full interval).
pub fn z_for_level(level: f64) -> f64 {
    if level >= 1.0 {
        f64::INFINITY
    } else {
        std_normal().inverse_cdf(0.5 + level / 2.0)
    }
}

/// Two-sided normal p-value of a t-statistic.
pub fn normal_p_value(t: f64) -> f64 {
    2.0 * (1.0 - std_normal().cdf(t.abs()))
}

/// Asymptotic covariance of the rescaled least-squares errors in the mildly
/// stationary regime, built from the first three stationary moments:
/// with Omega = [[m2, m1], [m1, 1]] and S = sigma2 * [[m3, m2], [m2, m1]],
/// returns Omega^{-1} S Omega^{-1}.
pub fn plugin_covariance(mu_hat: f64, sigma2_hat: f64) -> Result<[[f64; 2]; 2]> {
    if !(mu_hat > 0.0 && sigma2_hat > 0.0 && mu_hat.is_finite() && sigma2_hat.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need positive mu and sigma2, got {mu_hat}, {sigma2_hat}"
        )));
    }
    let [m1, m2, m3] = stationary_moments(mu_hat, sigma2_hat);
    let det = m2 - m1 * m1;
    if det <= 1e-12 * m2 {
        return Err(Error::SingularOmega);
    }
    // Omega^{-1} = (1/det) [[1, -m1], [-m1, m2]]
    let oi = [[1.0 / det, -m1 / det], [-m1 / det, m2 / det]];
    let s = [
        [sigma2_hat * m3, sigma2_hat * m2],
        [sigma2_hat * m2, sigma2_hat * m1],
    ];
    let mut half = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            half[i][j] = oi[i][0] * s[0][j] + oi[i][1] * s[1][j];
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            cov[i][j] = half[i][0] * oi[0][j] + half[i][1] * oi[1][j];
        }
    }
    Ok(cov)
}

/// Plug-in interval inference for one fitted series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PluginInference {
    pub cov: [[f64; 2]; 2],
    pub se_alpha: f64,
    pub se_mu: f64,
    pub ci_alpha: (f64, f64),
    pub ci_mu: (f64, f64),
    /// The slope and intercept error rates: (sqrt(n/(1-alpha_hat)), sqrt(n(1-alpha_hat))).
    pub scalings: (f64, f64),
    /// True when the slope interval's upper endpoint was truncated to one.
    pub capped: bool,
    pub level: f64,
}

/// Normal confidence intervals from the plug-in covariance, with the slope
/// error rescaled by sqrt(n/(1-alpha_hat)) and the intercept error by
/// sqrt(n(1-alpha_hat)). Requires alpha_hat < 1; the slope interval's upper
/// endpoint is truncated at one.
pub fn plugin_ci(est: &EstimateResult, level: f64) -> Result<PluginInference> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidInput(format!("level {level}")));
    }
    if est.alpha_hat >= 1.0 {
        return Err(Error::AlphaAtOrAboveOne {
            alpha: est.alpha_hat,
        });
    }
    let cov = plugin_covariance(est.mu_hat, est.sigma2_hat)?;
    let n = est.n as f64;
    let one_minus = 1.0 - est.alpha_hat;
    let se_alpha = (cov[0][0] * one_minus / n).sqrt();
    let se_mu = (cov[1][1] / (n * one_minus)).sqrt();
    let z = z_for_level(level);
    let raw_hi = est.alpha_hat + z * se_alpha;
    let capped = raw_hi > 1.0;
    Ok(PluginInference {
        cov,
        se_alpha,
        se_mu,
        ci_alpha: (est.alpha_hat - z * se_alpha, raw_hi.min(1.0)),
        ci_mu: (est.mu_hat - z * se_mu, est.mu_hat + z * se_mu),
        scalings: ((n / one_minus).sqrt(), (n * one_minus).sqrt()),
        capped,
        level,
    })
}

/// Heteroskedasticity-robust (sandwich) standard errors for one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichSe {
    pub se_alpha: f64,
    pub se_mu: f64,
    /// Average outer product of the regressors (X_{t-1}, 1).
    pub m_hat: [[f64; 2]; 2],
    /// Residual-squared-weighted average outer product.
    pub s_hat: [[f64; 2]; 2],
}

/// M_hat^{-1} S_hat M_hat^{-1} / n standard errors, where M_hat and S_hat
/// average the (un)weighted regressor outer products. Residuals are
/// recomputed from the fitted coefficients.
pub fn sandwich_se(values: &[f64], est: &EstimateResult) -> Result<SandwichSe> {
    let n = values.len().saturating_sub(1);
    if n < 3 {
        return Err(Error::InsufficientData {
            got: values.len(),
            need: 4,
        });
    }
    let nf = n as f64;
    let (mut mxx, mut mx) = (0.0, 0.0);
    let (mut sxx, mut sx, mut s1) = (0.0, 0.0, 0.0);
    for w in values.windows(2) {
        let x = w[0];
        let r = f64::mul_add(-est.alpha_hat, x, w[1]) - est.mu_hat;
        let r2 = r * r;
        mxx += x * x;
        mx += x;
        sxx += r2 * x * x;
        sx += r2 * x;
        s1 += r2;
    }
    let m_hat = [[mxx / nf, mx / nf], [mx / nf, 1.0]];
    let s_hat = [[sxx / nf, sx / nf], [sx / nf, s1 / nf]];
    let det = m_hat[0][0] - m_hat[0][1] * m_hat[0][1];
    if det <= 1e-12 * m_hat[0][0] {
        return Err(Error::DegenerateDesign);
    }
    let mi = [[1.0 / det, -m_hat[0][1] / det], [-m_hat[0][1] / det, m_hat[0][0] / det]];
    let mut half = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            half[i][j] = mi[i][0] * s_hat[0][j] + mi[i][1] * s_hat[1][j];
        }
    }
    let mut v = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            v[i][j] = (half[i][0] * mi[0][j] + half[i][1] * mi[1][j]) / nf;
        }
    }
    Ok(SandwichSe {
        se_alpha: v[0][0].max(0.0).sqrt(),
        se_mu: v[1][1].max(0.0).sqrt(),
        m_hat,
        s_hat,
    })
}

/// Distribution of the random bootstrap weights: positive, mean one,
/// variance one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDist {
    /// Unit-rate exponential weights (the default).
    Exp1,
    /// All weights exactly one: every draw reproduces the base fit
    /// bit-for-bit. Testing only.
    Degenerate1,
}

impl WeightDist {
    pub fn label(&self) -> &'static str {
        match self {
            WeightDist::Exp1 => "exp1",
            WeightDist::Degenerate1 => "degenerate1",
        }
    }
}

/// Random-weighted least-squares resamples of one fitted series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapDraws {
    pub weights_dist: WeightDist,
    pub b: usize,
    /// Transition pairs in the underlying series.
    pub n: usize,
    /// The unweighted fit (alpha_hat, mu_hat) the draws are centered on.
    pub base: [f64; 2],
    /// Per-replication weighted fits (alpha, mu), uncapped.
    pub draws: Vec<[f64; 2]>,
    /// Replications redrawn because their weighted design was singular.
    pub resampled: usize,
    pub seed: u64,
}

impl BootstrapDraws {
    /// Componentwise mean of the draws, accumulated in double-double form so
    /// that identical draws average to themselves exactly.
    pub fn mean(&self) -> [f64; 2] {
        let b = crate::dd::Dd::from(self.draws.len() as f64);
        let mut s0 = crate::dd::DdSum::new();
        let mut s1 = crate::dd::DdSum::new();
        for d in &self.draws {
            s0.add(d[0]);
            s1.add(d[1]);
        }
        [s0.total().div(b).value(), s1.total().div(b).value()]
    }

    /// Sample covariance of the raw draws.
    pub fn cov(&self) -> [[f64; 2]; 2] {
        let b = self.draws.len() as f64;
        let m = self.mean();
        let mut c = [[0.0; 2]; 2];
        for d in &self.draws {
            let e = [d[0] - m[0], d[1] - m[1]];
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += e[i] * e[j];
                }
            }
        }
        let denom = (b - 1.0).max(1.0);
        for row in &mut c {
            for v in row.iter_mut() {
                *v /= denom;
            }
        }
        c
    }

    /// Bootstrap standard deviations (sd_alpha, sd_mu).
    pub fn sd(&self) -> (f64, f64) {
        let c = self.cov();
        (c[0][0].sqrt(), c[1][1].sqrt())
    }

    fn sorted_component(&self, k: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.draws.iter().map(|d| d[k]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

const BOOTSTRAP_RETRY_BUDGET: usize = 100;

/// Random-weighted bootstrap: B weighted least-squares re-fits of `values`,
/// each with an independent weight vector drawn from its own stream, so the
/// result is reproducible for a given seed at any thread count. Weighted
/// designs that come out singular are redrawn from fresh streams and counted.
pub fn bootstrap(
    values: &[f64],
    b: usize,
    weights_dist: WeightDist,
    seed: u64,
) -> Result<BootstrapDraws> {
    if b == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let base = estimate::ols(values)?;
    let n = base.n;
    let results: Vec<Result<([f64; 2], usize)>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut retries = 0usize;
            loop {
                let mut rng = stream_rng(seed, &[domain::BOOTSTRAP, rep, retries as u64]);
                let fit = match weights_dist {
                    WeightDist::Degenerate1 => estimate::weighted_fit(values, |_, _| 1.0),
                    WeightDist::Exp1 => {
                        let w: Vec<f64> = (0..n).map(|_| sampling::exp1(&mut rng)).collect();
                        estimate::weighted_fit(values, |t, _| w[t])
                    }
                };
                match fit {
                    Ok(f) => return Ok(([f.alpha.value(), f.mu.value()], retries)),
                    Err(Error::DegenerateDesign) if retries < BOOTSTRAP_RETRY_BUDGET => {
                        retries += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let mut draws = Vec::with_capacity(b);
    let mut resampled = 0usize;
    for r in results {
        let (d, retries) = r?;
        draws.push(d);
        resampled += retries;
    }
    Ok(BootstrapDraws {
        weights_dist,
        b,
        n,
        base: [base.alpha_hat, base.mu_hat],
        draws,
        resampled,
        seed,
    })
}

/// Bootstrap confidence intervals: the default normal approximation
/// (base +- z * bootstrap sd) plus raw percentile intervals; slope upper
/// endpoints truncated at one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub level: f64,
    pub ci_alpha: (f64, f64),
    pub ci_mu: (f64, f64),
    pub se_alpha: f64,
    pub se_mu: f64,
    /// Empirical-quantile intervals, for comparison with the normal form.
    pub percentile_alpha: (f64, f64),
    pub percentile_mu: (f64, f64),
    pub capped: bool,
}

pub fn bootstrap_ci(draws: &BootstrapDraws, level: f64) -> Result<BootstrapCi> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidInput(format!("level {level}")));
    }
    if draws.draws.is_empty() {
        return Err(Error::InsufficientData { got: 0, need: 1 });
    }
    let (sd_a, sd_m) = draws.sd();
    let z = z_for_level(level);
    let raw_hi = draws.base[0] + z * sd_a;
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    let sa = draws.sorted_component(0);
    let sm = draws.sorted_component(1);
    Ok(BootstrapCi {
        level,
        ci_alpha: (draws.base[0] - z * sd_a, raw_hi.min(1.0)),
        ci_mu: (draws.base[1] - z * sd_m, draws.base[1] + z * sd_m),
        se_alpha: sd_a,
        se_mu: sd_m,
        percentile_alpha: (
            quantile_sorted(&sa, lo_p),
            quantile_sorted(&sa, hi_p).min(1.0),
        ),
        percentile_mu: (quantile_sorted(&sm, lo_p), quantile_sorted(&sm, hi_p)),
        capped: raw_hi > 1.0,
    })
}

/// Which standard error studentizes the slope test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    PluginSe,
    BootstrapSe,
    SandwichSe,
}

impl TestMethod {
    pub fn label(&self) -> &'static str {
        match self {
            TestMethod::PluginSe => "plugin",
            TestMethod::BootstrapSe => "bootstrap",
            TestMethod::SandwichSe => "sandwich",
        }
    }
}

/// Options shared by the test and p-value-curve operations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferOptions {
    /// Bootstrap replications (used by the bootstrap standard error).
    pub b: usize,
    pub weights: WeightDist,
    pub seed: u64,
    /// Levels filled into the decision map.
    pub levels: Vec<f64>,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            b: 1000,
            weights: WeightDist::Exp1,
            seed: 0,
            levels: vec![0.01, 0.05, 0.10],
        }
    }
}

/// Two-sided test of slope = alpha0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub alpha0: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Standard deviation of the slope estimate used in the denominator.
    pub sd_alpha: f64,
    /// (level, reject) pairs; reject iff p_value < level.
    pub decision_at: Vec<(f64, bool)>,
}

/// Standard deviation of the slope estimate under the chosen method, with
/// the base fit it belongs to.
fn slope_sd(values: &[f64], method: TestMethod, opts: &InferOptions) -> Result<(EstimateResult, f64)> {
    let est = estimate::ols(values)?;
    let sd = match method {
        TestMethod::PluginSe => plugin_ci(&est, 0.9)?.se_alpha,
        TestMethod::SandwichSe => sandwich_se(values, &est)?.se_alpha,
        TestMethod::BootstrapSe => {
            let draws = bootstrap(values, opts.b, opts.weights, opts.seed)?;
            draws.sd().0
        }
    };
    Ok((est, sd))
}

fn test_from_sd(est_alpha: f64, sd: f64, alpha0: f64, method: TestMethod, levels: &[f64]) -> TestResult {
    let t = (est_alpha - alpha0) / sd;
    let p = normal_p_value(t);
    TestResult {
        alpha0,
        t_stat: t,
        p_value: p,
        method,
        sd_alpha: sd,
        decision_at: levels.iter().map(|&l| (l, p < l)).collect(),
    }
}

/// Test the hypothesis slope = alpha0 (alpha0 strictly below one) with a
/// two-sided normal p-value.
pub fn test_alpha(
    values: &[f64],
    alpha0: f64,
    method: TestMethod,
    opts: &InferOptions,
) -> Result<TestResult> {
    if !(alpha0 < 1.0) {
        return Err(Error::InvalidInput(format!(
            "hypothesized slope must be below one, got {alpha0}"
        )));
    }
    let (est, sd) = slope_sd(values, method, opts)?;
    Ok(test_from_sd(est.alpha_hat, sd, alpha0, method, &opts.levels))
}

/// Default hypothesis grid: 0.700 to 0.999 in steps of 0.001.
pub fn default_alpha_grid() -> Vec<f64> {
    (700..=999).map(|i| i as f64 / 1000.0).collect()
}

/// A p-value curve over a grid of hypothesized slopes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvalueCurve {
    pub method: TestMethod,
    pub sd_alpha: f64,
    pub alpha_hat: f64,
    /// (alpha0, p) pairs in grid order.
    pub points: Vec<(f64, f64)>,
    /// Maximal grid runs where p >= 0.10. A run reaching the top of the
    /// grid is reported with upper endpoint 1.0: the non-rejection set
    /// extends through the unit root, where the test cannot reject.
    pub region10: Vec<(f64, f64)>,
}

/// Evaluate the slope test over a grid. The standard deviation is computed
/// once (it does not depend on the hypothesized value), so the curve costs
/// one fit plus one pass over the grid.
pub fn pvalue_curve(
    values: &[f64],
    grid: &[f64],
    method: TestMethod,
    opts: &InferOptions,
) -> Result<PvalueCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty hypothesis grid".into()));
    }
    if let Some(bad) = grid.iter().find(|&&a| !(a < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "hypothesized slope must be below one, got {bad}"
        )));
    }
    let (est, sd) = slope_sd(values, method, opts)?;
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&a0| (a0, normal_p_value((est.alpha_hat - a0) / sd)))
        .collect();
    let mut region10 = Vec::new();
    let mut run_start: Option<f64> = None;
    for (i, &(a0, p)) in points.iter().enumerate() {
        let inside = p >= 0.10;
        if inside && run_start.is_none() {
            run_start = Some(a0);
        }
        let closes = run_start.is_some() && (!inside || i + 1 == points.len());
        if closes {
            let lo = run_start.take().unwrap();
            let hi = if inside { 1.0 } else { points[i - 1].0 };
            region10.push((lo, hi));
        }
    }
    Ok(PvalueCurve {
        method,
        sd_alpha: sd,
        alpha_hat: est.alpha_hat,
        points,
        region10,
    })
}
