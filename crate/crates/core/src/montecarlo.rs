//! Replication harness for the simulation studies: limiting-distribution
//! panels, interval coverage, raw and size-corrected power, bubble-episode
//! statistics, and scaling checks against the linear AR(1) benchmark.
//!
//! Every study is replication-parallel with one random stream per
//! replication, so reports are bit-identical at any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{marginal_mean, simulate_with_alpha, AffineSpec, RegimeSpec};
use crate::cir::quantile_sorted;
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::estimate::{self, Method};
use crate::inference::{self, TestMethod, WeightDist};
use crate::report::{histogram, Histogram};
use crate::rng::{derive_seed, domain, stream_rng};
use crate::sampling::{self, moment_summary};

/// Shared experiment knobs. Studies read the fields they need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: AffineSpec,
    pub regime: RegimeSpec,
    /// Transitions per trajectory.
    pub n: usize,
    /// Monte Carlo replications.
    pub m: usize,
    /// Bootstrap replications, where a study uses the bootstrap.
    pub b: usize,
    pub seed: u64,
    pub x0: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.m == 0 {
            return Err(Error::InvalidInput("need at least one replication".into()));
        }
        if self.b == 0 {
            return Err(Error::InvalidInput(
                "need at least one bootstrap replication".into(),
            ));
        }
        Ok(())
    }
}

/// Raw two-component draws plus their first two sample moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Panel {
    pub labels: [String; 2],
    pub draws: Vec<[f64; 2]>,
    pub mean: [f64; 2],
    /// Sample covariance; absent when fewer than two draws.
    pub cov: Option<[[f64; 2]; 2]>,
}

impl Panel {
    pub fn new(labels: [String; 2], draws: Vec<[f64; 2]>) -> Panel {
        let count = draws.len();
        let mut mean = [0.0; 2];
        for d in &draws {
            mean[0] += d[0];
            mean[1] += d[1];
        }
        if count > 0 {
            mean[0] /= count as f64;
            mean[1] /= count as f64;
        }
        let cov = if count >= 2 {
            let mut c = [[0.0; 2]; 2];
            for d in &draws {
                let e = [d[0] - mean[0], d[1] - mean[1]];
                for i in 0..2 {
                    for j in 0..2 {
                        c[i][j] += e[i] * e[j];
                    }
                }
            }
            for row in &mut c {
                for v in row.iter_mut() {
                    *v /= (count - 1) as f64;
                }
            }
            Some(c)
        } else {
            None
        };
        Panel {
            labels,
            draws,
            mean,
            cov,
        }
    }

    pub fn count(&self) -> usize {
        self.draws.len()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[k]).collect()
    }
}

/// Local-to-unity sampling study: the law of (n(alpha_hat - alpha_n),
/// mu_hat - mu_n) under ordinary least squares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtuStudy {
    pub gamma: f64,
    pub alpha_n: f64,
    pub mu_n: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub panel: Panel,
    pub histograms: [Histogram; 2],
}

/// Simulate, fit, and rescale under a local-to-unity slope: per replication
/// the draw is (n(alpha_hat - alpha_n), mu_hat - mu_n), errors taken from
/// the full-precision fit.
pub fn dist_study_ltu(cfg: &ExperimentConfig) -> Result<LtuStudy> {
    cfg.validate()?;
    let gamma = match cfg.regime {
        RegimeSpec::LocalToUnity { gamma } => gamma,
        _ => {
            return Err(Error::InvalidInput(
                "this study requires a local-to-unity regime".into(),
            ))
        }
    };
    let alpha_n = cfg.regime.resolve_alpha(cfg.n)?.alpha_n;
    let mu_n = cfg.spec.mu_n(alpha_n);
    let nf = cfg.n as f64;
    let draws: Vec<Result<[f64; 2]>> = (0..cfg.m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, &[domain::STUDY_LTU, i]);
            let traj = simulate_with_alpha(&cfg.spec, alpha_n, cfg.n, cfg.x0, &mut rng)?;
            let fit = estimate::fit_dd(&traj.values, Method::Ols)?;
            let (ea, em) = estimate::fit_errors(&fit, alpha_n, mu_n);
            Ok([nf * ea, em])
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let panel = Panel::new(
        ["n_alpha_err".into(), "mu_err".into()],
        draws,
    );
    let histograms = [
        histogram(&panel.column(0), 60)?,
        histogram(&panel.column(1), 60)?,
    ];
    Ok(LtuStudy {
        gamma,
        alpha_n,
        mu_n,
        n: cfg.n,
        m: cfg.m,
        seed: cfg.seed,
        panel,
        histograms,
    })
}

/// Mildly stationary sampling study: benchmark rescaling, feasible plug-in
/// rescaling, and one designated trajectory's bootstrap panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MildStudy {
    pub alpha_n: f64,
    pub kn: f64,
    pub mu_n: f64,
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub seed: u64,
    /// (sqrt(n k_n)(alpha_hat - alpha_n), sqrt(n / k_n)(mu_hat - mu_n)).
    pub benchmark: Panel,
    /// The same errors under the feasible rescaling
    /// (sqrt(n/(1-alpha_hat)), sqrt(n(1-alpha_hat))); fits with
    /// alpha_hat >= 1 are skipped and counted.
    pub plugin: Panel,
    pub plugin_skipped: usize,
    /// Bootstrap draws of replication 0's trajectory, centered on its fit
    /// and rescaled like the benchmark panel.
    pub bootstrap: Panel,
    /// Asymptotic covariance at the family's limit parameters.
    pub theory_cov: [[f64; 2]; 2],
}

pub fn dist_study_mild(cfg: &ExperimentConfig) -> Result<MildStudy> {
    cfg.validate()?;
    match cfg.regime {
        RegimeSpec::MildlyIntegrated { gamma_sign: -1, .. } => {}
        _ => {
            return Err(Error::InvalidInput(
                "this study requires a mildly integrated regime with negative drift".into(),
            ))
        }
    }
    let resolved = cfg.regime.resolve_alpha(cfg.n)?;
    let (alpha_n, kn) = (resolved.alpha_n, resolved.kn.expect("mild regime has kn"));
    let mu_n = cfg.spec.mu_n(alpha_n);
    let nf = cfg.n as f64;
    let bench_scale = ((nf * kn).sqrt(), (nf / kn).sqrt());
    let reps: Vec<Result<([f64; 2], Option<[f64; 2]>)>> = (0..cfg.m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, &[domain::STUDY_MILD, i]);
            let traj = simulate_with_alpha(&cfg.spec, alpha_n, cfg.n, cfg.x0, &mut rng)?;
            let fit = estimate::fit_dd(&traj.values, Method::Ols)?;
            let (ea, em) = estimate::fit_errors(&fit, alpha_n, mu_n);
            let bench = [bench_scale.0 * ea, bench_scale.1 * em];
            let alpha_hat = fit.alpha.value();
            let plug = if alpha_hat < 1.0 {
                let s = ((nf / (1.0 - alpha_hat)).sqrt(), (nf * (1.0 - alpha_hat)).sqrt());
                Some([s.0 * ea, s.1 * em])
            } else {
                None
            };
            Ok((bench, plug))
        })
        .collect();
    let mut bench_draws = Vec::with_capacity(cfg.m);
    let mut plugin_draws = Vec::with_capacity(cfg.m);
    let mut plugin_skipped = 0usize;
    for r in reps {
        let (bench, plug) = r?;
        bench_draws.push(bench);
        match plug {
            Some(p) => plugin_draws.push(p),
            None => plugin_skipped += 1,
        }
    }
    // designated trajectory for the single-path bootstrap panel
    let mut rng0 = stream_rng(cfg.seed, &[domain::STUDY_MILD, 0]);
    let traj0 = simulate_with_alpha(&cfg.spec, alpha_n, cfg.n, cfg.x0, &mut rng0)?;
    let boot_seed = derive_seed(cfg.seed, &[domain::STUDY_MILD, 0, 1]);
    let boot = inference::bootstrap(&traj0.values, cfg.b, WeightDist::Exp1, boot_seed)?;
    let boot_draws: Vec<[f64; 2]> = boot
        .draws
        .iter()
        .map(|d| {
            [
                bench_scale.0 * (d[0] - boot.base[0]),
                bench_scale.1 * (d[1] - boot.base[1]),
            ]
        })
        .collect();
    let theory_cov =
        inference::plugin_covariance(cfg.spec.mu_limit(), cfg.spec.sigma2_limit())?;
    let labels = |tag: &str| -> [String; 2] {
        [format!("alpha_err_{tag}"), format!("mu_err_{tag}")]
    };
    Ok(MildStudy {
        alpha_n,
        kn,
        mu_n,
        n: cfg.n,
        m: cfg.m,
        b: cfg.b,
        seed: cfg.seed,
        benchmark: Panel::new(labels("benchmark"), bench_draws),
        plugin: Panel::new(labels("plugin"), plugin_draws),
        plugin_skipped,
        bootstrap: Panel::new(labels("bootstrap"), boot_draws),
        theory_cov,
    })
}

/// Poisson-count transition with the conditional mean carried in
/// double-double form.
///
/// At or below 2^53 the plain sampler's draws are exactly representable, so
/// it is called directly and the extended state stays bit-identical to a
/// plain one. Above that level a Poisson draw is indistinguishable from its
/// normal approximation (relative skewness under 1e-8), and the mean is kept
/// in the extended state because a plain f64 would round it at a granularity
/// comparable to the noise itself once the chain passes ~1e31.
fn inarch_step_dd<R: rand::Rng + ?Sized>(mu: f64, alpha: Dd, x: Dd, rng: &mut R) -> Dd {
    const EXACT_LEVEL: f64 = 9_007_199_254_740_992.0; // 2^53
    let lambda = alpha.mul(x).add_f64(mu);
    if lambda.hi <= EXACT_LEVEL {
        Dd::from(sampling::poisson(rng, lambda.value().max(0.0)))
    } else {
        let noise = lambda.value().sqrt() * sampling::normal(rng);
        let next = lambda.add_f64(noise);
        if next.hi < 0.0 {
            Dd::ZERO
        } else {
            next
        }
    }
}

/// Mildly explosive sampling study: the law of
/// k_n alpha_n^{n/2} (alpha_hat - alpha_n) for the Poisson count family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplosiveStudy {
    pub alpha_n: f64,
    pub kn: f64,
    pub mu_n: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// (k_n alpha_n^{n/2} (alpha_hat - alpha_n), mu_hat - mu_n) per
    /// replication; the intercept error is left unscaled because its
    /// variance diverges with n under explosive drift.
    pub panel: Panel,
    /// Limit law of the scaled slope error: mean zero.
    pub target_mean: f64,
    /// Limit variance 8 sigma^2 / (3 (2 mu - sigma^2)) of the scaled slope
    /// error, finite when 2 mu > sigma^2.
    pub target_var: f64,
}

/// Simulate, fit, and rescale under mildly explosive drift. The chain's
/// state and the least-squares solve are both carried in double-double
/// precision: past roughly 1e31 the conditional standard deviation
/// sqrt(alpha x + mu) drops below one ulp of a plain f64 state, so plain
/// simulation would overlay rounding noise of the same order as the model
/// noise and visibly inflate the measured limit variance.
pub fn dist_study_explosive(cfg: &ExperimentConfig) -> Result<ExplosiveStudy> {
    cfg.validate()?;
    match cfg.regime {
        RegimeSpec::MildlyIntegrated { gamma_sign: 1, .. } => {}
        _ => {
            return Err(Error::InvalidInput(
                "this study requires a mildly integrated regime with positive drift".into(),
            ))
        }
    }
    let mu = match cfg.spec {
        AffineSpec::Inarch { mu } => mu,
        _ => {
            return Err(Error::InvalidInput(
                "the extended-precision explosive study is implemented for the Poisson count family"
                    .into(),
            ))
        }
    };
    let sigma2 = cfg.spec.sigma2_limit();
    if !(2.0 * mu > sigma2) {
        return Err(Error::InvalidInput(format!(
            "the scaled slope error's limit variance requires 2 mu > sigma^2, got mu = {mu}, sigma^2 = {sigma2}"
        )));
    }
    if !(cfg.x0.is_finite() && cfg.x0 >= 0.0 && cfg.x0.fract() == 0.0) {
        return Err(Error::InvalidInput(format!(
            "count chains need a nonnegative integer start, got {}",
            cfg.x0
        )));
    }
    let resolved = cfg.regime.resolve_alpha(cfg.n)?;
    let (alpha_n, kn) = (resolved.alpha_n, resolved.kn.expect("mild regime has kn"));
    let norm = kn * alpha_n.powf(cfg.n as f64 / 2.0);
    if !norm.is_finite() {
        return Err(Error::InvalidInput(format!(
            "slope normalization overflowed: kn = {kn}, n = {}",
            cfg.n
        )));
    }
    let alpha_dd = Dd::from(alpha_n);
    let mu_n = cfg.spec.mu_n(alpha_n);
    let draws: Vec<Result<[f64; 2]>> = (0..cfg.m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, &[domain::STUDY_EXPLOSIVE, i]);
            let mut states = Vec::with_capacity(cfg.n + 1);
            let mut x = Dd::from(cfg.x0);
            states.push(x);
            for _ in 0..cfg.n {
                x = inarch_step_dd(mu, alpha_dd, x, &mut rng);
                if !x.hi.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "state overflowed the floating-point range at slope {alpha_n}"
                    )));
                }
                states.push(x);
            }
            let fit = estimate::ols_dd_states(&states)?;
            let ea = fit.alpha.sub(alpha_dd).value();
            let em = fit.mu.sub(Dd::from(mu_n)).value();
            Ok([norm * ea, em])
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let panel = Panel::new(["scaled_alpha_err".into(), "mu_err".into()], draws);
    Ok(ExplosiveStudy {
        alpha_n,
        kn,
        mu_n,
        n: cfg.n,
        m: cfg.m,
        seed: cfg.seed,
        panel,
        target_mean: 0.0,
        target_var: 8.0 * sigma2 / (3.0 * (2.0 * mu - sigma2)),
    })
}

/// Interval coverage at one nominal level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageCell {
    pub level: f64,
    pub plugin_alpha: f64,
    pub plugin_mu: f64,
    pub bootstrap_alpha: f64,
    pub bootstrap_mu: f64,
    /// Replications where the plug-in interval existed (alpha_hat < 1).
    pub plugin_used: usize,
}

/// Empirical coverage of plug-in and bootstrap-normal intervals for the
/// true (alpha_n, mu_n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageStudy {
    pub alpha_n: f64,
    pub kn: Option<f64>,
    pub mu_n: f64,
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub seed: u64,
    pub plugin_skipped: usize,
    pub cells: Vec<CoverageCell>,
}

pub fn coverage_study(cfg: &ExperimentConfig, levels: &[f64]) -> Result<CoverageStudy> {
    cfg.validate()?;
    if levels.is_empty() {
        return Err(Error::InvalidInput("no coverage levels requested".into()));
    }
    if let Some(bad) = levels.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
        return Err(Error::InvalidInput(format!("coverage level {bad}")));
    }
    let resolved = cfg.regime.resolve_alpha(cfg.n)?;
    let alpha_n = resolved.alpha_n;
    if alpha_n >= 1.0 {
        return Err(Error::NotStationary { alpha: alpha_n });
    }
    let mu_n = cfg.spec.mu_n(alpha_n);
    type RepHits = (Option<Vec<(bool, bool)>>, Vec<(bool, bool)>);
    let reps: Vec<Result<RepHits>> = (0..cfg.m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, &[domain::COVERAGE, i]);
            let traj = simulate_with_alpha(&cfg.spec, alpha_n, cfg.n, cfg.x0, &mut rng)?;
            let est = estimate::ols(&traj.values)?;
            let plugin_hits = if est.alpha_hat < 1.0 {
                let mut hits = Vec::with_capacity(levels.len());
                let mut ok = true;
                for &level in levels {
                    match inference::plugin_ci(&est, level) {
                        Ok(ci) => hits.push((
                            ci.ci_alpha.0 <= alpha_n && alpha_n <= ci.ci_alpha.1,
                            ci.ci_mu.0 <= mu_n && mu_n <= ci.ci_mu.1,
                        )),
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    Some(hits)
                } else {
                    None
                }
            } else {
                None
            };
            let boot_seed = derive_seed(cfg.seed, &[domain::COVERAGE, i, 1]);
            let draws = inference::bootstrap(&traj.values, cfg.b, WeightDist::Exp1, boot_seed)?;
            let boot_hits = levels
                .iter()
                .map(|&level| {
                    let ci = inference::bootstrap_ci(&draws, level)?;
                    Ok((
                        ci.ci_alpha.0 <= alpha_n && alpha_n <= ci.ci_alpha.1,
                        ci.ci_mu.0 <= mu_n && mu_n <= ci.ci_mu.1,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((plugin_hits, boot_hits))
        })
        .collect();
    let mut plugin_counts = vec![(0usize, 0usize); levels.len()];
    let mut boot_counts = vec![(0usize, 0usize); levels.len()];
    let mut plugin_used = 0usize;
    for r in reps {
        let (p, b) = r?;
        if let Some(hits) = p {
            plugin_used += 1;
            for (k, (ha, hm)) in hits.into_iter().enumerate() {
                plugin_counts[k].0 += ha as usize;
                plugin_counts[k].1 += hm as usize;
            }
        }
        for (k, (ha, hm)) in b.into_iter().enumerate() {
            boot_counts[k].0 += ha as usize;
            boot_counts[k].1 += hm as usize;
        }
    }
    let cells = levels
        .iter()
        .enumerate()
        .map(|(k, &level)| CoverageCell {
            level,
            plugin_alpha: plugin_counts[k].0 as f64 / plugin_used.max(1) as f64,
            plugin_mu: plugin_counts[k].1 as f64 / plugin_used.max(1) as f64,
            bootstrap_alpha: boot_counts[k].0 as f64 / cfg.m as f64,
            bootstrap_mu: boot_counts[k].1 as f64 / cfg.m as f64,
            plugin_used,
        })
        .collect();
    Ok(CoverageStudy {
        alpha_n,
        kn: resolved.kn,
        mu_n,
        n: cfg.n,
        m: cfg.m,
        b: cfg.b,
        seed: cfg.seed,
        plugin_skipped: cfg.m - plugin_used,
        cells,
    })
}

/// Rejection rates of the two-sided slope test along a design grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPoint {
    /// True slope of the simulated cell.
    pub alpha: f64,
    /// Rejection rate at the nominal 10% normal critical value.
    pub raw: f64,
    /// Rejection rate at the empirical critical value calibrated on the
    /// alpha = alpha0 cell.
    pub corrected: f64,
    /// Replications where this method's standard error was unavailable
    /// (counted as rejections).
    pub unavailable: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerCurve {
    pub alpha0: f64,
    pub method: TestMethod,
    /// Empirical 90% quantile of |t| under the null cell.
    pub critical_corrected: f64,
    pub points: Vec<PowerPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerStudy {
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub curves: Vec<PowerCurve>,
}

/// The default power-design grid: 0.80 to 1.00 in steps of 0.004.
pub fn default_power_grid() -> Vec<f64> {
    (0..=50).map(|i| 0.80 + 0.004 * i as f64).collect()
}

/// Simulate the test's rejection rate over `alpha_grid` (plus every null
/// point), for each hypothesized alpha0 and for the plug-in and bootstrap
/// standard errors. A replication whose plug-in scale is unavailable
/// (slope estimate at or above one) counts as a rejection.
pub fn power_study(
    cfg: &ExperimentConfig,
    alpha0_values: &[f64],
    alpha_grid: &[f64],
) -> Result<PowerStudy> {
    cfg.validate()?;
    if alpha0_values.is_empty() {
        return Err(Error::InvalidInput("no null slopes requested".into()));
    }
    if let Some(bad) = alpha0_values.iter().find(|&&a| !(a < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "null slope must be below one, got {bad}"
        )));
    }
    let mut grid: Vec<f64> = alpha_grid.to_vec();
    grid.extend_from_slice(alpha0_values);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidInput("grid slopes must be positive".into()));
    }
    // one simulation pass per cell: record what every test needs
    struct RepStat {
        alpha_hat: f64,
        sd_plugin: Option<f64>,
        sd_boot: f64,
    }
    let mut cells: Vec<Vec<RepStat>> = Vec::with_capacity(grid.len());
    for (ci, &alpha) in grid.iter().enumerate() {
        let stats: Vec<Result<RepStat>> = (0..cfg.m as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(cfg.seed, &[domain::POWER, ci as u64, rep]);
                let traj = simulate_with_alpha(&cfg.spec, alpha, cfg.n, cfg.x0, &mut rng)?;
                let est = estimate::ols(&traj.values)?;
                let sd_plugin = inference::plugin_ci(&est, 0.9).ok().map(|p| p.se_alpha);
                let boot_seed = derive_seed(cfg.seed, &[domain::POWER, ci as u64, rep, 1]);
                let draws =
                    inference::bootstrap(&traj.values, cfg.b, WeightDist::Exp1, boot_seed)?;
                Ok(RepStat {
                    alpha_hat: est.alpha_hat,
                    sd_plugin,
                    sd_boot: draws.sd().0,
                })
            })
            .collect();
        cells.push(stats.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let z10 = inference::z_for_level(0.90);
    let abs_t = |stat: &RepStat, alpha0: f64, method: TestMethod| -> (f64, bool) {
        match method {
            TestMethod::PluginSe => match stat.sd_plugin {
                Some(sd) => ((stat.alpha_hat - alpha0).abs() / sd, false),
                None => (f64::INFINITY, true),
            },
            _ => ((stat.alpha_hat - alpha0).abs() / stat.sd_boot, false),
        }
    };
    let mut curves = Vec::new();
    for &alpha0 in alpha0_values {
        let null_idx = grid
            .iter()
            .position(|&a| a == alpha0)
            .expect("null point was inserted into the grid");
        for method in [TestMethod::PluginSe, TestMethod::BootstrapSe] {
            let mut null_ts: Vec<f64> = cells[null_idx]
                .iter()
                .map(|s| abs_t(s, alpha0, method).0)
                .collect();
            null_ts.sort_by(f64::total_cmp);
            let critical = quantile_sorted(&null_ts, 0.90);
            let points = grid
                .iter()
                .enumerate()
                .map(|(ci, &alpha)| {
                    let mut raw = 0usize;
                    let mut corrected = 0usize;
                    let mut unavailable = 0usize;
                    for s in &cells[ci] {
                        let (t, missing) = abs_t(s, alpha0, method);
                        raw += (t > z10) as usize;
                        corrected += (t > critical) as usize;
                        unavailable += missing as usize;
                    }
                    PowerPoint {
                        alpha,
                        raw: raw as f64 / cfg.m as f64,
                        corrected: corrected as f64 / cfg.m as f64,
                        unavailable,
                    }
                })
                .collect();
            curves.push(PowerCurve {
                alpha0,
                method,
                critical_corrected: critical,
                points,
            });
        }
    }
    Ok(PowerStudy {
        n: cfg.n,
        m: cfg.m,
        b: cfg.b,
        seed: cfg.seed,
        grid,
        curves,
    })
}

/// Block-maximum bubble statistics for a mildly stationary trajectory and
/// its constant-variance linear AR(1) comparator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BubbleStudy {
    pub alpha_n: f64,
    pub kn: f64,
    pub marginal_mean: f64,
    pub threshold: f64,
    pub block_count: usize,
    pub block_len: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// P(at least one block maximum exceeds the threshold).
    pub episode_rate: f64,
    /// Among threshold-exceeding blocks, the fraction whose within-block
    /// least-squares slope is at most one.
    pub subunit_rate: f64,
    pub exceeding_blocks: usize,
    /// Exceeding blocks whose within-block design was degenerate
    /// (excluded from the fraction's denominator).
    pub degenerate_blocks: usize,
    /// Episode rate of a linear AR(1) with the same slope and intercept and
    /// constant innovation variance sigma2_limit.
    pub comparator_rate: f64,
    pub comparator: AffineSpec,
}

pub fn bubble_study(
    cfg: &ExperimentConfig,
    block_count: usize,
    threshold_multiple: f64,
) -> Result<BubbleStudy> {
    cfg.validate()?;
    match cfg.regime {
        RegimeSpec::MildlyIntegrated { gamma_sign: -1, .. } => {}
        _ => {
            return Err(Error::InvalidInput(
                "bubble statistics require a mildly integrated regime with negative drift"
                    .into(),
            ))
        }
    }
    if block_count == 0 || cfg.n % block_count != 0 {
        return Err(Error::InvalidInput(format!(
            "cannot split {} observations into {} equal blocks",
            cfg.n, block_count
        )));
    }
    if !(threshold_multiple > 0.0) {
        return Err(Error::InvalidInput(format!(
            "threshold multiple {threshold_multiple}"
        )));
    }
    let resolved = cfg.regime.resolve_alpha(cfg.n)?;
    let alpha_n = resolved.alpha_n;
    let kn = resolved.kn.expect("mild regime has kn");
    let mm = marginal_mean(&cfg.spec, alpha_n)?;
    let threshold = threshold_multiple * mm;
    let block_len = cfg.n / block_count;
    let comparator = AffineSpec::LinearAr1 {
        mu: cfg.spec.mu_n(alpha_n),
        sigma_eps: cfg.spec.sigma2_limit().sqrt(),
    };
    struct RepOut {
        episode: bool,
        exceeding: usize,
        subunit: usize,
        degenerate: usize,
        comparator_episode: bool,
    }
    let reps: Vec<Result<RepOut>> = (0..cfg.m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, &[domain::BUBBLE, i, 0]);
            let traj = simulate_with_alpha(&cfg.spec, alpha_n, cfg.n, cfg.x0, &mut rng)?;
            let mut exceeding = 0usize;
            let mut subunit = 0usize;
            let mut degenerate = 0usize;
            for block in traj.values[1..].chunks_exact(block_len) {
                let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max > threshold {
                    exceeding += 1;
                    match estimate::ols(block) {
                        Ok(fit) => subunit += (fit.alpha_hat <= 1.0) as usize,
                        Err(Error::DegenerateDesign) => degenerate += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
            let mut rng_c = stream_rng(cfg.seed, &[domain::BUBBLE, i, 1]);
            let comp = simulate_with_alpha(&comparator, alpha_n, cfg.n, cfg.x0, &mut rng_c)?;
            let comp_episode = comp.values[1..]
                .chunks_exact(block_len)
                .any(|b| b.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > threshold);
            Ok(RepOut {
                episode: exceeding > 0,
                exceeding,
                subunit,
                degenerate,
                comparator_episode: comp_episode,
            })
        })
        .collect();
    let mut episodes = 0usize;
    let mut exceeding = 0usize;
    let mut subunit = 0usize;
    let mut degenerate = 0usize;
    let mut comparator_episodes = 0usize;
    for r in reps {
        let r = r?;
        episodes += r.episode as usize;
        exceeding += r.exceeding;
        subunit += r.subunit;
        degenerate += r.degenerate;
        comparator_episodes += r.comparator_episode as usize;
    }
    let fitted_blocks = exceeding - degenerate;
    Ok(BubbleStudy {
        alpha_n,
        kn,
        marginal_mean: mm,
        threshold,
        block_count,
        block_len,
        n: cfg.n,
        m: cfg.m,
        seed: cfg.seed,
        episode_rate: episodes as f64 / cfg.m as f64,
        subunit_rate: subunit as f64 / fitted_blocks.max(1) as f64,
        exceeding_blocks: exceeding,
        degenerate_blocks: degenerate,
        comparator_rate: comparator_episodes as f64 / cfg.m as f64,
        comparator,
    })
}

/// Scaling checks of the rescaled trajectory against its limit law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ar1Check {
    /// Mildly stationary linear AR(1): the rescaled path X_{floor(k_n s)}/k_n
    /// tracks the deterministic curve mu (1 - e^{-s}).
    PathDeviation {
        mu: f64,
        s_max: f64,
        m: usize,
        seed: u64,
        rows: Vec<Ar1DevRow>,
    },
    /// Mildly explosive process: X_n / (k_n alpha_n^n) has the stationary
    /// gamma law's mean mu and variance mu sigma^2 / 2.
    ExplosiveScale {
        alpha_n: f64,
        kn: f64,
        n: usize,
        m: usize,
        seed: u64,
        mean: f64,
        var: f64,
        se_mean: f64,
        se_var: f64,
        target_mean: f64,
        target_var: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ar1DevRow {
    pub n: usize,
    pub kn: f64,
    pub alpha_n: f64,
    /// Mean over replications of sup_s |X_{floor(k_n s)}/k_n - mu(1-e^{-s})|.
    pub mean_sup_dev: f64,
}

/// Check the trajectory-level scaling limits. Under a negative-drift mild
/// regime the family must be the linear AR(1) and the deterministic-curve
/// deviation is reported for each sample size in `ns` (falling back to
/// cfg.n); under a positive-drift regime any family is accepted and the
/// rescaled endpoint's moments are compared with the gamma limit.
pub fn ar1_limit_check(cfg: &ExperimentConfig, ns: &[usize]) -> Result<Ar1Check> {
    cfg.validate()?;
    match cfg.regime {
        RegimeSpec::MildlyIntegrated { gamma_sign: -1, .. } => {
            let mu = match cfg.spec {
                AffineSpec::LinearAr1 { mu, .. } => mu,
                _ => {
                    return Err(Error::InvalidInput(
                        "the path-deviation check is defined for the linear AR(1) family"
                            .into(),
                    ))
                }
            };
            let s_max = 10.0;
            let sizes: Vec<usize> = if ns.is_empty() { vec![cfg.n] } else { ns.to_vec() };
            let mut rows = Vec::with_capacity(sizes.len());
            for (ni, &n) in sizes.iter().enumerate() {
                let resolved = cfg.regime.resolve_alpha(n)?;
                let kn = resolved.kn.expect("mild regime has kn");
                let j_max = n.min((s_max * kn).ceil() as usize);
                let devs: Vec<Result<f64>> = (0..cfg.m as u64)
                    .into_par_iter()
                    .map(|rep| {
                        let mut rng =
                            stream_rng(cfg.seed, &[domain::AR1_CHECK, ni as u64, rep]);
                        let traj = simulate_with_alpha(
                            &cfg.spec,
                            resolved.alpha_n,
                            j_max,
                            cfg.x0,
                            &mut rng,
                        )?;
                        let mut sup = 0.0f64;
                        for (j, &x) in traj.values.iter().enumerate() {
                            let s = j as f64 / kn;
                            let dev = (x / kn - mu * (1.0 - (-s).exp())).abs();
                            sup = sup.max(dev);
                        }
                        Ok(sup)
                    })
                    .collect();
                let devs = devs.into_iter().collect::<Result<Vec<_>>>()?;
                rows.push(Ar1DevRow {
                    n,
                    kn,
                    alpha_n: resolved.alpha_n,
                    mean_sup_dev: devs.iter().sum::<f64>() / devs.len() as f64,
                });
            }
            Ok(Ar1Check::PathDeviation {
                mu,
                s_max,
                m: cfg.m,
                seed: cfg.seed,
                rows,
            })
        }
        RegimeSpec::MildlyIntegrated { gamma_sign: 1, .. } => {
            let resolved = cfg.regime.resolve_alpha(cfg.n)?;
            let alpha_n = resolved.alpha_n;
            let kn = resolved.kn.expect("mild regime has kn");
            let norm = kn * alpha_n.powi(cfg.n as i32);
            if !norm.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "explosive normalization overflowed: kn = {kn}, n = {}",
                    cfg.n
                )));
            }
            let ends: Vec<Result<f64>> = (0..cfg.m as u64)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = stream_rng(cfg.seed, &[domain::AR1_CHECK, 0, rep]);
                    let traj =
                        simulate_with_alpha(&cfg.spec, alpha_n, cfg.n, cfg.x0, &mut rng)?;
                    Ok(traj.values[cfg.n] / norm)
                })
                .collect();
            let ends = ends.into_iter().collect::<Result<Vec<_>>>()?;
            let s = moment_summary(&ends);
            Ok(Ar1Check::ExplosiveScale {
                alpha_n,
                kn,
                n: cfg.n,
                m: cfg.m,
                seed: cfg.seed,
                mean: s.mean,
                var: s.var,
                se_mean: s.se_mean,
                se_var: s.se_var,
                target_mean: cfg.spec.mu_limit(),
                target_var: cfg.spec.mu_limit() * cfg.spec.sigma2_limit() / 2.0,
            })
        }
        _ => Err(Error::InvalidInput(
            "the scaling checks require a mildly integrated regime".into(),
        )),
    }
}
