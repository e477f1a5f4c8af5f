//! Least-squares and Poisson quasi-likelihood estimation of the conditional
//! mean recursion X_t = alpha X_{t-1} + mu + noise, with residual-based
//! variance-scale and persistence diagnostics.
//!
//! Near the unit root the fitted slope differs from its target by amounts
//! far below one machine ulp of the slope itself, so the normal-equation
//! sums and solve run in double-double precision and study code can pull
//! the slope error out before it is rounded to f64.

use serde::{Deserialize, Serialize};

use crate::dd::{Dd, DdSum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    Wls,
    PoissonQml,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Wls => "wls",
            Method::PoissonQml => "poisson_qml",
        }
    }
}

/// A fitted conditional-mean recursion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: Method,
    /// Number of transition pairs used.
    pub n: usize,
    pub alpha_hat: f64,
    pub mu_hat: f64,
    /// Residual variance scale: sum of squared residuals over sum of lagged levels.
    pub sigma2_hat: f64,
    pub residuals: Vec<f64>,
    /// Implied persistence scale 1/(1 - alpha_hat); present iff alpha_hat < 1.
    pub k_hat: Option<f64>,
    /// Implied bandwidth exponent ln(k_hat) / ln(n); present iff k_hat is.
    pub tau_hat: Option<f64>,
    /// Set when sigma2_hat >= 2 * mu_hat: the implied diffusion can touch
    /// zero, a regime where the weighted estimator's efficiency theory is
    /// unsupported.
    pub variance_warning: bool,
}

/// High-precision fit internals: the slope and intercept kept in
/// double-double form so that differences against nearby true values
/// survive with ~32 significant digits.
#[derive(Debug, Clone, Copy)]
pub struct DdFit {
    pub alpha: Dd,
    pub mu: Dd,
}

fn check_series(values: &[f64]) -> Result<usize> {
    let n = values.len().saturating_sub(1);
    if n < 3 {
        return Err(Error::InsufficientData {
            got: values.len(),
            need: 4,
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation {v}")));
    }
    Ok(n)
}

/// Weighted normal-equation solve in double-double arithmetic.
///
/// Minimizes sum w_t (y_t - alpha x_t - mu)^2 for nonnegative weights (not
/// all zero). The closure receives the pair index and the lagged level, so
/// both level-dependent and externally drawn weights share this code path.
pub(crate) fn weighted_fit(
    values: &[f64],
    mut weight: impl FnMut(usize, f64) -> f64,
) -> Result<DdFit> {
    let mut sw = DdSum::new();
    let mut swx = DdSum::new();
    let mut swy = DdSum::new();
    let mut swxx = DdSum::new();
    let mut swxy = DdSum::new();
    for t in 1..values.len() {
        let x = values[t - 1];
        let y = values[t];
        let w = weight(t - 1, x);
        sw.add(w);
        swx.add_prod(w, x);
        swy.add_prod(w, y);
        swxx.add_prod3(w, x, x);
        swxy.add_prod3(w, x, y);
    }
    let sw = sw.total();
    let swx = swx.total();
    let swy = swy.total();
    let swxx = swxx.total();
    let swxy = swxy.total();
    // centered second moments: sxx = swxx - swx^2 / sw, sxy = swxy - swx swy / sw
    let sxx = swxx.sub(swx.mul(swx).div(sw));
    let sxy = swxy.sub(swx.mul(swy).div(sw));
    if !(sxx.value() > 1e-12 * swxx.value().abs() && sxx.value().is_finite()) {
        return Err(Error::DegenerateDesign);
    }
    let alpha = sxy.div(sxx);
    let mu = swy.sub(alpha.mul(swx)).div(sw);
    Ok(DdFit { alpha, mu })
}

/// Least squares on a state sequence already carried in double-double form.
///
/// Same normal equations as `weighted_fit` with unit weights, but with every
/// sum and product taken over extended-precision states. Used for explosive
/// chains whose conditional noise falls below one ulp of a plain f64 state.
pub(crate) fn ols_dd_states(values: &[Dd]) -> Result<DdFit> {
    let n = values.len().saturating_sub(1);
    if n < 3 {
        return Err(Error::InsufficientData {
            got: values.len(),
            need: 4,
        });
    }
    let nf = Dd::from(n as f64);
    let mut sx = Dd::ZERO;
    let mut sy = Dd::ZERO;
    let mut sxx = Dd::ZERO;
    let mut sxy = Dd::ZERO;
    for w in values.windows(2) {
        let (x, y) = (w[0], w[1]);
        sx = sx.add(x);
        sy = sy.add(y);
        sxx = sxx.add(x.mul(x));
        sxy = sxy.add(x.mul(y));
    }
    let sxx_c = sxx.sub(sx.mul(sx).div(nf));
    let sxy_c = sxy.sub(sx.mul(sy).div(nf));
    if !(sxx_c.value() > 1e-12 * sxx.value().abs() && sxx_c.value().is_finite()) {
        return Err(Error::DegenerateDesign);
    }
    let alpha = sxy_c.div(sxx_c);
    let mu = sy.sub(alpha.mul(sx)).div(nf);
    Ok(DdFit { alpha, mu })
}

/// Residuals y_t - alpha x_t - mu with the double-double coefficients
/// applied in split form (full-precision slope before the final rounding).
fn residuals_from(values: &[f64], fit: &DdFit) -> Vec<f64> {
    let (a_hi, a_lo) = (fit.alpha.hi, fit.alpha.lo);
    let mu = fit.mu.value();
    values
        .windows(2)
        .map(|w| f64::mul_add(-a_hi, w[0], w[1]) - a_lo * w[0] - mu)
        .collect()
}

/// Residual variance scale: sum of squared residuals over sum of lagged levels.
pub fn sigma2_hat(values: &[f64], alpha_hat: f64, mu_hat: f64) -> Result<f64> {
    check_series(values)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for w in values.windows(2) {
        let r = f64::mul_add(-alpha_hat, w[0], w[1]) - mu_hat;
        num += r * r;
        den += w[0];
    }
    if den <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

fn finish(values: &[f64], fit: DdFit, method: Method, n: usize) -> Result<EstimateResult> {
    let residuals = residuals_from(values, &fit);
    let alpha_hat = fit.alpha.value();
    let mu_hat = fit.mu.value();
    let num: f64 = residuals.iter().map(|r| r * r).sum();
    let den: f64 = values[..values.len() - 1].iter().sum();
    let sigma2_hat = if den > 0.0 { num / den } else { f64::NAN };
    let k_hat = if alpha_hat < 1.0 {
        Some(1.0 / (1.0 - alpha_hat))
    } else {
        None
    };
    let tau_hat = k_hat.map(|k| k.ln() / (n as f64).ln());
    Ok(EstimateResult {
        method,
        n,
        alpha_hat,
        mu_hat,
        sigma2_hat,
        residuals,
        k_hat,
        tau_hat,
        variance_warning: sigma2_hat >= 2.0 * mu_hat,
    })
}

/// Ordinary least squares for (alpha, mu) on the lagged pairs of `values`.
pub fn ols(values: &[f64]) -> Result<EstimateResult> {
    let n = check_series(values)?;
    let fit = weighted_fit(values, |_, _| 1.0)?;
    finish(values, fit, Method::Ols, n)
}

/// Weighted least squares with conditional-variance-proportional weights
/// 1 / (1 + X_{t-1}).
pub fn wls(values: &[f64]) -> Result<EstimateResult> {
    let n = check_series(values)?;
    let fit = weighted_fit(values, |_, x| 1.0 / (1.0 + x))?;
    finish(values, fit, Method::Wls, n)
}

/// Full-precision fit used by simulation studies: returns the double-double
/// slope/intercept so that (alpha_hat - alpha_true) can be formed before any
/// rounding to f64. `weights` selects the estimator.
pub fn fit_dd(values: &[f64], method: Method) -> Result<DdFit> {
    check_series(values)?;
    match method {
        Method::Ols => weighted_fit(values, |_, _| 1.0),
        Method::Wls => weighted_fit(values, |_, x| 1.0 / (1.0 + x)),
        Method::PoissonQml => {
            let r = poisson_qmle(values)?;
            Ok(DdFit {
                alpha: Dd::from(r.alpha_hat),
                mu: Dd::from(r.mu_hat),
            })
        }
    }
}

/// Error of a double-double fit against reference coefficients, rounded only
/// after the subtraction.
pub fn fit_errors(fit: &DdFit, alpha_true: f64, mu_true: f64) -> (f64, f64) {
    (
        fit.alpha.sub(Dd::from(alpha_true)).value(),
        fit.mu.sub(Dd::from(mu_true)).value(),
    )
}

const QMLE_MU_FLOOR: f64 = 1e-8;
const QMLE_TOL: f64 = 1e-8;
const QMLE_MAX_ITER: usize = 100;

/// Poisson quasi-maximum-likelihood fit of the conditional mean
/// lambda_t = alpha X_{t-1} + mu over alpha >= 0, mu > 0.
///
/// Damped Newton from the OLS start (clamped into the domain); the objective
/// sum(lambda_t - X_t ln lambda_t) is convex in (alpha, mu) on the positive
/// orthant, so undamped steps are accepted whenever they stay feasible.
pub fn poisson_qmle(values: &[f64]) -> Result<EstimateResult> {
    let n = check_series(values)?;
    if let Some(v) = values.iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative observation {v} in a count fit"
        )));
    }
    let start = ols(values)?;
    let mut alpha = start.alpha_hat.max(0.0);
    let mut mu = start.mu_hat.max(QMLE_MU_FLOOR.max(1e-3));
    let mut grad_norm = f64::INFINITY;
    for _ in 0..QMLE_MAX_ITER {
        // gradient and Hessian of sum(lambda - y ln lambda), lambda = alpha x + mu
        let (mut ga, mut gm) = (0.0, 0.0);
        let (mut haa, mut ham, mut hmm) = (0.0, 0.0, 0.0);
        for w in values.windows(2) {
            let (x, y) = (w[0], w[1]);
            let lambda = alpha * x + mu;
            let d = 1.0 - y / lambda;
            ga += d * x;
            gm += d;
            let q = y / (lambda * lambda);
            haa += q * x * x;
            ham += q * x;
            hmm += q;
        }
        grad_norm = ga.abs().max(gm.abs());
        if grad_norm < QMLE_TOL {
            break;
        }
        let det = haa * hmm - ham * ham;
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::DegenerateDesign);
        }
        let da = -(hmm * ga - ham * gm) / det;
        let dm = -(haa * gm - ham * ga) / det;
        // backtrack until the step keeps (alpha, mu) in the domain
        let mut step = 1.0;
        while alpha + step * da < 0.0 || mu + step * dm < QMLE_MU_FLOOR {
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::BoundaryHit {
                    alpha,
                    mu_floor: QMLE_MU_FLOOR,
                });
            }
        }
        alpha += step * da;
        mu += step * dm;
    }
    if grad_norm >= QMLE_TOL {
        return Err(Error::NoConvergence {
            iterations: QMLE_MAX_ITER,
            grad_norm,
            alpha,
            mu,
        });
    }
    if mu <= QMLE_MU_FLOOR {
        return Err(Error::BoundaryHit {
            alpha,
            mu_floor: QMLE_MU_FLOOR,
        });
    }
    let fit = DdFit {
        alpha: Dd::from(alpha),
        mu: Dd::from(mu),
    };
    finish(values, fit, Method::PoissonQml, n)
}

/// Diagnostic slope of log squared residuals on log lagged levels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarianceExponent {
    /// Fitted slope: 1 for variance proportional to the level, 0 for
    /// constant variance.
    pub a_hat: f64,
    /// 95% confidence half-width from the classical slope standard error.
    pub ci_halfwidth: f64,
    pub r2: f64,
    /// Points entering the regression after dropping zero levels and
    /// zero residuals.
    pub used: usize,
    pub dropped: usize,
}

/// Two-sided 97.5% Student-t quantile for `df` degrees of freedom.
fn t_quantile_975(df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    StudentsT::new(0.0, 1.0, df)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

/// Regress log(residual^2) on log(lagged level) for an OLS fit of the series.
///
/// Points with a zero lagged level or an exactly zero residual are dropped
/// (their logs are undefined) and counted.
pub fn variance_exponent(values: &[f64]) -> Result<VarianceExponent> {
    let base = ols(values)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (w, r) in values.windows(2).zip(base.residuals.iter()) {
        if w[0] > 0.0 && *r != 0.0 {
            xs.push(w[0].ln());
            ys.push((r * r).ln());
        } else {
            dropped += 1;
        }
    }
    let m = xs.len();
    if m < 10 {
        return Err(Error::InsufficientData { got: m, need: 10 });
    }
    let mf = m as f64;
    let xbar = xs.iter().sum::<f64>() / mf;
    let ybar = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    if sxx <= 1e-12 * xs.iter().map(|x| x * x).sum::<f64>() {
        return Err(Error::DegenerateDesign);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - slope * x - intercept;
            e * e
        })
        .sum();
    let df = mf - 2.0;
    let se = (sse / df / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 0.0 };
    Ok(VarianceExponent {
        a_hat: slope,
        ci_halfwidth: t_quantile_975(df) * se,
        r2,
        used: m,
        dropped,
    })
}
