//! Growth rate `g(f) = E ln(1 + f r)`, asymptotic variance
//! `v(f) = Var ln(1 + f r)`, asymptotic Sharpe ratio `g / sqrt(v)` and the
//! ridge coefficient `g - gamma v`, with their derivatives in `f`.
//!
//! Each quantity is evaluated by the best route the model supports: closed
//! form, adaptive quadrature (density models), or Monte Carlo (samplers).
//! Heavy-tailed squared-Cauchy and squared-t3 integrals are taken in the angle
//! variable `x = tan(theta)`, which maps the half line onto `(0, pi/2)` with a
//! bounded weight.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::quadrature::{integrate, integrate_interval, QuadratureSpec};
use crate::return_models::ReturnDistribution;

/// Largest fraction at which metrics are evaluated; larger inputs below 1
/// are clamped to it.
pub const MAX_FRACTION: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::ClosedForm => "closed_form",
            Estimator::Quadrature => "quadrature",
            Estimator::MonteCarlo => "monte_carlo",
        }
    }

    // closed_form < quadrature < monte_carlo
    fn weakest(self, other: Estimator) -> Estimator {
        let rank = |e: Estimator| match e {
            Estimator::ClosedForm => 0,
            Estimator::Quadrature => 1,
            Estimator::MonteCarlo => 2,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub estimator: Estimator,
    /// Monte Carlo standard error.
    pub std_error: Option<f64>,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Self { value, estimator: Estimator::ClosedForm, std_error: None }
    }
}

/// Numerical settings shared by all metric evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub quadrature: QuadratureSpec,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { quadrature: QuadratureSpec::default(), mc_samples: 1_000_000, seed: 0 }
    }
}

/// Growth, variance, Sharpe ratio and ridge coefficient at one fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskProfile {
    pub f: f64,
    pub g: f64,
    pub v: f64,
    /// `None` where the ratio is undefined (`g = v = 0`); may be `+inf`.
    pub sr: Option<f64>,
    pub ri: f64,
    pub gamma: f64,
    pub estimator: Estimator,
    pub std_error: Option<f64>,
}

fn check_fraction(f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidFraction(f));
    }
    Ok(f)
}

/// Clamps to `MAX_FRACTION`, keeping exactly 1 only for models with a
/// distinguished value there.
fn clamp(model: &ReturnDistribution, f: f64) -> f64 {
    if f == 1.0 && matches!(model, ReturnDistribution::Bernoulli { .. }) {
        1.0
    } else {
        f.min(MAX_FRACTION)
    }
}

// ---------------------------------------------------------------------------
// expectation routes

fn theta_expectation<H: Fn(f64) -> f64>(model: &ReturnDistribution, h: H, spec: &QuadratureSpec) -> Result<f64> {
    let integrand = |t: f64| match model {
        // |eta| has density 2 / (pi (1 + x^2)); with x = tan(theta) the
        // weight is the constant 2 / pi.
        ReturnDistribution::SquaredCauchy => {
            let x = t.tan();
            2.0 / PI * h(x * x - 1.0)
        }
        // |T_3| has density 4 / (pi sqrt 3) (1 + x^2/3)^-2; with
        // x = sqrt(3) tan(theta) the weight is (4 / pi) cos^2(theta).
        ReturnDistribution::SquaredStudentT3 => {
            let x2 = 3.0 * t.tan().powi(2);
            4.0 / PI * t.cos().powi(2) * h(x2 - 1.0)
        }
        _ => unreachable!("theta route only for squared-Cauchy and squared-t3"),
    };
    // At small f the mass of ln(1 + f r) sits at |x| ~ 1/sqrt(f), i.e. within
    // ~sqrt(f) of pi/2; panels ending at pi/2 - 10^-k keep every scale visible.
    let mut cuts = vec![0.0];
    cuts.extend((1..=9).map(|k| PI / 2.0 - 10f64.powi(-k)));
    cuts.push(PI / 2.0);
    let mut total = 0.0;
    for c in cuts.windows(2) {
        total += integrate(integrand, c[0], c[1], spec)?.value;
    }
    Ok(total)
}

/// `E h(r)` by the deterministic route: two-point sum, angle quadrature or
/// density quadrature.
fn deterministic_expectation<H: Fn(f64) -> f64>(model: &ReturnDistribution, h: H, spec: &QuadratureSpec) -> Result<f64> {
    match model {
        ReturnDistribution::Bernoulli { p } => Ok(p * h(1.0) + (1.0 - p) * h(-1.0)),
        ReturnDistribution::SquaredCauchy | ReturnDistribution::SquaredStudentT3 => theta_expectation(model, h, spec),
        ReturnDistribution::GenericDensity { density, support, .. } => {
            Ok(integrate_interval(|x| density(x) * h(x), support.0, support.1, spec)?.value)
        }
        ReturnDistribution::GenericSampler { .. } => {
            Err(invalid("estimator", "quadrature needs a density; sampler models use Monte Carlo"))
        }
    }
}

struct McMoments {
    mean: f64,
    variance: f64,
    n: usize,
}

/// Sample mean and variance of `h(r)` over `cfg.mc_samples` draws.
/// Flags samples whose variance is carried by a single draw.
fn mc_moments<H: Fn(f64) -> f64>(model: &ReturnDistribution, h: H, cfg: &MetricsConfig) -> Result<McMoments> {
    let n = cfg.mc_samples.max(2);
    let draws = model.sample(cfg.seed, n)?;
    let ys: Vec<f64> = draws.iter().map(|&r| h(r)).collect();
    if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::HeavyTail(format!("non-finite sample value {bad}")));
    }
    let mean = exec::compensated_sum(ys.iter().copied()) / n as f64;
    let sq: Vec<f64> = ys.iter().map(|y| (y - mean) * (y - mean)).collect();
    let ss = exec::compensated_sum(sq.iter().copied());
    let largest = sq.iter().copied().fold(0.0, f64::max);
    if n >= 10_000 && ss > 0.0 && largest > 0.1 * ss {
        return Err(Error::HeavyTail(format!(
            "one draw carries {:.0}% of the sample variance",
            100.0 * largest / ss
        )));
    }
    Ok(McMoments { mean, variance: ss / (n - 1) as f64, n })
}

fn mc_expectation<H: Fn(f64) -> f64>(model: &ReturnDistribution, h: H, cfg: &MetricsConfig) -> Result<Estimate> {
    let m = mc_moments(model, h, cfg)?;
    Ok(Estimate {
        value: m.mean,
        estimator: Estimator::MonteCarlo,
        std_error: Some((m.variance / m.n as f64).sqrt()),
    })
}

fn default_route(model: &ReturnDistribution) -> Estimator {
    match model {
        ReturnDistribution::GenericSampler { .. } => Estimator::MonteCarlo,
        _ => Estimator::Quadrature,
    }
}

fn expectation<H: Fn(f64) -> f64>(model: &ReturnDistribution, h: H, route: Estimator, cfg: &MetricsConfig) -> Result<Estimate> {
    match route {
        Estimator::MonteCarlo => mc_expectation(model, h, cfg),
        Estimator::Quadrature => Ok(Estimate {
            value: deterministic_expectation(model, h, &cfg.quadrature)?,
            estimator: if matches!(model, ReturnDistribution::Bernoulli { .. }) {
                Estimator::ClosedForm
            } else {
                Estimator::Quadrature
            },
            std_error: None,
        }),
        Estimator::ClosedForm => Err(invalid("estimator", "no closed form for this quantity")),
    }
}

// ---------------------------------------------------------------------------
// closed forms

fn closed_growth(model: &ReturnDistribution, f: f64) -> Option<f64> {
    match *model {
        ReturnDistribution::Bernoulli { p } => Some(if f >= 1.0 {
            f64::NEG_INFINITY
        } else {
            p * f.ln_1p() + (1.0 - p) * (-f).ln_1p()
        }),
        ReturnDistribution::SquaredCauchy => Some(2.0 * (f.sqrt() + (1.0 - f).sqrt()).ln()),
        // with a = sqrt(1 - f), b = sqrt(3 f):
        // g = 2 ln(a + b) - 2 b / (a + b); the fraction sits outside the log
        ReturnDistribution::SquaredStudentT3 => {
            let (a, b) = ((1.0 - f).sqrt(), (3.0 * f).sqrt());
            Some(2.0 * (a + b).ln() - 2.0 * b / (a + b))
        }
        _ => None,
    }
}

fn bernoulli_log_odds(f: f64) -> f64 {
    f.ln_1p() - (-f).ln_1p()
}

// ---------------------------------------------------------------------------
// public evaluators

/// Asymptotic growth rate `g(f) = E ln(1 + f r)` (nats per bet).
pub fn growth_rate(model: &ReturnDistribution, f: f64, cfg: &MetricsConfig) -> Result<Estimate> {
    let f = clamp(model, check_fraction(f)?);
    if f == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if let Some(g) = closed_growth(model, f) {
        return Ok(Estimate::exact(g));
    }
    growth_rate_with(model, f, default_route(model), cfg)
}

/// Growth rate through a specific route, for cross-checking estimators.
pub fn growth_rate_with(model: &ReturnDistribution, f: f64, route: Estimator, cfg: &MetricsConfig) -> Result<Estimate> {
    let f = clamp(model, check_fraction(f)?);
    if route == Estimator::ClosedForm {
        return closed_growth(model, f)
            .map(Estimate::exact)
            .ok_or_else(|| invalid("estimator", "model has no closed-form growth rate"));
    }
    expectation(model, |r| (f * r).ln_1p(), route, cfg)
}

/// Asymptotic variance `v(f) = Var ln(1 + f r)` (nats squared per bet).
pub fn asym_variance(model: &ReturnDistribution, f: f64, cfg: &MetricsConfig) -> Result<Estimate> {
    let f = clamp(model, check_fraction(f)?);
    if f == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if let ReturnDistribution::Bernoulli { p } = *model {
        if f >= 1.0 {
            return Ok(Estimate::exact(f64::INFINITY));
        }
        return Ok(Estimate::exact(p * (1.0 - p) * bernoulli_log_odds(f).powi(2)));
    }
    asym_variance_with(model, f, default_route(model), cfg)
}

/// Variance through a specific route. The second moment is centred at the
/// growth rate, so the result is nonnegative up to roundoff.
pub fn asym_variance_with(model: &ReturnDistribution, f: f64, route: Estimator, cfg: &MetricsConfig) -> Result<Estimate> {
    let f = clamp(model, check_fraction(f)?);
    let est = match route {
        Estimator::MonteCarlo => {
            let logs = mc_moments(model, |r| (f * r).ln_1p(), cfg)?;
            // SE of the sample variance from the fourth central moment
            let centred = mc_moments(model, |r| ((f * r).ln_1p() - logs.mean).powi(2), cfg)?;
            Estimate {
                value: logs.variance,
                estimator: Estimator::MonteCarlo,
                std_error: Some((centred.variance / centred.n as f64).sqrt()),
            }
        }
        Estimator::Quadrature => {
            let g = match closed_growth(model, f) {
                Some(g) => g,
                None => deterministic_expectation(model, |r| (f * r).ln_1p(), &cfg.quadrature)?,
            };
            expectation(model, |r| ((f * r).ln_1p() - g).powi(2), Estimator::Quadrature, cfg)?
        }
        Estimator::ClosedForm => match *model {
            ReturnDistribution::Bernoulli { p } => Estimate::exact(p * (1.0 - p) * bernoulli_log_odds(f).powi(2)),
            _ => return Err(invalid("estimator", "model has no closed-form variance")),
        },
    };
    if est.value < 0.0 {
        log::warn!("negative variance {} from roundoff at f = {f}; clamped to 0", est.value);
        return Ok(Estimate { value: 0.0, ..est });
    }
    Ok(est)
}

fn sharpe_from(g: f64, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(g / v.sqrt())
    } else if g > 0.0 {
        Ok(f64::INFINITY)
    } else if g == 0.0 {
        Err(Error::UndefinedRatio)
    } else {
        Ok(f64::NEG_INFINITY)
    }
}

/// Asymptotic Sharpe ratio `g(f) / sqrt(v(f))`; `+inf` when `v = 0 < g`.
pub fn sharpe(model: &ReturnDistribution, f: f64, cfg: &MetricsConfig) -> Result<f64> {
    let g = growth_rate(model, f, cfg)?.value;
    let v = asym_variance(model, f, cfg)?.value;
    sharpe_from(g, v)
}

/// Limit of the Sharpe ratio as `f -> 0+`: `E r / sd(r)` when the second
/// moment is finite.
pub fn sharpe_at_zero(model: &ReturnDistribution) -> Option<f64> {
    let caps = model.capabilities();
    let (m1, m2) = (caps.mean_return?, caps.second_moment?);
    let var = m2 - m1 * m1;
    (m1.is_finite() && m2.is_finite() && var > 0.0).then(|| m1 / var.sqrt())
}

/// Ridge coefficient `g(f) - gamma v(f)`.
pub fn ridge(model: &ReturnDistribution, f: f64, gamma: f64, cfg: &MetricsConfig) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("{gamma} must be nonnegative")));
    }
    let g = growth_rate(model, f, cfg)?.value;
    if gamma == 0.0 {
        return Ok(g);
    }
    Ok(g - gamma * asym_variance(model, f, cfg)?.value)
}

/// `g'(f) = E[r / (1 + f r)]`; `+inf` at `f = 0` for the squared-Cauchy law.
pub fn growth_derivative(model: &ReturnDistribution, f: f64, cfg: &MetricsConfig) -> Result<f64> {
    let f = clamp(model, check_fraction(f)?);
    match *model {
        ReturnDistribution::Bernoulli { p } => {
            if f >= 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(p / (1.0 + f) - (1.0 - p) / (1.0 - f))
        }
        ReturnDistribution::SquaredCauchy => {
            if f == 0.0 {
                return Ok(f64::INFINITY);
            }
            let (s, c) = (f.sqrt(), (1.0 - f).sqrt());
            Ok((1.0 / s - 1.0 / c) / (s + c))
        }
        ReturnDistribution::SquaredStudentT3 => {
            let (a, b) = ((1.0 - f).sqrt(), (3.0 * f).sqrt());
            Ok(2.0 * (a - b) / (a * (a + b).powi(2)))
        }
        _ => {
            if f == 0.0 {
                if let Some(m) = model.capabilities().mean_return {
                    return Ok(m);
                }
            }
            Ok(expectation(model, |r| r / (1.0 + f * r), default_route(model), cfg)?.value)
        }
    }
}

/// `g''(f) = -E[r^2 / (1 + f r)^2]`.
pub fn growth_second_derivative(model: &ReturnDistribution, f: f64, cfg: &MetricsConfig) -> Result<f64> {
    let f = clamp(model, check_fraction(f)?);
    match *model {
        ReturnDistribution::Bernoulli { p } => {
            if f >= 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(-p / (1.0 + f).powi(2) - (1.0 - p) / (1.0 - f).powi(2))
        }
        ReturnDistribution::SquaredCauchy => {
            if f == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            // g = 2 ln h with h = sqrt f + sqrt(1 - f)
            let (s, c) = (f.sqrt(), (1.0 - f).sqrt());
            let h = s + c;
            let h1 = 0.5 / s - 0.5 / c;
            let h2 = -0.25 / (s * s * s) - 0.25 / (c * c * c);
            Ok(2.0 * (h2 * h - h1 * h1) / (h * h))
        }
        _ => {
            if f == 0.0 {
                if let Some(m) = model.capabilities().second_moment {
                    return Ok(-m);
                }
            }
            Ok(-expectation(model, |r| (r / (1.0 + f * r)).powi(2), default_route(model), cfg)?.value)
        }
    }
}

/// `v'(f) = 2 E[(ln(1 + f r) - g) r / (1 + f r)]`.
pub fn variance_derivative(model: &ReturnDistribution, f: f64, cfg: &MetricsConfig) -> Result<f64> {
    let f = clamp(model, check_fraction(f)?);
    if let ReturnDistribution::Bernoulli { p } = *model {
        if f >= 1.0 {
            return Ok(f64::INFINITY);
        }
        return Ok(4.0 * p * (1.0 - p) * bernoulli_log_odds(f) / (1.0 - f * f));
    }
    let g = growth_rate(model, f, cfg)?.value;
    Ok(2.0 * expectation(model, |r| ((f * r).ln_1p() - g) * r / (1.0 + f * r), default_route(model), cfg)?.value)
}

/// All risk measures at one fraction.
pub fn risk_profile(model: &ReturnDistribution, f: f64, gamma: f64, cfg: &MetricsConfig) -> Result<RiskProfile> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("{gamma} must be nonnegative")));
    }
    let g = growth_rate(model, f, cfg)?;
    let v = asym_variance(model, f, cfg)?;
    let sr = match sharpe_from(g.value, v.value) {
        Ok(s) => Some(s),
        Err(Error::UndefinedRatio) => None,
        Err(e) => return Err(e),
    };
    let ri = if gamma == 0.0 { g.value } else { g.value - gamma * v.value };
    Ok(RiskProfile {
        f,
        g: g.value,
        v: v.value,
        sr,
        ri,
        gamma,
        estimator: g.estimator.weakest(v.estimator),
        std_error: g.std_error,
    })
}

/// Risk profiles over a grid of fractions, evaluated concurrently.
pub fn risk_curve(model: &ReturnDistribution, grid: &[f64], gamma: f64, cfg: &MetricsConfig) -> Result<Vec<RiskProfile>> {
    if grid.is_empty() {
        return Err(invalid("grid", "must contain at least one fraction"));
    }
    exec::map_slice(grid, |&f| risk_profile(model, f, gamma, cfg)).into_iter().collect()
}

/// Header of the curve CSV.
pub const CURVE_HEADER: &str = "f,g,v,sr,ri,estimator,std_error";

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // shortest representation that round-trips exactly
        format!("{x:?}")
    }
}

/// Writes `rows` as CSV with header [`CURVE_HEADER`].
pub fn write_curve_csv<W: Write>(mut out: W, rows: &[RiskProfile]) -> io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_num(r.f),
            fmt_num(r.g),
            fmt_num(r.v),
            r.sr.map(fmt_num).unwrap_or_default(),
            fmt_num(r.ri),
            r.estimator.as_str(),
            r.std_error.map(fmt_num).unwrap_or_default()
        )?;
    }
    Ok(())
}
