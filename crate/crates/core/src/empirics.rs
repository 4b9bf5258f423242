//! Monte Carlo checks of the limit theorems: law of large numbers and CLT
//! for log-wealth, renewal asymptotics of passage times, and the Gamma
//! limit of the logistic-price model. Distributional checks use the
//! one-sample Kolmogorov-Smirnov test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaLaw, Normal};

use crate::ct_models::{ct_asymptotics, simulate_ct_terminal, simulate_first_passage, CtModel, FluctuationOrder};
use crate::dependent::{chain_longrun_variance, simulate_chain_with, TwoStateChain};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::metrics::{asym_variance, growth_rate, MetricsConfig};
use crate::return_models::ReturnDistribution;
use crate::rng::substream;

/// Default significance level of the distributional checks.
pub const DEFAULT_LEVEL: f64 = 1e-3;
/// Minimum ensemble size for any check.
pub const MIN_REPLICATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let e = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=6).map(|k| ((2 * k - 1) as f64).powi(2) * e).map(f64::exp).sum();
        1.0 - c * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

/// One-sample KS test of `sample` against the continuous `cdf`, with the
/// small-sample correction `lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    let n = sample.len();
    if n == 0 {
        return Err(invalid("sample", "is empty"));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(invalid("sample", "contains NaN"));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let c = cdf(xi);
        d = d.max((i + 1) as f64 / nf - c).max(c - i as f64 / nf);
    }
    let sq = nf.sqrt();
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d), n })
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn two_sided_normal_p(z: f64) -> f64 {
    (2.0 * (1.0 - standard_normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Outcome of one check, serializable as a JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub null: String,
    pub statistic: f64,
    pub p_value: f64,
    pub level: f64,
    pub pass: bool,
    pub replications: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Auxiliary quantities (oracle values, standard errors, tolerances).
    pub details: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub skipped: bool,
}

impl TestReport {
    fn new(name: &str, null: String, horizon: f64, replications: usize, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            null,
            statistic: 0.0,
            p_value: 1.0,
            level: DEFAULT_LEVEL,
            pass: true,
            replications,
            horizon,
            seed,
            details: BTreeMap::new(),
            note: None,
            skipped: false,
        }
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    fn skip(mut self, reason: String) -> Self {
        self.skipped = true;
        self.note = Some(reason);
        self
    }
}

/// Source of log-wealth paths.
#[derive(Debug, Clone)]
pub enum WealthSource {
    Iid(ReturnDistribution),
    Chain(TwoStateChain),
    /// Continuous-time model simulated on the grid `dt`.
    Ct { model: CtModel, dt: f64 },
}

impl WealthSource {
    fn describe(&self) -> String {
        match self {
            WealthSource::Iid(m) => format!("iid {}", m.name()),
            WealthSource::Chain(c) => format!("two-state chain (p={}, q={})", c.p, c.q),
            WealthSource::Ct { model, .. } => format!("continuous {}", model.name()),
        }
    }

    /// `(g, v_eff)` of the source at `f`.
    pub fn growth_and_variance(&self, f: f64) -> Result<(f64, f64)> {
        let cfg = MetricsConfig::default();
        match self {
            WealthSource::Iid(m) => Ok((growth_rate(m, f, &cfg)?.value, asym_variance(m, f, &cfg)?.value)),
            WealthSource::Chain(c) => {
                let g = growth_rate(&c.marginal(), f, &cfg)?.value;
                Ok((g, chain_longrun_variance(c, f)?.v_tilde))
            }
            WealthSource::Ct { model, .. } => {
                let a = ct_asymptotics(model)?;
                Ok((a.g(f), a.v(f)))
            }
        }
    }
}

/// Terminal statistics of independent paths; path `i` uses substream `i`
/// of `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub terminal_log_wealth: Vec<f64>,
    /// Time average of the returns (discrete) or of `r_s` (continuous).
    pub time_average: Vec<f64>,
}

fn check_replications(replications: usize) -> Result<()> {
    if replications < MIN_REPLICATIONS {
        return Err(invalid("replications", format!("{replications} is below the minimum of {MIN_REPLICATIONS}")));
    }
    Ok(())
}

/// Simulates `replications` paths of length `horizon` (steps for discrete
/// sources, time for continuous ones).
pub fn simulate_ensemble(source: &WealthSource, f: f64, horizon: f64, replications: usize, seed: u64) -> Result<PathEnsemble> {
    check_replications(replications)?;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidFraction(f));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("{horizon} must be positive")));
    }
    let steps = horizon.round() as usize;
    let paths: Vec<Result<(f64, f64)>> = exec::map_range(replications, |i| {
        let mut rng = substream(seed, i as u64);
        let accumulate = |rs: &mut dyn Iterator<Item = Result<f64>>| -> Result<(f64, f64)> {
            let (mut lw, mut sum) = (0.0, 0.0);
            for (k, r) in rs.enumerate() {
                let r = r?;
                let w = 1.0 + f * r;
                if !(w > 0.0) {
                    return Err(Error::Ruin { step: k + 1, value: w });
                }
                lw += w.ln();
                sum += r;
            }
            Ok((lw, sum / steps as f64))
        };
        match source {
            WealthSource::Iid(m) => {
                let mut draws = (0..steps).map(|_| m.draw(&mut rng));
                accumulate(&mut draws)
            }
            WealthSource::Chain(c) => {
                let x = simulate_chain_with(c, steps, &mut rng);
                accumulate(&mut x.into_iter().map(Ok))
            }
            WealthSource::Ct { model, dt } => {
                let s = simulate_ct_terminal(model, f, horizon, *dt, &mut rng)?;
                Ok((s.log_wealth, s.int_r / s.time))
            }
        }
    });
    let mut terminal_log_wealth = Vec::with_capacity(replications);
    let mut time_average = Vec::with_capacity(replications);
    for p in paths {
        let (lw, avg) = p?;
        terminal_log_wealth.push(lw);
        time_average.push(avg);
    }
    Ok(PathEnsemble { horizon, replications, seed, terminal_log_wealth, time_average })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = exec::compensated_sum(x.iter().copied()) / n;
    let v = exec::compensated_sum(x.iter().map(|y| (y - m).powi(2))) / (n - 1.0);
    (m, v)
}

/// Law of large numbers: the ensemble mean of `ln W / horizon` lies within
/// 4 standard errors `sqrt(v_eff / (horizon * replications))` of `g(f)`.
pub fn lln_check(source: &WealthSource, f: f64, horizon: f64, replications: usize, seed: u64) -> Result<TestReport> {
    let null = format!("mean of ln W / horizon equals g(f) for {} at f = {f}", source.describe());
    let mut report = TestReport::new("lln", null, horizon, replications, seed);
    report.level = two_sided_normal_p(4.0);
    if let WealthSource::Ct { model, .. } = source {
        if f > 0.0 && ct_asymptotics(model)?.fluctuation_order == FluctuationOrder::Constant {
            return Ok(report.skip("constant-fluctuation regime: ln W / t - g is of order 1/t with a non-Gaussian limit; use gamma_limit_check".into()));
        }
    }
    let (g, v) = match source.growth_and_variance(f) {
        Ok(gv) => gv,
        Err(e) => return Ok(report.skip(format!("growth or variance unavailable: {e}"))),
    };
    let e = simulate_ensemble(source, f, horizon, replications, seed)?;
    let rates: Vec<f64> = e.terminal_log_wealth.iter().map(|x| x / horizon).collect();
    let (m, _) = mean_var(&rates);
    let se = (v / (horizon * replications as f64)).sqrt();
    report.statistic = m;
    if se == 0.0 {
        report.pass = m == g;
        report.p_value = if report.pass { 1.0 } else { 0.0 };
    } else {
        let z = (m - g) / se;
        report.p_value = two_sided_normal_p(z);
        report.pass = z.abs() <= 4.0;
        report = report.detail("z", z);
    }
    Ok(report.detail("g", g).detail("v_eff", v).detail("std_error", se).detail("tolerance_se", 4.0))
}

/// CLT: `(ln W - horizon g) / sqrt(horizon v_eff)` is tested against N(0,1)
/// with KS at level `1e-3`. `variance_override` replaces `v_eff` in the
/// standardization.
pub fn clt_check(
    source: &WealthSource,
    f: f64,
    horizon: f64,
    replications: usize,
    seed: u64,
    variance_override: Option<f64>,
) -> Result<TestReport> {
    let null = format!("standardized log-wealth is N(0,1) for {} at f = {f}", source.describe());
    let mut report = TestReport::new("clt", null, horizon, replications, seed);
    if let WealthSource::Ct { model, .. } = source {
        if ct_asymptotics(model)?.fluctuation_order == FluctuationOrder::Constant {
            return Ok(report.skip("constant-fluctuation regime: ln W - t g converges without scaling; use gamma_limit_check".into()));
        }
    }
    let (g, v) = source.growth_and_variance(f)?;
    let v = variance_override.unwrap_or(v);
    if !(v > 0.0) {
        return Ok(report.skip(format!("variance {v} is not positive; fluctuations are not of order sqrt(horizon)")));
    }
    let e = simulate_ensemble(source, f, horizon, replications, seed)?;
    let scale = (horizon * v).sqrt();
    let z: Vec<f64> = e.terminal_log_wealth.iter().map(|x| (x - horizon * g) / scale).collect();
    let ks = ks_test(&z, standard_normal_cdf)?;
    let (m, s2) = mean_var(&z);
    report.statistic = ks.statistic;
    report.p_value = ks.p_value;
    report.pass = ks.p_value >= report.level;
    Ok(report
        .detail("g", g)
        .detail("v_eff", v)
        .detail("standardized_mean", m)
        .detail("standardized_variance", s2))
}

/// Empirical variance of `(ln W_t - t g) / sqrt(t)` with its standard
/// error `s^2 sqrt(2 / (N - 1))`.
pub fn fluctuation_variance(source: &WealthSource, f: f64, horizon: f64, replications: usize, seed: u64) -> Result<(f64, f64)> {
    let (g, _) = source.growth_and_variance(f)?;
    let e = simulate_ensemble(source, f, horizon, replications, seed)?;
    let x: Vec<f64> = e.terminal_log_wealth.iter().map(|lw| (lw - horizon * g) / horizon.sqrt()).collect();
    let (_, v) = mean_var(&x);
    Ok((v, v * (2.0 / (replications as f64 - 1.0)).sqrt()))
}

/// Passage times `tau_w = min{k : ln W_k > ln w}` of one discrete path for
/// every level in the increasing `levels`.
fn discrete_passages(model: &ReturnDistribution, f: f64, levels: &[f64], seed: u64, index: u64, cap: usize) -> Result<Vec<f64>> {
    let mut rng = substream(seed, index);
    let mut out = Vec::with_capacity(levels.len());
    let mut lw = 0.0;
    let mut k = 0usize;
    for &l in levels {
        while lw <= l {
            if k >= cap {
                return Err(Error::PassageCap(cap));
            }
            let w = 1.0 + f * model.draw(&mut rng)?;
            if !(w > 0.0) {
                return Err(Error::Ruin { step: k + 1, value: w });
            }
            lw += w.ln();
            k += 1;
        }
        out.push(k as f64);
    }
    Ok(out)
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Renewal asymptotics of passage times over the increasing targets
/// `w_grid`: (i) the slope of `tau` against `ln w` equals `1/g` within 3
/// standard errors (slopes are fitted per path, so they are independent);
/// (ii) at the largest target, `sqrt(g/L)(tau - L/g)` passes KS against
/// `N(0, v/g^2)`; (iii) its empirical variance is within 20% of `v/g^2`.
/// The source is an iid return law or the Gbm model.
pub fn renewal_check(source: &WealthSource, f: f64, w_grid: &[f64], replications: usize, seed: u64) -> Result<TestReport> {
    if w_grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(invalid("w_grid", "targets must be positive and finite"));
    }
    let levels: Vec<f64> = w_grid.iter().map(|w| w.ln()).collect();
    renewal_check_log(source, f, &levels, replications, seed)
}

/// [`renewal_check`] with targets given as `ln w`, for levels whose
/// exponential overflows.
pub fn renewal_check_log(source: &WealthSource, f: f64, levels: &[f64], replications: usize, seed: u64) -> Result<TestReport> {
    check_replications(replications)?;
    if levels.len() < 2 || levels.windows(2).any(|p| !(p[1] > p[0])) || !(levels[0] > 0.0) || !levels[levels.len() - 1].is_finite() {
        return Err(invalid("w_grid", "need at least two increasing targets above 1"));
    }
    let (g, v) = source.growth_and_variance(f)?;
    if g <= 0.0 {
        return Err(Error::NoPositiveGrowth(g));
    }
    let top = *levels.last().expect("nonempty grid");
    let taus: Vec<Vec<f64>> = match source {
        WealthSource::Iid(m) => {
            let cap = (100.0 * (top / g + 10.0 * (top * v / g.powi(3)).sqrt())) as usize + 1000;
            exec::map_range(replications, |i| discrete_passages(m, f, levels, seed, i as u64, cap))
                .into_iter()
                .collect::<Result<_>>()?
        }
        WealthSource::Ct { model: model @ CtModel::Gbm { .. }, dt } => {
            let per_level: Vec<Vec<f64>> = levels
                .iter()
                .map(|&l| simulate_first_passage(model, f, l.exp(), *dt, replications, seed))
                .collect::<Result<_>>()?;
            (0..replications).map(|i| per_level.iter().map(|l| l[i]).collect()).collect()
        }
        _ => return Err(invalid("source", "renewal check needs iid returns or the gbm model")),
    };
    let slopes: Vec<f64> = taus.iter().map(|t| ols_slope(levels, t)).collect();
    let (slope, slope_var) = mean_var(&slopes);
    let slope_se = (slope_var / replications as f64).sqrt();
    let slope_ok = (slope - 1.0 / g).abs() <= 3.0 * slope_se;

    let z: Vec<f64> = taus.iter().map(|t| (g / top).sqrt() * (t[t.len() - 1] - top / g)).collect();
    let target_var = v / (g * g);
    let sd = target_var.sqrt();
    let ks = ks_test(&z, |x| standard_normal_cdf(x / sd))?;
    let (_, zvar) = mean_var(&z);
    let var_ok = (zvar / target_var - 1.0).abs() <= 0.2;

    let top_mean = taus.iter().map(|t| t[t.len() - 1]).sum::<f64>() / replications as f64;
    let null = format!("passage times grow like ln w / g with CLT variance v / g^2 for {} at f = {f}", source.describe());
    let mut report = TestReport::new("renewal", null, top, replications, seed);
    report.statistic = ks.statistic;
    report.p_value = ks.p_value;
    report.pass = slope_ok && var_ok && ks.p_value >= report.level;
    report.note = Some("variance tolerance 20%; slope tolerance 3 standard errors".into());
    Ok(report
        .detail("g", g)
        .detail("v", v)
        .detail("slope", slope)
        .detail("slope_se", slope_se)
        .detail("slope_target", 1.0 / g)
        .detail("scaled_variance", zvar)
        .detail("scaled_variance_target", target_var)
        .detail("mean_tau_top", top_mean)
        .detail("mean_tau_top_target", top / g))
}

/// Limit law of `ln W_t - t g_R` in the logistic-price model: `f ln S*`
/// with `S* ~ Gamma(2 M mu / sigma^2 - 1, rate 2 mu / sigma^2)`.
pub fn gamma_limit_check(model: &CtModel, f: f64, t: f64, dt: f64, replications: usize, seed: u64) -> Result<TestReport> {
    let CtModel::LogisticPrice { mu_l, m, sigma } = *model else {
        return Err(invalid("model", "gamma limit check needs the logistic_price model"));
    };
    model.validate()?;
    let s2 = sigma * sigma;
    let (nu, alpha) = (2.0 * m * mu_l / s2 - 1.0, 2.0 * mu_l / s2);
    let g = ct_asymptotics(model)?.g(f);
    let null = format!("ln W_t - t g_R(f) ~ f ln Gamma({nu}, {alpha}) at f = {f}");
    let mut report = TestReport::new("gamma_limit", null, t, replications, seed);
    let source = WealthSource::Ct { model: *model, dt };
    let e = simulate_ensemble(&source, f, t, replications, seed)?;
    let x: Vec<f64> = e.terminal_log_wealth.iter().map(|lw| lw - t * g).collect();
    report = report.detail("nu", nu).detail("alpha", alpha).detail("g", g);
    if f == 0.0 {
        report.pass = x.iter().all(|&y| y == 0.0);
        report.p_value = if report.pass { 1.0 } else { 0.0 };
        report.note = Some("degenerate limit at 0".into());
        return Ok(report);
    }
    let law = GammaLaw::new(nu, alpha).map_err(|e| invalid("gamma", e.to_string()))?;
    let ks = ks_test(&x, |y| law.cdf((y / f).exp()))?;
    report.statistic = ks.statistic;
    report.p_value = ks.p_value;
    report.pass = ks.p_value >= report.level;
    Ok(report)
}
