//! Typed configuration, execution and report types of every subcommand.

use anyhow::Context;
use kelly_core::ct_models::{
    ct_asymptotics, ct_ridge, first_passage_law, power_utility_equivalent, simulate_ct, simulate_first_passage, CtAsymptotics,
    CtModel, CtPath, FirstPassageLaw,
};
use kelly_core::dependent::TwoStateChain;
use kelly_core::empirics::{clt_check, gamma_limit_check, lln_check, renewal_check_log, TestReport, WealthSource};
use kelly_core::hf_compound::{hf_growth, hf_kelly, HfDriver, HfKind, HfScheme};
use kelly_core::metrics::{risk_curve, write_curve_csv};
use kelly_core::optimize::{kelly_fraction, ridge_fraction, sharpe_fraction, variance_capped_fraction, StrategyReport};
use kelly_core::quadrature::{integrate_to_infinity, QuadratureSpec};
use kelly_core::rng::derive_seed;
use kelly_core::{MetricsConfig, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::config::{invalid_input, usage, ChainSpec, GridSpec, SourceSpec, MAX_FRACTION};

/// Version of every JSON format emitted.
pub const SCHEMA_VERSION: u32 = 1;

/// Bytes to write plus whether the run counts as a failure.
#[derive(Debug)]
pub struct Output {
    pub bytes: Vec<u8>,
    pub failed: bool,
}

impl Output {
    fn ok(bytes: Vec<u8>) -> Self {
        Self { bytes, failed: false }
    }
}

/// Common wrapper of JSON outputs: version, command, payload and the
/// resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<R, C> {
    pub schema: u32,
    pub command: String,
    #[serde(flatten)]
    pub report: R,
    pub config: C,
}

fn json_report<R: Serialize, C: Serialize>(command: &str, report: R, config: C) -> anyhow::Result<Vec<u8>> {
    let r = Report { schema: SCHEMA_VERSION, command: command.to_string(), report, config };
    let mut bytes = serde_json::to_vec_pretty(&r)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn fraction(name: &str, f: f64) -> anyhow::Result<()> {
    if !(0.0..=MAX_FRACTION).contains(&f) {
        return Err(usage(format!("invalid value for field `{name}`: {f} is outside [0, 1 - 1e-9]")));
    }
    Ok(())
}

fn default_gamma() -> f64 {
    1.0
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

/// Risk-profile curve as CSV.
pub fn analyze(cfg: &AnalyzeConfig) -> anyhow::Result<Output> {
    let model = cfg.model.build().map_err(invalid_input)?;
    let grid = cfg.grid.points()?;
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(usage(format!("invalid value for field `gamma`: {} must be nonnegative", cfg.gamma)));
    }
    let rows = risk_curve(&model, &grid, cfg.gamma, &MetricsConfig::default())?;
    let mut bytes = Vec::new();
    write_curve_csv(&mut bytes, &rows)?;
    Ok(Output::ok(bytes))
}

// ---------------------------------------------------------------------------
// optimize

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    Kelly,
    Ridge,
    Sharpe,
    #[serde(alias = "variance-capped")]
    VarianceCapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub model: ModelSpec,
    pub criterion: CriterionName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
}

impl OptimizeConfig {
    /// Fills the ridge default `gamma = 1` and rejects parameters the
    /// criterion does not use.
    pub fn normalize(mut self) -> anyhow::Result<Self> {
        match self.criterion {
            CriterionName::Ridge => {
                self.gamma.get_or_insert(1.0);
            }
            CriterionName::VarianceCapped if self.v0.is_none() => {
                return Err(usage("missing field `v0`: the variance_capped criterion needs a variance cap"));
            }
            _ => {}
        }
        if self.criterion != CriterionName::Ridge && self.gamma.is_some() {
            return Err(usage("field `gamma` is only used by the ridge criterion"));
        }
        if self.criterion != CriterionName::VarianceCapped && self.v0.is_some() {
            return Err(usage("field `v0` is only used by the variance_capped criterion"));
        }
        Ok(self)
    }
}

pub fn optimize(cfg: &OptimizeConfig) -> anyhow::Result<Output> {
    let model = cfg.model.build().map_err(invalid_input)?;
    let m = MetricsConfig::default();
    let report: StrategyReport = match cfg.criterion {
        CriterionName::Kelly => kelly_fraction(&model, &m)?,
        CriterionName::Ridge => ridge_fraction(&model, cfg.gamma.unwrap_or(1.0), &m).map_err(invalid_input)?,
        CriterionName::Sharpe => sharpe_fraction(&model, &m)?,
        CriterionName::VarianceCapped => {
            variance_capped_fraction(&model, cfg.v0.expect("normalized"), &m).map_err(invalid_input)?
        }
    };
    Ok(Output::ok(json_report("optimize", report, cfg)?))
}

// ---------------------------------------------------------------------------
// simulate

fn default_sim_dt() -> f64 {
    1e-3
}

fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: CtModel,
    pub f: f64,
    pub horizon: f64,
    #[serde(default = "default_sim_dt")]
    pub dt: f64,
    /// Keep every `every`-th grid point (the terminal point is always kept).
    #[serde(default = "default_every")]
    pub every: usize,
    pub seed: u64,
}

/// One simulated path as CSV `t,r,v,logW`.
pub fn simulate(cfg: &SimulateConfig) -> anyhow::Result<Output> {
    cfg.model.validate().map_err(invalid_input)?;
    fraction("f", cfg.f)?;
    if cfg.every == 0 {
        return Err(usage("invalid value for field `every`: must be at least 1"));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(usage(format!("invalid value for field `horizon`: {} must be positive", cfg.horizon)));
    }
    let path = simulate_ct(&cfg.model, cfg.f, cfg.horizon, cfg.dt, cfg.seed).map_err(invalid_input)?;
    let last = path.states.len() - 1;
    let states = path.states.iter().enumerate().filter(|(k, _)| k % cfg.every == 0 || *k == last).map(|(_, s)| *s).collect();
    let thinned = CtPath { states, ..path };
    let mut bytes = Vec::new();
    thinned.write_csv(&mut bytes)?;
    Ok(Output::ok(bytes))
}

// ---------------------------------------------------------------------------
// first-passage

fn default_passage_dt() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstPassageConfig {
    pub model: CtModel,
    pub f: f64,
    pub w: f64,
    /// Simulated passages; 0 gives the closed-form law only.
    #[serde(default)]
    pub count: usize,
    #[serde(default = "default_passage_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageSummary {
    pub count: usize,
    pub mean: f64,
    pub mean_std_error: f64,
    pub variance: f64,
    /// `(mean - E tau) / se`.
    pub mean_z: f64,
    /// Sample variance over `Var tau`.
    pub variance_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageReport {
    pub law: FirstPassageLaw,
    /// Numerical integral of the density over `(0, inf)`.
    pub pdf_mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<PassageSummary>,
}

pub fn first_passage(cfg: &FirstPassageConfig) -> anyhow::Result<Output> {
    let law = first_passage_law(&cfg.model, cfg.f, cfg.w).map_err(invalid_input)?;
    let spec = QuadratureSpec { abs_tol: 1e-12, rel_tol: 1e-12, max_subdivisions: 4000 };
    // split at the mean so the peak is resolved
    let mass = kelly_core::quadrature::integrate(|t| law.pdf(t), 0.0, law.mean, &spec)?.value
        + integrate_to_infinity(|t| law.pdf(t), law.mean, &spec)?.value;
    let simulated = if cfg.count > 0 {
        let seed = cfg.seed.ok_or_else(|| usage("missing field `seed`: simulated passages need a seed"))?;
        if cfg.count < 2 {
            return Err(usage("invalid value for field `count`: need at least 2 passages"));
        }
        let taus = simulate_first_passage(&cfg.model, cfg.f, cfg.w, cfg.dt, cfg.count, seed).map_err(invalid_input)?;
        let n = taus.len() as f64;
        let mean = taus.iter().sum::<f64>() / n;
        let variance = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (variance / n).sqrt();
        Some(PassageSummary {
            count: cfg.count,
            mean,
            mean_std_error: se,
            variance,
            mean_z: (mean - law.mean) / se,
            variance_ratio: variance / law.variance,
        })
    } else {
        None
    };
    let report = FirstPassageReport { law, pdf_mass: mass, simulated };
    Ok(Output::ok(json_report("first-passage", report, cfg)?))
}

// ---------------------------------------------------------------------------
// hf-converge

fn default_mu() -> f64 {
    0.02
}

fn default_sigma() -> f64 {
    0.2
}

fn default_kind() -> HfKind {
    HfKind::Geometric
}

fn default_driver() -> HfDriver {
    HfDriver::Gaussian
}

fn default_ns() -> Vec<usize> {
    vec![4, 16, 64, 256]
}

fn default_hf_horizon() -> f64 {
    1000.0
}

fn default_hf_replications() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HfConvergeConfig {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_kind")]
    pub kind: HfKind,
    #[serde(default = "default_driver")]
    pub driver: HfDriver,
    #[serde(default = "default_ns")]
    pub n: Vec<usize>,
    #[serde(default = "default_hf_horizon")]
    pub horizon: f64,
    #[serde(default = "default_hf_replications")]
    pub replications: usize,
    pub seed: u64,
}

pub const HF_HEADER: &str = "n,f_star,g_at_f_star,g_mc,se";

/// Per `n`: the exact maximizer and maximum of `g_n`, and a Monte Carlo
/// estimate of the growth at that maximizer.
pub fn hf_converge(cfg: &HfConvergeConfig) -> anyhow::Result<Output> {
    if cfg.n.is_empty() {
        return Err(usage("invalid value for field `n`: need at least one bet frequency"));
    }
    let mut out = format!("{HF_HEADER}\n");
    for (i, &n) in cfg.n.iter().enumerate() {
        let scheme = HfScheme::new(cfg.mu, cfg.sigma, n, cfg.kind, cfg.driver).map_err(invalid_input)?;
        let k = hf_kelly(&scheme).with_context(|| format!("n = {n}"))?;
        let mc = hf_growth(&scheme, k.f_star, cfg.horizon, cfg.replications, derive_seed(cfg.seed, i as u64))
            .map_err(invalid_input)
            .with_context(|| format!("n = {n}"))?;
        out.push_str(&format!("{n},{:?},{:?},{:?},{:?}\n", k.f_star, k.growth, mc.value, mc.std_error));
        log::info!("n = {n}: f* = {}, g = {}", k.f_star, k.growth);
    }
    Ok(Output::ok(out.into_bytes()))
}

// ---------------------------------------------------------------------------
// ct-asymptotics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtAsymptoticsConfig {
    pub model: CtModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtPoint {
    pub f: f64,
    pub g: f64,
    pub v: f64,
    /// Absent where the ratio is undefined or infinite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtAsymptoticsReport {
    pub model_name: String,
    #[serde(flatten)]
    pub asymptotics: CtAsymptotics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_ri: Option<f64>,
    /// Power-utility exponent with the same optimal fraction as the ridge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_utility_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<CtPoint>,
}

pub fn ct_asymptotics_cmd(cfg: &CtAsymptoticsConfig) -> anyhow::Result<Output> {
    let a = ct_asymptotics(&cfg.model).map_err(invalid_input)?;
    let (f_ri, power) = match cfg.gamma {
        Some(g) => (Some(ct_ridge(&cfg.model, g).map_err(invalid_input)?), Some(power_utility_equivalent(g).map_err(invalid_input)?)),
        None => (None, None),
    };
    let at = match cfg.f {
        Some(f) => {
            fraction("f", f)?;
            let sr = a.sharpe(f).ok().filter(|s| s.is_finite());
            Some(CtPoint { f, g: a.g(f), v: a.v(f), sr })
        }
        None => None,
    };
    let report = CtAsymptoticsReport { model_name: cfg.model.name().to_string(), asymptotics: a, f_ri, power_utility_exponent: power, at };
    Ok(Output::ok(json_report("ct-asymptotics", report, cfg)?))
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lln,
    Clt,
    Renewal,
    #[serde(alias = "gamma-limit")]
    GammaLimit,
}

fn default_replications() -> usize {
    1000
}

fn default_verify_dt() -> f64 {
    1e-2
}

/// `ln w` targets of the renewal suite. Passage times at small levels are
/// still visibly skewed, so the defaults are large.
pub const DEFAULT_LOG_LEVELS: [f64; 4] = [250.0, 500.0, 1000.0, 2000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: Suite,
    pub model: SourceSpec,
    pub f: f64,
    /// Steps for discrete sources, time for continuous ones. Not used by
    /// the renewal suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    /// Grid step for continuous-time sources.
    #[serde(default = "default_verify_dt")]
    pub dt: f64,
    /// Renewal targets as wealth levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_grid: Option<Vec<f64>>,
    /// Renewal targets as `ln w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_override: Option<f64>,
}

impl VerifyConfig {
    /// Fills suite-dependent defaults so the echoed configuration is
    /// complete.
    pub fn normalize(mut self) -> anyhow::Result<Self> {
        let ct = matches!(self.model, SourceSpec::Ct(_));
        match self.suite {
            Suite::Renewal => {
                if self.horizon.is_some() {
                    return Err(usage("field `horizon` is not used by the renewal suite"));
                }
                match (&self.w_grid, &self.log_w) {
                    (Some(_), Some(_)) => return Err(usage("give either `w_grid` or `log_w`, not both")),
                    (Some(w), None) => {
                        if w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                            return Err(usage("invalid value for field `w_grid`: targets must be positive and finite"));
                        }
                    }
                    (None, None) => self.log_w = Some(DEFAULT_LOG_LEVELS.to_vec()),
                    (None, Some(_)) => {}
                }
            }
            _ => {
                if self.w_grid.is_some() || self.log_w.is_some() {
                    return Err(usage("renewal targets are only used by the renewal suite"));
                }
                let default = match (self.suite, ct) {
                    (Suite::GammaLimit, _) => 200.0,
                    (_, true) => 100.0,
                    (_, false) => 1000.0,
                };
                self.horizon.get_or_insert(default);
            }
        }
        if self.variance_override.is_some() && self.suite != Suite::Clt {
            return Err(usage("field `variance_override` is only used by the clt suite"));
        }
        Ok(self)
    }

    fn source(&self) -> anyhow::Result<WealthSource> {
        Ok(match self.model {
            SourceSpec::Iid(m) => WealthSource::Iid(m.build().map_err(invalid_input)?),
            SourceSpec::Chain(ChainSpec::TwoStateChain { p, q }) => {
                WealthSource::Chain(TwoStateChain::new(p, q).map_err(invalid_input)?)
            }
            SourceSpec::Ct(model) => {
                model.validate().map_err(invalid_input)?;
                WealthSource::Ct { model, dt: self.dt }
            }
        })
    }
}

/// Runs one verification suite; the output counts as failed when the
/// check ran and rejected.
pub fn verify(cfg: &VerifyConfig) -> anyhow::Result<Output> {
    fraction("f", cfg.f)?;
    let source = cfg.source()?;
    let horizon = cfg.horizon.unwrap_or(0.0);
    let report: TestReport = match cfg.suite {
        Suite::Lln => lln_check(&source, cfg.f, horizon, cfg.replications, cfg.seed),
        Suite::Clt => clt_check(&source, cfg.f, horizon, cfg.replications, cfg.seed, cfg.variance_override),
        Suite::Renewal => {
            let levels: Vec<f64> = match (&cfg.w_grid, &cfg.log_w) {
                (Some(w), _) => w.iter().map(|x| x.ln()).collect(),
                (None, Some(l)) => l.clone(),
                (None, None) => DEFAULT_LOG_LEVELS.to_vec(),
            };
            renewal_check_log(&source, cfg.f, &levels, cfg.replications, cfg.seed)
        }
        Suite::GammaLimit => match cfg.model {
            SourceSpec::Ct(model) => gamma_limit_check(&model, cfg.f, horizon, cfg.dt, cfg.replications, cfg.seed),
            _ => return Err(usage("the gamma_limit suite needs the logistic_price model")),
        },
    }
    .map_err(invalid_input)?;
    let failed = !report.pass && !report.skipped;
    Ok(Output { bytes: json_report("verify", report, cfg)?, failed })
}
