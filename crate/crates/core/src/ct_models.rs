//! Continuous-time wealth `dW = f W dR` driven by
//! `R_t = int r_s ds + int sqrt(v_s) dB_s`.
//!
//! Each model carries closed-form asymptotics (`g_R`, `v_R` as polynomials
//! in `f`) and an SDE simulator. The second Brownian motion `B~` of the rate
//! or variance factor has correlation `rho_bar` with `B`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::rng::{substream, StreamRng};
use crate::scalar::grid_maximize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum CtModel {
    /// `R_t = mu t + sigma B_t`.
    Gbm { mu: f64, sigma: f64 },
    /// `dr = a (mu - r) dt + b dB~`, `v = sigma^2`.
    VasicekRate { a: f64, b: f64, mu: f64, sigma: f64, rho_bar: f64 },
    /// `dr = a (mu - r) dt + b sqrt(r) dB~`, `v = sigma^2`.
    CirRate { a: f64, b: f64, mu: f64, sigma: f64, rho_bar: f64 },
    /// `r = mu`, `dv = kappa (sigma2 - v) dt + beta sqrt(v) dB~`.
    HestonVol { mu: f64, kappa: f64, sigma2: f64, beta: f64, rho_bar: f64 },
    /// `dr = r (1 - r/mu) (a_l dt + b_l dB~)` with `B~` independent of `B`,
    /// `v = sigma^2`, started at `r0`.
    LogisticRate { a_l: f64, b_l: f64, mu: f64, sigma: f64, r0: f64 },
    /// `dS = mu_l S (M - S) dt + sigma S dB`, `S_0 = 1`, `R = ln S + sigma^2 t / 2`.
    LogisticPrice {
        mu_l: f64,
        #[serde(rename = "M")]
        m: f64,
        sigma: f64,
    },
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(name, format!("{x} must be positive")));
    }
    Ok(())
}

fn correlation(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(invalid("rho_bar", format!("{rho} must lie in [-1, 1]")));
    }
    Ok(())
}

impl CtModel {
    /// Checks the parameter constraints; every constructor path goes
    /// through here and nothing is clamped.
    pub fn validate(&self) -> Result<()> {
        match *self {
            CtModel::Gbm { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(invalid("mu", "must be finite"));
                }
                positive("sigma", sigma)
            }
            CtModel::VasicekRate { a, b, mu, sigma, rho_bar } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("mu", mu)?;
                positive("sigma", sigma)?;
                correlation(rho_bar)
            }
            CtModel::CirRate { a, b, mu, sigma, rho_bar } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("mu", mu)?;
                positive("sigma", sigma)?;
                correlation(rho_bar)?;
                if 2.0 * mu * a < b * b {
                    return Err(invalid("b", format!("Feller condition 2 mu a >= b^2 fails: {} < {}", 2.0 * mu * a, b * b)));
                }
                Ok(())
            }
            CtModel::HestonVol { mu, kappa, sigma2, beta, rho_bar } => {
                positive("mu", mu)?;
                positive("kappa", kappa)?;
                positive("sigma2", sigma2)?;
                positive("beta", beta)?;
                correlation(rho_bar)?;
                if 2.0 * kappa * sigma2 < beta * beta {
                    return Err(invalid(
                        "beta",
                        format!("Feller condition 2 kappa sigma2 >= beta^2 fails: {} < {}", 2.0 * kappa * sigma2, beta * beta),
                    ));
                }
                Ok(())
            }
            CtModel::LogisticRate { a_l, b_l, mu, sigma, r0 } => {
                positive("a_l", a_l)?;
                positive("mu", mu)?;
                positive("sigma", sigma)?;
                if !(b_l >= 0.0 && b_l.is_finite()) {
                    return Err(invalid("b_l", format!("{b_l} must be nonnegative")));
                }
                if 2.0 * a_l <= b_l * b_l {
                    return Err(invalid("b_l", format!("need 2 a_l > b_l^2, got {} <= {}", 2.0 * a_l, b_l * b_l)));
                }
                if !(r0 > 0.0 && r0 < mu) {
                    return Err(invalid("r0", format!("{r0} must lie in (0, mu = {mu})")));
                }
                Ok(())
            }
            CtModel::LogisticPrice { mu_l, m, sigma } => {
                positive("mu_l", mu_l)?;
                positive("sigma", sigma)?;
                if !(m > 1.0 && m.is_finite()) {
                    return Err(invalid("M", format!("{m} must exceed 1")));
                }
                if 2.0 * m * mu_l <= sigma * sigma {
                    return Err(invalid("sigma", format!("need 2 M mu_l > sigma^2, got {} <= {}", 2.0 * m * mu_l, sigma * sigma)));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CtModel::Gbm { .. } => "gbm",
            CtModel::VasicekRate { .. } => "vasicek_rate",
            CtModel::CirRate { .. } => "cir_rate",
            CtModel::HestonVol { .. } => "heston_vol",
            CtModel::LogisticRate { .. } => "logistic_rate",
            CtModel::LogisticPrice { .. } => "logistic_price",
        }
    }

    /// Long-run mean `mu` and variance rate `sigma^2` of the return process.
    pub fn mu_sigma2(&self) -> (f64, f64) {
        match *self {
            CtModel::Gbm { mu, sigma }
            | CtModel::VasicekRate { mu, sigma, .. }
            | CtModel::CirRate { mu, sigma, .. }
            | CtModel::LogisticRate { mu, sigma, .. } => (mu, sigma * sigma),
            CtModel::HestonVol { mu, sigma2, .. } => (mu, sigma2),
            // R = ln S + sigma^2 t / 2 and ln S is stationary
            CtModel::LogisticPrice { sigma, .. } => (sigma * sigma / 2.0, sigma * sigma),
        }
    }
}

/// `E sqrt(r*)` for the CIR invariant law Gamma(nu, 2a/b^2), `nu = 2 a mu / b^2`.
pub fn cir_mu_tilde(a: f64, b: f64, mu: f64) -> f64 {
    let nu = 2.0 * a * mu / (b * b);
    b * (ln_gamma(nu + 0.5) - ln_gamma(nu)).exp() / (2.0 * a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluctuationOrder {
    /// `ln W_t - t g_R` is of order `sqrt(t)`.
    SqrtT,
    /// `ln W_t - t g_R` converges in law without scaling.
    Constant,
}

/// Closed-form long-run behaviour of a continuous-time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtAsymptotics {
    /// `g_R(f) = sum g[i] f^i`.
    pub g_coefficients: [f64; 3],
    /// `v_R(f) = sum v[i] f^i`.
    pub v_coefficients: [f64; 5],
    pub f_star: f64,
    pub fluctuation_order: FluctuationOrder,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

impl CtAsymptotics {
    pub fn g(&self, f: f64) -> f64 {
        poly(&self.g_coefficients, f)
    }

    pub fn v(&self, f: f64) -> f64 {
        poly(&self.v_coefficients, f).max(0.0)
    }

    pub fn sharpe(&self, f: f64) -> Result<f64> {
        let (g, v) = (self.g(f), self.v(f));
        if v > 0.0 {
            Ok(g / v.sqrt())
        } else if g > 0.0 {
            Ok(f64::INFINITY)
        } else {
            Err(Error::UndefinedRatio)
        }
    }

    /// `v_R = f^2 c^2` for some `c`.
    pub fn is_quadratic(&self) -> bool {
        self.v_coefficients[3] == 0.0 && self.v_coefficients[4] == 0.0
    }
}

pub fn ct_asymptotics(model: &CtModel) -> Result<CtAsymptotics> {
    model.validate()?;
    let (mu, s2) = model.mu_sigma2();
    let g = [0.0, mu, -s2 / 2.0];
    let quadratic = |c2: f64| [0.0, 0.0, c2, 0.0, 0.0];
    let mut v = match *model {
        CtModel::Gbm { .. } | CtModel::LogisticRate { .. } => quadratic(s2),
        CtModel::VasicekRate { a, b, sigma, rho_bar, .. } => {
            quadratic(b * b / (a * a) + sigma * sigma + 2.0 * rho_bar * sigma * b / a)
        }
        CtModel::CirRate { a, b, mu, sigma, rho_bar } => {
            let mt = cir_mu_tilde(a, b, mu);
            quadratic(b * b * mu / (a * a) + sigma * sigma + 2.0 * rho_bar * sigma * b * mt / a)
        }
        CtModel::HestonVol { kappa, sigma2, beta, rho_bar, .. } => [
            0.0,
            0.0,
            sigma2,
            -rho_bar * beta * sigma2 / kappa,
            beta * beta * sigma2 / (4.0 * kappa * kappa),
        ],
        CtModel::LogisticPrice { .. } => [0.0; 5],
    };
    // no signed zeros in reports
    v.iter_mut().for_each(|c| *c += 0.0);
    let fluctuation_order = match model {
        CtModel::LogisticPrice { .. } => FluctuationOrder::Constant,
        _ => FluctuationOrder::SqrtT,
    };
    Ok(CtAsymptotics { g_coefficients: g, v_coefficients: v, f_star: mu / s2, fluctuation_order })
}

/// Maximizer of `g_R - gamma v_R`: `mu / (sigma^2 + 2 gamma c^2)` when
/// `v_R = f^2 c^2`, a grid-and-Brent search otherwise.
pub fn ct_ridge(model: &CtModel, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("{gamma} must be nonnegative")));
    }
    let asy = ct_asymptotics(model)?;
    if asy.is_quadratic() {
        let [_, c1, c2] = asy.g_coefficients;
        return Ok(c1 / (-2.0 * c2 + 2.0 * gamma * asy.v_coefficients[2]));
    }
    let hi = 2.0 * asy.f_star.abs().max(1.0);
    let best = grid_maximize(|f| asy.g(f) - gamma * asy.v(f), 0.0, hi, 4001, 1e-12);
    Ok(best.x)
}

/// Exponent of the power utility `x^eta / eta` whose Merton fraction equals
/// the ridge optimum: `eta = -2 gamma`.
pub fn power_utility_equivalent(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("{gamma} must be positive")));
    }
    Ok(-2.0 * gamma)
}

// ---------------------------------------------------------------------------
// simulation

/// State of a simulated path at one grid time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtState {
    pub time: f64,
    pub r: f64,
    pub v: f64,
    /// Cumulative return `R_t`.
    pub big_r: f64,
    /// Driving Brownian motion `B_t`.
    pub b: f64,
    pub log_wealth: f64,
    /// `int_0^t v_s ds`.
    pub int_v: f64,
    /// `int_0^t r_s ds`.
    pub int_r: f64,
}

/// Full path on the simulation grid (including time 0).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CtPath {
    pub dt: f64,
    pub states: Vec<CtState>,
    /// Burn-in discarded before time 0, if any.
    pub burn_in: f64,
}

impl CtPath {
    pub fn terminal(&self) -> &CtState {
        self.states.last().expect("path has at least the initial state")
    }

    /// CSV with header `t,r,v,logW`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,r,v,logW")?;
        for s in &self.states {
            writeln!(out, "{:?},{:?},{:?},{:?}", s.time, s.r, s.v, s.log_wealth)?;
        }
        Ok(())
    }
}

/// Default burn-in fraction for the logistic-rate model, which has no
/// known invariant law to start from.
pub const LOGISTIC_BURN_IN: f64 = 0.1;

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn gamma_draw(rng: &mut StreamRng, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters").sample(rng)
}

fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// Simulation engine: calls `observe` at time 0 and after every step.
fn run<O: FnMut(&CtState)>(model: &CtModel, f: f64, t: f64, dt: f64, rng: &mut StreamRng, mut observe: O) -> Result<f64> {
    model.validate()?;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidFraction(f));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    // the Gbm path is exact on any grid
    let max_dt = if matches!(model, CtModel::Gbm { .. }) { f64::INFINITY } else { 1e-2 };
    if !(dt > 0.0 && dt <= max_dt) {
        return Err(invalid("dt", format!("{dt} must lie in (0, 1e-2]")));
    }
    let steps = (t / dt).round().max(1.0) as usize;
    let sq = dt.sqrt();
    let mut s = CtState::default();
    let (mu, s2) = model.mu_sigma2();
    s.v = s2;
    s.r = mu;
    let rho = match *model {
        CtModel::VasicekRate { rho_bar, .. } | CtModel::CirRate { rho_bar, .. } | CtModel::HestonVol { rho_bar, .. } => rho_bar,
        _ => 0.0,
    };
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();

    // factor state: r for rate models, v for Heston, Y = logit(r/mu) or X = ln S
    let mut x = match *model {
        CtModel::VasicekRate { a, b, mu, .. } => mu + b / (2.0 * a).sqrt() * normal(rng),
        CtModel::CirRate { a, b, mu, .. } => gamma_draw(rng, 2.0 * a * mu / (b * b), 2.0 * a / (b * b)),
        CtModel::HestonVol { kappa, sigma2, beta, .. } => {
            gamma_draw(rng, 2.0 * kappa * sigma2 / (beta * beta), 2.0 * kappa / (beta * beta))
        }
        CtModel::LogisticRate { mu, r0, .. } => (r0 / (mu - r0)).ln(),
        _ => 0.0,
    };
    if let CtModel::CirRate { a, b, mu, .. } = *model {
        if 2.0 * a * mu / (b * b) < 1.5 && dt > 1e-3 {
            log::warn!("CIR Feller ratio {:.3} is below 1.5; consider dt <= 1e-3", 2.0 * a * mu / (b * b));
        }
    }
    let mut burn_in = 0.0;
    if let CtModel::LogisticRate { a_l, b_l, .. } = *model {
        let burn = ((LOGISTIC_BURN_IN * t) / dt).round() as usize;
        for _ in 0..burn {
            let _ = normal(rng);
            let z = normal(rng);
            x += (a_l + 0.5 * b_l * b_l * (0.5 * x).tanh()) * dt + b_l * sq * z;
        }
        burn_in = burn as f64 * dt;
    }

    let read = |x: f64, s: &mut CtState| match *model {
        CtModel::VasicekRate { .. } => s.r = x,
        CtModel::CirRate { .. } => s.r = x.max(0.0),
        CtModel::HestonVol { .. } => s.v = x.max(0.0),
        CtModel::LogisticRate { mu, .. } => s.r = mu * sigmoid(x),
        CtModel::LogisticPrice { mu_l, m, .. } => s.r = mu_l * (m - x.exp()),
        CtModel::Gbm { .. } => {}
    };
    read(x, &mut s);
    observe(&s);
    for k in 1..=steps {
        let db = sq * normal(rng);
        let dz = sq * normal(rng);
        let dbb = rho * db + rho_c * dz;
        let (r, v) = (s.r, s.v);
        let sv = v.sqrt();
        match *model {
            CtModel::VasicekRate { a, b, mu, .. } => x += a * (mu - x) * dt + b * dbb,
            CtModel::CirRate { a, b, mu, .. } => x += a * (mu - r) * dt + b * r.sqrt() * dbb,
            CtModel::HestonVol { kappa, sigma2, beta, .. } => x += kappa * (sigma2 - v) * dt + beta * sv * dbb,
            CtModel::LogisticRate { a_l, b_l, .. } => x += (a_l + 0.5 * b_l * b_l * (0.5 * x).tanh()) * dt + b_l * dz,
            CtModel::LogisticPrice { mu_l, m, sigma } => x += (mu_l * (m - x.exp()) - 0.5 * sigma * sigma) * dt + sigma * db,
            CtModel::Gbm { .. } => {}
        }
        s.big_r += r * dt + sv * db;
        s.int_r += r * dt;
        s.int_v += v * dt;
        s.log_wealth += f * r * dt - 0.5 * f * f * v * dt + f * sv * db;
        s.b += db;
        s.time = k as f64 * dt;
        read(x, &mut s);
        if let CtModel::LogisticPrice { sigma, .. } = *model {
            // exact identities R = ln S + sigma^2 t / 2, ln W = f R - f^2 sigma^2 t / 2
            s.big_r = x + 0.5 * sigma * sigma * s.time;
            s.log_wealth = f * s.big_r - 0.5 * f * f * sigma * sigma * s.time;
        }
        if !(s.log_wealth.is_finite() && x.is_finite()) {
            return Err(Error::NonFinitePath(s.time));
        }
        observe(&s);
    }
    Ok(burn_in)
}

/// Simulates one path on the grid `dt` up to time `t` and records every
/// state. Geometric Brownian motion is exact on the grid; Vasicek, logistic
/// rate and logistic price use Euler-Maruyama (the logistic models in their
/// log-coordinates); CIR and Heston use full-truncation Euler. Rate and
/// variance factors start from their invariant laws when known.
pub fn simulate_ct(model: &CtModel, f: f64, t: f64, dt: f64, seed: u64) -> Result<CtPath> {
    let mut rng = substream(seed, 0);
    let mut states = Vec::with_capacity((t / dt) as usize + 2);
    let burn_in = run(model, f, t, dt, &mut rng, |s| states.push(*s))?;
    Ok(CtPath { dt, states, burn_in })
}

/// Terminal state only.
pub fn simulate_ct_terminal(model: &CtModel, f: f64, t: f64, dt: f64, rng: &mut StreamRng) -> Result<CtState> {
    let mut last = CtState::default();
    run(model, f, t, dt, rng, |s| last = *s)?;
    Ok(last)
}

/// Terminal states of `replications` independent paths, path `i` on
/// substream `i` of `seed`.
pub fn ct_terminal_ensemble(
    model: &CtModel,
    f: f64,
    t: f64,
    dt: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<CtState>> {
    exec::map_range(replications, |i| {
        let mut rng = substream(seed, i as u64);
        simulate_ct_terminal(model, f, t, dt, &mut rng)
    })
    .into_iter()
    .collect()
}

// ---------------------------------------------------------------------------
// first passage

/// Inverse-Gaussian law of `tau_w = inf{t : W_t > w}` under geometric
/// Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageLaw {
    pub w: f64,
    pub g: f64,
    pub v: f64,
    pub mean: f64,
    pub variance: f64,
}

impl FirstPassageLaw {
    pub fn pdf(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        let l = self.w.ln();
        l / self.v.sqrt() * (2.0 * PI * t * t * t).powf(-0.5) * (-(l - t * self.g).powi(2) / (2.0 * t * self.v)).exp()
    }
}

fn gbm_params(model: &CtModel) -> Result<(f64, f64)> {
    match *model {
        CtModel::Gbm { mu, sigma } => {
            model.validate()?;
            Ok((mu, sigma))
        }
        _ => Err(invalid("model", "first passage is available for the gbm model only")),
    }
}

pub fn first_passage_law(model: &CtModel, f: f64, w: f64) -> Result<FirstPassageLaw> {
    let (mu, sigma) = gbm_params(model)?;
    if !(w > 1.0 && w.is_finite()) {
        return Err(invalid("w", format!("{w} must exceed 1")));
    }
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidFraction(f));
    }
    let g = f * mu - 0.5 * f * f * sigma * sigma;
    if g <= 0.0 {
        return Err(Error::NoPositiveGrowth(g));
    }
    let v = f * f * sigma * sigma;
    let l = w.ln();
    Ok(FirstPassageLaw { w, g, v, mean: l / g, variance: v * l / (g * g * g) })
}

/// Passage times of `count` exact log-wealth paths on the grid `dt`, each
/// step checked for an unobserved crossing with the Brownian-bridge
/// probability `exp(-2 (L - x0)(L - x1) / (s^2 dt))`. Hits are timed at the
/// step midpoint.
pub fn simulate_first_passage(model: &CtModel, f: f64, w: f64, dt: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let law = first_passage_law(model, f, w)?;
    if !(dt > 0.0 && dt <= 1e-1) {
        return Err(invalid("dt", format!("{dt} must lie in (0, 0.1]")));
    }
    if count == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    let level = w.ln();
    let s2 = law.v;
    let cap = ((law.mean + 50.0 * law.variance.sqrt()) / dt).ceil() as usize;
    let drift = law.g * dt;
    let scale = (s2 * dt).sqrt();
    exec::map_range(count, |i| {
        let mut rng = substream(seed, i as u64);
        let mut x = 0.0;
        for k in 0..cap {
            let next = x + drift + scale * normal(&mut rng);
            let u: f64 = rng.random();
            let crossed =
                next >= level || u < (-2.0 * (level - x) * (level - next) / (s2 * dt)).exp();
            if crossed {
                return Ok((k as f64 + 0.5) * dt);
            }
            x = next;
        }
        Err(Error::PassageCap(cap))
    })
    .into_iter()
    .collect()
}
