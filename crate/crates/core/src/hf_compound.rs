//! High-frequency compounding: `n` bets per unit time with returns
//! `r = mu/n + sigma xi/sqrt(n)` (arithmetic) or
//! `r = exp((mu - sigma^2/2)/n + sigma xi/sqrt(n)) - 1` (geometric), driven
//! by a zero-mean, unit-variance sequence `xi`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ct_models::{simulate_ct, CtModel};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::quadrature::{integrate, QuadratureSpec};
use crate::rng::{substream, StreamRng};
use crate::scalar::brent_root;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HfKind {
    Arithmetic,
    /// Log-returns with the `-sigma^2/(2n)` Ito correction.
    Geometric,
}

/// Innovation sequence `xi_k`; every variant has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "driver", rename_all = "snake_case")]
pub enum HfDriver {
    Gaussian,
    /// `(X - (2p - 1)) / (2 sqrt(p(1-p)))` with `X = +-1` w.p. `p`, `1-p`.
    StandardizedBernoulli { p: f64 },
    /// `E - 1` with `E` standard exponential (skewness 2).
    StandardizedExponential,
    /// Stationary Gaussian AR(1) with unit variance and coefficient `a`.
    Ar1 { a: f64 },
}

/// Long-run variance factor of the partial sums of the driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoNormalSpec {
    pub rho_sq: f64,
}

impl HfDriver {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HfDriver::StandardizedBernoulli { p } if !(p > 0.0 && p < 1.0) => {
                Err(invalid("p", format!("{p} must lie in (0, 1)")))
            }
            HfDriver::Ar1 { a } if !(a.abs() < 1.0) => Err(invalid("a", format!("|{a}| must be below 1"))),
            _ => Ok(()),
        }
    }

    pub fn rho_normal(&self) -> RhoNormalSpec {
        let rho_sq = match *self {
            HfDriver::Ar1 { a } => (1.0 + a) / (1.0 - a),
            _ => 1.0,
        };
        RhoNormalSpec { rho_sq }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfScheme {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub kind: HfKind,
    pub driver: HfDriver,
}

/// Stateful draw of `xi_k` (only the AR(1) driver carries state).
struct DriverState {
    driver: HfDriver,
    prev: f64,
}

impl DriverState {
    fn new(driver: HfDriver, rng: &mut StreamRng) -> Self {
        let prev = match driver {
            HfDriver::Ar1 { .. } => StandardNormal.sample(rng),
            _ => 0.0,
        };
        Self { driver, prev }
    }

    fn next(&mut self, rng: &mut StreamRng) -> f64 {
        match self.driver {
            HfDriver::Gaussian => StandardNormal.sample(rng),
            HfDriver::StandardizedBernoulli { p } => {
                let x = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
                (x - (2.0 * p - 1.0)) / (2.0 * (p * (1.0 - p)).sqrt())
            }
            HfDriver::StandardizedExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            HfDriver::Ar1 { a } => {
                // the first draw is the stationary start itself
                let x = self.prev;
                let z: f64 = StandardNormal.sample(rng);
                self.prev = a * x + (1.0 - a * a).sqrt() * z;
                x
            }
        }
    }
}

impl HfScheme {
    pub fn new(mu: f64, sigma: f64, n: usize, kind: HfKind, driver: HfDriver) -> Result<Self> {
        let s = Self { mu, sigma, n, kind, driver };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("{} must be positive", self.sigma)));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        self.driver.validate()
    }

    /// Return `r_{n,k}` for innovation `xi`.
    pub fn step_return(&self, xi: f64) -> f64 {
        let n = self.n as f64;
        match self.kind {
            HfKind::Arithmetic => self.mu / n + self.sigma * xi / n.sqrt(),
            HfKind::Geometric => ((self.mu - 0.5 * self.sigma * self.sigma) / n + self.sigma * xi / n.sqrt()).exp_m1(),
        }
    }

    /// `E h(xi)` under the one-dimensional marginal of the driver. The range
    /// is split at fixed breakpoints so that no piece is much wider than the
    /// density's scale (a single wide panel can see only zeros of `h`).
    fn expect<H: Fn(f64) -> f64>(&self, h: H) -> Result<f64> {
        let spec = QuadratureSpec { abs_tol: 1e-16, rel_tol: 1e-12, max_subdivisions: 4000 };
        let pieces = |w: &dyn Fn(f64) -> f64, cuts: &[f64]| -> Result<f64> {
            let mut total = 0.0;
            for c in cuts.windows(2) {
                total += integrate(|x| w(x) * h(x), c[0], c[1], &spec)?.value;
            }
            Ok(total)
        };
        match self.driver {
            HfDriver::Gaussian | HfDriver::Ar1 { .. } => {
                let c = (2.0 * std::f64::consts::PI).sqrt().recip();
                let cuts = [-40.0, -12.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 12.0, 40.0];
                pieces(&|z| c * (-0.5 * z * z).exp(), &cuts)
            }
            HfDriver::StandardizedExponential => {
                // xi = E - 1 on [-1, 79]
                let cuts = [-1.0, 0.0, 1.0, 3.0, 7.0, 15.0, 30.0, 79.0];
                pieces(&|x| (-(x + 1.0)).exp(), &cuts)
            }
            HfDriver::StandardizedBernoulli { p } => {
                let (m, s) = (2.0 * p - 1.0, 2.0 * (p * (1.0 - p)).sqrt());
                Ok(p * h((1.0 - m) / s) + (1.0 - p) * h((-1.0 - m) / s))
            }
        }
    }

    fn unbounded_below(&self) -> bool {
        self.kind == HfKind::Arithmetic && matches!(self.driver, HfDriver::Gaussian | HfDriver::Ar1 { .. })
    }

    /// Exact `g_n(f) = n E ln(1 + f r_{n,1})`, by quadrature over the driver
    /// marginal. Arithmetic returns with a Gaussian driver put positive
    /// mass on `1 + f r <= 0`, so `g_n = -inf` for every `f > 0`.
    pub fn exact_growth(&self, f: f64) -> Result<f64> {
        self.validate()?;
        check_fraction(f)?;
        if f == 0.0 {
            return Ok(0.0);
        }
        if self.unbounded_below() {
            return Ok(f64::NEG_INFINITY);
        }
        let n = self.n as f64;
        let e = self.expect(|x| {
            let w = 1.0 + f * self.step_return(x);
            if w > 0.0 {
                w.ln()
            } else {
                f64::NEG_INFINITY
            }
        })?;
        Ok(n * e)
    }

    /// `g_n'(f) = n E[r / (1 + f r)]`.
    pub fn exact_growth_derivative(&self, f: f64) -> Result<f64> {
        self.validate()?;
        check_fraction(f)?;
        let n = self.n as f64;
        Ok(n * self.expect(|x| {
            let r = self.step_return(x);
            r / (1.0 + f * r)
        })?)
    }

    /// Exact mean and variance of one return under the Gaussian marginal.
    pub fn gaussian_moments(&self) -> (f64, f64) {
        let n = self.n as f64;
        let s2 = self.sigma * self.sigma / n;
        match self.kind {
            HfKind::Arithmetic => (self.mu / n, s2),
            HfKind::Geometric => {
                let m = (self.mu - 0.5 * self.sigma * self.sigma) / n;
                ((self.mu / n).exp_m1(), (2.0 * m + s2).exp() * s2.exp_m1())
            }
        }
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidFraction(f));
    }
    Ok(())
}

/// Log-wealth path `ln W_{k/n}`, `k = 0..=floor(n t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HfPath {
    pub n: usize,
    pub log_wealth: Vec<f64>,
}

impl HfPath {
    pub fn terminal(&self) -> f64 {
        *self.log_wealth.last().expect("path contains the initial value")
    }
}

fn steps_for(scheme: &HfScheme, t: f64) -> Result<usize> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    Ok((scheme.n as f64 * t).floor() as usize)
}

fn run_hf<O: FnMut(f64)>(scheme: &HfScheme, f: f64, steps: usize, rng: &mut StreamRng, mut observe: O) -> Result<f64> {
    let mut driver = DriverState::new(scheme.driver, rng);
    let mut lw = 0.0;
    observe(lw);
    for k in 1..=steps {
        let r = scheme.step_return(driver.next(rng));
        let w = 1.0 + f * r;
        if !(w > 0.0) {
            return Err(Error::Ruin { step: k, value: w });
        }
        lw += w.ln();
        observe(lw);
    }
    Ok(lw)
}

/// Product of `floor(n t)` factors `1 + f r_{n,k}`, accumulated in logs.
pub fn simulate_hf_wealth(scheme: &HfScheme, f: f64, t: f64, seed: u64) -> Result<HfPath> {
    scheme.validate()?;
    check_fraction(f)?;
    let steps = steps_for(scheme, t)?;
    let mut rng = substream(seed, 0);
    let mut log_wealth = Vec::with_capacity(steps + 1);
    run_hf(scheme, f, steps, &mut rng, |x| log_wealth.push(x))?;
    Ok(HfPath { n: scheme.n, log_wealth })
}

/// Terminal `ln W_t` of `replications` independent paths.
pub fn hf_terminal_ensemble(scheme: &HfScheme, f: f64, t: f64, replications: usize, seed: u64) -> Result<Vec<f64>> {
    scheme.validate()?;
    check_fraction(f)?;
    let steps = steps_for(scheme, t)?;
    exec::map_range(replications, |i| {
        let mut rng = substream(seed, i as u64);
        run_hf(scheme, f, steps, &mut rng, |_| {})
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfGrowth {
    pub value: f64,
    pub std_error: f64,
    pub horizon: f64,
    pub replications: usize,
}

/// Monte Carlo `g_n(f)`: the mean of `ln W_T / T` over replications.
pub fn hf_growth(scheme: &HfScheme, f: f64, horizon: f64, replications: usize, seed: u64) -> Result<HfGrowth> {
    if horizon < 100.0 {
        return Err(invalid("horizon", format!("{horizon} is below the minimum of 100")));
    }
    if replications < 2 {
        return Err(invalid("replications", "need at least 2"));
    }
    let x: Vec<f64> = hf_terminal_ensemble(scheme, f, horizon, replications, seed)?
        .into_iter()
        .map(|lw| lw / horizon)
        .collect();
    let k = x.len() as f64;
    let mean = exec::compensated_sum(x.iter().copied()) / k;
    let var = exec::compensated_sum(x.iter().map(|v| (v - mean).powi(2))) / (k - 1.0);
    if !(mean.is_finite() && var.is_finite()) {
        return Err(Error::HeavyTail(format!("average of ln W_T / T diverged ({mean})")));
    }
    Ok(HfGrowth { value: mean, std_error: (var / k).sqrt(), horizon, replications })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfKelly {
    pub n: usize,
    pub f_star: f64,
    /// Exact `g_n(f_n*)`.
    pub growth: f64,
    pub boundary: bool,
}

/// `f_n* = argmax_{[0,1]} g_n`, from the root of the exact derivative.
pub fn hf_kelly(scheme: &HfScheme) -> Result<HfKelly> {
    scheme.validate()?;
    if scheme.unbounded_below() {
        return Err(invalid("kind", "arithmetic returns with a Gaussian driver ruin with positive probability"));
    }
    let d0 = scheme.exact_growth_derivative(0.0)?;
    let (f, boundary) = if d0 <= 0.0 {
        (0.0, true)
    } else {
        let d1 = scheme.exact_growth_derivative(1.0)?;
        if d1 >= 0.0 {
            (1.0, true)
        } else {
            let d = |f: f64| scheme.exact_growth_derivative(f).unwrap_or(f64::NAN);
            (brent_root(d, 0.0, 1.0, 1e-13, 200)?, false)
        }
    };
    Ok(HfKelly { n: scheme.n, f_star: f, growth: scheme.exact_growth(f)?, boundary })
}

/// Pathwise comparison of the two discretizations of a continuous model
/// with the limit `f R_t + f(1-f)/2 int v`, on the coarse grid `k/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HfCtComparison {
    pub n: usize,
    pub times: Vec<f64>,
    /// `prod (1 + f (exp(R_{k/n} - R_{(k-1)/n}) - 1))`, in logs.
    pub exact_increment: Vec<f64>,
    /// Returns `exp(r_{(k-1)/n}/n + sqrt(v_{(k-1)/n}) dB_k) - 1`, in logs.
    pub frozen_coefficient: Vec<f64>,
    pub limit: Vec<f64>,
    pub sup_exact: f64,
    pub sup_frozen: f64,
}

/// Fine sub-steps per coarse step used by [`discretize_ct`].
pub fn ct_substeps(model: &CtModel, n: usize) -> usize {
    match model {
        CtModel::Gbm { .. } => 1,
        _ => 4.max((100.0 / n as f64).ceil() as usize),
    }
}

/// Builds both discretizations and the limit on one simulated path with
/// `ct_substeps` fine steps per bet.
pub fn discretize_ct(model: &CtModel, n: usize, f: f64, t: f64, seed: u64) -> Result<HfCtComparison> {
    check_fraction(f)?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let sub = ct_substeps(model, n);
    let dt = 1.0 / (n * sub) as f64;
    let coarse = (n as f64 * t).floor() as usize;
    if coarse == 0 {
        return Err(invalid("t", format!("{t} is shorter than one step")));
    }
    let path = simulate_ct(model, f, coarse as f64 / n as f64, dt, seed)?;
    let s = &path.states;
    let mut out = HfCtComparison {
        n,
        times: Vec::with_capacity(coarse + 1),
        exact_increment: Vec::with_capacity(coarse + 1),
        frozen_coefficient: Vec::with_capacity(coarse + 1),
        limit: Vec::with_capacity(coarse + 1),
        sup_exact: 0.0,
        sup_frozen: 0.0,
    };
    let (mut ex, mut fr) = (0.0, 0.0);
    for k in 0..=coarse {
        let cur = &s[k * sub];
        if k > 0 {
            let prev = &s[(k - 1) * sub];
            ex += (f * (cur.big_r - prev.big_r).exp_m1()).ln_1p();
            let p = (prev.r / n as f64 + prev.v.sqrt() * (cur.b - prev.b)).exp_m1();
            fr += (f * p).ln_1p();
        }
        let lim = f * cur.big_r + 0.5 * f * (1.0 - f) * cur.int_v;
        out.times.push(cur.time);
        out.exact_increment.push(ex);
        out.frozen_coefficient.push(fr);
        out.limit.push(lim);
        out.sup_exact = out.sup_exact.max((ex - lim).abs());
        out.sup_frozen = out.sup_frozen.max((fr - lim).abs());
    }
    Ok(out)
}
