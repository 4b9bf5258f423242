//! Stationary dependent returns: the two-state Markov chain on `{-1, +1}`,
//! the linear AR(1) sequence, and batch-means estimation of the long-run
//! variance `v~ = v + 2 sum_k Cov(ln(1 + f r_1), ln(1 + f r_{1+k}))`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{self, MetricsConfig};
use crate::return_models::{ReturnDistribution, SamplerFn};
use crate::rng::{stream, StreamRng};

/// Markov chain with `P(r' = 1 | r = 1) = p` and `P(r' = -1 | r = -1) = q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateChain {
    pub p: f64,
    pub q: f64,
}

impl TwoStateChain {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, x) in [("p", p), ("q", q)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(name, format!("{x} must lie in (0, 1)")));
            }
        }
        Ok(Self { p, q })
    }

    /// Invariant probability of `r = 1`.
    pub fn stationary_up(&self) -> f64 {
        (1.0 - self.q) / (2.0 - self.p - self.q)
    }

    /// Second eigenvalue of the transition matrix.
    pub fn rho(&self) -> f64 {
        self.p + self.q - 1.0
    }

    /// `2 pi - 1`, written as `1 - 2 (1 - pi)` to avoid cancelling `p - q`.
    pub fn mean_return(&self) -> f64 {
        1.0 - 2.0 * (1.0 - self.p) / (2.0 - self.p - self.q)
    }

    /// One-dimensional marginal law of `r_k` under stationarity.
    pub fn marginal(&self) -> ReturnDistribution {
        ReturnDistribution::Bernoulli { p: self.stationary_up() }
    }

    /// `v~ / v = (1 + rho) / (1 - rho) = (p + q) / (2 - p - q)`.
    pub fn variance_factor(&self) -> f64 {
        (self.p + self.q) / (2.0 - self.p - self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    ClosedForm,
    BatchMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRunVariance {
    pub v_tilde: f64,
    pub method: VarianceMethod,
    pub block_length: Option<usize>,
    pub batches: Option<usize>,
    pub std_error: Option<f64>,
}

/// Kelly fraction `max(0, (p - q) / (2 - p - q))` of the chain.
pub fn chain_kelly(chain: &TwoStateChain) -> f64 {
    chain.mean_return().max(0.0)
}

/// Closed-form long-run variance at fraction `f`.
pub fn chain_longrun_variance(chain: &TwoStateChain, f: f64) -> Result<LongRunVariance> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidFraction(f));
    }
    let v = metrics::asym_variance(&chain.marginal(), f, &MetricsConfig::default())?.value;
    Ok(LongRunVariance {
        v_tilde: chain.variance_factor() * v,
        method: VarianceMethod::ClosedForm,
        block_length: None,
        batches: None,
        std_error: None,
    })
}

/// `n` steps of the chain from a stationary start.
pub fn simulate_chain(chain: &TwoStateChain, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut rng = stream(seed);
    Ok(simulate_chain_with(chain, n, &mut rng))
}

pub(crate) fn simulate_chain_with(chain: &TwoStateChain, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut up = rng.random::<f64>() < chain.stationary_up();
    for _ in 0..n {
        out.push(if up { 1.0 } else { -1.0 });
        let u: f64 = rng.random();
        up = if up { u < chain.p } else { u >= chain.q };
    }
    out
}

/// Innovation law of an AR(1) sequence.
#[derive(Clone)]
pub enum Innovation {
    /// `N(0, scale^2)`.
    Gaussian { scale: f64 },
    /// Arbitrary sampler with finite mean.
    Sampler(SamplerFn),
}

impl std::fmt::Debug for Innovation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Innovation::Gaussian { scale } => f.debug_struct("Gaussian").field("scale", scale).finish(),
            Innovation::Sampler(_) => f.write_str("Sampler"),
        }
    }
}

impl Innovation {
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Innovation::Gaussian { scale } => {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            }
            Innovation::Sampler(s) => s(rng),
        }
    }
}

/// `r_{k+1} = a r_k + xi_{k+1}` with `|a| < 1`.
#[derive(Debug, Clone)]
pub struct Ar1Process {
    pub a: f64,
    pub innovation: Innovation,
}

impl Ar1Process {
    pub fn new(a: f64, innovation: Innovation) -> Result<Self> {
        if !(a.abs() < 1.0) {
            return Err(invalid("a", format!("|{a}| must be below 1")));
        }
        if let Innovation::Gaussian { scale } = innovation {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(invalid("scale", format!("{scale} must be nonnegative")));
            }
        }
        Ok(Self { a, innovation })
    }

    /// Gaussian AR(1) with unit stationary variance; its partial sums have
    /// long-run variance factor `(1 + a) / (1 - a)`.
    pub fn standardized(a: f64) -> Result<Self> {
        Self::new(a, Innovation::Gaussian { scale: (1.0 - a * a).max(0.0).sqrt() })
    }

    pub fn rho_sq(&self) -> f64 {
        (1.0 + self.a) / (1.0 - self.a)
    }

    /// Terms kept in the truncated series `sum a^k xi_k` used for the
    /// stationary start.
    pub fn truncation(&self) -> usize {
        if self.a == 0.0 {
            1
        } else {
            ((1e-12f64).ln() / self.a.abs().ln()).ceil() as usize
        }
    }

    /// Draw from the invariant law.
    pub fn stationary_draw(&self, rng: &mut StreamRng) -> f64 {
        if let Innovation::Gaussian { scale } = self.innovation {
            let sd = scale / (1.0 - self.a * self.a).sqrt();
            let z: f64 = StandardNormal.sample(rng);
            return sd * z;
        }
        let mut x = 0.0;
        let mut w = 1.0;
        for _ in 0..self.truncation() {
            x += w * self.innovation.draw(rng);
            w *= self.a;
        }
        x
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        let mut rng = stream(seed);
        Ok(self.simulate_with(n, &mut rng))
    }

    pub(crate) fn simulate_with(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut x = self.stationary_draw(rng);
        for _ in 0..n {
            out.push(x);
            x = self.a * x + self.innovation.draw(rng);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLength {
    /// `ceil(n^(1/3))`.
    #[default]
    Auto,
    Fixed(usize),
}

/// Nonoverlapping batch-means estimate of the CLT variance of the partial
/// sums of `series`.
pub fn batch_means_variance(series: &[f64], block: BlockLength) -> Result<LongRunVariance> {
    let n = series.len();
    if n < 100 {
        return Err(invalid("series", format!("length {n} is below the minimum of 100")));
    }
    let b = match block {
        BlockLength::Auto => (n as f64).cbrt().ceil() as usize,
        BlockLength::Fixed(b) => b,
    };
    if b == 0 || b > n / 10 {
        return Err(invalid("block_length", format!("{b} must lie in [1, n/10 = {}]", n / 10)));
    }
    let k = n / b;
    if k < 10 {
        return Err(Error::TooFewBatches { batches: k });
    }
    let means: Vec<f64> = series[..k * b].chunks(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    let grand = means.iter().sum::<f64>() / k as f64;
    let ss: f64 = means.iter().map(|m| (m - grand).powi(2)).sum();
    let v = b as f64 * ss / (k - 1) as f64;
    Ok(LongRunVariance {
        v_tilde: v,
        method: VarianceMethod::BatchMeans,
        block_length: Some(b),
        batches: Some(k),
        std_error: Some(v * (2.0 / (k - 1) as f64).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_chain_values() {
        let c = TwoStateChain::new(17.0 / 24.0, 1.0 / 8.0).unwrap();
        assert!((c.stationary_up() - 0.75).abs() < 1e-15);
        assert!((chain_kelly(&c) - 0.5).abs() < 1e-15);
        assert!((c.variance_factor() - 5.0 / 7.0).abs() < 1e-15);
        let v = chain_longrun_variance(&c, 0.5).unwrap();
        assert!((v.v_tilde - 5.0 / 7.0 * 0.226_302_930_152_359_1).abs() < 1e-12);
    }

    #[test]
    fn no_edge_chain() {
        assert_eq!(chain_kelly(&TwoStateChain::new(0.5, 0.5).unwrap()), 0.0);
        assert_eq!(chain_kelly(&TwoStateChain::new(0.3, 0.6).unwrap()), 0.0);
        assert!(TwoStateChain::new(1.0, 0.5).is_err());
    }

    #[test]
    fn chain_transition_frequencies() {
        let c = TwoStateChain::new(0.7, 0.2).unwrap();
        let x = simulate_chain(&c, 1_000_000, 11).unwrap();
        let (mut uu, mut u, mut dd, mut d) = (0.0, 0.0, 0.0, 0.0);
        for w in x.windows(2) {
            if w[0] > 0.0 {
                u += 1.0;
                uu += (w[1] > 0.0) as u8 as f64;
            } else {
                d += 1.0;
                dd += (w[1] < 0.0) as u8 as f64;
            }
        }
        assert!((uu / u - 0.7).abs() < 4.0 * (0.7 * 0.3 / u).sqrt());
        assert!((dd / d - 0.2).abs() < 4.0 * (0.2 * 0.8 / d).sqrt());
    }

    #[test]
    fn batch_means_iid_gaussian() {
        let x = Ar1Process::standardized(0.0).unwrap().simulate(200_000, 3).unwrap();
        let v = batch_means_variance(&x, BlockLength::Auto).unwrap();
        assert!((v.v_tilde - 1.0).abs() < 3.0 * v.std_error.unwrap(), "{v:?}");
    }

    #[test]
    fn batch_means_preconditions() {
        assert!(batch_means_variance(&[0.0; 99], BlockLength::Auto).is_err());
        assert!(batch_means_variance(&[0.0; 100], BlockLength::Fixed(11)).is_err());
        assert!(batch_means_variance(&[0.0; 100], BlockLength::Fixed(10)).is_ok());
    }

    #[test]
    fn ar1_rejects_unit_root_and_is_reproducible() {
        assert!(Ar1Process::standardized(1.0).is_err());
        let p = Ar1Process::standardized(0.5).unwrap();
        assert_eq!(p.simulate(100, 4).unwrap(), p.simulate(100, 4).unwrap());
        assert_eq!(p.rho_sq(), 3.0);
        assert_eq!(Ar1Process::new(0.5, Innovation::Gaussian { scale: 1.0 }).unwrap().truncation(), 40);
    }
}
