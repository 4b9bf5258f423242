//! One-period return laws `r >= -1` for the fixed-fraction wealth model
//! `W_n = prod (1 + f r_k)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, integrate_interval, QuadratureSpec};
use crate::rng::{stream, StreamRng};
use crate::scalar::brent_root;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut StreamRng) -> f64 + Send + Sync>;

/// Law of the per-bet return `r`.
#[derive(Clone)]
pub enum ReturnDistribution {
    /// `P(r = 1) = p`, `P(r = -1) = 1 - p`.
    Bernoulli { p: f64 },
    /// `r = eta^2 - 1` with `eta` standard Cauchy.
    SquaredCauchy,
    /// `r = T^2 - 1` with `T` Student-t with 3 degrees of freedom.
    SquaredStudentT3,
    /// User density on an explicit support interval inside `[-1, inf)`.
    GenericDensity {
        density: DensityFn,
        support: (f64, f64),
        table: Arc<OnceLock<std::result::Result<CdfTable, Error>>>,
    },
    /// Opaque sampler; metrics fall back to Monte Carlo.
    GenericSampler { sampler: SamplerFn },
}

impl fmt::Debug for ReturnDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bernoulli { p } => f.debug_struct("Bernoulli").field("p", p).finish(),
            Self::SquaredCauchy => f.write_str("SquaredCauchy"),
            Self::SquaredStudentT3 => f.write_str("SquaredStudentT3"),
            Self::GenericDensity { support, .. } => f.debug_struct("GenericDensity").field("support", support).finish(),
            Self::GenericSampler { .. } => f.write_str("GenericSampler"),
        }
    }
}

/// What a model can offer analytically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCapabilities {
    pub has_closed_form_g: bool,
    pub has_closed_form_v: bool,
    pub has_density: bool,
    /// `E r`; `None` when unknown, `+inf` when the mean diverges.
    pub mean_return: Option<f64>,
    /// `E r^2`; `None` when unknown.
    pub second_moment: Option<f64>,
}

impl ReturnDistribution {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("{p} must lie in (0, 1)")));
        }
        Ok(Self::Bernoulli { p })
    }

    pub fn generic_density<F>(density: F, lo: f64, hi: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo >= -1.0) || !(hi > lo) {
            return Err(invalid("support", format!("[{lo}, {hi}] must satisfy -1 <= lo < hi")));
        }
        Ok(Self::GenericDensity {
            density: Arc::new(density),
            support: (lo, hi),
            table: Arc::new(OnceLock::new()),
        })
    }

    pub fn generic_sampler<F>(sampler: F) -> Self
    where
        F: Fn(&mut StreamRng) -> f64 + Send + Sync + 'static,
    {
        Self::GenericSampler { sampler: Arc::new(sampler) }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Bernoulli { p } => format!("bernoulli(p={p})"),
            Self::SquaredCauchy => "squared_cauchy".into(),
            Self::SquaredStudentT3 => "squared_t3".into(),
            Self::GenericDensity { .. } => "generic_density".into(),
            Self::GenericSampler { .. } => "generic_sampler".into(),
        }
    }

    pub fn capabilities(&self) -> ModelCapabilities {
        match self {
            Self::Bernoulli { p } => ModelCapabilities {
                has_closed_form_g: true,
                has_closed_form_v: true,
                has_density: false,
                mean_return: Some(2.0 * p - 1.0),
                second_moment: Some(1.0),
            },
            Self::SquaredCauchy => ModelCapabilities {
                has_closed_form_g: true,
                has_closed_form_v: false,
                has_density: true,
                mean_return: Some(f64::INFINITY),
                second_moment: Some(f64::INFINITY),
            },
            // E T^2 = 3 so E r = 2; E T^4 diverges for 3 degrees of freedom.
            Self::SquaredStudentT3 => ModelCapabilities {
                has_closed_form_g: true,
                has_closed_form_v: false,
                has_density: true,
                mean_return: Some(2.0),
                second_moment: Some(f64::INFINITY),
            },
            Self::GenericDensity { density, support, .. } => {
                let spec = QuadratureSpec::default();
                let moment = |k: i32| {
                    integrate_interval(|x| density(x) * x.powi(k), support.0, support.1, &spec)
                        .ok()
                        .map(|i| i.value)
                };
                ModelCapabilities {
                    has_closed_form_g: false,
                    has_closed_form_v: false,
                    has_density: true,
                    mean_return: moment(1),
                    second_moment: moment(2),
                }
            }
            Self::GenericSampler { .. } => ModelCapabilities {
                has_closed_form_g: false,
                has_closed_form_v: false,
                has_density: false,
                mean_return: None,
                second_moment: None,
            },
        }
    }

    /// Inverse-cdf map for the models that have one in closed form.
    pub fn from_uniform(&self, u: f64) -> Option<f64> {
        match self {
            Self::Bernoulli { p } => Some(if u < *p { 1.0 } else { -1.0 }),
            Self::SquaredCauchy => {
                let eta = (PI * (u - 0.5)).tan();
                Some(eta * eta - 1.0)
            }
            Self::SquaredStudentT3 => {
                let t = student_t3_quantile(u);
                Some(t * t - 1.0)
            }
            _ => None,
        }
    }

    /// One draw from the law.
    pub fn draw(&self, rng: &mut StreamRng) -> Result<f64> {
        let x = match self {
            Self::Bernoulli { .. } | Self::SquaredCauchy | Self::SquaredStudentT3 => {
                let u: f64 = rng.random();
                self.from_uniform(u).expect("closed-form quantile")
            }
            Self::GenericDensity { density, support, table } => {
                let table = table
                    .get_or_init(|| CdfTable::build(density, *support))
                    .as_ref()
                    .map_err(Clone::clone)?;
                table.invert(density, rng.random())?
            }
            Self::GenericSampler { sampler } => sampler(rng),
        };
        if !(x >= -1.0) {
            return Err(Error::SupportViolation { value: x });
        }
        Ok(x)
    }

    /// `n` draws from the stream seeded by `seed`.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(invalid("n", "sample size must be at least 1"));
        }
        let mut rng = stream(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Closed-form cdf of `r`, where one is available.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self {
            Self::Bernoulli { p } => Some(if x < -1.0 {
                0.0
            } else if x < 1.0 {
                1.0 - p
            } else {
                1.0
            }),
            Self::SquaredCauchy => Some(if x <= -1.0 { 0.0 } else { 2.0 / PI * (x + 1.0).sqrt().atan() }),
            Self::SquaredStudentT3 => Some(if x <= -1.0 {
                0.0
            } else {
                2.0 * student_t3_cdf((x + 1.0).sqrt()) - 1.0
            }),
            _ => None,
        }
    }
}

/// Cdf of Student-t with 3 degrees of freedom.
pub fn student_t3_cdf(t: f64) -> f64 {
    let theta = (t / 3f64.sqrt()).atan();
    0.5 + (theta + theta.sin() * theta.cos()) / PI
}

/// Quantile of Student-t with 3 degrees of freedom.
///
/// With `t = sqrt(3) tan(phi / 2)` the cdf becomes `1/2 + (phi + sin phi) / (2 pi)`,
/// so the quantile solves `phi + sin phi = pi (2u - 1)` on `(-pi, pi)`, which
/// safeguarded Newton handles in a handful of steps.
pub fn student_t3_quantile(u: f64) -> f64 {
    let y = PI * (2.0 * u - 1.0);
    let target = y.abs();
    if target == 0.0 {
        return 0.0;
    }
    // small-y and near-pi asymptotes
    let mut phi = if target < 2.0 {
        target / 2.0
    } else {
        PI - (6.0 * (PI - target)).cbrt()
    };
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..100 {
        let h = phi + phi.sin() - target;
        if h > 0.0 {
            hi = phi;
        } else {
            lo = phi;
        }
        let dh = 1.0 + phi.cos();
        let mut next = phi - h / dh;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - phi).abs() <= 1e-15 * phi.max(1e-300) {
            phi = next;
            break;
        }
        phi = next;
    }
    (3f64.sqrt() * (0.5 * phi).tan()).copysign(y)
}

/// Tabulated cdf for [`ReturnDistribution::GenericDensity`] sampling.
#[derive(Debug, Clone)]
pub struct CdfTable {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    mass: f64,
}

const TABLE_NODES: usize = 257;

impl CdfTable {
    fn build(density: &DensityFn, support: (f64, f64)) -> std::result::Result<Self, Error> {
        let (lo, hi) = support;
        let spec = QuadratureSpec::default();
        let nodes: Vec<f64> = (0..TABLE_NODES)
            .map(|i| {
                let s = i as f64 / (TABLE_NODES - 1) as f64;
                if hi.is_finite() {
                    lo + s * (hi - lo)
                } else if i + 1 == TABLE_NODES {
                    f64::INFINITY
                } else {
                    lo + (0.5 * PI * s).tan()
                }
            })
            .collect();
        let mut cumulative = Vec::with_capacity(TABLE_NODES);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for w in nodes.windows(2) {
            acc += integrate_interval(|x| density(x), w[0], w[1], &spec)?.value;
            cumulative.push(acc);
        }
        if !((acc - 1.0).abs() < 1e-6) {
            return Err(invalid("density", format!("integrates to {acc}, expected 1")));
        }
        Ok(Self { nodes, cumulative, mass: acc })
    }

    fn invert(&self, density: &DensityFn, u: f64) -> Result<f64> {
        let target = u * self.mass;
        let cell = match self.cumulative.partition_point(|&c| c <= target) {
            0 => 0,
            k => (k - 1).min(self.nodes.len() - 2),
        };
        let a = self.nodes[cell];
        let mut b = self.nodes[cell + 1];
        let base = self.cumulative[cell];
        if !b.is_finite() {
            b = a + 1.0;
            let spec = QuadratureSpec::default();
            while base + integrate(|x| density(x), a, b, &spec)?.value < target {
                b = a + 2.0 * (b - a);
            }
        }
        let spec = QuadratureSpec { abs_tol: 1e-13, rel_tol: 1e-11, max_subdivisions: 200 };
        let excess = |x: f64| {
            integrate(|s| density(s), a, x, &spec)
                .map(|i| base + i.value - target)
                .unwrap_or(f64::NAN)
        };
        match brent_root(excess, a, b, 1e-12 * (1.0 + a.abs()), 200) {
            Ok(x) => Ok(x),
            // flat density within the cell: its left edge is as good as any point
            Err(Error::NotBracketed { .. }) => Ok(a),
            Err(e) => Err(e),
        }
    }
}

/// Serializable descriptor of the closed-form models; the CLI model format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Bernoulli { p: f64 },
    SquaredCauchy,
    SquaredStudentT3,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ReturnDistribution> {
        match *self {
            ModelSpec::Bernoulli { p } => ReturnDistribution::bernoulli(p),
            ModelSpec::SquaredCauchy => Ok(ReturnDistribution::SquaredCauchy),
            ModelSpec::SquaredStudentT3 => Ok(ReturnDistribution::SquaredStudentT3),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Accepts JSON (`{"kind": "bernoulli", "p": 0.75}`) or the shorthand
    /// forms `bernoulli:0.75`, `squared-cauchy`, `squared-t3`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| invalid("model", e.to_string()));
        }
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind.to_ascii_lowercase().replace('_', "-").as_str(), arg) {
            ("bernoulli", Some(p)) => {
                let p: f64 = p.parse().map_err(|_| invalid("model", format!("bad probability `{p}`")))?;
                Ok(ModelSpec::Bernoulli { p })
            }
            ("squared-cauchy" | "cauchy", None) => Ok(ModelSpec::SquaredCauchy),
            ("squared-t3" | "squared-student-t3" | "t3", None) => Ok(ModelSpec::SquaredStudentT3),
            _ => Err(invalid("model", format!("unrecognised model `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_forced_uniform() {
        let m = ReturnDistribution::bernoulli(0.75).unwrap();
        assert_eq!(m.from_uniform(0.5), Some(1.0));
        assert_eq!(m.from_uniform(0.8), Some(-1.0));
    }

    #[test]
    fn bernoulli_rejects_degenerate_p() {
        assert!(ReturnDistribution::bernoulli(0.0).is_err());
        assert!(ReturnDistribution::bernoulli(1.0).is_err());
        assert!(ReturnDistribution::bernoulli(f64::NAN).is_err());
    }

    #[test]
    fn bernoulli_mean_within_three_se() {
        let m = ReturnDistribution::bernoulli(0.75).unwrap();
        let xs = m.sample(11, 10_000).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let band = 3.0 * (0.75f64 * 0.25 * 4.0 / 1e4).sqrt();
        assert!((mean - 0.5).abs() <= band, "{mean}");
    }

    #[test]
    fn squared_cauchy_half_negative() {
        let xs = ReturnDistribution::SquaredCauchy.sample(5, 100_000).unwrap();
        let neg = xs.iter().filter(|&&x| x < 0.0).count() as f64 / xs.len() as f64;
        // binomial sd is 0.0016
        assert!((neg - 0.5).abs() < 0.0064, "{neg}");
        assert!(xs.iter().all(|&x| x >= -1.0));
    }

    #[test]
    fn t3_quantile_inverts_cdf() {
        for &u in &[1e-9, 1e-4, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-7] {
            let t = student_t3_quantile(u);
            assert!((student_t3_cdf(t) - u).abs() < 1e-12, "u={u} t={t}");
        }
        assert_eq!(student_t3_quantile(0.5), 0.0);
    }

    #[test]
    fn capabilities_flags() {
        let b = ReturnDistribution::bernoulli(0.75).unwrap().capabilities();
        assert!(b.has_closed_form_g && b.has_closed_form_v);
        assert_eq!(b.mean_return, Some(0.5));
        let c = ReturnDistribution::SquaredCauchy.capabilities();
        assert!(c.has_closed_form_g && !c.has_closed_form_v);
        assert_eq!(c.mean_return, Some(f64::INFINITY));
        assert_eq!(ReturnDistribution::SquaredStudentT3.capabilities().mean_return, Some(2.0));
        let s = ReturnDistribution::generic_sampler(|_| 0.0).capabilities();
        assert!(!s.has_closed_form_g && !s.has_closed_form_v && !s.has_density);
    }

    #[test]
    fn sampler_support_violation() {
        let m = ReturnDistribution::generic_sampler(|_| -1.5);
        assert!(matches!(m.sample(1, 3), Err(Error::SupportViolation { .. })));
        assert!(m.sample(1, 0).is_err());
    }

    #[test]
    fn generic_density_sampling_matches_law() {
        // r + 1 ~ Exp(1) on [-1, inf), mean 0
        let m = ReturnDistribution::generic_density(|x: f64| (-(x + 1.0)).exp(), -1.0, f64::INFINITY).unwrap();
        let xs = m.sample(3, 4000).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 4.0 / 4000f64.sqrt(), "{mean}");
        let caps = m.capabilities();
        assert!((caps.mean_return.unwrap()).abs() < 1e-8);
        assert!((caps.second_moment.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn generic_density_requires_valid_support() {
        assert!(ReturnDistribution::generic_density(|_| 1.0, -2.0, 0.0).is_err());
        assert!(ReturnDistribution::generic_density(|_| 1.0, 0.0, 0.0).is_err());
        let bad = ReturnDistribution::generic_density(|_| 2.0, 0.0, 1.0).unwrap();
        assert!(bad.sample(1, 1).is_err());
    }

    #[test]
    fn model_spec_parsing() {
        assert_eq!("bernoulli:0.75".parse::<ModelSpec>().unwrap(), ModelSpec::Bernoulli { p: 0.75 });
        assert_eq!(r#"{"kind":"bernoulli","p":0.6}"#.parse::<ModelSpec>().unwrap(), ModelSpec::Bernoulli { p: 0.6 });
        assert_eq!("squared-cauchy".parse::<ModelSpec>().unwrap(), ModelSpec::SquaredCauchy);
        assert_eq!(r#"{"kind":"squared_student_t3"}"#.parse::<ModelSpec>().unwrap(), ModelSpec::SquaredStudentT3);
        assert!("gaussian".parse::<ModelSpec>().is_err());
        assert!(r#"{"kind":"bernoulli","p":0.6,"x":1}"#.parse::<ModelSpec>().is_err());
    }
}
