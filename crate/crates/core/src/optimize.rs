//! Optimal fractions: full Kelly `f*`, the ridge optimum `f^Ri(gamma)`, the
//! Sharpe optimum `f°`, variance-capped fractions with their multipliers,
//! the multi-asset Kelly vector on the no-short no-leverage simplex, and the
//! Bernoulli bet with a risk-free alternative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::metrics::{self, MetricsConfig, MAX_FRACTION};
use crate::return_models::ReturnDistribution;
use crate::rng::{substream, StreamRng};
use crate::scalar::{bisect, brent_root, golden_maximize, grid_maximize};

/// Grid points for scans of possibly non-concave objectives.
pub const GRID_POINTS: usize = 1000;
const XTOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum Criterion {
    Kelly,
    Ridge { gamma: f64 },
    Sharpe,
    VarianceCapped { v0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    #[serde(flatten)]
    pub criterion: Criterion,
    #[serde(rename = "f")]
    pub f_star: f64,
    #[serde(rename = "objective")]
    pub objective_value: f64,
    /// Solution at 0 or at the upper clamp `1 - 1e-9`.
    pub boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StrategyReport {
    fn new(criterion: Criterion, f: f64, objective: f64) -> Self {
        Self {
            criterion,
            f_star: f,
            objective_value: objective,
            boundary: f <= 0.0 || f >= MAX_FRACTION,
            multiplier: None,
            note: None,
        }
    }
}

/// Maximizer of `g` on `[0, 1 - 1e-9]`. Returns `f = 0` with the boundary
/// flag when there is no edge.
pub fn kelly_fraction(model: &ReturnDistribution, cfg: &MetricsConfig) -> Result<StrategyReport> {
    if let ReturnDistribution::Bernoulli { p } = *model {
        let f = (2.0 * p - 1.0).max(0.0);
        let mut report = StrategyReport::new(Criterion::Kelly, f, metrics::growth_rate(model, f, cfg)?.value);
        if f == 0.0 {
            report.note = Some("no edge: g'(0+) <= 0".into());
        }
        return Ok(report);
    }
    let d0 = metrics::growth_derivative(model, 0.0, cfg)?;
    if d0 <= 0.0 {
        let mut report = StrategyReport::new(Criterion::Kelly, 0.0, 0.0);
        report.note = Some("no edge: g'(0+) <= 0".into());
        return Ok(report);
    }
    let d1 = metrics::growth_derivative(model, MAX_FRACTION, cfg)?;
    let f = if d1 >= 0.0 {
        MAX_FRACTION
    } else {
        // g' may be infinite at 0; start the bracket just inside
        let lo = if d0.is_finite() { 0.0 } else { 1e-15 };
        let root = brent_root(
            |f| metrics::growth_derivative(model, f, cfg).unwrap_or(f64::NAN),
            lo,
            MAX_FRACTION,
            XTOL,
            500,
        );
        match root {
            Ok(f) => f,
            Err(e) => {
                log::warn!("derivative root search failed ({e}); using golden section on g");
                golden_maximize(
                    |f| metrics::growth_rate(model, f, cfg).map(|g| g.value).unwrap_or(f64::NEG_INFINITY),
                    0.0,
                    MAX_FRACTION,
                    1e-10,
                )
                .0
            }
        }
    };
    Ok(StrategyReport::new(Criterion::Kelly, f, metrics::growth_rate(model, f, cfg)?.value))
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(name, format!("{x} must be positive and finite")));
    }
    Ok(())
}

/// Global maximizer of `g - gamma v` on `[0, f*]`: grid of step `1e-3`
/// followed by Brent refinement around the best node.
pub fn ridge_fraction(model: &ReturnDistribution, gamma: f64, cfg: &MetricsConfig) -> Result<StrategyReport> {
    check_positive("gamma", gamma)?;
    let kelly = kelly_fraction(model, cfg)?;
    let criterion = Criterion::Ridge { gamma };
    if kelly.f_star == 0.0 {
        return Ok(StrategyReport::new(criterion, 0.0, 0.0));
    }
    // surface evaluation errors before the scan swallows them as NaN
    metrics::ridge(model, kelly.f_star, gamma, cfg)?;
    let points = ((kelly.f_star / 1e-3).ceil() as usize + 1).max(3);
    let best = grid_maximize(
        |f| metrics::ridge(model, f, gamma, cfg).unwrap_or(f64::NAN),
        0.0,
        kelly.f_star,
        points,
        1e-12,
    );
    // Ri(0) = 0; a gain below the quadrature noise next to the left node is
    // not evidence of an interior maximum
    let noise = 1e-8 * kelly.objective_value.abs().max(1.0);
    let f = if best.grid_index == 0 && best.value <= noise { 0.0 } else { best.x };
    let objective = metrics::ridge(model, f, gamma, cfg)?;
    Ok(StrategyReport::new(criterion, f, objective))
}

/// Global maximizer of the Sharpe ratio on `[1e-6, f*]`. When the ratio is
/// largest at the left end and the `f -> 0+` limit is at least as large,
/// reports `f = 0` with that limit as the objective.
pub fn sharpe_fraction(model: &ReturnDistribution, cfg: &MetricsConfig) -> Result<StrategyReport> {
    let kelly = kelly_fraction(model, cfg)?;
    let lo = 1e-6;
    if kelly.f_star <= lo {
        return Err(invalid("model", "no edge: the Sharpe ratio is not positive for any fraction"));
    }
    let sr = |f: f64| metrics::sharpe(model, f, cfg).unwrap_or(f64::NAN);
    let best = grid_maximize(sr, lo, kelly.f_star, GRID_POINTS, 1e-10);
    if best.value.is_nan() {
        return Err(Error::UndefinedRatio);
    }
    if best.grid_index == 0 {
        if let Some(limit) = metrics::sharpe_at_zero(model) {
            if limit >= best.value {
                return Ok(StrategyReport::new(Criterion::Sharpe, 0.0, limit));
            }
        }
    }
    Ok(StrategyReport::new(Criterion::Sharpe, best.x, best.value))
}

/// Maximizes `g` subject to `v <= v0`. Below `v(f*)` the constraint binds at
/// the unique `f0` with `v(f0) = v0`, and the multiplier is `g'(f0) / v'(f0)`.
pub fn variance_capped_fraction(model: &ReturnDistribution, v0: f64, cfg: &MetricsConfig) -> Result<StrategyReport> {
    check_positive("v0", v0)?;
    let kelly = kelly_fraction(model, cfg)?;
    let criterion = Criterion::VarianceCapped { v0 };
    let v_star = metrics::asym_variance(model, kelly.f_star, cfg)?.value;
    if v0 >= v_star {
        let mut report = StrategyReport::new(criterion, kelly.f_star, kelly.objective_value);
        report.multiplier = Some(0.0);
        report.note = Some(format!("constraint inactive: v(f*) = {v_star} <= v0"));
        return Ok(report);
    }
    let f0 = bisect(
        |f| metrics::asym_variance(model, f, cfg).map(|v| v.value - v0).unwrap_or(f64::NAN),
        0.0,
        kelly.f_star,
        1e-15,
    )?;
    let slope_g = metrics::growth_derivative(model, f0, cfg)?;
    let slope_v = metrics::variance_derivative(model, f0, cfg)?;
    let mut report = StrategyReport::new(criterion, f0, metrics::growth_rate(model, f0, cfg)?.value);
    report.multiplier = Some(slope_g / slope_v);
    Ok(report)
}

/// Kelly fraction for `P(r = 1) = p`, `P(r = -1) = q` when the unbet wealth
/// earns the risk-free return `r0`, floored at 0.
pub fn bernoulli_with_riskfree(p: f64, q: f64, r0: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0) || (p + q - 1.0).abs() > 1e-12 {
        return Err(invalid("p, q", format!("({p}, {q}) must be probabilities summing to 1")));
    }
    if !(0.0..1.0).contains(&r0) {
        return Err(invalid("r0", format!("{r0} must lie in [0, 1)")));
    }
    Ok((p - q * (1.0 + 2.0 * r0 / (1.0 - r0))).max(0.0))
}

// ---------------------------------------------------------------------------
// multi-asset

/// Fills its slice argument with one joint draw of the `m` returns.
pub type JointSampler<'a> = dyn Fn(&mut StreamRng, &mut [f64]) + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiassetOptions {
    pub n_samples: usize,
    pub max_iter: usize,
    /// Convergence threshold on the projected-gradient norm.
    pub tol: f64,
}

impl Default for MultiassetOptions {
    fn default() -> Self {
        Self { n_samples: 1_000_000, max_iter: 5000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector {
    pub weights: Vec<f64>,
    pub cash: f64,
    /// Sample-average objective at the solution.
    pub objective: f64,
    /// Sandwich standard errors of the weights; `None` when the curvature
    /// matrix is singular.
    pub std_errors: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Indices whose nonnegativity constraint is active.
    pub active: Vec<usize>,
    /// Whether the budget `sum f <= 1` binds.
    pub budget_binding: bool,
}

const CHUNK: usize = 4096;

struct Saa {
    m: usize,
    n: usize,
    chunks: Vec<Vec<f64>>,
}

impl Saa {
    fn draw(sampler: &JointSampler<'_>, m: usize, n: usize, seed: u64) -> Result<Self> {
        let count = n.div_ceil(CHUNK);
        let chunks = exec::map_range(count, |c| {
            let mut rng = substream(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let mut buf = vec![0.0; len * m];
            for row in buf.chunks_mut(m) {
                sampler(&mut rng, row);
            }
            match buf.iter().find(|x| !(**x >= -1.0) || !x.is_finite()) {
                Some(&value) => Err(Error::SupportViolation { value }),
                None => Ok(buf),
            }
        });
        Ok(Self { m, n, chunks: chunks.into_iter().collect::<Result<_>>()? })
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.chunks.iter().flat_map(move |c| c.chunks(self.m))
    }

    /// Objective, gradient and the trace of the negative Hessian
    /// `E |r / (1 + f.r)|^2`; `-inf` objective if some `1 + f.r <= 0`.
    fn value_grad(&self, f: &[f64]) -> Eval {
        let m = self.m;
        let parts = exec::map_slice(&self.chunks, |chunk| {
            let mut obj = 0.0;
            let mut curv = 0.0;
            let mut grad = vec![0.0; m];
            for r in chunk.chunks(m) {
                let w = 1.0 + dot(f, r);
                if w <= 0.0 {
                    return None;
                }
                obj += w.ln();
                for (g, x) in grad.iter_mut().zip(r) {
                    *g += x / w;
                    curv += (x / w).powi(2);
                }
            }
            Some((obj, grad, curv))
        });
        let mut e = Eval { obj: 0.0, grad: vec![0.0; m], curvature: 0.0 };
        for part in parts {
            let Some((o, g, c)) = part else {
                return Eval { obj: f64::NEG_INFINITY, grad: vec![0.0; m], curvature: f64::INFINITY };
            };
            e.obj += o;
            e.curvature += c;
            for (a, b) in e.grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let n = self.n as f64;
        e.obj /= n;
        e.curvature /= n;
        e.grad.iter_mut().for_each(|g| *g /= n);
        e
    }

    fn mean_and_second_moment(&self) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.m;
        let mut mean = DVector::zeros(m);
        let mut second = DMatrix::zeros(m, m);
        for r in self.rows() {
            let v = DVector::from_column_slice(r);
            mean += &v;
            second += &v * v.transpose();
        }
        let n = self.n as f64;
        (mean / n, second / n)
    }

    fn sandwich_std_errors(&self, f: &[f64]) -> Option<Vec<f64>> {
        let m = self.m;
        let mut hess = DMatrix::zeros(m, m);
        let mut outer = DMatrix::zeros(m, m);
        let mut mean = DVector::zeros(m);
        for r in self.rows() {
            let w = 1.0 + dot(f, r);
            let g = DVector::from_column_slice(r) / w;
            hess += &g * g.transpose();
            outer += &g * g.transpose();
            mean += &g;
        }
        let n = self.n as f64;
        let hess = hess / n;
        let mean = mean / n;
        let cov = outer / n - &mean * mean.transpose();
        let inv = hess.try_inverse()?;
        let sand = &inv * cov * &inv / n;
        Some((0..m).map(|i| sand[(i, i)].max(0.0).sqrt()).collect())
    }
}

struct Eval {
    obj: f64,
    grad: Vec<f64>,
    curvature: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto `{f >= 0, sum f <= 1}`.
pub fn project_capped_simplex(v: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        return clipped;
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Sample-average approximation of `argmax E ln(1 + f.r)` over the simplex
/// `{f >= 0, sum f <= 1}`, by projected gradient ascent with Armijo
/// backtracking from diminishing steps `c / sqrt(k)`.
///
/// The start is the projection of `M^-1 mu`, with `mu` and `M` the sample
/// mean and second-moment matrix of the returns.
pub fn multiasset_kelly(
    sampler: &JointSampler<'_>,
    m: usize,
    seed: u64,
    opts: &MultiassetOptions,
) -> Result<AllocationVector> {
    if m == 0 {
        return Err(invalid("m", "dimension must be at least 1"));
    }
    if opts.n_samples < 2 {
        return Err(invalid("n_samples", "need at least 2 samples"));
    }
    let saa = Saa::draw(sampler, m, opts.n_samples, seed)?;
    let (mean, second) = saa.mean_and_second_moment();

    let scale = second.diagonal().max().max(f64::MIN_POSITIVE);
    let start = match second.clone().cholesky() {
        Some(ch) if second.diagonal().min() > 1e-12 * scale => {
            let x = ch.solve(&mean);
            project_capped_simplex(x.as_slice())
        }
        _ => {
            log::warn!("singular sample moment matrix; starting from zero");
            vec![0.0; m]
        }
    };
    let (mut f, mut cur) = {
        let e = saa.value_grad(&start);
        if e.obj.is_finite() {
            (start, e)
        } else {
            let zero = vec![0.0; m];
            let e = saa.value_grad(&zero);
            (zero, e)
        }
    };

    // The step scale follows the local curvature, which stays finite for
    // heavy-tailed returns away from f = 0 where the raw second moment
    // does not.
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        let target: Vec<f64> = f.iter().zip(&cur.grad).map(|(a, g)| a + g).collect();
        let pg = project_capped_simplex(&target)
            .iter()
            .zip(&f)
            .map(|(p, a)| (p - a).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg < opts.tol {
            converged = true;
            break;
        }
        iterations = k;
        let c = 2.0 / cur.curvature.max(1e-12);
        let mut t = c / (k as f64).sqrt();
        let mut moved = false;
        while t > 1e-16 * c {
            let cand = project_capped_simplex(&f.iter().zip(&cur.grad).map(|(a, g)| a + t * g).collect::<Vec<_>>());
            let next = saa.value_grad(&cand);
            let ascent: f64 = cur.grad.iter().zip(cand.iter().zip(&f)).map(|(g, (x, y))| g * (x - y)).sum();
            if next.obj.is_finite() && next.obj >= cur.obj + 1e-4 * ascent {
                f = cand;
                cur = next;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            log::warn!("line search failed at iteration {k}; projected gradient norm {pg:e}");
            break;
        }
    }
    let total: f64 = f.iter().sum();
    Ok(AllocationVector {
        std_errors: saa.sandwich_std_errors(&f),
        cash: 1.0 - total,
        objective: cur.obj,
        iterations,
        converged,
        active: (0..m).filter(|&i| f[i] == 0.0).collect(),
        budget_binding: (total - 1.0).abs() < 1e-12,
        weights: f,
    })
}
