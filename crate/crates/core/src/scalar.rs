//! One-dimensional root finding and maximization.

use crate::error::{Error, Result};
use crate::exec;

const GOLDEN: f64 = 0.381_966_011_250_105_2; // (3 - sqrt 5) / 2

/// Brent's root finder on a bracketing interval.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NotBracketed { lo: a, hi: b });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Ok(b)
}

/// Bisection for a monotone function crossing zero on `[a, b]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa.signum() == fb.signum() {
        return Err(Error::NotBracketed { lo: a, hi: b });
    }
    while (b - a) > xtol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Brent's parabolic/golden-section maximizer on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn brent_maximize<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> (f64, f64) {
    let mut neg = |x: f64| {
        let y = f(x);
        if y.is_nan() {
            f64::INFINITY
        } else {
            -y
        }
    };
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = neg(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol = f64::EPSILON.sqrt() * x.abs() * 1e-3 + xtol / 3.0;
        let tol2 = 2.0 * tol;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol { x + d } else { x + tol.copysign(d) };
        let fu = neg(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

/// Golden-section maximizer; slower than [`brent_maximize`] but makes no
/// smoothness assumption.
pub fn golden_maximize<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let mut c = b - (1.0 - GOLDEN) * (b - a);
    let mut d = a + (1.0 - GOLDEN) * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (1.0 - GOLDEN) * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (1.0 - GOLDEN) * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Result of a grid scan followed by local refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMax {
    pub x: f64,
    pub value: f64,
    /// Index of the best grid point (0 = left end, `points - 1` = right end).
    pub grid_index: usize,
    pub points: usize,
}

/// Global maximization of a possibly non-concave `f` on `[lo, hi]`: evaluate
/// on `points` equally spaced nodes (concurrently), keep the best node (the
/// smallest x among ties), then refine with Brent inside its neighbouring
/// cells. End nodes are kept as candidates so boundary maxima survive.
pub fn grid_maximize<F>(f: F, lo: f64, hi: f64, points: usize, xtol: f64) -> GridMax
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    let node = |i: usize| if i + 1 == points { hi } else { lo + step * i as f64 };
    let values = exec::map_range(points, |i| f(node(i)));
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if values[best].is_nan() || *v > values[best] {
            best = i;
        }
    }
    let left = node(best.saturating_sub(1));
    let right = node((best + 1).min(points - 1));
    let (mut x, mut value) = (node(best), values[best]);
    if right > left {
        let (xr, vr) = brent_maximize(&f, left, right, xtol, 200);
        if vr > value {
            x = xr;
            value = vr;
        }
    }
    GridMax { x, value, grid_index: best, points }
}
