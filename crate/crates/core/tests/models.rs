//! Sampling laws, metric estimators and optimizer invariants of the iid
//! return models.

use kelly_core::metrics::{
    asym_variance, asym_variance_with, growth_derivative, growth_rate, growth_rate_with, sharpe, Estimator, MetricsConfig,
};
use kelly_core::optimize::{kelly_fraction, multiasset_kelly, ridge_fraction, variance_capped_fraction, MultiassetOptions};
use kelly_core::return_models::{student_t3_quantile, ReturnDistribution};
use kelly_core::rng::StreamRng;

fn models() -> [ReturnDistribution; 3] {
    [ReturnDistribution::Bernoulli { p: 0.75 }, ReturnDistribution::SquaredCauchy, ReturnDistribution::SquaredStudentT3]
}

#[test]
fn samples_respect_support() {
    for m in models().into_iter().chain([ReturnDistribution::Bernoulli { p: 0.3 }]) {
        let xs = m.sample(21, 200_000).unwrap();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1.0, "{}: min {min}", m.name());
    }
}

#[test]
fn bernoulli_count_band() {
    let (n, p) = (100_000usize, 0.75);
    let xs = ReturnDistribution::Bernoulli { p }.sample(4, n).unwrap();
    let ups = xs.iter().filter(|&&x| x == 1.0).count() as f64;
    let nf = n as f64;
    assert!((ups - nf * p).abs() <= 4.0 * (nf * p * (1.0 - p)).sqrt(), "{ups}");
}

/// Empirical cdf of `r = eta^2 - 1` at the deciles of its law stays inside
/// the DKW band at level 1e-3.
#[test]
fn squared_laws_match_deciles() {
    let n = 100_000;
    let eps = ((2.0f64 / 1e-3).ln() / (2.0 * n as f64)).sqrt();
    let cauchy_q = |u: f64| (std::f64::consts::PI * (u - 0.5)).tan();
    let cases: [(ReturnDistribution, &dyn Fn(f64) -> f64); 2] =
        [(ReturnDistribution::SquaredCauchy, &cauchy_q), (ReturnDistribution::SquaredStudentT3, &student_t3_quantile)];
    for (m, q) in cases {
        let xs = m.sample(8, n).unwrap();
        for d in 1..10 {
            let level = d as f64 / 10.0;
            // P(eta^2 <= x) = 2 F(sqrt x) - 1
            let r = q((1.0 + level) / 2.0).powi(2) - 1.0;
            let ecdf = xs.iter().filter(|&&x| x <= r).count() as f64 / n as f64;
            assert!((ecdf - level).abs() <= eps, "{} decile {level}: {ecdf}", m.name());
        }
    }
}

#[test]
fn sharpe_limit_for_bernoulli() {
    let s = sharpe(&ReturnDistribution::Bernoulli { p: 0.75 }, 1e-4, &MetricsConfig::default()).unwrap();
    assert!((s - 0.5 / 0.75f64.sqrt()).abs() < 1e-3, "{s}");
}

#[test]
fn sharpe_decreases_past_kelly() {
    let cfg = MetricsConfig::default();
    for m in models() {
        let k = kelly_fraction(&m, &cfg).unwrap().f_star;
        let at = sharpe(&m, k, &cfg).unwrap();
        for d in [1e-3, 1e-2] {
            let s = sharpe(&m, k + d, &cfg).unwrap();
            assert!(s < at, "{}: SR({}) = {s} >= SR(f*) = {at}", m.name(), k + d);
        }
    }
}

#[test]
fn bernoulli_quadrature_matches_closed_form() {
    let cfg = MetricsConfig::default();
    let m = ReturnDistribution::Bernoulli { p: 0.75 };
    for f in [0.05, 0.2, 0.5, 0.8, 0.95] {
        let gc = growth_rate_with(&m, f, Estimator::ClosedForm, &cfg).unwrap().value;
        let gq = growth_rate_with(&m, f, Estimator::Quadrature, &cfg).unwrap().value;
        let vc = asym_variance_with(&m, f, Estimator::ClosedForm, &cfg).unwrap().value;
        let vq = asym_variance_with(&m, f, Estimator::Quadrature, &cfg).unwrap().value;
        assert!((gc - gq).abs() < 1e-10, "g at {f}: {gc} vs {gq}");
        assert!((vc - vq).abs() < 1e-10, "v at {f}: {vc} vs {vq}");
    }
}

#[test]
fn monte_carlo_matches_quadrature_for_densities() {
    let cfg = MetricsConfig { mc_samples: 10_000_000, seed: 17, ..MetricsConfig::default() };
    for m in [ReturnDistribution::SquaredCauchy, ReturnDistribution::SquaredStudentT3] {
        for f in [0.2, 0.6] {
            let q = growth_rate_with(&m, f, Estimator::Quadrature, &cfg).unwrap();
            let mc = growth_rate_with(&m, f, Estimator::MonteCarlo, &cfg).unwrap();
            let se = mc.std_error.unwrap();
            assert!((q.value - mc.value).abs() <= 4.0 * se, "{} g({f}): {} vs {} (se {se})", m.name(), q.value, mc.value);
        }
    }
}

#[test]
fn derivative_matches_finite_difference() {
    let cfg = MetricsConfig::default();
    let h = 1e-6;
    for m in models() {
        for f in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let d = growth_derivative(&m, f, &cfg).unwrap();
            let g = |x: f64| growth_rate(&m, x, &cfg).unwrap().value;
            let fd = (g(f + h) - g(f - h)) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-6 * d.abs().max(1e-2), "{} at {f}: {d} vs {fd}", m.name());
        }
    }
}

#[test]
fn ridge_fraction_decreases_in_gamma() {
    let cfg = MetricsConfig::default();
    for m in models() {
        let k = kelly_fraction(&m, &cfg).unwrap().f_star;
        let mut last = f64::INFINITY;
        for gamma in [0.1, 0.2, 0.5, 1.0, 2.0] {
            let r = ridge_fraction(&m, gamma, &cfg).unwrap().f_star;
            assert!(r <= last + 1e-12, "{}: f_ri({gamma}) = {r} > {last}", m.name());
            assert!(r < k, "{}: f_ri({gamma}) = {r} >= f* = {k}", m.name());
            last = r;
        }
    }
}

#[test]
fn kelly_is_stationary() {
    let cfg = MetricsConfig::default();
    for m in models() {
        let k = kelly_fraction(&m, &cfg).unwrap();
        assert!(!k.boundary);
        let d = growth_derivative(&m, k.f_star, &cfg).unwrap();
        assert!(d.abs() <= 1e-8, "{}: g'(f*) = {d}", m.name());
    }
}

#[test]
fn multiplier_of_cap_recovers_fraction() {
    let cfg = MetricsConfig::default();
    let m = ReturnDistribution::Bernoulli { p: 0.75 };
    for f0 in [0.1, 0.25, 0.4] {
        let v0 = asym_variance(&m, f0, &cfg).unwrap().value;
        let cap = variance_capped_fraction(&m, v0, &cfg).unwrap();
        let lambda = cap.multiplier.expect("binding cap has a multiplier");
        let r = ridge_fraction(&m, lambda, &cfg).unwrap().f_star;
        assert!((r - f0).abs() <= 1e-6, "f0 {f0}: ridge at {lambda} gives {r}");
    }
}

#[test]
fn single_asset_allocation_matches_scalar_kelly() {
    let opts = MultiassetOptions { n_samples: 400_000, ..MultiassetOptions::default() };
    for m in [ReturnDistribution::SquaredStudentT3, ReturnDistribution::SquaredCauchy, ReturnDistribution::Bernoulli { p: 0.75 }] {
        let scalar = kelly_fraction(&m, &MetricsConfig::default()).unwrap().f_star;
        let sampler = |rng: &mut StreamRng, out: &mut [f64]| out[0] = m.draw(rng).unwrap();
        let a = multiasset_kelly(&sampler, 1, 3, &opts).unwrap();
        assert!(a.converged, "{}", m.name());
        let se = a.std_errors.as_ref().expect("interior solution")[0];
        assert!((a.weights[0] - scalar).abs() <= 4.0 * se, "{}: {} vs {scalar} (se {se})", m.name(), a.weights[0]);
        let b = multiasset_kelly(&sampler, 1, 3, &opts).unwrap();
        assert_eq!(a, b);
    }
}
