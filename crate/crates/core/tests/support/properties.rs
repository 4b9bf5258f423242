#![allow(dead_code)]

//! Property checks shared by the property test target and the acceptance
//! run. Each runs a fixed number of proptest cases from a deterministic
//! generator and reports the first counterexample.

use kelly_core::ct_models::{ct_asymptotics, ct_terminal_ensemble, CtModel};
use kelly_core::empirics::{clt_check, WealthSource};
use kelly_core::hf_compound::{simulate_hf_wealth, HfDriver, HfKind, HfScheme};
use kelly_core::metrics::{self, growth_rate_with, Estimator, MetricsConfig};
use kelly_core::optimize::{kelly_fraction, ridge_fraction, variance_capped_fraction};
use kelly_core::scalar::grid_maximize;
use kelly_core::ReturnDistribution;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Check = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn model(index: usize, p: f64) -> ReturnDistribution {
    match index {
        0 => ReturnDistribution::Bernoulli { p },
        1 => ReturnDistribution::SquaredCauchy,
        _ => ReturnDistribution::SquaredStudentT3,
    }
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn finish(r: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> Check {
    r.map_err(|e| e.to_string())
}

/// Midpoint concavity of `g` on `[0, 0.99]` for the closed-form models.
pub fn growth_is_concave(cases: u32) -> Check {
    let cfg = MetricsConfig::default();
    let strat = (0usize..3, 0.51f64..0.99, 0.0f64..0.99, 0.0f64..0.99);
    finish(runner(cases).run(&strat, |(i, p, a, b)| {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assume!(hi - lo > 1e-3);
        let m = model(i, p);
        let g = |f: f64| metrics::growth_rate(&m, f, &cfg).map(|e| e.value).map_err(fail);
        let mid = g(0.5 * (lo + hi))?;
        let chord = 0.5 * (g(lo)? + g(hi)?);
        prop_assert!(mid >= chord - 1e-12, "model {i} p {p}: g(mid) {mid} < chord {chord}");
        Ok(())
    }))
}

/// `v` is nondecreasing in `f` on `[0, 0.99]`.
pub fn variance_is_monotone(cases: u32) -> Check {
    let cfg = MetricsConfig::default();
    let strat = (0usize..3, 0.51f64..0.99, 0.0f64..0.99, 0.0f64..0.99);
    finish(runner(cases).run(&strat, |(i, p, a, b)| {
        let (lo, hi) = (a.min(b), a.max(b));
        let m = model(i, p);
        let v = |f: f64| metrics::asym_variance(&m, f, &cfg).map(|e| e.value).map_err(fail);
        let (vl, vh) = (v(lo)?, v(hi)?);
        prop_assert!(vl <= vh + 1e-12 * vh.max(1.0), "model {i} p {p}: v({lo}) = {vl} > v({hi}) = {vh}");
        Ok(())
    }))
}

/// `SR(f) -> E r / sqrt(Var r)` as `f -> 0+`.
pub fn sharpe_limit_at_zero(cases: u32) -> Check {
    let cfg = MetricsConfig::default();
    finish(runner(cases).run(&(0.51f64..0.99), |p| {
        let m = ReturnDistribution::Bernoulli { p };
        let limit = metrics::sharpe_at_zero(&m).ok_or_else(|| fail("no limit"))?;
        prop_assert!((limit - (2.0 * p - 1.0) / (2.0 * (p * (1.0 - p)).sqrt())).abs() < 1e-12);
        let near = metrics::sharpe(&m, 1e-7, &cfg).map_err(fail)?;
        prop_assert!((near - limit).abs() < 1e-5 * limit.abs().max(1.0), "p {p}: SR(1e-7) {near} vs {limit}");
        Ok(())
    }))
}

/// `0 < f^Ri(gamma) < f*` for `gamma > 0` in a favourable Bernoulli game.
pub fn ridge_below_kelly(cases: u32) -> Check {
    let cfg = MetricsConfig::default();
    finish(runner(cases).run(&(0.55f64..0.95, 0.05f64..5.0), |(p, gamma)| {
        let m = ReturnDistribution::Bernoulli { p };
        let k = kelly_fraction(&m, &cfg).map_err(fail)?.f_star;
        let r = ridge_fraction(&m, gamma, &cfg).map_err(fail)?.f_star;
        prop_assert!(r > 0.0 && r < k, "p {p} gamma {gamma}: f_ri {r} vs f* {k}");
        Ok(())
    }))
}

/// The variance cap `v0 = v(f^Ri(gamma))` is solved by `f^Ri(gamma)` with
/// Lagrange multiplier `gamma`.
pub fn ridge_cap_duality(cases: u32) -> Check {
    let cfg = MetricsConfig::default();
    finish(runner(cases).run(&(0.55f64..0.95, 0.05f64..5.0), |(p, gamma)| {
        let m = ReturnDistribution::Bernoulli { p };
        let r = ridge_fraction(&m, gamma, &cfg).map_err(fail)?.f_star;
        let v0 = metrics::asym_variance(&m, r, &cfg).map_err(fail)?.value;
        let c = variance_capped_fraction(&m, v0, &cfg).map_err(fail)?;
        prop_assert!((c.f_star - r).abs() < 1e-7, "p {p} gamma {gamma}: cap f {} vs ridge f {r}", c.f_star);
        let lambda = c.multiplier.ok_or_else(|| fail("no multiplier"))?;
        prop_assert!((lambda - gamma).abs() < 1e-5 * gamma.max(1.0), "multiplier {lambda} vs gamma {gamma}");
        Ok(())
    }))
}

/// `argmax g_R = mu / sigma^2` for every correlation, and the sign of
/// `d v_R / d rho_bar` is `+` for the rate models and `-` for Heston.
pub fn ct_argmax_and_correlation_sign(cases: u32) -> Check {
    let strat = (-0.95f64..0.95, 0.05f64..0.5, 0.1f64..1.0);
    finish(runner(cases).run(&strat, |(rho, delta, f)| {
        let models = [
            CtModel::VasicekRate { a: 1.0, b: 0.1, mu: 0.02, sigma: 0.2, rho_bar: rho },
            CtModel::CirRate { a: 1.0, b: 0.1, mu: 0.03, sigma: 0.2, rho_bar: rho },
            CtModel::HestonVol { mu: 0.02, kappa: 2.0, sigma2: 0.04, beta: 0.3, rho_bar: rho },
        ];
        for (k, m) in models.iter().enumerate() {
            let a = ct_asymptotics(m).map_err(fail)?;
            let (mu, s2) = m.mu_sigma2();
            let best = grid_maximize(|x| a.g(x), 0.0, 2.0, 401, 1e-12);
            prop_assert!((best.x - mu / s2).abs() < 1e-7, "{m:?}: argmax {} vs {}", best.x, mu / s2);
            let up = (rho + delta).min(1.0);
            let bumped = match *m {
                CtModel::VasicekRate { a, b, mu, sigma, .. } => CtModel::VasicekRate { a, b, mu, sigma, rho_bar: up },
                CtModel::CirRate { a, b, mu, sigma, .. } => CtModel::CirRate { a, b, mu, sigma, rho_bar: up },
                CtModel::HestonVol { mu, kappa, sigma2, beta, .. } => CtModel::HestonVol { mu, kappa, sigma2, beta, rho_bar: up },
                other => other,
            };
            let dv = ct_asymptotics(&bumped).map_err(fail)?.v(f) - a.v(f);
            if k < 2 {
                prop_assert!(dv > 0.0, "{m:?}: v_R should increase with rho_bar");
            } else {
                prop_assert!(dv < 0.0, "{m:?}: v_R should decrease with rho_bar");
            }
        }
        Ok(())
    }))
}

/// Identical seeds reproduce Monte Carlo estimates, simulated ensembles and
/// test reports bit for bit.
pub fn seeded_determinism(cases: u32) -> Check {
    let cfg = MetricsConfig { mc_samples: 20_000, ..MetricsConfig::default() };
    finish(runner(cases).run(&any::<u64>(), |seed| {
        let cfg = MetricsConfig { seed, ..cfg };
        let t3 = ReturnDistribution::SquaredStudentT3;
        let a = growth_rate_with(&t3, 0.3, Estimator::MonteCarlo, &cfg).map_err(fail)?;
        let b = growth_rate_with(&t3, 0.3, Estimator::MonteCarlo, &cfg).map_err(fail)?;
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());

        let cir = CtModel::CirRate { a: 1.0, b: 0.1, mu: 0.05, sigma: 0.2, rho_bar: 0.3 };
        let e1 = ct_terminal_ensemble(&cir, 0.5, 1.0, 1e-2, 4, seed).map_err(fail)?;
        let e2 = ct_terminal_ensemble(&cir, 0.5, 1.0, 1e-2, 4, seed).map_err(fail)?;
        prop_assert_eq!(e1, e2);

        let hf = HfScheme::new(0.02, 0.2, 16, HfKind::Geometric, HfDriver::Ar1 { a: 0.5 }).map_err(fail)?;
        let p1 = simulate_hf_wealth(&hf, 0.5, 2.0, seed).map_err(fail)?;
        let p2 = simulate_hf_wealth(&hf, 0.5, 2.0, seed).map_err(fail)?;
        prop_assert_eq!(p1, p2);

        let src = WealthSource::Iid(ReturnDistribution::Bernoulli { p: 0.75 });
        let r1 = clt_check(&src, 0.5, 50.0, 30, seed, None).map_err(fail)?;
        let r2 = clt_check(&src, 0.5, 50.0, 30, seed, None).map_err(fail)?;
        prop_assert_eq!(r1, r2);
        Ok(())
    }))
}

pub const ALL: &[(&str, fn(u32) -> Check)] = &[
    ("concavity of g", growth_is_concave),
    ("monotonicity of v", variance_is_monotone),
    ("SR(0+) limit", sharpe_limit_at_zero),
    ("f_ri < f*", ridge_below_kelly),
    ("ridge / variance-cap duality", ridge_cap_duality),
    ("continuous-time argmax and correlation sign", ct_argmax_and_correlation_sign),
    ("determinism under fixed seeds", seeded_determinism),
];
