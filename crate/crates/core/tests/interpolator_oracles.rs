mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use spectral_transport_core::{
    empirical_loss, euclidean_min_norm, gram_matrix, minimal_interpolator, nullspace_direction, nullspace_spike,
    pgf_solve, pgf_solve_traced, stable_step_size, transported_energy, FlowConfig, Sample, Weights,
};

#[test]
fn gram_against_triple_loop() {
    let mut r = rng(1);
    let (s, spec) = random_instance(&mut r, 3, 4);
    let k = gram_matrix(&s, &spec, 0.3).unwrap();
    let oracle = gram_triple_loop(s.features(), spec.eigenvalues(), 0.3);
    assert!((k - &oracle).amax() <= 1e-12 * oracle.amax());
}

#[test]
fn interpolant_against_kkt() {
    let mut r = rng(2);
    let (s, spec) = random_instance(&mut r, 4, 8);
    let tau = 0.07;
    let sol = minimal_interpolator(&s, &spec, tau).unwrap();
    let w = kkt_interpolant(s.features(), s.responses(), spec.eigenvalues(), tau);
    let mu = spec.eigenvalues();
    let err = transported_norm_sq(mu, tau, &diff(sol.weights.as_slice(), &w)).sqrt();
    assert!(err <= 1e-8 * transported_norm_sq(mu, tau, &w).sqrt());
}

#[test]
fn energy_identity_random() {
    let mut r = rng(3);
    let (s, spec) = random_instance(&mut r, 5, 10);
    let sol = minimal_interpolator(&s, &spec, 0.2).unwrap();
    let modal = transported_norm_sq(spec.eigenvalues(), 0.2, sol.weights.as_slice());
    assert!(rel_err(transported_energy(&sol), modal) < 1e-10);
}

#[test]
fn large_tau_limit_is_euclidean() {
    let mut r = rng(4);
    let (s, spec) = random_instance(&mut r, 4, 9);
    let tau = 1e6 * spec.top();
    let a = minimal_interpolator(&s, &spec, tau).unwrap().weights;
    let b = euclidean_min_norm(&s).weights;
    let e = (&a.coords - &b.coords).norm() / b.coords.norm();
    assert!(e < 1e-4, "relative gap {e}");
}

#[test]
fn spike_risk_identity() {
    let mut r = rng(5);
    let (s, spec) = random_instance(&mut r, 4, 10);
    let mu = spec.eigenvalues();
    let w_star: Vec<f64> = (0..10).map(|j| 0.1 * j as f64).collect();
    let base = minimal_interpolator(&s, &spec, 0.05).unwrap().weights;
    let amp = 3.0;
    let spiked = nullspace_spike(&s, &base, amp, 17).unwrap();
    let v = nullspace_direction(&s, 17).unwrap();
    let av: Vec<f64> = v.as_slice().iter().map(|x| amp * x).collect();
    let lhs = risk(mu, spiked.as_slice(), &w_star) - risk(mu, base.as_slice(), &w_star);
    let quad: f64 = mu.iter().zip(&av).map(|(m, a)| m * a * a).sum();
    let cross: f64 = mu
        .iter()
        .zip(diff(base.as_slice(), &w_star).iter().zip(&av))
        .map(|(m, (e, a))| m * e * a)
        .sum();
    assert!((lhs - (quad + 2.0 * cross)).abs() <= 1e-10 * (1.0 + lhs.abs()));
    let shift = s.features() * (&spiked.coords - &base.coords);
    assert!(shift.amax() <= 1e-12 * (1.0 + amp));
}

#[test]
fn step_bound_against_power_iteration() {
    let mut r = rng(6);
    let (s, spec) = random_instance(&mut r, 7, 5);
    let k = gram_triple_loop(s.features(), spec.eigenvalues(), 0.1);
    let oracle = 2.0 / power_iteration_top(&k);
    assert!(rel_err(stable_step_size(&s, &spec, 0.1).unwrap(), oracle) < 1e-6);
}

#[test]
fn flow_reaches_representer_solution() {
    let mut r = rng(7);
    let (s, spec) = random_instance(&mut r, 6, 12);
    let tau = 0.1;
    let mut cfg = FlowConfig::for_sample(&s, &spec, tau).unwrap();
    cfg.max_iters = 100_000;
    let out = pgf_solve(&s, &spec, tau, &cfg).unwrap();
    let w = minimal_interpolator(&s, &spec, tau).unwrap().weights;
    let mu = spec.eigenvalues();
    let err = transported_norm_sq(mu, tau, &diff(out.weights.as_slice(), w.as_slice())).sqrt();
    assert!(err / (1.0 + transported_norm_sq(mu, tau, w.as_slice()).sqrt()) <= 1e-6);
}

fn instance() -> impl Strategy<Value = (usize, usize, u64, f64)> {
    (1usize..=8, 0usize..=8, any::<u64>(), -3.0f64..1.0).prop_map(|(n, extra, seed, lt)| (n, n + extra, seed, 10f64.powf(lt)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolates_and_matches_kkt((n, d, seed, tau) in instance()) {
        let mut r = rng(seed);
        let (s, spec) = random_instance(&mut r, n, d);
        let sol = minimal_interpolator(&s, &spec, tau).unwrap();
        let ymax = s.responses().amax();
        prop_assert!(sol.max_residual <= 1e-8 * (1.0 + ymax));
        prop_assert!(sol.interpolates);
        let w = kkt_interpolant(s.features(), s.responses(), spec.eigenvalues(), tau);
        let mu = spec.eigenvalues();
        let err = transported_norm_sq(mu, tau, &diff(sol.weights.as_slice(), &w)).sqrt();
        prop_assert!(err <= 1e-8 * (1e-300 + transported_norm_sq(mu, tau, &w).sqrt()));
        let e = transported_norm_sq(mu, tau, sol.weights.as_slice());
        prop_assert!((sol.energy - e).abs() <= 1e-10 * e.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn spikes_cost_energy((n, d, seed, tau) in instance(), amp in prop_oneof![-5.0f64..-0.01, 0.01f64..5.0]) {
        prop_assume!(d > n);
        let mut r = rng(seed);
        let (s, spec) = random_instance(&mut r, n, d);
        let base = minimal_interpolator(&s, &spec, tau).unwrap().weights;
        let spiked = nullspace_spike(&s, &base, amp, seed).unwrap();
        let e0 = spec.transported_norm_sq(tau, &base).unwrap();
        let e1 = spec.transported_norm_sq(tau, &spiked).unwrap();
        prop_assert!(e1 > e0);
        prop_assert!((s.max_residual(&spiked) - s.max_residual(&base)).abs() <= 1e-10 * (1.0 + amp.abs()));
    }

    #[test]
    fn flow_dissipates_and_stays_in_range((n, d, seed, tau) in instance()) {
        let mut r = rng(seed);
        let (s, spec) = random_instance(&mut r, n, d);
        let mut cfg = FlowConfig::for_sample(&s, &spec, tau).unwrap();
        cfg.max_iters = 200;
        // orthonormal basis of span{Σ_τ^{-1} φ(X_i)}
        let resolvent = DVector::from_vec(spec.resolvent(tau));
        let mut span = s.features().transpose();
        for mut c in span.column_iter_mut() {
            c.component_mul_assign(&resolvent);
        }
        let q = span.svd(true, false).u.unwrap();
        let rank = s.n().min(d);
        let basis = q.columns(0, rank).into_owned();
        let mut last = f64::INFINITY;
        let mut ok = true;
        let mut max_off = 0.0f64;
        pgf_solve_traced(&s, &spec, tau, &cfg, |_, w: &Weights| {
            let l = empirical_loss(&s, w);
            ok &= l <= last * (1.0 + 1e-12) + 1e-15;
            last = l;
            let proj = &basis * (basis.transpose() * &w.coords);
            max_off = max_off.max((&w.coords - proj).norm());
        }).unwrap();
        prop_assert!(ok);
        prop_assert!(max_off <= 1e-10);
    }
}

#[test]
fn zero_response_yields_zero() {
    let mut r = rng(8);
    let x = gaussian_matrix(&mut r, 3, 5);
    let s = Sample::new(x, DVector::zeros(3)).unwrap();
    let spec = spectral_transport_core::Spectrum::new(random_spectrum(&mut r, 5)).unwrap();
    let sol = minimal_interpolator(&s, &spec, 0.5).unwrap();
    assert_eq!(sol.energy, 0.0);
    assert!(sol.weights.as_slice().iter().all(|v| *v == 0.0));
}
