mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use spectral_transport_core::harness::{DesignMode, DesignModel, SampleGenerator, XiKind};
use spectral_transport_core::{
    empirical_covariance, empirical_effective_dimension, fredriksson_surrogate, residual_alignment,
    transport_stability_mc, BenignRule, FredrikssonComponents, NoiseModel, NoiseSampler, ReplacementSource, Sample,
    SourceCondition, Spectrum, SurrogateConfig,
};

#[test]
fn covariance_against_two_loops() {
    let mut r = rng(11);
    let x = gaussian_matrix(&mut r, 50, 5);
    let s = Sample::new(x.clone(), DVector::zeros(50)).unwrap();
    let c = empirical_covariance(&s);
    let oracle = covariance_two_loop(&x);
    assert!((c - &oracle).amax() <= 1e-12 * oracle.amax());
}

#[test]
fn empirical_effective_dimension_against_singular_values() {
    let mut r = rng(12);
    let a = gaussian_matrix(&mut r, 6, 6);
    let cov = &a * a.transpose();
    let tau = 0.7;
    let sv = cov.clone().svd(false, false).singular_values;
    let oracle: f64 = sv.iter().map(|l| l / (l + tau)).sum();
    assert!(rel_err(empirical_effective_dimension(&cov, tau).unwrap(), oracle) < 1e-10);
}

struct FixedPoint(DVector<f64>, f64);

impl ReplacementSource for FixedPoint {
    fn draw(&self, _: &mut ChaCha8Rng) -> (DVector<f64>, f64) {
        (self.0.clone(), self.1)
    }
}

#[test]
fn stability_against_per_replacement_kkt() {
    let mut r = rng(13);
    let (s, spec) = random_instance(&mut r, 3, 6);
    let tau = 0.2;
    let fresh = FixedPoint(DVector::from_fn(6, |j, _| 0.3 * j as f64 - 0.5), 0.8);
    let budget = 6;
    let got = transport_stability_mc(&s, &fresh, &spec, tau, budget, 99).unwrap();

    let mu = spec.eigenvalues();
    let base = kkt_interpolant(s.features(), s.responses(), mu, tau);
    let n = s.n() as f64;
    let mut total = 0.0;
    for b in 0..budget {
        let i = b % s.n();
        let mut x = s.features().clone();
        let mut y = s.responses().clone();
        x.row_mut(i).copy_from(&fresh.0.transpose());
        y[i] = fresh.1;
        let moved = kkt_interpolant(&x, &y, mu, tau);
        let u = DVector::from_vec(diff(&base, &moved));
        // ‖u‖² in the metric Σ̂ + τI of the original sample
        total += (s.features() * &u).norm_squared() / n + tau * u.norm_squared();
    }
    let oracle = total / budget as f64;
    assert!(rel_err(got, oracle) < 1e-8, "{got} vs {oracle}");
}

#[test]
fn alignment_against_direct_inverse() {
    let mut r = rng(14);
    let n = 40;
    let d = 5;
    let x = gaussian_matrix(&mut r, n, d);
    let y = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());
    let s = Sample::new(x.clone(), y.clone()).unwrap();
    let tau = 0.3;
    let ridge = 0.1;
    let got = residual_alignment(&s, tau, ridge).unwrap();

    let even: Vec<usize> = (0..n).step_by(2).collect();
    let odd: Vec<usize> = (1..n).step_by(2).collect();
    let xe = DMatrix::from_fn(even.len(), d, |i, j| x[(even[i], j)]);
    let ye = DVector::from_fn(even.len(), |i, _| y[even[i]]);
    let m = even.len() as f64;
    let lhs = xe.transpose() * &xe / m + DMatrix::identity(d, d) * ridge;
    let pilot = lhs.lu().solve(&(xe.transpose() * &ye / m)).unwrap();
    let mut c_res = DMatrix::zeros(d, d);
    for &i in &odd {
        let xi = x.row(i).transpose();
        let e = y[i] - xi.dot(&pilot);
        c_res += &xi * xi.transpose() * (e * e);
    }
    c_res /= odd.len() as f64;
    let cov = covariance_two_loop(&x);
    let inv = (&cov + DMatrix::identity(d, d) * tau).try_inverse().unwrap();
    let n_hat = (&cov * &inv).trace();
    let oracle = (c_res * inv).trace() / n_hat;
    assert!(rel_err(got, oracle) < 1e-10, "{got} vs {oracle}");
}

#[test]
fn isotropic_alignment_surrogate_near_variance() {
    let spec = Spectrum::polynomial(2.0, 20, 1.0).unwrap();
    let design = DesignModel::new(spec.clone(), XiKind::Gaussian, DesignMode::Diagonal);
    let src = SourceCondition::flat(0.5, 1.0, 20).unwrap();
    let noise = NoiseModel::isotropic(&spec, 1.0, NoiseSampler::Gaussian).unwrap();
    let g = SampleGenerator::new(design, &src, &noise).unwrap();
    let s = g.sample(4096, 21).unwrap();
    let a = residual_alignment(&s, 0.05, 0.01).unwrap();
    assert!((0.5..=2.0).contains(&a), "A = {a}");
}

#[test]
fn surrogate_tracks_population_index() {
    let d = 60;
    let spec = Spectrum::polynomial(2.0, d, 1.0).unwrap();
    let design = DesignModel::new(spec.clone(), XiKind::Gaussian, DesignMode::Diagonal);
    let src = SourceCondition::flat(0.5, 1.0, d).unwrap();
    let noise = NoiseModel::isotropic(&spec, 1.0, NoiseSampler::Gaussian).unwrap();
    let g = SampleGenerator::new(design, &src, &noise).unwrap();
    let n = 512;
    let s = g.sample(n, 31).unwrap();
    let cfg = SurrogateConfig {
        tau_grid: vec![0.003, 0.01, 0.03, 0.1],
        replacement_budget: 20,
        lambda_weight: 1.0,
        r_assumed: 0.5,
        pilot_ridge: None,
        seed: 5,
        benign_rule: BenignRule::default(),
    };
    let rep = fredriksson_surrogate(&s, &spec, &cfg, &g).unwrap();
    for c in &rep.components {
        let oracle = population_index(&g, &noise.modal_loads, n, c.tau, 200, 77);
        let ratio = c.index_sq / oracle;
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "tau {}: {} vs {}", c.tau, c.index_sq, oracle);
    }
}

#[test]
fn selection_prefers_interior_minimum_and_small_ties() {
    let mut r = rng(15);
    let (s, spec) = random_instance(&mut r, 8, 4);
    let fresh = FixedPoint(DVector::from_element(4, 0.1), 0.0);
    let single = SurrogateConfig {
        tau_grid: vec![0.4],
        replacement_budget: 2,
        lambda_weight: 1.0,
        r_assumed: 0.5,
        pilot_ridge: None,
        seed: 1,
        benign_rule: BenignRule::default(),
    };
    let rep = fredriksson_surrogate(&s, &spec, &single, &fresh).unwrap();
    assert_eq!(rep.selected_tau, 0.4);
}

proptest! {
    #[test]
    fn index_decomposition(t in 0.0f64..10.0, nh in 0.0f64..100.0, a in 0.0f64..50.0, n in 1usize..10_000, tau in 1e-4f64..1.0) {
        let c = FredrikssonComponents::assemble(tau, n, t, nh, a, 0.0);
        prop_assert_eq!(c.index_sq, t + nh * (1.0 + a) / n as f64);
    }
}
