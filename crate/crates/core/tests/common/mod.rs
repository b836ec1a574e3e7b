//! Independent reference computations. Nothing here calls the eigen or
//! pseudoinverse routines of the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spectral_transport_core::harness::SampleGenerator;
use spectral_transport_core::{minimal_interpolator, Sample, Spectrum, Weights};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

/// Random positive spectrum in `[0.01, 1]`, sorted descending.
pub fn random_spectrum(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut mu: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..1.0)).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    mu
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Sample, Spectrum) {
    let mu = random_spectrum(rng, d);
    let x = gaussian_matrix(rng, n, d);
    let y = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    (Sample::new(x, y).unwrap(), Spectrum::new(mu).unwrap())
}

/// `K_ik = n^{-1} Σ_j x_ij x_kj / (μ_j + τ)` by explicit loops.
pub fn gram_triple_loop(x: &DMatrix<f64>, mu: &[f64], tau: f64) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for l in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                s += x[(i, j)] * x[(l, j)] / (mu[j] + tau);
            }
            k[(i, l)] = s / n as f64;
        }
    }
    k
}

/// Solves `min ½ wᵀ(Σ+τI)w  s.t.  n^{-1/2} X w = n^{-1/2} y` through the dense
/// KKT system with an LU factorization. Requires `X` of full row rank.
pub fn kkt_interpolant(x: &DMatrix<f64>, y: &DVector<f64>, mu: &[f64], tau: f64) -> Vec<f64> {
    let (n, d) = x.shape();
    let s = 1.0 / (n as f64).sqrt();
    let m = d + n;
    let mut a = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for j in 0..d {
        a[(j, j)] = mu[j] + tau;
    }
    for i in 0..n {
        for j in 0..d {
            a[(j, d + i)] = x[(i, j)] * s;
            a[(d + i, j)] = x[(i, j)] * s;
        }
        rhs[d + i] = y[i] * s;
    }
    let sol = a.lu().solve(&rhs).expect("KKT system is nonsingular");
    sol.rows(0, d).iter().cloned().collect()
}

pub fn transported_norm_sq(mu: &[f64], tau: f64, u: &[f64]) -> f64 {
    mu.iter().zip(u).map(|(m, v)| (m + tau) * v * v).sum()
}

pub fn risk(mu: &[f64], w: &[f64], w_star: &[f64]) -> f64 {
    mu.iter()
        .zip(w.iter().zip(w_star))
        .map(|(m, (a, b))| m * (a - b) * (a - b))
        .sum()
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn effective_dimension(mu: &[f64], tau: f64) -> f64 {
    let mut s = 0.0;
    for m in mu {
        s += m / (m + tau);
    }
    s
}

pub fn alignment(mu: &[f64], c: &[f64], tau: f64) -> f64 {
    let mut num = 0.0;
    for (m, cj) in mu.iter().zip(c) {
        num += cj / (m + tau);
    }
    num / effective_dimension(mu, tau)
}

/// Largest eigenvalue of a PSD matrix by power iteration.
pub fn power_iteration_top(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = k * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        if (next - lambda).abs() <= 1e-15 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `n^{-1} Σ_i x_ij x_il` by explicit loops.
pub fn covariance_two_loop(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut c = DMatrix::zeros(d, d);
    for j in 0..d {
        for l in 0..d {
            let mut s = 0.0;
            for i in 0..n {
                s += x[(i, j)] * x[(i, l)];
            }
            c[(j, l)] = s / n as f64;
        }
    }
    c
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Population index `T_n(τ) + n^{-1}𝒩(τ)(1 + A(τ))`: `T_n` by Monte Carlo over
/// `samples` independent samples with one fresh replacement each.
pub fn population_index(
    generator: &SampleGenerator,
    loads: &[f64],
    n: usize,
    tau: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let spec = &generator.design.spectrum;
    let mu = spec.eigenvalues();
    let mut total = 0.0;
    for s in 0..samples {
        let sample = generator.sample(n, seed ^ (0x9e37 * (s as u64 + 1))).unwrap();
        let base = minimal_interpolator(&sample, spec, tau).unwrap().weights;
        let mut r = rng(seed.wrapping_add(1_000_003 * s as u64));
        let (x, y, _) = generator.draw_row(&mut r);
        let i = s % n;
        let moved = minimal_interpolator(&sample.replaced(i, &x, y).unwrap(), spec, tau).unwrap().weights;
        total += transported_norm_sq(mu, tau, &diff(base.as_slice(), moved.as_slice()));
    }
    let t = total / samples as f64;
    t + effective_dimension(mu, tau) * (1.0 + alignment(mu, loads, tau)) / n as f64
}

pub fn weights(v: &[f64]) -> Weights {
    Weights::from(v.to_vec())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
