//! Exact interpolants of a sample.
//!
//! The sampling operator follows the convention `(Φ_S w)_i = n^{-1/2}⟨w, φ(X_i)⟩`,
//! so an interpolant solves `Φ_S w = n^{-1/2} y`. Among all of them the
//! spectrally minimal one minimizes `‖w‖_τ² = Σ_j (μ_j + τ) w_j²` and is given
//! by the representer formula `w = Σ_τ^{-1} Φ_S^* K^† n^{-1/2} y` with
//! `K = Φ_S Σ_τ^{-1} Φ_S^*`.

use nalgebra::{DMatrix, DVector, SVD};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_tau, Error, Result};
use crate::linalg::PsdEigen;
use crate::rng::rng_for;
use crate::spectral::{Spectrum, Weights};

/// `n` feature rows in eigenbasis coordinates together with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    features: DMatrix<f64>,
    responses: DVector<f64>,
    latent_noise: Option<DVector<f64>>,
}

impl Sample {
    pub fn new(features: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        if features.nrows() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: responses.len(),
                context: "responses per feature row",
            });
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid("features", "sample must have n >= 1 and d >= 1"));
        }
        if features.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("features", "non-finite entry in sample"));
        }
        Ok(Sample {
            features,
            responses,
            latent_noise: None,
        })
    }

    pub fn with_latent_noise(mut self, noise: DVector<f64>) -> Result<Self> {
        if noise.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: noise.len(),
                context: "latent noise per sample",
            });
        }
        self.latent_noise = Some(noise);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn latent_noise(&self) -> Option<&DVector<f64>> {
        self.latent_noise.as_ref()
    }

    /// Copy of the sample with point `i` replaced by `(x, y)`. Latent noise is dropped.
    pub fn replaced(&self, i: usize, x: &DVector<f64>, y: f64) -> Result<Sample> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
                context: "replacement feature row",
            });
        }
        let mut features = self.features.clone();
        features.set_row(i, &x.transpose());
        let mut responses = self.responses.clone();
        responses[i] = y;
        Ok(Sample {
            features,
            responses,
            latent_noise: None,
        })
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Sample {
        let features = self.features.select_rows(idx);
        let responses = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.responses[i]));
        let latent_noise = self
            .latent_noise
            .as_ref()
            .map(|e| DVector::from_iterator(idx.len(), idx.iter().map(|&i| e[i])));
        Sample {
            features,
            responses,
            latent_noise,
        }
    }

    /// `Φ_S w`, i.e. `n^{-1/2} X w`.
    pub fn apply_sampling(&self, w: &Weights) -> DVector<f64> {
        (&self.features * &w.coords) / (self.n() as f64).sqrt()
    }

    /// `n^{-1/2} y`.
    pub fn scaled_responses(&self) -> DVector<f64> {
        &self.responses / (self.n() as f64).sqrt()
    }

    /// Largest absolute in-sample residual `|⟨w, φ(X_i)⟩ − Y_i|`.
    pub fn max_residual(&self, w: &Weights) -> f64 {
        (&self.features * &w.coords - &self.responses).amax()
    }

    fn check_spectrum(&self, spec: &Spectrum) -> Result<()> {
        spec.check_len(self.dim(), "sample feature dimension")
    }
}

/// `Φ_S Σ_τ^{-1/2}` together with the diagonal `(μ_j + τ)^{1/2}`.
pub(crate) struct ScaledDesign {
    pub a: DMatrix<f64>,
    pub sqrt_shift: Vec<f64>,
}

impl ScaledDesign {
    pub fn new(sample: &Sample, spec: &Spectrum, tau: f64) -> ScaledDesign {
        let inv_sqrt_n = 1.0 / (sample.n() as f64).sqrt();
        let sqrt_shift: Vec<f64> = spec.eigenvalues().iter().map(|mu| (mu + tau).sqrt()).collect();
        let mut a = sample.features().clone();
        for (j, mut col) in a.column_iter_mut().enumerate() {
            col *= inv_sqrt_n / sqrt_shift[j];
        }
        ScaledDesign { a, sqrt_shift }
    }

    /// Eigendecomposition of the smaller of `A Aᵀ` (the Gram matrix `K`) and `Aᵀ A`.
    pub fn gram_eigen(&self) -> (PsdEigen, bool) {
        let (n, d) = self.a.shape();
        if n <= d {
            (PsdEigen::new(&self.a * self.a.transpose(), d), true)
        } else {
            (PsdEigen::new(self.a.tr_mul(&self.a), d), false)
        }
    }
}

/// `K_{S,τ} = Φ_S Σ_τ^{-1} Φ_S^*`, entry `(i,k) = n^{-1} Σ_j x_ij x_kj / (μ_j + τ)`.
pub fn gram_matrix(sample: &Sample, spec: &Spectrum, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    sample.check_spectrum(spec)?;
    let sd = ScaledDesign::new(sample, spec, tau);
    Ok(&sd.a * sd.a.transpose())
}

/// Output of [`minimal_interpolator`].
#[derive(Debug, Clone)]
pub struct InterpolantSolution {
    pub weights: Weights,
    /// `K^† n^{-1/2} y`; the Lagrange multiplier of the constrained problem up to sign.
    pub multiplier: DVector<f64>,
    pub gram_rank: usize,
    /// `‖w‖_τ² = n^{-1} yᵀ K^† y`.
    pub energy: f64,
    pub tau: f64,
    /// Largest in-sample residual `|⟨w, φ(X_i)⟩ − Y_i|`.
    pub max_residual: f64,
    /// Whether the sample was fitted exactly (the Gram system was consistent).
    pub interpolates: bool,
}

pub(crate) fn interpolation_tolerance(sample: &Sample) -> f64 {
    1e-8 * (1.0 + sample.responses().amax())
}

/// Spectrally minimal interpolator via the representer formula.
///
/// The pseudoinverse is taken through a symmetric eigendecomposition; when
/// `n > d` the equivalent `d × d` Gram matrix `Aᵀ A` is decomposed instead and
/// `K^† = A (AᵀA)^{†2} Aᵀ` is used, which leaves the contract unchanged.
/// If the responses are not in the range of `Φ_S` the least-squares solution of
/// minimal transported norm is returned and `interpolates` is false.
pub fn minimal_interpolator(sample: &Sample, spec: &Spectrum, tau: f64) -> Result<InterpolantSolution> {
    check_tau(tau)?;
    sample.check_spectrum(spec)?;
    let sd = ScaledDesign::new(sample, spec, tau);
    let b = sample.scaled_responses();
    let (eig, primal) = sd.gram_eigen();
    let multiplier = if primal {
        eig.pinv_apply(&b)
    } else {
        let u = eig.apply_fn(&sd.a.tr_mul(&b), |v| 1.0 / (v * v));
        &sd.a * u
    };
    let mut coords = sd.a.tr_mul(&multiplier);
    for (w, s) in coords.iter_mut().zip(&sd.sqrt_shift) {
        *w /= s;
    }
    let weights = Weights::new(coords);
    let energy = b.dot(&multiplier);
    let max_residual = sample.max_residual(&weights);
    Ok(InterpolantSolution {
        interpolates: max_residual <= interpolation_tolerance(sample),
        weights,
        multiplier,
        gram_rank: eig.rank(),
        energy,
        tau,
        max_residual,
    })
}

/// Stored transported energy of a solution.
pub fn transported_energy(sol: &InterpolantSolution) -> f64 {
    sol.energy
}

/// Output of [`euclidean_min_norm`].
#[derive(Debug, Clone)]
pub struct MinNormSolution {
    pub weights: Weights,
    pub rank: usize,
    pub interpolates: bool,
}

/// Least-Euclidean-norm solution of `Φ_S w = n^{-1/2} y` through the SVD of `Φ_S`.
pub fn euclidean_min_norm(sample: &Sample) -> MinNormSolution {
    let (n, d) = (sample.n(), sample.dim());
    let phi = sample.features() / (n as f64).sqrt();
    let svd = SVD::new(phi, true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = n.max(d) as f64 * f64::EPSILON * smax;
    let mut coeffs = u.tr_mul(&sample.scaled_responses());
    let mut rank = 0;
    for (c, &s) in coeffs.iter_mut().zip(svd.singular_values.iter()) {
        if s > cutoff {
            *c /= s;
            rank += 1;
        } else {
            *c = 0.0;
        }
    }
    let weights = Weights::new(v_t.tr_mul(&coeffs));
    let interpolates = sample.max_residual(&weights) <= interpolation_tolerance(sample);
    MinNormSolution {
        weights,
        rank,
        interpolates,
    }
}

/// Unit vector in `ker(Φ_S)`, chosen deterministically from `seed`: a seeded
/// Gaussian direction orthogonalized against the row space of the features.
pub fn nullspace_direction(sample: &Sample, seed: u64) -> Result<Weights> {
    let (n, d) = (sample.n(), sample.dim());
    let svd = SVD::new(sample.features().clone(), false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = n.max(d) as f64 * f64::EPSILON * smax;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cutoff)
        .collect();
    if keep.len() >= d {
        return Err(Error::NoNullspace { rank: keep.len() });
    }
    let basis = v_t.select_rows(&keep);
    let mut rng = rng_for(seed, &[0x6e75_6c6c]);
    for _ in 0..16 {
        let mut z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        // Two passes of classical Gram-Schmidt against the row space.
        for _ in 0..2 {
            let proj = basis.tr_mul(&(&basis * &z));
            z -= proj;
        }
        let norm = z.norm();
        if norm > 1e-8 {
            return Ok(Weights::new(z / norm));
        }
    }
    Err(Error::NoNullspace { rank: keep.len() })
}

/// `base + amplitude · v` with `v` from [`nullspace_direction`].
pub fn nullspace_spike(sample: &Sample, base: &Weights, amplitude: f64, seed: u64) -> Result<Weights> {
    if base.len() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: base.len(),
            context: "base interpolant",
        });
    }
    let v = nullspace_direction(sample, seed)?;
    Ok(Weights::new(&base.coords + v.coords * amplitude))
}
