//! Synthetic designs `X = Σ_j √μ_j ξ_j e_j`, `Y = ⟨w⋆, X⟩ + ε`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::ReplacementSource;
use crate::error::{Error, Result};
use crate::interpolators::Sample;
use crate::rng::rng_for;
use crate::spectral::{NoiseModel, NoiseSampler, SourceCondition, Spectrum, Weights};

const ROW_STREAM: u64 = 0x0072_6f77;
const LOAD_CHECK_STREAM: u64 = 0x6c6f_6164;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiKind {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    /// Independent coordinates of law `xi_kind`.
    Diagonal,
    /// `ξ_j = √2 cos(2πjU)` with one uniform `U` per row; `xi_kind` is ignored.
    MercerCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignModel {
    pub spectrum: Spectrum,
    pub xi_kind: XiKind,
    pub mode: DesignMode,
    /// `κ` with `‖φ(X)‖ ≤ κ` almost surely; `None` for unbounded designs.
    pub kappa_bound: Option<f64>,
}

impl DesignModel {
    pub fn new(spectrum: Spectrum, xi_kind: XiKind, mode: DesignMode) -> Self {
        let coord_bound_sq = match (mode, xi_kind) {
            (DesignMode::MercerCosine, _) => Some(2.0),
            (DesignMode::Diagonal, XiKind::Rademacher) => Some(1.0),
            (DesignMode::Diagonal, XiKind::Gaussian) => None,
        };
        let kappa_bound = coord_bound_sq.map(|b| (b * spectrum.trace()).sqrt());
        DesignModel {
            spectrum,
            xi_kind,
            mode,
            kappa_bound,
        }
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// `E[ξ⁴] − 1` for the coordinate law.
    pub fn excess_kurtosis(&self) -> f64 {
        match (self.mode, self.xi_kind) {
            (DesignMode::MercerCosine, _) => 0.5,
            (DesignMode::Diagonal, XiKind::Gaussian) => 2.0,
            (DesignMode::Diagonal, XiKind::Rademacher) => 0.0,
        }
    }

    /// Standardized coordinates `ξ_1, …, ξ_d` of one draw.
    pub fn draw_xi(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        match self.mode {
            DesignMode::MercerCosine => {
                let u: f64 = rng.random();
                (1..=d)
                    .map(|j| std::f64::consts::SQRT_2 * (std::f64::consts::TAU * j as f64 * u).cos())
                    .collect()
            }
            DesignMode::Diagonal => match self.xi_kind {
                XiKind::Gaussian => (0..d).map(|_| StandardNormal.sample(rng)).collect(),
                XiKind::Rademacher => (0..d).map(|_| rademacher(rng)).collect(),
            },
        }
    }
}

fn rademacher(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn draw_scalar(sampler: NoiseSampler, rng: &mut ChaCha8Rng) -> f64 {
    match sampler {
        NoiseSampler::Gaussian => StandardNormal.sample(rng),
        NoiseSampler::RademacherScaled => rademacher(rng),
    }
}

/// How the label noise of one row is produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoisePlan {
    Silent,
    /// `ε = σ η`, independent of the features.
    Isotropic { sd: f64 },
    /// `ε = Σ_j a_j ζ_j ξ_j` with independent unit-variance `ζ_j`.
    Modal {
        amplitudes: Vec<f64>,
        /// Exact diagonal loads realized by the amplitudes; they differ from
        /// the requested loads where the requested profile is infeasible.
        achieved_loads: Vec<f64>,
    },
}

impl NoisePlan {
    pub fn achieved_loads(&self, spec: &Spectrum) -> Vec<f64> {
        match self {
            NoisePlan::Silent => vec![0.0; spec.dim()],
            NoisePlan::Isotropic { sd } => spec.eigenvalues().iter().map(|mu| sd * sd * mu).collect(),
            NoisePlan::Modal { achieved_loads, .. } => achieved_loads.clone(),
        }
    }
}

/// Chooses the noise construction for a requested load profile.
///
/// With `S = Σ a_k²` and `κ = E[ξ⁴] − 1` the per-mode construction realizes
/// `E[ε² φ_j²] = μ_j (S + κ a_j²)`. Writing `h_j = c_j / μ_j`, the amplitudes
/// `a_j² = max(0, (h_j − S)/κ)` with `S` the fixed point of
/// `S = Σ_j max(0, (h_j − S)/κ)` reproduce every `c_j` with `h_j ≥ S` and
/// raise the rest to `μ_j S`. For `κ = 0` every mode gets `μ_j max_k h_k`.
pub fn plan_noise(design: &DesignModel, noise: &NoiseModel) -> Result<NoisePlan> {
    let spec = &design.spectrum;
    spec.check_len(noise.modal_loads.len(), "noise loads")?;
    if noise.is_silent() {
        return Ok(NoisePlan::Silent);
    }
    if let Some(v) = noise.isotropic_variance {
        return Ok(NoisePlan::Isotropic { sd: v.sqrt() });
    }
    let mu = spec.eigenvalues();
    let h: Vec<f64> = mu
        .iter()
        .zip(&noise.modal_loads)
        .map(|(&m, &c)| if m > 0.0 { c / m } else { 0.0 })
        .collect();
    let h_max = h.iter().cloned().fold(0.0, f64::max);
    let kappa = design.excess_kurtosis();
    let (amplitudes_sq, s) = if kappa == 0.0 {
        let total: f64 = h.iter().sum();
        (h.iter().map(|x| x * h_max / total).collect::<Vec<_>>(), h_max)
    } else {
        let excess = |s: f64| -> f64 { h.iter().map(|&x| ((x - s) / kappa).max(0.0)).sum::<f64>() - s };
        let (mut lo, mut hi) = (0.0, h_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        (h.iter().map(|&x| ((x - s) / kappa).max(0.0)).collect(), s)
    };
    let achieved_loads = mu
        .iter()
        .zip(&amplitudes_sq)
        .map(|(&m, &a2)| m * (s + kappa * a2))
        .collect();
    Ok(NoisePlan::Modal {
        amplitudes: amplitudes_sq.iter().map(|a| a.sqrt()).collect(),
        achieved_loads,
    })
}

/// Draws rows of the synthetic model; also serves as the population
/// replacement source for stability estimates.
#[derive(Debug, Clone)]
pub struct SampleGenerator {
    pub design: DesignModel,
    pub w_star: Weights,
    pub noise_sampler: NoiseSampler,
    pub plan: NoisePlan,
}

impl SampleGenerator {
    pub fn new(design: DesignModel, source: &SourceCondition, noise: &NoiseModel) -> Result<Self> {
        let w_star = design.spectrum.source_target(source)?;
        let plan = plan_noise(&design, noise)?;
        Ok(SampleGenerator {
            design,
            w_star,
            noise_sampler: noise.sampler,
            plan,
        })
    }

    /// One row: `(φ(X), Y, ε)`.
    pub fn draw_row(&self, rng: &mut ChaCha8Rng) -> (DVector<f64>, f64, f64) {
        let xi = self.design.draw_xi(rng);
        let phi = DVector::from_iterator(
            xi.len(),
            self.design.spectrum.eigenvalues().iter().zip(&xi).map(|(m, x)| m.sqrt() * x),
        );
        let eps = match &self.plan {
            NoisePlan::Silent => 0.0,
            NoisePlan::Isotropic { sd } => sd * draw_scalar(self.noise_sampler, rng),
            NoisePlan::Modal { amplitudes, .. } => amplitudes
                .iter()
                .zip(&xi)
                .map(|(a, x)| {
                    let z = draw_scalar(self.noise_sampler, rng);
                    a * z * x
                })
                .sum(),
        };
        let y = phi.dot(&self.w_star.coords) + eps;
        (phi, y, eps)
    }

    /// `n` rows; row `i` uses its own stream derived from `(seed, i)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        let d = self.design.dim();
        let mut x = DMatrix::zeros(n, d);
        let mut y = DVector::zeros(n);
        let mut eps = DVector::zeros(n);
        for i in 0..n {
            let mut rng = rng_for(seed, &[ROW_STREAM, i as u64]);
            let (phi, yi, ei) = self.draw_row(&mut rng);
            x.row_mut(i).copy_from(&phi.transpose());
            y[i] = yi;
            eps[i] = ei;
        }
        Sample::new(x, y)?.with_latent_noise(eps)
    }

    /// Monte Carlo estimate of the diagonal loads `E[ε² φ_j²]`.
    pub fn empirical_loads(&self, draws: usize, seed: u64) -> Vec<f64> {
        let d = self.design.dim();
        let mut acc = vec![0.0; d];
        for k in 0..draws {
            let mut rng = rng_for(seed, &[LOAD_CHECK_STREAM, k as u64]);
            let (phi, _, eps) = self.draw_row(&mut rng);
            for (a, p) in acc.iter_mut().zip(phi.iter()) {
                *a += eps * eps * p * p;
            }
        }
        acc.iter().map(|a| a / draws as f64).collect()
    }

    /// Compares Monte Carlo loads against the planned ones. Modes whose planned
    /// load is below `1e-3 ×` the largest are compared on the absolute scale of
    /// that threshold. Returns the Monte Carlo loads.
    pub fn validate_loads(&self, draws: usize, seed: u64, rel_tol: f64) -> Result<Vec<f64>> {
        let planned = self.plan.achieved_loads(&self.design.spectrum);
        let measured = self.empirical_loads(draws, seed);
        let top = planned.iter().cloned().fold(0.0, f64::max);
        for (j, (p, m)) in planned.iter().zip(&measured).enumerate() {
            let scale = p.max(1e-3 * top);
            if scale > 0.0 && (m - p).abs() > rel_tol * scale {
                return Err(Error::Degenerate(format!(
                    "noise load of mode {} measured {m:.4e}, planned {p:.4e}",
                    j + 1
                )));
            }
        }
        Ok(measured)
    }
}

impl ReplacementSource for SampleGenerator {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (DVector<f64>, f64) {
        let (phi, y, _) = self.draw_row(rng);
        (phi, y)
    }
}

pub fn generate_sample(
    design: &DesignModel,
    source: &SourceCondition,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<Sample> {
    SampleGenerator::new(design.clone(), source, noise)?.sample(n, seed)
}
