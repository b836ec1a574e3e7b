//! Population-side operator calculus.
//!
//! Everything here is evaluated modally: the covariance Σ is represented by its
//! eigenvalues `μ_1 ≥ … ≥ μ_d ≥ 0` and parameters are coordinate vectors in the
//! eigenbasis, so `Σ_τ = Σ + τI` acts diagonally.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_tau, Error, Result};

/// Coordinates of a parameter vector in the eigenbasis of Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub coords: DVector<f64>,
}

impl Weights {
    pub fn new(coords: DVector<f64>) -> Self {
        Weights { coords }
    }

    pub fn zeros(d: usize) -> Self {
        Weights::new(DVector::zeros(d))
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }
}

impl From<Vec<f64>> for Weights {
    fn from(v: Vec<f64>) -> Self {
        Weights::new(DVector::from_vec(v))
    }
}

/// Truncated eigenvalue sequence of the population covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    /// Trace mass of the modeled infinite tail that was dropped at truncation.
    dropped_tail_mass: f64,
}

/// Default fraction of modeled trace that truncation may drop.
pub const DEFAULT_TAIL_FRACTION: f64 = 1e-6;

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        Self::with_tail(eigenvalues, 0.0)
    }

    fn with_tail(eigenvalues: Vec<f64>, dropped_tail_mass: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("d", "spectrum must have at least one mode"));
        }
        for (j, &mu) in eigenvalues.iter().enumerate() {
            if !mu.is_finite() || mu < 0.0 {
                return Err(Error::invalid(
                    "eigenvalues",
                    format!("mode {} has invalid eigenvalue {mu}", j + 1),
                ));
            }
        }
        if let Some(j) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::invalid(
                "eigenvalues",
                format!("not nonincreasing at mode {}", j + 2),
            ));
        }
        Ok(Spectrum {
            eigenvalues,
            dropped_tail_mass,
        })
    }

    /// `μ_j = scale · j^{-p}` for `j = 1..=d`, recording the dropped tail mass
    /// of the infinite sequence.
    pub fn polynomial(p: f64, d: usize, scale: f64) -> Result<Self> {
        check_poly(p, scale)?;
        if d == 0 {
            return Err(Error::invalid("d", "must be at least 1"));
        }
        let eigenvalues = (1..=d).map(|j| scale * (j as f64).powf(-p)).collect();
        Self::with_tail(eigenvalues, scale * zeta_tail(p, d))
    }

    /// Polynomial spectrum truncated at the smallest `d` whose dropped tail is at
    /// most `tail_fraction` of the total modeled trace.
    pub fn polynomial_truncated(p: f64, scale: f64, tail_fraction: f64) -> Result<Self> {
        check_poly(p, scale)?;
        if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
            return Err(Error::invalid("tail_fraction", "must lie in (0, 1)"));
        }
        const MAX_D: usize = 50_000_000;
        let total = zeta_tail(p, 0);
        let fits = |d: usize| zeta_tail(p, d) <= tail_fraction * total;
        if !fits(MAX_D) {
            return Err(Error::invalid(
                "tail_fraction",
                format!("requires more than {MAX_D} modes at p = {p}"),
            ));
        }
        let (mut lo, mut hi) = (1usize, MAX_D);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if fits(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Self::polynomial(p, lo, scale)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn dropped_tail_mass(&self) -> f64 {
        self.dropped_tail_mass
    }

    pub fn top(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Diagonal of `Σ_τ^{-1}`.
    pub fn resolvent(&self, tau: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|mu| 1.0 / (mu + tau)).collect()
    }

    /// `𝒩(τ) = Σ_j μ_j / (μ_j + τ)`.
    pub fn effective_dimension(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.eigenvalues.iter().map(|mu| mu / (mu + tau)).sum())
    }

    /// `A(τ) = [Σ_j c_j/(μ_j+τ)] / 𝒩(τ)`.
    pub fn alignment_coefficient(&self, noise: &NoiseModel, tau: f64) -> Result<f64> {
        self.check_len(noise.modal_loads.len(), "noise loads")?;
        let denom = self.effective_dimension(tau)?;
        if denom <= 0.0 {
            return Err(Error::DegenerateSpectrum(
                "effective dimension is zero (all eigenvalues vanish)".into(),
            ));
        }
        Ok(noise_trace(self, noise, tau) / denom)
    }

    /// Target coordinates `μ_j^{r-1/2} g_j`.
    pub fn source_target(&self, src: &SourceCondition) -> Result<Weights> {
        self.check_len(src.g.len(), "source coefficients")?;
        let e = src.r - 0.5;
        let coords = self
            .eigenvalues
            .iter()
            .zip(&src.g)
            .enumerate()
            .map(|(j, (&mu, &g))| {
                if g == 0.0 || e == 0.0 {
                    Ok(g)
                } else if mu == 0.0 {
                    if e < 0.0 {
                        Err(Error::IllPosedSource { mode: j + 1 })
                    } else {
                        Ok(0.0)
                    }
                } else {
                    Ok(mu.powf(e) * g)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(coords.into())
    }

    /// `w_{⋆,τ} = Σ_τ^{-1} Σ w⋆`.
    pub fn filtered_target(&self, w_star: &Weights, tau: f64) -> Result<Weights> {
        check_tau(tau)?;
        self.check_len(w_star.len(), "target")?;
        let coords = self
            .eigenvalues
            .iter()
            .zip(w_star.coords.iter())
            .map(|(mu, w)| mu / (mu + tau) * w)
            .collect::<Vec<_>>();
        Ok(coords.into())
    }

    /// `Σ_j μ_j (w_j − w⋆_j)²`.
    pub fn excess_risk(&self, w: &Weights, w_star: &Weights) -> Result<f64> {
        self.check_len(w.len(), "weights")?;
        self.check_len(w_star.len(), "target")?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(w.coords.iter().zip(w_star.coords.iter()))
            .map(|(mu, (a, b))| mu * (a - b).powi(2))
            .sum())
    }

    /// `‖u‖_τ² = Σ_j (μ_j + τ) u_j²`.
    pub fn transported_norm_sq(&self, tau: f64, u: &Weights) -> Result<f64> {
        check_tau(tau)?;
        self.check_len(u.len(), "vector")?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(u.coords.iter())
            .map(|(mu, x)| (mu + tau) * x * x)
            .sum())
    }

    pub(crate) fn check_len(&self, found: usize, context: &'static str) -> Result<()> {
        if found == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
                context,
            })
        }
    }
}

/// Free-function alias of [`Spectrum::polynomial`].
pub fn make_polynomial_spectrum(p: f64, d: usize, scale: f64) -> Result<Spectrum> {
    Spectrum::polynomial(p, d, scale)
}

fn check_poly(p: f64, scale: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::invalid(
            "p",
            format!("decay exponent must exceed 1 (trace of the infinite tail diverges), got {p}"),
        ));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid("scale", format!("must be > 0, got {scale}")));
    }
    Ok(())
}

/// `Σ_{j>d} j^{-p}`, exact summation up to a cutover then Euler-Maclaurin.
fn zeta_tail(p: f64, d: usize) -> f64 {
    const CUT: usize = 64;
    let mut head = 0.0;
    let start = d.max(CUT);
    for j in (d + 1)..=start {
        head += (j as f64).powf(-p);
    }
    let x = start as f64;
    let em = x.powf(1.0 - p) / (p - 1.0) - 0.5 * x.powf(-p) + p * x.powf(-p - 1.0) / 12.0
        - p * (p + 1.0) * (p + 2.0) * x.powf(-p - 3.0) / 720.0;
    head + em
}

pub(crate) fn noise_trace(spec: &Spectrum, noise: &NoiseModel, tau: f64) -> f64 {
    spec.eigenvalues
        .iter()
        .zip(&noise.modal_loads)
        .map(|(mu, c)| c / (mu + tau))
        .sum()
}

/// Regularity pair `(r, R)` and coefficients `g` with `w⋆ = Σ^{r-1/2} g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceCondition {
    pub r: f64,
    pub radius: f64,
    pub g: Vec<f64>,
}

impl SourceCondition {
    pub fn new(r: f64, radius: f64, g: Vec<f64>) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::invalid("r", format!("must lie in (0, 1], got {r}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("radius", format!("must be > 0, got {radius}")));
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > radius * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "g",
                format!("coefficient norm {norm} exceeds radius {radius}"),
            ));
        }
        Ok(SourceCondition { r, radius, g })
    }

    /// Coefficients spread evenly over all `d` modes with `‖g‖ = R`.
    pub fn flat(r: f64, radius: f64, d: usize) -> Result<Self> {
        let c = radius / (d as f64).sqrt();
        Self::new(r, radius, vec![c; d])
    }

    pub fn g_norm(&self) -> f64 {
        self.g.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Law of the scalar noise multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSampler {
    Gaussian,
    RademacherScaled,
}

/// Diagonal loads `c_j = ⟨C_ε e_j, e_j⟩` of the noise alignment operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseModel {
    pub modal_loads: Vec<f64>,
    pub sampler: NoiseSampler,
    /// Set when the loads are exactly `σ² μ_j` (noise independent of X).
    pub isotropic_variance: Option<f64>,
    /// `(b, q)` when the loads were generated as `c_j = b μ_j^{1-q}`.
    pub obstruction: Option<(f64, f64)>,
}

impl NoiseModel {
    /// Homoscedastic noise independent of the features: `c_j = σ² μ_j`.
    pub fn isotropic(spec: &Spectrum, variance: f64, sampler: NoiseSampler) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::invalid("variance", format!("must be >= 0, got {variance}")));
        }
        Ok(NoiseModel {
            modal_loads: spec.eigenvalues().iter().map(|mu| variance * mu).collect(),
            sampler,
            isotropic_variance: Some(variance),
            obstruction: None,
        })
    }

    pub fn from_loads(modal_loads: Vec<f64>, sampler: NoiseSampler) -> Result<Self> {
        if let Some(j) = modal_loads.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid(
                "modal_loads",
                format!("load of mode {} must be finite and >= 0", j + 1),
            ));
        }
        Ok(NoiseModel {
            modal_loads,
            sampler,
            isotropic_variance: None,
            obstruction: None,
        })
    }

    pub fn is_silent(&self) -> bool {
        self.modal_loads.iter().all(|&c| c == 0.0)
    }
}
