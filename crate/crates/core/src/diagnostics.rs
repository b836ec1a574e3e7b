//! Empirical surrogate of the scale-resolved index
//! `T̂_n(τ) + n^{-1} 𝒩̂_n(τ) (1 + Â_n(τ))`, computed from one sample.
//!
//! * `T̂_n` averages `B` one-point replacement displacements of the minimal
//!   interpolator, measured in the empirical metric `Σ̂_n + τI` of the original
//!   sample. The replaced index cycles `0, 1, …, n−1, 0, …`.
//! * `𝒩̂_n` is the effective dimension of `Σ̂_n = Φ_S^* Φ_S`.
//! * `Â_n` uses a sample split: a ridge pilot fitted on even-indexed points,
//!   residuals `ê_i` on odd-indexed points and `Ĉ_res = mean(ê_i² φ_i φ_iᵀ)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_tau, Error, Result};
use crate::interpolators::{minimal_interpolator, Sample};
use crate::linalg::argmin_first;
use crate::rng::rng_for;
use crate::spectral::{Spectrum, Weights};

/// Source of fresh `(φ(X'), Y')` pairs used as replacement points.
pub trait ReplacementSource: Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (DVector<f64>, f64);
}

/// Replacement points resampled uniformly from the rows of a fixed sample.
/// Used when no generative model is available (ingested data).
pub struct EmpiricalResampler<'a> {
    pub sample: &'a Sample,
}

impl ReplacementSource for EmpiricalResampler<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (DVector<f64>, f64) {
        let i = rng.random_range(0..self.sample.n());
        (
            self.sample.features().row(i).transpose(),
            self.sample.responses()[i],
        )
    }
}

/// When a scale is labeled benign instead of by its largest component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BenignRule {
    /// All three components below `factor × (bias_term + index_sq)`.
    Relative(f64),
    /// All three components below a fixed level.
    Absolute(f64),
    Disabled,
}

impl Default for BenignRule {
    fn default() -> Self {
        BenignRule::Relative(0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub tau_grid: Vec<f64>,
    pub replacement_budget: usize,
    /// Weight of `τ^{2r}` in the scale selection.
    #[serde(default = "one")]
    pub lambda_weight: f64,
    pub r_assumed: f64,
    /// Ridge penalty of the alignment pilot; `None` uses the evaluation scale τ.
    #[serde(default)]
    pub pilot_ridge: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub benign_rule: BenignRule,
}

fn one() -> f64 {
    1.0
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(Error::invalid("tau_grid", "must be nonempty"));
        }
        if self.tau_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("tau_grid", "entries must be finite and > 0"));
        }
        if self.tau_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tau_grid", "must be strictly increasing"));
        }
        if self.replacement_budget == 0 {
            return Err(Error::invalid("replacement_budget", "must be >= 1"));
        }
        if !(self.lambda_weight.is_finite() && self.lambda_weight >= 0.0) {
            return Err(Error::invalid("lambda_weight", "must be >= 0"));
        }
        if !(self.r_assumed > 0.0 && self.r_assumed <= 1.0) {
            return Err(Error::invalid("r_assumed", "must lie in (0, 1]"));
        }
        if let Some(p) = self.pilot_ridge {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::invalid("pilot_ridge", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Per-scale record of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FredrikssonComponents {
    pub tau: f64,
    pub n: usize,
    pub t_hat: f64,
    pub n_hat: f64,
    pub a_hat: f64,
    pub index_sq: f64,
    pub bias_term: f64,
}

impl FredrikssonComponents {
    /// Assembles the record; `index_sq = t_hat + n_hat (1 + a_hat) / n`.
    pub fn assemble(tau: f64, n: usize, t_hat: f64, n_hat: f64, a_hat: f64, bias_term: f64) -> Self {
        FredrikssonComponents {
            tau,
            n,
            t_hat,
            n_hat,
            a_hat,
            index_sq: t_hat + n_hat * (1.0 + a_hat) / n as f64,
            bias_term,
        }
    }

    pub fn spectrum_part(&self) -> f64 {
        self.n_hat / self.n as f64
    }

    pub fn alignment_part(&self) -> f64 {
        self.n_hat * self.a_hat / self.n as f64
    }
}

/// `Σ̂_n = n^{-1} Σ_i φ(X_i) φ(X_i)ᵀ`.
pub fn empirical_covariance(sample: &Sample) -> DMatrix<f64> {
    sample.features().tr_mul(sample.features()) / sample.n() as f64
}

fn check_symmetric(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() {
        return Err(Error::invalid("cov", "matrix must be square"));
    }
    let scale = cov.amax().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::invalid("cov", format!("not symmetric (max asymmetry {asym:e})")));
    }
    Ok(())
}

/// `Tr(Σ̂ (Σ̂ + τI)^{-1})` through the eigenvalues of `cov`.
pub fn empirical_effective_dimension(cov: &DMatrix<f64>, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_symmetric(cov)?;
    let eig = SymmetricEigen::new(cov.clone());
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .map(|l| l / (l + tau))
        .sum())
}

/// Eigendecomposition of `Σ̂_n`, reused across scales.
struct EmpiricalGeometry {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EmpiricalGeometry {
    fn new(sample: &Sample) -> Self {
        let eig = SymmetricEigen::new(empirical_covariance(sample));
        EmpiricalGeometry {
            values: eig.eigenvalues.iter().map(|l| l.max(0.0)).collect(),
            vectors: eig.eigenvectors,
        }
    }

    fn effective_dimension(&self, tau: f64) -> f64 {
        self.values.iter().map(|l| l / (l + tau)).sum()
    }

    /// `Tr(C (Σ̂ + τI)^{-1})` for `C = Σ_i weights_i x_i x_iᵀ`.
    fn weighted_trace(&self, rows: &DMatrix<f64>, weights: &[f64], tau: f64) -> f64 {
        let z = rows * &self.vectors;
        let mut total = 0.0;
        for (k, &l) in self.values.iter().enumerate() {
            let col = z.column(k);
            let s: f64 = col.iter().zip(weights).map(|(v, w)| w * v * v).sum();
            total += s / (l + tau);
        }
        total
    }
}

/// `‖u‖²_{Σ̂+τI} = n^{-1}‖X u‖² + τ‖u‖²`.
fn empirical_norm_sq(sample: &Sample, tau: f64, u: &DVector<f64>) -> f64 {
    (sample.features() * u).norm_squared() / sample.n() as f64 + tau * u.norm_squared()
}

/// Monte Carlo replacement-transport stability `T̂_n(τ)`.
///
/// Draw `b` replaces index `b mod n` with a point from `generator`, using a
/// stream derived from `(seed, b)`; draws are solved in parallel and summed in
/// index order.
pub fn transport_stability_mc(
    sample: &Sample,
    generator: &dyn ReplacementSource,
    spec: &Spectrum,
    tau: f64,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    if budget == 0 {
        return Err(Error::invalid("replacement_budget", "must be >= 1"));
    }
    let base = minimal_interpolator(sample, spec, tau)?.weights;
    let dists = (0..budget)
        .into_par_iter()
        .map(|b| replacement_distance(sample, generator, spec, tau, &base, b, seed))
        .collect::<Result<Vec<f64>>>()?;
    Ok(dists.iter().sum::<f64>() / budget as f64)
}

fn replacement_distance(
    sample: &Sample,
    generator: &dyn ReplacementSource,
    spec: &Spectrum,
    tau: f64,
    base: &Weights,
    b: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng_for(seed, &[0x7265_706c, b as u64]);
    let (x, y) = generator.draw(&mut rng);
    let perturbed = sample.replaced(b % sample.n(), &x, y)?;
    let moved = minimal_interpolator(&perturbed, spec, tau)?.weights;
    Ok(empirical_norm_sq(sample, tau, &(&base.coords - moved.coords)))
}

fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
}

fn ridge_pilot(train: &Sample, ridge: f64) -> Result<DVector<f64>> {
    let m = train.n() as f64;
    let mut gram = train.features().tr_mul(train.features()) / m;
    for j in 0..gram.nrows() {
        gram[(j, j)] += ridge;
    }
    let rhs = train.features().tr_mul(train.responses()) / m;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ridge pilot system is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Residual-driven alignment surrogate `Â_n(τ)` (sample split with ridge pilot).
pub fn residual_alignment(sample: &Sample, tau: f64, pilot_ridge: f64) -> Result<f64> {
    check_tau(tau)?;
    let geom = EmpiricalGeometry::new(sample);
    residual_alignment_with(sample, &geom, tau, pilot_ridge)
}

fn residual_alignment_with(
    sample: &Sample,
    geom: &EmpiricalGeometry,
    tau: f64,
    pilot_ridge: f64,
) -> Result<f64> {
    if sample.n() < 4 {
        return Err(Error::invalid("sample", "alignment split needs n >= 4"));
    }
    if !(pilot_ridge.is_finite() && pilot_ridge > 0.0) {
        return Err(Error::invalid("pilot_ridge", "must be > 0"));
    }
    let n_hat = geom.effective_dimension(tau);
    if n_hat <= 0.0 {
        return Err(Error::Degenerate("empirical effective dimension is zero".into()));
    }
    let (first, second) = split_indices(sample.n());
    let train = sample.subset(&first);
    let held = sample.subset(&second);
    let pilot = ridge_pilot(&train, pilot_ridge)?;
    let residuals = held.responses() - held.features() * pilot;
    let m = held.n() as f64;
    let weights: Vec<f64> = residuals.iter().map(|e| e * e / m).collect();
    Ok(geom.weighted_trace(held.features(), &weights, tau) / n_hat)
}

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateReport {
    pub components: Vec<FredrikssonComponents>,
    pub selected_index: usize,
    pub selected_tau: f64,
}

/// Runs the surrogate over the configured scale grid and selects
/// `τ̂ = argmin { index_sq + λ τ^{2r} }`, ties toward the smallest τ.
pub fn fredriksson_surrogate(
    sample: &Sample,
    spec: &Spectrum,
    cfg: &SurrogateConfig,
    generator: &dyn ReplacementSource,
) -> Result<SurrogateReport> {
    cfg.validate()?;
    let geom = EmpiricalGeometry::new(sample);
    let n = sample.n();
    let components = cfg
        .tau_grid
        .iter()
        .map(|&tau| {
            let t_hat =
                transport_stability_mc(sample, generator, spec, tau, cfg.replacement_budget, cfg.seed)?;
            let n_hat = geom.effective_dimension(tau);
            let a_hat = residual_alignment_with(sample, &geom, tau, cfg.pilot_ridge.unwrap_or(tau))?;
            let bias = cfg.lambda_weight * tau.powf(2.0 * cfg.r_assumed);
            Ok(FredrikssonComponents::assemble(tau, n, t_hat, n_hat, a_hat, bias))
        })
        .collect::<Result<Vec<_>>>()?;
    let objective: Vec<f64> = components.iter().map(|c| c.index_sq + c.bias_term).collect();
    let selected_index = argmin_first(&objective);
    Ok(SurrogateReport {
        selected_tau: components[selected_index].tau,
        selected_index,
        components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StabilityDominated,
    SpectrumDominated,
    AlignmentDominated,
    BenignZone,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::StabilityDominated => "stability_dominated",
            Regime::SpectrumDominated => "spectrum_dominated",
            Regime::AlignmentDominated => "alignment_dominated",
            Regime::BenignZone => "benign_zone",
        }
    }
}

/// Labels a scale by its largest stochastic component
/// (`t_hat`, `n_hat/n`, `n_hat·a_hat/n`); exact ties go to stability, then
/// spectrum. The benign rule is checked first.
pub fn regime_from_components(c: &FredrikssonComponents, rule: BenignRule) -> Regime {
    let (t, s, a) = (c.t_hat, c.spectrum_part(), c.alignment_part());
    let benign_level = match rule {
        BenignRule::Relative(f) => Some(f * (c.bias_term + c.index_sq)),
        BenignRule::Absolute(level) => Some(level),
        BenignRule::Disabled => None,
    };
    if let Some(level) = benign_level {
        if t < level && s < level && a < level {
            return Regime::BenignZone;
        }
    }
    if t >= s && t >= a {
        Regime::StabilityDominated
    } else if s >= a {
        Regime::SpectrumDominated
    } else {
        Regime::AlignmentDominated
    }
}
