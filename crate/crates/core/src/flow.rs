//! Preconditioned gradient descent on the empirical square loss,
//! `w_{k+1} = w_k − η Σ_τ^{-1} Φ_S^*(Φ_S w_k − n^{-1/2} y)`, started at zero.

use nalgebra::DVector;

use crate::error::{check_tau, Error, Result};
use crate::interpolators::{Sample, ScaledDesign};
use crate::spectral::{Spectrum, Weights};

/// Safety factor applied to the stability bound by [`FlowConfig::for_sample`].
pub const DEFAULT_STEP_FRACTION: f64 = 0.9;
/// Largest admissible fraction of the stability bound.
pub const MAX_STEP_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Threshold on the loss gradient measured in the transported metric.
    pub tolerance: f64,
}

impl FlowConfig {
    /// `η = 0.9 × stability bound`, tolerance `1e-10`.
    pub fn for_sample(sample: &Sample, spec: &Spectrum, tau: f64) -> Result<Self> {
        let bound = stable_step_size(sample, spec, tau)?;
        let step_size = if bound.is_finite() {
            DEFAULT_STEP_FRACTION * bound
        } else {
            1.0
        };
        Ok(FlowConfig {
            step_size,
            max_iters: 1_000_000,
            tolerance: 1e-10,
        })
    }
}

/// `2 / λ_max(K_{S,τ})`, or `+∞` when the Gram matrix vanishes.
pub fn stable_step_size(sample: &Sample, spec: &Spectrum, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    spec.check_len(sample.dim(), "sample feature dimension")?;
    let (eig, _) = ScaledDesign::new(sample, spec, tau).gram_eigen();
    let top = eig.largest();
    Ok(if top > 0.0 { 2.0 / top } else { f64::INFINITY })
}

struct Stepper {
    features: nalgebra::DMatrix<f64>,
    target: DVector<f64>,
    resolvent: DVector<f64>,
    inv_sqrt_n: f64,
}

impl Stepper {
    fn new(sample: &Sample, spec: &Spectrum, tau: f64) -> Self {
        Stepper {
            features: sample.features().clone(),
            target: sample.scaled_responses(),
            resolvent: DVector::from_vec(spec.resolvent(tau)),
            inv_sqrt_n: 1.0 / (sample.n() as f64).sqrt(),
        }
    }

    /// Loss gradient `Φ^*(Φw − b)` in coordinates.
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let residual = (&self.features * w) * self.inv_sqrt_n - &self.target;
        self.features.tr_mul(&residual) * self.inv_sqrt_n
    }
}

/// One discrete preconditioned step.
pub fn pgf_step(w: &Weights, sample: &Sample, spec: &Spectrum, tau: f64, eta: f64) -> Result<Weights> {
    check_tau(tau)?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid("eta", format!("must be > 0, got {eta}")));
    }
    spec.check_len(sample.dim(), "sample feature dimension")?;
    spec.check_len(w.len(), "iterate")?;
    let st = Stepper::new(sample, spec, tau);
    let g = st.gradient(&w.coords);
    Ok(Weights::new(&w.coords - g.component_mul(&st.resolvent) * eta))
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub weights: Weights,
    pub iterations: usize,
    pub converged: bool,
    /// Final transported gradient norm `‖Σ_τ^{-1} ∇L‖_τ`.
    pub gradient_norm: f64,
}

/// Iterates from `w = 0` until the transported gradient norm drops below the
/// tolerance or `max_iters` is reached.
pub fn pgf_solve(sample: &Sample, spec: &Spectrum, tau: f64, cfg: &FlowConfig) -> Result<FlowOutcome> {
    pgf_solve_traced(sample, spec, tau, cfg, |_, _| {})
}

/// Like [`pgf_solve`], calling `observe(k, w_k)` on every iterate including `w_0`.
pub fn pgf_solve_traced(
    sample: &Sample,
    spec: &Spectrum,
    tau: f64,
    cfg: &FlowConfig,
    mut observe: impl FnMut(usize, &Weights),
) -> Result<FlowOutcome> {
    let bound = stable_step_size(sample, spec, tau)?;
    if !(cfg.step_size > 0.0 && cfg.step_size <= MAX_STEP_FRACTION * bound) {
        return Err(Error::UnstableStepSize {
            step: cfg.step_size,
            bound: MAX_STEP_FRACTION * bound,
        });
    }
    let st = Stepper::new(sample, spec, tau);
    let mut w = Weights::zeros(sample.dim());
    let mut k = 0;
    loop {
        observe(k, &w);
        let g = st.gradient(&w.coords);
        let step = g.component_mul(&st.resolvent);
        let gradient_norm = g.dot(&step).sqrt();
        if gradient_norm <= cfg.tolerance || k >= cfg.max_iters {
            return Ok(FlowOutcome {
                converged: gradient_norm <= cfg.tolerance,
                weights: w,
                iterations: k,
                gradient_norm,
            });
        }
        w.coords.axpy(-cfg.step_size, &step, 1.0);
        k += 1;
    }
}

/// `L̂(w) = (2n)^{-1} Σ_i (⟨w, φ(X_i)⟩ − Y_i)²`.
pub fn empirical_loss(sample: &Sample, w: &Weights) -> f64 {
    let r = sample.features() * &w.coords - sample.responses();
    r.norm_squared() / (2.0 * sample.n() as f64)
}
