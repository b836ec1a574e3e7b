//! Transported minimal interpolation under a spectral geometry.
//!
//! The population covariance is diagonal with eigenvalues `μ_j`; every
//! operation works in these modal coordinates.

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod harness;
pub mod interpolators;
pub mod linalg;
pub mod phase;
pub mod rng;
pub mod spectral;

pub use diagnostics::{
    empirical_covariance, empirical_effective_dimension, fredriksson_surrogate, regime_from_components,
    residual_alignment, transport_stability_mc, BenignRule, EmpiricalResampler, FredrikssonComponents, Regime,
    ReplacementSource, SurrogateConfig, SurrogateReport,
};
pub use error::{Error, Result};
pub use flow::{empirical_loss, pgf_solve, pgf_solve_traced, pgf_step, stable_step_size, FlowConfig, FlowOutcome};
pub use interpolators::{
    euclidean_min_norm, gram_matrix, minimal_interpolator, nullspace_direction, nullspace_spike, transported_energy,
    InterpolantSolution, MinNormSolution, Sample,
};
pub use phase::{
    benign_trend, dominant_exponent, envelope_components, envelope_value, master_bound, noise_load_from_obstruction,
    oracle_scale, BenignTrend, EnvelopeComponents, EnvelopeSpec, PhaseRegime, PhaseVerdict,
};
pub use spectral::{make_polynomial_spectrum, NoiseModel, NoiseSampler, SourceCondition, Spectrum, Weights};
