//! TOML experiment configuration. Field names mirror [`ExperimentConfig`];
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::SurrogateConfig;
use crate::error::{Error, Result};
use crate::harness::design::{DesignMode, DesignModel, XiKind};
use crate::phase::{noise_load_from_obstruction, EnvelopeSpec};
use crate::spectral::{NoiseModel, NoiseSampler, SourceCondition, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Polynomial decay `μ_j = scale · j^{-p}`.
    pub p: f64,
    pub d: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "gaussian_xi")]
    pub xi_kind: XiKind,
    #[serde(default = "diagonal_mode")]
    pub mode: DesignMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub r: f64,
    pub radius: f64,
    /// Explicit coefficients; omitted means `g` spread evenly with `‖g‖ = R`.
    #[serde(default)]
    pub g: Option<Vec<f64>>,
}

/// Exactly one of `variance`, `obstruction_b` (with `obstruction_q`) or `loads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub variance: Option<f64>,
    #[serde(default)]
    pub obstruction_b: Option<f64>,
    #[serde(default)]
    pub obstruction_q: Option<f64>,
    #[serde(default)]
    pub loads: Option<Vec<f64>>,
    #[serde(default = "gaussian_noise")]
    pub sampler: NoiseSampler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    /// `τ_n = tau_scale · n^{-p/(2rp+1)}`.
    Theorem,
    /// Every entry of `tau_grid` for every n.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Minimal,
    /// Minimal interpolator plus a unit nullspace direction of the given amplitude.
    NullspaceSpiked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "minimal_estimator")]
    pub estimator: Estimator,
    #[serde(default = "ten")]
    pub spike_amplitude: f64,
    /// Independent samples behind the population stability estimate.
    #[serde(default = "twenty")]
    pub stability_samples: usize,
    /// Replacements per sample for the stability estimate.
    #[serde(default = "twenty")]
    pub stability_budget: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            estimator: Estimator::Minimal,
            spike_amplitude: 10.0,
            stability_samples: 20,
            stability_budget: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePreset {
    pub name: String,
    pub envelope: EnvelopeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    #[serde(default = "default_presets")]
    pub presets: Vec<PhasePreset>,
    /// Scale grid for the oracle search; omitted means a dense log grid.
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            presets: default_presets(),
            tau_grid: None,
        }
    }
}

/// The three synthetic regimes with `R = 1`, `r = 1/2`, `p = 2`. Each intended
/// component exceeds the others by at least a factor 3 on `τ ≤ 1`.
pub fn default_presets() -> Vec<PhasePreset> {
    let base = EnvelopeSpec {
        r: 0.5,
        radius: 1.0,
        p: 2.0,
        s: 0.0,
        q: 0.0,
        c_stab: 0.01,
        c_spec: 1.0,
        c_align: 0.1,
        floor: 0.0,
    };
    vec![
        PhasePreset {
            name: "spectrum".into(),
            envelope: base,
        },
        PhasePreset {
            name: "alignment".into(),
            envelope: EnvelopeSpec {
                q: 0.5,
                c_align: 10.0,
                ..base
            },
        },
        PhasePreset {
            name: "stability".into(),
            envelope: EnvelopeSpec {
                s: 1.0,
                c_stab: 10.0,
                ..base
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: DesignConfig,
    pub source: SourceConfig,
    pub noise: NoiseConfig,
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub surrogate: Option<SurrogateConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "theorem_rule")]
    pub tau_rule: TauRule,
    #[serde(default = "one")]
    pub tau_scale: f64,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub envelope: Option<EnvelopeSpec>,
    #[serde(default)]
    pub phase: PhaseConfig,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn twenty() -> usize {
    20
}
fn gaussian_xi() -> XiKind {
    XiKind::Gaussian
}
fn diagonal_mode() -> DesignMode {
    DesignMode::Diagonal
}
fn gaussian_noise() -> NoiseSampler {
    NoiseSampler::Gaussian
}
fn minimal_estimator() -> Estimator {
    Estimator::Minimal
}
fn theorem_rule() -> TauRule {
    TauRule::Theorem
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Runtime objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub design: DesignModel,
    pub source: SourceCondition,
    pub noise: NoiseModel,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.tau_grid.is_empty() {
            return Err(Error::Config("n_grid and tau_grid must be nonempty".into()));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid entries must be >= 1".into()));
        }
        if self.tau_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("tau_grid entries must be finite and > 0".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if !(self.tau_scale.is_finite() && self.tau_scale > 0.0) {
            return Err(Error::Config("tau_scale must be > 0".into()));
        }
        let set = [
            self.noise.variance.is_some(),
            self.noise.obstruction_b.is_some(),
            self.noise.loads.is_some(),
        ];
        if set.iter().filter(|x| **x).count() != 1 {
            return Err(Error::Config(
                "noise needs exactly one of variance, obstruction_b, loads".into(),
            ));
        }
        if self.noise.obstruction_b.is_some() != self.noise.obstruction_q.is_some() {
            return Err(Error::Config("obstruction_b and obstruction_q go together".into()));
        }
        if let Some(s) = &self.surrogate {
            s.validate()?;
        }
        if let Some(e) = &self.envelope {
            e.validate()?;
        }
        for p in &self.phase.presets {
            p.envelope.validate()?;
        }
        self.resolve().map(|_| ())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let dc = &self.design;
        let spectrum = Spectrum::polynomial(dc.p, dc.d, dc.scale)?;
        let source = match &self.source.g {
            Some(g) => {
                spectrum.check_len(g.len(), "source.g")?;
                SourceCondition::new(self.source.r, self.source.radius, g.clone())?
            }
            None => SourceCondition::flat(self.source.r, self.source.radius, dc.d)?,
        };
        let nc = &self.noise;
        let noise = if let Some(v) = nc.variance {
            NoiseModel::isotropic(&spectrum, v, nc.sampler)?
        } else if let (Some(b), Some(q)) = (nc.obstruction_b, nc.obstruction_q) {
            let mut m = noise_load_from_obstruction(&spectrum, b, q)?;
            m.sampler = nc.sampler;
            m
        } else {
            let loads = nc.loads.clone().unwrap_or_default();
            spectrum.check_len(loads.len(), "noise.loads")?;
            NoiseModel::from_loads(loads, nc.sampler)?
        };
        Ok(Resolved {
            design: DesignModel::new(spectrum, dc.xi_kind, dc.mode),
            source,
            noise,
        })
    }

    /// `τ_n = tau_scale · n^{-p/(2rp+1)}`.
    pub fn theorem_tau(&self, n: usize) -> f64 {
        let (p, r) = (self.design.p, self.source.r);
        self.tau_scale * (n as f64).powf(-p / (2.0 * r * p + 1.0))
    }

    pub fn taus_for(&self, n: usize) -> Vec<f64> {
        match self.tau_rule {
            TauRule::Theorem => vec![self.theorem_tau(n)],
            TauRule::Grid => self.tau_grid.clone(),
        }
    }
}
