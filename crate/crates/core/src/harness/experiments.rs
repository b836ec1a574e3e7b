//! Experiment runners. Every Monte Carlo cell draws from a stream derived from
//! the master seed and its coordinates, and records are sorted before they are
//! returned, so results do not depend on thread scheduling.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{
    fredriksson_surrogate, regime_from_components, BenignRule, EmpiricalResampler, FredrikssonComponents, Regime,
    ReplacementSource, SurrogateConfig,
};
use crate::error::{Error, Result};
use crate::harness::config::{Estimator, ExperimentConfig, PhasePreset};
use crate::harness::design::{NoisePlan, SampleGenerator};
use crate::harness::io::{fmt_real, ingest_matrix_file, CsvRecord};
use crate::interpolators::{minimal_interpolator, nullspace_spike, Sample};
use crate::linalg::{loglog_slope, mean_and_se};
use crate::phase::{
    benign_trend, default_tau_grid, dominant_exponent, envelope_components, master_bound, oracle_scale, BenignTrend,
    EnvelopeSpec, PhaseVerdict,
};
use crate::rng::{derive_seed, rng_for};
use crate::spectral::{Spectrum, Weights};

const RATE_TAG: u64 = 0x7261_7465;
const AUDIT_TAG: u64 = 0x6175_6469;
const STAB_TAG: u64 = 0x7374_6162;
const SPIKE_TAG: u64 = 0x7370_696b;
const LOADS_TAG: u64 = 0x6c6f_6164;
const DIAG_TAG: u64 = 0x6469_6167;

/// Monte Carlo draws used to validate a per-mode noise construction.
pub const LOAD_CHECK_DRAWS: usize = 100_000;
pub const LOAD_CHECK_TOLERANCE: f64 = 0.10;

/// Generator for the configured model. Per-mode noise plans are checked by
/// Monte Carlo; the measured loads are returned alongside.
pub fn build_generator(cfg: &ExperimentConfig) -> Result<(SampleGenerator, Option<Vec<f64>>)> {
    let res = cfg.resolve()?;
    let generator = SampleGenerator::new(res.design, &res.source, &res.noise)?;
    let measured = match generator.plan {
        NoisePlan::Modal { .. } => Some(generator.validate_loads(
            LOAD_CHECK_DRAWS,
            derive_seed(cfg.seed, &[LOADS_TAG]),
            LOAD_CHECK_TOLERANCE,
        )?),
        _ => None,
    };
    Ok((generator, measured))
}

/// Seed of the sample behind replication `rep` at size `n`.
pub fn cell_seed(master: u64, tag: u64, n: usize, rep: usize) -> u64 {
    derive_seed(master, &[tag, n as u64, rep as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRecord {
    pub n: usize,
    pub tau: f64,
    pub replication: usize,
    pub risk: f64,
    pub energy: f64,
    pub seed: u64,
}

impl CsvRecord for RateRecord {
    const HEADER: &'static [&'static str] = &["n", "tau", "replication", "risk", "energy", "seed"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_real(self.tau),
            self.replication.to_string(),
            fmt_real(self.risk),
            fmt_real(self.energy),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCell {
    pub n: usize,
    pub tau: f64,
    pub risk_mean: f64,
    pub risk_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub records: Vec<RateRecord>,
    pub cells: Vec<RateCell>,
    /// Log-log slope of mean risk against n (one τ per n only).
    pub slope: Option<f64>,
    pub planned_loads: Vec<f64>,
    pub measured_loads: Option<Vec<f64>>,
}

pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<RateReport> {
    let (generator, measured_loads) = build_generator(cfg)?;
    let spec = &generator.design.spectrum;
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |rep| (n, rep)))
        .collect();
    let nested = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let seed = cell_seed(cfg.seed, RATE_TAG, n, rep);
            let sample = generator.sample(n, seed)?;
            cfg.taus_for(n)
                .into_iter()
                .map(|tau| {
                    let sol = minimal_interpolator(&sample, spec, tau)?;
                    Ok(RateRecord {
                        n,
                        tau,
                        replication: rep,
                        risk: spec.excess_risk(&sol.weights, &generator.w_star)?,
                        energy: sol.energy,
                        seed,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<RateRecord> = nested.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.n, a.tau, a.replication)
            .partial_cmp(&(b.n, b.tau, b.replication))
            .expect("finite scales")
    });
    let mut cells = Vec::new();
    for chunk in records.chunk_by(|a, b| a.n == b.n && a.tau == b.tau) {
        let risks: Vec<f64> = chunk.iter().map(|r| r.risk).collect();
        let (risk_mean, risk_se) = mean_and_se(&risks);
        cells.push(RateCell {
            n: chunk[0].n,
            tau: chunk[0].tau,
            risk_mean,
            risk_se,
        });
    }
    let one_tau_per_n = cells.len() == cfg.n_grid.len();
    let slope = (one_tau_per_n && cells.len() >= 2).then(|| {
        let xs: Vec<f64> = cells.iter().map(|c| c.n as f64).collect();
        let ys: Vec<f64> = cells.iter().map(|c| c.risk_mean).collect();
        loglog_slope(&xs, &ys)
    });
    Ok(RateReport {
        records,
        cells,
        slope,
        planned_loads: generator.plan.achieved_loads(spec),
        measured_loads,
    })
}

/// Monte Carlo `T_n(τ) = E‖ŵ_S − ŵ_{S^{(i)}}‖²_τ` in the population metric.
/// `samples` independent samples of size `n`, each with `budget`
/// replacements at indices `b mod n` drawn from the generator.
pub fn population_transport_stability(
    generator: &SampleGenerator,
    n: usize,
    tau: f64,
    samples: usize,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 || budget == 0 {
        return Err(Error::invalid("samples", "samples and budget must be >= 1"));
    }
    let spec = &generator.design.spectrum;
    let per_sample = (0..samples)
        .into_par_iter()
        .map(|s| {
            let sample = generator.sample(n, derive_seed(seed, &[STAB_TAG, s as u64]))?;
            let base = minimal_interpolator(&sample, spec, tau)?.weights;
            (0..budget)
                .into_par_iter()
                .map(|b| {
                    let mut rng = rng_for(seed, &[STAB_TAG, s as u64, b as u64]);
                    let (x, y) = generator.draw(&mut rng);
                    let moved = minimal_interpolator(&sample.replaced(b % n, &x, y)?, spec, tau)?.weights;
                    spec.transported_norm_sq(tau, &Weights::new(&base.coords - moved.coords))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = per_sample.iter().flatten().sum();
    Ok(total / (samples * budget) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub n: usize,
    pub tau: f64,
    pub risk_mean: f64,
    pub risk_se: f64,
    pub bound: f64,
    /// `risk_mean − 3·risk_se ≤ bound`.
    pub satisfied: bool,
    pub bias_term: f64,
    pub t_mc: f64,
    pub effective_dimension: f64,
    pub alignment: f64,
    /// Every replication's estimator had transported energy no larger than
    /// the minimal interpolator's.
    pub energy_optimal: bool,
}

impl CsvRecord for AuditRecord {
    const HEADER: &'static [&'static str] = &["n", "tau", "risk_mean", "risk_se", "bound", "satisfied"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_real(self.tau),
            fmt_real(self.risk_mean),
            fmt_real(self.risk_se),
            fmt_real(self.bound),
            self.satisfied.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub records: Vec<AuditRecord>,
    pub planned_loads: Vec<f64>,
    pub measured_loads: Option<Vec<f64>>,
}

fn estimator_weights(
    cfg: &ExperimentConfig,
    sample: &Sample,
    base: &Weights,
    seed: u64,
) -> Result<Weights> {
    match cfg.audit.estimator {
        Estimator::Minimal => Ok(base.clone()),
        Estimator::NullspaceSpiked => {
            match nullspace_spike(sample, base, cfg.audit.spike_amplitude, derive_seed(seed, &[SPIKE_TAG])) {
                Err(Error::NoNullspace { .. }) => Ok(base.clone()),
                other => other,
            }
        }
    }
}

/// Monte Carlo risk against the assembled bound `2·bias + 6T + 6(𝒩/n)(1+A)`
/// on every `(n, τ)` of the config grids.
pub fn run_bound_audit(cfg: &ExperimentConfig) -> Result<AuditReport> {
    let (generator, measured_loads) = build_generator(cfg)?;
    let res = cfg.resolve()?;
    let spec = &generator.design.spectrum;
    let mut records = Vec::new();
    for &n in &cfg.n_grid {
        // (replication, τ index) → (risk, energy_ok)
        let per_rep = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = cell_seed(cfg.seed, AUDIT_TAG, n, rep);
                let sample = generator.sample(n, seed)?;
                cfg.tau_grid
                    .iter()
                    .map(|&tau| {
                        let base = minimal_interpolator(&sample, spec, tau)?;
                        let w = estimator_weights(cfg, &sample, &base.weights, seed)?;
                        let energy = spec.transported_norm_sq(tau, &w)?;
                        let min_energy = spec.transported_norm_sq(tau, &base.weights)?;
                        let risk = spec.excess_risk(&w, &generator.w_star)?;
                        Ok((risk, energy <= min_energy * (1.0 + 1e-10) + 1e-14))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &tau) in cfg.tau_grid.iter().enumerate() {
            let risks: Vec<f64> = per_rep.iter().map(|r| r[k].0).collect();
            let energy_optimal = per_rep.iter().all(|r| r[k].1);
            let (risk_mean, risk_se) = mean_and_se(&risks);
            let t_mc = population_transport_stability(
                &generator,
                n,
                tau,
                cfg.audit.stability_samples,
                cfg.audit.stability_budget,
                derive_seed(cfg.seed, &[AUDIT_TAG, n as u64, k as u64]),
            )?;
            let bias_term = res.source.radius.powi(2) * tau.powf(2.0 * res.source.r);
            let effective_dimension = spec.effective_dimension(tau)?;
            let alignment = spec.alignment_coefficient(&res.noise, tau)?;
            let bound = master_bound(bias_term, t_mc, effective_dimension / n as f64, alignment)?;
            records.push(AuditRecord {
                n,
                tau,
                risk_mean,
                risk_se,
                bound,
                satisfied: risk_mean - 3.0 * risk_se <= bound,
                bias_term,
                t_mc,
                effective_dimension,
                alignment,
                energy_optimal,
            });
        }
    }
    records.sort_by(|a, b| (a.n, a.tau).partial_cmp(&(b.n, b.tau)).expect("finite scales"));
    Ok(AuditReport {
        records,
        planned_loads: generator.plan.achieved_loads(spec),
        measured_loads,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub regime: String,
    pub n: usize,
    pub tau_star: f64,
    pub env_min: f64,
    pub comp_spectrum: f64,
    pub comp_stability: f64,
    pub comp_alignment: f64,
    /// Label assigned by the diagnostic classifier to these components.
    pub label: Regime,
}

impl PhaseRecord {
    /// Name of the strictly largest stochastic component, if any.
    pub fn dominant_component(&self) -> Option<&'static str> {
        let comps = [
            ("spectrum", self.comp_spectrum),
            ("stability", self.comp_stability),
            ("alignment", self.comp_alignment),
        ];
        let (name, top) = comps.iter().cloned().fold(("", f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let strict = comps.iter().filter(|c| c.0 != name).all(|c| c.1 < top);
        strict.then_some(name)
    }
}

impl CsvRecord for PhaseRecord {
    const HEADER: &'static [&'static str] = &[
        "regime",
        "n",
        "tau_star",
        "env_min",
        "comp_spectrum",
        "comp_stability",
        "comp_alignment",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            self.regime.clone(),
            self.n.to_string(),
            fmt_real(self.tau_star),
            fmt_real(self.env_min),
            fmt_real(self.comp_spectrum),
            fmt_real(self.comp_stability),
            fmt_real(self.comp_alignment),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PresetSummary {
    pub name: String,
    pub envelope: EnvelopeSpec,
    pub verdict: PhaseVerdict,
    pub trend: Option<BenignTrend>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub records: Vec<PhaseRecord>,
    pub presets: Vec<PresetSummary>,
}

/// Envelope components at the oracle scale viewed as surrogate components:
/// `T = stability`, `𝒩/n = spectrum`, `A = alignment / spectrum`.
fn as_components(env: &EnvelopeSpec, tau: f64, n: usize) -> FredrikssonComponents {
    let c = envelope_components(env, tau, n);
    let a = if c.spectrum > 0.0 { c.alignment / c.spectrum } else { 0.0 };
    FredrikssonComponents::assemble(tau, n, c.stability, c.spectrum * n as f64, a, c.bias)
}

pub fn run_phase_simulation(cfg: &ExperimentConfig) -> Result<PhaseReport> {
    let grid = cfg.phase.tau_grid.clone().unwrap_or_else(default_tau_grid);
    let rule = cfg
        .surrogate
        .as_ref()
        .map(|s| s.benign_rule)
        .unwrap_or_default();
    let mut records = Vec::new();
    let mut presets = Vec::new();
    for PhasePreset { name, envelope } in &cfg.phase.presets {
        envelope.validate()?;
        for &n in &cfg.n_grid {
            let (tau_star, env_min) = oracle_scale(envelope, n, &grid)?;
            let c = envelope_components(envelope, tau_star, n);
            records.push(PhaseRecord {
                regime: name.clone(),
                n,
                tau_star,
                env_min,
                comp_spectrum: c.spectrum,
                comp_stability: c.stability,
                comp_alignment: c.alignment,
                label: regime_from_components(&as_components(envelope, tau_star, n), rule),
            });
        }
        let mut ns = cfg.n_grid.clone();
        ns.sort_unstable();
        ns.dedup();
        let trend = if ns.len() >= 2 {
            Some(benign_trend(envelope, &ns, &grid)?)
        } else {
            None
        };
        presets.push(PresetSummary {
            name: name.clone(),
            envelope: *envelope,
            verdict: dominant_exponent(envelope),
            trend,
        });
    }
    Ok(PhaseReport { records, presets })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseRecord {
    pub tau: f64,
    pub t_hat: f64,
    pub n_hat: f64,
    pub a_hat: f64,
    pub bias: f64,
    pub index_sq: f64,
    pub regime: Regime,
}

impl CsvRecord for DiagnoseRecord {
    const HEADER: &'static [&'static str] = &["tau", "t_hat", "n_hat", "a_hat", "bias", "index_sq", "regime"];
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_real(self.tau),
            fmt_real(self.t_hat),
            fmt_real(self.n_hat),
            fmt_real(self.a_hat),
            fmt_real(self.bias),
            fmt_real(self.index_sq),
            self.regime.label().to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub records: Vec<DiagnoseRecord>,
    pub n: usize,
    pub selected_tau: f64,
    pub data: String,
    pub surrogate: SurrogateConfig,
}

/// Surrogate settings from the config, or defaults built from its grids:
/// the config `tau_grid`, 50 replacements, `r_assumed = source.r`.
pub fn surrogate_settings(cfg: &ExperimentConfig) -> SurrogateConfig {
    let mut s = cfg.surrogate.clone().unwrap_or_else(|| SurrogateConfig {
        tau_grid: cfg.tau_grid.clone(),
        replacement_budget: 50,
        lambda_weight: 1.0,
        r_assumed: cfg.source.r,
        pilot_ridge: None,
        seed: 0,
        benign_rule: BenignRule::default(),
    });
    s.tau_grid.sort_by(f64::total_cmp);
    s.tau_grid.dedup();
    s.seed = derive_seed(cfg.seed, &[DIAG_TAG, s.seed]);
    s
}

/// Runs the surrogate on `data` if given (replacements resampled from its own
/// rows), otherwise on a generated sample of size `n_grid[0]` (replacements
/// drawn from the model).
pub fn run_diagnose(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<DiagnoseReport> {
    let settings = surrogate_settings(cfg);
    let res = cfg.resolve()?;
    let spec: &Spectrum = &res.design.spectrum;
    let (report, n, label) = match data {
        Some(path) => {
            let sample = ingest_matrix_file(path)?;
            spec.check_len(sample.dim(), "data feature columns")?;
            let source = EmpiricalResampler { sample: &sample };
            let rep = fredriksson_surrogate(&sample, spec, &settings, &source)?;
            (rep, sample.n(), path.display().to_string())
        }
        None => {
            let (generator, _) = build_generator(cfg)?;
            let n = cfg.n_grid[0];
            let sample = generator.sample(n, cell_seed(cfg.seed, DIAG_TAG, n, 0))?;
            let rep = fredriksson_surrogate(&sample, spec, &settings, &generator)?;
            (rep, n, "generated".to_string())
        }
    };
    let records = report
        .components
        .iter()
        .map(|c| DiagnoseRecord {
            tau: c.tau,
            t_hat: c.t_hat,
            n_hat: c.n_hat,
            a_hat: c.a_hat,
            bias: c.bias_term,
            index_sq: c.index_sq,
            regime: regime_from_components(c, settings.benign_rule),
        })
        .collect();
    Ok(DiagnoseReport {
        records,
        n,
        selected_tau: report.selected_tau,
        data: label,
        surrogate: settings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRecord {
    pub n: usize,
    pub tau: f64,
    pub value: f64,
    pub bias: f64,
    pub stability: f64,
    pub spectrum: f64,
    pub alignment: f64,
}

impl CsvRecord for EnvelopeRecord {
    const HEADER: &'static [&'static str] = &["n", "tau", "value", "bias", "stability", "spectrum", "alignment"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_real(self.tau),
            fmt_real(self.value),
            fmt_real(self.bias),
            fmt_real(self.stability),
            fmt_real(self.spectrum),
            fmt_real(self.alignment),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OraclePoint {
    pub n: usize,
    pub tau_star: f64,
    pub env_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub envelope: EnvelopeSpec,
    pub records: Vec<EnvelopeRecord>,
    pub verdict: PhaseVerdict,
    pub oracle: Vec<OraclePoint>,
    pub trend: Option<BenignTrend>,
}

/// The config `envelope`, or `(r, R, p)` from the model with `s = q = 0`.
pub fn envelope_for(cfg: &ExperimentConfig) -> EnvelopeSpec {
    cfg.envelope
        .unwrap_or_else(|| EnvelopeSpec::new(cfg.source.r, cfg.source.radius, cfg.design.p, 0.0, 0.0))
}

pub fn run_envelope(cfg: &ExperimentConfig) -> Result<EnvelopeReport> {
    let env = envelope_for(cfg);
    env.validate()?;
    let mut records = Vec::new();
    for &n in &cfg.n_grid {
        for &tau in &cfg.tau_grid {
            let c = envelope_components(&env, tau, n);
            records.push(EnvelopeRecord {
                n,
                tau,
                value: c.total(),
                bias: c.bias,
                stability: c.stability,
                spectrum: c.spectrum,
                alignment: c.alignment,
            });
        }
    }
    let grid = cfg.phase.tau_grid.clone().unwrap_or_else(default_tau_grid);
    let oracle = cfg
        .n_grid
        .iter()
        .map(|&n| {
            oracle_scale(&env, n, &grid).map(|(tau_star, env_min)| OraclePoint { n, tau_star, env_min })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ns = cfg.n_grid.clone();
    ns.sort_unstable();
    ns.dedup();
    let trend = if ns.len() >= 2 {
        Some(benign_trend(&env, &ns, &grid)?)
    } else {
        None
    };
    Ok(EnvelopeReport {
        envelope: env,
        records,
        verdict: dominant_exponent(&env),
        oracle,
        trend,
    })
}
