//! Deterministic envelope calculus.
//!
//! With `μ_j ≍ j^{-p}`, `T_n(τ) ≍ n^{-1}τ^{-s}` and `A(τ) ≍ τ^{-q}` the risk
//! envelope is
//!
//! ```text
//! R²τ^{2r} + c_stab n^{-1} τ^{-s} + c_spec n^{-1} τ^{-1/p} (1 + c_align τ^{-q})
//! ```
//!
//! and the dominant exponent `γ = max{s, 1/p, 1/p + q}` fixes the oracle scale
//! `τ* ≍ n^{-1/(2r+γ)}` and the rate `n^{-2r/(2r+γ)}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_tau, Error, Result};
use crate::linalg::{argmin_first, log_grid, loglog_slope};
use crate::spectral::{NoiseModel, NoiseSampler, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub r: f64,
    pub radius: f64,
    pub p: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default = "unit")]
    pub c_stab: f64,
    #[serde(default = "unit")]
    pub c_spec: f64,
    #[serde(default = "unit")]
    pub c_align: f64,
    /// Constant added to the envelope; a positive floor models a non-vanishing infimum.
    #[serde(default)]
    pub floor: f64,
}

fn unit() -> f64 {
    1.0
}

impl EnvelopeSpec {
    /// All constants set to one, no floor.
    pub fn new(r: f64, radius: f64, p: f64, s: f64, q: f64) -> Self {
        EnvelopeSpec {
            r,
            radius,
            p,
            s,
            q,
            c_stab: 1.0,
            c_spec: 1.0,
            c_align: 1.0,
            floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::invalid("r", "must lie in (0, 1]"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("radius", "must be > 0"));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::invalid("p", "must exceed 1"));
        }
        for (name, v) in [("s", self.s), ("q", self.q), ("floor", self.floor)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        for (name, v) in [("c_stab", self.c_stab), ("c_spec", self.c_spec), ("c_align", self.c_align)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// The four additive pieces of the envelope at one `(τ, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeComponents {
    pub bias: f64,
    pub stability: f64,
    pub spectrum: f64,
    pub alignment: f64,
    pub floor: f64,
}

impl EnvelopeComponents {
    pub fn total(&self) -> f64 {
        self.bias + self.stability + self.spectrum + self.alignment + self.floor
    }
}

pub fn envelope_components(env: &EnvelopeSpec, tau: f64, n: usize) -> EnvelopeComponents {
    let inv_n = 1.0 / n as f64;
    let spectrum = env.c_spec * inv_n * tau.powf(-1.0 / env.p);
    EnvelopeComponents {
        bias: env.radius * env.radius * tau.powf(2.0 * env.r),
        stability: env.c_stab * inv_n * tau.powf(-env.s),
        spectrum,
        alignment: spectrum * env.c_align * tau.powf(-env.q),
        floor: env.floor,
    }
}

pub fn envelope_value(env: &EnvelopeSpec, tau: f64, n: usize) -> Result<f64> {
    check_tau(tau)?;
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    Ok(envelope_components(env, tau, n).total())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("tau_grid", "must be nonempty"));
    }
    grid.iter().try_for_each(|&t| check_tau(t))
}

/// Grid minimizer of the envelope, ties toward the smallest τ. Returns `(τ*, value)`.
pub fn oracle_scale(env: &EnvelopeSpec, n: usize, tau_grid: &[f64]) -> Result<(f64, f64)> {
    check_grid(tau_grid)?;
    let mut sorted = tau_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let values = sorted
        .iter()
        .map(|&t| envelope_value(env, t, n))
        .collect::<Result<Vec<_>>>()?;
    let k = argmin_first(&values);
    Ok((sorted[k], values[k]))
}

/// Dense log grid used when the caller does not supply one.
pub fn default_tau_grid() -> Vec<f64> {
    log_grid(1e-10, 10.0, 2201)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRegime {
    Stability,
    Spectrum,
    Alignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseVerdict {
    pub gamma: f64,
    pub regime: PhaseRegime,
    /// `1/(2r+γ)`: `τ* ≍ n^{-tau_exponent}`.
    pub tau_exponent: f64,
    /// `2r/(2r+γ)`: risk `≍ n^{-risk_exponent}`.
    pub risk_exponent: f64,
    pub benign: bool,
}

/// `γ = max{s, 1/p, 1/p+q}` with its regime label.
///
/// For `q > 0` a tie between `s` and `1/p+q` is labeled alignment; for `q = 0`
/// the spectrum label is kept whenever `s ≤ 1/p`.
pub fn dominant_exponent(env: &EnvelopeSpec) -> PhaseVerdict {
    let spec_exp = 1.0 / env.p;
    let (gamma, regime) = if env.q > 0.0 {
        let align_exp = spec_exp + env.q;
        if env.s > align_exp {
            (env.s, PhaseRegime::Stability)
        } else {
            (align_exp, PhaseRegime::Alignment)
        }
    } else if env.s > spec_exp {
        (env.s, PhaseRegime::Stability)
    } else {
        (spec_exp, PhaseRegime::Spectrum)
    };
    let denom = 2.0 * env.r + gamma;
    PhaseVerdict {
        gamma,
        regime,
        tau_exponent: 1.0 / denom,
        risk_exponent: 2.0 * env.r / denom,
        benign: env.r > 0.0 && env.floor == 0.0,
    }
}

/// `2·bias + 6·T + 6·(𝒩/n)(1 + A)`.
pub fn master_bound(bias_term: f64, t_term: f64, n_hat_over_n: f64, a_term: f64) -> Result<f64> {
    for (name, v) in [
        ("bias_term", bias_term),
        ("t_term", t_term),
        ("n_hat_over_n", n_hat_over_n),
        ("a_term", a_term),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    Ok(2.0 * bias_term + 6.0 * t_term + 6.0 * n_hat_over_n * (1.0 + a_term))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenignTrend {
    pub benign: bool,
    pub minima: Vec<f64>,
    pub slope: f64,
}

/// Minimal envelope value per `n`; benign when the minima strictly decrease
/// and their log-log slope is at most −0.01.
pub fn benign_trend(env: &EnvelopeSpec, n_list: &[usize], tau_grid: &[f64]) -> Result<BenignTrend> {
    if n_list.len() < 2 {
        return Err(Error::invalid("n_list", "needs at least two sample sizes"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(Error::invalid("n_list", "must be positive and strictly increasing"));
    }
    let minima = n_list
        .iter()
        .map(|&n| oracle_scale(env, n, tau_grid).map(|(_, v)| v))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &minima);
    let decreasing = minima.windows(2).all(|w| w[1] < w[0]);
    Ok(BenignTrend {
        benign: decreasing && slope <= -0.01,
        minima,
        slope,
    })
}

/// Modal loads `c_j = b μ_j^{1-q}`; modes with `μ_j = 0` get `c_j = 0`.
/// At `q = 0` this is the isotropic model with variance `b`.
pub fn noise_load_from_obstruction(spec: &Spectrum, b: f64, q: f64) -> Result<NoiseModel> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::invalid("b", format!("must be > 0, got {b}")));
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::invalid("q", format!("must be >= 0, got {q}")));
    }
    let loads = spec
        .eigenvalues()
        .iter()
        .map(|&mu| if mu == 0.0 { 0.0 } else { b * mu.powf(1.0 - q) })
        .collect();
    let mut model = NoiseModel::from_loads(loads, NoiseSampler::Gaussian)?;
    model.obstruction = Some((b, q));
    if q == 0.0 {
        model.isotropic_variance = Some(b);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_hand_value() {
        let mut env = EnvelopeSpec::new(0.5, 1.0, 2.0, 0.0, 0.0);
        env.c_stab = 0.0;
        env.c_align = 0.0;
        let v = envelope_value(&env, 0.25, 100).unwrap();
        assert!((v - 0.27).abs() < 1e-15);
    }

    #[test]
    fn envelope_large_n_tends_to_bias() {
        let env = EnvelopeSpec::new(0.5, 2.0, 2.0, 0.3, 0.2);
        let v = envelope_value(&env, 0.1, 1_000_000_000).unwrap();
        assert!((v - 4.0 * 0.1).abs() < 1e-7);
    }

    #[test]
    fn oracle_scale_trivial_cases() {
        let env = EnvelopeSpec::new(0.5, 1.0, 2.0, 0.0, 0.0);
        assert_eq!(oracle_scale(&env, 10, &[0.3]).unwrap().0, 0.3);
        let mut bias_only = env;
        bias_only.c_stab = 0.0;
        bias_only.c_spec = 0.0;
        let (t, _) = oracle_scale(&bias_only, 10, &[0.5, 0.01, 0.1]).unwrap();
        assert_eq!(t, 0.01);
        assert!(oracle_scale(&env, 10, &[]).is_err());
    }

    #[test]
    fn exponent_examples() {
        let v = dominant_exponent(&EnvelopeSpec::new(0.5, 1.0, 2.0, 0.2, 0.0));
        assert_eq!(v.gamma, 0.5);
        assert_eq!(v.regime, PhaseRegime::Spectrum);
        assert!((v.risk_exponent - 2.0 / 3.0).abs() < 1e-15);

        let v = dominant_exponent(&EnvelopeSpec::new(0.5, 1.0, 2.0, 1.0, 0.0));
        assert_eq!((v.gamma, v.regime), (1.0, PhaseRegime::Stability));

        let v = dominant_exponent(&EnvelopeSpec::new(0.5, 1.0, 4.0, 0.1, 0.5));
        assert_eq!((v.gamma, v.regime), (0.75, PhaseRegime::Alignment));
    }

    #[test]
    fn exponent_ties() {
        // q = 0, s = 1/p: spectrum
        let v = dominant_exponent(&EnvelopeSpec::new(0.5, 1.0, 2.0, 0.5, 0.0));
        assert_eq!(v.regime, PhaseRegime::Spectrum);
        // q > 0, s = 1/p + q: alignment
        let v = dominant_exponent(&EnvelopeSpec::new(0.5, 1.0, 2.0, 0.75, 0.25));
        assert_eq!(v.regime, PhaseRegime::Alignment);
    }

    #[test]
    fn master_bound_examples() {
        assert_eq!(master_bound(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(master_bound(1.0, 0.0, 0.0, 0.0).unwrap(), 2.0);
        assert!((master_bound(0.1, 0.2, 0.05, 3.0).unwrap() - 2.6).abs() < 1e-14);
        assert!(master_bound(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn floor_breaks_benign_trend() {
        let mut env = EnvelopeSpec::new(0.5, 1.0, 2.0, 0.0, 0.0);
        let ns = [100, 1000, 10_000, 100_000];
        let grid = default_tau_grid();
        assert!(benign_trend(&env, &ns, &grid).unwrap().benign);
        env.floor = 10.0;
        assert!(!benign_trend(&env, &ns, &grid).unwrap().benign);
    }

    #[test]
    fn obstruction_loads() {
        let spec = Spectrum::new(vec![1.0, 0.25, 0.0]).unwrap();
        let iso = noise_load_from_obstruction(&spec, 1.0, 0.0).unwrap();
        assert_eq!(iso.modal_loads, vec![1.0, 0.25, 0.0]);
        assert_eq!(iso.isotropic_variance, Some(1.0));
        let flat = noise_load_from_obstruction(&spec, 2.0, 1.0).unwrap();
        assert_eq!(flat.modal_loads, vec![2.0, 2.0, 0.0]);
        let steep = noise_load_from_obstruction(&spec, 2.0, 1.5).unwrap();
        assert_eq!(steep.modal_loads[2], 0.0);
        assert!(noise_load_from_obstruction(&spec, 1.0, -0.1).is_err());
    }
}
