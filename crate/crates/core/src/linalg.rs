//! Small numerical helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigendecomposition of a symmetric positive-semidefinite matrix with a
/// relative cutoff below which eigenvalues are treated as exact zeros.
#[derive(Debug, Clone)]
pub struct PsdEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub cutoff: f64,
}

impl PsdEigen {
    /// Cutoff is `cutoff_dim * eps * largest eigenvalue`.
    pub fn new(matrix: DMatrix<f64>, cutoff_dim: usize) -> Self {
        let eig = SymmetricEigen::new(matrix);
        let largest = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let cutoff = cutoff_dim.max(1) as f64 * f64::EPSILON * largest;
        PsdEigen {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
            cutoff,
        }
    }

    pub fn largest(&self) -> f64 {
        self.values.iter().cloned().fold(0.0_f64, f64::max)
    }

    pub fn rank(&self) -> usize {
        self.values.iter().filter(|&&v| v > self.cutoff).count()
    }

    /// Applies `f(λ)` on the retained spectrum and zero elsewhere: `V f(Λ) Vᵀ x`.
    pub fn apply_fn(&self, x: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut coeffs = self.vectors.tr_mul(x);
        for (c, &v) in coeffs.iter_mut().zip(self.values.iter()) {
            *c = if v > self.cutoff { *c * f(v) } else { 0.0 };
        }
        &self.vectors * coeffs
    }

    pub fn pinv_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_fn(x, |v| 1.0 / v)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `m` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && m >= 1);
    if m == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..m)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == m - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (m - 1) as f64).exp()
            }
        })
        .collect()
}

/// Mean and standard error of a slice (standard error is 0 for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Index of the minimum; the first index wins exact ties.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law_is_exact() {
        let xs = [1.0, 10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.75)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-3, 1.0, 4);
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[3], 1.0);
        assert!((g[1] - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn pinv_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let m = &v * v.transpose();
        let eig = PsdEigen::new(m, 2);
        assert_eq!(eig.rank(), 1);
        // K† v = v / |v|^2 for K = v vᵀ
        let out = eig.pinv_apply(&v);
        assert!((out[0] - 0.2).abs() < 1e-14 && (out[1] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn argmin_prefers_first_tie() {
        assert_eq!(argmin_first(&[3.0, 1.0, 1.0, 2.0]), 1);
    }
}
