//! Spectral norm by power iteration on `MᵀM`, accelerated by repeated squaring.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNormOptions {
    /// Maximum squaring steps; step `k` is worth `2^k` plain power iterations.
    pub max_iters: usize,
    /// Relative tolerance on the largest eigenvalue of `MᵀM`.
    pub tol: f64,
}

impl Default for SpectralNormOptions {
    fn default() -> Self {
        Self {
            max_iters: 64,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    /// Squaring steps taken.
    pub iterations: usize,
    /// False when `max_iters` was exhausted; `value` is then the last estimate.
    pub converged: bool,
}

/// Largest singular value of `m`.
///
/// `P_k = (MᵀM)^(2^k)`, normalised, is the power method after `2^k` steps
/// applied to every basis vector at once; its largest column gives the
/// iterate and `‖Mv‖²` the Rayleigh quotient. After `N` plain steps the
/// quotient can lag `λ₁` by at most about `λ₁/(2eN)` however close the top
/// eigenvalues are, so convergence requires that bound and the change between
/// squarings to both fall under `tol`.
pub fn spectral_norm(m: &DMatrix<f64>, opts: SpectralNormOptions) -> SpectralNorm {
    if m.is_empty() || m.iter().all(|&x| x == 0.0) {
        return SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let rayleigh = |p: &DMatrix<f64>| {
        let j = (0..p.ncols())
            .max_by(|&a, &b| p.column(a).norm_squared().total_cmp(&p.column(b).norm_squared()))
            .unwrap_or(0);
        let v = p.column(j).normalize();
        (m * v).norm_squared()
    };
    let gram = m.transpose() * m;
    let mut p = &gram / gram.norm();
    let mut rho = rayleigh(&p);
    let mut lag_bound = 1.0 / (2.0 * std::f64::consts::E);
    for it in 1..=opts.max_iters {
        p = &p * &p;
        let norm = p.norm();
        p /= norm;
        lag_bound /= 2.0;
        // every quotient is a lower bound on λ₁
        let next = rayleigh(&p).max(rho);
        let step = next - rho;
        rho = next;
        if step <= opts.tol * rho && lag_bound <= opts.tol {
            return SpectralNorm {
                value: rho.sqrt(),
                iterations: it,
                converged: true,
            };
        }
    }
    SpectralNorm {
        value: rho.sqrt(),
        iterations: opts.max_iters,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 5.0]));
        let s = spectral_norm(&m, SpectralNormOptions::default());
        assert!(s.converged);
        assert!((s.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix() {
        let s = spectral_norm(&DMatrix::zeros(3, 4), SpectralNormOptions::default());
        assert_eq!(s.value, 0.0);
        assert!(s.converged);
    }

    #[test]
    fn rectangular_rank_one() {
        // [1, -1] has singular value √2 along (1, -1), orthogonal to all-ones
        let m = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let s = spectral_norm(&m, SpectralNormOptions::default());
        assert!((s.value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.999_999]));
        let s = spectral_norm(&m, SpectralNormOptions { max_iters: 3, tol: 1e-14 });
        assert!(!s.converged);
        assert_eq!(s.iterations, 3);
    }

    #[test]
    fn nearly_degenerate_top_pair() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0 - 1e-7, 1.0]));
        let s = spectral_norm(&m, SpectralNormOptions { max_iters: 64, tol: 1e-13 });
        assert!(s.converged);
        assert!((s.value - 3.0).abs() < 1e-12, "{}", s.value);
    }
}
