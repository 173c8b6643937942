//! Lanczos approximation of `exp(-i h H) ψ` for real-symmetric `H`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{norm, Coefficients, Hamiltonian, C_ZERO};

const MAX_DIM: usize = 40;
const MAX_SPLITS: u32 = 12;

pub(super) struct Lanczos {
    basis: Vec<Vec<Complex64>>,
    w: Vec<Complex64>,
}

impl Lanczos {
    pub(super) fn new(dim: usize) -> Self {
        Self {
            basis: Vec::new(),
            w: vec![C_ZERO; dim],
        }
    }

    /// Replaces `psi` by `exp(-i h H) psi`. Steps that do not converge within
    /// the subspace limit are split in halves.
    pub(super) fn expm_apply(&mut self, ham: &Hamiltonian, c: &Coefficients, psi: &mut [Complex64], h: f64, tol: f64) {
        self.split(ham, c, psi, h, tol, 0);
    }

    fn split(&mut self, ham: &Hamiltonian, c: &Coefficients, psi: &mut [Complex64], h: f64, tol: f64, depth: u32) {
        let last = depth >= MAX_SPLITS;
        if self.try_apply(ham, c, psi, h, tol, last) {
            return;
        }
        self.split(ham, c, psi, h / 2.0, tol / 2.0, depth + 1);
        self.split(ham, c, psi, h / 2.0, tol / 2.0, depth + 1);
    }

    /// Returns false (leaving `psi` untouched) if not converged, unless
    /// `force` is set, in which case the best estimate is applied.
    fn try_apply(
        &mut self,
        ham: &Hamiltonian,
        c: &Coefficients,
        psi: &mut [Complex64],
        h: f64,
        tol: f64,
        force: bool,
    ) -> bool {
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return true;
        }
        let dim = psi.len();
        let m_max = MAX_DIM.min(dim);
        let mut alpha = Vec::with_capacity(m_max);
        let mut beta: Vec<f64> = Vec::with_capacity(m_max);
        self.basis.clear();
        self.basis.push(psi.iter().map(|x| x / beta0).collect());

        for j in 0..m_max {
            ham.apply(c, &self.basis[j], &mut self.w);
            let a: f64 = self.basis[j].iter().zip(&self.w).map(|(v, w)| (v.conj() * w).re).sum();
            alpha.push(a);
            // Full reorthogonalisation keeps the small basis honest.
            for v in &self.basis {
                let p: Complex64 = v.iter().zip(&self.w).map(|(v, w)| v.conj() * w).sum();
                for (w, v) in self.w.iter_mut().zip(v) {
                    *w -= p * v;
                }
            }
            let b = norm(&self.w);
            let m = j + 1;
            let (y, tail) = small_exp(&alpha, &beta, h);
            let err = b * tail;
            let done = err < tol || b < 1e-14 || m == dim;
            if !done && force && m == m_max {
                log::warn!("Krylov exponential stopped at error {err:e} (target {tol:e})");
            }
            if done || (force && m == m_max) {
                for (k, out) in psi.iter_mut().enumerate() {
                    *out = self.basis.iter().zip(&y).map(|(v, y)| v[k] * y).sum::<Complex64>() * beta0;
                }
                return true;
            }
            if m == m_max {
                return false;
            }
            beta.push(b);
            self.basis.push(self.w.iter().map(|x| x / b).collect());
        }
        false
    }
}

/// `y = exp(-i h T) e₁` for the tridiagonal `T`, and `|y_m|` for the error
/// estimate.
fn small_exp(alpha: &[f64], beta: &[f64], h: f64) -> (Vec<Complex64>, f64) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let q = &eig.eigenvectors;
    let y: Vec<Complex64> = (0..m)
        .map(|r| {
            (0..m)
                .map(|k| Complex64::from_polar(q[(r, k)] * q[(0, k)], -h * eig.eigenvalues[k]))
                .sum()
        })
        .collect();
    let tail = y[m - 1].norm();
    (y, tail)
}
