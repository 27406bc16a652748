//! Displacement operator `D_alpha = exp(alpha (a^dagger - a))` on the
//! truncated space, plus the untruncated closed form used as an oracle.
//!
//! The truncated generator `G` is real antisymmetric and tridiagonal. With
//! `U = diag(i^n)` it factors as `G = U (-i T) U^dagger`, where `T` is the
//! real symmetric tridiagonal matrix with off-diagonals `sqrt(n + 1)`. One
//! symmetric eigendecomposition `T = Q diag(lambda) Q^T` then gives
//! `D_alpha = U Q diag(exp(-i alpha lambda)) Q^T U^dagger` for every alpha.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{apply_generator, StateVector};

/// `i^k` for integer `k`.
#[inline]
fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Spectral factors of the truncated displacement generator.
#[derive(Clone, Debug)]
pub struct DisplacementTable {
    n_max: usize,
    alpha_limit: f64,
    /// Eigenvectors of `T`, column `k` for eigenvalue `lambda[k]`.
    q: DMatrix<f64>,
    lambda: Vec<f64>,
}

impl DisplacementTable {
    /// Factorizes the generator for an `n_max` truncation and validates the
    /// reconstruction for `|alpha| <= alpha_limit`.
    pub fn new(n_max: usize, alpha_limit: f64) -> Result<Self> {
        let d = n_max + 1;
        let t = DMatrix::from_fn(d, d, |r, c| {
            if r + 1 == c || c + 1 == r {
                (r.max(c) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let table = Self {
            n_max,
            alpha_limit: alpha_limit.abs(),
            q: eig.eigenvectors,
            lambda: eig.eigenvalues.iter().copied().collect(),
        };
        let identity_err = table.max_identity_error();
        if identity_err > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "displacement factorization fails D_0 = I check ({identity_err:.3e})"
            )));
        }
        for alpha in [table.alpha_limit, -table.alpha_limit] {
            let orth = table.orthogonality_error(alpha);
            if orth > 1e-10 {
                return Err(Error::InvalidParams(format!(
                    "D_alpha not orthogonal at alpha = {alpha} ({orth:.3e})"
                )));
            }
        }
        Ok(table)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn alpha_limit(&self) -> f64 {
        self.alpha_limit
    }

    /// `max |D_0 - I|` entrywise.
    pub fn max_identity_error(&self) -> f64 {
        let d0 = self.matrix(0.0);
        let d = self.n_max + 1;
        let mut err: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let target = if r == c { 1.0 } else { 0.0 };
                err = err.max((d0[(r, c)] - target).abs());
            }
        }
        err
    }

    /// `max |D_alpha^T D_alpha - I|` entrywise.
    pub fn orthogonality_error(&self, alpha: f64) -> f64 {
        let m = self.matrix(alpha);
        let prod = m.transpose() * &m;
        let d = self.n_max + 1;
        let mut err: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let target = if r == c { 1.0 } else { 0.0 };
                err = err.max((prod[(r, c)] - target).abs());
            }
        }
        err
    }

    /// Dense real matrix of `D_alpha` (O(d^3); diagnostics and tests).
    pub fn matrix(&self, alpha: f64) -> DMatrix<f64> {
        let d = self.n_max + 1;
        let phases: Vec<Complex64> = self
            .lambda
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -alpha * l))
            .collect();
        DMatrix::from_fn(d, d, |m, n| {
            let s: Complex64 = (0..d)
                .map(|k| phases[k] * (self.q[(m, k)] * self.q[(n, k)]))
                .sum();
            (i_pow(m as i64 - n as i64) * s).re
        })
    }

    /// Projects `state` onto the eigenbasis once so that displacements by
    /// many different alphas cost O(d^2) each.
    pub fn prepare(&self, state: &StateVector) -> PreparedDisplacement<'_> {
        debug_assert_eq!(state.dim(), self.n_max + 1);
        let d = self.n_max + 1;
        let rotated: Vec<Complex64> = state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, c)| c * i_pow(-(n as i64)))
            .collect();
        let coeffs = (0..d)
            .map(|k| (0..d).map(|n| rotated[n] * self.q[(n, k)]).sum())
            .collect();
        PreparedDisplacement { table: self, coeffs }
    }

    /// `D_alpha psi`, renormalized. Returns the state and the squared-norm
    /// drift removed by renormalization.
    pub fn apply_with_drift(&self, state: &StateVector, alpha: f64) -> (StateVector, f64) {
        let raw = self.prepare(state).apply(alpha);
        StateVector::from_unnormalized(raw).expect("displacement preserves the norm")
    }

    pub fn apply(&self, state: &StateVector, alpha: f64) -> StateVector {
        self.apply_with_drift(state, alpha).0
    }
}

/// A state expressed in the eigenbasis of the generator.
#[derive(Clone, Debug)]
pub struct PreparedDisplacement<'a> {
    table: &'a DisplacementTable,
    coeffs: Vec<Complex64>,
}

impl PreparedDisplacement<'_> {
    /// Unnormalized amplitudes of `D_alpha psi`.
    pub fn apply(&self, alpha: f64) -> Vec<Complex64> {
        debug_assert!(
            alpha.abs() <= self.table.alpha_limit * (1.0 + 1e-12),
            "alpha = {alpha} outside validated range"
        );
        let d = self.table.n_max + 1;
        let w: Vec<Complex64> = self
            .coeffs
            .iter()
            .zip(&self.table.lambda)
            .map(|(c, &l)| c * Complex64::from_polar(1.0, -alpha * l))
            .collect();
        let q = &self.table.q;
        (0..d)
            .map(|m| {
                let s: Complex64 = (0..d).map(|k| w[k] * q[(m, k)]).sum();
                s * i_pow(m as i64)
            })
            .collect()
    }
}

/// `D_alpha psi` using a prebuilt table.
pub fn displacement_apply(state: &StateVector, alpha: f64, table: &DisplacementTable) -> StateVector {
    table.apply(state, alpha)
}

/// `exp(alpha G) psi` by summing the power series until the terms underflow
/// relative to the partial sum. Meant for `|alpha| sqrt(n_max)` of order one
/// or less.
pub fn displacement_series(amps: &[Complex64], alpha: f64) -> Vec<Complex64> {
    let mut out = amps.to_vec();
    let mut term = amps.to_vec();
    for k in 1..=500 {
        term = apply_generator(&term)
            .into_iter()
            .map(|t| t * (alpha / k as f64))
            .collect();
        let mut small = true;
        for (o, t) in out.iter_mut().zip(&term) {
            small &= t.norm() <= 1e-18 * o.norm().max(f64::MIN_POSITIVE);
            *o += t;
        }
        if small {
            break;
        }
    }
    out
}

/// Associated Laguerre polynomial `L_n^{(k)}(x)` by the three-term recurrence.
pub fn assoc_laguerre(n: usize, k: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k - x) * cur - (jf + k) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Untruncated matrix element `<m|D_alpha|n>` for real alpha.
pub fn displacement_oracle_entry(m: usize, n: usize, alpha: f64) -> f64 {
    if m < n {
        let sign = if (n - m) % 2 == 0 { 1.0 } else { -1.0 };
        return sign * displacement_oracle_entry(n, m, alpha);
    }
    let k = m - n;
    // sqrt(n! / m!) = exp(-0.5 * sum_{j=n+1}^{m} ln j)
    let log_ratio: f64 = (n + 1..=m).map(|j| (j as f64).ln()).sum::<f64>();
    let x = alpha * alpha;
    (-0.5 * log_ratio).exp()
        * alpha.powi(k as i32)
        * (-x / 2.0).exp()
        * assoc_laguerre(n, k as f64, x)
}
