//! Jacobi-preconditioned conjugate gradients for `diag * u - a lap_N u = b`.
//!
//! The operator is self-adjoint in the trapezoidal `H` inner product (not the
//! Euclidean one), so every reduction below is `H`-weighted. Reductions run
//! sequentially in index order, which keeps results bitwise reproducible.

use super::Grid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct CgConfig<T> {
    /// Target `|b - A u|_H / |b|_H`. Clamped from below to a few ulps of `T`.
    pub rel_tol: T,
    /// Iteration cap; `None` means `10 * points`.
    pub max_iter: Option<usize>,
}

impl<T: Scalar> Default for CgConfig<T> {
    fn default() -> Self {
        CgConfig { rel_tol: T::lit(1e-10), max_iter: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn apply<T: Scalar>(grid: &Grid<T>, diag: &[T], a: T, u: &[T], out: &mut [T]) {
    grid.laplacian_into(u, out);
    for i in 0..u.len() {
        out[i] = diag[i] * u[i] - a * out[i];
    }
}

/// Solves `diag * u - a lap_N u = rhs`; requires `diag > 0` and `a >= 0`.
pub fn solve_shifted<T: Scalar>(
    grid: &Grid<T>,
    diag: &[T],
    a: T,
    rhs: &[T],
    initial: Option<&[T]>,
    cfg: &CgConfig<T>,
) -> Result<(Vec<T>, CgStats)> {
    let n = grid.len();
    debug_assert_eq!(diag.len(), n);
    debug_assert_eq!(rhs.len(), n);
    let tol = cfg.rel_tol.max(T::lit(16.0) * T::epsilon());
    let max_iter = cfg.max_iter.unwrap_or(10 * n);

    let b_norm = grid.inner(rhs, rhs).sqrt();
    if b_norm == T::zero() {
        return Ok((vec![T::zero(); n], CgStats::default()));
    }
    let precond: Vec<T> = diag
        .iter()
        .map(|&d| T::one() / (d - a * grid.laplacian_diagonal()))
        .collect();

    let mut x = initial.map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); n]);
    let mut ax = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    let mut iterations = 0;

    // Outer loop re-anchors on the true residual to guard against drift of
    // the recursively updated one.
    loop {
        apply(grid, diag, a, &x, &mut ax);
        for i in 0..n {
            r[i] = rhs[i] - ax[i];
        }
        let true_res = grid.inner(&r, &r).sqrt() / b_norm;
        if true_res <= tol {
            return Ok((x, CgStats { iterations, relative_residual: true_res.to_f64_lossy() }));
        }
        if iterations >= max_iter {
            return Err(Error::CgNonConvergence { iterations, residual: true_res.to_f64_lossy() });
        }
        for i in 0..n {
            z[i] = precond[i] * r[i];
            p[i] = z[i];
        }
        let mut rz = grid.inner(&r, &z);
        while iterations < max_iter {
            apply(grid, diag, a, &p, &mut ap);
            let pap = grid.inner(&p, &ap);
            if !(pap > T::zero()) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] = x[i] + alpha * p[i];
                r[i] = r[i] - alpha * ap[i];
            }
            iterations += 1;
            if grid.inner(&r, &r).sqrt() <= tol * b_norm {
                break;
            }
            for i in 0..n {
                z[i] = precond[i] * r[i];
            }
            let rz_new = grid.inner(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}
