//! Singular value decomposition via one-sided Jacobi rotations.
//!
//! Matrices in this crate stay small (≤ 512 per side), so the simple
//! column-orthogonalization scheme wins over anything asymptotically
//! clever: it is short, numerically robust in f64, and delivers the
//! 1e-9 relative reconstruction accuracy the condition-number work needs.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Off-diagonal mass threshold for declaring a pair orthogonal.
const JACOBI_TOL: f64 = 1e-12;
/// Sweep cap before reporting non-convergence.
const MAX_SWEEPS: usize = 100;
/// Side length limit; everything here is desk scale.
const MAX_SIDE: usize = 512;

/// Thin SVD: `m = U · diag(σ) · Vᵀ` with `σ` sorted descending.
///
/// `U` is rows×k and `V` is cols×k for k = min(rows, cols). Columns of `U`
/// paired with zero singular values are left as zero vectors; they never
/// contribute to the reconstruction.
pub fn svd(m: &Matrix) -> Result<(Vector, Matrix, Matrix)> {
    if !m.is_finite() {
        return Err(Error::Contract("svd: matrix has non-finite entries".into()));
    }
    if m.rows() > MAX_SIDE || m.cols() > MAX_SIDE {
        return Err(Error::Capability(format!(
            "svd supports matrices up to {MAX_SIDE} per side, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        // A = (Aᵀ)ᵀ: factor the transpose and swap the factors.
        let (sigma, u_t, v_t) = svd_tall(&m.transpose())?;
        Ok((sigma, v_t, u_t))
    }
}

fn svd_tall(a: &Matrix) -> Result<(Vector, Matrix, Matrix)> {
    let rows = a.rows();
    let cols = a.cols();

    // Column-major working copies: b holds the rotated columns of A,
    // v accumulates the right rotations.
    let mut b: Vec<Vec<f64>> = (0..cols)
        .map(|c| (0..rows).map(|r| a[(r, c)]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|c| (0..cols).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = false;
    let mut worst = 0.0_f64;
    for _sweep in 0..MAX_SWEEPS {
        worst = 0.0;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&b[p], &b[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for r in 0..rows {
                        alpha += cp[r] * cp[r];
                        beta += cq[r] * cq[r];
                        gamma += cp[r] * cq[r];
                    }
                    (alpha, beta, gamma)
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(off);
                if off <= JACOBI_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut b, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if worst <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "jacobi svd failed to converge in {MAX_SWEEPS} sweeps, residual off-diagonal mass {worst:.3e}"
        )));
    }

    // Singular values are the column norms; order descending.
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = b.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut sigma = Vec::with_capacity(cols);
    let mut u = Matrix::zeros(rows, cols);
    let mut vout = Matrix::zeros(cols, cols);
    for (k, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > 0.0 {
            for r in 0..rows {
                u[(r, k)] = b[src][r] / s;
            }
        }
        for r in 0..cols {
            vout[(r, k)] = v[src][r];
        }
    }
    Ok((Vector::new(sigma), u, vout))
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    // Apply the Givens rotation to columns p and q in place.
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// κ(m) = σ_max / σ_min for a square nonsingular matrix.
pub fn condition_number(m: &Matrix) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::Contract(format!(
            "condition number requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let (sigma, _, _) = svd(m)?;
    let s_max = sigma[0];
    let s_min = sigma[sigma.dim() - 1];
    if s_min < 1e-300 {
        return Err(Error::Numerical(format!(
            "matrix is numerically singular: smallest singular value {s_min:.3e}"
        )));
    }
    Ok(s_max / s_min)
}

/// σ_max(m); used for spectral-norm Lipschitz bookkeeping.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    let (sigma, _, _) = svd(m)?;
    Ok(if sigma.dim() == 0 { 0.0 } else { sigma[0] })
}

/// ‖UΣVᵀ − m‖_F / ‖m‖_F, the reconstruction residual used in tests.
pub fn reconstruction_residual(m: &Matrix, sigma: &Vector, u: &Matrix, v: &Matrix) -> f64 {
    let k = sigma.dim();
    let mut recon = Matrix::zeros(m.rows(), m.cols());
    for idx in 0..k {
        let s = sigma[idx];
        if s == 0.0 {
            continue;
        }
        for r in 0..m.rows() {
            let us = u[(r, idx)] * s;
            for c in 0..m.cols() {
                recon[(r, c)] += us * v[(c, idx)];
            }
        }
    }
    let diff = recon.sub(m).expect("shapes match");
    let denom = m.frobenius_norm();
    if denom == 0.0 {
        diff.frobenius_norm()
    } else {
        diff.frobenius_norm() / denom
    }
}
