use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves `m z = rhs` for symmetric positive definite `m`.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = cholesky(m)?;
    Ok(chol.solve(rhs))
}

/// Inverse of a symmetric positive definite matrix, symmetrised.
pub fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cholesky(m)?.inverse();
    Ok(symmetrize(&inv))
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    let chol = Cholesky::new(m.clone()).ok_or(Error::SingularInformation)?;
    // reject numerically rank-deficient factors
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..m.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || min < max * 1e-10 {
        return Err(Error::SingularInformation);
    }
    Ok(chol)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Adds `w x x'` to a row-major `d x d` buffer.
#[inline]
pub(crate) fn add_outer(buf: &mut [f64], x: &[f64], w: f64) {
    let d = x.len();
    for a in 0..d {
        let s = w * x[a];
        let row = &mut buf[a * d..(a + 1) * d];
        for (r, xb) in row.iter_mut().zip(x) {
            *r += s * xb;
        }
    }
}

/// Adds `m (free x free) kron (w x x')` to a row-major buffer of dimension `free * d`.
pub(crate) fn add_kron_outer(buf: &mut [f64], m: &[f64], free: usize, x: &[f64], w: f64) {
    let d = x.len();
    let dim = free * d;
    for a in 0..free {
        for b in 0..free {
            let s = w * m[a * free + b];
            if s == 0.0 {
                continue;
            }
            for i in 0..d {
                let si = s * x[i];
                let start = (a * d + i) * dim + b * d;
                for (r, xj) in buf[start..start + d].iter_mut().zip(x) {
                    *r += si * xj;
                }
            }
        }
    }
}
