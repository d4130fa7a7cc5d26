//! One-sided (Hestenes) Jacobi SVD and null-space extraction.
//!
//! Columns are orthogonalised by plane rotations applied in cyclic order
//! `(0,1), (0,2), ..., (n-2,n-1)`. The sweep order is fixed, so the result
//! is bit-for-bit reproducible for a given input.

use super::matrix::{dot, norm, Matrix};
use super::LinalgError;

/// Maximum number of cyclic sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Default relative cutoff below which a singular value counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Normalised column inner product below which a pair is left alone.
const ORTHO_TOL: f64 = 1e-15;

/// Thin SVD `m = u · diag(s) · vt` with `k = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, &sj) in self.s.iter().enumerate() {
                let v = us.get(i, j) * sj;
                us.set(i, j, v);
            }
        }
        super::gemm(&us, &self.vt).expect("svd factors are conformant")
    }

    /// Number of singular values strictly above `rel_tol · s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let s_max = self.s.first().copied().unwrap_or(0.0);
        if s_max <= 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&v| v > rel_tol * s_max).count()
    }
}

/// Singular value decomposition by cyclic one-sided Jacobi.
///
/// Singular values are returned non-increasing; each left singular vector is
/// signed so that its largest-magnitude entry is positive (first such entry
/// on ties), with the matching right vector flipped alongside.
pub fn svd(m: &Matrix) -> Result<Svd, LinalgError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if let Some(index) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { index });
    }

    let (u, s, vt) = if m.rows() >= m.cols() {
        let (u, s, v) = jacobi_tall(m)?;
        (u, s, v.transpose())
    } else {
        // m = (mᵀ)ᵀ = (U' S V'ᵀ)ᵀ = V' S U'ᵀ
        let (u_t, s, v_t) = jacobi_tall(&m.transpose())?;
        (v_t, s, u_t.transpose())
    };

    let mut out = Svd { u, s, vt };
    fix_signs(&mut out);
    Ok(out)
}

/// Returns `(u, s, v)` for a matrix with `rows >= cols`, with `u` m×n and
/// `v` n×n, sorted by decreasing singular value.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix), LinalgError> {
    let (m, n) = a.shape();
    // Column-major working copies: cols[j] is column j of A, vcols[j] of V.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    let mut residual = 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        residual = 0.0_f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                residual = residual.max(off);
                if off <= ORTHO_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut ucols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            let nj = norms[j];
            if nj > f64::MIN_POSITIVE {
                Some(cols[j].iter().map(|v| v / nj).collect())
            } else {
                None
            }
        })
        .collect();
    complete_columns(&mut ucols, m);

    let u = Matrix::from_fn(m, n, |i, j| ucols[j].as_ref().expect("completed")[i]);
    let v = Matrix::from_fn(n, n, |i, j| vcols[order[j]][i]);
    Ok((u, s, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills `None` slots (zero singular values) with unit vectors orthogonal to
/// every other column.
fn complete_columns(cols: &mut [Option<Vec<f64>>], dim: usize) {
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        let basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
        cols[slot] = Some(next_complement_vector(&basis, dim));
    }
}

/// Picks the standard basis vector with the largest residual against the
/// orthonormal set `basis` and orthonormalises it (two Gram-Schmidt passes).
fn next_complement_vector(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut best = 0;
    let mut best_res = f64::NEG_INFINITY;
    for i in 0..dim {
        let covered: f64 = basis.iter().map(|q| q[i] * q[i]).sum();
        let res = 1.0 - covered;
        if res > best_res {
            best_res = res;
            best = i;
        }
    }
    let mut v = vec![0.0; dim];
    v[best] = 1.0;
    for _ in 0..2 {
        for q in basis {
            let d = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= d * qi;
            }
        }
    }
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

fn fix_signs(svd: &mut Svd) {
    let k = svd.s.len();
    for j in 0..k {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for i in 0..svd.u.rows() {
            let v = svd.u.get(i, j);
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..svd.u.rows() {
                let v = svd.u.get(i, j);
                svd.u.set(i, j, -v);
            }
            for c in 0..svd.vt.cols() {
                let v = svd.vt.get(j, c);
                svd.vt.set(j, c, -v);
            }
        }
    }
}

/// Orthonormal basis (as columns) of the orthogonal complement of the row
/// space of `rows`, whose rows must already be orthonormal.
///
/// Returns an `n × (n − r)` matrix for an `r × n` input.
pub fn orthonormal_complement(rows: &Matrix) -> Matrix {
    let n = rows.cols();
    let mut basis: Vec<Vec<f64>> = (0..rows.rows()).map(|i| rows.row(i).to_vec()).collect();
    let r = basis.len();
    let mut out = Vec::with_capacity(n.saturating_sub(r));
    for _ in r..n {
        let v = next_complement_vector(&basis, n);
        basis.push(v.clone());
        out.push(v);
    }
    Matrix::from_fn(n, out.len(), |i, j| out[j][i])
}

/// Orthonormal basis of the row space of `m`: the right singular vectors
/// whose singular values exceed `rel_tol · s_max`, as rows (`r × n`).
pub fn row_space_basis(m: &Matrix, rel_tol: f64) -> Result<Matrix, LinalgError> {
    check_tol(rel_tol)?;
    let svd = svd(m)?;
    let r = svd.rank(rel_tol);
    Ok(svd.vt.select_rows(&(0..r).collect::<Vec<_>>()))
}

/// Orthonormal basis of `{v : m·v = 0}` as columns of an `n × (n − r)`
/// matrix. When every singular value vanishes the basis spans the whole
/// space; for full column rank the result is `n × 0`.
pub fn null_space_basis(m: &Matrix, rel_tol: f64) -> Result<Matrix, LinalgError> {
    let range = row_space_basis(m, rel_tol)?;
    Ok(orthonormal_complement(&range))
}

fn check_tol(rel_tol: f64) -> Result<(), LinalgError> {
    if !(rel_tol > 0.0 && rel_tol.is_finite()) {
        return Err(LinalgError::Tolerance(rel_tol));
    }
    Ok(())
}
