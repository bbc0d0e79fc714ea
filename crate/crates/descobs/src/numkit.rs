//! Tolerant-rank numerical substrate.
//!
//! Every rank decision in the crate flows through [`rank_tol`] so that one
//! tolerance policy governs the whole pipeline. Orthogonal compression
//! factors are taken from the same SVD that makes the rank decision, which
//! keeps the decided rank and the produced zero blocks consistent.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Dense real vector.
pub type Vector = DVector<f64>;
/// Dense complex matrix (rank tests at complex frequencies).
pub type CMatrix = DMatrix<Complex<f64>>;

/// Outcome of a tolerant rank decision.
#[derive(Debug, Clone)]
pub struct RankDecision {
    pub rank: usize,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Threshold actually applied (override or default).
    pub tolerance_used: f64,
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn ensure_finite_complex(m: &CMatrix) -> Result<()> {
    if m.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Default threshold: max(rows, cols) * sigma_max * machine epsilon.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

/// Absolute threshold for rank decisions on blocks produced by chains of
/// orthogonal transforms. Anchoring to the original data scale keeps pure
/// roundoff residue from registering as full rank, and the safety factor
/// absorbs the error the chain accumulates on top of a single
/// decomposition's bound.
pub fn anchored_rank_tolerance(rows: usize, cols: usize, scale: f64) -> f64 {
    64.0 * default_rank_tolerance(rows, cols, scale)
}

fn decide(sv: &[f64], rows: usize, cols: usize, tol_override: Option<f64>) -> RankDecision {
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol = tol_override.unwrap_or_else(|| default_rank_tolerance(rows, cols, sigma_max));
    let rank = sv.iter().filter(|&&s| s > tol).count();
    RankDecision {
        rank,
        singular_values: sv.to_vec(),
        tolerance_used: tol,
    }
}

/// Thin singular value decomposition `m = u * diag(sigma) * v^T` with
/// orthonormal factors and `sigma` sorted in descending order. `u` is
/// rows x k and `v` is cols x k for k = min(rows, cols).
pub struct ThinSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

/// Complex counterpart of [`ThinSvd`]: `m = u * diag(sigma) * v^H`.
pub struct ThinSvdC {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

const MAX_JACOBI_SWEEPS: usize = 64;

/// Thin SVD by cyclic one-sided Jacobi.
///
/// Rotations orthogonalize the columns of a working copy while accumulating
/// into `v`, so both factors are orthonormal to machine precision by
/// construction, with no convergence cliff on exactly rank-deficient input.
/// Bidiagonalization-based solvers can misconverge on such matrices and
/// silently return factors that do not reproduce the input; every rank and
/// subspace decision in this crate therefore goes through this routine.
pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    ensure_finite(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(ThinSvd {
            u: Matrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: Matrix::zeros(cols, 0),
        });
    }
    if rows < cols {
        let t = thin_svd(&m.transpose())?;
        return Ok(ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    // pairs cleaned early in a sweep pick up roundoff from later rotations,
    // so the settle threshold must sit above that noise or the sweep loop
    // never goes quiet; scale it with the dimension
    let settle = 8.0 * rows.max(cols) as f64 * f64::EPSILON;
    // null-direction columns decay geometrically instead of reaching zero,
    // and near-parallel rotations keep refilling them with slivers of the
    // large columns; once a norm is below the backward-error floor the
    // column is a numerical zero, so deflate it exactly and let its pairs
    // go quiet
    let deflate = f64::EPSILON * m.norm();
    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for j in 0..cols {
            let nj = a.column(j).norm();
            if nj > 0.0 && nj <= deflate {
                a.column_mut(j).fill(0.0);
            }
        }
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= settle * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                let tau = (beta - alpha) / (2.0 * gamma);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                if sn == 0.0 {
                    continue;
                }
                rotated = true;
                for i in 0..rows {
                    let x = a[(i, p)];
                    let y = a[(i, q)];
                    a[(i, p)] = cs * x - sn * y;
                    a[(i, q)] = sn * x + cs * y;
                }
                for i in 0..cols {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = cs * x - sn * y;
                    v[(i, q)] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(
            "one-sided jacobi svd sweep cap".into(),
        ));
    }

    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut sigma = Vec::with_capacity(cols);
    let mut u = Matrix::zeros(rows, cols);
    let mut vs = Matrix::zeros(cols, cols);
    for (slot, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        vs.column_mut(slot).copy_from(&v.column(j));
        if norms[j] > 0.0 {
            u.column_mut(slot).copy_from(&(a.column(j) / norms[j]));
        }
    }
    // zero columns carry no direction; fill their u slots from the
    // orthogonal complement so the factor stays orthonormal end to end
    if let Some(k0) = sigma.iter().position(|&s| s == 0.0) {
        let lead = u.columns(0, k0).clone_owned();
        let fill = orthonormal_completion(&lead);
        for j in k0..cols {
            u.column_mut(j).copy_from(&fill.column(j - k0));
        }
    }
    Ok(ThinSvd { u, sigma, v: vs })
}

/// Complex thin SVD by the same one-sided Jacobi scheme as [`thin_svd`];
/// each pair rotation first absorbs the phase of the cross inner product so
/// the remaining 2x2 problem is real.
pub fn thin_svd_complex(m: &CMatrix) -> Result<ThinSvdC> {
    ensure_finite_complex(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(ThinSvdC {
            u: CMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: CMatrix::zeros(cols, 0),
        });
    }
    if rows < cols {
        let t = thin_svd_complex(&m.adjoint())?;
        return Ok(ThinSvdC {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let mut a = m.clone();
    let mut v = CMatrix::identity(cols, cols);
    let settle = 8.0 * rows.max(cols) as f64 * f64::EPSILON;
    let deflate = f64::EPSILON * m.norm();
    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for j in 0..cols {
            let nj = a.column(j).norm();
            if nj > 0.0 && nj <= deflate {
                a.column_mut(j).fill(Complex::new(0.0, 0.0));
            }
        }
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g <= settle * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                let phase = gamma / g;
                let tau = (beta - alpha) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                if sn == 0.0 {
                    continue;
                }
                rotated = true;
                // rotate columns p and q; the q column is pre-multiplied by
                // conj(phase), which makes the cross term real and keeps the
                // combined column operation unitary
                for i in 0..rows {
                    let x = a[(i, p)];
                    let y = a[(i, q)] * phase.conj();
                    a[(i, p)] = x * cs - y * sn;
                    a[(i, q)] = x * sn + y * cs;
                }
                for i in 0..cols {
                    let x = v[(i, p)];
                    let y = v[(i, q)] * phase.conj();
                    v[(i, p)] = x * cs - y * sn;
                    v[(i, q)] = x * sn + y * cs;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(
            "one-sided jacobi svd sweep cap".into(),
        ));
    }

    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut sigma = Vec::with_capacity(cols);
    let mut u = CMatrix::zeros(rows, cols);
    let mut vs = CMatrix::zeros(cols, cols);
    for (slot, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        vs.column_mut(slot).copy_from(&v.column(j));
        if norms[j] > 0.0 {
            u.column_mut(slot)
                .copy_from(&(a.column(j) / Complex::new(norms[j], 0.0)));
        }
    }
    if let Some(k0) = sigma.iter().position(|&s| s == 0.0) {
        let lead = u.columns(0, k0).clone_owned();
        let fill = orthonormal_completion_complex(&lead);
        for j in k0..cols {
            u.column_mut(j).copy_from(&fill.column(j - k0));
        }
    }
    Ok(ThinSvdC { u, sigma, v: vs })
}

/// Numerical rank of a real matrix from its singular values.
///
/// `tol_override` replaces the default threshold with an absolute one; the
/// rank is the count of singular values strictly above the threshold.
pub fn rank_tol(m: &Matrix, tol_override: Option<f64>) -> Result<RankDecision> {
    ensure_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(RankDecision {
            rank: 0,
            singular_values: Vec::new(),
            tolerance_used: tol_override.unwrap_or(0.0),
        });
    }
    let sv = thin_svd(m)?.sigma;
    Ok(decide(&sv, m.nrows(), m.ncols(), tol_override))
}

/// Numerical rank of a complex matrix (same policy as [`rank_tol`]).
pub fn rank_tol_complex(m: &CMatrix, tol_override: Option<f64>) -> Result<RankDecision> {
    ensure_finite_complex(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(RankDecision {
            rank: 0,
            singular_values: Vec::new(),
            tolerance_used: tol_override.unwrap_or(0.0),
        });
    }
    let sv = thin_svd_complex(m)?.sigma;
    Ok(decide(&sv, m.nrows(), m.ncols(), tol_override))
}

/// Moore-Penrose pseudoinverse with the shared tolerance policy: singular
/// values at or below the rank threshold are treated as exact zeros.
pub fn pinv(m: &Matrix, tol_override: Option<f64>) -> Result<Matrix> {
    ensure_finite(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let svd = thin_svd(m)?;
    let decision = decide(&svd.sigma, rows, cols, tol_override);
    // pinv = V * diag(1/sigma_i for kept i) * U^T, truncated at the decided rank.
    let r = decision.rank;
    if r == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let u_r = svd.u.columns(0, r);
    let mut scaled = svd.v.columns(0, r).clone_owned();
    for j in 0..r {
        let inv = 1.0 / svd.sigma[j];
        scaled.column_mut(j).scale_mut(inv);
    }
    Ok(scaled * u_r.transpose())
}

/// Extends a matrix with orthonormal columns to a full orthonormal basis.
///
/// Returns the m x (m - k) completion. Candidates are unit vectors; each
/// round takes the one with the largest residual after two projection
/// passes, so the result is orthonormal to machine precision even when the
/// input spans most of the space.
fn orthonormal_completion(basis: &Matrix) -> Matrix {
    let m = basis.nrows();
    let k = basis.ncols();
    let mut held: Vec<Vector> = (0..k).map(|j| basis.column(j).clone_owned()).collect();
    let mut extra: Vec<Vector> = Vec::with_capacity(m - k);
    while held.len() < m {
        let mut best: Option<(f64, Vector)> = None;
        for i in 0..m {
            let mut v = Vector::zeros(m);
            v[i] = 1.0;
            for _ in 0..2 {
                for b in &held {
                    let c = b.dot(&v);
                    v.axpy(-c, b, 1.0);
                }
            }
            let norm = v.norm();
            if best.as_ref().map_or(true, |(bn, _)| norm > *bn) {
                best = Some((norm, v));
            }
        }
        let (norm, mut v) = best.expect("nonempty candidate set");
        v /= norm;
        held.push(v.clone());
        extra.push(v);
    }
    let mut out = Matrix::zeros(m, m - k);
    for (j, v) in extra.iter().enumerate() {
        out.column_mut(j).copy_from(v);
    }
    out
}

/// Complex version of [`orthonormal_completion`]; projections use the
/// Hermitian inner product.
fn orthonormal_completion_complex(basis: &CMatrix) -> CMatrix {
    type CVector = nalgebra::DVector<Complex<f64>>;
    let m = basis.nrows();
    let k = basis.ncols();
    let mut held: Vec<CVector> = (0..k).map(|j| basis.column(j).clone_owned()).collect();
    let mut extra: Vec<CVector> = Vec::with_capacity(m - k);
    while held.len() < m {
        let mut best: Option<(f64, CVector)> = None;
        for i in 0..m {
            let mut v = CVector::zeros(m);
            v[i] = Complex::new(1.0, 0.0);
            for _ in 0..2 {
                for b in &held {
                    let c = b.dotc(&v);
                    v.axpy(-c, b, Complex::new(1.0, 0.0));
                }
            }
            let norm = v.norm();
            if best.as_ref().map_or(true, |(bn, _)| norm > *bn) {
                best = Some((norm, v));
            }
        }
        let (norm, mut v) = best.expect("nonempty candidate set");
        v /= Complex::new(norm, 0.0);
        held.push(v.clone());
        extra.push(v);
    }
    let mut out = CMatrix::zeros(m, m - k);
    for (j, v) in extra.iter().enumerate() {
        out.column_mut(j).copy_from(v);
    }
    out
}

/// Orthogonal row compression: returns (U, r) with U * M = [Mhat; 0], where
/// Mhat has full row rank r. U is square orthogonal; its leading r rows are
/// the transposed left singular vectors above the rank threshold, so the
/// zero block is certified by the same decomposition that decided r.
pub fn row_compress(m: &Matrix, tol_override: Option<f64>) -> Result<(Matrix, usize)> {
    ensure_finite(m)?;
    let rows = m.nrows();
    if rows == 0 {
        return Ok((Matrix::identity(0, 0), 0));
    }
    if m.ncols() == 0 {
        return Ok((Matrix::identity(rows, rows), 0));
    }
    let svd = thin_svd(m)?;
    let r = decide(&svd.sigma, rows, m.ncols(), tol_override).rank;
    let u_r = svd.u.columns(0, r).clone_owned();
    let w = orthonormal_completion(&u_r);
    let mut full = Matrix::zeros(rows, rows);
    full.view_mut((0, 0), (rows, r)).copy_from(&u_r);
    full.view_mut((0, r), (rows, rows - r)).copy_from(&w);
    Ok((full.transpose(), r))
}

/// Orthogonal column compression against the right edge: returns (V, r)
/// with M * V = [0 | A1], where A1 has full column rank r and occupies the
/// trailing r columns.
pub fn column_compress_right(m: &Matrix, tol_override: Option<f64>) -> Result<(Matrix, usize)> {
    ensure_finite(m)?;
    let cols = m.ncols();
    if cols == 0 {
        return Ok((Matrix::identity(0, 0), 0));
    }
    if m.nrows() == 0 {
        return Ok((Matrix::identity(cols, cols), 0));
    }
    let svd = thin_svd(m)?;
    let r = decide(&svd.sigma, m.nrows(), cols, tol_override).rank;
    let v_r = svd.v.columns(0, r).clone_owned();
    let w = orthonormal_completion(&v_r);
    let mut full = Matrix::zeros(cols, cols);
    full.view_mut((0, 0), (cols, cols - r)).copy_from(&w);
    full.view_mut((0, cols - r), (cols, r)).copy_from(&v_r);
    Ok((full, r))
}

/// Stacks [C; C A; ...; C A^(q-1)] for square A (q x q) and C (r x q).
pub fn observability_matrix(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "dynamics matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if c.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "output matrix has {} columns, dynamics has {}",
            c.ncols(),
            a.ncols()
        )));
    }
    ensure_finite(a)?;
    ensure_finite(c)?;
    let q = a.nrows();
    let r = c.nrows();
    let mut out = Matrix::zeros(r * q, q);
    let mut block = c.clone();
    for i in 0..q {
        out.view_mut((i * r, 0), (r, q)).copy_from(&block);
        if i + 1 < q {
            block = &block * a;
        }
    }
    Ok(out)
}

/// Eigenvalues of a square real matrix via the real Schur form.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::NoConvergence("Schur iteration on dynamics matrix".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Horizontal concatenation. Panics on row mismatch (programming error).
pub fn hstack(parts: &[&Matrix]) -> Matrix {
    assert!(!parts.is_empty());
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, at), (rows, p.ncols())).copy_from(*p);
        at += p.ncols();
    }
    out
}

/// Vertical concatenation. Panics on column mismatch (programming error).
pub fn vstack(parts: &[&Matrix]) -> Matrix {
    assert!(!parts.is_empty());
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(*p);
        at += p.nrows();
    }
    out
}

/// Real matrix promoted to complex entries.
pub fn to_complex(m: &Matrix) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Complex::new(m[(i, j)], 0.0))
}
