//! Orthogonal staircase reduction of a descriptor system.
//!
//! Two orthogonal matrices U, V expose the largest trailing block of
//! semistates that the equations force to zero. What survives is an
//! explicit core
//!
//! ```text
//!     E11 xk' = A11 xk + B11 u        (E11 full row rank)
//!          0  = A21 xk + B21 u        (algebraic constraint)
//! ```
//!
//! in the leading coordinates of V, together with restrictions Ck, K11 of
//! the output and target maps. All later stages work on this core.

use crate::error::{Error, Result};
use crate::model::{DescriptorSystem, TolerancePolicy};
use crate::numkit::{column_compress_right, hstack, pinv, rank_tol, row_compress, vstack, Matrix};

/// Result of the iterated row/column compression.
///
/// U (m x m) and V (n x n) are orthogonal with U E V, U A V, U B in
/// staircase block form. Column blocks of V are ordered [xk, dropped
/// blocks from the last iteration back to the first]; row blocks are
/// [rows of E11, rows of A21, dropped row groups in the same order].
#[derive(Debug, Clone)]
pub struct StaircaseDecomposition {
    pub u: Matrix,
    pub v: Matrix,
    /// Iteration count: k - 1 compression rounds ran before the core
    /// passed the full-row-rank test.
    pub k: usize,
    /// [n_k, c_{k-1}, ..., c_1]; sums to n.
    pub col_block_sizes: Vec<usize>,
    /// [rank E11, rows of A21, d_{k-1}, ..., d_1]; sums to m.
    pub row_block_sizes: Vec<usize>,
    /// Column counts of the full-column-rank blocks A_1, ..., A_{k-1}
    /// in production order.
    pub ai_ranks: Vec<usize>,
    /// Row counts s_1, ..., s_{k-1} of the compressed [E B] parts, used by
    /// the rank bookkeeping of the solvability cross-check.
    pub stage_row_ranks: Vec<usize>,
    pub e11: Matrix,
    pub a11: Matrix,
    pub a21: Matrix,
    pub b11: Matrix,
    pub b21: Matrix,
}

impl StaircaseDecomposition {
    /// Dimension of the surviving dynamic coordinate block.
    pub fn n_k(&self) -> usize {
        self.col_block_sizes[0]
    }

    /// Row count of the final core [E11 B11; 0 B21].
    pub fn m_k(&self) -> usize {
        self.row_block_sizes[0] + self.row_block_sizes[1]
    }
}

/// Reduced system: the explicit core plus the restricted output and
/// target maps. C11 stacks the constraint rows over the measurement rows,
/// matching the extended output y1 = [-B21 u; y].
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub e11: Matrix,
    pub a11: Matrix,
    pub a21: Matrix,
    pub b11: Matrix,
    pub b21: Matrix,
    /// Leading n_k columns of C V.
    pub ck: Matrix,
    /// Leading n_k columns of K V.
    pub k11: Matrix,
    /// [A21; Ck].
    pub c11: Matrix,
}

impl ReducedSystem {
    pub fn n_k(&self) -> usize {
        self.e11.ncols()
    }

    /// Rows of the extended output (constraint rows + measurements).
    pub fn y1_dim(&self) -> usize {
        self.c11.nrows()
    }
}

/// Split of the target map against the reduced output:
/// K11 = coeff_s * S11 + coeff_c * C11, with S11 orthonormal rows inside
/// row(K11) meeting row(C11) only at zero. The observer estimates S11 x
/// dynamically; everything else is read off the outputs.
#[derive(Debug, Clone)]
pub struct FunctionalSplit {
    /// Observer order: rank [K11; C11] - rank C11.
    pub q: usize,
    /// q x n_k, orthonormal rows.
    pub s11: Matrix,
    /// r x q, full column rank.
    pub coeff_s: Matrix,
    /// r x (rows of C11).
    pub coeff_c: Matrix,
}

/// Iterated orthogonal compression of (E, A, B).
///
/// Each round row-compresses [E B]; rows annihilated there carry pure
/// state equations 0 = A~ x whose image is column-compressed to the right
/// edge, splitting off a full-column-rank block of forced-zero
/// coordinates. The loop stops when [E B] keeps full row rank, after
/// which one last row compression of E alone separates E11 from the
/// algebraic constraint rows.
pub fn staircase(
    e: &Matrix,
    a: &Matrix,
    b: &Matrix,
    tol: &TolerancePolicy,
) -> Result<StaircaseDecomposition> {
    tol.validate()?;
    let (m, n) = e.shape();
    if a.shape() != (m, n) || b.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "staircase needs E, A of equal shape and matching B rows; got E {}x{}, A {}x{}, B {}x{}",
            m, n, a.nrows(), a.ncols(), b.nrows(), b.ncols()
        )));
    }
    // Anchor every rank decision to the scale of the original data. The
    // shrunken blocks of later rounds can be pure roundoff residue, and a
    // threshold relative to their own largest singular value would promote
    // that noise to full rank and stop the iteration too early.
    let scale = e.norm().max(a.norm()).max(b.norm()).max(1.0);
    let rt = Some(
        tol.rank_tol_override
            .unwrap_or_else(|| crate::numkit::anchored_rank_tolerance(m, n + b.ncols(), scale)),
    );

    let mut u_acc = Matrix::identity(m, m);
    let mut v_acc = Matrix::identity(n, n);
    let mut e_cur = e.clone();
    let mut a_cur = a.clone();
    let mut b_cur = b.clone();
    let mut cur_rows = m;
    let mut cur_cols = n;
    let mut ai_ranks = Vec::new();
    let mut stage_row_ranks = Vec::new();
    let mut dropped = Vec::new();

    loop {
        let eb = hstack(&[&e_cur, &b_cur]);
        let (u1, s) = row_compress(&eb, rt)?;
        if s == cur_rows {
            break;
        }
        // Guard against a logic error; every round shrinks the row count.
        if dropped.len() > m + n {
            return Err(Error::NoConvergence("staircase failed to terminate".into()));
        }

        let e_t = &u1 * &e_cur;
        let b_t = &u1 * &b_cur;
        let a_t = &u1 * &a_cur;
        let a_tilde = a_t.rows(s, cur_rows - s).clone_owned();
        let (v1, c) = column_compress_right(&a_tilde, rt)?;

        let next_cols = cur_cols - c;
        let e_next = (e_t.rows(0, s) * &v1).columns(0, next_cols).clone_owned();
        let a_next = (a_t.rows(0, s) * &v1).columns(0, next_cols).clone_owned();
        let b_next = b_t.rows(0, s).clone_owned();

        // U := blkdiag(U1, I) U ; V := V blkdiag(V1, I). Only the active
        // leading block is touched.
        let top = &u1 * u_acc.rows(0, cur_rows);
        u_acc.rows_mut(0, cur_rows).copy_from(&top);
        let left = v_acc.columns(0, cur_cols) * &v1;
        v_acc.columns_mut(0, cur_cols).copy_from(&left);

        stage_row_ranks.push(s);
        ai_ranks.push(c);
        dropped.push(cur_rows - s);
        e_cur = e_next;
        a_cur = a_next;
        b_cur = b_next;
        cur_rows = s;
        cur_cols = next_cols;
    }

    let k = dropped.len() + 1;

    // Final split of the core rows by the rank of E alone.
    let (p_o, r_e) = row_compress(&e_cur, rt)?;
    let e_rot = &p_o * &e_cur;
    let a_rot = &p_o * &a_cur;
    let b_rot = &p_o * &b_cur;
    let e11 = e_rot.rows(0, r_e).clone_owned();
    let a11 = a_rot.rows(0, r_e).clone_owned();
    let a21 = a_rot.rows(r_e, cur_rows - r_e).clone_owned();
    let b11 = b_rot.rows(0, r_e).clone_owned();
    let b21 = b_rot.rows(r_e, cur_rows - r_e).clone_owned();
    let top = &p_o * u_acc.rows(0, cur_rows);
    u_acc.rows_mut(0, cur_rows).copy_from(&top);

    let mut col_block_sizes = vec![cur_cols];
    col_block_sizes.extend(ai_ranks.iter().rev());
    let mut row_block_sizes = vec![r_e, cur_rows - r_e];
    row_block_sizes.extend(dropped.iter().rev());

    Ok(StaircaseDecomposition {
        u: u_acc,
        v: v_acc,
        k,
        col_block_sizes,
        row_block_sizes,
        ai_ranks,
        stage_row_ranks,
        e11,
        a11,
        a21,
        b11,
        b21,
    })
}

/// Restricts the output and target maps of `sys` to the surviving
/// coordinates of `dec` and assembles the reduced system.
pub fn reduce(sys: &DescriptorSystem, dec: &StaircaseDecomposition) -> Result<ReducedSystem> {
    if dec.v.nrows() != sys.n() || dec.u.nrows() != sys.m() {
        return Err(Error::DimensionMismatch(
            "staircase decomposition does not match the system dimensions".into(),
        ));
    }
    let n_k = dec.n_k();
    let cv = &sys.c * &dec.v;
    let kv = &sys.k * &dec.v;
    let ck = cv.columns(0, n_k).clone_owned();
    let k11 = kv.columns(0, n_k).clone_owned();
    let c11 = vstack(&[&dec.a21, &ck]);
    Ok(ReducedSystem {
        e11: dec.e11.clone(),
        a11: dec.a11.clone(),
        a21: dec.a21.clone(),
        b11: dec.b11.clone(),
        b21: dec.b21.clone(),
        ck,
        k11,
        c11,
    })
}

/// Orthonormal basis of the column space (n x rank, from right singular
/// vectors of the transpose, i.e. the row space of `m` as columns).
fn row_space_basis(m: &Matrix, rt: Option<f64>) -> Result<(Matrix, usize)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok((Matrix::zeros(m.ncols(), 0), 0));
    }
    let svd = crate::numkit::thin_svd(m)?;
    let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
    let tol = rt
        .unwrap_or_else(|| crate::numkit::default_rank_tolerance(m.nrows(), m.ncols(), sigma_max));
    let rank = svd.sigma.iter().filter(|&&s| s > tol).count();
    Ok((svd.v.columns(0, rank).clone_owned(), rank))
}

/// Orthonormal basis of the orthogonal complement of col(m) inside R^dim,
/// derived from the left singular vectors below the rank threshold.
fn column_space_complement(m: &Matrix, dim: usize, rt: Option<f64>) -> Result<Matrix> {
    debug_assert_eq!(m.nrows(), dim);
    if m.ncols() == 0 {
        return Ok(Matrix::identity(dim, dim));
    }
    let (u, r) = row_compress(m, rt)?;
    // rows r.. of u annihilate m from the left, so they span the
    // orthogonal complement of col(m)
    Ok(u.rows(r, dim - r).transpose())
}

/// Splits the target map K11 into a dynamically estimated part S11 and an
/// output-readable part.
///
/// S11 spans the orthogonal complement of row(K11) ∩ row(C11) inside
/// row(K11); its q = rank [K11; C11] - rank C11 rows are orthonormal.
/// The coefficient maps recover K11 = coeff_s S11 + coeff_c C11 exactly up
/// to least-squares residuals at machine level.
pub fn split_functional(red: &ReducedSystem, tol: &TolerancePolicy) -> Result<FunctionalSplit> {
    tol.validate()?;
    let rt = tol.rank_tol_override;
    let n_k = red.n_k();
    let r = red.k11.nrows();

    let (vk, rk) = row_space_basis(&red.k11, rt)?;
    let (vc, rc) = row_space_basis(&red.c11, rt)?;
    let rank_kc = if red.k11.nrows() + red.c11.nrows() == 0 {
        0
    } else {
        rank_tol(&vstack(&[&red.k11, &red.c11]), rt)?.rank
    };
    let q = rank_kc - rc;

    let s_space = if q == rk {
        // row(K11) meets row(C11) only at zero; keep the whole row space.
        vk.clone()
    } else {
        // Intersection directions: null space of [Vk  -Vc] pairs a-parts
        // with b-parts; Vk * a runs over the intersection. The null space
        // is the left annihilator of the transpose.
        let stacked = hstack(&[&vk, &(-&vc)]);
        let (u_n, rank_j) = row_compress(&stacked.transpose(), rt)?;
        let null_dim = rk + rc - rank_j;
        let aw = u_n
            .rows(rank_j, null_dim)
            .transpose()
            .rows(0, rk)
            .clone_owned();
        // Complement of the intersection coordinates inside R^rk, mapped
        // back through the orthonormal row-space basis.
        let b = column_space_complement(&aw, rk, rt)?;
        debug_assert_eq!(b.ncols(), q);
        &vk * b
    };

    let s11 = s_space.transpose();
    let coeff_s = &red.k11 * &s_space;
    let coeff_c = if red.c11.nrows() == 0 {
        Matrix::zeros(r, 0)
    } else {
        (&red.k11 - &coeff_s * &s11) * pinv(&red.c11, rt)?
    };
    debug_assert_eq!(s11.shape(), (q, n_k));
    Ok(FunctionalSplit {
        q,
        s11,
        coeff_s,
        coeff_c,
    })
}
