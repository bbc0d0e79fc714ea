//! Observer synthesis.
//!
//! All admissible observer parameters come from one linear system: the row
//! vector of unknowns [T Mbar Q -N] times the reduced base matrix must
//! reproduce [S11 0]. Its general solution is the pseudoinverse particular
//! solution minus Z times the left annihilator, with Z free. The free term
//! only enters N through N = N1 - Z*N2, so choosing Z is a classic output
//! injection problem: stabilize (N1, N2) or place its spectrum.
//!
//! The returned realization carries the intermediate parameters and a
//! Lyapunov certificate so a later run can re-verify the algebra without
//! re-deriving it.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::existence::{check_h1_reduced, check_h2_via_detectability, compute_n1_n2, gamma1};
use crate::model::{DescriptorSystem, TolerancePolicy};
use crate::numkit::{
    eigenvalues, hstack, observability_matrix, pinv, rank_tol, thin_svd, thin_svd_complex,
    to_complex, CMatrix, Matrix, Vector,
};
use crate::reduction::{
    reduce, split_functional, staircase, FunctionalSplit, ReducedSystem, StaircaseDecomposition,
};

/// Solution of the parameter equation for one choice of the free term Z.
#[derive(Debug, Clone)]
pub struct SolvedParameters {
    pub t: Matrix,
    pub mbar: Matrix,
    pub qmat: Matrix,
    pub n: Matrix,
    pub z: Matrix,
}

/// Solves [T Mbar Q -N] * Gamma1 = [S11 0] for the given free term Z
/// (q rows, one column per row of the reduced base matrix).
pub fn solve_parameters(
    red: &ReducedSystem,
    split: &FunctionalSplit,
    z: &Matrix,
    tol: &TolerancePolicy,
) -> Result<SolvedParameters> {
    tol.validate()?;
    let g = gamma1(red, split);
    let rows = g.nrows();
    let q = split.q;
    if z.nrows() != q || z.ncols() != rows {
        return Err(Error::DimensionMismatch(format!(
            "free term must be {}x{}, got {}x{}",
            q,
            rows,
            z.nrows(),
            z.ncols()
        )));
    }
    let gp = pinv(&g, tol.rank_tol_override)?;
    let n_k = red.n_k();
    let rhs = hstack(&[&split.s11, &Matrix::zeros(q, n_k)]);
    let x = &rhs * &gp - z * (Matrix::identity(rows, rows) - &g * &gp);

    let r_e = red.e11.nrows();
    let cc = red.c11.nrows();
    let t = x.columns(0, r_e).into_owned();
    let mbar = x.columns(r_e, cc).into_owned();
    let qmat = x.columns(r_e + cc, cc).into_owned();
    let n = -x.columns(r_e + 2 * cc, q).into_owned();
    Ok(SolvedParameters {
        t,
        mbar,
        qmat,
        n,
        z: z.clone(),
    })
}

fn max_real_part(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().fold(f64::NEG_INFINITY, |a, l| a.max(l.re))
}

/// Deterministic pseudo-random direction pool for generating vectors.
fn pseudo_vectors(dim: usize, count: usize) -> Vec<Vector> {
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut next = move || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let v = state.wrapping_mul(0x2545_f491_4f6c_dd1d);
        (v >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    (0..count)
        .map(|_| Vector::from_fn(dim, |_, _| next()))
        .collect()
}

fn cluster_eigenvalues(mut eigs: Vec<Complex<f64>>) -> Vec<(Complex<f64>, usize)> {
    eigs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let mut clusters: Vec<(Complex<f64>, usize)> = Vec::new();
    for lam in eigs {
        match clusters.last_mut() {
            Some((center, count)) if (*center - lam).norm() < 1e-7 * (1.0 + lam.norm()) => {
                // running mean keeps the center representative
                *center = (*center * *count as f64 + lam) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => clusters.push((lam, 1)),
        }
    }
    clusters
}

/// Stabilizing solution of the filter Riccati equation
/// (N1 + m I) P + P (N1 + m I)^T - P N2^T N2 P + I = 0
/// via the stable invariant subspace of the associated Hamiltonian.
fn solve_filter_care(n1: &Matrix, n2: &Matrix, margin: f64) -> Result<Matrix> {
    let q = n1.nrows();
    let a = n1.transpose() + Matrix::identity(q, q) * margin;
    let bbt = n2.transpose() * n2;
    let mut h = Matrix::zeros(2 * q, 2 * q);
    h.view_mut((0, 0), (q, q)).copy_from(&a);
    h.view_mut((0, q), (q, q)).copy_from(&(-&bbt));
    h.view_mut((q, 0), (q, q))
        .copy_from(&(-Matrix::identity(q, q)));
    h.view_mut((q, q), (q, q)).copy_from(&(-a.transpose()));

    let eigs = eigenvalues(&h)?;
    let stable: Vec<Complex<f64>> = eigs.into_iter().filter(|l| l.re < 0.0).collect();
    if stable.len() != q {
        return Err(Error::NoConvergence(format!(
            "Hamiltonian has {} stable eigenvalues, expected {}",
            stable.len(),
            q
        )));
    }

    // eigenvector basis of the stable subspace, cluster by cluster
    let hc = to_complex(&h);
    let mut basis = CMatrix::zeros(2 * q, q);
    let mut at = 0;
    for (center, count) in cluster_eigenvalues(stable) {
        let mut shifted = hc.clone();
        for i in 0..2 * q {
            shifted[(i, i)] -= center;
        }
        let svd = thin_svd_complex(&shifted)?;
        let total = svd.sigma.len();
        for j in 0..count {
            let col = svd.v.column(total - 1 - j).clone_owned();
            basis.view_mut((0, at), (2 * q, 1)).copy_from(&col);
            at += 1;
        }
    }

    // real basis of the (conjugation-closed) subspace
    let mut realified = Matrix::zeros(2 * q, 2 * q);
    for j in 0..q {
        for i in 0..2 * q {
            realified[(i, j)] = basis[(i, j)].re;
            realified[(i, q + j)] = basis[(i, j)].im;
        }
    }
    let svd = thin_svd(&realified)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let rank = svd
        .sigma
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(1.0))
        .count();
    if rank != q {
        return Err(Error::NoConvergence(format!(
            "stable subspace realification has rank {rank}, expected {q}"
        )));
    }
    let w = svd.u.columns(0, q).into_owned();
    let u1 = w.rows(0, q).into_owned();
    let u2 = w.rows(q, q).into_owned();
    let xt =
        u1.transpose().lu().solve(&u2.transpose()).ok_or_else(|| {
            Error::NoConvergence("stable subspace basis is not graph-like".into())
        })?;
    let p = xt.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

/// Fallback: integrate the differential Riccati equation from zero until
/// stationary. Slower but immune to defective Hamiltonian eigenstructure.
fn riccati_ode_fallback(n1: &Matrix, n2: &Matrix, margin: f64) -> Result<Matrix> {
    let q = n1.nrows();
    let a = n1 + Matrix::identity(q, q) * margin;
    let ctc = n2.transpose() * n2;
    let rhs = |p: &Matrix| &a * p + p * a.transpose() - p * &ctc * p + Matrix::identity(q, q);
    let scale = a.norm() + ctc.norm() + 1.0;
    let dt = (0.02_f64).min(0.2 / scale);
    let mut p = Matrix::zeros(q, q);
    for _ in 0..2_000_000u32 {
        let k1 = rhs(&p);
        if k1.norm() <= 1e-12 * (1.0 + p.norm()) {
            return Ok((&p + p.transpose()) * 0.5);
        }
        let k2 = rhs(&(&p + &k1 * (dt / 2.0)));
        let k3 = rhs(&(&p + &k2 * (dt / 2.0)));
        let k4 = rhs(&(&p + &k3 * dt));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Err(Error::NoConvergence(
        "Riccati flow did not become stationary".into(),
    ))
}

/// Chooses Z so that N1 - Z*N2 is Hurwitz with the policy's margin.
/// Returns Z = 0 when N1 already clears the margin; otherwise solves a
/// filter Riccati equation and uses Z = P N2^T.
pub fn stabilize(n1: &Matrix, n2: &Matrix, tol: &TolerancePolicy) -> Result<Matrix> {
    tol.validate()?;
    let q = n1.nrows();
    let rows = n2.nrows();
    if n1.ncols() != q || n2.ncols() != q {
        return Err(Error::DimensionMismatch(format!(
            "need square N1 and matching N2; got {}x{} and {}x{}",
            n1.nrows(),
            n1.ncols(),
            rows,
            n2.ncols()
        )));
    }
    let margin = tol.stability_margin;
    if q == 0 {
        return Ok(Matrix::zeros(0, rows));
    }
    if max_real_part(&eigenvalues(n1)?) < -margin {
        return Ok(Matrix::zeros(q, rows));
    }
    let (detectable, witness) = check_h2_via_detectability(n1, n2, tol)?;
    if !detectable {
        return Err(Error::NotDetectable {
            witness: witness.expect("failure carries a witness"),
        });
    }

    let accept = |p: &Matrix| -> Result<Option<Matrix>> {
        let z = p * n2.transpose();
        let closed = n1 - &z * n2;
        if max_real_part(&eigenvalues(&closed)?) < -margin {
            Ok(Some(z))
        } else {
            Ok(None)
        }
    };
    if let Ok(p) = solve_filter_care(n1, n2, margin) {
        if let Some(z) = accept(&p)? {
            return Ok(z);
        }
    }
    let p = riccati_ode_fallback(n1, n2, margin)?;
    match accept(&p)? {
        Some(z) => Ok(z),
        None => Err(Error::Unstable {
            max_re: max_real_part(&eigenvalues(&(n1 - &(&p * n2.transpose()) * n2))?),
        }),
    }
}

/// Monic real polynomial coefficients (ascending, degree q) with the given
/// roots; errors unless complex roots pair up into conjugates.
fn real_poly_from_roots(roots: &[Complex<f64>]) -> Result<Vec<f64>> {
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= r * c;
        }
        coeffs = next;
    }
    let scale = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    let mut out = Vec::with_capacity(coeffs.len());
    for c in &coeffs {
        if c.im.abs() > 1e-9 * (1.0 + scale) {
            return Err(Error::PlacementFailed(
                "complex poles must come in conjugate pairs".into(),
            ));
        }
        out.push(c.re);
    }
    Ok(out)
}

fn sort_spectrum(mut eigs: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
    eigs.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    eigs
}

/// Removes each entry of `fixed` from `target` (within `tol` in the
/// complex plane); None when some fixed value has no partner.
fn subtract_multiset(
    target: &[Complex<f64>],
    fixed: &[Complex<f64>],
    tol: f64,
) -> Option<Vec<Complex<f64>>> {
    let mut remaining: Vec<Complex<f64>> = target.to_vec();
    for f in fixed {
        let idx = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - f).norm().partial_cmp(&(*b - f).norm()).unwrap())
            .map(|(i, _)| i)?;
        if (remaining[idx] - f).norm() > tol {
            return None;
        }
        remaining.remove(idx);
    }
    Some(remaining)
}

/// Orthonormal basis of the controllable subspace of (a, b) and its
/// orthogonal complement, by compressing the reachability stack. The rank
/// threshold is anchored to the scale of the pair, not of the stack, so a
/// b that is pure numerical noise next to a yields an empty basis.
fn controllability_basis(a: &Matrix, b: &Matrix, rt: Option<f64>) -> Result<(Matrix, Matrix)> {
    let q = a.nrows();
    let mut blocks = Vec::with_capacity(q);
    let mut cur = b.clone();
    for _ in 0..q {
        blocks.push(cur.clone());
        cur = a * &cur;
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let reach = hstack(&refs);
    let scale = a.norm().max(b.norm()).max(1.0);
    let rt = rt.or_else(|| {
        Some(crate::numkit::anchored_rank_tolerance(
            reach.nrows(),
            reach.ncols(),
            scale,
        ))
    });
    // U*reach = [X; 0] with X full row rank, so the leading rank columns
    // of U^T span the range of the stack
    let (u, rank) = crate::numkit::row_compress(&reach, rt)?;
    let u_t = u.transpose();
    let basis = u_t.columns(0, rank).into_owned();
    let complement = u_t.columns(rank, q - rank).into_owned();
    Ok((basis, complement))
}

/// Chooses Z so that N1 - Z*N2 has exactly the requested spectrum. Modes
/// outside the controllable subspace of the transposed pair cannot move;
/// the request must contain their eigenvalues, and the rest are placed by
/// single-input design through a generating vector. Poles must be stable
/// and conjugate-closed, one per observer state.
pub fn place_poles(
    n1: &Matrix,
    n2: &Matrix,
    poles: &[Complex<f64>],
    tol: &TolerancePolicy,
) -> Result<Matrix> {
    tol.validate()?;
    let q = n1.nrows();
    let rows = n2.nrows();
    if n1.ncols() != q || n2.ncols() != q {
        return Err(Error::DimensionMismatch(format!(
            "need square N1 and matching N2; got {}x{} and {}x{}",
            n1.nrows(),
            n1.ncols(),
            rows,
            n2.ncols()
        )));
    }
    if poles.len() != q {
        return Err(Error::PlacementFailed(format!(
            "observer order is {q}, got {} poles",
            poles.len()
        )));
    }
    if let Some(bad) = poles.iter().find(|p| p.re >= 0.0) {
        return Err(Error::PlacementFailed(format!(
            "pole {bad} is not in the open left half plane"
        )));
    }
    if q == 0 {
        return Ok(Matrix::zeros(0, rows));
    }

    let a = n1.transpose();
    let b = n2.transpose();
    let rt = tol.rank_tol_override;
    let pole_scale = poles.iter().fold(1.0_f64, |m, p| m.max(p.norm()));
    let match_tol = 1e-6 * (1.0 + pole_scale);
    let target = sort_spectrum(poles.to_vec());

    let validate = |z: &Matrix| -> Result<Option<Matrix>> {
        let achieved = sort_spectrum(eigenvalues(&(n1 - z * n2))?);
        let ok = achieved
            .iter()
            .zip(&target)
            .all(|(a, t)| (a - t).norm() <= match_tol);
        Ok(if ok { Some(z.clone()) } else { None })
    };

    // the request may already be satisfied without feedback
    if let Some(z) = validate(&Matrix::zeros(q, rows))? {
        return Ok(z);
    }

    let (u_c, u_u) = controllability_basis(&a, &b, rt)?;
    let nc = u_c.ncols();
    let a_uu = u_u.transpose() * &a * &u_u;
    let fixed = eigenvalues(&a_uu)?;
    let Some(movable) = subtract_multiset(&target, &fixed, match_tol) else {
        return Err(Error::PlacementFailed(format!(
            "{} eigenvalue(s) cannot be moved by any gain; the request must \
             include the fixed spectrum {:?}",
            fixed.len(),
            fixed
        )));
    };

    if nc == 0 {
        let z = Matrix::zeros(q, rows);
        return validate(&z)?.ok_or_else(|| {
            Error::PlacementFailed("spectrum is entirely fixed and does not match".into())
        });
    }

    let coeffs = real_poly_from_roots(&movable)?;
    let a_cc = u_c.transpose() * &a * &u_c;
    let b_c = u_c.transpose() * &b;

    // chi(A_cc) by Horner on the matrix
    let mut chi = Matrix::identity(nc, nc);
    for j in (0..nc).rev() {
        chi = &chi * &a_cc + Matrix::identity(nc, nc) * coeffs[j];
    }

    let mut candidates: Vec<Vector> = (0..rows)
        .map(|i| {
            let mut e = Vector::zeros(rows);
            e[i] = 1.0;
            e
        })
        .collect();
    candidates.extend(pseudo_vectors(rows, 8));

    for g in &candidates {
        let b_g = &b_c * g;
        if b_g.norm() <= 1e-14 {
            continue;
        }
        let mut ctrb = Matrix::zeros(nc, nc);
        let mut col = b_g.clone();
        for j in 0..nc {
            ctrb.view_mut((0, j), (nc, 1)).copy_from(&col);
            col = &a_cc * &col;
        }
        if rank_tol(&ctrb, rt)?.rank < nc {
            continue;
        }
        // k = e_nc^T C^{-1} chi(A_cc), via C^T x = e_nc
        let mut e_nc = Vector::zeros(nc);
        e_nc[nc - 1] = 1.0;
        let Some(x) = ctrb.transpose().lu().solve(&e_nc) else {
            continue;
        };
        let k_c = x.transpose() * &chi;
        // gain acts only on controllable coordinates: Z = U_c k_c^T g^T
        let z = &u_c * k_c.transpose() * g.transpose();
        if let Some(z) = validate(&z)? {
            return Ok(z);
        }
    }
    Err(Error::PlacementFailed(
        "no generating vector reproduced the requested spectrum".into(),
    ))
}

/// Lyapunov certificate: P with N^T P + P N = -I, via the Kronecker-vectorized
/// linear system.
fn lyapunov_certificate(n: &Matrix) -> Result<Matrix> {
    let q = n.nrows();
    if q == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let nt = n.transpose();
    let id = Matrix::identity(q, q);
    let lhs = id.kronecker(&nt) + nt.kronecker(&id);
    let rhs = Vector::from_fn(q * q, |i, _| if i % q == i / q { -1.0 } else { 0.0 });
    let vec_p = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoConvergence("Lyapunov system is singular".into()))?;
    let p = Matrix::from_fn(q, q, |i, j| vec_p[j * q + i]);
    let p = (&p + p.transpose()) * 0.5;
    let residual = (n.transpose() * &p + &p * n + Matrix::identity(q, q)).norm();
    if residual > 1e-6 * (q as f64) {
        return Err(Error::NoConvergence(format!(
            "Lyapunov residual {residual:.3e} too large"
        )));
    }
    Ok(p)
}

/// Intermediate parameters and proofs kept alongside the realization.
#[derive(Debug, Clone)]
pub struct Certificates {
    pub t: Matrix,
    pub mbar: Matrix,
    pub qmat: Matrix,
    pub l: Matrix,
    pub z: Matrix,
    /// Lyapunov certificate: N^T P + P N = -I, P symmetric positive definite.
    pub p: Matrix,
    pub residual_a: f64,
    pub residual_b: f64,
    pub eigs_n: Vec<Complex<f64>>,
}

/// The observer w' = N w + H [u; y], zhat = R w + M [u; y].
#[derive(Debug, Clone)]
pub struct ObserverRealization {
    /// Observer order (rows of N).
    pub q: usize,
    pub n: Matrix,
    pub h: Matrix,
    pub r: Matrix,
    pub m: Matrix,
    pub certificates: Certificates,
}

impl ObserverRealization {
    /// Dimension of the estimated functional.
    pub fn functional_dim(&self) -> usize {
        self.r.nrows()
    }

    /// Expected length of the stacked driving signal [u; y].
    pub fn input_dim(&self) -> usize {
        self.m.ncols()
    }
}

/// Builds the realization from solved parameters, enforcing the residual
/// bounds and strict stability, and attaching the Lyapunov certificate.
pub fn assemble(
    red: &ReducedSystem,
    split: &FunctionalSplit,
    params: &SolvedParameters,
    tol: &TolerancePolicy,
) -> Result<ObserverRealization> {
    tol.validate()?;
    let q = split.q;
    let m2 = red.a21.nrows();
    let p_dim = red.ck.nrows();
    let s_scale = split.s11.norm() + 1.0;

    let residual_b = (&params.t * &red.e11 + &params.mbar * &red.c11 - &split.s11).norm() / s_scale;
    let residual_a =
        (&params.t * &red.a11 + &params.qmat * &red.c11 - &params.n * &split.s11).norm() / s_scale;
    if residual_a > tol.residual_tol {
        return Err(Error::ResidualTooLarge {
            which: "state coupling",
            value: residual_a,
            tol: tol.residual_tol,
        });
    }
    if residual_b > tol.residual_tol {
        return Err(Error::ResidualTooLarge {
            which: "descriptor coupling",
            value: residual_b,
            tol: tol.residual_tol,
        });
    }

    let eigs_n = eigenvalues(&params.n)?;
    if q > 0 {
        let max_re = max_real_part(&eigs_n);
        if max_re >= 0.0 {
            return Err(Error::Unstable { max_re });
        }
    }

    let l = &params.n * &params.mbar - &params.qmat;
    let l_a = l.columns(0, m2).into_owned();
    let l_b = l.columns(m2, p_dim).into_owned();
    let mbar_a = params.mbar.columns(0, m2).into_owned();
    let mbar_b = params.mbar.columns(m2, p_dim).into_owned();
    let c_a = split.coeff_c.columns(0, m2).into_owned();
    let c_b = split.coeff_c.columns(m2, p_dim).into_owned();

    let h = hstack(&[&(&params.t * &red.b11 - &l_a * &red.b21), &l_b]);
    let m = hstack(&[
        &(-(&split.coeff_s * &mbar_a + &c_a) * &red.b21),
        &(&split.coeff_s * &mbar_b + &c_b),
    ]);
    let r = split.coeff_s.clone();
    let p = lyapunov_certificate(&params.n)?;

    Ok(ObserverRealization {
        q,
        n: params.n.clone(),
        h,
        r,
        m,
        certificates: Certificates {
            t: params.t.clone(),
            mbar: params.mbar.clone(),
            qmat: params.qmat.clone(),
            l,
            z: params.z.clone(),
            p,
            residual_a,
            residual_b,
            eigs_n,
        },
    })
}

/// Everything produced on the way to a realization; callers that simulate
/// need the reduced system and split as well.
#[derive(Debug, Clone)]
pub struct SynthesisDetails {
    pub decomposition: StaircaseDecomposition,
    pub reduced: ReducedSystem,
    pub split: FunctionalSplit,
    pub n1: Matrix,
    pub n2: Matrix,
    pub observer: ObserverRealization,
}

/// Full pipeline: structure, solvability, free-term choice, assembly.
/// With `poles` the spectrum of N is placed there; otherwise Z comes from
/// [`stabilize`].
pub fn synthesize_with_details(
    sys: &DescriptorSystem,
    tol: &TolerancePolicy,
    poles: Option<&[Complex<f64>]>,
) -> Result<SynthesisDetails> {
    tol.validate()?;
    let dec = staircase(&sys.e, &sys.a, &sys.b, tol)?;
    let red = reduce(sys, &dec)?;
    let split = split_functional(&red, tol)?;
    if !check_h1_reduced(&red, &split, tol)? {
        let g = rank_tol(
            &crate::existence::gamma1(&red, &split),
            tol.rank_tol_override,
        )?
        .rank;
        let p = rank_tol(&crate::existence::psi1(&red, &split), tol.rank_tol_override)?.rank;
        return Err(Error::H1Failed {
            rank_psi1: p,
            rank_gamma1: g,
        });
    }
    let (n1, n2) = compute_n1_n2(&red, &split, tol)?;
    let (detectable, witness) = check_h2_via_detectability(&n1, &n2, tol)?;

    let z = match poles {
        Some(poles) => place_poles(&n1, &n2, poles, tol)?,
        None => {
            if !detectable {
                return Err(Error::H2Failed {
                    witness: witness.expect("witness on failure"),
                });
            }
            stabilize(&n1, &n2, tol)?
        }
    };
    let params = solve_parameters(&red, &split, &z, tol)?;
    let observer = assemble(&red, &split, &params, tol)?;
    Ok(SynthesisDetails {
        decomposition: dec,
        reduced: red,
        split,
        n1,
        n2,
        observer,
    })
}

/// See [`synthesize_with_details`]; this keeps only the realization.
pub fn synthesize(
    sys: &DescriptorSystem,
    tol: &TolerancePolicy,
    poles: Option<&[Complex<f64>]>,
) -> Result<ObserverRealization> {
    synthesize_with_details(sys, tol, poles).map(|d| d.observer)
}

/// Checks that the functional read-out only uses decayed modes:
/// rank of the observability stack of (N, R) must equal rank of R.
pub fn verify_condition_b_certificate(
    n: &Matrix,
    r: &Matrix,
    tol: &TolerancePolicy,
) -> Result<bool> {
    tol.validate()?;
    if n.nrows() == 0 {
        return Ok(true);
    }
    let obsv = observability_matrix(n, r)?;
    let rank_obsv = rank_tol(&obsv, tol.rank_tol_override)?.rank;
    let rank_r = rank_tol(r, tol.rank_tol_override)?.rank;
    Ok(rank_obsv == rank_r)
}

/// Independent re-check of a realization against its system.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub dims_ok: bool,
    pub residual_a: f64,
    pub residual_b: f64,
    pub residuals_ok: bool,
    pub stable: bool,
    pub max_re: f64,
    pub lyapunov_ok: bool,
    pub reconstruction_ok: bool,
    pub condition_b_ok: bool,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.dims_ok
            && self.residuals_ok
            && self.stable
            && self.lyapunov_ok
            && self.reconstruction_ok
            && self.condition_b_ok
    }
}

/// Re-derives the reduced system and checks the stored realization against
/// it: dimensions, coupling residuals, stability, the Lyapunov certificate,
/// the read-out reconstruction, and the decayed-modes rank condition.
pub fn verify_observer(
    sys: &DescriptorSystem,
    obs: &ObserverRealization,
    tol: &TolerancePolicy,
) -> Result<VerifyReport> {
    tol.validate()?;
    let dec = staircase(&sys.e, &sys.a, &sys.b, tol)?;
    let red = reduce(sys, &dec)?;
    let split = split_functional(&red, tol)?;

    let io_dim = sys.l() + sys.p();
    let dims_ok = obs.q == obs.n.nrows()
        && obs.n.is_square()
        && obs.h.nrows() == obs.q
        && obs.h.ncols() == io_dim
        && obs.r.nrows() == sys.r()
        && obs.r.ncols() == obs.q
        && obs.m.nrows() == sys.r()
        && obs.m.ncols() == io_dim
        && split.q == obs.q;
    if !dims_ok {
        return Ok(VerifyReport {
            dims_ok,
            residual_a: f64::INFINITY,
            residual_b: f64::INFINITY,
            residuals_ok: false,
            stable: false,
            max_re: f64::INFINITY,
            lyapunov_ok: false,
            reconstruction_ok: false,
            condition_b_ok: false,
        });
    }

    let cert = &obs.certificates;
    let s_scale = split.s11.norm() + 1.0;
    let residual_b = (&cert.t * &red.e11 + &cert.mbar * &red.c11 - &split.s11).norm() / s_scale;
    let residual_a =
        (&cert.t * &red.a11 + &cert.qmat * &red.c11 - &obs.n * &split.s11).norm() / s_scale;
    let residuals_ok = residual_a <= tol.residual_tol && residual_b <= tol.residual_tol;

    let eigs = eigenvalues(&obs.n)?;
    let max_re = if obs.q == 0 {
        f64::NEG_INFINITY
    } else {
        max_real_part(&eigs)
    };
    let stable = obs.q == 0 || max_re < 0.0;

    let lyapunov_ok = if obs.q == 0 {
        cert.p.nrows() == 0
    } else {
        let res = (obs.n.transpose() * &cert.p + &cert.p * &obs.n + Matrix::identity(obs.q, obs.q))
            .norm();
        res <= 1e-6 * (obs.q as f64) && cert.p.clone().cholesky().is_some()
    };

    // rebuild H, M, R from the certificates and compare
    let m2 = red.a21.nrows();
    let p_dim = red.ck.nrows();
    let l = &obs.n * &cert.mbar - &cert.qmat;
    let l_a = l.columns(0, m2).into_owned();
    let l_b = l.columns(m2, p_dim).into_owned();
    let mbar_a = cert.mbar.columns(0, m2).into_owned();
    let mbar_b = cert.mbar.columns(m2, p_dim).into_owned();
    let c_a = split.coeff_c.columns(0, m2).into_owned();
    let c_b = split.coeff_c.columns(m2, p_dim).into_owned();
    let h_re = hstack(&[&(&cert.t * &red.b11 - &l_a * &red.b21), &l_b]);
    let m_re = hstack(&[
        &(-(&split.coeff_s * &mbar_a + &c_a) * &red.b21),
        &(&split.coeff_s * &mbar_b + &c_b),
    ]);
    let rel = |x: &Matrix, y: &Matrix| (x - y).norm() / (1.0 + y.norm());
    let reconstruction_ok = rel(&h_re, &obs.h) <= 1e-8
        && rel(&m_re, &obs.m) <= 1e-8
        && rel(&split.coeff_s, &obs.r) <= 1e-8
        && rel(&(&l - &cert.l), &Matrix::zeros(l.nrows(), l.ncols())) <= 1e-8;

    let condition_b_ok = verify_condition_b_certificate(&obs.n, &obs.r, tol)?;

    Ok(VerifyReport {
        dims_ok,
        residual_a,
        residual_b,
        residuals_ok,
        stable,
        max_re,
        lyapunov_ok,
        reconstruction_ok,
        condition_b_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn static_demo_system() -> DescriptorSystem {
        DescriptorSystem::new(
            None,
            Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap()
    }

    fn first_order_demo_system() -> DescriptorSystem {
        DescriptorSystem::new(
            None,
            Matrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
            ),
            Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0, -1.0, 1.0])),
            Matrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 1.0]),
        )
        .unwrap()
    }

    fn pipeline(sys: &DescriptorSystem) -> (ReducedSystem, FunctionalSplit) {
        let dec = staircase(&sys.e, &sys.a, &sys.b, &tol()).unwrap();
        let red = reduce(sys, &dec).unwrap();
        let split = split_functional(&red, &tol()).unwrap();
        (red, split)
    }

    #[test]
    fn parameter_solution_satisfies_constraint_for_any_free_term() {
        let sys = first_order_demo_system();
        let (red, split) = pipeline(&sys);
        let g = gamma1(&red, &split);
        let (n1, n2) = compute_n1_n2(&red, &split, &tol()).unwrap();
        for seed_col in pseudo_vectors(g.nrows(), 5) {
            let z = Matrix::from_fn(split.q, g.nrows(), |_, j| seed_col[j]);
            let params = solve_parameters(&red, &split, &z, &tol()).unwrap();
            let x = hstack(&[&params.t, &params.mbar, &params.qmat, &(-&params.n)]);
            let rhs = hstack(&[&split.s11, &Matrix::zeros(split.q, red.n_k())]);
            assert!((&x * &g - &rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
            let expected_n = &n1 - &z * &n2;
            assert!((&params.n - expected_n).norm() <= 1e-9 * (1.0 + n1.norm()));
        }
    }

    #[test]
    fn scalar_riccati_matches_closed_form() {
        // P solves 2P - P^2 + 1 = 0 with P > 0: P = 1 + sqrt(2), and the
        // corrected dynamics 1 - P = -sqrt(2).
        let n1 = Matrix::from_row_slice(1, 1, &[1.0]);
        let n2 = Matrix::from_row_slice(1, 1, &[1.0]);
        let z = stabilize(&n1, &n2, &tol()).unwrap();
        assert_relative_eq!(z[(0, 0)], 1.0 + 2.0_f64.sqrt(), max_relative = 1e-9);
        let closed = &n1 - &z * &n2;
        assert_relative_eq!(closed[(0, 0)], -2.0_f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn stabilize_returns_zero_when_already_stable() {
        let n1 = Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let n2 = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let z = stabilize(&n1, &n2, &tol()).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn stabilize_respects_margin() {
        let mut t = tol();
        t.stability_margin = 0.5;
        let n1 = Matrix::from_row_slice(1, 1, &[0.2]);
        let n2 = Matrix::from_row_slice(1, 1, &[1.0]);
        let z = stabilize(&n1, &n2, &t).unwrap();
        let closed = &n1 - &z * &n2;
        assert!(closed[(0, 0)] < -0.5);
    }

    #[test]
    fn stabilize_rejects_undetectable_pairs() {
        let n1 = Matrix::from_row_slice(1, 1, &[1.0]);
        let n2 = Matrix::from_row_slice(1, 1, &[0.0]);
        match stabilize(&n1, &n2, &tol()) {
            Err(Error::NotDetectable { witness }) => {
                assert!((witness - Complex::new(1.0, 0.0)).norm() < 1e-9);
            }
            other => panic!("expected NotDetectable, got {other:?}"),
        }
    }

    #[test]
    fn stabilize_random_detectable_pairs() {
        let dirs = pseudo_vectors(4 * 4 + 2 * 4, 12);
        for seed in dirs {
            let n1 = Matrix::from_fn(4, 4, |i, j| 2.0 * seed[i * 4 + j]);
            let n2 = Matrix::from_fn(2, 4, |i, j| seed[16 + i * 4 + j]);
            let (detectable, _) = check_h2_via_detectability(&n1, &n2, &tol()).unwrap();
            if !detectable {
                continue;
            }
            let z = stabilize(&n1, &n2, &tol()).unwrap();
            let closed = &n1 - &z * &n2;
            assert!(max_real_part(&eigenvalues(&closed).unwrap()) < 0.0);
        }
    }

    #[test]
    fn placement_hits_real_and_complex_spectra() {
        let n1 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let n2 = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);

        let poles = [Complex::new(-1.0, 0.0), Complex::new(-2.0, 0.0)];
        let z = place_poles(&n1, &n2, &poles, &tol()).unwrap();
        let mut eigs = eigenvalues(&(&n1 - &z * &n2)).unwrap();
        eigs.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((eigs[0] - Complex::new(-2.0, 0.0)).norm() < 1e-8);
        assert!((eigs[1] - Complex::new(-1.0, 0.0)).norm() < 1e-8);

        let poles = [Complex::new(-1.0, 1.0), Complex::new(-1.0, -1.0)];
        let z = place_poles(&n1, &n2, &poles, &tol()).unwrap();
        let eigs = eigenvalues(&(&n1 - &z * &n2)).unwrap();
        for e in &eigs {
            assert_relative_eq!(e.re, -1.0, max_relative = 1e-8);
            assert_relative_eq!(e.im.abs(), 1.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn placement_rejects_bad_requests() {
        let n1 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let n2 = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            place_poles(&n1, &n2, &[Complex::new(-1.0, 0.0)], &tol()),
            Err(Error::PlacementFailed(_))
        ));
        assert!(matches!(
            place_poles(
                &n1,
                &n2,
                &[Complex::new(-1.0, 1.0), Complex::new(-2.0, 1.0)],
                &tol()
            ),
            Err(Error::PlacementFailed(_))
        ));
        assert!(matches!(
            place_poles(
                &n1,
                &n2,
                &[Complex::new(1.0, 0.0), Complex::new(-2.0, 0.0)],
                &tol()
            ),
            Err(Error::PlacementFailed(_))
        ));
    }

    #[test]
    fn lyapunov_certificate_is_definite_and_exact() {
        let n = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let p = lyapunov_certificate(&n).unwrap();
        let res = (n.transpose() * &p + &p * &n + Matrix::identity(2, 2)).norm();
        assert!(res <= 1e-10);
        assert!(p.clone().cholesky().is_some());
    }

    #[test]
    fn static_demo_realization_reads_off_measurement() {
        let obs = synthesize(&static_demo_system(), &tol(), None).unwrap();
        assert_eq!(obs.q, 0);
        assert_eq!(obs.n.shape(), (0, 0));
        assert_eq!(obs.r.shape(), (2, 0));
        // zhat = [-y; 0] regardless of u
        let expected = Matrix::from_row_slice(2, 3, &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        assert!((&obs.m - &expected).norm() <= 1e-9);
    }

    #[test]
    fn first_order_demo_with_placed_pole() {
        let sys = first_order_demo_system();
        let details =
            synthesize_with_details(&sys, &tol(), Some(&[Complex::new(-1.0, 0.0)])).unwrap();
        let obs = &details.observer;
        assert_eq!(obs.q, 1);
        assert_relative_eq!(obs.n[(0, 0)], -1.0, max_relative = 1e-8);
        assert!(obs.certificates.residual_a <= 1e-8);
        assert!(obs.certificates.residual_b <= 1e-8);
        let report = verify_observer(&sys, obs, &tol()).unwrap();
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn first_order_demo_default_route_verifies() {
        let sys = first_order_demo_system();
        let obs = synthesize(&sys, &tol(), None).unwrap();
        let report = verify_observer(&sys, &obs, &tol()).unwrap();
        assert!(report.ok(), "{report:?}");
        assert!(verify_condition_b_certificate(&obs.n, &obs.r, &tol()).unwrap());
    }

    #[test]
    fn verify_flags_tampered_realization() {
        let sys = first_order_demo_system();
        let mut obs = synthesize(&sys, &tol(), None).unwrap();
        obs.m[(0, 0)] += 0.5;
        let report = verify_observer(&sys, &obs, &tol()).unwrap();
        assert!(!report.reconstruction_ok);
        assert!(!report.ok());
    }

    #[test]
    fn synthesize_reports_h1_failure() {
        let sys = DescriptorSystem::new(
            None,
            Matrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
            ),
            Matrix::from_row_slice(
                4,
                4,
                &[
                    -3.0, 1.0, 0.0, 0.0, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
                    1.0,
                ],
            ),
            Matrix::from_row_slice(4, 1, &[0.0, 1.0, 0.0, 1.0]),
            Matrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[1.0, 1.366, 0.0, 0.0]),
        )
        .unwrap();
        match synthesize(&sys, &tol(), None) {
            Err(Error::H1Failed {
                rank_psi1,
                rank_gamma1,
            }) => {
                assert!(rank_psi1 > rank_gamma1);
            }
            other => panic!("expected H1Failed, got {other:?}"),
        }
    }
}
