//! Shared helpers for the integration suites: an exact rational linear
//! algebra oracle, deterministic random generators, and demo loading.

#![allow(dead_code)]

use descobs::model::DescriptorSystem;
use descobs::numkit::Matrix;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

/// Dense rational matrix, row major. All arithmetic is exact, so rank and
/// pseudoinverse results are ground truth against the floating point code.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<BigRational>,
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RMat {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RMat::zeros(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = BigRational::one();
        }
        m
    }

    /// Exact conversion: every f64 is a rational number.
    pub fn from_f64(m: &Matrix) -> Self {
        let mut out = RMat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                *out.at_mut(i, j) = BigRational::from_float(m[(i, j)]).expect("finite entry");
            }
        }
        out
    }

    pub fn to_f64(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            self.at(i, j).to_f64().expect("representable")
        })
    }

    pub fn at(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut BigRational {
        &mut self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut out = RMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.at_mut(j, i) = self.at(i, j).clone();
            }
        }
        out
    }

    pub fn mul(&self, other: &RMat) -> Self {
        assert_eq!(self.cols, other.rows, "rational matmul shape");
        let mut out = RMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k).clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let t = &a * other.at(k, j);
                    *out.at_mut(i, j) += t;
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &RMat) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x -= y;
        }
        out
    }

    pub fn column_select(&self, idx: &[usize]) -> Self {
        let mut out = RMat::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (jj, &j) in idx.iter().enumerate() {
                *out.at_mut(i, jj) = self.at(i, j).clone();
            }
        }
        out
    }

    pub fn top_rows(&self, k: usize) -> Self {
        let mut out = RMat::zeros(k, self.cols);
        out.data.clone_from_slice(&self.data[..k * self.cols]);
        out
    }

    pub fn is_zero_matrix(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }
}

/// Reduced row echelon form by exact Gauss-Jordan. Returns the echelon
/// matrix and the pivot column indices; the rank is the pivot count.
pub fn rref(m: &RMat) -> (RMat, Vec<usize>) {
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..a.cols {
        if row == a.rows {
            break;
        }
        // largest-magnitude pivot keeps intermediate numerators smaller
        let pick = (row..a.rows)
            .filter(|&i| !a.at(i, col).is_zero())
            .max_by(|&x, &y| a.at(x, col).abs().cmp(&a.at(y, col).abs()));
        let Some(pick) = pick else { continue };
        if pick != row {
            for j in 0..a.cols {
                let tmp = a.at(pick, j).clone();
                *a.at_mut(pick, j) = a.at(row, j).clone();
                *a.at_mut(row, j) = tmp;
            }
        }
        let inv = a.at(row, col).recip();
        for j in col..a.cols {
            let v = a.at(row, j) * &inv;
            *a.at_mut(row, j) = v;
        }
        for i in 0..a.rows {
            if i == row || a.at(i, col).is_zero() {
                continue;
            }
            let f = a.at(i, col).clone();
            for j in col..a.cols {
                let v = a.at(i, j) - &f * a.at(row, j);
                *a.at_mut(i, j) = v;
            }
        }
        pivots.push(col);
        row += 1;
    }
    (a, pivots)
}

/// Exact rank of a floating point matrix, reading its entries as the
/// rationals they are.
pub fn exact_rank(m: &Matrix) -> usize {
    rref(&RMat::from_f64(m)).1.len()
}

/// Exact inverse of a nonsingular rational matrix by Gauss-Jordan on the
/// augmented system.
pub fn rinverse(m: &RMat) -> RMat {
    assert_eq!(m.rows, m.cols, "inverse needs a square matrix");
    let n = m.rows;
    let mut aug = RMat::zeros(n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            *aug.at_mut(i, j) = m.at(i, j).clone();
        }
        *aug.at_mut(i, n + i) = BigRational::one();
    }
    let (red, pivots) = rref(&aug);
    assert_eq!(pivots.len(), n, "matrix is singular");
    assert!(pivots.iter().all(|&p| p < n), "matrix is singular");
    let mut out = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            *out.at_mut(i, j) = red.at(i, n + j).clone();
        }
    }
    out
}

/// Exact Moore-Penrose inverse through a rank factorization: with A = C F
/// (C the pivot columns, F the nonzero echelon rows), the pseudoinverse is
/// F^T (F F^T)^-1 (C^T C)^-1 C^T. All four Penrose identities hold exactly
/// for this expression.
pub fn exact_pinv(m: &RMat) -> RMat {
    let (echelon, pivots) = rref(m);
    let rank = pivots.len();
    if rank == 0 {
        return RMat::zeros(m.cols, m.rows);
    }
    let c = m.column_select(&pivots);
    let f = echelon.top_rows(rank);
    let ft = f.transpose();
    let ct = c.transpose();
    let gram_f = rinverse(&f.mul(&ft));
    let gram_c = rinverse(&ct.mul(&c));
    ft.mul(&gram_f).mul(&gram_c).mul(&ct)
}

/// Path of a packaged example system.
pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn load_demo(name: &str) -> DescriptorSystem {
    descobs::io::load_system(&data_path(name)).expect("packaged demo parses")
}

/// Uniform random matrix with entries in (-lim, lim).
pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lim: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-lim..lim))
}

/// Matrix on the dyadic grid k/8, k in [-16, 16]. Entries, and products of
/// a handful of them, are exact in both f64 and rational arithmetic.
pub fn grid_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-16i32..=16) as f64 / 8.0)
}

/// Grid matrix with a planted factorization of inner dimension `rank`.
/// The true rank can come out lower if a factor degenerates; the exact
/// oracle decides, not the construction.
pub fn planted_rank_mat(rng: &mut ChaCha8Rng, m: usize, n: usize, rank: usize) -> Matrix {
    if rank == 0 {
        return Matrix::zeros(m, n);
    }
    grid_mat(rng, m, rank) * grid_mat(rng, rank, n)
}

/// Random descriptor system with rectangular E, A in the small-dimension
/// regime the original-size diagnostic accepts.
pub fn random_system(rng: &mut ChaCha8Rng) -> DescriptorSystem {
    let m = rng.random_range(1..=6);
    let n = rng.random_range(1..=6);
    let l = rng.random_range(0..=3);
    let p = rng.random_range(1..=3);
    let r = rng.random_range(1..=3);
    DescriptorSystem::new(
        None,
        rand_mat(rng, m, n, 2.0),
        rand_mat(rng, m, n, 2.0),
        rand_mat(rng, m, l, 2.0),
        rand_mat(rng, p, n, 2.0),
        rand_mat(rng, r, n, 2.0),
    )
    .expect("dimensions are consistent by construction")
}

/// Random square explicit-core system: E rank deficient but with a full
/// row rank top block, so the pipeline sees a mix of dynamics and
/// constraints while synthesizable draws stay reasonably frequent.
pub fn random_structured_system(rng: &mut ChaCha8Rng) -> DescriptorSystem {
    let n = rng.random_range(2..=6);
    let d = rng.random_range(1..=n);
    let l = rng.random_range(0..=2);
    let p = rng.random_range(1..=3.min(n));
    let r = rng.random_range(1..=3);
    let mut e = Matrix::zeros(n, n);
    for i in 0..d {
        for j in 0..n {
            e[(i, j)] = rng.random_range(-2.0..2.0);
        }
        e[(i, i)] += 3.0;
    }
    DescriptorSystem::new(
        None,
        e,
        rand_mat(rng, n, n, 2.0),
        rand_mat(rng, n, l, 2.0),
        rand_mat(rng, p, n, 2.0),
        rand_mat(rng, r, n, 2.0),
    )
    .expect("dimensions are consistent by construction")
}
