//! Sparse symmetric matrices and the direct SPD solver backing every
//! linear solve in the crate.
//!
//! Matrices are stored as CSR via `sprs`; factorization is an LDL^T
//! decomposition with reverse Cuthill-McKee ordering. A factorization is
//! accepted only if every pivot is strictly positive, which doubles as the
//! positive-definiteness assertion for the assembled systems.

use sprs::{CsMat, FillInReduction, SymmetryCheck, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};
use thiserror::Error;

pub type Csr = CsMat<f64>;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is not positive definite: pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has length {len}")]
    Dimension { rows: usize, cols: usize, len: usize },
}

/// Builder accumulating (row, col, value) contributions; duplicates are summed.
pub struct Triplets {
    n: usize,
    tri: TriMat<f64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            tri: TriMat::new((n, n)),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.tri.add_triplet(row, col, val);
    }

    pub fn into_csr(self) -> Csr {
        self.tri.to_csr()
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// y = A x for square CSR `a`.
pub fn matvec(a: &Csr, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.cols(), x.len());
    let mut y = vec![0.0; a.rows()];
    for (row, vec) in a.outer_iterator().enumerate() {
        let mut acc = 0.0;
        for (col, &v) in vec.iter() {
            acc += v * x[col];
        }
        y[row] = acc;
    }
    y
}

/// u^T A v.
pub fn quad_form(a: &Csr, u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(a.rows(), u.len());
    assert_eq!(a.cols(), v.len());
    let mut acc = 0.0;
    for (row, vec) in a.outer_iterator().enumerate() {
        let ur = u[row];
        if ur == 0.0 {
            continue;
        }
        let mut acc_row = 0.0;
        for (col, &w) in vec.iter() {
            acc_row += w * v[col];
        }
        acc += ur * acc_row;
    }
    acc
}

/// alpha * A + B, preserving exact symmetry when both operands are symmetric.
pub fn add_scaled(alpha: f64, a: &Csr, b: &Csr) -> Csr {
    assert_eq!(a.rows(), b.rows());
    assert_eq!(a.cols(), b.cols());
    let mut tri = TriMat::new((a.rows(), a.cols()));
    for (row, vec) in a.outer_iterator().enumerate() {
        for (col, &v) in vec.iter() {
            tri.add_triplet(row, col, alpha * v);
        }
    }
    for (row, vec) in b.outer_iterator().enumerate() {
        for (col, &v) in vec.iter() {
            tri.add_triplet(row, col, v);
        }
    }
    tri.to_csr()
}

/// Largest relative asymmetry max |A_ij - A_ji| / max |A_ij|; 0 for empty matrices.
pub fn relative_asymmetry(a: &Csr) -> f64 {
    let at = a.transpose_view().to_csr();
    let mut max_abs = 0.0f64;
    for &v in a.data() {
        max_abs = max_abs.max(v.abs());
    }
    if max_abs == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for (row, vec) in a.outer_iterator().enumerate() {
        for (col, &v) in vec.iter() {
            let vt = at.get(row, col).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
    }
    worst / max_abs
}

/// Restriction of `a` to the indices flagged in `keep`, together with the
/// kept global indices in ascending order.
pub fn restrict(a: &Csr, keep: &[bool]) -> (Csr, Vec<usize>) {
    assert_eq!(a.rows(), keep.len());
    let kept: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let mut new_of_old = vec![usize::MAX; keep.len()];
    for (new, &old) in kept.iter().enumerate() {
        new_of_old[old] = new;
    }
    let mut tri = TriMat::new((kept.len(), kept.len()));
    for (row, vec) in a.outer_iterator().enumerate() {
        if !keep[row] {
            continue;
        }
        for (col, &v) in vec.iter() {
            if keep[col] {
                tri.add_triplet(new_of_old[row], new_of_old[col], v);
            }
        }
    }
    (tri.to_csr(), kept)
}

/// Direct solver for sparse symmetric positive definite systems.
pub struct SpdSolver {
    factor: Factor,
    n: usize,
}

// The LDL^T backend requires dimension >= 2; handle the tiny systems the
// active-set iteration can produce directly.
enum Factor {
    Empty,
    Scalar(f64),
    Ldl(LdlNumeric<f64, usize>),
}

impl SpdSolver {
    pub fn new(a: &Csr) -> Result<Self, SparseError> {
        let n = a.rows();
        let factor = match n {
            0 => Factor::Empty,
            1 => {
                let pivot = a.get(0, 0).copied().unwrap_or(0.0);
                if !(pivot > 0.0) {
                    return Err(SparseError::NotPositiveDefinite { index: 0, pivot });
                }
                Factor::Scalar(pivot)
            }
            _ => {
                let f = Ldl::new()
                    .check_symmetry(SymmetryCheck::DontCheckSymmetry)
                    .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                    .numeric(a.view())
                    .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
                for (index, &pivot) in f.d().iter().enumerate() {
                    if !(pivot > 0.0) {
                        return Err(SparseError::NotPositiveDefinite { index, pivot });
                    }
                }
                Factor::Ldl(f)
            }
        };
        Ok(Self { factor, n })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        if rhs.len() != self.n {
            return Err(SparseError::Dimension {
                rows: self.n,
                cols: self.n,
                len: rhs.len(),
            });
        }
        match &self.factor {
            Factor::Empty => Ok(Vec::new()),
            Factor::Scalar(pivot) => Ok(vec![rhs[0] / pivot]),
            Factor::Ldl(f) => Ok(f.solve(rhs)),
        }
    }
}

/// Writes `a` in coordinate text form (row col value per line), for debugging.
pub fn to_coordinate_text(a: &Csr) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {} {}\n", a.rows(), a.cols(), a.nnz()));
    for (row, vec) in a.outer_iterator().enumerate() {
        for (col, &v) in vec.iter() {
            out.push_str(&format!("{row} {col} {v:.17e}\n"));
        }
    }
    out
}
