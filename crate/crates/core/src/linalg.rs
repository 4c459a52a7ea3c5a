//! Dense complex linear algebra shared by the rest of the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{FormationError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const EIGEN_CONVERGENCE: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(entries))
}

/// Largest entry magnitude.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

/// `max |m - I|` entrywise.
pub fn identity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    max_abs(&(m - CMatrix::identity(n, n)))
}

/// Inverse by LU with partial pivoting, rejected unless both products
/// reproduce the identity within `tol`.
pub fn checked_inverse(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(FormationError::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(FormationError::SingularTransform {
            residual: f64::INFINITY,
        })?;
    let residual = identity_residual(&(m * &inv)).max(identity_residual(&(&inv * m)));
    if !residual.is_finite() || residual > tol {
        return Err(FormationError::SingularTransform { residual });
    }
    Ok(inv)
}

/// Eigenvalues from the complex Schur form, sorted by (re, im).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), EIGEN_CONVERGENCE, EIGEN_MAX_ITER)
        .ok_or(FormationError::EigenNoConvergence { dim: n })?;
    let (_, t) = schur.unpack();
    let mut eigs: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    sort_spectrum(&mut eigs);
    Ok(eigs)
}

pub fn sort_spectrum(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Smallest real part.
pub fn min_real(eigs: &[C64]) -> f64 {
    eigs.iter().map(|e| e.re).fold(f64::INFINITY, f64::min)
}

pub fn max_real(eigs: &[C64]) -> f64 {
    eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Distance between two spectra viewed as multisets: the minimum over
/// pairings of the largest paired gap. Exhaustive for up to 8 values,
/// greedy nearest-neighbour beyond that.
pub fn spectrum_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    if n <= 8 {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute_min(&mut idx, 0, a, b, 0.0, &mut best);
        best
    } else {
        let mut used = vec![false; n];
        let mut worst = 0.0f64;
        for x in a {
            let (k, d) = b
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, y)| (k, (x - y).norm()))
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .expect("equal lengths");
            used[k] = true;
            worst = worst.max(d);
        }
        worst
    }
}

fn permute_min(idx: &mut [usize], k: usize, a: &[C64], b: &[C64], acc: f64, best: &mut f64) {
    if acc >= *best {
        return;
    }
    if k == idx.len() {
        *best = acc;
        return;
    }
    for s in k..idx.len() {
        idx.swap(k, s);
        let d = (a[k] - b[idx[k]]).norm();
        permute_min(idx, k + 1, a, b, acc.max(d), best);
        idx.swap(k, s);
    }
}

/// Determinant of the top-left `k`×`k` block.
pub fn leading_block(m: &CMatrix, k: usize) -> CMatrix {
    m.view((0, 0), (k, k)).into_owned()
}

/// Applies the same permutation to rows and columns: `out[a][b] = m[p[a]][p[b]]`.
pub fn permute_symmetric(m: &CMatrix, p: &[usize]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(p[a], p[b])])
}
