use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
///
/// Fails with `RankDeficient` when a pivot falls below `1e-13 · max|A|`.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Dimension(format!(
            "solve needs square A and matching B, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let k = b.cols();
    let mut lu: Vec<f64> = a.as_slice().to_vec();
    let mut x: Vec<f64> = b.as_slice().to_vec();
    let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::RankDeficient("matrix is zero".into()));
    }
    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, lu[r * n + col].abs()))
            .fold((col, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if piv_abs <= 1e-13 * scale {
            return Err(Error::RankDeficient(format!(
                "pivot {piv_abs:.3e} at column {col} is numerically zero"
            )));
        }
        if piv != col {
            for j in 0..n {
                lu.swap(col * n + j, piv * n + j);
            }
            for j in 0..k {
                x.swap(col * k + j, piv * k + j);
            }
        }
        let d = lu[col * n + col];
        for r in col + 1..n {
            let f = lu[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                lu[r * n + j] -= f * lu[col * n + j];
            }
            for j in 0..k {
                x[r * k + j] -= f * x[col * k + j];
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[col * n + col];
        for j in 0..k {
            let mut acc = x[col * k + j];
            for c in col + 1..n {
                acc -= lu[col * n + c] * x[c * k + j];
            }
            x[col * k + j] = acc / d;
        }
    }
    Ok(DenseMatrix::from_vec_unchecked(n, k, x))
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension("cholesky needs a square matrix".into()));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k).powi(2);
        }
        if !(diag > 0.0) {
            return Err(Error::RankDeficient(format!(
                "matrix is not positive definite (pivot {diag:.3e} at {j})"
            )));
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    solve(a, &DenseMatrix::identity(a.rows()))
}
