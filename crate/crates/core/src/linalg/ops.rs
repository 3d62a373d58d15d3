use crate::error::{Error, Result};
use crate::linalg::{svd, DenseMatrix, OrthonormalFactor};

/// Kronecker product: `(A ⊗ B)[i·s + v, j·t + w] = A[i, j] · B[v, w]` for a
/// B of shape s×t.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (s, t) = b.shape();
    DenseMatrix::from_fn(a.rows() * s, a.cols() * t, |r, c| {
        a.get(r / s, c / t) * b.get(r % s, c % t)
    })
}

/// Column-stacking vectorization.
pub fn vec(x: &DenseMatrix) -> Vec<f64> {
    let (r, c) = x.shape();
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(x.get(i, j));
        }
    }
    out
}

/// Inverse of [`vec`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    DenseMatrix::new(rows, cols, vec![0.0; rows * cols])?;
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
}

pub fn norm_max(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm_fro(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Operator (spectral) norm σ₁(A).
pub fn norm_op(a: &DenseMatrix) -> f64 {
    svd::singular_values(a)[0]
}

/// Largest Euclidean row norm.
pub fn norm_two_to_inf(a: &DenseMatrix) -> f64 {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `m ‖U‖²_{2→∞} / d` for an orthonormal m×d factor.
pub fn factor_incoherence(u: &OrthonormalFactor) -> f64 {
    let t = norm_two_to_inf(u.matrix());
    u.rows() as f64 * t * t / u.d() as f64
}

/// Left and right incoherence parameters of the rank-`d` factors of `m`.
pub fn incoherence(m: &DenseMatrix, d: usize) -> Result<(f64, f64)> {
    let t = svd::rank_d_svd(m, d)?;
    let s1 = t.singular_values[0];
    let sd = t.singular_values[d - 1];
    if s1 == 0.0 || sd <= 1e-12 * s1 {
        return Err(Error::RankDeficient(format!(
            "sigma_{d} = {sd:.3e} is zero; incoherence of rank {d} is undefined"
        )));
    }
    Ok((factor_incoherence(&t.u), factor_incoherence(&t.v)))
}

/// `sgn(Z) = U_Z V_Zᵀ`, the orthogonal polar factor of a square matrix.
///
/// For singular `Z` the result depends on the basis completion chosen by the
/// SVD and is not unique.
pub fn sign_matrix(z: &DenseMatrix) -> Result<OrthonormalFactor> {
    if z.rows() != z.cols() {
        return Err(Error::Dimension(format!(
            "sign matrix needs a square input, got {}x{}",
            z.rows(),
            z.cols()
        )));
    }
    let t = svd::svd(z);
    Ok(OrthonormalFactor::new_unchecked(
        t.u.matrix().matmul(&t.v.transpose()),
    ))
}

/// Rotation aligning `u` to `uhat` and the resulting two-to-infinity distance.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub rotation: OrthonormalFactor,
    /// `‖Û − U W‖_{2→∞}`; an upper bound on the infimum over all rotations.
    pub distance: f64,
}

/// Aligns `u` to `uhat` with `W = sgn(Uᵀ Û)`.
pub fn procrustes_align(u: &OrthonormalFactor, uhat: &OrthonormalFactor) -> Result<Alignment> {
    if u.shape() != uhat.shape() {
        return Err(Error::Dimension(format!(
            "cannot align {}x{} with {}x{}",
            u.rows(),
            u.d(),
            uhat.rows(),
            uhat.d()
        )));
    }
    let rotation = sign_matrix(&u.t_matmul(uhat))?;
    let aligned = u.matrix().matmul(rotation.matrix());
    let distance = norm_two_to_inf(&(uhat.matrix() - &aligned));
    Ok(Alignment { rotation, distance })
}
