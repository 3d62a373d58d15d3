use std::ops::Deref;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Tolerance on `max |(UᵀU − I)ₖₗ|` accepted for an orthonormal factor.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// An m×d matrix with orthonormal columns (a point on the Stiefel manifold).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalFactor(DenseMatrix);

impl OrthonormalFactor {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if m.cols() > m.rows() {
            return Err(Error::Dimension(format!(
                "orthonormal factor needs d <= rows, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let dev = orthonormality_defect(&m);
        if dev > ORTHONORMAL_TOL {
            return Err(Error::Data(format!(
                "columns are not orthonormal (max |UᵀU - I| = {dev:.3e})"
            )));
        }
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: DenseMatrix) -> Self {
        debug_assert!(orthonormality_defect(&m) <= 1e-6);
        Self(m)
    }

    /// First `d` canonical basis vectors of R^m.
    pub fn canonical(m: usize, d: usize) -> Self {
        Self(DenseMatrix::from_fn(m, d, |i, j| if i == j { 1.0 } else { 0.0 }))
    }

    pub fn d(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }

    /// Right-multiplies by an orthogonal d×d matrix; the result stays orthonormal.
    pub fn rotate(&self, w: &OrthonormalFactor) -> Result<Self> {
        if w.rows() != self.d() || w.d() != self.d() {
            return Err(Error::Dimension("rotation must be d x d".into()));
        }
        Ok(Self(self.0.matmul(&w.0)))
    }
}

impl Deref for OrthonormalFactor {
    type Target = DenseMatrix;
    fn deref(&self) -> &DenseMatrix {
        &self.0
    }
}

pub fn orthonormality_defect(m: &DenseMatrix) -> f64 {
    let gram = m.t_matmul(m);
    gram.max_abs_diff(&DenseMatrix::identity(m.cols()))
}
