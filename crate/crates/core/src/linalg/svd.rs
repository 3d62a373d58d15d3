//! Thin SVD via Householder QR followed by one-sided (Hestenes) Jacobi on the
//! triangular factor.
//!
//! Singular vectors follow a fixed sign convention: the largest-magnitude entry
//! of every left singular vector is positive (first such entry on ties). When a
//! singular value is exactly zero the corresponding left vector is completed to
//! an arbitrary orthonormal basis vector.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, OrthonormalFactor};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 100;

/// Column-major scratch matrix; Jacobi rotations and Householder updates touch
/// whole columns, which are contiguous here.
#[derive(Clone)]
struct ColMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn from_dense(a: &DenseMatrix) -> Self {
        let (rows, cols) = a.shape();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for (j, &v) in a.row(i).iter().enumerate() {
                data[j * rows + i] = v;
            }
        }
        Self { rows, cols, data }
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn two_cols_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let r = self.rows;
        let (head, tail) = self.data.split_at_mut(q * r);
        (&mut head[p * r..(p + 1) * r], &mut tail[..r])
    }

    fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.data[j * self.rows + i])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR of an m×n matrix with m ≥ n.
struct Householder {
    rows: usize,
    cols: usize,
    /// Reflector `j` acts on rows `j..m`; an empty vector marks an identity step.
    reflectors: Vec<Vec<f64>>,
    r: DenseMatrix,
}

impl Householder {
    fn factor(a: &DenseMatrix) -> Self {
        let (m, n) = a.shape();
        debug_assert!(m >= n);
        let mut w = ColMajor::from_dense(a);
        let mut reflectors = Vec::with_capacity(n);
        for j in 0..n {
            let x = &w.col(j)[j..];
            // reflectors are scale-invariant; working with x / max|x| keeps
            // vᵀv out of the subnormal range
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                reflectors.push(Vec::new());
                continue;
            }
            let mut v: Vec<f64> = x.iter().map(|xi| xi / scale).collect();
            let norm = dot(&v, &v).sqrt();
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vv = dot(&v, &v);
            if vv == 0.0 {
                reflectors.push(Vec::new());
                continue;
            }
            for k in j..n {
                let col = &mut w.col_mut(k)[j..];
                let f = 2.0 * dot(&v, col) / vv;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            reflectors.push(v);
        }
        let r = DenseMatrix::from_fn(n, n, |i, j| if i <= j { w.data[j * m + i] } else { 0.0 });
        Self {
            rows: m,
            cols: n,
            reflectors,
            r,
        }
    }

    /// Computes `Q · [Y; 0]` for an n×k matrix `Y`.
    fn apply_q(&self, y: &ColMajor) -> ColMajor {
        debug_assert_eq!(y.rows, self.cols);
        let m = self.rows;
        let mut out = ColMajor {
            rows: m,
            cols: y.cols,
            data: vec![0.0; m * y.cols],
        };
        for k in 0..y.cols {
            out.col_mut(k)[..self.cols].copy_from_slice(y.col(k));
        }
        for j in (0..self.cols).rev() {
            let v = &self.reflectors[j];
            if v.is_empty() {
                continue;
            }
            let vv = dot(v, v);
            for k in 0..out.cols {
                let col = &mut out.col_mut(k)[j..];
                let f = 2.0 * dot(v, col) / vv;
                for (c, vi) in col.iter_mut().zip(v) {
                    *c -= f * vi;
                }
            }
        }
        out
    }
}

/// Orthonormal basis of the column space of a full-column-rank matrix (thin Q
/// factor with positive diagonal of R).
pub fn orthonormalize(a: &DenseMatrix) -> Result<OrthonormalFactor> {
    let (m, n) = a.shape();
    if n > m {
        return Err(Error::Dimension(format!(
            "cannot orthonormalize {n} columns in R^{m}"
        )));
    }
    let qr = Householder::factor(a);
    let diag = qr.r.diag();
    let scale = diag.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 || diag.iter().any(|x| x.abs() <= 1e-12 * scale) {
        return Err(Error::RankDeficient(
            "columns are linearly dependent".into(),
        ));
    }
    let q = qr.apply_q(&ColMajor::identity(n)).to_dense();
    let signs: Vec<f64> = diag.iter().map(|x| x.signum()).collect();
    Ok(OrthonormalFactor::new_unchecked(q.scale_cols(&signs)))
}

/// Singular value decomposition truncated to the leading `d` triplets.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub u: OrthonormalFactor,
    pub singular_values: Vec<f64>,
    pub v: OrthonormalFactor,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U · diag(σ) · Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.u
            .matrix()
            .scale_cols(&self.singular_values)
            .matmul(&self.v.transpose())
    }

    pub fn truncate(&self, d: usize) -> SvdTriple {
        let d = d.min(self.rank());
        SvdTriple {
            u: OrthonormalFactor::new_unchecked(self.u.leading_cols(d)),
            singular_values: self.singular_values[..d].to_vec(),
            v: OrthonormalFactor::new_unchecked(self.v.leading_cols(d)),
        }
    }
}

/// Thin SVD with `min(m, n)` triplets, sorted by nonincreasing singular value.
pub fn svd(a: &DenseMatrix) -> SvdTriple {
    let (m, n) = a.shape();
    let (u, s, v) = if m >= n {
        svd_tall(a)
    } else {
        let (u, s, v) = svd_tall(&a.transpose());
        (v, s, u)
    };
    let (u, v) = apply_sign_convention(u, v);
    SvdTriple {
        u: OrthonormalFactor::new_unchecked(u),
        singular_values: s,
        v: OrthonormalFactor::new_unchecked(v),
    }
}

/// Leading rank-`d` singular triplets of `a` (the best rank-d approximation in
/// Frobenius and operator norm).
pub fn rank_d_svd(a: &DenseMatrix, d: usize) -> Result<SvdTriple> {
    let k = a.rows().min(a.cols());
    if d == 0 || d > k {
        return Err(Error::Dimension(format!(
            "rank {d} requested for a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    Ok(svd(a).truncate(d))
}

/// Rank-`d` truncation `U_d Σ_d V_dᵀ`.
pub fn truncate_rank(a: &DenseMatrix, d: usize) -> Result<DenseMatrix> {
    Ok(rank_d_svd(a, d)?.reconstruct())
}

pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    svd(a).singular_values
}

fn svd_tall(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (_, n) = a.shape();
    let qr = Householder::factor(a);
    let mut g = ColMajor::from_dense(&qr.r);
    let mut v = ColMajor::identity(n);

    let frob_sq: f64 = g.data.iter().map(|x| x * x).sum();
    let negligible_sq = (f64::EPSILON * f64::EPSILON) * frob_sq;
    let mut norms: Vec<f64> = (0..n).map(|j| dot(g.col(j), g.col(j))).collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible_sq || beta <= negligible_sq {
                    continue;
                }
                let (gp, gq) = g.two_cols_mut(p, q);
                let gamma = dot(gp, gq);
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum_or_one() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(gp, gq, c, s);
                let (vp, vq) = v.two_cols_mut(p, q);
                rotate(vp, vq, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = dot(g.col(j), g.col(j));
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut u_r = ColMajor {
        rows: n,
        cols: n,
        data: vec![0.0; n * n],
    };
    let mut v_sorted = ColMajor {
        rows: n,
        cols: n,
        data: vec![0.0; n * n],
    };
    let mut s_sorted = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        v_sorted.col_mut(k).copy_from_slice(v.col(j));
        if norms[j] <= negligible_sq || sigma[j] == 0.0 {
            s_sorted.push(if norms[j] <= negligible_sq { 0.0 } else { sigma[j] });
            missing.push(k);
        } else {
            s_sorted.push(sigma[j]);
            let inv = 1.0 / sigma[j];
            for (dst, &src) in u_r.col_mut(k).iter_mut().zip(g.col(j)) {
                *dst = src * inv;
            }
        }
    }
    reorthogonalize(&mut u_r, &mut missing);
    complete_basis(&mut u_r, &missing);

    let u = qr.apply_q(&u_r).to_dense();
    (u, s_sorted, v_sorted.to_dense())
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

trait SignumOrOne {
    fn signum_or_one(self) -> f64;
}

impl SignumOrOne for f64 {
    fn signum_or_one(self) -> f64 {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other column.
/// Columns with tiny singular values come out of `G / σ` with rounding-level
/// errors amplified by `1/σ`. Gram–Schmidt (applied twice) against the
/// preceding, larger-σ columns restores orthogonality; a column that loses
/// more than half its norm is handed to basis completion instead.
fn reorthogonalize(u: &mut ColMajor, missing: &mut Vec<usize>) {
    let mut kept: Vec<usize> = Vec::with_capacity(u.cols);
    for k in 0..u.cols {
        if missing.contains(&k) {
            continue;
        }
        let mut col = u.col(k).to_vec();
        for _ in 0..2 {
            for &f in &kept {
                let proj = dot(&col, u.col(f));
                for (c, uf) in col.iter_mut().zip(u.col(f)) {
                    *c -= proj * uf;
                }
            }
        }
        let norm = dot(&col, &col).sqrt();
        if norm < 0.5 {
            missing.push(k);
            continue;
        }
        for (dst, src) in u.col_mut(k).iter_mut().zip(&col) {
            *dst = src / norm;
        }
        kept.push(k);
    }
    missing.sort_unstable();
}

fn complete_basis(u: &mut ColMajor, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = u.rows;
    let mut filled: Vec<usize> = (0..u.cols).filter(|k| !missing.contains(k)).collect();
    let mut candidate = 0usize;
    for &k in missing {
        let threshold = (n - filled.len()) as f64 / (2.0 * n as f64);
        loop {
            let mut e = vec![0.0; n];
            e[candidate % n] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(&e, u.col(f));
                    for (ei, ui) in e.iter_mut().zip(u.col(f)) {
                        *ei -= proj * ui;
                    }
                }
            }
            let norm_sq = dot(&e, &e);
            if norm_sq >= threshold {
                let inv = 1.0 / norm_sq.sqrt();
                for (dst, src) in u.col_mut(k).iter_mut().zip(&e) {
                    *dst = src * inv;
                }
                break;
            }
        }
        filled.push(k);
    }
}

fn apply_sign_convention(u: DenseMatrix, v: DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let signs: Vec<f64> = (0..u.cols())
        .map(|j| {
            let mut best = 0.0f64;
            let mut sign = 1.0;
            for i in 0..u.rows() {
                let x = u.get(i, j);
                if x.abs() > best {
                    best = x.abs();
                    sign = if x < 0.0 { -1.0 } else { 1.0 };
                }
            }
            sign
        })
        .collect();
    (u.scale_cols(&signs), v.scale_cols(&signs))
}
