//! Source/target pairs in the matrix transfer model
//! `P = U Σ_P Vᵀ`, `Q = U T₁ R T₂ᵀ Vᵀ`, and the synthetic generators.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{
    norm_op, orthonormalize, procrustes_align, svd, DenseMatrix, OrthonormalFactor,
};
use crate::rng::{self, Stream};

/// Which synthetic family produced a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Coherent,
    Partition,
    General,
    FromFiles,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Identity,
    Rotation,
    General,
}

/// Distribution shift applied to the latent factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    /// Operator norm of T₁ and T₂.
    pub magnitude: f64,
}

impl ShiftSpec {
    pub fn new(kind: ShiftKind, magnitude: f64) -> Result<Self> {
        if !(magnitude > 0.0) || !magnitude.is_finite() {
            return Err(Error::Parameter(format!(
                "shift magnitude must be positive, got {magnitude}"
            )));
        }
        Ok(Self { kind, magnitude })
    }
}

#[derive(Clone, Debug)]
pub struct TransferPair {
    pub p: DenseMatrix,
    pub q: DenseMatrix,
    pub u: OrthonormalFactor,
    pub v: OrthonormalFactor,
    /// Diagonal, nonnegative.
    pub sigma_p: DenseMatrix,
    pub t1: DenseMatrix,
    pub t2: DenseMatrix,
    pub r: DenseMatrix,
    pub meta: PairManifest,
}

/// JSON manifest stored next to the CSV files of a pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairManifest {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub model: ModelKind,
    pub params: serde_json::Value,
    pub seed: u64,
}

impl TransferPair {
    /// Assembles a pair from factors; P and Q are formed from them.
    pub fn from_factors(
        u: OrthonormalFactor,
        v: OrthonormalFactor,
        sigma_p: DenseMatrix,
        t1: DenseMatrix,
        t2: DenseMatrix,
        r: DenseMatrix,
        meta: PairManifest,
    ) -> Result<Self> {
        let d = u.d();
        if v.d() != d || [&sigma_p, &t1, &t2, &r].iter().any(|x| x.shape() != (d, d)) {
            return Err(Error::Dimension(format!(
                "factor shapes inconsistent with d = {d}"
            )));
        }
        let p = u.matrix().matmul(&sigma_p).matmul(&v.transpose());
        let q = u.matrix().matmul(&shift_core(&t1, &r, &t2)).matmul(&v.transpose());
        Ok(Self {
            p,
            q,
            u,
            v,
            sigma_p,
            t1,
            t2,
            r,
            meta,
        })
    }

    pub fn m(&self) -> usize {
        self.p.rows()
    }

    pub fn n(&self) -> usize {
        self.p.cols()
    }

    pub fn d(&self) -> usize {
        self.u.d()
    }

    /// `T₁ R T₂ᵀ`.
    pub fn core(&self) -> DenseMatrix {
        shift_core(&self.t1, &self.r, &self.t2)
    }

    /// Largest deviations `‖P − UΣVᵀ‖_max` and `‖Q − U T₁RT₂ᵀ Vᵀ‖_max`.
    pub fn reconstruction_error(&self) -> (f64, f64) {
        let vt = self.v.transpose();
        let p = self.u.matrix().matmul(&self.sigma_p).matmul(&vt);
        let q = self.u.matrix().matmul(&self.core()).matmul(&vt);
        (p.max_abs_diff(&self.p), q.max_abs_diff(&self.q))
    }

    /// Writes `P.csv`, `Q.csv`, `U.csv`, `V.csv`, `Sigma_P.csv`, `T1.csv`,
    /// `T2.csv`, `R.csv` and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::save_matrix(&dir.join("P.csv"), &self.p)?;
        io::save_matrix(&dir.join("Q.csv"), &self.q)?;
        io::save_matrix(&dir.join("U.csv"), self.u.matrix())?;
        io::save_matrix(&dir.join("V.csv"), self.v.matrix())?;
        io::save_matrix(&dir.join("Sigma_P.csv"), &self.sigma_p)?;
        io::save_matrix(&dir.join("T1.csv"), &self.t1)?;
        io::save_matrix(&dir.join("T2.csv"), &self.t2)?;
        io::save_matrix(&dir.join("R.csv"), &self.r)?;
        io::save_json(&dir.join("manifest.json"), &self.meta)
    }

    /// Loads a pair written by [`TransferPair::save`]. P and Q are read from
    /// disk as-is; the factor files are optional for `from_files` pairs.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: PairManifest = io::load_json(&dir.join("manifest.json"))?;
        let p = io::load_matrix(&dir.join("P.csv"))?;
        let q = io::load_matrix(&dir.join("Q.csv"))?;
        if p.shape() != q.shape() || p.shape() != (meta.m, meta.n) {
            return Err(Error::Format(format!(
                "{}: P/Q shapes disagree with manifest {}x{}",
                dir.display(),
                meta.m,
                meta.n
            )));
        }
        let u_path = dir.join("U.csv");
        let (u, v, sigma_p, t1, t2, r) = if u_path.exists() {
            let load = |name: &str| io::load_matrix(&dir.join(name));
            (
                OrthonormalFactor::new(load("U.csv")?)?,
                OrthonormalFactor::new(load("V.csv")?)?,
                load("Sigma_P.csv")?,
                load("T1.csv")?,
                load("T2.csv")?,
                load("R.csv")?,
            )
        } else {
            factors_from_matrices(&p, &q, meta.d)?
        };
        Ok(Self {
            p,
            q,
            u,
            v,
            sigma_p,
            t1,
            t2,
            r,
            meta,
        })
    }
}

fn shift_core(t1: &DenseMatrix, r: &DenseMatrix, t2: &DenseMatrix) -> DenseMatrix {
    t1.matmul(r).matmul(&t2.transpose())
}

/// Best-effort factors for an externally supplied pair: U, V, Σ_P from the
/// rank-d SVD of P, and `R = Uᵀ Q V` with identity shifts.
pub fn factors_from_matrices(
    p: &DenseMatrix,
    q: &DenseMatrix,
    d: usize,
) -> Result<(
    OrthonormalFactor,
    OrthonormalFactor,
    DenseMatrix,
    DenseMatrix,
    DenseMatrix,
    DenseMatrix,
)> {
    let t = crate::linalg::rank_d_svd(p, d)?;
    let r = t.u.t_matmul(q).matmul(t.v.matrix());
    let sigma = DenseMatrix::from_diag(&t.singular_values);
    Ok((
        t.u,
        t.v,
        sigma,
        DenseMatrix::identity(d),
        DenseMatrix::identity(d),
        r,
    ))
}

/// Stylized coherent model on an n×n grid: `U[i, i] = 1`, `V[n−1−i, i] = 1`,
/// Σ_P and Σ_Q with i.i.d. Uniform[0.5, 1] diagonals, `Q = U Σ_Q Vᵀ`.
pub fn gen_coherent(n: usize, d: usize, seed: u64) -> Result<TransferPair> {
    if d == 0 || d > n {
        return Err(Error::Dimension(format!("coherent model needs 1 <= d <= n, got d={d}, n={n}")));
    }
    let mut rng = rng::stream_rng(seed, Stream::Spectrum);
    let sigma_p: Vec<f64> = (0..d).map(|_| rng::uniform(&mut rng, 0.5, 1.0)).collect();
    let sigma_q: Vec<f64> = (0..d).map(|_| rng::uniform(&mut rng, 0.5, 1.0)).collect();
    let u = OrthonormalFactor::canonical(n, d);
    let v = OrthonormalFactor::new_unchecked(DenseMatrix::from_fn(n, d, |i, k| {
        if i == n - 1 - k {
            1.0
        } else {
            0.0
        }
    }));
    TransferPair::from_factors(
        u,
        v,
        DenseMatrix::from_diag(&sigma_p),
        DenseMatrix::identity(d),
        DenseMatrix::identity(d),
        DenseMatrix::from_diag(&sigma_q),
        PairManifest {
            m: n,
            n,
            d,
            model: ModelKind::Coherent,
            params: serde_json::json!({}),
            seed,
        },
    )
}

const MEMBERSHIP_RETRIES: usize = 100;

/// Draws a membership vector for `count` items over `d` blocks, retrying until
/// every block is non-empty.
fn draw_memberships(rng: &mut impl Rng, count: usize, d: usize, what: &str) -> Result<Vec<usize>> {
    for _ in 0..MEMBERSHIP_RETRIES {
        let labels: Vec<usize> = (0..count).map(|_| rng.random_range(0..d)).collect();
        let mut sizes = vec![0usize; d];
        for &l in &labels {
            sizes[l] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            return Ok(labels);
        }
    }
    Err(Error::Data(format!(
        "could not draw {what} memberships with all {d} blocks non-empty in {MEMBERSHIP_RETRIES} attempts"
    )))
}

fn block_sizes(labels: &[usize], d: usize) -> Vec<f64> {
    let mut sizes = vec![0.0; d];
    for &l in labels {
        sizes[l] += 1.0;
    }
    sizes
}

/// Membership matrix with columns scaled by `1/sqrt(block size)`.
fn normalized_membership(labels: &[usize], d: usize) -> DenseMatrix {
    let sizes = block_sizes(labels, d);
    DenseMatrix::from_fn(labels.len(), d, |i, k| {
        if labels[i] == k {
            1.0 / sizes[k].sqrt()
        } else {
            0.0
        }
    })
}

fn permutation_matrix(perm: &[usize]) -> DenseMatrix {
    let d = perm.len();
    DenseMatrix::from_fn(d, d, |i, j| if perm[i] == j { 1.0 } else { 0.0 })
}

/// Matrix partition model: `P = Z_U B Z_Vᵀ`, `Q = Z_U Π₁ B Π₂ᵀ Z_Vᵀ` with
/// uniformly random memberships `Z_U`, `Z_V`, `B = C + aI`,
/// `C_ij ~ Uniform[0, b]` and uniformly random permutations Π₁, Π₂.
///
/// The stored factors are orthonormalized: with `D_r`, `D_c` the square roots
/// of the block sizes and `D_r B D_c = A Σ Cᵀ`,
/// `U = Z_U D_r⁻¹ A`, `V = Z_V D_c⁻¹ C`, `Σ_P = R = Σ`,
/// `T₁ = Aᵀ D_r Π₁ D_r⁻¹ A` and `T₂ = Cᵀ D_c Π₂ D_c⁻¹ C`.
pub fn gen_partition(m: usize, n: usize, d: usize, a: f64, b: f64, seed: u64) -> Result<TransferPair> {
    if d == 0 || d > m.min(n) {
        return Err(Error::Dimension(format!(
            "partition model needs 1 <= d <= min(m, n), got d={d}"
        )));
    }
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Parameter(format!("a and b must be nonnegative, got a={a}, b={b}")));
    }
    let mut mem_rng = rng::stream_rng(seed, Stream::Memberships);
    let row_labels = draw_memberships(&mut mem_rng, m, d, "row")?;
    let col_labels = draw_memberships(&mut mem_rng, n, d, "column")?;

    let mut block_rng = rng::stream_rng(seed, Stream::BlockValues);
    let block = DenseMatrix::from_fn(d, d, |i, j| {
        rng::uniform(&mut block_rng, 0.0, b) + if i == j { a } else { 0.0 }
    });

    let mut perm_rng = rng::stream_rng(seed, Stream::Permutations);
    let pi1 = permutation_matrix(&rng::permutation(&mut perm_rng, d));
    let pi2 = permutation_matrix(&rng::permutation(&mut perm_rng, d));

    let dr: Vec<f64> = block_sizes(&row_labels, d).iter().map(|s| s.sqrt()).collect();
    let dc: Vec<f64> = block_sizes(&col_labels, d).iter().map(|s| s.sqrt()).collect();
    let dr_inv: Vec<f64> = dr.iter().map(|x| 1.0 / x).collect();
    let dc_inv: Vec<f64> = dc.iter().map(|x| 1.0 / x).collect();
    let dr_m = DenseMatrix::from_diag(&dr);
    let dc_m = DenseMatrix::from_diag(&dc);

    let scaled = dr_m.matmul(&block).matmul(&dc_m);
    let inner = svd::svd(&scaled);
    let (a_rot, c_rot) = (inner.u.matrix(), inner.v.matrix());

    let u = OrthonormalFactor::new_unchecked(normalized_membership(&row_labels, d).matmul(a_rot));
    let v = OrthonormalFactor::new_unchecked(normalized_membership(&col_labels, d).matmul(c_rot));
    let sigma = DenseMatrix::from_diag(&inner.singular_values);
    let t1 = a_rot
        .t_matmul(&dr_m.matmul(&pi1).scale_cols(&dr_inv))
        .matmul(a_rot);
    let t2 = c_rot
        .t_matmul(&dc_m.matmul(&pi2).scale_cols(&dc_inv))
        .matmul(c_rot);

    let mut pair = TransferPair::from_factors(
        u,
        v,
        sigma.clone(),
        t1,
        t2,
        sigma,
        PairManifest {
            m,
            n,
            d,
            model: ModelKind::Partition,
            params: serde_json::json!({ "a": a, "b": b }),
            seed,
        },
    )?;
    // P and Q exactly as the block model defines them, not via the SVD route.
    let zu = DenseMatrix::from_fn(m, d, |i, k| if row_labels[i] == k { 1.0 } else { 0.0 });
    let zv = DenseMatrix::from_fn(n, d, |j, k| if col_labels[j] == k { 1.0 } else { 0.0 });
    pair.p = zu.matmul(&block).matmul(&zv.transpose());
    pair.q = zu
        .matmul(&pi1)
        .matmul(&block)
        .matmul(&pi2.transpose())
        .matmul(&zv.transpose());
    Ok(pair)
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng::normal(rng))
}

fn random_orthogonal(rng: &mut impl Rng, d: usize) -> Result<DenseMatrix> {
    Ok(orthonormalize(&gaussian_matrix(rng, d, d))?.into_matrix())
}

fn shift_matrix(rng: &mut impl Rng, d: usize, shift: ShiftSpec) -> Result<DenseMatrix> {
    let base = match shift.kind {
        ShiftKind::Identity => DenseMatrix::identity(d),
        ShiftKind::Rotation => random_orthogonal(rng, d)?,
        ShiftKind::General => {
            let g = gaussian_matrix(rng, d, d);
            g.scale(1.0 / norm_op(&g))
        }
    };
    Ok(base.scale(shift.magnitude))
}

/// Random instance of the transfer model with Gaussian-orthonormalized
/// factors, Uniform[0.5, 1] source spectrum, shifts per `shift`, and a
/// Gaussian R rescaled to unit operator norm.
pub fn gen_general(m: usize, n: usize, d: usize, shift: ShiftSpec, seed: u64) -> Result<TransferPair> {
    if d == 0 || d > m.min(n) {
        return Err(Error::Dimension(format!(
            "general model needs 1 <= d <= min(m, n), got d={d}"
        )));
    }
    ShiftSpec::new(shift.kind, shift.magnitude)?;
    let mut frng = rng::stream_rng(seed, Stream::Factors);
    let u = orthonormalize(&gaussian_matrix(&mut frng, m, d))?;
    let v = orthonormalize(&gaussian_matrix(&mut frng, n, d))?;
    let mut srng = rng::stream_rng(seed, Stream::Spectrum);
    let mut sigma: Vec<f64> = (0..d).map(|_| rng::uniform(&mut srng, 0.5, 1.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let mut shift_rng = rng::stream_rng(seed, Stream::Shift);
    let t1 = shift_matrix(&mut shift_rng, d, shift)?;
    let t2 = shift_matrix(&mut shift_rng, d, shift)?;
    let g = gaussian_matrix(&mut shift_rng, d, d);
    let r = g.scale(1.0 / norm_op(&g));
    TransferPair::from_factors(
        u,
        v,
        DenseMatrix::from_diag(&sigma),
        t1,
        t2,
        r,
        PairManifest {
            m,
            n,
            d,
            model: ModelKind::General,
            params: serde_json::to_value(shift)?,
            seed,
        },
    )
}

/// Misspecification split `Q = Û M V̂ᵀ + E` for estimated features.
#[derive(Clone, Debug)]
pub struct ErrorDecomposition {
    pub m: DenseMatrix,
    pub e: DenseMatrix,
    pub w_u: OrthonormalFactor,
    pub w_v: OrthonormalFactor,
    pub dist_u: f64,
    pub dist_v: f64,
}

impl ErrorDecomposition {
    /// `Δ_U M V̂ᵀ + Û M Δ_Vᵀ + Δ_U M Δ_Vᵀ` with `Δ_U = U W_U − Û` and
    /// `Δ_V = V W_V − V̂`; equals `e` up to rounding.
    pub fn cross_terms(
        &self,
        pair: &TransferPair,
        uhat: &OrthonormalFactor,
        vhat: &OrthonormalFactor,
    ) -> DenseMatrix {
        let du = &pair.u.matrix().matmul(self.w_u.matrix()) - uhat.matrix();
        let dv = &pair.v.matrix().matmul(self.w_v.matrix()) - vhat.matrix();
        let dm = du.matmul(&self.m);
        let t1 = dm.matmul(&vhat.transpose());
        let t2 = uhat.matrix().matmul(&self.m).matmul(&dv.transpose());
        let t3 = dm.matmul(&dv.transpose());
        &(&t1 + &t2) + &t3
    }
}

pub fn error_decomposition(
    pair: &TransferPair,
    uhat: &OrthonormalFactor,
    vhat: &OrthonormalFactor,
) -> Result<ErrorDecomposition> {
    let align_u = procrustes_align(&pair.u, uhat)?;
    let align_v = procrustes_align(&pair.v, vhat)?;
    let m = align_u
        .rotation
        .t_matmul(&pair.core())
        .matmul(align_v.rotation.matrix());
    let fitted = uhat.matrix().matmul(&m).matmul(&vhat.transpose());
    let e = &pair.q - &fitted;
    Ok(ErrorDecomposition {
        m,
        e,
        w_u: align_u.rotation,
        w_v: align_v.rotation,
        dist_u: align_u.distance,
        dist_v: align_v.distance,
    })
}
