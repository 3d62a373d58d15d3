//! Spectral feature extraction from the source, the least-squares transfer
//! estimator for the target, and the blend-and-truncate LLL22 baseline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{
    rank_d_svd, solve, symmetric_eigen, truncate_rank, DenseMatrix, MaskedMatrix,
    OrthonormalFactor,
};
use crate::sampling::ObservationSet;

/// Gram matrices with a condition number above this trigger the ridge.
pub const RIDGE_COND_LIMIT: f64 = 1e12;
/// Relative ridge size, as a multiple of `trace / d`.
pub const RIDGE_SCALE: f64 = 1e-8;
/// Lower bound on the residual variances used for baseline weights.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Estimated left/right singular factors of the source.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFeatures {
    pub uhat: OrthonormalFactor,
    pub vhat: OrthonormalFactor,
    pub sigma_hat: Vec<f64>,
}

impl SpectralFeatures {
    pub fn new(uhat: OrthonormalFactor, vhat: OrthonormalFactor, sigma_hat: Vec<f64>) -> Result<Self> {
        if uhat.d() != vhat.d() || sigma_hat.len() != uhat.d() {
            return Err(Error::Dimension(format!(
                "feature ranks disagree: U has {}, V has {}, sigma has {}",
                uhat.d(),
                vhat.d(),
                sigma_hat.len()
            )));
        }
        Ok(SpectralFeatures { uhat, vhat, sigma_hat })
    }

    /// Features equal to known factors, with unit singular values.
    pub fn exact(u: &OrthonormalFactor, v: &OrthonormalFactor) -> Result<Self> {
        Self::new(u.clone(), v.clone(), vec![1.0; u.d()])
    }

    pub fn d(&self) -> usize {
        self.uhat.d()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.uhat.rows(), self.vhat.rows())
    }

    /// Writes `Uhat.csv`, `Vhat.csv` and `sigma_hat.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::save_matrix(&dir.join("Uhat.csv"), &self.uhat)?;
        io::save_matrix(&dir.join("Vhat.csv"), &self.vhat)?;
        io::save_matrix(&dir.join("sigma_hat.csv"), &DenseMatrix::column_vector(&self.sigma_hat))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let factor = |name: &str| -> Result<OrthonormalFactor> {
            let path = dir.join(name);
            OrthonormalFactor::new(io::load_matrix(&path)?)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        };
        let uhat = factor("Uhat.csv")?;
        let vhat = factor("Vhat.csv")?;
        let sigma_path = dir.join("sigma_hat.csv");
        let sigma_hat = if sigma_path.exists() {
            io::load_matrix(&sigma_path)?.into_vec()
        } else {
            vec![1.0; uhat.d()]
        };
        Self::new(uhat, vhat, sigma_hat)
    }
}

/// Zero-fills the missing entries, rescales by the inverse observed fraction
/// and returns the leading `d` singular triplets.
pub fn extract_features(p_obs: &MaskedMatrix, d: usize) -> Result<SpectralFeatures> {
    let filled = inverse_propensity_fill(p_obs)?;
    let svd = rank_d_svd(&filled, d)?;
    SpectralFeatures::new(svd.u, svd.v, svd.singular_values)
}

/// `zero_filled(P̃) / p̂`.
pub fn inverse_propensity_fill(p_obs: &MaskedMatrix) -> Result<DenseMatrix> {
    let frac = p_obs.observed_fraction();
    if frac == 0.0 {
        return Err(Error::Data("source has no observed entries".into()));
    }
    let filled = p_obs.zero_filled();
    Ok(if frac < 1.0 { filled.scale(1.0 / frac) } else { filled })
}

/// Whether ill-conditioned Gram matrices are regularized or reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgePolicy {
    #[default]
    Auto,
    Disabled,
}

/// Fitted `d × d` core together with the row and column Gram matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub theta: DenseMatrix,
    /// `W2 = Σ_i c_i û_i û_iᵀ`.
    pub gram_row: DenseMatrix,
    /// `W1 = Σ_j c_j v̂_j v̂_jᵀ`.
    pub gram_col: DenseMatrix,
    pub ridge_used: f64,
    pub cond_row: f64,
    pub cond_col: f64,
}

/// Serialized next to `Theta.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateManifest {
    pub d: usize,
    pub ridge_used: f64,
    pub cond_row: Option<f64>,
    pub cond_col: Option<f64>,
}

impl ThetaEstimate {
    pub fn manifest(&self) -> EstimateManifest {
        let finite = |c: f64| c.is_finite().then_some(c);
        EstimateManifest {
            d: self.theta.rows(),
            ridge_used: self.ridge_used,
            cond_row: finite(self.cond_row),
            cond_col: finite(self.cond_col),
        }
    }

    /// Writes `Theta.csv` and `estimate.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::save_matrix(&dir.join("Theta.csv"), &self.theta)?;
        io::save_json(&dir.join("estimate.json"), &self.manifest())
    }
}

fn check_shapes(features: &SpectralFeatures, obs: &ObservationSet) -> Result<()> {
    if features.shape() != obs.shape() {
        return Err(Error::Dimension(format!(
            "features are for {:?} but observations are {:?}",
            features.shape(),
            obs.shape()
        )));
    }
    if obs.is_empty() {
        return Err(Error::Data("no target observations".into()));
    }
    Ok(())
}

/// `Fᵀ diag(c) F`.
fn weighted_gram(f: &DenseMatrix, c: &[f64]) -> DenseMatrix {
    let d = f.cols();
    let mut g = DenseMatrix::zeros(d, d);
    for (i, &ci) in c.iter().enumerate() {
        if ci == 0.0 {
            continue;
        }
        let row = f.row(i);
        for a in 0..d {
            for b in a..d {
                let v = g.get(a, b) + ci * row[a] * row[b];
                g.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g.set(a, b, g.get(b, a));
        }
    }
    g
}

/// Sum of the observed values per cell.
fn cell_sums(obs: &ObservationSet) -> BTreeMap<(usize, usize), (f64, usize)> {
    let mut sums = BTreeMap::new();
    for (i, j, v) in obs.entries() {
        let e = sums.entry((i, j)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    sums
}

fn condition(g: &DenseMatrix) -> Result<f64> {
    Ok(symmetric_eigen(g)?.condition_number())
}

fn ridge_for(g: &DenseMatrix) -> f64 {
    let t = g.trace();
    if t > 0.0 {
        RIDGE_SCALE * t / g.rows() as f64
    } else {
        RIDGE_SCALE
    }
}

fn regularize(g: &DenseMatrix, side: &str, policy: RidgePolicy) -> Result<(DenseMatrix, f64, f64)> {
    let cond = condition(g)?;
    if cond <= RIDGE_COND_LIMIT {
        return Ok((g.clone(), 0.0, cond));
    }
    match policy {
        RidgePolicy::Disabled => Err(Error::RankDeficient(format!(
            "{side} Gram matrix is singular (condition {cond:.3e}); too few distinct {side}s sampled"
        ))),
        RidgePolicy::Auto => {
            let lambda = ridge_for(g);
            let shifted = g + &DenseMatrix::identity(g.rows()).scale(lambda);
            Ok((shifted, lambda, cond))
        }
    }
}

/// Least squares via the Kronecker factorization `Θ̂ = W2⁻¹ S W1⁻¹`, where
/// `S = Σ_records û_i · value · v̂_jᵀ`. Repeated records enter `S` once each.
pub fn fit_theta_product(features: &SpectralFeatures, obs: &ObservationSet, policy: RidgePolicy) -> Result<ThetaEstimate> {
    check_shapes(features, obs)?;
    let (c_row, c_col) = obs.row_col_weights();
    let u = features.uhat.matrix();
    let v = features.vhat.matrix();
    let gram_row = weighted_gram(u, &c_row);
    let gram_col = weighted_gram(v, &c_col);
    let (w2, ridge_row, cond_row) = regularize(&gram_row, "row", policy)?;
    let (w1, ridge_col, cond_col) = regularize(&gram_col, "column", policy)?;

    let d = features.d();
    let mut s = DenseMatrix::zeros(d, d);
    for ((i, j), (sum, _)) in cell_sums(obs) {
        let ui = u.row(i);
        let vj = v.row(j);
        for a in 0..d {
            for b in 0..d {
                s.set(a, b, s.get(a, b) + ui[a] * sum * vj[b]);
            }
        }
    }
    let left = solve(&w2, &s)?;
    let theta = solve(&w1, &left.transpose())?.transpose();
    Ok(ThetaEstimate {
        theta,
        gram_row,
        gram_col,
        ridge_used: ridge_row.max(ridge_col),
        cond_row,
        cond_col,
    })
}

/// Solves the `d² × d²` normal equations in `vec(Θ)` with features
/// `φ_ij = v̂_j ⊗ û_i`, plus `λ I`.
pub fn fit_theta_direct(features: &SpectralFeatures, obs: &ObservationSet, lambda: f64) -> Result<ThetaEstimate> {
    check_shapes(features, obs)?;
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("ridge must be nonnegative, got {lambda}")));
    }
    let d = features.d();
    let dd = d * d;
    let u = features.uhat.matrix();
    let v = features.vhat.matrix();
    let mut a = DenseMatrix::zeros(dd, dd);
    let mut rhs = vec![0.0; dd];
    let mut phi = vec![0.0; dd];
    for ((i, j), (sum, count)) in cell_sums(obs) {
        let ui = u.row(i);
        let vj = v.row(j);
        for (b, &vb) in vj.iter().enumerate() {
            for (c, &uc) in ui.iter().enumerate() {
                phi[b * d + c] = vb * uc;
            }
        }
        let n = count as f64;
        for r in 0..dd {
            rhs[r] += phi[r] * sum;
            for c in r..dd {
                a.set(r, c, a.get(r, c) + n * phi[r] * phi[c]);
            }
        }
    }
    for r in 0..dd {
        for c in 0..r {
            a.set(r, c, a.get(c, r));
        }
        a.set(r, r, a.get(r, r) + lambda);
    }
    let cond = condition(&a)?;
    if cond > RIDGE_COND_LIMIT {
        return Err(Error::RankDeficient(format!(
            "normal equations have rank below d² = {dd} (condition {cond:.3e})"
        )));
    }
    let sol = solve(&a, &DenseMatrix::column_vector(&rhs))?;
    // column-stacked vec(Θ): entry (c, b) sits at b * d + c
    let theta = DenseMatrix::from_fn(d, d, |c, b| sol.get(b * d + c, 0));
    let (c_row, c_col) = obs.row_col_weights();
    let gram_row = weighted_gram(u, &c_row);
    let gram_col = weighted_gram(v, &c_col);
    Ok(ThetaEstimate {
        theta,
        cond_row: condition(&gram_row)?,
        cond_col: condition(&gram_col)?,
        gram_row,
        gram_col,
        ridge_used: lambda,
    })
}

/// `Q̂ = Û Θ̂ V̂ᵀ`.
pub fn predict(features: &SpectralFeatures, theta: &ThetaEstimate) -> Result<DenseMatrix> {
    let d = features.d();
    if theta.theta.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "Theta is {:?}, expected {d}x{d}",
            theta.theta.shape()
        )));
    }
    Ok(features
        .uhat
        .matmul(&theta.theta)
        .matmul(&features.vhat.transpose()))
}

fn passive_values(q_obs: &ObservationSet) -> Result<&MaskedMatrix> {
    match q_obs {
        ObservationSet::Passive { values, .. } => Ok(values),
        ObservationSet::Active { .. } => Err(Error::Parameter(
            "the LLL22 baseline needs a passive observation set".into(),
        )),
    }
}

/// Blends observed target cells with the inverse-propensity filled source,
/// `w_P/(w_P+w_Q) P̃ + w_Q/(w_P+w_Q) Q̃`, copies `P̃` elsewhere, and truncates
/// to rank `d`.
pub fn baseline_lll22(p_obs: &MaskedMatrix, q_obs: &ObservationSet, d: usize, w_p: f64, w_q: f64) -> Result<DenseMatrix> {
    if !(w_p > 0.0 && w_q > 0.0 && w_p.is_finite() && w_q.is_finite()) {
        return Err(Error::Parameter(format!("weights must be positive, got {w_p}, {w_q}")));
    }
    let q_vals = passive_values(q_obs)?;
    if p_obs.shape() != q_vals.shape() {
        return Err(Error::Dimension("source and target shapes differ".into()));
    }
    let mut blend = inverse_propensity_fill(p_obs)?;
    let alpha = w_p / (w_p + w_q);
    for (i, j, q) in q_vals.observed() {
        blend.set(i, j, alpha * blend.get(i, j) + (1.0 - alpha) * q);
    }
    truncate_rank(&blend, d)
}

fn residual_variance(obs: &DenseMatrix, d: usize) -> Option<f64> {
    let (r, c) = obs.shape();
    if r <= d || c <= d {
        return None;
    }
    let fit = truncate_rank(obs, d).ok()?;
    let rss: f64 = obs
        .as_slice()
        .iter()
        .zip(fit.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Some((rss / ((r - d) * (c - d)) as f64).max(VARIANCE_FLOOR))
}

/// Inverse residual-variance weights `(1/σ̂_P², 1/σ̂_Q²)`.
///
/// `σ̂_Q²` comes from the rank-`d` fit of the observed target block with
/// `(r−d)(c−d)` degrees of freedom; `σ̂_P²` from the observed source entries
/// against the rank-`d` fit of the filled source. Falls back to equal weights
/// when the target block is too small to leave residual degrees of freedom.
pub fn lll22_default_weights(p_obs: &MaskedMatrix, q_obs: &ObservationSet, d: usize) -> Result<(f64, f64)> {
    let q_vals = passive_values(q_obs)?;
    let (m, n) = p_obs.shape();
    let (c_row, c_col) = q_obs.row_col_weights();
    let rows: Vec<usize> = (0..c_row.len()).filter(|&i| c_row[i] > 0.0).collect();
    let cols: Vec<usize> = (0..c_col.len()).filter(|&j| c_col[j] > 0.0).collect();
    let var_q = if rows.is_empty() || cols.is_empty() {
        None
    } else {
        let block = DenseMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            q_vals.get(rows[a], cols[b]).unwrap_or(0.0)
        });
        residual_variance(&block, d)
    };
    let Some(var_q) = var_q else {
        return Ok((1.0, 1.0));
    };

    let filled = inverse_propensity_fill(p_obs)?;
    let fit = truncate_rank(&filled, d)?;
    let mut rss = 0.0;
    let mut count = 0usize;
    for (i, j, v) in p_obs.observed() {
        rss += (v - fit.get(i, j)).powi(2);
        count += 1;
    }
    let dof = count as f64 * ((m - d.min(m)) * (n - d.min(n))) as f64 / (m * n) as f64;
    let var_p = if dof > 0.0 { (rss / dof).max(VARIANCE_FLOOR) } else { VARIANCE_FLOOR };
    Ok((1.0 / var_p, 1.0 / var_q))
}

/// Max-squared and mean-squared error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub max_sq: f64,
    pub mse: f64,
}

pub fn metrics(qhat: &DenseMatrix, q: &DenseMatrix) -> Result<Metrics> {
    if qhat.shape() != q.shape() {
        return Err(Error::Dimension(format!(
            "prediction is {:?} but target is {:?}",
            qhat.shape(),
            q.shape()
        )));
    }
    let mut max_sq = 0.0f64;
    let mut sum = 0.0;
    for (a, b) in qhat.as_slice().iter().zip(q.as_slice()) {
        let e = (a - b).powi(2);
        max_sq = max_sq.max(e);
        sum += e;
    }
    Ok(Metrics {
        max_sq,
        mse: sum / q.as_slice().len() as f64,
    })
}
