//! G-optimal experimental designs over finite vector sets.
//!
//! A vector set is an N×d matrix whose rows are the candidate vectors. The
//! G-value of a design π is `g(π) = max_a aᵀ V(π)⁻¹ a` with
//! `V(π) = Σ π(a) a aᵀ`. By the Kiefer–Wolfowitz equivalence `g(π) ≥ d`, with
//! equality exactly at the optimum, so `g/d − 1` certifies how far a design is
//! from G-optimal without knowing the optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, kron, svd, symmetric_eigen, DenseMatrix};

/// Weights below this are reported as outside the support.
pub const SUPPORT_TOL: f64 = 1e-9;
/// V(π) is treated as singular when `λ_min ≤ SINGULAR_TOL · λ_max`.
pub const SINGULAR_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Probability distribution over a finite index set.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    weights: Vec<f64>,
}

impl Design {
    /// Weights must be finite, nonnegative and sum to 1 within 1e-9; they are
    /// renormalized to sum to 1 exactly.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Parameter("design over an empty index set".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter("design weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("design weights sum to {total}, not 1")));
        }
        Ok(Self::normalized(weights))
    }

    fn normalized(mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, k: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[k] = 1.0;
        Self { weights }
    }

    /// Uniform over the listed indices.
    pub fn uniform_on(n: usize, support: &[usize]) -> Self {
        let mut weights = vec![0.0; n];
        for &k in support {
            weights[k] += 1.0;
        }
        Self::normalized(weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Indices with weight above [`SUPPORT_TOL`].
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.weights[k] > SUPPORT_TOL).collect()
    }

    /// Zeroes the weights below [`SUPPORT_TOL`] and renormalizes.
    pub fn trimmed(&self) -> Self {
        Self::normalized(
            self.weights
                .iter()
                .map(|&w| if w > SUPPORT_TOL { w } else { 0.0 })
                .collect(),
        )
    }
}

fn check_vectors(design: &Design, vectors: &DenseMatrix) -> Result<()> {
    if design.len() != vectors.rows() {
        return Err(Error::Dimension(format!(
            "design has {} weights but there are {} vectors",
            design.len(),
            vectors.rows()
        )));
    }
    Ok(())
}

/// `V(π) = Σ π(a) a aᵀ`.
pub fn design_gram(design: &Design, vectors: &DenseMatrix) -> Result<DenseMatrix> {
    check_vectors(design, vectors)?;
    Ok(weighted_gram(design.weights(), vectors))
}

fn weighted_gram(weights: &[f64], vectors: &DenseMatrix) -> DenseMatrix {
    let d = vectors.cols();
    let mut g = vec![0.0; d * d];
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let a = vectors.row(k);
        for i in 0..d {
            let wa = w * a[i];
            for j in i..d {
                g[i * d + j] += wa * a[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            g[i * d + j] = g[j * d + i];
        }
    }
    DenseMatrix::from_vec_unchecked(d, d, g)
}

/// Quadratic forms `aᵀ V⁻¹ a` for every row, or a rank error when V is
/// numerically singular.
fn leverages(gram: &DenseMatrix, vectors: &DenseMatrix) -> Result<Vec<f64>> {
    let eig = symmetric_eigen(gram)?;
    if eig.max() <= 0.0 || eig.min() <= SINGULAR_TOL * eig.max() {
        return Err(Error::RankDeficient(format!(
            "design support does not span R^{} (eigenvalues {:.3e}..{:.3e})",
            gram.rows(),
            eig.min(),
            eig.max()
        )));
    }
    let l = cholesky(gram)?;
    let d = gram.rows();
    let mut out = Vec::with_capacity(vectors.rows());
    let mut y = vec![0.0; d];
    for k in 0..vectors.rows() {
        // ‖L⁻¹ a‖² by forward substitution
        let a = vectors.row(k);
        let mut q = 0.0;
        for i in 0..d {
            let mut s = a[i];
            for j in 0..i {
                s -= l.get(i, j) * y[j];
            }
            y[i] = s / l.get(i, i);
            q += y[i] * y[i];
        }
        out.push(q);
    }
    Ok(out)
}

fn log_det(gram: &DenseMatrix) -> Result<f64> {
    let l = cholesky(gram)?;
    Ok(l.diag().iter().map(|x| 2.0 * x.ln()).sum())
}

/// G-value of `design` on the rows of `vectors`.
pub fn g_value(design: &Design, vectors: &DenseMatrix) -> Result<f64> {
    let gram = design_gram(design, vectors)?;
    Ok(leverages(&gram, vectors)?.into_iter().fold(f64::MIN, f64::max))
}

/// `(g, g/d − 1)`: the design is `(g/d − 1)`-approximately G-optimal.
pub fn kw_certificate(design: &Design, vectors: &DenseMatrix) -> Result<(f64, f64)> {
    let g = g_value(design, vectors)?;
    Ok((g, g / vectors.cols() as f64 - 1.0))
}

/// Output of [`frank_wolfe_design`].
#[derive(Clone, Debug)]
pub struct FrankWolfeResult {
    pub design: Design,
    pub g_value: f64,
    pub iterations: usize,
    /// `log det V(π_k)` for every iterate, starting with the initial design.
    pub log_dets: Vec<f64>,
}

impl FrankWolfeResult {
    pub fn eps_hat(&self, d: usize) -> f64 {
        self.g_value / d as f64 - 1.0
    }
}

/// Greedy pivoted Gram–Schmidt: indices of `d` rows spanning R^d, or `None`.
fn spanning_subset(vectors: &DenseMatrix) -> Option<Vec<usize>> {
    let (n, d) = vectors.shape();
    let mut residual: Vec<Vec<f64>> = (0..n).map(|k| vectors.row(k).to_vec()).collect();
    let scale = residual
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    let mut chosen = Vec::with_capacity(d);
    for _ in 0..d {
        let (best, best_norm) = residual
            .iter()
            .enumerate()
            .map(|(k, r)| (k, r.iter().map(|x| x * x).sum::<f64>()))
            .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best_norm <= 1e-20 * scale || scale == 0.0 {
            return None;
        }
        chosen.push(best);
        let q: Vec<f64> = residual[best].iter().map(|x| x / best_norm.sqrt()).collect();
        for r in residual.iter_mut() {
            let proj: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= proj * qi;
            }
        }
    }
    Some(chosen)
}

/// ε-approximate G-optimal design by Frank–Wolfe (Wynn–Fedorov) iterations
/// on `log det V(π)`.
///
/// Starts uniform on a greedily chosen spanning subset. Each step moves mass
/// toward the vector with the largest leverage `g_k` using the exact
/// line-search step `γ = (g_k/d − 1)/(g_k − 1)`, and stops once
/// `g_k ≤ (1 + eps)·d`. The returned design has weights below
/// [`SUPPORT_TOL`] removed, and its G-value is recomputed after trimming.
pub fn frank_wolfe_design(vectors: &DenseMatrix, eps: f64, max_iter: usize) -> Result<FrankWolfeResult> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let (n, d) = vectors.shape();
    if !vectors.is_finite() {
        return Err(Error::Data("vector set contains non-finite entries".into()));
    }
    let init = spanning_subset(vectors).ok_or_else(|| {
        Error::RankDeficient(format!("the {n} vectors do not span R^{d}"))
    })?;
    let target = (1.0 + eps) * d as f64;
    let mut weights = Design::uniform_on(n, &init).weights;
    let mut log_dets = Vec::new();
    let mut g = f64::INFINITY;

    for iter in 0..=max_iter {
        let gram = weighted_gram(&weights, vectors);
        log_dets.push(log_det(&gram)?);
        let lev = leverages(&gram, vectors)?;
        let (best, g_k) = lev
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |acc, c| if c.1 > acc.1 { c } else { acc });
        g = g_k;
        if g_k <= target {
            let trimmed = Design { weights }.trimmed();
            let g_trim = g_value(&trimmed, vectors)?;
            if g_trim <= target {
                return Ok(FrankWolfeResult {
                    design: trimmed,
                    g_value: g_trim,
                    iterations: iter,
                    log_dets,
                });
            }
            // trimming pushed g over the target; keep iterating from the trimmed weights
            weights = trimmed.weights;
            continue;
        }
        if iter == max_iter {
            break;
        }
        let df = d as f64;
        let gamma = (g_k / df - 1.0) / (g_k - 1.0);
        for w in weights.iter_mut() {
            *w *= 1.0 - gamma;
        }
        weights[best] += gamma;
    }
    Err(Error::Convergence {
        iterations: max_iter,
        g_value: g,
        target,
    })
}

/// Shrinks the support of a design.
///
/// First drops atoms (lightest first) whose removal keeps
/// `g ≤ (1 + 2·eps)·d`. Then, while the support exceeds `d(d+1)/2`, moves
/// along a direction `c` with `Σ c_k a_k a_kᵀ = 0` until an atom vanishes;
/// such moves rescale V(π) by a factor ≥ 1 after renormalization, so they never
/// increase g.
pub fn prune_design(design: &Design, vectors: &DenseMatrix, eps: f64) -> Result<Design> {
    check_vectors(design, vectors)?;
    let d = vectors.cols();
    let limit = (1.0 + 2.0 * eps) * d as f64;
    let mut current = design.trimmed();
    let mut order = current.support();
    order.sort_by(|&a, &b| current.weights[a].total_cmp(&current.weights[b]).then(a.cmp(&b)));
    for k in order {
        let mut trial = current.weights.clone();
        trial[k] = 0.0;
        if trial.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let candidate = Design::normalized(trial);
        match g_value(&candidate, vectors) {
            Ok(g) if g <= limit => current = candidate,
            _ => {}
        }
    }

    let max_support = d * (d + 1) / 2;
    loop {
        let support = current.support();
        if support.len() <= max_support {
            break;
        }
        let direction = gram_null_direction(vectors, &support);
        let total: f64 = direction.iter().sum();
        // orient so the total mass does not grow
        let sign = if total > 0.0 { -1.0 } else { 1.0 };
        let mut step = f64::INFINITY;
        for (pos, &k) in support.iter().enumerate() {
            let c = sign * direction[pos];
            if c < 0.0 {
                step = step.min(current.weights[k] / -c);
            }
        }
        if !step.is_finite() {
            break;
        }
        let mut w = current.weights.clone();
        for (pos, &k) in support.iter().enumerate() {
            w[k] = (w[k] + step * sign * direction[pos]).max(0.0);
        }
        // the atom that hit zero
        if let Some(&k) = support
            .iter()
            .min_by(|&&a, &&b| w[a].total_cmp(&w[b]))
        {
            w[k] = 0.0;
        }
        current = Design::normalized(w);
    }
    Ok(current)
}

/// A unit vector `c` (indexed like `support`) with `Σ c_k a_k a_kᵀ ≈ 0`.
fn gram_null_direction(vectors: &DenseMatrix, support: &[usize]) -> Vec<f64> {
    let d = vectors.cols();
    let dim = d * (d + 1) / 2;
    let s = support.len();
    // rows: atoms; columns: upper-triangular entries of a aᵀ
    let lifted = DenseMatrix::from_fn(s, dim, |k, e| {
        let a = vectors.row(support[k]);
        let (i, j) = triangular_index(d, e);
        a[i] * a[j]
    });
    let t = svd(&lifted);
    let smax = t.singular_values[0].max(f64::MIN_POSITIVE);
    let basis: Vec<Vec<f64>> = (0..t.rank())
        .filter(|&r| t.singular_values[r] > 1e-12 * smax)
        .map(|r| t.u.col(r))
        .collect();
    let mut best = vec![0.0; s];
    let mut best_norm = -1.0;
    for k in 0..s {
        let mut e = vec![0.0; s];
        e[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
                for (ei, bi) in e.iter_mut().zip(b) {
                    *ei -= proj * bi;
                }
            }
        }
        let norm: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > best_norm {
            best_norm = norm;
            best = e.iter().map(|x| x / norm).collect();
        }
    }
    best
}

fn triangular_index(d: usize, mut e: usize) -> (usize, usize) {
    for i in 0..d {
        let len = d - i;
        if e < len {
            return (i, i + e);
        }
        e -= len;
    }
    unreachable!("index beyond the triangle")
}

/// Product design `π(i, j) = ρ(i) ζ(j)` indexed by `i·n + j`.
pub fn tensor_design(rho: &Design, zeta: &Design) -> Design {
    let n = zeta.len();
    Design {
        weights: (0..rho.len() * n)
            .map(|k| rho.weights[k / n] * zeta.weights[k % n])
            .collect(),
    }
}

/// Kronecker covariates `v_j ⊗ u_i` as rows, indexed by `i·n + j` to match
/// [`tensor_design`].
pub fn kron_vectors(row_vectors: &DenseMatrix, col_vectors: &DenseMatrix) -> DenseMatrix {
    let (m, d1) = row_vectors.shape();
    let (n, d2) = col_vectors.shape();
    let mut data = Vec::with_capacity(m * n * d1 * d2);
    for i in 0..m {
        let u = DenseMatrix::column_vector(row_vectors.row(i));
        for j in 0..n {
            let v = DenseMatrix::column_vector(col_vectors.row(j));
            data.extend_from_slice(kron(&v, &u).as_slice());
        }
    }
    DenseMatrix::from_vec_unchecked(m * n, d1 * d2, data)
}

/// JSON form of a design: its support, the weights on it, and its certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRecord {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub g_value: f64,
    pub eps_hat: f64,
    /// Size of the full index set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

impl DesignRecord {
    pub fn new(design: &Design, vectors: &DenseMatrix) -> Result<Self> {
        let (g, eps_hat) = kw_certificate(design, vectors)?;
        let indices = design.support();
        Ok(Self {
            weights: indices.iter().map(|&k| design.weight(k)).collect(),
            indices,
            g_value: g,
            eps_hat,
            size: Some(design.len()),
        })
    }

    pub fn to_design(&self, size: usize) -> Result<Design> {
        if self.indices.len() != self.weights.len() {
            return Err(Error::Format("indices and weights differ in length".into()));
        }
        let mut w = vec![0.0; size];
        for (&k, &x) in self.indices.iter().zip(&self.weights) {
            if k >= size {
                return Err(Error::Format(format!("index {k} out of range for size {size}")));
            }
            w[k] += x;
        }
        Design::new(w)
    }
}
