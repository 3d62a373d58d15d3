//! Deterministic perturbation bounds: entrywise error of a rank-r estimate
//! controls the two-to-infinity distance of its singular factors, and
//! estimated factors inherit incoherence from the true ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    factor_incoherence, norm_max, norm_two_to_inf, procrustes_align, rank_d_svd, truncate_rank,
    DenseMatrix, OrthonormalFactor,
};
use crate::rng;

/// Slack allowed on the proved inequalities.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SSRReport {
    /// `‖U − Û sgn(ÛᵀU)‖_{2→∞}`.
    pub lhs_left: f64,
    /// `‖V − V̂ sgn(V̂ᵀV)‖_{2→∞}`.
    pub lhs_right: f64,
    pub rhs_left: f64,
    pub rhs_right: f64,
    /// `√(mn) ‖P̂ − P‖_max ≤ σ_r(P) / 2`.
    pub condition_ok: bool,
    /// Measured left distance, used as the SSR bound for `Û`.
    pub eps_ssr: f64,
    /// Incoherence bound for `Û` implied by `eps_ssr`.
    pub gamma_bound: f64,
    pub err_max: f64,
    pub sigma_r: f64,
    pub mu_u: f64,
    pub mu_v: f64,
}

impl SSRReport {
    /// The report for `(Pᵀ, P̂ᵀ)` given this one for `(P, P̂)` with `P` having
    /// `n` columns.
    fn transposed(&self, n: usize, r: usize) -> Self {
        SSRReport {
            lhs_left: self.lhs_right,
            lhs_right: self.lhs_left,
            rhs_left: self.rhs_right,
            rhs_right: self.rhs_left,
            condition_ok: self.condition_ok,
            eps_ssr: self.lhs_right,
            gamma_bound: incoherence_bound(self.mu_v, self.lhs_right, n, r),
            err_max: self.err_max,
            sigma_r: self.sigma_r,
            mu_u: self.mu_v,
            mu_v: self.mu_u,
        }
    }

    /// Inequalities hold, or the gate is closed and nothing is claimed.
    pub fn bound_holds(&self) -> bool {
        !self.condition_ok
            || (self.lhs_left <= self.rhs_left + BOUND_SLACK
                && self.lhs_right <= self.rhs_right + BOUND_SLACK)
    }
}

/// Evaluates both sides of the two-to-infinity recovery bound for the rank-`r`
/// factors of `p` and `phat`.
pub fn ssr_bound(p: &DenseMatrix, phat: &DenseMatrix, r: usize) -> Result<SSRReport> {
    if p.shape() != phat.shape() {
        return Err(Error::Dimension(format!(
            "P is {:?} but the estimate is {:?}",
            p.shape(),
            phat.shape()
        )));
    }
    // Square inputs are evaluated in a fixed orientation so that transposing
    // both arguments swaps the two sides bit for bit.
    if p.rows() == p.cols() {
        let pt = p.transpose();
        if lex_less(&pt, p) {
            return Ok(ssr_bound_oriented(&pt, &phat.transpose(), r)?.transposed(pt.cols(), r));
        }
    }
    ssr_bound_oriented(p, phat, r)
}

fn lex_less(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_lt())
}

fn ssr_bound_oriented(p: &DenseMatrix, phat: &DenseMatrix, r: usize) -> Result<SSRReport> {
    let (m, n) = p.shape();
    let truth = rank_d_svd(p, r)?;
    let sigma_r = truth.singular_values[r - 1];
    if !(sigma_r > 1e-12 * truth.singular_values[0]) {
        return Err(Error::RankDeficient(format!("sigma_{r}(P) = {sigma_r:.3e} is zero")));
    }
    let est = rank_d_svd(phat, r)?;
    let err_max = norm_max(&(p - phat));
    let mn = ((m * n) as f64).sqrt();
    let k = 2.0 + 2f64.sqrt();
    let rhs_left = (2.0 * (n as f64).sqrt() + k * mn * norm_two_to_inf(&truth.u)) * err_max / sigma_r;
    let rhs_right = (2.0 * (m as f64).sqrt() + k * mn * norm_two_to_inf(&truth.v)) * err_max / sigma_r;
    let lhs_left = procrustes_align(&est.u, &truth.u)?.distance;
    let lhs_right = procrustes_align(&est.v, &truth.v)?.distance;
    let mu_u = factor_incoherence(&truth.u);
    let mu_v = factor_incoherence(&truth.v);
    Ok(SSRReport {
        lhs_left,
        lhs_right,
        rhs_left,
        rhs_right,
        condition_ok: mn * err_max <= sigma_r / 2.0,
        eps_ssr: lhs_left,
        gamma_bound: incoherence_bound(mu_u, lhs_left, m, r),
        err_max,
        sigma_r,
        mu_u,
        mu_v,
    })
}

/// `2 μ_U + 2 ε² m / d`.
pub fn incoherence_bound(mu_u: f64, eps_ssr: f64, m: usize, d: usize) -> f64 {
    2.0 * mu_u + 2.0 * eps_ssr * eps_ssr * m as f64 / d as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceCheck {
    pub gamma_bound: f64,
    /// `m ‖Û‖²_{2→∞} / d`.
    pub measured: f64,
}

impl IncoherenceCheck {
    pub fn holds(&self) -> bool {
        self.measured <= self.gamma_bound + BOUND_SLACK
    }
}

pub fn incoherence_transfer(uhat: &OrthonormalFactor, mu_u: f64, eps_ssr: f64, d: usize) -> Result<IncoherenceCheck> {
    if !(eps_ssr >= 0.0) {
        return Err(Error::Parameter(format!("eps_ssr must be nonnegative, got {eps_ssr}")));
    }
    if d == 0 || d != uhat.d() {
        return Err(Error::Dimension(format!("d = {d} but the factor has {} columns", uhat.d())));
    }
    Ok(IncoherenceCheck {
        gamma_bound: incoherence_bound(mu_u, eps_ssr, uhat.rows(), d),
        measured: factor_incoherence(uhat),
    })
}

/// Rank-`r` truncation of `p` plus i.i.d. uniform noise rescaled to have
/// max-norm exactly `target_max`.
pub fn perturbed_estimate(p: &DenseMatrix, r: usize, target_max: f64, rng: &mut impl Rng) -> Result<DenseMatrix> {
    let noise = DenseMatrix::from_fn(p.rows(), p.cols(), |_, _| rng::uniform(rng, -1.0, 1.0));
    let scale = norm_max(&noise);
    let noise = if scale > 0.0 { noise.scale(target_max / scale) } else { noise };
    truncate_rank(&(p + &noise), r)
}
