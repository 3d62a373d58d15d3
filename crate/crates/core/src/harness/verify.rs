//! Seeded property suites for the perturbation bounds and for design
//! tensorization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{frank_wolfe_design, g_value, kron_vectors, tensor_design, Design, DEFAULT_MAX_ITER};
use crate::error::Result;
use crate::linalg::{factor_incoherence, orthonormalize, procrustes_align, rank_d_svd, DenseMatrix, OrthonormalFactor};
use crate::rng::{self, stream_rng, trial_seed, Stream};
use crate::ssr::{incoherence_transfer, perturbed_estimate, ssr_bound};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    /// Instances on which the property was asserted.
    pub checked: usize,
    /// Instances skipped because a hypothesis did not hold.
    pub skipped: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport {
            name: name.into(),
            checked: 0,
            skipped: 0,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

/// Orthonormal basis of the span of an `m × d` Gaussian matrix.
pub fn random_orthonormal(m: usize, d: usize, rng: &mut impl Rng) -> Result<OrthonormalFactor> {
    orthonormalize(&DenseMatrix::from_fn(m, d, |_, _| rng::normal(rng)))
}

/// Weights drawn uniformly and normalized, with each entry kept with
/// probability `keep`.
pub fn random_design(n: usize, keep: f64, rng: &mut impl Rng) -> Design {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(keep) { rng.random::<f64>() + 1e-3 } else { 0.0 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w.fill(1.0);
    }
    let s: f64 = w.iter().sum();
    Design::new(w.into_iter().map(|x| x / s).collect()).expect("normalized weights")
}

fn random_rank(m: usize, n: usize, r: usize, rng: &mut impl Rng) -> DenseMatrix {
    let a = DenseMatrix::from_fn(m, r, |_, _| rng::normal(rng));
    let b = DenseMatrix::from_fn(r, n, |_, _| rng::normal(rng));
    a.matmul(&b)
}

/// Two-to-infinity recovery bound on `gated` instances per shape whose gate
/// is open. Perturbation sizes range over the open-gate region, so a few
/// draws land outside it and are skipped.
pub fn ssr_suite(shapes: &[(usize, usize)], rank: usize, gated: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("ssr_bound");
    for (s, &(m, n)) in shapes.iter().enumerate() {
        let mut got = 0;
        let mut t = 0u64;
        while got < gated && t < 20 * gated as u64 {
            let mut r = stream_rng(trial_seed(seed, 1000 * s as u64 + t), Stream::Perturbation);
            t += 1;
            let p = random_rank(m, n, rank, &mut r);
            let sigma_r = rank_d_svd(&p, rank)?.singular_values[rank - 1];
            let level = rng::uniform(&mut r, 0.01, 0.6) * sigma_r / ((m * n) as f64).sqrt();
            let phat = perturbed_estimate(&p, rank, level, &mut r)?;
            let report = ssr_bound(&p, &phat, rank)?;
            if !report.condition_ok {
                rep.skipped += 1;
                continue;
            }
            got += 1;
            rep.checked += 1;
            if !report.bound_holds() {
                rep.failures.push(format!(
                    "{m}x{n} draw {t}: left {:.4e} vs {:.4e}, right {:.4e} vs {:.4e}",
                    report.lhs_left, report.rhs_left, report.lhs_right, report.rhs_right
                ));
            }
        }
    }
    Ok(rep)
}

/// Incoherence of perturbed factors against `2 μ_U + 2 ε² m / d`, with ε the
/// measured aligned two-to-infinity distance.
pub fn incoherence_suite(m: usize, d: usize, trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("incoherence_transfer");
    for t in 0..trials {
        let mut r = stream_rng(trial_seed(seed, t as u64), Stream::Perturbation);
        let u = random_orthonormal(m, d, &mut r)?;
        let size = rng::uniform(&mut r, 0.01, 0.5);
        let noisy = DenseMatrix::from_fn(m, d, |i, j| u.get(i, j) + size * rng::normal(&mut r) / (m as f64).sqrt());
        let uhat = orthonormalize(&noisy)?;
        let eps = procrustes_align(&u, &uhat)?.distance;
        let chk = incoherence_transfer(&uhat, factor_incoherence(&u), eps, d)?;
        rep.checked += 1;
        if !chk.holds() {
            rep.failures.push(format!("trial {t}: measured {:.6} > bound {:.6}", chk.measured, chk.gamma_bound));
        }
    }
    Ok(rep)
}

/// `g(ρ ⊗ ζ) = g(ρ) g(ζ)` on Kronecker features for random designs, and the
/// joint certificate for Frank–Wolfe factors.
pub fn tensorization_suite(m: usize, n: usize, d: usize, trials: usize, eps: f64, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("tensorization");
    for t in 0..trials {
        let mut r = stream_rng(trial_seed(seed, t as u64), Stream::Perturbation);
        let uhat = random_orthonormal(m, d, &mut r)?;
        let vhat = random_orthonormal(n, d, &mut r)?;
        let kv = kron_vectors(&uhat, &vhat);
        let rho = random_design(m, 0.8, &mut r);
        let zeta = random_design(n, 0.8, &mut r);
        let (gr, gz) = (g_value(&rho, &uhat)?, g_value(&zeta, &vhat)?);
        let joint = g_value(&tensor_design(&rho, &zeta), &kv)?;
        rep.checked += 1;
        let rel = (joint - gr * gz).abs() / (gr * gz);
        if rel > 1e-8 {
            rep.failures.push(format!("trial {t}: g = {joint:.12} but g(rho) g(zeta) = {:.12}", gr * gz));
        }
        let fr = frank_wolfe_design(&uhat, eps, DEFAULT_MAX_ITER)?;
        let fz = frank_wolfe_design(&vhat, eps, DEFAULT_MAX_ITER)?;
        let joint = g_value(&tensor_design(&fr.design, &fz.design), &kv)?;
        let target = (1.0 + eps).powi(2) * (d * d) as f64 * (1.0 + 1e-12);
        if joint > target {
            rep.failures.push(format!("trial {t}: optimal joint g = {joint:.6} > {target:.6}"));
        }
    }
    Ok(rep)
}

/// The suites run by the `verify` command.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        ssr_suite(&[(40, 30), (25, 60)], 3, 100, seed)?,
        incoherence_suite(80, 4, 50, seed)?,
        tensorization_suite(20, 15, 3, 20, 0.01, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(ssr_suite(&[(12, 10)], 2, 5, 1).unwrap().passed());
        assert!(incoherence_suite(20, 2, 5, 1).unwrap().passed());
        assert!(tensorization_suite(8, 6, 2, 3, 0.01, 1).unwrap().passed());
    }

    #[test]
    fn random_design_is_valid() {
        let mut r = stream_rng(3, Stream::Perturbation);
        let d = random_design(10, 0.0, &mut r);
        assert_eq!(d.support().len(), 10);
    }
}
