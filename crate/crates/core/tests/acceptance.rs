//! Acceptance criteria, one line of output each. Runs without the libtest
//! harness so the lines are always printed; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mnar_core::design::{frank_wolfe_design, g_value, Design, DEFAULT_MAX_ITER};
use mnar_core::estimator::{fit_theta_direct, fit_theta_product, predict, RidgePolicy, SpectralFeatures};
use mnar_core::harness::verify::{incoherence_suite, random_design, random_orthonormal, ssr_suite, tensorization_suite};
use mnar_core::harness::{run_experiment, summarize, summary_for, EstimatorKind, ExperimentConfig, FeatureSource, TrialResult};
use mnar_core::linalg::{norm_max, orthonormalize, DenseMatrix, OrthonormalFactor};
use mnar_core::rng::{self, stream_rng, Stream};
use mnar_core::sampling::{active_draw, nondegeneracy_check, observe_active, observe_passive, passive_mask};
use mnar_core::transfer::{error_decomposition, gen_coherent, gen_general, ModelKind, ShiftKind, ShiftSpec};
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

/// `max_a aᵀ V⁻¹ a` through nalgebra's inverse.
fn oracle_g(weights: &[f64], vectors: &DenseMatrix) -> f64 {
    let d = vectors.cols();
    let mut v = DMatrix::<f64>::zeros(d, d);
    for (k, &w) in weights.iter().enumerate() {
        let a = nalgebra::DVector::from_row_slice(vectors.row(k));
        v += w * &a * a.transpose();
    }
    let inv = v.try_inverse().expect("invertible oracle Gram");
    (0..vectors.rows())
        .map(|k| {
            let a = nalgebra::DVector::from_row_slice(vectors.row(k));
            (a.transpose() * &inv * &a)[(0, 0)]
        })
        .fold(f64::MIN, f64::max)
}

fn gaussian(rows: usize, cols: usize, r: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng::normal(r))
}

fn kw_lower_bound() -> Outcome {
    let mut worst = f64::INFINITY;
    for t in 0..100u64 {
        let d = [2, 3, 5][(t % 3) as usize];
        let mut r = stream_rng(t, Stream::Factors);
        let n = r.random_range(d..=40);
        let vs = gaussian(n, d, &mut r);
        let design = loop {
            let cand = random_design(n, 0.7, &mut r);
            if cand.support().len() >= d {
                break cand;
            }
        };
        let g = g_value(&design, &vs).map_err(|e| format!("instance {t}: {e}"))?;
        let oracle = oracle_g(design.weights(), &vs);
        ensure((g - oracle).abs() <= 1e-8 * oracle, format!("instance {t}: g {g} vs oracle {oracle}"))?;
        ensure(g >= d as f64 - 1e-9, format!("instance {t}: g = {g} < d = {d}"))?;
        worst = worst.min(g - d as f64);
    }
    Ok(format!("100 instances, min g - d = {worst:.3e}"))
}

fn fw_certificate() -> Outcome {
    let mut max_ratio: f64 = 0.0;
    let mut max_iter = 0;
    for t in 0..20u64 {
        let mut r = stream_rng(100 + t, Stream::Factors);
        let d = r.random_range(2..=8);
        let n = r.random_range(d + 1..=200);
        let vs = if t % 2 == 0 {
            gaussian(n, d, &mut r)
        } else {
            // heavy-tailed rows stress the certificate
            DenseMatrix::from_fn(n, d, |_, _| rng::normal(&mut r).powi(3))
        };
        let res = frank_wolfe_design(&vs, 0.01, DEFAULT_MAX_ITER).map_err(|e| format!("set {t}: {e}"))?;
        let g = oracle_g(res.design.weights(), &vs);
        ensure(g <= 1.01 * d as f64 + 1e-9, format!("set {t}: oracle g = {g} > 1.01 d = {}", 1.01 * d as f64))?;
        max_ratio = max_ratio.max(g / d as f64);
        max_iter = max_iter.max(res.iterations);
    }
    Ok(format!("20 sets, max g/d = {max_ratio:.5}, max iterations = {max_iter}"))
}

fn tensorization() -> Outcome {
    let rep = tensorization_suite(20, 15, 3, 20, 0.01, 7).map_err(|e| e.to_string())?;
    ensure(rep.passed() && rep.checked == 20, format!("{:?}", rep.failures))?;
    Ok(format!("{} instances", rep.checked))
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 0..50u64 {
        let mut r = stream_rng(200 + t, Stream::Factors);
        let m = r.random_range(10..=40);
        let n = r.random_range(10..=40);
        let d = r.random_range(1..=4);
        let u = random_orthonormal(m, d, &mut r).map_err(|e| e.to_string())?;
        let v = random_orthonormal(n, d, &mut r).map_err(|e| e.to_string())?;
        let q = gaussian(m, n, &mut r);
        let f = SpectralFeatures::exact(&u, &v).map_err(|e| e.to_string())?;
        let obs = if t % 2 == 0 {
            let mask = passive_mask(m, n, 0.6, 0.6, t).map_err(|e| e.to_string())?;
            observe_passive(&q, &mask, 0.05, t).map_err(|e| e.to_string())?
        } else {
            let sample = active_draw(&Design::uniform(m), &Design::uniform(n), 3 * d + 4, 3 * d + 4, t)
                .map_err(|e| e.to_string())?;
            observe_active(&q, &sample, 0.05, t).map_err(|e| e.to_string())?
        };
        let a = fit_theta_product(&f, &obs, RidgePolicy::Disabled).map_err(|e| format!("{t}: {e}"))?;
        let b = fit_theta_direct(&f, &obs, 0.0).map_err(|e| format!("{t}: {e}"))?;
        let diff = a.theta.max_abs_diff(&b.theta);
        ensure(diff <= 1e-9, format!("instance {t}: |product - direct| = {diff:.3e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("50 instances, max diff = {worst:.3e}"))
}

fn exact_recovery() -> Outcome {
    let mut worst_passive: f64 = 0.0;
    let mut worst_active: f64 = 0.0;
    for t in 0..10u64 {
        let pair = if t % 2 == 0 {
            gen_coherent(60, 4, t)
        } else {
            gen_general(50, 40, 4, ShiftSpec::new(ShiftKind::General, 1.5).unwrap(), t)
        }
        .map_err(|e| e.to_string())?;
        let (m, n, d) = (pair.m(), pair.n(), pair.d());
        let f = SpectralFeatures::exact(&pair.u, &pair.v).map_err(|e| e.to_string())?;

        let mask = passive_mask(m, n, 1.0, 1.0, t).map_err(|e| e.to_string())?;
        let obs = observe_passive(&pair.q, &mask, 0.0, t).map_err(|e| e.to_string())?;
        let theta = fit_theta_product(&f, &obs, RidgePolicy::Disabled).map_err(|e| e.to_string())?;
        let err = norm_max(&(&predict(&f, &theta).map_err(|e| e.to_string())? - &pair.q));
        worst_passive = worst_passive.max(err);

        let budget = (20.0 * d as f64 * ((m + n) as f64).ln()).ceil() as usize;
        let rho = frank_wolfe_design(&pair.u, 0.01, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
        let zeta = frank_wolfe_design(&pair.v, 0.01, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
        let sample = active_draw(&rho.design, &zeta.design, budget, budget, t).map_err(|e| e.to_string())?;
        let obs = observe_active(&pair.q, &sample, 0.0, t).map_err(|e| e.to_string())?;
        let theta = fit_theta_product(&f, &obs, RidgePolicy::Disabled).map_err(|e| format!("active {t}: {e}"))?;
        let err = norm_max(&(&predict(&f, &theta).map_err(|e| e.to_string())? - &pair.q));
        worst_active = worst_active.max(err);
    }
    ensure(
        worst_passive <= 1e-8 && worst_active <= 1e-8,
        format!("max error passive {worst_passive:.3e}, active {worst_active:.3e}"),
    )?;
    Ok(format!("10 pairs, max error passive {worst_passive:.3e}, active {worst_active:.3e}"))
}

fn medians(results: &[TrialResult], field: fn(&mnar_core::harness::EstimatorSummary) -> Option<f64>) -> Result<BTreeMap<EstimatorKind, f64>, String> {
    let summary = summarize(results).map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for kind in EstimatorKind::ALL {
        if let Some(s) = summary_for(&summary, kind) {
            ensure(s.failed == 0, format!("{kind}: {} failed trials", s.failed))?;
            out.insert(kind, field(s).ok_or_else(|| format!("{kind}: no results"))?);
        }
    }
    Ok(out)
}

fn table_config(model: ModelKind, m: usize, n: usize, p: f64, trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(model, m, n, 5);
    cfg.p_row = p;
    cfg.p_col = p;
    cfg.sigma_q = 0.1;
    cfg.trials = trials;
    cfg.seed = 2024;
    cfg
}

fn coherent_table() -> Outcome {
    let cfg = table_config(ModelKind::Coherent, 200, 200, 0.1, 50);
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let med = medians(&res, |s| s.mse.map(|q| q.median))?;
    let (a, p, l) = (med[&EstimatorKind::Active], med[&EstimatorKind::Passive], med[&EstimatorKind::Lll22]);
    let detail = format!("median MSE active {a:.3e}, passive {p:.3e}, lll22 {l:.3e}");
    ensure(a <= 5e-5, format!("{detail}; active above 5e-5"))?;
    ensure(p / a >= 3.0, format!("{detail}; passive/active = {:.2} < 3", p / a))?;
    let between = (a.min(p) <= l && l <= a.max(p)) || (l / p <= 2.0 && p / l <= 2.0);
    ensure(between, format!("{detail}; lll22 neither between nor within 2x of passive"))?;
    Ok(detail)
}

fn partition_table() -> Outcome {
    let mut cfg = table_config(ModelKind::Partition, 300, 200, 0.1, 50);
    cfg.a = 0.1;
    cfg.b = 0.8;
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let med = medians(&res, |s| s.mse.map(|q| q.median))?;
    let (a, p, l) = (med[&EstimatorKind::Active], med[&EstimatorKind::Passive], med[&EstimatorKind::Lll22]);
    let detail = format!("median MSE active {a:.3e}, passive {p:.3e}, lll22 {l:.3e}");
    ensure(p <= 0.6 * l && a <= 0.6 * l, format!("{detail}; not both below 0.6 x lll22"))?;
    ensure((a - p).abs() <= a.max(p), format!("{detail}; active and passive not comparable"))?;
    Ok(detail)
}

fn coherent_advantage() -> Outcome {
    let mut cfg = table_config(ModelKind::Coherent, 200, 200, 0.05, 30);
    cfg.estimators = vec![EstimatorKind::Passive, EstimatorKind::Active];
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let med = medians(&res, |s| s.max_sq.map(|q| q.median))?;
    let (a, p) = (med[&EstimatorKind::Active], med[&EstimatorKind::Passive]);
    let detail = format!("median max_sq active {a:.3e}, passive {p:.3e}, ratio {:.3}", a / p);
    ensure(a <= p / 5.0, format!("{detail}; ratio above 0.2"))?;
    Ok(detail)
}

fn error_scaling() -> Outcome {
    let d = 3usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in [2usize, 4, 8] {
        // |Ω| = T_row · T_col = k² d²
        let mut cfg = ExperimentConfig::new(ModelKind::General, 120, 100, d);
        cfg.features = FeatureSource::Exact;
        cfg.sigma_q = 0.1;
        cfg.trials = 30;
        cfg.seed = 77;
        cfg.estimators = vec![EstimatorKind::Active];
        cfg.t_row = Some(k * d);
        cfg.t_col = Some(k * d);
        let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let med = medians(&res, |s| s.max_sq.map(|q| q.median))?;
        xs.push(((k * k * d * d) as f64).ln());
        ys.push(med[&EstimatorKind::Active].ln());
    }
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = cov / var;
    let detail = format!(
        "slope {slope:.3} over |Omega| = 4d^2, 16d^2, 64d^2 (median max_sq {:.3e}, {:.3e}, {:.3e})",
        ys[0].exp(),
        ys[1].exp(),
        ys[2].exp()
    );
    ensure((slope + 1.0).abs() <= 0.3, detail.clone())?;
    Ok(detail)
}

fn ssr_bounds_hold() -> Outcome {
    let ssr = ssr_suite(&[(40, 30), (25, 60)], 3, 50, 11).map_err(|e| e.to_string())?;
    ensure(ssr.checked == 100, format!("only {} gated trials", ssr.checked))?;
    ensure(ssr.failures.is_empty(), format!("{} violations: {:?}", ssr.failures.len(), ssr.failures))?;
    let inc = incoherence_suite(80, 4, 50, 11).map_err(|e| e.to_string())?;
    ensure(inc.checked == 50 && inc.failures.is_empty(), format!("incoherence: {:?}", inc.failures))?;
    Ok(format!("recovery bound 100/100 gated ({} skipped), incoherence 50/50", ssr.skipped))
}

fn error_decomp_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 0..50u64 {
        let pair = gen_general(30, 25, 3, ShiftSpec::new(ShiftKind::General, 1.0).unwrap(), 300 + t)
            .map_err(|e| e.to_string())?;
        let mut r = stream_rng(300 + t, Stream::Perturbation);
        let size = rng::uniform(&mut r, 0.01, 0.3);
        let perturb = |f: &OrthonormalFactor, r: &mut rand_chacha::ChaCha8Rng| {
            orthonormalize(&DenseMatrix::from_fn(f.rows(), f.d(), |i, j| f.get(i, j) + size * rng::normal(r)))
        };
        let uhat = perturb(&pair.u, &mut r).map_err(|e| e.to_string())?;
        let vhat = perturb(&pair.v, &mut r).map_err(|e| e.to_string())?;
        let dec = error_decomposition(&pair, &uhat, &vhat).map_err(|e| e.to_string())?;
        let fitted = uhat.matrix().matmul(&dec.m).matmul(&vhat.transpose());
        let recomposed = &fitted + &dec.cross_terms(&pair, &uhat, &vhat);
        let diff = recomposed.max_abs_diff(&pair.q);
        ensure(diff <= 1e-10, format!("instance {t}: |U M Vᵀ + E - Q| = {diff:.3e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("50 instances, max residual {worst:.3e}"))
}

/// Columns `1/√m`, then `√(2/m) cos(2πki/m)` and `√(2/m) sin(2πki/m)`.
fn fourier_basis(m: usize, d: usize) -> OrthonormalFactor {
    let mf = m as f64;
    let u = DenseMatrix::from_fn(m, d, |i, j| {
        if j == 0 {
            return 1.0 / mf.sqrt();
        }
        let k = j.div_ceil(2) as f64;
        let arg = 2.0 * std::f64::consts::PI * k * i as f64 / mf;
        (2.0 / mf).sqrt() * if j % 2 == 1 { arg.cos() } else { arg.sin() }
    });
    OrthonormalFactor::new(u).expect("orthonormal Fourier columns")
}

fn nondegeneracy_frequency() -> Outcome {
    let (m, d, p) = (500, 5, 0.5);
    let u = fourier_basis(m, d);
    let mut pass = 0;
    for t in 0..200u64 {
        let mut r = stream_rng(400 + t, Stream::RowMask);
        let mask: Vec<bool> = (0..m).map(|_| r.random_bool(p)).collect();
        if nondegeneracy_check(&mask, &u, p).map_err(|e| e.to_string())? {
            pass += 1;
        }
    }
    let detail = format!("{pass}/200 masks nondegenerate");
    ensure(pass >= 180, detail.clone())?;
    Ok(detail)
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "Kiefer-Wolfowitz lower bound", budget: Duration::from_secs(5), run: kw_lower_bound },
        Criterion { id: 2, name: "Frank-Wolfe certificate", budget: Duration::from_secs(30), run: fw_certificate },
        Criterion { id: 3, name: "design tensorization", budget: Duration::from_secs(10), run: tensorization },
        Criterion { id: 4, name: "product vs direct least squares", budget: Duration::from_secs(10), run: oracle_equivalence },
        Criterion { id: 5, name: "noiseless exact recovery", budget: Duration::from_secs(5), run: exact_recovery },
        Criterion { id: 6, name: "coherent model table", budget: Duration::from_secs(180), run: coherent_table },
        Criterion { id: 7, name: "partition model table", budget: Duration::from_secs(180), run: partition_table },
        Criterion { id: 8, name: "active advantage under coherence", budget: Duration::from_secs(60), run: coherent_advantage },
        Criterion { id: 9, name: "error scaling with |Omega|", budget: Duration::from_secs(60), run: error_scaling },
        Criterion { id: 10, name: "subspace recovery bounds", budget: Duration::from_secs(30), run: ssr_bounds_hold },
        Criterion { id: 11, name: "error decomposition identity", budget: Duration::from_secs(10), run: error_decomp_identity },
        Criterion { id: 12, name: "nondegeneracy frequency", budget: Duration::from_secs(10), run: nondegeneracy_frequency },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.id.to_string() == *f || c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:.1?}, budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  criterion {:>2}  {:<36} {detail} [{elapsed:.2?}]", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {:>2}  {:<36} {detail} [{elapsed:.2?}]", c.id, c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
