use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mnar_core::design::{frank_wolfe_design, prune_design, Design, DesignRecord};
use mnar_core::estimator::{
    baseline_lll22, extract_features, fit_theta_direct, fit_theta_product, lll22_default_weights, metrics,
    predict,
};
use mnar_core::harness::config::suffixed_path;
use mnar_core::harness::verify::run_all;
use mnar_core::harness::{generate_pair, load_config, run_experiment_with_threads, save_results, summarize};
use mnar_core::io::{load_json, load_masked, load_matrix, save_json, save_masked, save_matrix};
use mnar_core::sampling::{
    active_draw, load_observations, mask_source_mcar, observe_active, observe_passive, passive_mask,
    save_observations,
};
use mnar_core::{
    DenseMatrix, Error, ExperimentConfig, ModelKind, ObservationSet, Result, ShiftSpec, SpectralFeatures,
    TransferPair,
};

use crate::{DesignArgs, EstimateArgs, ExperimentArgs, Fit, GenerateArgs, Mode, SampleArgs, VerifyArgs};

pub struct Context {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

fn single_run(path: &Path) -> Result<ExperimentConfig> {
    let mut runs = load_config(path)?;
    if runs.len() != 1 {
        return Err(Error::Parameter(format!(
            "sweep: {} expands to {} runs; this command takes one",
            path.display(),
            runs.len()
        )));
    }
    Ok(runs.remove(0).config)
}

pub fn generate(ctx: &Context, a: GenerateArgs) -> Result<ExitCode> {
    let cfg = match &a.config {
        Some(path) => single_run(path)?,
        None => {
            let model: ModelKind = a.model.expect("clap enforces --model").into();
            let mut cfg = ExperimentConfig::new(model, 0, 0, a.d.expect("clap enforces --d"));
            cfg.m = a.m;
            cfg.n = a.n;
            cfg.a = a.a;
            cfg.b = a.b;
            cfg.shift = ShiftSpec::new(a.shift.into(), a.magnitude)
                .map_err(|e| Error::Parameter(format!("magnitude: {e}")))?;
            cfg
        }
    };
    let (m, n) = cfg.dims()?;
    if cfg.d == 0 || cfg.d > m.min(n) {
        return Err(Error::Parameter(format!("d: must lie in 1..={}, got {}", m.min(n), cfg.d)));
    }
    let seed = ctx.seed.unwrap_or(cfg.seed);
    let pair = generate_pair(&cfg, seed)?;
    pair.save(&a.out)?;
    let (ep, eq) = pair.reconstruction_error();
    println!(
        "wrote {}x{} rank-{} pair (seed {seed}) to {}; reconstruction {ep:.1e} / {eq:.1e}",
        pair.m(),
        pair.n(),
        pair.d(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn compute_design(vectors: &DenseMatrix, eps: f64, max_iter: usize, prune: bool) -> Result<(Design, usize)> {
    let fw = frank_wolfe_design(vectors, eps, max_iter)?;
    let design = if prune {
        prune_design(&fw.design, vectors, eps)?
    } else {
        fw.design.trimmed()
    };
    Ok((design, fw.iterations))
}

pub fn design(a: DesignArgs) -> Result<ExitCode> {
    let vectors = load_matrix(&a.features)?;
    let (design, iterations) = compute_design(&vectors, a.eps, a.max_iter, !a.no_prune)?;
    let record = DesignRecord::new(&design, &vectors)?;
    save_json(&a.out, &record)?;
    println!(
        "g = {:.6} (eps_hat {:.2e}) on {} of {} vectors after {iterations} iterations",
        record.g_value,
        record.eps_hat,
        record.indices.len(),
        vectors.rows()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_design(path: &Path, size: usize) -> Result<Design> {
    let record: DesignRecord = load_json(path)?;
    if let Some(s) = record.size.filter(|&s| s != size) {
        return Err(Error::Dimension(format!(
            "{} is a design over {s} indices, expected {size}",
            path.display()
        )));
    }
    record.to_design(size)
}

fn active_designs(a: &SampleArgs, m: usize, n: usize) -> Result<(Design, Design)> {
    let features = a.features_dir.as_deref().map(SpectralFeatures::load).transpose()?;
    let side = |file: &Option<PathBuf>, size: usize, row: bool| -> Result<Design> {
        if let Some(path) = file {
            return load_design(path, size);
        }
        let f = features.as_ref().ok_or_else(|| {
            Error::Parameter("row_design, col_design: required for active sampling without --features-dir".into())
        })?;
        let vectors = if row { f.uhat.matrix() } else { f.vhat.matrix() };
        if vectors.rows() != size {
            return Err(Error::Dimension(format!("features have {} rows, expected {size}", vectors.rows())));
        }
        Ok(compute_design(vectors, a.eps, mnar_core::design::DEFAULT_MAX_ITER, true)?.0)
    };
    Ok((side(&a.row_design, m, true)?, side(&a.col_design, n, false)?))
}

pub fn sample(ctx: &Context, a: SampleArgs) -> Result<ExitCode> {
    let pair = TransferPair::load(&a.pair)?;
    let (m, n) = (pair.m(), pair.n());
    let seed = ctx.seed.unwrap_or(0);
    let obs = match a.mode {
        Mode::Passive => {
            let mask = passive_mask(m, n, a.p_row, a.p_col, seed)?;
            observe_passive(&pair.q, &mask, a.sigma_q, seed)?
        }
        Mode::Active => {
            let (rho, zeta) = active_designs(&a, m, n)?;
            let t_row = a.t_row.unwrap_or((m as f64 * a.p_row).round() as usize);
            let t_col = a.t_col.unwrap_or((n as f64 * a.p_col).round() as usize);
            let sample = active_draw(&rho, &zeta, t_row, t_col, seed)?;
            observe_active(&pair.q, &sample, a.sigma_q, seed)?
        }
    };
    save_observations(&a.out, &obs)?;
    println!("wrote {} target observations to {}", obs.len(), a.out.display());
    if let Some(p) = a.p_source {
        let source = mask_source_mcar(&pair.p, p, a.sigma_p, seed)?;
        let path = a
            .source_out
            .clone()
            .unwrap_or_else(|| a.out.with_file_name("P_obs.csv"));
        save_masked(&path, &source)?;
        println!("wrote source with {} observed entries to {}", source.observed_count(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn estimate(a: EstimateArgs) -> Result<ExitCode> {
    let source = a.source.as_deref().map(load_masked).transpose()?;
    let obs = load_observations(&a.obs)?;
    fs::create_dir_all(&a.out)?;
    let qhat = match a.fit {
        Fit::Lll22 => {
            let p_obs = source
                .as_ref()
                .ok_or_else(|| Error::Parameter("source: required for the lll22 fit".into()))?;
            if !matches!(obs, ObservationSet::Passive { .. }) {
                return Err(Error::Parameter("obs: the lll22 fit takes passive observations".into()));
            }
            let (w_p, w_q) = lll22_default_weights(p_obs, &obs, a.d)?;
            baseline_lll22(p_obs, &obs, a.d, w_p, w_q)?
        }
        Fit::Product | Fit::Direct => {
            let features = match (&a.features_dir, &source) {
                (Some(dir), _) => SpectralFeatures::load(dir)?,
                (None, Some(p_obs)) => extract_features(p_obs, a.d)?,
                (None, None) => unreachable!("clap requires a feature source"),
            };
            if features.d() != a.d {
                return Err(Error::Dimension(format!("features have rank {}, but d = {}", features.d(), a.d)));
            }
            let theta = match a.fit {
                Fit::Product => fit_theta_product(&features, &obs, a.ridge.into())?,
                _ => fit_theta_direct(&features, &obs, 0.0)?,
            };
            features.save(&a.out)?;
            theta.save(&a.out)?;
            if theta.ridge_used > 0.0 {
                eprintln!("note: Gram matrices were ill-conditioned; ridge {:.3e} added", theta.ridge_used);
            }
            predict(&features, &theta)?
        }
    };
    save_matrix(&a.out.join("Qhat.csv"), &qhat)?;
    if let Some(truth) = &a.truth {
        let q = load_matrix(truth)?;
        let m = metrics(&qhat, &q)?;
        save_json(&a.out.join("metrics.json"), &m)?;
        println!("max_sq {:.6e}  mse {:.6e}", m.max_sq, m.mse);
    }
    println!("wrote estimate to {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn summary_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    results.with_file_name(format!("{stem}_summary.json"))
}

fn fmt_q(q: Option<mnar_core::harness::Quantiles>) -> String {
    match q {
        Some(q) => format!("{:.3e} [{:.3e}, {:.3e}]", q.median, q.p10, q.p90),
        None => "-".into(),
    }
}

pub fn experiment(ctx: &Context, a: ExperimentArgs) -> Result<ExitCode> {
    let runs = load_config(&a.config)?;
    for run in runs {
        let mut cfg = run.config;
        if let Some(seed) = ctx.seed {
            cfg.seed = seed;
        }
        let out = match (&a.out, &run.label) {
            (Some(p), Some(label)) => suffixed_path(p, label),
            (Some(p), None) => p.clone(),
            (None, label) => cfg.output_path.clone().unwrap_or_else(|| match label {
                Some(l) => suffixed_path(Path::new("results.csv"), l),
                None => PathBuf::from("results.csv"),
            }),
        };
        let results = run_experiment_with_threads(&cfg, ctx.threads)?;
        save_results(&out, &results)?;
        let summaries = summarize(&results)?;
        save_json(&summary_path(&out), &summaries)?;
        match &run.label {
            Some(l) => println!("{l}: {} rows -> {}", results.len(), out.display()),
            None => println!("{} rows -> {}", results.len(), out.display()),
        }
        for s in &summaries {
            println!(
                "  {:<8} ok {:>4}/{:<4} max_sq {}  mse {}",
                s.estimator.name(),
                s.completed,
                s.completed + s.failed,
                fmt_q(s.max_sq),
                fmt_q(s.mse)
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(ctx: &Context, a: VerifyArgs) -> Result<ExitCode> {
    let reports = run_all(ctx.seed.unwrap_or(0))?;
    for r in &reports {
        println!(
            "{}  {:<22} checked {:>4}  skipped {:>4}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.checked,
            r.skipped
        );
        for f in &r.failures {
            println!("      {f}");
        }
    }
    if let Some(path) = &a.out {
        save_json(path, &reports)?;
    }
    Ok(if reports.iter().all(|r| r.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
