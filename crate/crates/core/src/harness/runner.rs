use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{frank_wolfe_design, prune_design, Design};
use crate::error::{Error, Result};
use crate::estimator::{
    baseline_lll22, extract_features, fit_theta_product, lll22_default_weights, metrics, predict,
    SpectralFeatures,
};
use crate::harness::config::{EstimatorKind, ExperimentConfig, FeatureSource};
use crate::linalg::{DenseMatrix, MaskedMatrix};
use crate::rng::trial_seed;
use crate::sampling::{active_draw, mask_source_mcar, observe_active, observe_passive, passive_mask, ObservationSet};
use crate::transfer::{gen_coherent, gen_general, gen_partition, ModelKind, TransferPair};

/// One row of the result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub estimator: EstimatorKind,
    pub max_sq: Option<f64>,
    pub mse: Option<f64>,
    pub wall_time_ms: f64,
    pub ridge_used: f64,
    pub error: Option<String>,
    /// Metrics on the scale where the observed source has max-norm 1.
    pub max_sq_normalized: Option<f64>,
    pub mse_normalized: Option<f64>,
}

impl TrialResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(trial: usize, estimator: EstimatorKind, err: &Error) -> Self {
        TrialResult {
            trial,
            estimator,
            max_sq: None,
            mse: None,
            wall_time_ms: 0.0,
            ridge_used: 0.0,
            error: Some(err.to_string()),
            max_sq_normalized: None,
            mse_normalized: None,
        }
    }
}

/// Generates the pair for one trial.
pub fn generate_pair(cfg: &ExperimentConfig, seed: u64) -> Result<TransferPair> {
    let (m, n) = cfg.dims()?;
    match cfg.model {
        ModelKind::Coherent => gen_coherent(n, cfg.d, seed),
        ModelKind::Partition => gen_partition(m, n, cfg.d, cfg.a, cfg.b, seed),
        ModelKind::General => gen_general(m, n, cfg.d, cfg.shift, seed),
        ModelKind::FromFiles => {
            let dir = cfg
                .source_dir
                .as_deref()
                .ok_or_else(|| Error::Parameter("source_dir: required".into()))?;
            let pair = TransferPair::load(dir)?;
            if (pair.m(), pair.n()) != (m, n) || pair.d() != cfg.d {
                return Err(Error::Parameter(format!(
                    "m, n, d: config says {m}x{n} rank {}, files hold {}x{} rank {}",
                    cfg.d,
                    pair.m(),
                    pair.n(),
                    pair.d()
                )));
            }
            Ok(pair)
        }
    }
}

/// Everything shared by the estimators within one trial, on the normalized
/// scale.
struct TrialContext<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    pair: &'a TransferPair,
    p_obs: MaskedMatrix,
    scale: f64,
}

struct Fit {
    qhat: DenseMatrix,
    ridge_used: f64,
}

impl TrialContext<'_> {
    fn features(&self) -> Result<SpectralFeatures> {
        match self.cfg.features {
            FeatureSource::Estimated => extract_features(&self.p_obs, self.cfg.d),
            FeatureSource::Exact => SpectralFeatures::exact(&self.pair.u, &self.pair.v),
        }
    }

    fn passive_obs(&self) -> Result<ObservationSet> {
        let (m, n) = (self.pair.m(), self.pair.n());
        let mask = passive_mask(m, n, self.cfg.p_row, self.cfg.p_col, self.seed)?;
        Ok(observe_passive(&self.pair.q, &mask, self.cfg.sigma_q, self.seed)?.scaled(1.0 / self.scale))
    }

    fn passive(&self, obs: &ObservationSet) -> Result<Fit> {
        let features = self.features()?;
        let theta = fit_theta_product(&features, obs, self.cfg.ridge)?;
        Ok(Fit {
            qhat: predict(&features, &theta)?,
            ridge_used: theta.ridge_used,
        })
    }

    fn active(&self) -> Result<Fit> {
        let features = self.features()?;
        let rho = self.design(features.uhat.matrix())?;
        let zeta = self.design(features.vhat.matrix())?;
        let (t_row, t_col) = self.cfg.budgets()?;
        let sample = active_draw(&rho, &zeta, t_row, t_col, self.seed)?;
        let obs = observe_active(&self.pair.q, &sample, self.cfg.sigma_q, self.seed)?.scaled(1.0 / self.scale);
        let theta = fit_theta_product(&features, &obs, self.cfg.ridge)?;
        Ok(Fit {
            qhat: predict(&features, &theta)?,
            ridge_used: theta.ridge_used,
        })
    }

    fn design(&self, vectors: &DenseMatrix) -> Result<Design> {
        let fw = frank_wolfe_design(vectors, self.cfg.design_eps, self.cfg.design_max_iter)?;
        prune_design(&fw.design, vectors, self.cfg.design_eps)
    }

    fn lll22(&self, obs: &ObservationSet) -> Result<Fit> {
        let (w_p, w_q) = lll22_default_weights(&self.p_obs, obs, self.cfg.d)?;
        Ok(Fit {
            qhat: baseline_lll22(&self.p_obs, obs, self.cfg.d, w_p, w_q)?,
            ridge_used: 0.0,
        })
    }

    fn score(&self, trial: usize, estimator: EstimatorKind, fit: Result<Fit>, started: Option<Instant>) -> TrialResult {
        let fit = match fit {
            Ok(f) => f,
            Err(e) => return TrialResult::failed(trial, estimator, &e),
        };
        let wall_time_ms = started.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
        let q = &self.pair.q;
        let normalized = metrics(&fit.qhat, &q.scale(1.0 / self.scale));
        let original = metrics(&fit.qhat.scale(self.scale), q);
        match (original, normalized) {
            (Ok(o), Ok(nm)) => TrialResult {
                trial,
                estimator,
                max_sq: Some(o.max_sq),
                mse: Some(o.mse),
                wall_time_ms,
                ridge_used: fit.ridge_used,
                error: None,
                max_sq_normalized: Some(nm.max_sq),
                mse_normalized: Some(nm.mse),
            },
            (Err(e), _) | (_, Err(e)) => TrialResult::failed(trial, estimator, &e),
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize, fixed: Option<&TransferPair>) -> Vec<TrialResult> {
    let seed = trial_seed(cfg.seed, trial as u64);
    let fail_all = |e: &Error| {
        cfg.estimators
            .iter()
            .map(|&k| TrialResult::failed(trial, k, e))
            .collect::<Vec<_>>()
    };
    let generated;
    let pair = match fixed {
        Some(p) => p,
        None => match generate_pair(cfg, seed) {
            Ok(p) => {
                generated = p;
                &generated
            }
            Err(e) => return fail_all(&e),
        },
    };
    let p_obs = match mask_source_mcar(&pair.p, cfg.p_source, cfg.sigma_p, seed) {
        Ok(p) => p,
        Err(e) => return fail_all(&e),
    };
    let max = p_obs.max_abs_observed();
    let scale = if max > 0.0 { max } else { 1.0 };
    let ctx = TrialContext {
        cfg,
        seed,
        pair,
        p_obs: p_obs.scale(1.0 / scale),
        scale,
    };
    let timer = || cfg.record_wall_time.then(Instant::now);

    let needs_passive = cfg
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::Passive | EstimatorKind::Lll22));
    let passive_obs = needs_passive.then(|| ctx.passive_obs());

    cfg.estimators
        .iter()
        .map(|&kind| {
            let started = timer();
            let obs = match kind {
                EstimatorKind::Active => return ctx.score(trial, kind, ctx.active(), started),
                _ => passive_obs.as_ref().expect("passive observations drawn"),
            };
            let obs = match obs {
                Ok(o) => o,
                Err(e) => return TrialResult::failed(trial, kind, e),
            };
            let fit = match kind {
                EstimatorKind::Passive => ctx.passive(obs),
                _ => ctx.lll22(obs),
            };
            ctx.score(trial, kind, fit, started)
        })
        .collect()
}

/// Runs every trial of a validated config on the current rayon pool. Results
/// are ordered by trial, then by the configured estimator order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let fixed = match cfg.model {
        ModelKind::FromFiles => Some(generate_pair(cfg, cfg.seed)?),
        _ => None,
    };
    let per_trial: Vec<Vec<TrialResult>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t, fixed.as_ref()))
        .collect();
    Ok(per_trial.into_iter().flatten().collect())
}

/// As [`run_experiment`], on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<TrialResult>> {
    match threads {
        None => run_experiment(cfg),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Parameter(format!("threads: {e}")))?;
            pool.install(|| run_experiment(cfg))
        }
    }
}

pub const RESULT_HEADER: [&str; 9] = [
    "trial",
    "estimator",
    "max_sq",
    "mse",
    "wall_time_ms",
    "ridge_used",
    "error",
    "max_sq_normalized",
    "mse_normalized",
];

pub fn write_results(w: impl std::io::Write, results: &[TrialResult]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    for r in results {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_results(path: &Path, results: &[TrialResult]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_results(std::fs::File::create(path)?, results)
}

pub fn load_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        out.push(r?);
    }
    Ok(out)
}
