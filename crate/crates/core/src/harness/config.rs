use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::DEFAULT_MAX_ITER;
use crate::error::{Error, Result};
use crate::estimator::RidgePolicy;
use crate::transfer::{ModelKind, ShiftKind, ShiftSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Passive,
    Active,
    Lll22,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Passive, EstimatorKind::Active, EstimatorKind::Lll22];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Passive => "passive",
            EstimatorKind::Active => "active",
            EstimatorKind::Lll22 => "lll22",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the estimators get their singular factors from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Rank-d SVD of the observed source.
    #[default]
    Estimated,
    /// The generating factors U, V.
    Exact,
}

fn default_a() -> f64 {
    0.1
}
fn default_b() -> f64 {
    0.8
}
fn default_sigma_q() -> f64 {
    0.1
}
fn default_prob() -> f64 {
    0.1
}
fn default_one() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    0.01
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_trials() -> usize {
    50
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}
fn default_shift() -> ShiftSpec {
    ShiftSpec {
        kind: ShiftKind::General,
        magnitude: 1.0,
    }
}

/// One experiment. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Rows; the coherent model is square and takes `m = n` when omitted.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    pub d: usize,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_shift")]
    pub shift: ShiftSpec,
    /// Directory with a saved pair, for `from_files`.
    #[serde(default)]
    pub source_dir: Option<PathBuf>,
    #[serde(default = "default_sigma_q")]
    pub sigma_q: f64,
    #[serde(default)]
    pub sigma_p: f64,
    /// Probability that each source entry is observed.
    #[serde(default = "default_one")]
    pub p_source: f64,
    #[serde(default = "default_prob")]
    pub p_row: f64,
    #[serde(default = "default_prob")]
    pub p_col: f64,
    #[serde(default)]
    pub t_row: Option<usize>,
    #[serde(default)]
    pub t_col: Option<usize>,
    #[serde(default = "default_eps")]
    pub design_eps: f64,
    #[serde(default = "default_max_iter")]
    pub design_max_iter: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub features: FeatureSource,
    #[serde(default)]
    pub ridge: RidgePolicy,
    /// Wall times make the result file nondeterministic, so they are off by
    /// default and written as 0.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// One config field mapped to a list of values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<BTreeMap<String, Vec<serde_json::Value>>>,
}

impl ExperimentConfig {
    /// Minimal config with every optional field at its default.
    pub fn new(model: ModelKind, m: usize, n: usize, d: usize) -> Self {
        let mut cfg: ExperimentConfig =
            serde_json::from_value(serde_json::json!({ "model": model, "d": d }))
                .expect("defaults deserialize");
        cfg.m = Some(m);
        cfg.n = Some(n);
        cfg
    }

    /// `(m, n)` after applying the square default of the coherent model.
    pub fn dims(&self) -> Result<(usize, usize)> {
        match (self.model, self.m, self.n) {
            (ModelKind::Coherent, m, n) => {
                let n = n.or(m).ok_or_else(|| Error::Parameter("n: required".into()))?;
                if m.is_some_and(|m| m != n) {
                    return Err(Error::Parameter(format!(
                        "m: coherent model is square, got m={}, n={n}",
                        m.unwrap_or(0)
                    )));
                }
                Ok((n, n))
            }
            (_, Some(m), Some(n)) => Ok((m, n)),
            (ModelKind::FromFiles, _, _) => Err(Error::Parameter(
                "m, n: required (they must match the files)".into(),
            )),
            (_, None, _) => Err(Error::Parameter("m: required".into())),
            (_, _, None) => Err(Error::Parameter("n: required".into())),
        }
    }

    /// Active budgets, defaulting to `round(m·p_row)` and `round(n·p_col)`.
    pub fn budgets(&self) -> Result<(usize, usize)> {
        let (m, n) = self.dims()?;
        Ok((
            self.t_row.unwrap_or_else(|| (m as f64 * self.p_row).round() as usize),
            self.t_col.unwrap_or_else(|| (n as f64 * self.p_col).round() as usize),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.dims()?;
        let bad = |field: &str, msg: String| Err(Error::Parameter(format!("{field}: {msg}")));
        if m == 0 || n == 0 {
            return bad("m", format!("dimensions must be positive, got {m}x{n}"));
        }
        if self.d == 0 || self.d > m.min(n) {
            return bad("d", format!("must lie in 1..={}, got {}", m.min(n), self.d));
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators", "must name at least one estimator".into());
        }
        for (field, p) in [("p_row", self.p_row), ("p_col", self.p_col)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, format!("must lie in [0, 1], got {p}"));
            }
        }
        if !(self.p_source > 0.0 && self.p_source <= 1.0) {
            return bad("p_source", format!("must lie in (0, 1], got {}", self.p_source));
        }
        for (field, s) in [("sigma_q", self.sigma_q), ("sigma_p", self.sigma_p)] {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(field, format!("must be nonnegative, got {s}"));
            }
        }
        if self.model == ModelKind::Partition && !(self.a.is_finite() && self.b.is_finite()) {
            return bad("a", "partition parameters must be finite".into());
        }
        if self.model == ModelKind::General {
            ShiftSpec::new(self.shift.kind, self.shift.magnitude)
                .map_err(|e| Error::Parameter(format!("shift: {e}")))?;
        }
        if self.model == ModelKind::FromFiles && self.source_dir.is_none() {
            return bad("source_dir", "required for model from_files".into());
        }
        if self.estimators.contains(&EstimatorKind::Active) {
            if !(self.design_eps > 0.0) {
                return bad("design_eps", format!("must be positive, got {}", self.design_eps));
            }
            if self.design_max_iter == 0 {
                return bad("design_max_iter", "must be at least 1".into());
            }
            let (tr, tc) = self.budgets()?;
            if tr == 0 {
                return bad("t_row", "active budget must be at least 1".into());
            }
            if tc == 0 {
                return bad("t_col", "active budget must be at least 1".into());
            }
        }
        if self.sweep.is_some() {
            return bad("sweep", "must be expanded before running".into());
        }
        Ok(())
    }
}

/// A config ready to run, with a label naming its sweep value.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRun {
    pub label: Option<String>,
    pub config: ExperimentConfig,
}

fn value_label(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `results.csv` with label `p_row=0.2` becomes `results_p_row=0.2.csv`.
pub fn suffixed_path(path: &Path, label: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{label}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{label}"),
    };
    path.with_file_name(name)
}

/// Parses a config document and expands its sweep, if any.
pub fn parse_config(text: &str) -> Result<Vec<PlannedRun>> {
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let base: ExperimentConfig = serde_json::from_value(value.clone())?;
    let Some(sweep) = base.sweep.clone() else {
        base.validate()?;
        return Ok(vec![PlannedRun { label: None, config: base }]);
    };
    if sweep.len() != 1 {
        return Err(Error::Parameter(format!(
            "sweep: must map exactly one field, got {}",
            sweep.len()
        )));
    }
    let (field, values) = sweep.into_iter().next().expect("one entry");
    if field == "sweep" {
        return Err(Error::Parameter("sweep: cannot sweep over itself".into()));
    }
    if values.is_empty() {
        return Err(Error::Parameter(format!("sweep: no values for {field}")));
    }
    let obj = value.as_object_mut().ok_or_else(|| Error::Parameter("config must be an object".into()))?;
    obj.remove("sweep");
    let mut runs = Vec::with_capacity(values.len());
    for v in values {
        obj.insert(field.clone(), v.clone());
        let mut config: ExperimentConfig = serde_json::from_value(serde_json::Value::Object(obj.clone()))
            .map_err(|e| Error::Parameter(format!("sweep: {field} = {v}: {e}")))?;
        let label = format!("{field}={}", value_label(&v));
        config.output_path = config.output_path.map(|p| suffixed_path(&p, &label));
        config.validate()?;
        runs.push(PlannedRun { label: Some(label), config });
    }
    Ok(runs)
}

pub fn load_config(path: &Path) -> Result<Vec<PlannedRun>> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Json(j) => Error::Format(format!("{}: {j}", path.display())),
        other => other,
    })
}
