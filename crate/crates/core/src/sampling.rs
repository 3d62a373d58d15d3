//! Observation models for the target: passive Bernoulli row/column masks and
//! active budgeted row/column draws, plus MCAR masking of the source.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{singular_values, DenseMatrix, MaskedMatrix, OrthonormalFactor};
use crate::rng::{self, Stream};

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_sigma(sigma: f64, name: &str) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("{name} must be a nonnegative number, got {sigma}")));
    }
    Ok(())
}

/// Independent Bernoulli row and column indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct RowColMask {
    pub eta: Vec<bool>,
    pub nu: Vec<bool>,
    pub p_row: f64,
    pub p_col: f64,
}

impl RowColMask {
    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.eta[i] && self.nu[j]
    }

    pub fn kept_rows(&self) -> Vec<usize> {
        (0..self.eta.len()).filter(|&i| self.eta[i]).collect()
    }

    pub fn kept_cols(&self) -> Vec<usize> {
        (0..self.nu.len()).filter(|&j| self.nu[j]).collect()
    }
}

pub fn passive_mask(m: usize, n: usize, p_row: f64, p_col: f64, seed: u64) -> Result<RowColMask> {
    check_probability(p_row, "p_row")?;
    check_probability(p_col, "p_col")?;
    let mut rr = rng::stream_rng(seed, Stream::RowMask);
    let mut cr = rng::stream_rng(seed, Stream::ColMask);
    Ok(RowColMask {
        eta: (0..m).map(|_| rr.random_bool(p_row)).collect(),
        nu: (0..n).map(|_| cr.random_bool(p_col)).collect(),
        p_row,
        p_col,
    })
}

/// Row and column multisets chosen under a budget; multiplicities are kept as
/// maps from index to count.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSample {
    pub m: usize,
    pub n: usize,
    pub rows: BTreeMap<usize, usize>,
    pub cols: BTreeMap<usize, usize>,
}

impl ActiveSample {
    pub fn t_row(&self) -> usize {
        self.rows.values().sum()
    }

    pub fn t_col(&self) -> usize {
        self.cols.values().sum()
    }

    pub fn row_mult(&self, i: usize) -> usize {
        self.rows.get(&i).copied().unwrap_or(0)
    }

    pub fn col_mult(&self, j: usize) -> usize {
        self.cols.get(&j).copied().unwrap_or(0)
    }

    /// Number of noisy observations of cell (i, j).
    pub fn n_ij(&self, i: usize, j: usize) -> usize {
        self.row_mult(i) * self.col_mult(j)
    }

    /// Total number of observation records `Σ n_ij = T_row · T_col`.
    pub fn total_records(&self) -> usize {
        self.t_row() * self.t_col()
    }
}

fn draw_counts(design: &Design, draws: usize, rng: &mut impl Rng) -> Result<BTreeMap<usize, usize>> {
    let dist = WeightedIndex::new(design.weights())
        .map_err(|e| Error::Parameter(format!("invalid design: {e}")))?;
    let mut counts = BTreeMap::new();
    for _ in 0..draws {
        *counts.entry(dist.sample(rng)).or_insert(0) += 1;
    }
    Ok(counts)
}

/// I.i.d. draws with replacement: `t_row` rows from `rho`, `t_col` columns
/// from `zeta`.
pub fn active_draw(rho: &Design, zeta: &Design, t_row: usize, t_col: usize, seed: u64) -> Result<ActiveSample> {
    if t_row == 0 || t_col == 0 {
        return Err(Error::Parameter("active budgets must be at least 1".into()));
    }
    let mut rr = rng::stream_rng(seed, Stream::RowDraws);
    let mut cr = rng::stream_rng(seed, Stream::ColDraws);
    Ok(ActiveSample {
        m: rho.len(),
        n: zeta.len(),
        rows: draw_counts(rho, t_row, &mut rr)?,
        cols: draw_counts(zeta, t_col, &mut cr)?,
    })
}

/// One noisy measurement of cell (i, j); `t` counts repeats from 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveRecord {
    pub i: usize,
    pub j: usize,
    pub t: usize,
    pub value: f64,
}

/// Observed target data.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservationSet {
    Passive {
        mask: RowColMask,
        values: MaskedMatrix,
    },
    Active {
        sample: ActiveSample,
        records: Vec<ActiveRecord>,
    },
}

impl ObservationSet {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            ObservationSet::Passive { values, .. } => values.shape(),
            ObservationSet::Active { sample, .. } => (sample.m, sample.n),
        }
    }

    /// Number of scalar observations `|Ω|` (repeats counted).
    pub fn len(&self) -> usize {
        match self {
            ObservationSet::Passive { values, .. } => values.observed_count(),
            ObservationSet::Active { records, .. } => records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All `(i, j, value)` observations, repeats included.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        match self {
            ObservationSet::Passive { values, .. } => values.observed().collect(),
            ObservationSet::Active { records, .. } => {
                records.iter().map(|r| (r.i, r.j, r.value)).collect()
            }
        }
    }

    /// Row and column weights `c_i`, `c_j` such that cell (i, j) carries
    /// `c_i · c_j` observations.
    pub fn row_col_weights(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ObservationSet::Passive { mask, .. } => (
                mask.eta.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
                mask.nu.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            ),
            ObservationSet::Active { sample, .. } => (
                (0..sample.m).map(|i| sample.row_mult(i) as f64).collect(),
                (0..sample.n).map(|j| sample.col_mult(j) as f64).collect(),
            ),
        }
    }

    /// Multiplies every observed value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            ObservationSet::Passive { mask, values } => ObservationSet::Passive {
                mask: mask.clone(),
                values: values.scale(c),
            },
            ObservationSet::Active { sample, records } => ObservationSet::Active {
                sample: sample.clone(),
                records: records
                    .iter()
                    .map(|r| ActiveRecord {
                        value: r.value * c,
                        ..*r
                    })
                    .collect(),
            },
        }
    }

    /// Checks the product structure invariants (passive: observed set equals
    /// `η νᵀ`; active: exactly `n_ij` records per cell, numbered `1..=n_ij`).
    pub fn validate(&self) -> Result<()> {
        match self {
            ObservationSet::Passive { mask, values } => {
                if mask.eta.len() != values.rows() || mask.nu.len() != values.cols() {
                    return Err(Error::Dimension("mask and values disagree in shape".into()));
                }
                for i in 0..values.rows() {
                    for j in 0..values.cols() {
                        if values.is_observed(i, j) != mask.observed(i, j) {
                            return Err(Error::Data(format!(
                                "entry ({i}, {j}) breaks the row/column mask structure"
                            )));
                        }
                    }
                }
                Ok(())
            }
            ObservationSet::Active { sample, records } => {
                let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
                for r in records {
                    if r.i >= sample.m || r.j >= sample.n {
                        return Err(Error::Dimension(format!(
                            "record ({}, {}) outside {}x{}",
                            r.i, r.j, sample.m, sample.n
                        )));
                    }
                    let c = counts.entry((r.i, r.j)).or_insert(0);
                    *c += 1;
                    if r.t != *c {
                        return Err(Error::Data(format!(
                            "record ({}, {}) has repeat index {} where {} was expected",
                            r.i, r.j, r.t, c
                        )));
                    }
                    if !r.value.is_finite() {
                        return Err(Error::Data("non-finite observation".into()));
                    }
                }
                for (&i, &ri) in &sample.rows {
                    for (&j, &cj) in &sample.cols {
                        if counts.get(&(i, j)).copied().unwrap_or(0) != ri * cj {
                            return Err(Error::Data(format!(
                                "cell ({i}, {j}) should have {} records",
                                ri * cj
                            )));
                        }
                    }
                }
                if counts.len() != sample.rows.len() * sample.cols.len() {
                    return Err(Error::Data("records outside the sampled rows/columns".into()));
                }
                Ok(())
            }
        }
    }
}

/// `Q_ij + N(0, σ²)` on cells with `η_i = ν_j = 1`, NaN elsewhere.
pub fn observe_passive(q: &DenseMatrix, mask: &RowColMask, sigma_q: f64, seed: u64) -> Result<ObservationSet> {
    check_sigma(sigma_q, "sigma_q")?;
    if mask.eta.len() != q.rows() || mask.nu.len() != q.cols() {
        return Err(Error::Dimension(format!(
            "mask is {}x{} but Q is {}x{}",
            mask.eta.len(),
            mask.nu.len(),
            q.rows(),
            q.cols()
        )));
    }
    let mut noise = rng::stream_rng(seed, Stream::TargetNoise);
    let mut values = MaskedMatrix::all_missing(q.rows(), q.cols());
    for i in 0..q.rows() {
        if !mask.eta[i] {
            continue;
        }
        for j in 0..q.cols() {
            if mask.nu[j] {
                values.set(i, j, Some(q.get(i, j) + sigma_q * rng::normal(&mut noise)));
            }
        }
    }
    Ok(ObservationSet::Passive {
        mask: mask.clone(),
        values,
    })
}

/// `n_ij` independent noisy records per sampled cell. Records are ordered by
/// row, then column, then repeat index, and each consumes the next normal draw
/// of the noise stream.
pub fn observe_active(q: &DenseMatrix, sample: &ActiveSample, sigma_q: f64, seed: u64) -> Result<ObservationSet> {
    check_sigma(sigma_q, "sigma_q")?;
    if sample.m != q.rows() || sample.n != q.cols() {
        return Err(Error::Dimension("active sample does not match Q".into()));
    }
    if sample.rows.keys().any(|&i| i >= q.rows()) || sample.cols.keys().any(|&j| j >= q.cols()) {
        return Err(Error::Dimension("sampled index out of range".into()));
    }
    let mut noise = rng::stream_rng(seed, Stream::TargetNoise);
    let mut records = Vec::with_capacity(sample.total_records());
    for (&i, &ri) in &sample.rows {
        for (&j, &cj) in &sample.cols {
            for t in 1..=ri * cj {
                records.push(ActiveRecord {
                    i,
                    j,
                    t,
                    value: q.get(i, j) + sigma_q * rng::normal(&mut noise),
                });
            }
        }
    }
    Ok(ObservationSet::Active {
        sample: sample.clone(),
        records,
    })
}

/// Whether `| ‖D U‖₂ − √p | ≤ √p / 10` for the diagonal mask D.
pub fn nondegeneracy_check(mask: &[bool], u: &OrthonormalFactor, p: f64) -> Result<bool> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0, 1], got {p}")));
    }
    if mask.len() != u.rows() {
        return Err(Error::Dimension(format!(
            "mask length {} does not match {} rows",
            mask.len(),
            u.rows()
        )));
    }
    let kept: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let norm = if kept.is_empty() {
        0.0
    } else {
        let cols: Vec<usize> = (0..u.d()).collect();
        singular_values(&u.select(&kept, &cols))[0]
    };
    Ok((norm - p.sqrt()).abs() <= p.sqrt() / 10.0)
}

/// Each entry of P kept independently with probability `p`, with additive
/// `N(0, σ_P²)` noise on the kept entries.
pub fn mask_source_mcar(p_mat: &DenseMatrix, p: f64, sigma_p: f64, seed: u64) -> Result<MaskedMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("source keep probability must lie in (0, 1], got {p}")));
    }
    check_sigma(sigma_p, "sigma_p")?;
    let mut mr = rng::stream_rng(seed, Stream::SourceMask);
    let mut nr = rng::stream_rng(seed, Stream::SourceNoise);
    let mut out = MaskedMatrix::all_missing(p_mat.rows(), p_mat.cols());
    for i in 0..p_mat.rows() {
        for j in 0..p_mat.cols() {
            if p >= 1.0 || mr.random_bool(p) {
                let noise = if sigma_p > 0.0 { sigma_p * rng::normal(&mut nr) } else { 0.0 };
                out.set(i, j, Some(p_mat.get(i, j) + noise));
            }
        }
    }
    Ok(out)
}

/// JSON sidecar describing an active observation file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSidecar {
    #[serde(rename = "T_row")]
    pub t_row: usize,
    #[serde(rename = "T_col")]
    pub t_col: usize,
    pub row_mults: BTreeMap<usize, usize>,
    pub col_mults: BTreeMap<usize, usize>,
    pub m: usize,
    pub n: usize,
}

/// Path of the JSON sidecar for an active observation CSV.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

const ACTIVE_HEADER: &str = "i,j,t,value";

/// Passive sets are written in the masked-matrix CSV format; active sets as an
/// `i,j,t,value` CSV plus a `<path>.json` sidecar.
pub fn save_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    match obs {
        ObservationSet::Passive { values, .. } => io::save_masked(path, values),
        ObservationSet::Active { sample, records } => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{ACTIVE_HEADER}")?;
            for r in records {
                writeln!(w, "{},{},{},{}", r.i, r.j, r.t, r.value)?;
            }
            w.flush()?;
            io::save_json(
                &sidecar_path(path),
                &ActiveSidecar {
                    t_row: sample.t_row(),
                    t_col: sample.t_col(),
                    row_mults: sample.rows.clone(),
                    col_mults: sample.cols.clone(),
                    m: sample.m,
                    n: sample.n,
                },
            )
        }
    }
}

/// Reads either observation format, detected from the first line.
pub fn load_observations(path: &Path) -> Result<ObservationSet> {
    let text = std::fs::read_to_string(path)?;
    let origin = path.display().to_string();
    if text.lines().next().map(str::trim) == Some(ACTIVE_HEADER) {
        let side: ActiveSidecar = io::load_json(&sidecar_path(path))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = Vec::new();
        for rec in rdr.deserialize::<ActiveRecord>() {
            records.push(rec.map_err(|e| Error::Format(format!("{origin}: {e}")))?);
        }
        let sample = ActiveSample {
            m: side.m,
            n: side.n,
            rows: side.row_mults,
            cols: side.col_mults,
        };
        if sample.t_row() != side.t_row || sample.t_col() != side.t_col {
            return Err(Error::Format(format!("{origin}: budgets disagree with multiplicities")));
        }
        let obs = ObservationSet::Active { sample, records };
        obs.validate().map_err(|e| Error::Format(format!("{origin}: {e}")))?;
        Ok(obs)
    } else {
        let values = io::read_masked(text.as_bytes(), &origin)?;
        passive_from_values(values).map_err(|e| Error::Format(format!("{origin}: {e}")))
    }
}

/// Infers the row/column mask from the missing-entry pattern.
pub fn passive_from_values(values: MaskedMatrix) -> Result<ObservationSet> {
    let (m, n) = values.shape();
    let eta: Vec<bool> = (0..m).map(|i| (0..n).any(|j| values.is_observed(i, j))).collect();
    let nu: Vec<bool> = (0..n).map(|j| (0..m).any(|i| values.is_observed(i, j))).collect();
    let mask = RowColMask {
        p_row: eta.iter().filter(|&&b| b).count() as f64 / m as f64,
        p_col: nu.iter().filter(|&&b| b).count() as f64 / n as f64,
        eta,
        nu,
    };
    let obs = ObservationSet::Passive { mask, values };
    obs.validate()?;
    Ok(obs)
}
