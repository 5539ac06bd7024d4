//! Experiment drivers behind the `timebin` command line.
//!
//! Every driver is a pure function of an [`ExperimentConfig`]; emission is
//! ordered by grid index, so identical configs give identical bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::{
    conditional_probabilities, d2_setting_averaged_probability, total_error, total_error_closed_form,
    CavityConfig,
};
use crate::imperfections::{cutoff_tradeoff_scan, observed_error_with_dark_counts, DarkCountModel, MismatchModel};
use crate::montecarlo::{run_discrimination, Preparation};
use crate::state::{verify_mub, MubIndex};

/// Largest tolerated gap between the brute-force and closed-form error.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;
/// Pass threshold for `mub-verify`.
pub const MUB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("numerical invariant violated: {0}")]
    Invariant(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code: 1 for usage and I/O problems, 2 for invariant failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Invariant(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(ExperimentError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Flat experiment configuration. `|R₁|² = |R₂|²` equals each grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub r_grid: Vec<f64>,
    /// Prepared state. `null` means drawn uniformly in `discriminate` and
    /// `k = 0` elsewhere.
    pub k: Option<usize>,
    /// Last accepted bin; `null` means `4d`.
    pub n_prime: Option<usize>,
    /// Cutoffs for `tradeoff`; `null` means `d+5, d+20, d+50`.
    pub n_prime_list: Option<Vec<usize>>,
    pub eta: f64,
    pub p_dc: f64,
    pub n_trials: u64,
    pub master_seed: u64,
    /// `null` writes to stdout.
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 16,
            r_grid: parse_grid("0.5:0.99:0.01").expect("default grid"),
            k: None,
            n_prime: None,
            n_prime_list: None,
            eta: 1.0,
            p_dc: 0.0,
            n_trials: 100_000,
            master_seed: 42,
            output_path: None,
            output_format: OutputFormat::Csv,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn effective_n_prime(&self) -> usize {
        self.n_prime.unwrap_or(4 * self.d)
    }

    pub fn effective_n_prime_list(&self) -> Vec<usize> {
        self.n_prime_list
            .clone()
            .unwrap_or_else(|| vec![self.d + 5, self.d + 20, self.d + 50])
    }

    pub fn prepared(&self) -> MubIndex {
        MubIndex(self.k.unwrap_or(0))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if self.r_grid.is_empty() {
            return bad("r_grid is empty".into());
        }
        if let Some(r) = self.r_grid.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
            return bad(format!("grid value {r} outside [0, 1)"));
        }
        if let Some(k) = self.k.filter(|k| *k >= self.d) {
            return bad(format!("k = {k} out of range for d = {}", self.d));
        }
        if self.effective_n_prime() < self.d {
            return bad(format!("n_prime {} below d = {}", self.effective_n_prime(), self.d));
        }
        if let Some(n) = self.effective_n_prime_list().into_iter().find(|n| *n < self.d) {
            return bad(format!("n_prime {n} below d = {}", self.d));
        }
        if !(self.eta >= 0.0 && self.eta <= 1.0) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        if !(self.p_dc >= 0.0 && self.p_dc < 1.0) {
            return bad(format!("p_dc {} outside [0, 1)", self.p_dc));
        }
        Ok(())
    }

    fn cavity(&self, r_sq: f64, n_prime: usize) -> Result<CavityConfig<f64>> {
        let cfg = CavityConfig::symmetric(self.d, r_sq, self.prepared(), n_prime)?;
        Ok(MismatchModel::new(self.eta)?.apply(&cfg)?)
    }
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| ExperimentError::Config(format!("bad grid number {s:?}")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![parse(single)?]),
        [a, b, step] => {
            let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
            if !(step > 0.0) || b < a {
                return Err(ExperimentError::Config(format!("bad grid {spec:?}")));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            // Rounding to 12 decimals keeps 0.5 + 49*0.01 at 0.99.
            Ok((0..=n)
                .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(ExperimentError::Config(format!(
            "grid must be start:stop:step, got {spec:?}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MubReport {
    pub d: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn mub_verify(d: usize) -> Result<MubReport> {
    if d == 0 {
        return Err(ExperimentError::Config("d must be at least 1".into()));
    }
    let max_deviation = verify_mub::<f64>(d)?;
    Ok(MubReport {
        d,
        max_deviation,
        tolerance: MUB_TOLERANCE,
        pass: max_deviation < MUB_TOLERANCE,
    })
}

/// Rows and columns of a tabular output file.
pub trait Table: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One grid point of the error sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r_sq: f64,
    pub p_e_analytic: f64,
    pub p_e_closed_form: f64,
    /// Accepted D2 rate with the setting drawn uniformly.
    pub p_d2: f64,
    pub p_e_observed: f64,
    pub accepted_probability: f64,
}

impl Table for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "r_sq",
        "p_e_analytic",
        "p_e_closed_form",
        "p_d2",
        "p_e_observed",
        "accepted_probability",
    ];

    fn fields(&self) -> Vec<String> {
        [
            self.r_sq,
            self.p_e_analytic,
            self.p_e_closed_form,
            self.p_d2,
            self.p_e_observed,
            self.accepted_probability,
        ]
        .into_iter()
        .map(num)
        .collect()
    }
}

pub fn error_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let n_prime = cfg.effective_n_prime();
    let k = cfg.prepared();
    let dc = DarkCountModel::new(cfg.p_dc)?;
    cfg.r_grid
        .par_iter()
        .map(|&r_sq| {
            let cavity = cfg.cavity(r_sq, n_prime)?;
            let p_e_analytic = total_error(&cavity, k)?;
            let p_e_closed_form = total_error_closed_form(cavity.round_trip().r, cfg.d)?;
            let p_d2 = d2_setting_averaged_probability(&cavity, k)?;
            let p_e_observed = observed_error_with_dark_counts(&cavity, &dc)?;
            let accepted_probability = p_d2 + cavity.window_len() as f64 * cfg.p_dc;
            Ok(SweepRow {
                r_sq,
                p_e_analytic,
                p_e_closed_form,
                p_d2,
                p_e_observed,
                accepted_probability,
            })
        })
        .collect()
}

/// Fails if the two error routes disagree anywhere on the sweep.
pub fn check_sweep(rows: &[SweepRow]) -> Result<()> {
    for row in rows {
        let gap = (row.p_e_analytic - row.p_e_closed_form).abs();
        if gap > CLOSED_FORM_TOLERANCE {
            return Err(ExperimentError::Invariant(format!(
                "closed form differs from direct sum by {gap:e} at r_sq = {}",
                row.r_sq
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub r_sq: f64,
    pub n_prime: usize,
    pub observed_error: f64,
    pub accepted_probability: f64,
}

impl Table for TradeoffRow {
    const HEADER: &'static [&'static str] = &["r_sq", "n_prime", "observed_error", "accepted_probability"];

    fn fields(&self) -> Vec<String> {
        vec![
            num(self.r_sq),
            self.n_prime.to_string(),
            num(self.observed_error),
            num(self.accepted_probability),
        ]
    }
}

pub fn tradeoff(cfg: &ExperimentConfig) -> Result<Vec<TradeoffRow>> {
    cfg.validate()?;
    let cutoffs = cfg.effective_n_prime_list();
    let dc = DarkCountModel::new(cfg.p_dc)?;
    let per_r: Vec<Vec<TradeoffRow>> = cfg
        .r_grid
        .par_iter()
        .map(|&r_sq| {
            let cavity = cfg.cavity(r_sq, cfg.d)?;
            Ok(cutoff_tradeoff_scan(&cavity, &dc, &cutoffs)?
                .into_iter()
                .map(|p| TradeoffRow {
                    r_sq,
                    n_prime: p.n_prime,
                    observed_error: p.observed_error,
                    accepted_probability: p.accepted_probability,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_r.into_iter().flatten().collect())
}

/// Empirical vs analytic `P(m|k)` for one cell of the discrimination matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationCell {
    pub r_sq: f64,
    pub k: usize,
    pub m: usize,
    pub trials: u64,
    pub accepted: u64,
    pub p_hat: f64,
    /// `P(m|k) + W p_dc`, first order in the dark-count rate.
    pub p_analytic: f64,
    pub z: f64,
}

impl Table for DiscriminationCell {
    const HEADER: &'static [&'static str] = &["r_sq", "k", "m", "trials", "accepted", "p_hat", "p_analytic", "z"];

    fn fields(&self) -> Vec<String> {
        vec![
            num(self.r_sq),
            self.k.to_string(),
            self.m.to_string(),
            self.trials.to_string(),
            self.accepted.to_string(),
            num(self.p_hat),
            num(self.p_analytic),
            num(self.z),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationSummary {
    pub r_sq: f64,
    pub n_trials: u64,
    pub master_seed: u64,
    pub accepted: u64,
    pub p_e_hat: f64,
    pub p_e_analytic: f64,
    pub p_e_z: f64,
    pub p_d2_hat: f64,
    pub p_d2_analytic: f64,
    pub p_d2_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationRun {
    pub summary: DiscriminationSummary,
    pub cells: Vec<DiscriminationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub d: usize,
    pub n_prime: usize,
    pub eta: f64,
    pub p_dc: f64,
    pub runs: Vec<DiscriminationRun>,
}

fn z_score(observed: f64, expected: f64, n: u64) -> f64 {
    let var = expected * (1.0 - expected) / n as f64;
    if var > 0.0 {
        (observed - expected) / var.sqrt()
    } else if observed == expected {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Monte Carlo discrimination experiment for every grid value. Grid point
/// `i` uses master seed `master_seed + i`.
pub fn discriminate(cfg: &ExperimentConfig) -> Result<DiscriminationReport> {
    cfg.validate()?;
    if cfg.n_trials == 0 {
        return Err(ExperimentError::Config("n_trials must be at least 1".into()));
    }
    let n_prime = cfg.effective_n_prime();
    let dc = DarkCountModel::new(cfg.p_dc)?;
    let preparation = match cfg.k {
        Some(k) => Preparation::Fixed(MubIndex(k)),
        None => Preparation::Uniform,
    };
    let mut runs = Vec::with_capacity(cfg.r_grid.len());
    for (i, &r_sq) in cfg.r_grid.iter().enumerate() {
        let cavity = cfg.cavity(r_sq, n_prime)?;
        let seed = cfg.master_seed.wrapping_add(i as u64);
        let stats = run_discrimination(&cavity, &dc, preparation, cfg.n_trials, seed)?;
        let dark = cavity.window_len() as f64 * cfg.p_dc;
        // P(m|k) depends on (m - k) mod d only.
        let base = conditional_probabilities(&cavity, MubIndex(0))?;
        let cells = stats
            .cells
            .iter()
            .map(|(&(k, m), c)| {
                let p_analytic = base[(m + cfg.d - k) % cfg.d] + dark;
                let p_hat = c.accepted as f64 / c.trials as f64;
                DiscriminationCell {
                    r_sq,
                    k,
                    m,
                    trials: c.trials,
                    accepted: c.accepted,
                    p_hat,
                    p_analytic,
                    z: z_score(p_hat, p_analytic, c.trials),
                }
            })
            .collect();
        let p_e_analytic = observed_error_with_dark_counts(&cavity, &dc)?;
        let p_e_hat = stats.p_e_hat().unwrap_or(f64::NAN);
        let p_d2_analytic = base.iter().sum::<f64>() / cfg.d as f64 + dark;
        let p_d2_hat = stats.accepted_fraction();
        runs.push(DiscriminationRun {
            summary: DiscriminationSummary {
                r_sq,
                n_trials: cfg.n_trials,
                master_seed: seed,
                accepted: stats.accepted(),
                p_e_hat,
                p_e_analytic,
                p_e_z: z_score(p_e_hat, p_e_analytic, stats.accepted()),
                p_d2_hat,
                p_d2_analytic,
                p_d2_z: z_score(p_d2_hat, p_d2_analytic, cfg.n_trials),
            },
            cells,
        });
    }
    Ok(DiscriminationReport {
        d: cfg.d,
        n_prime,
        eta: cfg.eta,
        p_dc: cfg.p_dc,
        runs,
    })
}

impl DiscriminationReport {
    pub fn cells(&self) -> Vec<DiscriminationCell> {
        self.runs.iter().flat_map(|r| r.cells.iter().cloned()).collect()
    }

    /// Human-readable summary, one line per grid value.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for run in &self.runs {
            let r = &run.summary;
            let _ = writeln!(
                s,
                "r_sq={:.6} trials={} accepted={} P_E: mc={:.6} analytic={:.6} z={:+.2} | P_D2: mc={:.6} analytic={:.6} z={:+.2}",
                r.r_sq, r.n_trials, r.accepted, r.p_e_hat, r.p_e_analytic, r.p_e_z, r.p_d2_hat, r.p_d2_analytic, r.p_d2_z
            );
        }
        s
    }
}

/// Serializes rows as CSV (17 significant digits) or a JSON array.
pub fn emit_rows<R: Table>(rows: &[R], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(R::HEADER)?;
            for row in rows {
                w.write_record(row.fields())?;
            }
            w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

pub fn parse_rows<R: Table>(bytes: &[u8], format: OutputFormat) -> Result<Vec<R>> {
    match format {
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(bytes);
            let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
            if header != R::HEADER {
                return Err(ExperimentError::Config(format!("unexpected header {header:?}")));
            }
            r.deserialize().map(|row| row.map_err(Into::into)).collect()
        }
        OutputFormat::Json => Ok(serde_json::from_slice(bytes)?),
    }
}

/// The discrimination report: the cell table for CSV, the full report for JSON.
pub fn emit_report(report: &DiscriminationReport, format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => emit_rows(&report.cells(), format),
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Writes to `path`, or stdout when `None`.
pub fn write_output(bytes: &[u8], path: Option<&std::path::Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
