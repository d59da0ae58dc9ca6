//! CSV output and per-point summaries.

use std::io::Write;

use serde::Serialize;

use super::{ExperimentConfig, ProtocolId, TrialResult};
use crate::error::{Error, Result};

/// Column order of detail and summary rows.
pub const CSV_COLUMNS: [&str; 14] = [
    "protocol",
    "d",
    "s",
    "ell",
    "m",
    "eps",
    "n_users",
    "trial",
    "seed",
    "l2_error",
    "success",
    "wall_ms",
    "stage_detect",
    "stage_estimate",
];

/// Aggregate over the trials of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub protocol: ProtocolId,
    pub d: usize,
    pub s: usize,
    pub ell: usize,
    pub m: Option<usize>,
    pub eps: f64,
    /// The configured budget.
    pub budget: u64,
    pub trials: usize,
    pub median_error: f64,
    pub success_rate: f64,
    pub wall_ms: u64,
    pub median_detect: f64,
    pub median_estimate: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn summarize(cfg: &ExperimentConfig, results: &[TrialResult]) -> Summary {
    let successes = results.iter().filter(|r| r.success).count();
    Summary {
        protocol: cfg.protocol,
        d: cfg.d,
        s: cfg.s,
        ell: cfg.bits(),
        m: cfg.protocol.is_sensing().then(|| cfg.bits()),
        eps: cfg.eps,
        budget: cfg.budget(),
        trials: results.len(),
        median_error: median(results.iter().map(|r| r.l2_error).collect()),
        success_rate: if results.is_empty() {
            0.0
        } else {
            successes as f64 / results.len() as f64
        },
        wall_ms: results.iter().map(|r| r.wall_ms).sum(),
        median_detect: median(results.iter().map(|r| r.stage_detect as f64).collect()),
        median_estimate: median(results.iter().map(|r| r.stage_estimate as f64).collect()),
    }
}

/// Summary rows reuse the detail columns: `trial` reads `summary`, `n_users`
/// holds the budget, `l2_error` the median error, `success` the success rate,
/// and the stage columns their medians.
#[derive(Serialize)]
struct SummaryRow<'a> {
    protocol: ProtocolId,
    d: usize,
    s: usize,
    ell: usize,
    m: Option<usize>,
    eps: f64,
    n_users: u64,
    trial: &'a str,
    seed: Option<u64>,
    l2_error: f64,
    success: f64,
    wall_ms: u64,
    stage_detect: f64,
    stage_estimate: f64,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    }
}

/// Writes the header, detail rows and summary rows.
pub fn write_csv<W: Write>(out: W, rows: &[TrialResult], summaries: &[Summary]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    for s in summaries {
        w.serialize(SummaryRow {
            protocol: s.protocol,
            d: s.d,
            s: s.s,
            ell: s.ell,
            m: s.m,
            eps: s.eps,
            n_users: s.budget,
            trial: "summary",
            seed: None,
            l2_error: s.median_error,
            success: s.success_rate,
            wall_ms: s.wall_ms,
            stage_detect: s.median_detect,
            stage_estimate: s.median_estimate,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Budgets two protocols need to reach the same median error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow {
    pub target_error: f64,
    pub protocol_a: ProtocolId,
    pub n_a: Option<u64>,
    pub protocol_b: ProtocolId,
    pub n_b: Option<u64>,
    /// `n_b / n_a`, empty when either protocol never reaches the target.
    pub ratio: Option<f64>,
}

fn first_reaching(summaries: &[Summary], target: f64) -> Option<u64> {
    summaries
        .iter()
        .find(|s| s.median_error <= target)
        .map(|s| s.budget)
}

/// For each target error, the smallest swept budget at which each protocol's
/// median error is within the target.
pub fn separation_table(a: &[Summary], b: &[Summary], targets: &[f64]) -> Result<Vec<SeparationRow>> {
    let (Some(pa), Some(pb)) = (a.first(), b.first()) else {
        return Err(Error::InvalidParameter("separation needs two nonempty sweeps".into()));
    };
    Ok(targets
        .iter()
        .map(|&t| {
            let n_a = first_reaching(a, t);
            let n_b = first_reaching(b, t);
            SeparationRow {
                target_error: t,
                protocol_a: pa.protocol,
                n_a,
                protocol_b: pb.protocol,
                n_b,
                ratio: n_a.zip(n_b).map(|(x, y)| y as f64 / x as f64),
            }
        })
        .collect())
}

pub fn write_separation_csv<W: Write>(out: W, rows: &[SeparationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
