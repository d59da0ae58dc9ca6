//! Smallest budget reaching a target success rate.

use serde::Serialize;

use super::{run_trials, ExperimentConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    pub n_min: u64,
    pub n_max: u64,
    pub target: f64,
    /// Bisection stops once the bracket ratio is at most this.
    pub factor: f64,
    pub min_trials: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 1 << 32,
            target: 0.9,
            factor: 1.25,
            min_trials: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub n_star: u64,
    /// Every probed budget with its success rate, in probe order.
    pub probes: Vec<(u64, f64)>,
}

/// Doubling from `n_min` until `success_rate(n) ≥ target`, then geometric
/// bisection until the bracket is within `factor`. Returns the smallest probed
/// budget that met the target. Adjacent integers end the search early.
pub fn find_sample_complexity_with<F>(search: &SearchConfig, mut success_rate: F) -> Result<SearchOutcome>
where
    F: FnMut(u64) -> Result<f64>,
{
    if search.n_min == 0 || search.n_min > search.n_max || !(search.factor > 1.0) {
        return Err(Error::InvalidParameter(format!("bad search range {search:?}")));
    }
    let mut probes = Vec::new();
    let mut probe = |n: u64, probes: &mut Vec<(u64, f64)>| -> Result<bool> {
        let rate = success_rate(n)?;
        probes.push((n, rate));
        Ok(rate >= search.target)
    };

    let mut hi = search.n_min;
    let mut lo = 0;
    while !probe(hi, &mut probes)? {
        if hi >= search.n_max {
            return Err(Error::SearchExhausted { max_n: search.n_max });
        }
        lo = hi;
        hi = (hi * 2).min(search.n_max);
    }
    if lo == 0 {
        return Ok(SearchOutcome { n_star: hi, probes });
    }
    while hi - lo > 1 && hi as f64 > lo as f64 * search.factor {
        let mid = ((lo as f64 * hi as f64).sqrt().round() as u64).clamp(lo + 1, hi - 1);
        if probe(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SearchOutcome { n_star: hi, probes })
}

/// Runs the search on `cfg`'s protocol and instance family with at least
/// `search.min_trials` trials per probe. Every probe uses the same trial seeds.
/// Budgets too small for the protocol to run count as zero success.
pub fn find_sample_complexity(cfg: &ExperimentConfig, search: &SearchConfig) -> Result<SearchOutcome> {
    let trials = cfg.trials.max(search.min_trials);
    find_sample_complexity_with(search, |n| {
        let probe = cfg.clone().with_users(n).with_trials(trials, cfg.seed);
        match run_trials(&probe) {
            Ok(results) => Ok(results.iter().filter(|r| r.success).count() as f64 / trials as f64),
            Err(Error::InsufficientUsers { .. } | Error::BudgetExhausted { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    })
}
