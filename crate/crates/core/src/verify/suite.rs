//! Batch runners behind the `verify` command.

use serde::Serialize;

use super::{
    baranyai_partition, chisq_expansion_check, exact_mutual_information, measure_change_slack,
    ZPrior,
};
use crate::channels::Channel;
use crate::rng::{PublicRandomness, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// The worst observed value of the check's figure of merit.
    pub worst: f64,
    pub detail: String,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub baranyai_max_s: usize,
    pub measure_change_cases: usize,
    pub chisq_cases: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            baranyai_max_s: 12,
            measure_change_cases: 1000,
            chisq_cases: 200,
        }
    }
}

/// All partitions for `s ≤ max_s`, `r ∈ {2,3,4}`; worst is the largest
/// class-count ratio to the bound.
pub fn check_baranyai(max_s: usize) -> CheckReport {
    let (mut cases, mut failures, mut worst) = (0, 0, 0.0f64);
    let mut detail = String::new();
    for s in 2..=max_s {
        for r in 2..=4.min(s) {
            cases += 1;
            match baranyai_partition(s, r).map_err(|e| e.to_string()).and_then(|p| {
                p.validate()?;
                Ok(p.classes.len() as f64 / p.class_bound() as f64)
            }) {
                Ok(ratio) => worst = worst.max(ratio),
                Err(e) => {
                    failures += 1;
                    detail = format!("s={s} r={r}: {e}");
                }
            }
        }
    }
    CheckReport {
        name: "baranyai".into(),
        cases,
        failures,
        worst,
        detail,
    }
}

fn random_table(d: usize, rng: &mut Stream) -> Vec<f64> {
    loop {
        let table: Vec<f64> = (0..1usize << d)
            .map(|_| {
                let u = rng.uniform();
                if u < 0.3 {
                    0.0
                } else {
                    (-u.ln()).powi(3)
                }
            })
            .collect();
        if table.iter().any(|&a| a > 0.0) {
            return table;
        }
    }
}

/// Random nonnegative tables for `d ∈ 1..=6`; worst is the minimum slack.
pub fn check_measure_change(cases: usize, seed: u64) -> CheckReport {
    let mut rng = PublicRandomness::new(seed, 1).stream();
    let (mut failures, mut worst) = (0, f64::INFINITY);
    for case in 0..cases {
        let d = 1 + case % 6;
        let slack = measure_change_slack(d, &random_table(d, &mut rng)).unwrap_or(f64::NAN);
        worst = worst.min(slack);
        if !(slack >= -1e-12) {
            failures += 1;
        }
    }
    CheckReport {
        name: "measure_change".into(),
        cases,
        failures,
        worst,
        detail: "min slack, tolerance -1e-12".into(),
    }
}

/// The binary symmetric channel for `γ ∈ {0, 0.1, .., 0.9}`; worst is the
/// largest deviation from `ln2·(1 − h₂((1+γ)/2))`.
pub fn check_mutual_information() -> CheckReport {
    let h2 = |p: f64| {
        let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
        h(p) + h(1.0 - p)
    };
    let identity = Channel::identity(1).expect("identity channel");
    let (mut failures, mut worst) = (0, 0.0f64);
    for k in 0..10 {
        let gamma = k as f64 / 10.0;
        let oracle = std::f64::consts::LN_2 * (1.0 - h2((1.0 + gamma) / 2.0));
        let err = ZPrior::uniform_signs(1, gamma)
            .and_then(|p| exact_mutual_information(&p, &identity))
            .map(|mi| (mi - oracle).abs())
            .unwrap_or(f64::NAN);
        worst = worst.max(err);
        if !(err <= 1e-10) {
            failures += 1;
        }
    }
    CheckReport {
        name: "mutual_information".into(),
        cases: 10,
        failures,
        worst,
        detail: "max |I - closed form|, tolerance 1e-10".into(),
    }
}

/// Random one-bit channels for `d ∈ {2,3}`; worst is the largest
/// `|lhs − rhs|`. KL above χ² also counts as a failure.
pub fn check_chisq(cases: usize, seed: u64) -> CheckReport {
    let mut rng = PublicRandomness::new(seed, 2).stream();
    let (mut failures, mut worst) = (0, 0.0f64);
    let mut detail = "max |lhs - rhs|, tolerance 1e-9".to_string();
    for case in 0..cases {
        let d = 2 + case % 2;
        let s = 1 + rng.below(2 * d);
        let eps = rng.uniform() * (s as f64).sqrt().min(1.0);
        let probs = (0..1usize << d)
            .flat_map(|_| {
                let w = rng.uniform();
                [w, 1.0 - w]
            })
            .collect();
        let outcome = Channel::from_table(d, 2, probs).and_then(|c| chisq_expansion_check(&c, s, eps));
        match outcome {
            Ok(c) => {
                let gap = (c.lhs - c.rhs).abs();
                worst = worst.max(gap);
                if gap > 1e-9 || c.kl > c.lhs + 1e-12 {
                    failures += 1;
                    detail = format!("case {case}: {c:?}");
                }
            }
            Err(e) => {
                failures += 1;
                detail = format!("case {case}: {e}");
            }
        }
    }
    CheckReport {
        name: "chisq_expansion".into(),
        cases,
        failures,
        worst,
        detail,
    }
}

pub fn run_all(config: &SuiteConfig) -> Vec<CheckReport> {
    vec![
        check_baranyai(config.baranyai_max_s),
        check_measure_change(config.measure_change_cases, config.seed),
        check_mutual_information(),
        check_chisq(config.chisq_cases, config.seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let reports = run_all(&SuiteConfig {
            measure_change_cases: 120,
            chisq_cases: 40,
            baranyai_max_s: 8,
            ..SuiteConfig::default()
        });
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
    }
}
