//! Experiment driver: configuration, seeded parallel trials, sweeps, and the
//! sample-complexity search.

mod report;
mod search;

pub use report::{
    separation_table, summarize, write_csv, write_separation_csv, SeparationRow, Summary,
    CSV_COLUMNS,
};
pub use search::{find_sample_complexity, find_sample_complexity_with, SearchConfig, SearchOutcome};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactive::{
    estimate_blocksparse_interactive, estimate_sparse_interactive, log_factor,
    BlockInteractivePlan, EliminationSchedule,
};
use crate::model::{
    l2_error, make_product_distribution, planted_block, planted_sparse, HardInstancePrior,
    MeanVector, PriorKind, ProductSource, SampleSource, Stage,
};
use crate::noninteractive::{
    estimate_blocksparse_noninteractive, estimate_sparse_noninteractive, EstimatorReport,
};
use crate::rng::PublicRandomness;
use crate::sensing::{
    compressive_budget, estimate_compressive_interactive, estimate_compressive_noninteractive,
    recovery_certificate, SensingInstance, SensingOracle,
};

/// Estimation share used by the block-interactive protocol when the config
/// does not set one.
pub const DEFAULT_ESTIMATION_SHARE: f64 = 0.02;

const INSTANCE_TAG: u64 = 1;
const SAMPLE_TAG: u64 = 2;
const PUBLIC_TAG: u64 = 3;

/// Registered protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolId {
    SparseNoninteractive,
    SparseInteractive,
    BlockNoninteractive,
    BlockInteractive,
    SensingNoninteractive,
    SensingInteractive,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 6] = [
        ProtocolId::SparseNoninteractive,
        ProtocolId::SparseInteractive,
        ProtocolId::BlockNoninteractive,
        ProtocolId::BlockInteractive,
        ProtocolId::SensingNoninteractive,
        ProtocolId::SensingInteractive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolId::SparseNoninteractive => "sparse-noninteractive",
            ProtocolId::SparseInteractive => "sparse-interactive",
            ProtocolId::BlockNoninteractive => "block-noninteractive",
            ProtocolId::BlockInteractive => "block-interactive",
            ProtocolId::SensingNoninteractive => "sensing-noninteractive",
            ProtocolId::SensingInteractive => "sensing-interactive",
        }
    }

    pub fn is_sensing(&self) -> bool {
        matches!(
            self,
            ProtocolId::SensingNoninteractive | ProtocolId::SensingInteractive
        )
    }

    /// The order of the protocol's sample complexity, without constants.
    /// `bits` is ℓ, or m for sensing.
    pub fn rate(&self, d: usize, s: usize, bits: usize, eps: f64) -> f64 {
        let (df, sf, lf) = (d as f64, s as f64, bits.min(d) as f64);
        let e2 = eps * eps;
        let log_ds = (std::f64::consts::E * df / sf).ln();
        match self {
            ProtocolId::SparseNoninteractive => sf * df * log_ds / (lf * e2),
            ProtocolId::SparseInteractive => sf * df / (lf * e2),
            ProtocolId::BlockNoninteractive => (sf * df + df * df.ln()) / (lf * e2),
            ProtocolId::BlockInteractive => {
                let l = log_factor(s, eps);
                (sf * sf + df * log_ds * l) / (lf * e2) + sf * log_ds * l / e2
            }
            ProtocolId::SensingNoninteractive | ProtocolId::SensingInteractive => {
                compressive_budget(1.0, d, s, bits, eps) as f64
            }
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownProtocol(s.to_string()))
    }
}

/// How each trial draws its mean vector (or sensing signal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    Zero,
    /// `s` uniformly placed coordinates, each `±magnitude`.
    PlantedSparse { magnitude: f64 },
    /// `s` consecutive coordinates at a uniform offset, each `±magnitude`.
    PlantedBlock { magnitude: f64 },
    /// A draw from one of the hard-instance priors at the config's `eps`.
    HardPrior { prior: PriorKind },
    Fixed { mean: Vec<f64> },
}

impl InstanceSpec {
    pub fn draw(&self, d: usize, s: usize, eps: f64, handle: PublicRandomness) -> Result<MeanVector> {
        let mut rng = handle.stream();
        match self {
            InstanceSpec::Zero => Ok(MeanVector::zeros(d)),
            InstanceSpec::PlantedSparse { magnitude } => planted_sparse(d, s, *magnitude, &mut rng),
            InstanceSpec::PlantedBlock { magnitude } => planted_block(d, s, *magnitude, &mut rng),
            InstanceSpec::HardPrior { prior } => {
                Ok(HardInstancePrior::new(*prior, d, s, eps)?.draw(&mut rng))
            }
            InstanceSpec::Fixed { mean } => {
                if mean.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: mean.len(),
                    });
                }
                MeanVector::new(mean.clone())
            }
        }
    }
}

fn default_ell() -> usize {
    1
}

/// One experiment. Exactly one of `n_users` and `budget_constant` is set; the
/// latter scales the protocol's [`ProtocolId::rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolId,
    pub d: usize,
    pub s: usize,
    #[serde(default = "default_ell")]
    pub ell: usize,
    /// Measurements per user, sensing protocols only.
    #[serde(default)]
    pub m: Option<usize>,
    pub eps: f64,
    #[serde(default)]
    pub n_users: Option<u64>,
    #[serde(default)]
    pub budget_constant: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub estimation_share: Option<f64>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Record wall time per trial. Off by default so reports are reproducible
    /// byte for byte.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(protocol: ProtocolId, d: usize, s: usize, ell: usize, eps: f64) -> Self {
        Self {
            protocol,
            d,
            s,
            ell,
            m: protocol.is_sensing().then_some(ell),
            eps,
            n_users: None,
            budget_constant: None,
            trials: 1,
            seed: 0,
            instance: InstanceSpec::Zero,
            estimation_share: None,
            workers: None,
            timing: false,
            output: None,
        }
    }

    pub fn with_users(mut self, n: u64) -> Self {
        self.n_users = Some(n);
        self.budget_constant = None;
        self
    }

    pub fn with_budget_constant(mut self, c: f64) -> Self {
        self.budget_constant = Some(c);
        self.n_users = None;
        self
    }

    pub fn with_trials(mut self, trials: usize, seed: u64) -> Self {
        self.trials = trials;
        self.seed = seed;
        self
    }

    pub fn with_instance(mut self, instance: InstanceSpec) -> Self {
        self.instance = instance;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the master seed and worker count when given.
    pub fn with_overrides(mut self, seed: Option<u64>, workers: Option<usize>) -> Self {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if workers.is_some() {
            self.workers = workers;
        }
        self
    }

    /// Message bits per user: ℓ, or m for sensing.
    pub fn bits(&self) -> usize {
        if self.protocol.is_sensing() {
            self.m.unwrap_or(self.ell)
        } else {
            self.ell
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.d == 0 || self.s == 0 || self.ell == 0 {
            return bad("d, s and ell must be positive".into());
        }
        if self.s > self.d {
            return bad(format!("s = {} exceeds d = {}", self.s, self.d));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.protocol.is_sensing() && !matches!(self.m, Some(m) if m > 0) {
            return bad(format!("{} needs m >= 1", self.protocol));
        }
        match (self.n_users, self.budget_constant) {
            (Some(0), _) => return bad("n_users must be positive".into()),
            (Some(_), None) => {}
            (None, Some(c)) if c > 0.0 => {}
            (None, Some(c)) => return bad(format!("budget constant must be positive, got {c}")),
            _ => return bad("set exactly one of n_users and budget_constant".into()),
        }
        if matches!(self.workers, Some(0)) {
            return bad("workers must be positive".into());
        }
        if let Some(share) = self.estimation_share {
            if !(0.0..=1.0).contains(&share) {
                return bad(format!("estimation share {share} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// The per-trial user budget.
    pub fn budget(&self) -> u64 {
        match (self.n_users, self.budget_constant) {
            (Some(n), _) => n,
            (None, Some(c)) => {
                (c * self.protocol.rate(self.d, self.s, self.bits(), self.eps)).ceil() as u64
            }
            (None, None) => 0,
        }
    }

    fn handle(&self, trial: usize) -> PublicRandomness {
        PublicRandomness::new(self.seed, trial as u64)
    }
}

/// One trial's record; also one CSV detail row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub protocol: ProtocolId,
    pub d: usize,
    pub s: usize,
    pub ell: usize,
    pub m: Option<usize>,
    pub eps: f64,
    /// Users consumed, as counted by the sample source.
    pub n_users: u64,
    pub trial: usize,
    pub seed: u64,
    pub l2_error: f64,
    pub success: bool,
    pub wall_ms: u64,
    pub stage_detect: u64,
    pub stage_estimate: u64,
}

/// A trial together with the truth and the estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

fn audited(report: &EstimatorReport, drawn: u64) -> Result<()> {
    if report.users_consumed != drawn {
        return Err(Error::InvalidParameter(format!(
            "protocol reported {} users but the source served {drawn}",
            report.users_consumed
        )));
    }
    Ok(())
}

/// Runs trial `trial` of `cfg` and keeps the estimate.
pub fn run_trial_detailed(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let handle = cfg.handle(trial);
    let truth = cfg
        .instance
        .draw(cfg.d, cfg.s, cfg.eps, handle.derive(INSTANCE_TAG))?;
    let samples = handle.derive(SAMPLE_TAG).stream();
    let public = handle.derive(PUBLIC_TAG);
    let budget = cfg.budget();
    let (d, s, ell, eps) = (cfg.d, cfg.s, cfg.ell, cfg.eps);

    let (report, estimate) = if cfg.protocol.is_sensing() {
        let m = cfg.bits();
        let instance = SensingInstance::new(truth.as_slice().to_vec(), s, m)?;
        let mu = instance.sign_means();
        let mut oracle = SensingOracle::new(instance, samples);
        let est = match cfg.protocol {
            ProtocolId::SensingInteractive => {
                estimate_compressive_interactive(&mut oracle, eps, budget, None)?
            }
            _ => estimate_compressive_noninteractive(&mut oracle, budget)?,
        };
        audited(&est.report, oracle.users_drawn())?;
        if !recovery_certificate(&est.mu_hat, &mu, &est.x_hat, truth.as_slice())? {
            let (x_err, bound) =
                crate::sensing::certificate_terms(&est.mu_hat, &mu, &est.x_hat, truth.as_slice())?;
            return Err(Error::CertificateViolated { x_err, bound });
        }
        (est.report, est.x_hat)
    } else {
        let dist = make_product_distribution(truth.as_slice().to_vec())?;
        let mut source = ProductSource::new(dist, samples);
        let report = match cfg.protocol {
            ProtocolId::SparseNoninteractive => {
                estimate_sparse_noninteractive(&mut source, d, s, ell, budget)?
            }
            ProtocolId::SparseInteractive => {
                let schedule = EliminationSchedule::from_budget(d, s, ell, eps, budget)?;
                estimate_sparse_interactive(&mut source, &schedule, None)?
            }
            ProtocolId::BlockNoninteractive => {
                estimate_blocksparse_noninteractive(&mut source, d, s, ell, budget)?
            }
            ProtocolId::BlockInteractive => {
                let share = cfg.estimation_share.unwrap_or(DEFAULT_ESTIMATION_SHARE);
                let plan = BlockInteractivePlan::from_budget(d, s, ell, eps, budget, share)?;
                estimate_blocksparse_interactive(&mut source, &plan, &public)?
            }
            _ => unreachable!("sensing protocols handled above"),
        };
        audited(&report, source.users_drawn())?;
        let estimate = report.estimate.as_slice().to_vec();
        (report, estimate)
    };

    let err = l2_error(&MeanVector::new(estimate.clone())?, &truth)?;
    let result = TrialResult {
        protocol: cfg.protocol,
        d,
        s,
        ell: cfg.bits(),
        m: cfg.protocol.is_sensing().then(|| cfg.bits()),
        eps,
        n_users: report.users_consumed,
        trial,
        seed: cfg.seed,
        l2_error: err,
        success: err <= eps,
        wall_ms: if cfg.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
        stage_detect: report.stage(Stage::Detection),
        stage_estimate: report.stage(Stage::Estimation),
    };
    Ok(TrialOutcome {
        result,
        truth: truth.into_inner(),
        estimate,
    })
}

/// Runs trial `trial` of `cfg`. Deterministic in `(cfg, trial)`.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    run_trial_detailed(cfg, trial).map(|o| o.result)
}

/// All trials of `cfg`, in trial order, on up to `cfg.workers` threads.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let work = || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect::<Result<Vec<_>>>()
    };
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Detail rows and per-point summaries of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<TrialResult>,
    pub summaries: Vec<Summary>,
}

/// Runs every trial of `cfg` at each budget in `grid`, which must be strictly
/// increasing. Every grid point reuses the same trial seeds.
pub fn sweep(cfg: &ExperimentConfig, grid: &[u64]) -> Result<SweepResult> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("sweep grid must be strictly increasing".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &n in grid {
        let point = cfg.clone().with_users(n);
        let results = run_trials(&point)?;
        summaries.push(summarize(&point, &results));
        rows.extend(results);
    }
    Ok(SweepResult { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse_cfg() -> ExperimentConfig {
        ExperimentConfig::new(ProtocolId::SparseNoninteractive, 16, 2, 4, 0.5)
            .with_users(4000)
            .with_trials(3, 9)
            .with_instance(InstanceSpec::PlantedSparse { magnitude: 0.4 })
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in ProtocolId::ALL {
            assert_eq!(p.name().parse::<ProtocolId>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert!(matches!(
            "nope".parse::<ProtocolId>(),
            Err(Error::UnknownProtocol(_))
        ));
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "protocol": "block-interactive", "d": 64, "s": 8, "ell": 2, "eps": 0.5,
            "budget_constant": 3.0, "trials": 5, "seed": 1,
            "instance": {"kind": "planted_block", "magnitude": 0.35}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.instance, InstanceSpec::PlantedBlock { magnitude: 0.35 });
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.budget() > 0);
    }

    #[test]
    fn validation() {
        let mut cfg = sparse_cfg();
        cfg.budget_constant = Some(1.0);
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::new(ProtocolId::SparseNoninteractive, 4, 5, 1, 0.5).with_users(10);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(ProtocolId::SensingInteractive, 8, 2, 2, 0.5).with_users(10);
        cfg.m = None;
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"protocol":"sparse-noninteractive","d":4,"s":1,"eps":0.5,"n_users":8,"trials":1,"seed":0,"instance":{"kind":"zero"},"typo":1}"#
        )
        .is_err());
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = sparse_cfg();
        assert_eq!(run_trial(&cfg, 1).unwrap(), run_trial(&cfg, 1).unwrap());
        assert_ne!(run_trial(&cfg, 0).unwrap(), run_trial(&cfg, 1).unwrap());
    }

    #[test]
    fn zero_trials_is_empty() {
        let cfg = sparse_cfg().with_trials(0, 1);
        assert!(run_trials(&cfg).unwrap().is_empty());
    }

    #[test]
    fn zero_mean_error_is_estimate_norm() {
        for p in [
            ProtocolId::SparseNoninteractive,
            ProtocolId::SparseInteractive,
            ProtocolId::BlockNoninteractive,
        ] {
            let cfg = ExperimentConfig::new(p, 16, 2, 2, 0.5)
                .with_users(2000)
                .with_trials(1, 4);
            let out = run_trial_detailed(&cfg, 0).unwrap();
            let norm = out.estimate.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_eq!(out.result.l2_error, norm);
            assert_eq!(out.result.success, norm <= 0.5);
        }
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let mut cfg = sparse_cfg().with_trials(6, 3);
        cfg.workers = Some(1);
        let one = run_trials(&cfg).unwrap();
        cfg.workers = Some(3);
        assert_eq!(one, run_trials(&cfg).unwrap());
    }

    #[test]
    fn sweep_counts_rows() {
        let cfg = sparse_cfg().with_trials(4, 2);
        let out = sweep(&cfg, &[1 << 12, 1 << 14]).unwrap();
        assert_eq!(out.rows.len(), 8);
        assert_eq!(out.summaries.len(), 2);
        assert!(sweep(&cfg, &[1 << 14, 1 << 12]).is_err());
    }

    #[test]
    fn every_protocol_runs() {
        for p in ProtocolId::ALL {
            let instance = if p.is_sensing() {
                InstanceSpec::PlantedSparse { magnitude: 0.5 }
            } else {
                InstanceSpec::PlantedBlock { magnitude: 0.3 }
            };
            let cfg = ExperimentConfig::new(p, 32, 4, 2, 0.5)
                .with_users(200_000)
                .with_trials(1, 11)
                .with_instance(instance);
            let r = run_trial(&cfg, 0).unwrap_or_else(|e| panic!("{p}: {e}"));
            assert!(r.n_users <= 200_000);
            assert_eq!(r.success, r.l2_error <= r.eps);
        }
    }
}
