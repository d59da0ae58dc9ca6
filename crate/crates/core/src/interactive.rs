//! Sequentially interactive protocols.
//!
//! * Block-sparse means: a detection stage sketches every block against a
//!   shared Rademacher vector, rounds the clipped sketch to one bit, and votes
//!   over repetitions for the block carrying the energy. An estimation stage
//!   then runs the noninteractive sparse estimator on the detected block and
//!   its two neighbours.
//! * Sparse means: successive elimination. Each round spreads fresh users over
//!   the surviving coordinates and halves the active set until `2s` remain.
//!
//! Rounds are strict barriers: the channel assignment of round `k` is computed
//! only from messages of earlier rounds, which [`audit_elimination`] checks
//! against a recorded [`Transcript`].

use serde::{Deserialize, Serialize};

use crate::channels::{clip, pack_signs, round_up_probability, unpack_signs, MAX_MESSAGE_BITS};
use crate::error::{Error, Result};
use crate::model::{MeanVector, SampleSource, Stage, StageBreakdown, Window};
use crate::noninteractive::{estimate_sparse_noninteractive, threshold_top_s, EstimatorReport, GroupingPlan};
use crate::rng::{PublicRandomness, Stream};

/// `ln(s/ε)`, floored at 1.
pub fn log_factor(s: usize, eps: f64) -> f64 {
    (s as f64 / eps).ln().max(1.0)
}

/// Default number of independent sketch repetitions.
pub const DEFAULT_REPETITIONS: usize = 18;

/// Failure probability of the per-repetition ℓ∞ estimate of the block bits.
pub const DETECTION_FAILURE: f64 = 0.01;

/// Parameters of the detection stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub d: usize,
    pub s: usize,
    pub ell: usize,
    pub eps: f64,
    /// Clipping level `Δ = 5 √(s ln(s/ε))`.
    pub delta_clip: f64,
    /// Bias a detectable block's bit must reach. Blocks are flagged when their
    /// estimated bit mean reaches `τ / 2`.
    pub tau: f64,
    pub repetitions: usize,
    /// Reconstructed `T`-bit vectors per repetition, chosen so the bit means are
    /// learned to ℓ∞ accuracy `τ / 2` with probability `1 - DETECTION_FAILURE`.
    pub samples_per_repetition: u64,
}

impl DetectionConfig {
    /// Clipping level and threshold at their analytic values
    /// `Δ = 5√(s L)`, `τ = ε / (40 √(s L))` with `L = ln(s/ε)`.
    pub fn new(d: usize, s: usize, ell: usize, eps: f64) -> Result<Self> {
        if d == 0 || s == 0 || s > d || ell == 0 {
            return Err(Error::InvalidParameter(format!(
                "detection needs 1 <= s <= d and ell >= 1, got d = {d}, s = {s}, ell = {ell}"
            )));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {eps}")));
        }
        let root = (s as f64 * log_factor(s, eps)).sqrt();
        let mut cfg = Self {
            d,
            s,
            ell,
            eps,
            delta_clip: 5.0 * root,
            tau: eps / (40.0 * root),
            repetitions: DEFAULT_REPETITIONS,
            samples_per_repetition: 0,
        };
        cfg.samples_per_repetition = cfg.samples_for_accuracy(cfg.tau / 2.0);
        Ok(cfg)
    }

    /// Sizes the stage to a total user budget and derives `τ` from the accuracy
    /// that budget affords.
    pub fn from_budget(d: usize, s: usize, ell: usize, eps: f64, users: u64) -> Result<Self> {
        let cfg = Self::new(d, s, ell, eps)?;
        if cfg.block_count() == 1 {
            return Ok(cfg);
        }
        let per_rep = users / (cfg.repetitions as u64 * cfg.users_per_sample());
        if per_rep == 0 {
            return Err(Error::InsufficientUsers {
                required: cfg.repetitions as u64 * cfg.users_per_sample(),
                available: users,
            });
        }
        Ok(cfg.with_samples_per_repetition(per_rep))
    }

    /// Fixes the per-repetition sample count; `τ` becomes twice the ℓ∞
    /// accuracy it guarantees.
    pub fn with_samples_per_repetition(mut self, n: u64) -> Self {
        self.samples_per_repetition = n.max(1);
        self.tau = 2.0 * self.accuracy_for_samples(self.samples_per_repetition);
        self
    }

    pub fn with_repetitions(mut self, r: usize) -> Self {
        self.repetitions = r.max(1);
        self
    }

    fn union_log(&self) -> f64 {
        (2.0 * self.block_count() as f64 / DETECTION_FAILURE).ln()
    }

    /// Hoeffding sample size for ℓ∞ accuracy `acc` over `T` ±1 means.
    pub fn samples_for_accuracy(&self, acc: f64) -> u64 {
        (2.0 * self.union_log() / (acc * acc)).ceil() as u64
    }

    pub fn accuracy_for_samples(&self, n: u64) -> f64 {
        (2.0 * self.union_log() / n as f64).sqrt()
    }

    /// Number of blocks `T = ⌈d/s⌉`.
    pub fn block_count(&self) -> usize {
        self.d.div_ceil(self.s)
    }

    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        let start = j * self.s;
        start..(start + self.s).min(self.d)
    }

    /// Users per reconstructed `T`-bit vector.
    pub fn users_per_sample(&self) -> u64 {
        self.block_count().div_ceil(self.bits_per_user()) as u64
    }

    fn bits_per_user(&self) -> usize {
        self.ell.min(self.block_count()).min(MAX_MESSAGE_BITS)
    }

    pub fn users_required(&self) -> u64 {
        if self.block_count() == 1 {
            return 0;
        }
        self.repetitions as u64 * self.samples_per_repetition * self.users_per_sample()
    }

    pub fn flag_threshold(&self) -> f64 {
        self.tau / 2.0
    }

    /// Minimum vote count `R / 16` for a block to be returned.
    pub fn vote_threshold(&self) -> f64 {
        self.repetitions as f64 / 16.0
    }

    /// Whether `ε <= 1/16`, the regime in which the clipping analysis holds.
    pub fn in_proof_regime(&self) -> bool {
        self.eps <= 1.0 / 16.0
    }
}

/// Result of [`detect_block`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionOutcome {
    /// 0-based block index.
    pub block: Option<usize>,
    pub votes: Vec<u32>,
    pub users: u64,
}

const XI_TAG: u64 = 0x5849;
const ROUNDING_TAG: u64 = 0x524e44;

/// Detection stage. Shared sketch vectors are drawn from `public`; users'
/// private rounding coins come from a stream derived from it.
pub fn detect_block<S: SampleSource + ?Sized>(
    source: &mut S,
    cfg: &DetectionConfig,
    public: &PublicRandomness,
    available_users: u64,
) -> Result<DetectionOutcome> {
    if source.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            actual: source.dim(),
        });
    }
    let t = cfg.block_count();
    if t == 1 {
        return Ok(DetectionOutcome {
            block: Some(0),
            votes: vec![0],
            users: 0,
        });
    }
    let required = cfg.users_required();
    if required > available_users {
        return Err(Error::InsufficientUsers {
            required,
            available: available_users,
        });
    }

    let plan = GroupingPlan::new(t, cfg.bits_per_user())?;
    // coordinates each user of the batch reads, and where its blocks start
    let user_coords: Vec<Vec<usize>> = plan
        .groups()
        .iter()
        .map(|g| g.clone().flat_map(|j| cfg.block_range(j)).collect())
        .collect();
    let start_users = source.users_drawn();
    let mut rounding = public.derive(ROUNDING_TAG).stream();
    let mut votes = vec![0u32; t];
    let mut obs = vec![0i8; cfg.s * plan.bits()];
    let mut xi_user: Vec<Vec<i8>> = user_coords.iter().map(|c| vec![0; c.len()]).collect();
    let mut bit_sums = vec![0i64; t];
    let mut bits = [0i8; MAX_MESSAGE_BITS];
    let mut recon = vec![0i8; t];

    for rep in 0..cfg.repetitions {
        let mut xi_stream = public.derive(XI_TAG + rep as u64).stream();
        let xi: Vec<i8> = (0..cfg.d).map(|_| xi_stream.rademacher()).collect();
        for (dst, coords) in xi_user.iter_mut().zip(&user_coords) {
            for (v, &c) in dst.iter_mut().zip(coords) {
                *v = xi[c];
            }
        }
        bit_sums.iter_mut().for_each(|v| *v = 0);
        for _ in 0..cfg.samples_per_repetition {
            for (g, group) in plan.groups().iter().enumerate() {
                let coords = &user_coords[g];
                let x = &mut obs[..coords.len()];
                source.observe(coords, x);
                let signs = &xi_user[g];
                let mut offset = 0;
                for (k, j) in group.clone().enumerate() {
                    let len = cfg.block_range(j).len();
                    let xbar: i32 = x[offset..offset + len]
                        .iter()
                        .zip(&signs[offset..offset + len])
                        .map(|(&a, &b)| (a * b) as i32)
                        .sum();
                    offset += len;
                    bits[k] = round_bit(xbar as f64, cfg.delta_clip, &mut rounding);
                }
                let message = pack_signs(&bits[..group.len()]);
                unpack_signs(message, &mut recon[group.clone()]);
            }
            for (acc, &m) in bit_sums.iter_mut().zip(&recon) {
                *acc += m as i64;
            }
        }
        let n = cfg.samples_per_repetition as f64;
        for (v, &sum) in votes.iter_mut().zip(&bit_sums) {
            if (sum as f64 / n).abs() >= cfg.flag_threshold() {
                *v += 1;
            }
        }
    }

    let mut best = 0;
    for (j, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = j;
        }
    }
    let block = (votes[best] as f64 >= cfg.vote_threshold()).then_some(best);
    Ok(DetectionOutcome {
        block,
        votes,
        users: source.users_drawn() - start_users,
    })
}

#[inline]
fn round_bit(xbar: f64, delta: f64, rng: &mut Stream) -> i8 {
    if rng.bernoulli(round_up_probability(xbar, delta)) {
        1
    } else {
        -1
    }
}

/// Both stages of the interactive block-sparse estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockInteractivePlan {
    pub detection: DetectionConfig,
    pub estimation_users: u64,
    pub budget: u64,
}

impl BlockInteractivePlan {
    /// Gives `estimation_share` of the budget to the estimation stage and the
    /// rest to detection.
    pub fn from_budget(
        d: usize,
        s: usize,
        ell: usize,
        eps: f64,
        budget: u64,
        estimation_share: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&estimation_share) {
            return Err(Error::InvalidParameter(format!(
                "estimation share {estimation_share} outside [0, 1]"
            )));
        }
        let estimation_users = (budget as f64 * estimation_share).round() as u64;
        let detection = DetectionConfig::from_budget(d, s, ell, eps, budget - estimation_users)?;
        Ok(Self {
            detection,
            estimation_users,
            budget,
        })
    }

    /// Coordinates of blocks `j - 1, j, j + 1`, truncated to `0..d`.
    pub fn estimation_window(&self, j: usize) -> std::ops::Range<usize> {
        let cfg = &self.detection;
        let lo = cfg.block_range(j.saturating_sub(1)).start;
        let hi = cfg.block_range((j + 1).min(cfg.block_count() - 1)).end;
        lo..hi
    }
}

/// Detection, then estimation on the three blocks around the detected one.
/// Outputs zero when nothing is detected.
pub fn estimate_blocksparse_interactive<S: SampleSource + ?Sized>(
    source: &mut S,
    plan: &BlockInteractivePlan,
    public: &PublicRandomness,
) -> Result<EstimatorReport> {
    let cfg = &plan.detection;
    let start = source.users_drawn();
    let detection_users = cfg.users_required();
    if detection_users > plan.budget {
        return Err(Error::BudgetExhausted {
            consumed: 0,
            stages: StageBreakdown::new(),
        });
    }
    let outcome = detect_block(source, cfg, public, plan.budget)?;
    let mut stages = StageBreakdown::new();
    stages.insert(Stage::Detection, outcome.users);
    let remaining = plan.budget - outcome.users;

    let Some(j) = outcome.block else {
        stages.insert(Stage::Estimation, 0);
        return Ok(EstimatorReport {
            estimate: MeanVector::zeros(cfg.d),
            users_consumed: outcome.users,
            stages,
            active_sizes: Vec::new(),
        });
    };

    let window = plan.estimation_window(j);
    let width = window.len();
    let batch = width.div_ceil(cfg.ell.min(width).min(MAX_MESSAGE_BITS)) as u64;
    let n = plan.estimation_users.min(remaining);
    if n < batch {
        return Err(Error::BudgetExhausted {
            consumed: source.users_drawn() - start,
            stages,
        });
    }
    let mut view = Window::new(source, window.start, width)?;
    let local = estimate_sparse_noninteractive(
        &mut view,
        width,
        cfg.s.min(width),
        cfg.ell.min(width).min(MAX_MESSAGE_BITS),
        n,
    )?;
    stages.insert(Stage::Estimation, local.users_consumed);
    let mut full = vec![0.0; cfg.d];
    full[window].copy_from_slice(local.estimate.as_slice());
    Ok(EstimatorReport {
        estimate: MeanVector::new(full)?,
        users_consumed: source.users_drawn() - start,
        stages,
        active_sizes: Vec::new(),
    })
}

/// Exact `E_ξ[(Σ ξ_i μ_i)^2]` by enumerating all sign vectors.
pub fn sketch_second_moment(mu_block: &[f64]) -> Result<f64> {
    let n = guard_block(mu_block.len())?;
    let total: f64 = (0..1usize << n)
        .map(|p| {
            let v = signed_sum(mu_block, p);
            v * v
        })
        .sum();
    Ok(total / (1u64 << n) as f64)
}

/// Fraction of sign vectors `ξ` with `|Σ ξ_i μ_i| >= threshold`.
pub fn sketch_event_frequency(mu_block: &[f64], threshold: f64) -> Result<f64> {
    let n = guard_block(mu_block.len())?;
    let hits = (0..1usize << n)
        .filter(|&p| signed_sum(mu_block, p).abs() >= threshold)
        .count();
    Ok(hits as f64 / (1u64 << n) as f64)
}

/// Exact `E[M | ξ] = E[clip(Σ_i ξ_i X_i, Δ) | ξ] / Δ` for a block whose
/// coordinates have means `mu_block`. Outcomes `x` and `-x` are summed in
/// pairs, so a zero-mean block evaluates to exactly zero.
pub fn conditional_bit_mean(mu_block: &[f64], xi: &[i8], delta: f64) -> Result<f64> {
    let n = guard_block(mu_block.len())?;
    if xi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: xi.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let full = (1usize << n) - 1;
    let mut total = 0.0;
    // patterns with the top bit clear; the complement carries the top bit
    for p in 0..1usize << (n - 1) {
        let q = full ^ p;
        let (pp, vp) = outcome(mu_block, xi, p);
        let (pq, vq) = outcome(mu_block, xi, q);
        total += pp * clip(vp, delta) + pq * clip(vq, delta);
    }
    Ok(total / delta)
}

fn outcome(mu: &[f64], xi: &[i8], pattern: usize) -> (f64, f64) {
    let mut prob = 1.0;
    let mut xbar = 0.0;
    for (i, (&m, &s)) in mu.iter().zip(xi).enumerate() {
        let x = if (pattern >> i) & 1 == 1 { 1.0 } else { -1.0 };
        prob *= (1.0 + m * x) / 2.0;
        xbar += s as f64 * x;
    }
    (prob, xbar)
}

fn signed_sum(mu: &[f64], pattern: usize) -> f64 {
    mu.iter()
        .enumerate()
        .map(|(i, m)| if (pattern >> i) & 1 == 1 { *m } else { -*m })
        .sum()
}

const MAX_BLOCK_ENUMERATION: usize = 20;

fn guard_block(n: usize) -> Result<usize> {
    if n > MAX_BLOCK_ENUMERATION {
        return Err(Error::DomainTooLarge {
            dim: n,
            limit: MAX_BLOCK_ENUMERATION,
        });
    }
    Ok(n)
}

/// Round structure of successive elimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationSchedule {
    pub d: usize,
    pub s: usize,
    pub ell: usize,
    pub eps: f64,
    /// `|A_1| = d, |A_2|, …` for the elimination rounds, followed by the size
    /// of the set handed to the final stage.
    pub active_sizes: Vec<usize>,
    /// Per-coordinate accuracy targets of the elimination rounds.
    pub accuracy: Vec<f64>,
    /// Users spent in each elimination round.
    pub round_users: Vec<u64>,
    pub final_accuracy: f64,
    pub final_users: u64,
}

/// Budget share of the final estimation stage in [`EliminationSchedule::from_budget`].
pub const FINAL_STAGE_SHARE: f64 = 0.25;

impl EliminationSchedule {
    fn sizes(d: usize, s: usize) -> Vec<usize> {
        let floor = 2 * s;
        let mut sizes = vec![d];
        while *sizes.last().unwrap() > floor {
            let a = *sizes.last().unwrap();
            sizes.push(floor.max(a.div_ceil(2)));
        }
        sizes
    }

    fn validate(d: usize, s: usize, ell: usize, eps: f64) -> Result<()> {
        if d == 0 || s == 0 || s > d || ell == 0 {
            return Err(Error::InvalidParameter(format!(
                "elimination needs 1 <= s <= d and ell >= 1, got d = {d}, s = {s}, ell = {ell}"
            )));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {eps}")));
        }
        Ok(())
    }

    /// Round `k` gets accuracy `ε/(4√s)` with failure `1/(20 K |A_k|)` by
    /// Hoeffding; the final stage gets accuracy `ε/√(8s)` with failure
    /// `1/(20 |A|)`.
    pub fn hoeffding(d: usize, s: usize, ell: usize, eps: f64) -> Result<Self> {
        Self::validate(d, s, ell, eps)?;
        let active_sizes = Self::sizes(d, s);
        let rounds = active_sizes.len() - 1;
        let k = rounds.max(1) as f64;
        let alpha = eps / (4.0 * (s as f64).sqrt());
        let ell_eff = ell.min(MAX_MESSAGE_BITS);
        let users_for = |a: usize, obs: f64| ((obs * a as f64) / ell_eff.min(a) as f64).ceil() as u64;
        let round_users = active_sizes[..rounds]
            .iter()
            .map(|&a| users_for(a, 2.0 * (40.0 * k * a as f64).ln() / (alpha * alpha)))
            .collect();
        let last = *active_sizes.last().unwrap();
        let final_accuracy = eps / (8.0 * s as f64).sqrt();
        let final_obs = 2.0 * (40.0 * last as f64).ln() / (final_accuracy * final_accuracy);
        Ok(Self {
            d,
            s,
            ell,
            eps,
            accuracy: vec![alpha; rounds],
            active_sizes,
            round_users,
            final_accuracy,
            final_users: users_for(last, final_obs),
        })
    }

    /// The Hoeffding schedule's shape fitted to a total budget: the final
    /// stage gets [`FINAL_STAGE_SHARE`] and the elimination rounds split the
    /// rest in proportion to their Hoeffding sizes. Accuracy fields are
    /// recomputed from the resulting per-coordinate observation counts.
    pub fn from_budget(d: usize, s: usize, ell: usize, eps: f64, budget: u64) -> Result<Self> {
        let shape = Self::hoeffding(d, s, ell, eps)?;
        let rounds = shape.rounds();
        let final_users = if rounds == 0 {
            budget
        } else {
            (budget as f64 * FINAL_STAGE_SHARE).round() as u64
        };
        let pool = (budget - final_users) as f64;
        let shape_total: u64 = shape.round_users.iter().sum();
        let round_users: Vec<u64> = shape
            .round_users
            .iter()
            .map(|&n| (pool * n as f64 / shape_total as f64).floor() as u64)
            .collect();
        let mut sched = Self {
            round_users,
            final_users,
            ..shape
        };
        let ell_eff = ell.min(MAX_MESSAGE_BITS);
        for k in 0..=rounds {
            let a = sched.active_sizes[k];
            let users = if k < rounds { sched.round_users[k] } else { sched.final_users };
            let per_user = ell_eff.min(a) as u64;
            let needed = (a as u64).div_ceil(per_user);
            if users < needed {
                return Err(Error::InsufficientUsers {
                    required: needed,
                    available: users,
                });
            }
            let obs = (users * per_user) as f64 / a as f64;
            let acc = (2.0 * (40.0 * rounds.max(1) as f64 * a as f64).ln() / obs).sqrt();
            if k < rounds {
                sched.accuracy[k] = acc;
            } else {
                sched.final_accuracy = acc;
            }
        }
        Ok(sched)
    }

    pub fn rounds(&self) -> usize {
        self.round_users.len()
    }

    pub fn total_users(&self) -> u64 {
        self.round_users.iter().sum::<u64>() + self.final_users
    }
}

/// One user's record in a [`Transcript`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub coords: Vec<usize>,
    pub bits: u64,
}

/// One round: the active set the assignment was drawn from, and every message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRound {
    pub stage: Stage,
    pub active: Vec<usize>,
    pub users: Vec<UserRecord>,
}

/// Ordered record of a protocol run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub public: Option<PublicRandomness>,
    pub rounds: Vec<TranscriptRound>,
}

impl Transcript {
    pub fn message_count(&self) -> usize {
        self.rounds.iter().map(|r| r.users.len()).sum()
    }
}

/// Round-robin assignment: user `u` reads `ell` consecutive (cyclically)
/// entries of the sorted active set.
fn assign(active: &[usize], ell: usize, user: u64, out: &mut Vec<usize>) {
    let a = active.len();
    let width = ell.min(a);
    let start = (user as usize % a) * width % a;
    out.clear();
    out.extend((0..width).map(|t| active[(start + t) % a]));
}

fn survivors(sums: &[i64], counts: &[u64], active: &[usize], keep: usize) -> Vec<usize> {
    let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] as f64 / counts[i] as f64 };
    let mut order = active.to_vec();
    // stable: ascending indices stay first among equal magnitudes
    order.sort_by(|&a, &b| mean(b).abs().total_cmp(&mean(a).abs()));
    order.truncate(keep);
    order.sort_unstable();
    order
}

/// Successive elimination for `s`-sparse means.
///
/// Coordinate estimates pool every observation collected so far, so a
/// survivor's estimate sharpens from round to round. The output keeps the top
/// `s` coordinates of the final estimates.
pub fn estimate_sparse_interactive<S: SampleSource + ?Sized>(
    source: &mut S,
    schedule: &EliminationSchedule,
    mut transcript: Option<&mut Transcript>,
) -> Result<EstimatorReport> {
    let d = schedule.d;
    if source.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: source.dim(),
        });
    }
    if schedule.active_sizes.len() != schedule.rounds() + 1 || schedule.active_sizes[0] != d {
        return Err(Error::InvalidParameter("schedule does not match its round structure".into()));
    }
    let ell = schedule.ell.min(MAX_MESSAGE_BITS);
    let start_users = source.users_drawn();
    let mut sums = vec![0i64; d];
    let mut counts = vec![0u64; d];
    let mut active: Vec<usize> = (0..d).collect();
    let mut coords = Vec::with_capacity(ell);
    let mut obs = vec![0i8; ell];
    let mut stages = StageBreakdown::new();

    let budgets = schedule
        .round_users
        .iter()
        .map(|&n| (Stage::Detection, n))
        .chain(std::iter::once((Stage::Estimation, schedule.final_users)));
    for (k, (stage, users)) in budgets.enumerate() {
        let a = active.len();
        let width = ell.min(a);
        if users < (a as u64).div_ceil(width as u64) {
            return Err(Error::InsufficientUsers {
                required: (a as u64).div_ceil(width as u64),
                available: users,
            });
        }
        let mut record = transcript.as_ref().map(|_| TranscriptRound {
            stage,
            active: active.clone(),
            users: Vec::with_capacity(users as usize),
        });
        for u in 0..users {
            assign(&active, ell, u, &mut coords);
            let x = &mut obs[..coords.len()];
            source.observe(&coords, x);
            let bits = pack_signs(x);
            // server side: decode the message against the known assignment
            let mut decoded = [0i8; MAX_MESSAGE_BITS];
            unpack_signs(bits, &mut decoded[..coords.len()]);
            for (&c, &v) in coords.iter().zip(&decoded[..coords.len()]) {
                sums[c] += v as i64;
                counts[c] += 1;
            }
            if let Some(r) = record.as_mut() {
                r.users.push(UserRecord {
                    coords: coords.clone(),
                    bits,
                });
            }
        }
        *stages.entry(stage).or_insert(0) += users;
        if let (Some(t), Some(r)) = (transcript.as_deref_mut(), record) {
            t.rounds.push(r);
        }
        if k < schedule.rounds() {
            active = survivors(&sums, &counts, &active, schedule.active_sizes[k + 1]);
        }
    }

    let mut dense = vec![0.0; d];
    for &i in &active {
        if counts[i] > 0 {
            dense[i] = sums[i] as f64 / counts[i] as f64;
        }
    }
    let estimate = threshold_top_s(&dense, schedule.s)?;
    Ok(EstimatorReport {
        estimate,
        users_consumed: source.users_drawn() - start_users,
        stages,
        active_sizes: schedule.active_sizes.clone(),
    })
}

/// Replays a successive-elimination transcript and checks that every round's
/// assignment follows from the messages of earlier rounds alone.
pub fn audit_elimination(transcript: &Transcript, schedule: &EliminationSchedule) -> Result<(), String> {
    let d = schedule.d;
    let ell = schedule.ell.min(MAX_MESSAGE_BITS);
    if transcript.rounds.len() != schedule.rounds() + 1 {
        return Err(format!(
            "transcript has {} rounds, schedule {}",
            transcript.rounds.len(),
            schedule.rounds() + 1
        ));
    }
    let mut sums = vec![0i64; d];
    let mut counts = vec![0u64; d];
    let mut active: Vec<usize> = (0..d).collect();
    let mut expected = Vec::new();
    let mut decoded = [0i8; MAX_MESSAGE_BITS];
    for (k, round) in transcript.rounds.iter().enumerate() {
        if round.active != active {
            return Err(format!("round {k}: active set is not derived from earlier messages"));
        }
        for (u, rec) in round.users.iter().enumerate() {
            assign(&active, ell, u as u64, &mut expected);
            if rec.coords != expected {
                return Err(format!("round {k}, user {u}: assignment deviates from the active set"));
            }
            if rec.coords.len() < 64 && rec.bits >> rec.coords.len() != 0 {
                return Err(format!("round {k}, user {u}: message exceeds its budget"));
            }
            unpack_signs(rec.bits, &mut decoded[..rec.coords.len()]);
            for (&c, &v) in rec.coords.iter().zip(&decoded) {
                sums[c] += v as i64;
                counts[c] += 1;
            }
        }
        if k < schedule.rounds() {
            active = survivors(&sums, &counts, &active, schedule.active_sizes[k + 1]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_product_distribution, planted_block, ProductSource};

    fn source(mu: Vec<f64>, seed: u64) -> ProductSource {
        ProductSource::new(
            make_product_distribution(mu).unwrap(),
            PublicRandomness::new(seed, 1).stream(),
        )
    }

    #[test]
    fn analytic_detection_constants() {
        let cfg = DetectionConfig::new(64, 8, 2, 0.5).unwrap();
        let root = (8.0 * 16f64.ln()).sqrt();
        assert!((cfg.delta_clip - 5.0 * root).abs() < 1e-12);
        assert!((cfg.tau - 0.5 / (40.0 * root)).abs() < 1e-15);
        assert_eq!(cfg.block_count(), 8);
        assert_eq!(cfg.users_per_sample(), 4);
        assert!(cfg.accuracy_for_samples(cfg.samples_per_repetition) <= cfg.tau / 2.0);
        assert!(!cfg.in_proof_regime());
        // s / eps <= e floors the logarithm at one
        let small = DetectionConfig::new(8, 1, 1, 0.5).unwrap();
        assert!((small.delta_clip - 5.0).abs() < 1e-12);
        assert!(DetectionConfig::new(8, 9, 1, 0.5).is_err());
        assert!(DetectionConfig::new(8, 2, 1, 0.0).is_err());
    }

    #[test]
    fn budgeted_detection_is_consistent() {
        let cfg = DetectionConfig::from_budget(32, 4, 4, 0.5, 1_000_000).unwrap();
        assert!(cfg.users_required() <= 1_000_000);
        assert!((cfg.tau / 2.0 - cfg.accuracy_for_samples(cfg.samples_per_repetition)).abs() < 1e-15);
        assert!(DetectionConfig::from_budget(32, 4, 4, 0.5, 10).is_err());
    }

    #[test]
    fn single_block_needs_no_users() {
        let cfg = DetectionConfig::new(4, 4, 1, 0.5).unwrap();
        let mut src = source(vec![0.0; 4], 0);
        let out = detect_block(&mut src, &cfg, &PublicRandomness::new(0, 0), 0).unwrap();
        assert_eq!(out.block, Some(0));
        assert_eq!(src.users_drawn(), 0);
    }

    #[test]
    fn detection_rejects_short_budgets() {
        let cfg = DetectionConfig::new(32, 4, 4, 0.5).unwrap().with_samples_per_repetition(10);
        let mut src = source(vec![0.0; 32], 0);
        assert!(matches!(
            detect_block(&mut src, &cfg, &PublicRandomness::new(0, 0), 10),
            Err(Error::InsufficientUsers { .. })
        ));
    }

    #[test]
    fn detection_accounting_matches_config() {
        let cfg = DetectionConfig::new(32, 4, 4, 0.5).unwrap().with_samples_per_repetition(50);
        let mut src = source(vec![0.0; 32], 3);
        let out = detect_block(&mut src, &cfg, &PublicRandomness::new(3, 0), u64::MAX).unwrap();
        assert_eq!(out.users, cfg.users_required());
        assert_eq!(src.users_drawn(), 18 * 50 * 2);
    }

    #[test]
    fn estimation_window_examples() {
        let plan = BlockInteractivePlan {
            detection: DetectionConfig::new(64, 4, 2, 0.5).unwrap(),
            estimation_users: 100,
            budget: u64::MAX,
        };
        // fifth of sixteen blocks: coordinates 16..28 (1-based 17..28)
        assert_eq!(plan.estimation_window(4), 12..24);
        assert_eq!(plan.estimation_window(5), 16..28);
        assert_eq!(plan.estimation_window(0), 0..8);
        assert_eq!(plan.estimation_window(15), 56..64);
    }

    #[test]
    fn zero_mean_block_estimate_spends_nothing_on_estimation() {
        let plan = BlockInteractivePlan::from_budget(32, 4, 4, 0.5, 400_000, 0.05).unwrap();
        let mut src = source(vec![0.0; 32], 9);
        let r = estimate_blocksparse_interactive(&mut src, &plan, &PublicRandomness::new(9, 2)).unwrap();
        assert_eq!(r.estimate, MeanVector::zeros(32));
        assert_eq!(r.stage(Stage::Estimation), 0);
        assert_eq!(r.users_consumed, src.users_drawn());
    }

    #[test]
    fn block_estimate_budget_errors_carry_accounting() {
        let mut plan = BlockInteractivePlan::from_budget(32, 4, 4, 0.5, 400_000, 0.0).unwrap();
        let mut rng = PublicRandomness::new(1, 1).stream();
        let mu = planted_block(32, 4, 0.5, &mut rng).unwrap();
        let mut src = source(mu.into_inner(), 1);
        plan.budget = plan.detection.users_required();
        match estimate_blocksparse_interactive(&mut src, &plan, &PublicRandomness::new(1, 1)) {
            Err(Error::BudgetExhausted { consumed, stages }) => {
                assert_eq!(consumed, plan.detection.users_required());
                assert_eq!(stages[&Stage::Detection], consumed);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
        plan.budget = 5;
        assert!(matches!(
            estimate_blocksparse_interactive(&mut src, &plan, &PublicRandomness::new(1, 1)),
            Err(Error::BudgetExhausted { consumed: 0, .. })
        ));
    }

    #[test]
    fn sketch_moments_small_cases() {
        assert_eq!(sketch_second_moment(&[0.5, -0.25]).unwrap(), 0.3125);
        assert_eq!(sketch_event_frequency(&[1.0, 1.0], 1.5).unwrap(), 0.5);
        let xi = [1, -1, 1];
        assert_eq!(conditional_bit_mean(&[0.0; 3], &xi, 2.0).unwrap(), 0.0);
        // no clipping: E[clip(ξ·X)] / Δ = ξ·μ / Δ
        let m = conditional_bit_mean(&[0.2, -0.4, 0.1], &xi, 10.0).unwrap();
        assert!((m - (0.2 + 0.4 + 0.1) / 10.0).abs() < 1e-15);
        assert!(sketch_second_moment(&[0.0; 21]).is_err());
    }

    #[test]
    fn elimination_sizes_halve_to_twice_s() {
        let sched = EliminationSchedule::hoeffding(16, 2, 1, 0.5).unwrap();
        assert_eq!(sched.active_sizes, vec![16, 8, 4]);
        assert_eq!(sched.rounds(), 2);
        let sched = EliminationSchedule::hoeffding(100, 4, 3, 0.5).unwrap();
        assert_eq!(sched.active_sizes, vec![100, 50, 25, 13, 8]);
        let sched = EliminationSchedule::hoeffding(8, 4, 2, 0.5).unwrap();
        assert_eq!(sched.active_sizes, vec![8]);
        assert_eq!(sched.rounds(), 0);
    }

    #[test]
    fn budgeted_schedule_fits_its_budget() {
        let sched = EliminationSchedule::from_budget(256, 4, 1, 0.5, 20_000).unwrap();
        assert!(sched.total_users() <= 20_000);
        assert!(sched.total_users() >= 20_000 - sched.rounds() as u64);
        assert!(sched.round_users.iter().all(|&n| n > 0));
        assert!(EliminationSchedule::from_budget(256, 4, 1, 0.5, 300).is_err());
    }

    #[test]
    fn dense_case_skips_elimination() {
        // d = 2s: estimate every coordinate, keep the top s
        let sched = EliminationSchedule::from_budget(8, 4, 2, 0.5, 4000).unwrap();
        let mu = vec![0.6, 0.0, -0.6, 0.0, 0.6, 0.0, 0.0, 0.6];
        let mut src = source(mu.clone(), 2);
        let r = estimate_sparse_interactive(&mut src, &sched, None).unwrap();
        assert_eq!(r.stage(Stage::Detection), 0);
        assert_eq!(r.estimate.support(), vec![0, 2, 4, 7]);
        assert_eq!(r.users_consumed, 4000);
    }

    #[test]
    fn elimination_transcript_passes_audit() {
        let sched = EliminationSchedule::from_budget(16, 2, 1, 0.5, 3000).unwrap();
        let mut mu = vec![0.0; 16];
        mu[3] = 0.7;
        mu[12] = -0.7;
        let mut src = source(mu, 5);
        let mut t = Transcript::default();
        let r = estimate_sparse_interactive(&mut src, &sched, Some(&mut t)).unwrap();
        assert_eq!(r.active_sizes, vec![16, 8, 4]);
        assert_eq!(t.message_count() as u64, r.users_consumed);
        audit_elimination(&t, &sched).unwrap();
        assert!(r.estimate.support_size() <= 2);

        // tamper with an early message: later active sets no longer follow
        let mut forged = t.clone();
        let mut flip = 0;
        for rec in &mut forged.rounds[0].users {
            if rec.coords == [3] {
                rec.bits = flip;
                flip ^= 1;
            }
        }
        assert!(audit_elimination(&forged, &sched).is_err());
    }
}
