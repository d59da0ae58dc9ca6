//! Noninteractive protocols built on simulate-and-infer.
//!
//! Users are split into batches of `⌈d/ℓ⌉`. Within a batch, user `g` sends the
//! signs of the `g`-th group of at most `ℓ` consecutive coordinates of its own
//! sample. Because coordinates are independent, concatenating the groups of
//! one batch gives an exact draw from the source distribution, so the server
//! can run any unconstrained estimator on the reconstructed samples.

use std::ops::Range;

use crate::channels::{pack_signs, unpack_signs, Message, MAX_MESSAGE_BITS};
use crate::error::{Error, Result};
use crate::model::{MeanVector, SampleSource, Stage, StageBreakdown};

/// Partition of `0..d` into `⌈d/ℓ⌉` consecutive groups of at most `ℓ`
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingPlan {
    d: usize,
    ell: usize,
    groups: Vec<Range<usize>>,
}

impl GroupingPlan {
    pub fn new(d: usize, ell: usize) -> Result<Self> {
        if d == 0 || ell == 0 {
            return Err(Error::InvalidParameter(format!(
                "grouping needs d >= 1 and ell >= 1, got d = {d}, ell = {ell}"
            )));
        }
        if ell > MAX_MESSAGE_BITS {
            return Err(Error::InvalidParameter(format!(
                "messages wider than {MAX_MESSAGE_BITS} bits are not supported (ell = {ell})"
            )));
        }
        let groups = (0..d)
            .step_by(ell)
            .map(|start| start..(start + ell).min(d))
            .collect();
        Ok(Self { d, ell, groups })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bits(&self) -> usize {
        self.ell
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    /// Users needed for one reconstructed sample.
    pub fn batch_size(&self) -> usize {
        self.groups.len()
    }
}

/// Rebuilds one full sample from one message per group.
pub fn simulate_and_infer_reconstruct(plan: &GroupingPlan, messages: &[Message]) -> Result<Vec<i8>> {
    let mut out = vec![0i8; plan.dim()];
    reconstruct_into(plan, messages.iter().map(|m| m.bits), messages.len(), &mut out)?;
    Ok(out)
}

fn reconstruct_into(
    plan: &GroupingPlan,
    bits: impl Iterator<Item = u64>,
    count: usize,
    out: &mut [i8],
) -> Result<()> {
    if count != plan.batch_size() {
        return Err(Error::MessageCount {
            expected: plan.batch_size(),
            actual: count,
        });
    }
    for (group, bits) in plan.groups.iter().zip(bits) {
        let width = group.len();
        if width < 64 && bits >> width != 0 {
            return Err(Error::BudgetExceeded {
                count: 64 - bits.leading_zeros() as usize,
                bits: width,
            });
        }
        unpack_signs(bits, &mut out[group.clone()]);
    }
    Ok(())
}

/// What an estimator returns, with its sample accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub estimate: MeanVector,
    pub users_consumed: u64,
    pub stages: StageBreakdown,
    /// Active-set sizes per round, for protocols that eliminate coordinates.
    pub active_sizes: Vec<usize>,
}

impl EstimatorReport {
    pub(crate) fn single_stage(estimate: MeanVector, stage: Stage, users: u64) -> Self {
        let mut stages = StageBreakdown::new();
        stages.insert(stage, users);
        Self {
            estimate,
            users_consumed: users,
            stages,
            active_sizes: Vec::new(),
        }
    }

    pub fn stage(&self, stage: Stage) -> u64 {
        self.stages.get(&stage).copied().unwrap_or(0)
    }
}

/// Averages `batches` reconstructed samples. Consumes exactly
/// `batches * plan.batch_size()` users.
pub(crate) fn simulate_and_infer_mean<S: SampleSource + ?Sized>(
    source: &mut S,
    plan: &GroupingPlan,
    batches: u64,
) -> Vec<f64> {
    let d = plan.dim();
    let mut sums = vec![0i64; d];
    let mut sample = vec![0i8; d];
    let mut observed = [0i8; MAX_MESSAGE_BITS];
    let coords: Vec<Vec<usize>> = plan.groups().iter().map(|g| g.clone().collect()).collect();
    let mut bits = vec![0u64; plan.batch_size()];
    for _ in 0..batches {
        for (slot, group) in bits.iter_mut().zip(&coords) {
            let obs = &mut observed[..group.len()];
            source.observe(group, obs);
            // the coordinate-select channel on the user's group
            *slot = pack_signs(obs);
        }
        reconstruct_into(plan, bits.iter().copied(), bits.len(), &mut sample)
            .expect("messages are produced within budget");
        for (acc, &x) in sums.iter_mut().zip(&sample) {
            *acc += x as i64;
        }
    }
    let n = batches as f64;
    sums.into_iter().map(|v| v as f64 / n).collect()
}

/// Clamps to `[-1, 1]`, then keeps the `s` entries of largest magnitude (lowest
/// index wins ties) and zeroes the rest.
pub fn threshold_top_s(v: &[f64], s: usize) -> Result<MeanVector> {
    if s == 0 || s > v.len() {
        return Err(Error::InvalidParameter(format!(
            "sparsity {s} must lie in [1, {}]",
            v.len()
        )));
    }
    let clamped: Vec<f64> = v.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    let mut order: Vec<usize> = (0..v.len()).collect();
    // stable sort keeps lower indices first among equal magnitudes
    order.sort_by(|&a, &b| clamped[b].abs().total_cmp(&clamped[a].abs()));
    let mut out = vec![0.0; v.len()];
    for &i in &order[..s] {
        out[i] = clamped[i];
    }
    MeanVector::new(out)
}

fn check_inputs<S: SampleSource + ?Sized>(source: &S, d: usize, s: usize) -> Result<()> {
    if source.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: source.dim(),
        });
    }
    if s == 0 || s > d {
        return Err(Error::InvalidParameter(format!("sparsity {s} must lie in [1, {d}]")));
    }
    Ok(())
}

fn batches_for(plan: &GroupingPlan, n_users: u64) -> Result<u64> {
    let batch = plan.batch_size() as u64;
    if n_users < batch {
        return Err(Error::InsufficientUsers {
            required: batch,
            available: n_users,
        });
    }
    Ok(n_users / batch)
}

/// Simulate-and-infer followed by the empirical mean and top-`s` hard
/// thresholding. Leftover users (`n_users mod ⌈d/ℓ⌉`) are not used.
pub fn estimate_sparse_noninteractive<S: SampleSource + ?Sized>(
    source: &mut S,
    d: usize,
    s: usize,
    ell: usize,
    n_users: u64,
) -> Result<EstimatorReport> {
    check_inputs(source, d, s)?;
    let plan = GroupingPlan::new(d, ell)?;
    let batches = batches_for(&plan, n_users)?;
    let mean = simulate_and_infer_mean(source, &plan, batches);
    let estimate = threshold_top_s(&mean, s)?;
    Ok(EstimatorReport::single_stage(
        estimate,
        Stage::Estimation,
        batches * plan.batch_size() as u64,
    ))
}

/// Keeps the two blocks (consecutive runs of `s` coordinates) with the largest
/// ℓ2 norm, lowest block index winning ties, and zeroes everything else.
pub fn keep_top_two_blocks(v: &[f64], s: usize) -> Vec<f64> {
    let blocks: Vec<Range<usize>> = (0..v.len())
        .step_by(s.max(1))
        .map(|start| start..(start + s).min(v.len()))
        .collect();
    let norms: Vec<f64> = blocks
        .iter()
        .map(|b| v[b.clone()].iter().map(|x| x * x).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut out = vec![0.0; v.len()];
    for &j in order.iter().take(2) {
        let b = blocks[j].clone();
        out[b.clone()].copy_from_slice(&v[b]);
    }
    out
}

/// Block-sparse estimator: the simulate-and-infer mean of all coordinates,
/// restricted to its two heaviest blocks of `s` consecutive coordinates.
pub fn estimate_blocksparse_noninteractive<S: SampleSource + ?Sized>(
    source: &mut S,
    d: usize,
    s: usize,
    ell: usize,
    n_users: u64,
) -> Result<EstimatorReport> {
    check_inputs(source, d, s)?;
    let plan = GroupingPlan::new(d, ell)?;
    let batches = batches_for(&plan, n_users)?;
    let mean = simulate_and_infer_mean(source, &plan, batches);
    let kept: Vec<f64> = keep_top_two_blocks(&mean, s)
        .into_iter()
        .map(|x| x.clamp(-1.0, 1.0))
        .collect();
    Ok(EstimatorReport::single_stage(
        MeanVector::new(kept)?,
        Stage::Estimation,
        batches * plan.batch_size() as u64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_product_distribution, ProductSource};
    use crate::rng::PublicRandomness;
    use proptest::prelude::*;

    fn msg(bits: u64) -> Message {
        Message {
            bits,
            sender: 0,
            stage: Stage::Estimation,
        }
    }

    fn source(mu: Vec<f64>, seed: u64) -> ProductSource {
        ProductSource::new(
            make_product_distribution(mu).unwrap(),
            PublicRandomness::new(seed, 0).stream(),
        )
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    #[test]
    fn grouping_examples() {
        let plan = GroupingPlan::new(6, 2).unwrap();
        assert_eq!(plan.groups(), &[0..2, 2..4, 4..6]);
        let plan = GroupingPlan::new(3, 2).unwrap();
        assert_eq!(plan.groups(), &[0..2, 2..3]);
        assert!(GroupingPlan::new(4, 0).is_err());
        assert!(GroupingPlan::new(100, 65).is_err());
    }

    #[test]
    fn reconstruction_examples() {
        let plan = GroupingPlan::new(4, 2).unwrap();
        let x = simulate_and_infer_reconstruct(&plan, &[msg(0b01), msg(0b11)]).unwrap();
        assert_eq!(x, vec![1, -1, 1, 1]);
        let plan = GroupingPlan::new(3, 2).unwrap();
        let x = simulate_and_infer_reconstruct(&plan, &[msg(0b00), msg(0b1)]).unwrap();
        assert_eq!(x, vec![-1, -1, 1]);
    }

    #[test]
    fn reconstruction_errors() {
        let plan = GroupingPlan::new(3, 2).unwrap();
        assert!(matches!(
            simulate_and_infer_reconstruct(&plan, &[msg(0)]),
            Err(Error::MessageCount { .. })
        ));
        assert!(matches!(
            simulate_and_infer_reconstruct(&plan, &[msg(0), msg(0b10)]),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn reconstruction_reproduces_source_law() {
        let mu = vec![0.5, 0.0, -0.5, 0.0];
        let mut src = source(mu.clone(), 3);
        let plan = GroupingPlan::new(4, 2).unwrap();
        let n = 1_000_000;
        let mean = simulate_and_infer_mean(&mut src, &plan, n);
        assert_eq!(src.users_drawn(), 2 * n);
        for (m, t) in mean.iter().zip(&mu) {
            assert!((m - t).abs() < 4.0 / (n as f64).sqrt(), "{m} vs {t}");
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(
            threshold_top_s(&[0.5, 0.1, -0.7], 1).unwrap().as_slice(),
            &[0.0, 0.0, -0.7]
        );
        assert_eq!(threshold_top_s(&[0.0; 3], 2).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(threshold_top_s(&[0.5, -0.5], 1).unwrap().as_slice(), &[0.5, 0.0]);
        assert_eq!(threshold_top_s(&[1.7, 0.2], 1).unwrap().as_slice(), &[1.0, 0.0]);
        assert!(threshold_top_s(&[0.1], 0).is_err());
        assert!(threshold_top_s(&[0.1], 2).is_err());
    }

    proptest! {
        #[test]
        fn threshold_is_sparse_and_shrinking(
            v in proptest::collection::vec(-2.0f64..2.0, 1..40),
            s_frac in 0.0f64..1.0,
        ) {
            let s = 1 + ((v.len() - 1) as f64 * s_frac) as usize;
            let out = threshold_top_s(&v, s).unwrap();
            prop_assert!(out.support_size() <= s);
            for (o, x) in out.as_slice().iter().zip(&v) {
                prop_assert!(o.abs() <= x.abs());
            }
        }
    }

    #[test]
    fn insufficient_users() {
        let mut src = source(vec![0.0; 8], 0);
        assert!(matches!(
            estimate_sparse_noninteractive(&mut src, 8, 2, 3, 2),
            Err(Error::InsufficientUsers { required: 3, available: 2 })
        ));
        assert_eq!(src.users_drawn(), 0);
        assert!(estimate_sparse_noninteractive(&mut src, 8, 2, 3, 3).is_ok());
    }

    #[test]
    fn leftover_users_are_discarded() {
        let mut src = source(vec![0.0; 8], 0);
        let report = estimate_sparse_noninteractive(&mut src, 8, 2, 3, 20).unwrap();
        assert_eq!(report.users_consumed, 18);
        assert_eq!(src.users_drawn(), 18);
        assert_eq!(report.stage(Stage::Estimation), 18);
    }

    #[test]
    fn zero_mean_error_is_small() {
        let (d, s, n) = (16, 2, 10_000u64);
        let errors: Vec<f64> = (0..100)
            .map(|seed| {
                let mut src = source(vec![0.0; d], seed);
                estimate_sparse_noninteractive(&mut src, d, s, 16, n)
                    .unwrap()
                    .estimate
                    .norm()
            })
            .collect();
        let bound = 3.0 * (s as f64 * (d as f64).ln() / n as f64).sqrt();
        assert!(median(errors) <= bound);
    }

    #[test]
    fn dense_one_sparse_recovery() {
        let mut mu = vec![0.0; 16];
        mu[0] = 0.8;
        let firsts: Vec<f64> = (0..100)
            .map(|seed| {
                let mut src = source(mu.clone(), 1000 + seed);
                estimate_sparse_noninteractive(&mut src, 16, 1, 16, 10_000)
                    .unwrap()
                    .estimate
                    .as_slice()[0]
            })
            .collect();
        assert!((median(firsts) - 0.8).abs() <= 0.05);
    }

    #[test]
    fn block_selection_examples() {
        let v = [0.1, 0.0, 0.0, 0.9, 0.0, 0.0, 0.2, 0.0, 0.0];
        assert_eq!(
            keep_top_two_blocks(&v, 3),
            vec![0.0, 0.0, 0.0, 0.9, 0.0, 0.0, 0.2, 0.0, 0.0]
        );
        assert_eq!(keep_top_two_blocks(&[0.0; 6], 2), vec![0.0; 6]);
        // ties resolve to the lower block indices
        assert_eq!(
            keep_top_two_blocks(&[0.3, 0.3, 0.3], 1),
            vec![0.3, 0.3, 0.0]
        );
    }

    #[test]
    fn block_estimator_keeps_straddling_support() {
        // support {1, 2} straddles blocks 0 and 1 when s = 2
        let mu = vec![0.0, 0.8, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0];
        let hits = (0..100)
            .filter(|&seed| {
                let mut src = source(mu.clone(), 500 + seed);
                let r = estimate_blocksparse_noninteractive(&mut src, 8, 2, 2, 10_000).unwrap();
                let e = r.estimate.as_slice();
                e[1] != 0.0 && e[2] != 0.0
            })
            .count();
        assert!(hits >= 90, "hits {hits}");
    }

    #[test]
    fn block_estimator_on_zero_mean_keeps_two_blocks() {
        let mut src = source(vec![0.0; 12], 4);
        let r = estimate_blocksparse_noninteractive(&mut src, 12, 3, 4, 3000).unwrap();
        assert!(r.estimate.support_size() <= 6);
        assert_eq!(r.users_consumed, 3000);
    }
}
