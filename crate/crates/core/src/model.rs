//! Parameters, sample sources, instance generators and the error metric shared
//! by every protocol.
//!
//! Samples live on `{-1, +1}^d` and are stored as `i8`. Coordinates are
//! 0-based throughout the crate.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// A mean vector in `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MeanVector(Vec<f64>);

impl MeanVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        for (index, &value) in entries.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::MeanOutOfRange { index, value });
            }
        }
        Ok(Self(entries))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Number of nonzero entries.
    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

impl TryFrom<Vec<f64>> for MeanVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MeanVector> for Vec<f64> {
    fn from(m: MeanVector) -> Self {
        m.0
    }
}

/// Euclidean distance between an estimate and the truth.
pub fn l2_error(estimate: &MeanVector, truth: &MeanVector) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            actual: estimate.dim(),
        });
    }
    Ok(estimate
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SparsityKind {
    Sparse,
    BlockSparse,
}

/// The sparsity promise on the unknown mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityModel {
    pub kind: SparsityKind,
    pub s: usize,
}

impl SparsityModel {
    pub fn new(kind: SparsityKind, s: usize, d: usize) -> Result<Self> {
        if s == 0 || s > d {
            return Err(Error::InvalidParameter(format!(
                "sparsity {s} must lie in [1, {d}]"
            )));
        }
        Ok(Self { kind, s })
    }

    /// Whether `mu` satisfies the promise: at most `s` nonzeros, and for the
    /// block-sparse class, a support inside `s + 1` consecutive indices.
    pub fn contains(&self, mu: &MeanVector) -> bool {
        let support = mu.support();
        if support.len() > self.s {
            return false;
        }
        match self.kind {
            SparsityKind::Sparse => true,
            SparsityKind::BlockSparse => match (support.first(), support.last()) {
                (Some(lo), Some(hi)) => hi - lo <= self.s,
                _ => true,
            },
        }
    }
}

/// Product law on `{-1, +1}^d`: coordinate `i` is `+1` with probability
/// `(1 + mean[i]) / 2`, independently across coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDistribution {
    mean: MeanVector,
    p_plus: Vec<f64>,
}

impl ProductDistribution {
    pub fn new(mean: MeanVector) -> Self {
        let p_plus = mean.as_slice().iter().map(|m| (1.0 + m) / 2.0).collect();
        Self { mean, p_plus }
    }

    /// Validates raw entries and builds the distribution.
    pub fn from_means(entries: Vec<f64>) -> Result<Self> {
        MeanVector::new(entries).map(Self::new)
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn mean(&self) -> &MeanVector {
        &self.mean
    }

    /// `P[X_i = +1]`.
    pub fn prob_plus(&self, i: usize) -> f64 {
        self.p_plus[i]
    }

    /// Probability of a full outcome.
    pub fn pmf(&self, x: &[i8]) -> f64 {
        assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(&self.p_plus)
            .map(|(&xi, &p)| if xi > 0 { p } else { 1.0 - p })
            .product()
    }

    #[inline]
    pub fn sample_coordinate(&self, i: usize, rng: &mut Stream) -> i8 {
        let p = self.p_plus[i];
        let plus = if p == 0.5 { rng.coin() } else { rng.bernoulli(p) };
        if plus {
            1
        } else {
            -1
        }
    }

    /// One full observation.
    pub fn sample(&self, rng: &mut Stream) -> Vec<i8> {
        (0..self.dim()).map(|i| self.sample_coordinate(i, rng)).collect()
    }

    /// Draws only the listed coordinates of one observation. Coordinates are
    /// independent, so this has the same law as projecting a full draw.
    pub fn sample_coords(&self, coords: &[usize], rng: &mut Stream, out: &mut [i8]) {
        for (slot, &i) in out.iter_mut().zip(coords) {
            *slot = self.sample_coordinate(i, rng);
        }
    }
}

/// Validates `mu` and returns the product distribution with that mean.
pub fn make_product_distribution(mu: Vec<f64>) -> Result<ProductDistribution> {
    ProductDistribution::from_means(mu)
}

/// A population of users, each holding one fresh sample.
///
/// Every call to [`observe`](SampleSource::observe) is one user: a fresh sample
/// is drawn and the coordinates the user's channel reads are revealed. Protocols
/// never see more than that, and [`users_drawn`](SampleSource::users_drawn) is
/// the sample complexity they spent.
pub trait SampleSource {
    fn dim(&self) -> usize;

    /// Draws a fresh sample and writes coordinate `coords[k]` into `out[k]`.
    fn observe(&mut self, coords: &[usize], out: &mut [i8]);

    fn users_drawn(&self) -> u64;
}

impl<S: SampleSource + ?Sized> SampleSource for &mut S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn observe(&mut self, coords: &[usize], out: &mut [i8]) {
        (**self).observe(coords, out)
    }

    fn users_drawn(&self) -> u64 {
        (**self).users_drawn()
    }
}

/// Users holding i.i.d. samples from a product distribution.
#[derive(Debug, Clone)]
pub struct ProductSource {
    dist: ProductDistribution,
    rng: Stream,
    users: u64,
}

impl ProductSource {
    pub fn new(dist: ProductDistribution, rng: Stream) -> Self {
        Self {
            dist,
            rng,
            users: 0,
        }
    }

    pub fn distribution(&self) -> &ProductDistribution {
        &self.dist
    }
}

impl SampleSource for ProductSource {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn observe(&mut self, coords: &[usize], out: &mut [i8]) {
        self.users += 1;
        self.dist.sample_coords(coords, &mut self.rng, out);
    }

    fn users_drawn(&self) -> u64 {
        self.users
    }
}

/// A contiguous coordinate window `[offset, offset + dim)` of another source.
/// Users drawn through the window are drawn from (and counted by) the parent.
pub struct Window<'a, S: SampleSource + ?Sized> {
    inner: &'a mut S,
    offset: usize,
    dim: usize,
    scratch: Vec<usize>,
}

impl<'a, S: SampleSource + ?Sized> Window<'a, S> {
    pub fn new(inner: &'a mut S, offset: usize, dim: usize) -> Result<Self> {
        if dim == 0 || offset + dim > inner.dim() {
            return Err(Error::InvalidParameter(format!(
                "window [{offset}, {}) does not fit dimension {}",
                offset + dim,
                inner.dim()
            )));
        }
        Ok(Self {
            inner,
            offset,
            dim,
            scratch: Vec::new(),
        })
    }
}

impl<S: SampleSource + ?Sized> SampleSource for Window<'_, S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn observe(&mut self, coords: &[usize], out: &mut [i8]) {
        self.scratch.clear();
        self.scratch.extend(coords.iter().map(|c| c + self.offset));
        self.inner.observe(&self.scratch, out);
    }

    fn users_drawn(&self) -> u64 {
        self.inner.users_drawn()
    }
}

/// Protocol stages used for sample accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Locating the support: block detection, or elimination rounds.
    Detection,
    /// Estimating the mean on the chosen coordinates.
    Estimation,
}

pub type StageBreakdown = BTreeMap<Stage, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    /// `Z_i ∈ {-1, 0, +1}` i.i.d. with `P(+1) = P(-1) = s / (4d)`, mean `γ Z`.
    SparseRademacher,
    /// One uniformly chosen block of consecutive coordinates carries `γ Z_i`,
    /// `Z` uniform on `{-1, +1}^d`.
    BlockSparse,
    /// `θ_J = 2ε e_J` with `J` uniform.
    OneSparse,
}

/// Hard instance families used as stress instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardInstancePrior {
    pub d: usize,
    pub s: usize,
    pub eps: f64,
    pub kind: PriorKind,
}

impl HardInstancePrior {
    pub fn new(kind: PriorKind, d: usize, s: usize, eps: f64) -> Result<Self> {
        if d == 0 || s == 0 || s > d {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= s <= d, got s = {s}, d = {d}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        let prior = Self { d, s, eps, kind };
        match kind {
            PriorKind::OneSparse if 2.0 * eps > 1.0 => Err(Error::InvalidParameter(format!(
                "one-sparse family needs 2 eps <= 1, got eps = {eps}"
            ))),
            PriorKind::SparseRademacher | PriorKind::BlockSparse if prior.gamma() > 1.0 => {
                Err(Error::InvalidParameter(format!(
                    "magnitude eps / sqrt(s) = {} exceeds 1",
                    prior.gamma()
                )))
            }
            _ => Ok(prior),
        }
    }

    /// Per-coordinate magnitude `ε / √s`.
    pub fn gamma(&self) -> f64 {
        self.eps / (self.s as f64).sqrt()
    }

    /// Variance of a sparse-Rademacher `Z_i`: `s / (2d)`.
    pub fn sigma_sq(&self) -> f64 {
        self.s as f64 / (2.0 * self.d as f64)
    }

    /// Number of blocks `⌈d / s⌉` in the block layout.
    pub fn block_count(&self) -> usize {
        self.d.div_ceil(self.s)
    }

    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        let start = j * self.s;
        start..(start + self.s).min(self.d)
    }

    pub fn draw(&self, rng: &mut Stream) -> MeanVector {
        match self.kind {
            PriorKind::SparseRademacher => {
                let p = self.s as f64 / (4.0 * self.d as f64);
                let gamma = self.gamma();
                let entries = (0..self.d)
                    .map(|_| {
                        let u = rng.uniform();
                        if u < p {
                            gamma
                        } else if u < 2.0 * p {
                            -gamma
                        } else {
                            0.0
                        }
                    })
                    .collect();
                MeanVector(entries)
            }
            PriorKind::BlockSparse => {
                let j = rng.below(self.block_count());
                self.draw_in_block(j, rng)
            }
            PriorKind::OneSparse => {
                let j = rng.below(self.d);
                self.one_sparse(j)
            }
        }
    }

    /// Block-sparse draw conditioned on the block index `j`.
    pub fn draw_in_block(&self, j: usize, rng: &mut Stream) -> MeanVector {
        let gamma = self.gamma();
        let mut entries = vec![0.0; self.d];
        for i in self.block_range(j) {
            entries[i] = gamma * rng.rademacher() as f64;
        }
        MeanVector(entries)
    }

    /// Member `j` of the one-sparse family.
    pub fn one_sparse(&self, j: usize) -> MeanVector {
        let mut entries = vec![0.0; self.d];
        entries[j] = 2.0 * self.eps;
        MeanVector(entries)
    }
}

/// `s` coordinates chosen uniformly without replacement, each `±magnitude` with
/// a uniform sign.
pub fn planted_sparse(d: usize, s: usize, magnitude: f64, rng: &mut Stream) -> Result<MeanVector> {
    check_planted(d, s, magnitude)?;
    let mut entries = vec![0.0; d];
    for i in index::sample(rng, d, s) {
        entries[i] = magnitude * rng.rademacher() as f64;
    }
    MeanVector::new(entries)
}

/// `s` consecutive coordinates starting at a uniform offset, each `±magnitude`.
pub fn planted_block(d: usize, s: usize, magnitude: f64, rng: &mut Stream) -> Result<MeanVector> {
    check_planted(d, s, magnitude)?;
    let start = rng.below(d - s + 1);
    let mut entries = vec![0.0; d];
    for e in &mut entries[start..start + s] {
        *e = magnitude * rng.rademacher() as f64;
    }
    MeanVector::new(entries)
}

fn check_planted(d: usize, s: usize, magnitude: f64) -> Result<()> {
    if s == 0 || s > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= s <= d, got s = {s}, d = {d}"
        )));
    }
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::InvalidParameter(format!(
            "magnitude {magnitude} outside [0, 1]"
        )));
    }
    Ok(())
}
