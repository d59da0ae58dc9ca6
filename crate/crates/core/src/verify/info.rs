//! Exact mutual information and the chi-square moment expansion for
//! enumerable channels under the sign-perturbation prior.

use serde::Serialize;

use super::{kahan_sum, Kahan};
use crate::channels::{pattern_to_signs, Channel};
use crate::error::{Error, Result};

/// Dimension guard for [`exact_mutual_information`].
pub const MAX_MI_DIM: usize = 6;
/// Dimension guard for [`chisq_expansion_check`].
pub const MAX_CHISQ_DIM: usize = 3;

/// A joint probability table, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteJoint {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("negative joint probability".into()));
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "joint sums to {total}, not 1"
            )));
        }
        Ok(Self { rows, cols, probs })
    }

    /// The joint of (input, message) when the input has law `input`.
    pub fn input_output(channel: &Channel, input: &[f64]) -> Result<Self> {
        let table = channel.table()?;
        let alphabet = table.len() >> channel.dim();
        if input.len() != 1 << channel.dim() {
            return Err(Error::DimensionMismatch {
                expected: 1 << channel.dim(),
                actual: input.len(),
            });
        }
        let probs = table
            .chunks_exact(alphabet)
            .zip(input)
            .flat_map(|(row, &px)| row.iter().map(move |w| px * w))
            .collect();
        Self::new(input.len(), alphabet, probs)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs[row * self.cols + col]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.probs
            .chunks_exact(self.cols)
            .map(|r| kahan_sum(r.iter().copied()))
            .collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut acc = vec![Kahan::default(); self.cols];
        for row in self.probs.chunks_exact(self.cols) {
            for (a, &p) in acc.iter_mut().zip(row) {
                a.add(p);
            }
        }
        acc.iter().map(Kahan::value).collect()
    }

    /// `KL(p_{RC} ‖ p_R ⊗ p_C)` in nats.
    pub fn mutual_information(&self) -> f64 {
        let pr = self.row_marginal();
        let pc = self.col_marginal();
        let mi = kahan_sum(self.probs.iter().enumerate().map(|(k, &p)| {
            if p == 0.0 {
                0.0
            } else {
                p * (p / (pr[k / self.cols] * pc[k % self.cols])).ln()
            }
        }));
        mi.max(0.0)
    }
}

/// A finite prior over sign perturbations `z ∈ {−1,0,+1}^d`, inducing the
/// product law `p_z(x) = ∏ (1 + γ z_i x_i)/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZPrior {
    d: usize,
    gamma: f64,
    support: Vec<(Vec<i8>, f64)>,
}

impl ZPrior {
    pub fn new(d: usize, gamma: f64, support: Vec<(Vec<i8>, f64)>) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("gamma must be in [0,1], got {gamma}")));
        }
        if support.iter().any(|(z, p)| z.len() != d || !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("malformed prior support".into()));
        }
        let total = kahan_sum(support.iter().map(|(_, p)| *p));
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("prior sums to {total}")));
        }
        Ok(Self { d, gamma, support })
    }

    /// Independent coordinates, `±1` each with probability `s/(4d)`, with
    /// `γ = eps/√s`.
    pub fn sparse_rademacher(d: usize, s: usize, eps: f64) -> Result<Self> {
        if d > MAX_MI_DIM || s == 0 || s > 2 * d {
            return Err(Error::InvalidParameter(format!(
                "sparse Rademacher prior needs 1 <= s <= 2d, d <= {MAX_MI_DIM}; got d={d}, s={s}"
            )));
        }
        let p = s as f64 / (4.0 * d as f64);
        let mut support = Vec::with_capacity(3usize.pow(d as u32));
        for code in 0..3usize.pow(d as u32) {
            let mut z = Vec::with_capacity(d);
            let mut prob = 1.0;
            let mut c = code;
            for _ in 0..d {
                let (zi, pi) = match c % 3 {
                    0 => (0, 1.0 - 2.0 * p),
                    1 => (1, p),
                    _ => (-1, p),
                };
                z.push(zi);
                prob *= pi;
                c /= 3;
            }
            support.push((z, prob));
        }
        Self::new(d, eps / (s as f64).sqrt(), support)
    }

    /// Uniform over `{−1,+1}^d`.
    pub fn uniform_signs(d: usize, gamma: f64) -> Result<Self> {
        let weight = 1.0 / (1usize << d) as f64;
        let support = (0..1usize << d)
            .map(|p| (pattern_to_signs(p, d), weight))
            .collect();
        Self::new(d, gamma, support)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn support(&self) -> &[(Vec<i8>, f64)] {
        &self.support
    }

    /// `p_z` over the `2^d` input patterns.
    pub fn input_law(&self, z: &[i8]) -> Vec<f64> {
        (0..1usize << self.d)
            .map(|p| {
                pattern_to_signs(p, self.d)
                    .iter()
                    .zip(z)
                    .map(|(&x, &zi)| (1.0 + self.gamma * f64::from(zi) * f64::from(x)) / 2.0)
                    .product()
            })
            .collect()
    }
}

fn channel_table(channel: &Channel, d: usize, limit: usize) -> Result<(Vec<f64>, usize)> {
    if channel.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: channel.dim(),
        });
    }
    if d > limit {
        return Err(Error::DomainTooLarge { dim: d, limit });
    }
    let table = channel.table()?;
    let alphabet = table.len() >> d;
    Ok((table, alphabet))
}

/// Message law `W^p(y) = E_{X∼p} W(y|X)`.
fn induced(table: &[f64], alphabet: usize, input: &[f64]) -> Vec<f64> {
    let mut acc = vec![Kahan::default(); alphabet];
    for (row, &px) in table.chunks_exact(alphabet).zip(input) {
        for (a, &w) in acc.iter_mut().zip(row) {
            a.add(px * w);
        }
    }
    acc.iter().map(Kahan::value).collect()
}

/// `I(Z; Y)` in nats, by summing over the full joint of Z and the message.
pub fn exact_mutual_information(prior: &ZPrior, channel: &Channel) -> Result<f64> {
    let (table, alphabet) = channel_table(channel, prior.dim(), MAX_MI_DIM)?;
    let mut probs = Vec::with_capacity(prior.support().len() * alphabet);
    for (z, pz) in prior.support() {
        let law = induced(&table, alphabet, &prior.input_law(z));
        probs.extend(law.into_iter().map(|w| pz * w));
    }
    Ok(DiscreteJoint::new(prior.support().len(), alphabet, probs)?.mutual_information())
}

/// The two sides of the chi-square moment expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareCheck {
    /// `E_Z χ²(W^{p_Z} ‖ W^U)` by direct enumeration.
    pub lhs: f64,
    /// `Σ_y Σ_{B≠∅} (σ²γ²)^{|B|} E_U[W(y|X) ∏_{i∈B} X_i]² / E_U[W(y|X)]`.
    pub rhs: f64,
    /// `E_Z KL(W^{p_Z} ‖ W^U)`.
    pub kl: f64,
}

/// Evaluates both sides of the expansion under the sparse Rademacher prior
/// with `σ² = s/(2d)` and `γ = eps/√s`.
pub fn chisq_expansion_check(channel: &Channel, s: usize, eps: f64) -> Result<ChiSquareCheck> {
    let d = channel.dim();
    let (table, alphabet) = channel_table(channel, d, MAX_CHISQ_DIM)?;
    let prior = ZPrior::sparse_rademacher(d, s, eps)?;
    let uniform = vec![1.0 / (1usize << d) as f64; 1 << d];
    let base = induced(&table, alphabet, &uniform);

    let mut lhs = Kahan::default();
    let mut kl = Kahan::default();
    for (z, pz) in prior.support() {
        let law = induced(&table, alphabet, &prior.input_law(z));
        for (&q, &u) in law.iter().zip(&base) {
            if u == 0.0 {
                continue;
            }
            lhs.add(pz * (q - u).powi(2) / u);
            if q > 0.0 {
                kl.add(pz * q * (q / u).ln());
            }
        }
    }

    let sigma_sq = s as f64 / (2.0 * d as f64);
    let rho = sigma_sq * prior.gamma().powi(2);
    let mut rhs = Kahan::default();
    for (y, &u) in base.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        for subset in 1usize..1 << d {
            // E_U[W(y|X) ∏_{i∈B} X_i]
            let coeff = kahan_sum((0..1usize << d).map(|p| {
                let parity = (p ^ subset) & subset;
                let sign = if parity.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                sign * table[p * alphabet + y] * uniform[p]
            }));
            rhs.add(rho.powi(subset.count_ones() as i32) * coeff * coeff / u);
        }
    }

    Ok(ChiSquareCheck {
        lhs: lhs.value(),
        rhs: rhs.value(),
        kl: kl.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PublicRandomness;

    fn binary_entropy_bits(p: f64) -> f64 {
        let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
        h(p) + h(1.0 - p)
    }

    fn random_one_bit_channel(d: usize, rng: &mut crate::rng::Stream) -> Channel {
        let probs = (0..1usize << d)
            .flat_map(|_| {
                let w = rng.uniform();
                [w, 1.0 - w]
            })
            .collect();
        Channel::from_table(d, 2, probs).unwrap()
    }

    #[test]
    fn joint_validation() {
        assert!(DiscreteJoint::new(2, 2, vec![0.25; 4]).is_ok());
        assert!(DiscreteJoint::new(2, 2, vec![0.5; 4]).is_err());
        assert!(DiscreteJoint::new(1, 2, vec![1.5, -0.5]).is_err());
        let j = DiscreteJoint::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((j.mutual_information() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn constant_channel_carries_nothing() {
        let prior = ZPrior::sparse_rademacher(3, 2, 0.5).unwrap();
        let mi = exact_mutual_information(&prior, &Channel::constant(3).unwrap()).unwrap();
        assert_eq!(mi, 0.0);
    }

    #[test]
    fn noiseless_bit() {
        let prior = ZPrior::uniform_signs(1, 1.0).unwrap();
        let mi = exact_mutual_information(&prior, &Channel::identity(1).unwrap()).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn binary_symmetric_channel_closed_form() {
        for k in 0..10 {
            let gamma = k as f64 / 10.0;
            let prior = ZPrior::uniform_signs(1, gamma).unwrap();
            let mi = exact_mutual_information(&prior, &Channel::identity(1).unwrap()).unwrap();
            let oracle =
                std::f64::consts::LN_2 * (1.0 - binary_entropy_bits((1.0 + gamma) / 2.0));
            assert!((mi - oracle).abs() < 1e-10, "gamma={gamma}: {mi} vs {oracle}");
        }
    }

    #[test]
    fn mutual_information_guard() {
        let prior = ZPrior::uniform_signs(7, 0.5).unwrap();
        let err = exact_mutual_information(&prior, &Channel::constant(7).unwrap());
        assert!(matches!(err, Err(Error::DomainTooLarge { .. })));
    }

    #[test]
    fn chisq_constant_channel() {
        let c = chisq_expansion_check(&Channel::constant(2).unwrap(), 2, 0.5).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
        assert_eq!(c.kl, 0.0);
    }

    #[test]
    fn chisq_identity_in_one_dimension() {
        // σ² = 1/2, γ = 0.4, Σ_y E[W X]²/E[W] = 1, so both sides are σ²γ² = 0.08
        let c = chisq_expansion_check(&Channel::identity(1).unwrap(), 1, 0.4).unwrap();
        assert!((c.lhs - 0.08).abs() < 1e-15);
        assert!((c.rhs - 0.08).abs() < 1e-15);
        assert!(c.kl <= c.lhs);
    }

    #[test]
    fn chisq_random_channels() {
        let mut rng = PublicRandomness::new(11, 0).stream();
        for case in 0..200 {
            let d = 2 + case % 2;
            let s = 1 + case % (2 * d);
            let eps = 0.1 + 0.8 * rng.uniform();
            let channel = random_one_bit_channel(d, &mut rng);
            let c = chisq_expansion_check(&channel, s, eps.min((s as f64).sqrt())).unwrap();
            assert!((c.lhs - c.rhs).abs() <= 1e-9, "case {case}: {c:?}");
            assert!(c.kl <= c.lhs + 1e-12, "case {case}: {c:?}");
        }
    }

    #[test]
    fn chisq_selection_channel() {
        let channel = crate::channels::coordinate_select_channel(3, &[0, 2], 2).unwrap();
        let c = chisq_expansion_check(&channel, 3, 0.6).unwrap();
        assert!((c.lhs - c.rhs).abs() <= 1e-12);
    }
}
