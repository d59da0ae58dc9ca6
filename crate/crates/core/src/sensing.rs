//! Adaptive compressive sensing with selection matrices and one-bit
//! quantization.
//!
//! Measuring coordinates `S` of `x` with unit Gaussian noise and keeping only
//! the signs gives `±1` variables with means `erf(x_i / √2)`. A sensing
//! instance therefore looks like a product distribution to the sparse mean
//! estimators, with `m` revealed coordinates per user in place of `ℓ` bits;
//! the estimate is mapped back through `√2 erf⁻¹`.

use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf;

use crate::error::{Error, Result};
use crate::interactive::{estimate_sparse_interactive, EliminationSchedule, Transcript};
use crate::model::{MeanVector, SampleSource};
use crate::noninteractive::{estimate_sparse_noninteractive, EstimatorReport};
use crate::rng::Stream;

/// A sparse signal in `[-1, 1]^d` observed through `m` noisy coordinates per
/// measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingInstance {
    x: Vec<f64>,
    s: usize,
    m: usize,
}

impl SensingInstance {
    pub fn new(x: Vec<f64>, s: usize, m: usize) -> Result<Self> {
        let mean = MeanVector::new(x)?;
        if mean.support_size() > s {
            return Err(Error::InvalidParameter(format!(
                "signal has {} nonzeros, more than s = {s}",
                mean.support_size()
            )));
        }
        if m == 0 || m > mean.dim() {
            return Err(Error::InvalidParameter(format!(
                "m = {m} must lie in [1, {}]",
                mean.dim()
            )));
        }
        Ok(Self {
            x: mean.into_inner(),
            s,
            m,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn signal(&self) -> &[f64] {
        &self.x
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    pub fn measurements(&self) -> usize {
        self.m
    }

    /// `erf(x_i / √2)` for every coordinate.
    pub fn sign_means(&self) -> Vec<f64> {
        self.x.iter().map(|&v| erf_mean(v)).collect()
    }
}

/// Rows `e_i` for the listed (distinct, 0-based) coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix(Vec<usize>);

impl SelectionMatrix {
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        for (k, &i) in indices.iter().enumerate() {
            if i >= d {
                return Err(Error::IndexOutOfRange { index: i, dim: d });
            }
            if indices[..k].contains(&i) {
                return Err(Error::InvalidParameter(format!("row e_{i} repeated")));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// `A_S x + Z` with `Z ~ N(0, I_m)`.
pub fn measure(instance: &SensingInstance, selection: &SelectionMatrix, rng: &mut Stream) -> Result<Vec<f64>> {
    if selection.0.len() != instance.m {
        return Err(Error::DimensionMismatch {
            expected: instance.m,
            actual: selection.0.len(),
        });
    }
    if let Some(&i) = selection.0.iter().find(|&&i| i >= instance.dim()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            dim: instance.dim(),
        });
    }
    Ok(selection
        .0
        .iter()
        .map(|&i| instance.x[i] + Distribution::<f64>::sample(&StandardNormal, rng))
        .collect())
}

/// Coordinatewise sign with `sign(0) = +1`.
pub fn sign_transform(y: &[f64]) -> Vec<i8> {
    y.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect()
}

/// `erf(x / √2)`: the mean of `sign(x + Z)` for standard Gaussian `Z`.
pub fn erf_mean(x: f64) -> f64 {
    libm::erf(x / std::f64::consts::SQRT_2)
}

/// Largest sign mean a signal in `[-1, 1]` can produce, `erf(1/√2)`.
pub fn max_sign_mean() -> f64 {
    erf_mean(1.0)
}

/// `√2 erf⁻¹(μ)` after clamping `μ` to `[-erf(1/√2), erf(1/√2)]`. The result
/// lies in `[-1, 1]`.
pub fn erf_invert(mu: f64) -> f64 {
    let cap = max_sign_mean();
    let mu = mu.clamp(-cap, cap);
    if mu == 0.0 {
        return 0.0;
    }
    let mut x = std::f64::consts::SQRT_2 * erf::erf_inv(mu);
    // Newton polish on erf_mean(x) = mu; d/dx erf(x/√2) = √(2/π) e^{-x²/2}
    for _ in 0..3 {
        let slope = (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * x * x).exp();
        let step = (erf_mean(x) - mu) / slope;
        x -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    x.clamp(-1.0, 1.0)
}

/// `√(eπ/2)`, the Lipschitz constant of `√2 erf⁻¹` on `[-erf(1/√2), erf(1/√2)]`.
pub fn link_lipschitz() -> f64 {
    (std::f64::consts::E * std::f64::consts::PI / 2.0).sqrt()
}

/// Checks `‖x̂ - x‖₂ <= √(eπ/2) ‖μ̂ - μ‖₂` with `1e-9` additive slack.
pub fn recovery_certificate(mu_hat: &[f64], mu: &[f64], x_hat: &[f64], x: &[f64]) -> Result<bool> {
    certificate_terms(mu_hat, mu, x_hat, x).map(|(lhs, rhs)| lhs <= rhs + 1e-9)
}

/// `(‖x̂ - x‖₂, √(eπ/2) ‖μ̂ - μ‖₂)`.
pub fn certificate_terms(mu_hat: &[f64], mu: &[f64], x_hat: &[f64], x: &[f64]) -> Result<(f64, f64)> {
    let d = x.len();
    for v in [mu_hat.len(), mu.len(), x_hat.len()] {
        if v != d {
            return Err(Error::DimensionMismatch { expected: d, actual: v });
        }
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    Ok((dist(x_hat, x), link_lipschitz() * dist(mu_hat, mu)))
}

/// Users of a sensing problem: each call takes one fresh measurement with the
/// requested rows and reveals its signs. Requests shorter than `m` rows are
/// padded with unused coordinates so every measurement has exactly `m` rows.
#[derive(Debug, Clone)]
pub struct SensingOracle {
    instance: SensingInstance,
    rng: Stream,
    users: u64,
    rows: Vec<usize>,
}

impl SensingOracle {
    pub fn new(instance: SensingInstance, rng: Stream) -> Self {
        Self {
            instance,
            rng,
            users: 0,
            rows: Vec::new(),
        }
    }

    pub fn instance(&self) -> &SensingInstance {
        &self.instance
    }
}

impl SampleSource for SensingOracle {
    fn dim(&self) -> usize {
        self.instance.dim()
    }

    fn observe(&mut self, coords: &[usize], out: &mut [i8]) {
        assert!(coords.len() <= self.instance.m, "more rows than measurements");
        self.users += 1;
        self.rows.clear();
        self.rows.extend_from_slice(coords);
        let mut pad = 0;
        while self.rows.len() < self.instance.m {
            if !coords.contains(&pad) {
                self.rows.push(pad);
            }
            pad += 1;
        }
        for (k, &i) in self.rows.iter().enumerate() {
            let y = self.instance.x[i] + Distribution::<f64>::sample(&StandardNormal, &mut self.rng);
            if k < out.len() {
                out[k] = if y >= 0.0 { 1 } else { -1 };
            }
        }
    }

    fn users_drawn(&self) -> u64 {
        self.users
    }
}

/// A sensing estimate: the signal, the underlying sign-mean estimate, and the
/// accounting of the mean estimator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingEstimate {
    pub x_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub report: EstimatorReport,
}

fn finish(report: EstimatorReport) -> SensingEstimate {
    let mu_hat = report.estimate.as_slice().to_vec();
    let x_hat = mu_hat.iter().map(|&m| erf_invert(m)).collect();
    SensingEstimate { x_hat, mu_hat, report }
}

/// Successive elimination over sign measurements with `ℓ := m`, mapped back
/// through the inverse link.
pub fn estimate_compressive_interactive(
    oracle: &mut SensingOracle,
    eps: f64,
    budget: u64,
    transcript: Option<&mut Transcript>,
) -> Result<SensingEstimate> {
    let inst = oracle.instance();
    let schedule = EliminationSchedule::from_budget(inst.dim(), inst.s, inst.m, eps, budget)?;
    let report = estimate_sparse_interactive(oracle, &schedule, transcript)?;
    Ok(finish(report))
}

/// Nonadaptive baseline: fixed round-robin selections, simulate-and-infer and
/// top-`s` thresholding on the sign means.
pub fn estimate_compressive_noninteractive(oracle: &mut SensingOracle, budget: u64) -> Result<SensingEstimate> {
    let (d, s, m) = (oracle.instance.dim(), oracle.instance.s, oracle.instance.m);
    let report = estimate_sparse_noninteractive(oracle, d, s, m, budget)?;
    Ok(finish(report))
}

/// `C (s d / (ε² m) + (s / ε²) ln(e d / s))`.
pub fn compressive_budget(constant: f64, d: usize, s: usize, m: usize, eps: f64) -> u64 {
    let (d, s, m) = (d as f64, s as f64, m as f64);
    let rate = s * d / (eps * eps * m) + s / (eps * eps) * (std::f64::consts::E * d / s).ln();
    (constant * rate).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PublicRandomness;

    fn rng(seed: u64) -> Stream {
        PublicRandomness::new(seed, 3).stream()
    }

    #[test]
    fn selection_semantics() {
        let inst = SensingInstance::new(vec![0.0, 0.3, 0.0, 0.0, -0.3, 0.0], 2, 2).unwrap();
        let sel = SelectionMatrix::new(vec![1, 4], 6).unwrap();
        let n = 200_000;
        let mut r = rng(1);
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let y = measure(&inst, &sel, &mut r).unwrap();
            sums[0] += y[0];
            sums[1] += y[1];
        }
        assert!((sums[0] / n as f64 - 0.3).abs() < 4.0 / (n as f64).sqrt());
        assert!((sums[1] / n as f64 + 0.3).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn selection_validation() {
        assert!(matches!(
            SelectionMatrix::new(vec![6], 6),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(SelectionMatrix::new(vec![1, 1], 6).is_err());
        let inst = SensingInstance::new(vec![0.0; 6], 1, 2).unwrap();
        let sel = SelectionMatrix::new(vec![1], 6).unwrap();
        assert!(measure(&inst, &sel, &mut rng(0)).is_err());
        assert!(SensingInstance::new(vec![0.5, 0.5], 1, 1).is_err());
        assert!(SensingInstance::new(vec![0.5, 1.5], 2, 1).is_err());
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign_transform(&[0.1, -2.3]), vec![1, -1]);
        assert_eq!(sign_transform(&[0.0]), vec![1]);
    }

    #[test]
    fn link_examples() {
        assert_eq!(erf_mean(0.0), 0.0);
        assert!((erf_mean(1.0) - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert!((erf_invert(0.682_689_492_1) - 1.0).abs() < 1e-6);
        assert!(erf_invert(0.99).abs() <= 1.0);
        assert_eq!(erf_invert(-5.0), -1.0);
    }

    #[test]
    fn certificate_examples() {
        let mu = [0.2, -0.1];
        let x: Vec<f64> = mu.iter().map(|&m| erf_invert(m)).collect();
        assert!(recovery_certificate(&mu, &mu, &x, &x).unwrap());
        let xh = erf_invert(0.1);
        assert!((xh - 0.125_661_346_855_074).abs() < 1e-9);
        assert!(recovery_certificate(&[0.1], &[0.0], &[xh], &[0.0]).unwrap());
        let (_, bound) = certificate_terms(&[0.1], &[0.0], &[xh], &[0.0]).unwrap();
        assert!((bound - 0.206_6).abs() < 1e-4);
    }

    #[test]
    fn oracle_pads_short_requests() {
        let inst = SensingInstance::new(vec![1.0, 0.0, 0.0, 0.0], 1, 3).unwrap();
        let mut o = SensingOracle::new(inst, rng(2));
        let mut out = [0i8; 1];
        o.observe(&[0], &mut out);
        assert_eq!(o.users_drawn(), 1);
        assert_eq!(o.rows, vec![0, 1, 2]);
    }

    #[test]
    fn exact_link_recovers_signal() {
        let x = [0.0, 0.5, -0.25, 1.0, -1.0];
        for &v in &x {
            assert!((erf_invert(erf_mean(v)) - v).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_signal_gives_zero_estimate_mostly() {
        let zeros = (0..50)
            .filter(|&seed| {
                let inst = SensingInstance::new(vec![0.0; 32], 2, 4).unwrap();
                let mut o = SensingOracle::new(inst, rng(100 + seed));
                let est = estimate_compressive_interactive(&mut o, 0.5, 4000, None).unwrap();
                est.x_hat.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.5
            })
            .count();
        assert!(zeros >= 45);
    }
}
