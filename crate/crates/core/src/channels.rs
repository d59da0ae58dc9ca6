//! The information-constraint layer: channels from `{-1, +1}^d` to `ℓ`-bit
//! messages, clipping and stochastic rounding, and LDP compliance checks.
//!
//! Sign packing convention: `+1 → 1`, `-1 → 0`, and the `k`-th selected
//! coordinate occupies bit `k` (lowest index in the lowest bit). Inputs are
//! indexed by the same convention when a kernel is enumerated, so pattern `p`
//! stands for the `x` with `x_i = +1` iff bit `i` of `p` is set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Stage;
use crate::rng::Stream;

/// Largest input dimension whose kernel may be enumerated exactly.
pub const MAX_ENUMERABLE_DIM: usize = 20;

/// Largest message width a [`Message`] can carry.
pub const MAX_MESSAGE_BITS: usize = 64;

/// Packs signs into an integer, `values[k]` at bit `k`.
#[inline]
pub fn pack_signs(values: &[i8]) -> u64 {
    debug_assert!(values.len() <= MAX_MESSAGE_BITS);
    values
        .iter()
        .enumerate()
        .fold(0u64, |acc, (k, &v)| if v > 0 { acc | (1 << k) } else { acc })
}

/// Inverse of [`pack_signs`] for the low `out.len()` bits.
#[inline]
pub fn unpack_signs(bits: u64, out: &mut [i8]) {
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = if (bits >> k) & 1 == 1 { 1 } else { -1 };
    }
}

/// The input vector for an enumeration pattern.
pub fn pattern_to_signs(pattern: usize, d: usize) -> Vec<i8> {
    (0..d)
        .map(|i| if (pattern >> i) & 1 == 1 { 1 } else { -1 })
        .collect()
}

pub fn signs_to_pattern(x: &[i8]) -> usize {
    pack_signs(x) as usize
}

/// One user's message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub bits: u64,
    pub sender: u64,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
enum Kernel {
    /// Deterministic: the signs of the listed coordinates, packed.
    Select(Vec<usize>),
    /// Row-major `2^d × alphabet` table of `W(y | x)`.
    Table { alphabet: usize, probs: Vec<f64> },
}

/// A randomized map from `{-1, +1}^d` to message ids `0..alphabet_size()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    dim: usize,
    kernel: Kernel,
}

/// Deterministic channel reading the listed coordinates (0-based), at most
/// `ell` of them.
pub fn coordinate_select_channel(d: usize, indices: &[usize], ell: usize) -> Result<Channel> {
    if indices.len() > ell || indices.len() > MAX_MESSAGE_BITS {
        return Err(Error::BudgetExceeded {
            count: indices.len(),
            bits: ell.min(MAX_MESSAGE_BITS),
        });
    }
    for (k, &i) in indices.iter().enumerate() {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        if indices[..k].contains(&i) {
            return Err(Error::InvalidParameter(format!("coordinate {i} selected twice")));
        }
    }
    Ok(Channel {
        dim: d,
        kernel: Kernel::Select(indices.to_vec()),
    })
}

impl Channel {
    /// Builds a channel from an explicit kernel table with one row per input
    /// pattern. Rows must be nonnegative and sum to one.
    pub fn from_table(d: usize, alphabet: usize, probs: Vec<f64>) -> Result<Self> {
        if d > MAX_ENUMERABLE_DIM {
            return Err(Error::DomainTooLarge {
                dim: d,
                limit: MAX_ENUMERABLE_DIM,
            });
        }
        if alphabet == 0 || probs.len() != (1usize << d) * alphabet {
            return Err(Error::InvalidParameter(format!(
                "kernel table needs {} entries, got {}",
                (1usize << d) * alphabet,
                probs.len()
            )));
        }
        for row in probs.chunks_exact(alphabet) {
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidParameter("negative kernel entry".into()));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "kernel row sums to {total}, not 1"
                )));
            }
        }
        Ok(Self {
            dim: d,
            kernel: Kernel::Table { alphabet, probs },
        })
    }

    /// A channel with a single output.
    pub fn constant(d: usize) -> Result<Self> {
        Self::from_table(d, 1, vec![1.0; 1 << d])
    }

    /// The channel that forwards the whole input.
    pub fn identity(d: usize) -> Result<Self> {
        let all: Vec<usize> = (0..d).collect();
        coordinate_select_channel(d, &all, d)
    }

    /// Binary randomized response on one coordinate: the sign is flipped with
    /// probability `1 / (1 + e^rho)`.
    pub fn randomized_response(rho: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be nonnegative, got {rho}")));
        }
        let flip = 1.0 / (1.0 + rho.exp());
        // pattern 0 is x = -1, pattern 1 is x = +1
        Self::from_table(1, 2, vec![1.0 - flip, flip, flip, 1.0 - flip])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphabet_size(&self) -> u128 {
        match &self.kernel {
            Kernel::Select(idx) => 1u128 << idx.len(),
            Kernel::Table { alphabet, .. } => *alphabet as u128,
        }
    }

    /// The coordinates read by a selection channel.
    pub fn selected(&self) -> Option<&[usize]> {
        match &self.kernel {
            Kernel::Select(idx) => Some(idx),
            Kernel::Table { .. } => None,
        }
    }

    /// `W(y | x)` for the input with enumeration index `pattern`.
    pub fn prob(&self, y: u64, pattern: usize) -> f64 {
        match &self.kernel {
            Kernel::Select(idx) => {
                let emitted = idx
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (k, &i)| acc | ((((pattern >> i) & 1) as u64) << k));
                if emitted == y {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Table { alphabet, probs } => {
                if y as usize >= *alphabet {
                    0.0
                } else {
                    probs[pattern * alphabet + y as usize]
                }
            }
        }
    }

    /// Runs the kernel on one input.
    pub fn emit(&self, x: &[i8], rng: &mut Stream) -> u64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kernel {
            Kernel::Select(idx) => idx
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &i)| if x[i] > 0 { acc | (1 << k) } else { acc }),
            Kernel::Table { alphabet, probs } => {
                let row = &probs[signs_to_pattern(x) * alphabet..][..*alphabet];
                let u = rng.uniform();
                let mut acc = 0.0;
                for (y, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return y as u64;
                    }
                }
                // rounding left u above the accumulated mass; take the last positive entry
                row.iter().rposition(|p| *p > 0.0).unwrap_or(0) as u64
            }
        }
    }

    fn enumeration_guard(&self) -> Result<usize> {
        if self.dim > MAX_ENUMERABLE_DIM {
            return Err(Error::DomainTooLarge {
                dim: self.dim,
                limit: MAX_ENUMERABLE_DIM,
            });
        }
        let alphabet = self.alphabet_size();
        if (alphabet << self.dim) > (1u128 << 28) {
            return Err(Error::DomainTooLarge {
                dim: self.dim + alphabet.ilog2() as usize,
                limit: 28,
            });
        }
        Ok(alphabet as usize)
    }

    /// The full kernel as a `2^d × alphabet` row-major table.
    pub fn table(&self) -> Result<Vec<f64>> {
        let alphabet = self.enumeration_guard()?;
        let mut out = Vec::with_capacity(alphabet << self.dim);
        for pattern in 0..1usize << self.dim {
            out.extend((0..alphabet as u64).map(|y| self.prob(y, pattern)));
        }
        Ok(out)
    }
}

/// Whether the channel's alphabet fits in `ell` bits.
pub fn check_bit_budget(channel: &Channel, ell: usize) -> bool {
    if ell >= 127 {
        return true;
    }
    channel.alphabet_size() <= 1u128 << ell
}

/// Multiplicative slack absorbed by [`check_ldp`].
pub const LDP_TOLERANCE: f64 = 1e-12;

/// Whether `W(y | x) <= e^rho W(y | x')` for all inputs and outputs, by exact
/// enumeration. `0 <= e^rho · 0` passes; `p > 0` against `0` fails.
pub fn check_ldp(channel: &Channel, rho: f64) -> Result<bool> {
    let table = channel.table()?;
    let alphabet = channel.alphabet_size() as usize;
    let bound = rho.exp() * (1.0 + LDP_TOLERANCE);
    for y in 0..alphabet {
        let column = table.iter().skip(y).step_by(alphabet);
        let (lo, hi) = column.fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        if hi == 0.0 {
            continue;
        }
        if lo == 0.0 || hi > bound * lo {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `max(min(x, delta), -delta)`.
#[inline]
pub fn clip(x: f64, delta: f64) -> f64 {
    x.min(delta).max(-delta)
}

/// Probability that [`stochastic_round_bit`] returns `+1`.
#[inline]
pub fn round_up_probability(xbar: f64, delta: f64) -> f64 {
    (delta + clip(xbar, delta)) / (2.0 * delta)
}

/// Unbiased one-bit rounding of `clip(xbar, delta) / delta` to `{-1, +1}`.
#[inline]
pub fn stochastic_round_bit(xbar: f64, delta: f64, rng: &mut Stream) -> i8 {
    debug_assert!(delta > 0.0);
    if rng.bernoulli(round_up_probability(xbar, delta)) {
        1
    } else {
        -1
    }
}
