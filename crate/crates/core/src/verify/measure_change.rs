//! The measure-change inequality
//! `‖E[X a(X)]‖² ≤ 2σ²·E[a]·E[a ln(a/E[a])]` for uniform X on {−1,+1}^d.

use serde::Serialize;

use super::{kahan_sum, Kahan};
use crate::channels::pattern_to_signs;
use crate::error::{Error, Result};

/// Largest dimension accepted by the enumeration.
pub const MAX_MEASURE_CHANGE_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureChange {
    pub lhs: f64,
    pub rhs: f64,
}

impl MeasureChange {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Both sides of the inequality, with σ² = 1. `a_table[p]` is `a(x)` for the
/// input with enumeration index `p`.
pub fn measure_change(d: usize, a_table: &[f64]) -> Result<MeasureChange> {
    if d > MAX_MEASURE_CHANGE_DIM {
        return Err(Error::DomainTooLarge {
            dim: d,
            limit: MAX_MEASURE_CHANGE_DIM,
        });
    }
    if a_table.len() != 1 << d {
        return Err(Error::DimensionMismatch {
            expected: 1 << d,
            actual: a_table.len(),
        });
    }
    if let Some(v) = a_table.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "a must be finite and nonnegative, found {v}"
        )));
    }
    let weight = 1.0 / a_table.len() as f64;
    let mean = kahan_sum(a_table.iter().map(|a| a * weight));
    if !(mean > 0.0) {
        return Err(Error::InvalidParameter("E[a] must be positive".into()));
    }

    let mut moments = vec![Kahan::default(); d];
    for (p, &a) in a_table.iter().enumerate() {
        for (acc, x) in moments.iter_mut().zip(pattern_to_signs(p, d)) {
            acc.add(f64::from(x) * a * weight);
        }
    }
    let lhs = kahan_sum(moments.iter().map(|m| m.value().powi(2)));
    let entropy = kahan_sum(a_table.iter().map(|&a| {
        if a == 0.0 {
            0.0
        } else {
            weight * a * (a / mean).ln()
        }
    }));
    Ok(MeasureChange {
        lhs,
        rhs: 2.0 * mean * entropy,
    })
}

/// `RHS − LHS` of the inequality; nonnegative up to rounding.
pub fn measure_change_slack(d: usize, a_table: &[f64]) -> Result<f64> {
    measure_change(d, a_table).map(|m| m.slack())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PublicRandomness;

    #[test]
    fn constant_function_is_tight() {
        let m = measure_change(3, &[1.0; 8]).unwrap();
        assert_eq!(m.lhs, 0.0);
        assert!(m.rhs.abs() < 1e-15);
    }

    #[test]
    fn indicator_in_one_dimension() {
        // pattern 1 is x = +1
        let m = measure_change(1, &[0.0, 1.0]).unwrap();
        assert!((m.lhs - 0.25).abs() < 1e-15);
        assert!((m.rhs - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        assert!((m.slack() - 0.096_573_590_279_972_65).abs() < 1e-12);
    }

    #[test]
    fn the_2ln2_constant_fails_on_the_indicator() {
        let m = measure_change(1, &[0.0, 1.0]).unwrap();
        assert!(std::f64::consts::LN_2 * m.rhs < m.lhs);
    }

    #[test]
    fn random_tables_have_nonnegative_slack() {
        let mut rng = PublicRandomness::new(7, 0).stream();
        for case in 0..1000 {
            let d = 1 + case % 6;
            let table: Vec<f64> = (0..1 << d)
                .map(|_| {
                    // mix of sparse and heavy-tailed tables
                    let u = rng.uniform();
                    if u < 0.3 {
                        0.0
                    } else {
                        (-u.ln()).powi(3)
                    }
                })
                .collect();
            if table.iter().all(|&a| a == 0.0) {
                continue;
            }
            let slack = measure_change_slack(d, &table).unwrap();
            assert!(slack >= -1e-12, "case {case}: slack {slack}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(measure_change(1, &[-1.0, 1.0]).is_err());
        assert!(measure_change(1, &[0.0, 0.0]).is_err());
        assert!(measure_change(2, &[1.0; 3]).is_err());
        assert!(measure_change(11, &vec![1.0; 1 << 11]).is_err());
    }
}
