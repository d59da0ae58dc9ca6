//! Exact, desk-scale checks of the combinatorial and information-theoretic
//! ingredients behind the lower bounds.

mod baranyai;
mod flow;
mod info;
mod measure_change;
pub mod suite;

pub use baranyai::{baranyai_partition, binomial, SubsetPartition};
pub use info::{
    chisq_expansion_check, exact_mutual_information, ChiSquareCheck, DiscreteJoint, ZPrior,
};
pub use measure_change::{measure_change, measure_change_slack, MeasureChange};

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = Kahan::default();
    values.into_iter().for_each(|v| k.add(v));
    k.value()
}
