// Exact checks behind the lower bounds: hypergraph factorizations, the
// measure-change inequality, mutual information and the chi-square expansion.

use sparse_comm::channels::{coordinate_select_channel, Channel};
use sparse_comm::verify::{
    baranyai_partition, chisq_expansion_check, exact_mutual_information, measure_change_slack,
    ZPrior,
};

pub fn run_example() -> sparse_comm::Result<()> {
    let p = baranyai_partition(6, 3)?;
    println!("3-subsets of 6 in {} classes (bound {}):", p.classes.len(), p.class_bound());
    for class in &p.classes {
        println!("  {class:?}");
    }
    if let Err(e) = p.validate() {
        println!("invalid partition: {e}");
    }

    println!("measure change, indicator on d=1: slack {:.6}", measure_change_slack(1, &[0.0, 1.0])?);

    let prior = ZPrior::sparse_rademacher(4, 2, 0.5)?;
    let two_coords = coordinate_select_channel(4, &[0, 1], 2)?;
    println!("I(Z; two coordinates) = {:.6} nats", exact_mutual_information(&prior, &two_coords)?);

    let rr = Channel::from_table(2, 2, vec![0.9, 0.1, 0.3, 0.7, 0.5, 0.5, 0.2, 0.8])?;
    let c = chisq_expansion_check(&rr, 2, 0.8)?;
    println!("chi-square: lhs {:.3e}, rhs {:.3e}, KL {:.3e}", c.lhs, c.rhs, c.kl);
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
