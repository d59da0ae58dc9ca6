// Noninteractive estimation: groups of users each send ℓ coordinates of their
// sample, the server stitches full samples back together.

use sparse_comm::model::{l2_error, make_product_distribution, planted_block, planted_sparse, ProductSource};
use sparse_comm::noninteractive::{
    estimate_blocksparse_noninteractive, estimate_sparse_noninteractive, GroupingPlan,
};
use sparse_comm::PublicRandomness;

pub fn run_example() -> sparse_comm::Result<()> {
    let (d, s, ell) = (64, 8, 4);
    let plan = GroupingPlan::new(d, ell)?;
    println!("d={d}, ell={ell}: {} users per reconstructed sample", plan.batch_size());

    let mut rng = PublicRandomness::new(4, 0).stream();
    let mu = planted_sparse(d, s, 0.5, &mut rng)?;
    for n in [4_096u64, 16_384, 65_536] {
        let mut source = ProductSource::new(
            make_product_distribution(mu.as_slice().to_vec())?,
            PublicRandomness::new(4, n).stream(),
        );
        let report = estimate_sparse_noninteractive(&mut source, d, s, ell, n)?;
        println!("sparse  n={n:>6}: error {:.4}, users {}", l2_error(&report.estimate, &mu)?, report.users_consumed);
    }

    let mu = planted_block(d, s, 0.35, &mut rng)?;
    let mut source = ProductSource::new(
        make_product_distribution(mu.as_slice().to_vec())?,
        PublicRandomness::new(5, 0).stream(),
    );
    let report = estimate_blocksparse_noninteractive(&mut source, d, s, 2, 10_000)?;
    println!(
        "block   n= 10000: error {:.4}, true support {:?}, estimated {:?}",
        l2_error(&report.estimate, &mu)?,
        mu.support(),
        report.estimate.support()
    );
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
