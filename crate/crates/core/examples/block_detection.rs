// Interactive block-sparse estimation: Rademacher sketches flag the heavy
// block, then only the neighbouring blocks are estimated.

use sparse_comm::interactive::{
    conditional_bit_mean, detect_block, estimate_blocksparse_interactive, sketch_event_frequency,
    sketch_second_moment, BlockInteractivePlan, DetectionConfig,
};
use sparse_comm::model::{l2_error, make_product_distribution, planted_block, ProductSource};
use sparse_comm::PublicRandomness;

pub fn run_example() -> sparse_comm::Result<()> {
    let block = [0.5, -0.25, 0.0, 0.25];
    let norm_sq: f64 = block.iter().map(|x| x * x).sum();
    println!("E[(xi . mu)^2] = {:.4}, |mu|^2 = {norm_sq:.4}", sketch_second_moment(&block)?);
    println!("P((xi . mu)^2 >= |mu|^2/2) = {:.4}", sketch_event_frequency(&block, norm_sq / 2.0)?);
    println!("unbiased block bit mean = {}", conditional_bit_mean(&[0.0; 4], &[1, -1, 1, 1], 3.0)?);

    let analytic = DetectionConfig::new(64, 8, 2, 0.5)?;
    println!(
        "analytic detection: clip {:.2}, tau {:.5}, {} users",
        analytic.delta_clip, analytic.tau, analytic.users_required()
    );

    let (d, s, ell, eps) = (32, 4, 2, 0.5);
    let mu = planted_block(d, s, 2.0 * eps / (s as f64).sqrt(), &mut PublicRandomness::new(7, 0).stream())?;
    let plan = BlockInteractivePlan::from_budget(d, s, ell, eps, 200_000, 0.05)?;
    let public = PublicRandomness::new(7, 1);
    let dist = make_product_distribution(mu.as_slice().to_vec())?;

    let mut source = ProductSource::new(dist.clone(), PublicRandomness::new(7, 2).stream());
    let outcome = detect_block(&mut source, &plan.detection, &public, plan.budget)?;
    println!("support {:?}; detected block {:?}, votes {:?}", mu.support(), outcome.block, outcome.votes);

    let mut source = ProductSource::new(dist, PublicRandomness::new(7, 2).stream());
    let report = estimate_blocksparse_interactive(&mut source, &plan, &public)?;
    println!("error {:.4}, stages {:?}", l2_error(&report.estimate, &mu)?, report.stages);
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
