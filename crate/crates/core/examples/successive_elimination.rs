// Interactive sparse estimation: the active set halves each round based on
// earlier messages, and the transcript can be re-audited afterwards.

use sparse_comm::interactive::{audit_elimination, estimate_sparse_interactive, EliminationSchedule, Transcript};
use sparse_comm::model::{l2_error, make_product_distribution, planted_sparse, ProductSource};
use sparse_comm::PublicRandomness;

pub fn run_example() -> sparse_comm::Result<()> {
    let (d, s, ell, eps) = (256, 4, 1, 0.5);
    let mu = planted_sparse(d, s, 0.5, &mut PublicRandomness::new(6, 0).stream())?;

    let analytic = EliminationSchedule::hoeffding(d, s, ell, eps)?;
    println!("analytic schedule: active sizes {:?}, {} users", analytic.active_sizes, analytic.total_users());

    let schedule = EliminationSchedule::from_budget(d, s, ell, eps, 20_000)?;
    println!("budgeted schedule: round users {:?}, final {}", schedule.round_users, schedule.final_users);

    let mut source = ProductSource::new(
        make_product_distribution(mu.as_slice().to_vec())?,
        PublicRandomness::new(6, 1).stream(),
    );
    let mut transcript = Transcript::default();
    let report = estimate_sparse_interactive(&mut source, &schedule, Some(&mut transcript))?;
    println!("error {:.4} with {} users", l2_error(&report.estimate, &mu)?, report.users_consumed);
    println!("true support {:?}, estimated {:?}", mu.support(), report.estimate.support());
    match audit_elimination(&transcript, &schedule) {
        Ok(()) => println!("transcript audit: {} messages consistent", transcript.message_count()),
        Err(e) => println!("transcript audit failed: {e}"),
    }
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
