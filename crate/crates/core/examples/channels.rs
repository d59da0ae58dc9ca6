// Bit budgets, LDP compliance and stochastic rounding.

use sparse_comm::channels::{
    check_bit_budget, check_ldp, coordinate_select_channel, round_up_probability,
    stochastic_round_bit, Channel,
};
use sparse_comm::PublicRandomness;

pub fn run_example() -> sparse_comm::Result<()> {
    let select = coordinate_select_channel(8, &[1, 4, 6], 3)?;
    println!("select 3 of 8: alphabet {}, fits 3 bits: {}, fits 2 bits: {}",
        select.alphabet_size(),
        check_bit_budget(&select, 3),
        check_bit_budget(&select, 2));

    let rr = Channel::randomized_response(1.0)?;
    println!("randomized response rho=1: 1.0-LDP {}, 0.5-LDP {}",
        check_ldp(&rr, 1.0)?,
        check_ldp(&rr, 0.5)?);
    println!("identity on 2 bits: 5.0-LDP {}", check_ldp(&Channel::identity(2)?, 5.0)?);

    let mut rng = PublicRandomness::new(3, 0).stream();
    let delta = 4.0;
    for xbar in [-6.0, -1.0, 0.0, 2.5] {
        let n = 200_000;
        let sum: i64 = (0..n)
            .map(|_| stochastic_round_bit(xbar, delta, &mut rng) as i64)
            .sum();
        println!(
            "xbar {xbar:+.1}: P(+1) = {:.4}, empirical mean {:+.4}",
            round_up_probability(xbar, delta),
            sum as f64 / n as f64
        );
    }
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
