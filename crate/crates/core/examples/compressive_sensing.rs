// One-bit adaptive compressed sensing with selection matrices, and the
// certificate that carries sign-mean accuracy over to the signal.

use sparse_comm::sensing::{
    certificate_terms, compressive_budget, erf_invert, erf_mean, estimate_compressive_interactive,
    estimate_compressive_noninteractive, SensingInstance, SensingOracle,
};
use sparse_comm::PublicRandomness;

pub fn run_example() -> sparse_comm::Result<()> {
    for x in [-1.0, -0.3, 0.0, 0.7] {
        println!("x {x:+.1}: sign mean {:+.5}, inverted {:+.5}", erf_mean(x), erf_invert(erf_mean(x)));
    }

    let (d, s, m, eps) = (128, 4, 8, 0.5);
    let mut x = vec![0.0; d];
    for (k, i) in [5, 40, 77, 120].into_iter().enumerate() {
        x[i] = if k % 2 == 0 { 0.5 } else { -0.5 };
    }
    let instance = SensingInstance::new(x.clone(), s, m)?;
    let mu = instance.sign_means();
    let budget = compressive_budget(12.0, d, s, m, eps);
    println!("budget {budget} users, {m} measurements each");

    let mut oracle = SensingOracle::new(instance.clone(), PublicRandomness::new(8, 0).stream());
    let adaptive = estimate_compressive_interactive(&mut oracle, eps, budget, None)?;
    let mut oracle = SensingOracle::new(instance, PublicRandomness::new(8, 0).stream());
    let fixed = estimate_compressive_noninteractive(&mut oracle, budget)?;
    for (name, est) in [("adaptive", adaptive), ("fixed", fixed)] {
        let (x_err, bound) = certificate_terms(&est.mu_hat, &mu, &est.x_hat, &x)?;
        println!("{name:>8}: |x_hat - x| = {x_err:.4} <= {bound:.4}");
    }
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
