// Product distributions on the hypercube and the hard-instance priors.

use sparse_comm::model::{
    make_product_distribution, HardInstancePrior, PriorKind, ProductSource, SampleSource,
    SparsityKind, SparsityModel,
};
use sparse_comm::PublicRandomness;

pub fn run_example() -> sparse_comm::Result<()> {
    let mu = vec![0.6, 0.0, -0.4, 0.0, 0.0, 0.0, 0.0, 0.0];
    let dist = make_product_distribution(mu.clone())?;
    println!("P(X = (+1,..,+1)) = {:.5}", dist.pmf(&[1; 8]));

    // empirical means from 20k users who each reveal every coordinate
    let mut source = ProductSource::new(dist, PublicRandomness::new(1, 0).stream());
    let all: Vec<usize> = (0..8).collect();
    let mut x = [0i8; 8];
    let mut sums = [0i64; 8];
    for _ in 0..20_000 {
        source.observe(&all, &mut x);
        sums.iter_mut().zip(&x).for_each(|(s, &v)| *s += v as i64);
    }
    let means: Vec<String> = sums
        .iter()
        .map(|s| format!("{:+.3}", *s as f64 / 20_000.0))
        .collect();
    println!("empirical means  {}", means.join(" "));
    println!("users drawn      {}", source.users_drawn());

    let sparse = SparsityModel::new(SparsityKind::Sparse, 2, 8)?;
    println!("2-sparse: {}", sparse.contains(source.distribution().mean()));

    let mut rng = PublicRandomness::new(2, 0).stream();
    for kind in [PriorKind::SparseRademacher, PriorKind::BlockSparse, PriorKind::OneSparse] {
        let prior = HardInstancePrior::new(kind, 32, 4, 0.5)?;
        let draw = prior.draw(&mut rng);
        println!(
            "{kind:?}: gamma {:.3}, support {:?}",
            prior.gamma(),
            draw.support()
        );
    }
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
