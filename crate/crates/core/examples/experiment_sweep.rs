// Seeded sweeps, CSV output and the sample-complexity search.

use sparse_comm::harness::{
    find_sample_complexity, separation_table, sweep, write_csv, write_separation_csv,
    ExperimentConfig, InstanceSpec, ProtocolId, SearchConfig,
};

pub fn run_example() -> sparse_comm::Result<()> {
    let base = |protocol| {
        ExperimentConfig::new(protocol, 64, 4, 1, 0.5)
            .with_users(1)
            .with_trials(8, 42)
            .with_instance(InstanceSpec::PlantedSparse { magnitude: 0.5 })
    };
    let grid = [1_024, 4_096, 16_384];
    let nonint = sweep(&base(ProtocolId::SparseNoninteractive), &grid)?;
    let inter = sweep(&base(ProtocolId::SparseInteractive), &grid)?;
    write_csv(std::io::stdout().lock(), &inter.rows[..3], &inter.summaries)?;

    let table = separation_table(&inter.summaries, &nonint.summaries, &[0.5, 0.25])?;
    write_separation_csv(std::io::stdout().lock(), &table)?;

    let search = SearchConfig {
        n_min: 64,
        min_trials: 40,
        ..SearchConfig::default()
    };
    let found = find_sample_complexity(&base(ProtocolId::SparseInteractive), &search)?;
    println!("interactive n* = {} after {} probes", found.n_star, found.probes.len());
    Ok(())
}

fn main() -> sparse_comm::Result<()> {
    run_example()
}
