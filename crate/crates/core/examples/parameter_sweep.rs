// Trade dump frequency against staleness and rebuild cost over a small grid.

use std::error::Error;

use imagebake::simulator::{sweep, SimConfig, SweepGrid, WriteArrivals};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let grid = SweepGrid {
        base: SimConfig {
            write_arrivals: WriteArrivals::Random { count: 40 },
            read_rate: 1,
            horizon: 300,
            ..SimConfig::single_write_example()
        },
        dump_periods: vec![8, 16, 32],
        build_times: vec![2, 5],
        startup_delays: vec![1],
        replica_counts: vec![3],
        seeds: (0..5).collect(),
    };
    let outcome = sweep(&grid);
    print!("{}", outcome.to_csv());
    for (point, reason) in &outcome.errors {
        println!("skipped {point}: {reason}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
