// How long does a committed write take to reach every replica? Run the
// single-write scenario, then a random workload, and compare with the bound.

use std::error::Error;

use imagebake::simulator::{run_sim, staleness_bound, SimConfig, WriteArrivals};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let single = SimConfig::single_write_example();
    let report = run_sim(single.clone())?;
    let r = &report.records[0];
    println!(
        "write at t={} in generation {}, on every replica at t={} (bound {})",
        r.write_ts,
        r.included_generation,
        r.all_visible_ts,
        staleness_bound(&single)
    );

    let busy = SimConfig {
        dump_period: 12,
        write_arrivals: WriteArrivals::Random { count: 80 },
        read_rate: 4,
        horizon: 400,
        seed: 2024,
        ..single
    };
    let report = run_sim(busy.clone())?;
    print!("{}", report.to_table());
    assert!(report.max_staleness <= staleness_bound(&busy));
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
