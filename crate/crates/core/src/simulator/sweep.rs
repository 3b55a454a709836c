use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_sim, SimConfig};

pub const CSV_HEADER: &str = "P,B,D,n,max_staleness,mean_staleness,availability,images_built";

/// Cartesian grid over (P, B, D, n), each point run once per seed on top of `base`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: SimConfig,
    pub dump_periods: Vec<u64>,
    pub build_times: Vec<u64>,
    pub startup_delays: Vec<u64>,
    pub replica_counts: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// Every (P, B, D, n) combination in grid order.
    pub fn points(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for &p in &self.dump_periods {
            for &b in &self.build_times {
                for &d in &self.startup_delays {
                    for &n in &self.replica_counts {
                        out.push(SimConfig {
                            dump_period: p,
                            build_time: b,
                            startup_delay: d,
                            replica_count: n,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Aggregate over all seeds of one grid point. Staleness mean and availability
/// are pooled over every record and read; `images_built` is the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dump_period: u64,
    pub build_time: u64,
    pub startup_delay: u64,
    pub replica_count: usize,
    pub max_staleness: u64,
    pub mean_staleness: f64,
    pub availability: f64,
    pub images_built: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Points that could not run, with the reason.
    pub errors: Vec<(String, String)>,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dump_period,
                r.build_time,
                r.startup_delay,
                r.replica_count,
                r.max_staleness,
                r.mean_staleness,
                r.availability,
                r.images_built
            );
        }
        out
    }
}

fn label(cfg: &SimConfig) -> String {
    format!(
        "P={} B={} D={} n={}",
        cfg.dump_period, cfg.build_time, cfg.startup_delay, cfg.replica_count
    )
}

/// Runs every grid point for every seed. A point whose config is invalid, or
/// whose run fails for any seed, is reported in `errors` and the rest continue.
pub fn sweep(grid: &SweepGrid) -> SweepOutcome {
    let mut outcome = SweepOutcome {
        rows: Vec::new(),
        errors: Vec::new(),
    };
    let seeds = if grid.seeds.is_empty() { vec![grid.base.seed] } else { grid.seeds.clone() };
    'points: for point in grid.points() {
        let mut row = SweepRow {
            dump_period: point.dump_period,
            build_time: point.build_time,
            startup_delay: point.startup_delay,
            replica_count: point.replica_count,
            max_staleness: 0,
            mean_staleness: 0.0,
            availability: 1.0,
            images_built: 0,
        };
        let (mut records, mut total, mut reads, mut errors) = (0u64, 0u64, 0u64, 0u64);
        for &seed in &seeds {
            let report = match run_sim(SimConfig { seed, ..point.clone() }) {
                Ok(r) => r,
                Err(e) => {
                    outcome.errors.push((label(&point), e.to_string()));
                    continue 'points;
                }
            };
            row.max_staleness = row.max_staleness.max(report.max_staleness);
            records += report.records.len() as u64;
            total += report.records.iter().map(|r| r.staleness).sum::<u64>();
            reads += report.read_count;
            errors += report.read_error_count;
            row.images_built += report.images_built;
        }
        if records > 0 {
            row.mean_staleness = total as f64 / records as f64;
        }
        if reads > 0 {
            row.availability = 1.0 - errors as f64 / reads as f64;
        }
        outcome.rows.push(row);
    }
    outcome
}
