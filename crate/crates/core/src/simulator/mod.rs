//! Discrete-time harness for update propagation.
//!
//! A [`Simulation`] wires a master, the bakery, a runtime, a gateway in
//! eventual-consistency mode and the rollout engine to one logical clock and
//! steps it one tick at a time. Within a tick, work happens in a fixed order:
//! build and rollout progress, then writes, then scheduled dumps (and any
//! build they trigger), then reads. For every committed write it records when
//! the first dump captured it and when the last replica serving older data
//! left the pool.

mod sweep;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bakery::{bake, should_rebuild, BakeError, EngineConfig, ImageManifest, MemImageStore};
use crate::clock::{LogicalClock, Timestamp};
use crate::digest::Digest;
use crate::dump::{emit_dump, DumpDocument, Value};
use crate::fixtures::features_base;
use crate::gateway::{AuditLog, Caller, Gateway, GatewayError, Mode, ReplicaPool, WriteAck};
use crate::master::{parse_write, Generation, Master, MasterError, WriteStatement};
use crate::rollout::{plan_rollout, RolloutError, RolloutFailure, RolloutPoll, RolloutRun, RolloutStrategy};
use crate::runtime::{ReadQuery, Runtime, RuntimeError};

pub use sweep::{sweep, SweepGrid, SweepOutcome, SweepRow, CSV_HEADER};

/// A write submitted at a fixed time, as SQL against the `features` table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledWrite {
    pub at: Timestamp,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteArrivals {
    Scheduled(Vec<ScheduledWrite>),
    /// `count` writes at distinct random ticks in `[0, horizon)`, mixing inserts,
    /// updates and deletes on the `features` table.
    Random { count: usize },
}

impl Default for WriteArrivals {
    fn default() -> Self {
        WriteArrivals::Scheduled(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Ticks between scheduled dumps; 0 dumps after every write.
    pub dump_period: u64,
    pub build_time: u64,
    pub startup_delay: u64,
    pub replica_count: usize,
    pub strategy: RolloutStrategy,
    #[serde(default)]
    pub write_arrivals: WriteArrivals,
    /// Reads issued through the gateway per tick.
    #[serde(default)]
    pub read_rate: u64,
    pub horizon: Timestamp,
    #[serde(default)]
    pub seed: u64,
    /// Accept a dump period shorter than one build plus one full rollout.
    /// Dumps then queue behind the pipeline and [`staleness_bound`] no longer holds.
    #[serde(default)]
    pub allow_saturation: bool,
}

impl SimConfig {
    /// The single-write scenario: one insert at t=0, P=10, B=5, D=1, three replicas
    /// replaced one at a time.
    pub fn single_write_example() -> Self {
        SimConfig {
            dump_period: 10,
            build_time: 5,
            startup_delay: 1,
            replica_count: 3,
            strategy: RolloutStrategy::new(2, 1),
            write_arrivals: WriteArrivals::Scheduled(vec![ScheduledWrite {
                at: 0,
                sql: "INSERT INTO features VALUES (1397, 'Mount Rainier', 46.8529, -121.7604)".into(),
            }]),
            read_rate: 1,
            horizon: 40,
            seed: 0,
            allow_saturation: false,
        }
    }

    /// Full rollout time: one startup delay per replica.
    pub fn rollout_time(&self) -> u64 {
        self.replica_count as u64 * self.startup_delay
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::ConfigInvalid(msg));
        if self.replica_count == 0 {
            return invalid("replica_count must be at least 1".into());
        }
        if self.horizon <= self.dump_period + self.build_time {
            return invalid(format!(
                "horizon {} must exceed dump_period + build_time = {}",
                self.horizon,
                self.dump_period + self.build_time
            ));
        }
        let pipeline = self.build_time + self.rollout_time();
        if !self.allow_saturation && self.dump_period < pipeline {
            return invalid(format!(
                "dump_period {} is shorter than build_time + replica_count * startup_delay = {pipeline}",
                self.dump_period
            ));
        }
        self.strategy
            .check(self.replica_count)
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        match &self.write_arrivals {
            WriteArrivals::Random { count } if *count as u64 > self.horizon => {
                invalid(format!("{count} random writes do not fit in horizon {}", self.horizon))
            }
            WriteArrivals::Scheduled(ws) => {
                let mut times: Vec<_> = ws.iter().map(|w| w.at).collect();
                times.sort_unstable();
                if times.windows(2).any(|p| p[0] == p[1]) {
                    return invalid("scheduled writes need distinct times".into());
                }
                if let Some(&t) = times.last().filter(|&&t| t > self.horizon) {
                    return invalid(format!("write at {t} is past the horizon {}", self.horizon));
                }
                Ok(())
            }
            WriteArrivals::Random { .. } => Ok(()),
        }
    }
}

/// Worst case from commit to full visibility: miss a dump by up to P, wait one
/// build, then one full one-by-one rollout.
pub fn staleness_bound(cfg: &SimConfig) -> u64 {
    cfg.dump_period + cfg.build_time + cfg.rollout_time()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessRecord {
    pub write_ts: Timestamp,
    pub included_generation: u64,
    pub all_visible_ts: Timestamp,
    pub staleness: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub staleness_bound: u64,
    pub records: Vec<StalenessRecord>,
    pub committed_writes: usize,
    pub failed_writes: usize,
    /// Committed writes not yet visible everywhere when the horizon was reached.
    pub unpropagated_writes: usize,
    pub max_staleness: u64,
    pub mean_staleness: f64,
    pub read_count: u64,
    pub read_error_count: u64,
    pub availability: f64,
    pub rollout_count: usize,
    pub images_built: usize,
    pub dumps_taken: usize,
    /// Dumps whose content matched the latest image, so no build was needed.
    pub dumps_unchanged: usize,
    /// Dumps replaced in the queue by a newer one before a build slot freed up.
    pub dumps_skipped: usize,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }

    /// Two-column human summary.
    pub fn to_table(&self) -> String {
        let rows: [(&str, String); 14] = [
            ("seed", self.seed.to_string()),
            ("committed writes", self.committed_writes.to_string()),
            ("failed writes", self.failed_writes.to_string()),
            ("unpropagated writes", self.unpropagated_writes.to_string()),
            ("max staleness", self.max_staleness.to_string()),
            ("mean staleness", format!("{:.3}", self.mean_staleness)),
            ("staleness bound", self.staleness_bound.to_string()),
            ("reads", self.read_count.to_string()),
            ("read errors", self.read_error_count.to_string()),
            ("availability", format!("{:.6}", self.availability)),
            ("rollouts", self.rollout_count.to_string()),
            ("images built", self.images_built.to_string()),
            ("dumps taken", self.dumps_taken.to_string()),
            ("dumps unchanged/skipped", format!("{}/{}", self.dumps_unchanged, self.dumps_skipped)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<24} {v:>12}");
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Bake(#[from] BakeError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("rollout failed: {0}")]
    RolloutFailed(#[from] RolloutFailure),
}

enum Pipeline {
    Idle,
    Building {
        doc: DumpDocument,
        generation: Generation,
        done_at: Timestamp,
    },
    RollingOut(RolloutRun),
}

#[derive(Debug, Clone, Copy)]
struct Tracked {
    write_ts: Timestamp,
    included: Option<u64>,
    visible_at: Option<Timestamp>,
}

/// Generates random writes over the `features` table.
struct WriteGen {
    rng: ChaCha8Rng,
    live: Vec<i64>,
    next_id: i64,
}

impl WriteGen {
    fn coord(&mut self, limit: i64) -> Value {
        Value::Real(self.rng.gen_range(-limit..=limit) as f64 / 100.0)
    }

    fn next(&mut self) -> WriteStatement {
        let roll: f64 = self.rng.gen();
        if self.live.is_empty() || roll < 0.5 {
            let id = self.next_id;
            self.next_id += 1;
            self.live.push(id);
            let (lat, lon) = (self.coord(9000), self.coord(18000));
            return WriteStatement::insert("features", vec![Value::Int(id), Value::text(format!("feature {id}")), lat, lon]);
        }
        let idx = self.rng.gen_range(0..self.live.len());
        let id = self.live[idx];
        if roll < 0.8 {
            let lat = self.coord(9000);
            WriteStatement::update("features", id, vec![("lat".into(), lat)])
        } else {
            self.live.swap_remove(idx);
            WriteStatement::delete("features", id)
        }
    }
}

/// One configured run. Call [`Simulation::run`] once, then inspect the final
/// pool and master through [`Simulation::gateway`].
pub struct Simulation {
    cfg: SimConfig,
    store: Arc<MemImageStore>,
    runtime: Runtime,
    gateway: Gateway,
    arrivals: Vec<(Timestamp, Option<WriteStatement>)>,
    writes: WriteGen,
    read_rng: ChaCha8Rng,
    pipeline: Pipeline,
    queued: Option<(DumpDocument, Generation)>,
    latest: Option<ImageManifest>,
    coverage: BTreeMap<Digest, u64>,
    tracked: Vec<Tracked>,
    log_len_seen: usize,
    visible_upto: usize,
    report: SimReport,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let base = features_base();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let arrivals = match &cfg.write_arrivals {
            WriteArrivals::Scheduled(ws) => {
                let mut out = Vec::with_capacity(ws.len());
                for w in ws {
                    let mut parsed = parse_write(&w.sql, &base)
                        .map_err(|e| SimError::ConfigInvalid(format!("write at {}: {e}", w.at)))?;
                    if parsed.len() != 1 {
                        return Err(SimError::ConfigInvalid(format!("write at {} must be one statement", w.at)));
                    }
                    out.push((w.at, parsed.pop()));
                }
                out.sort_by_key(|(t, _)| *t);
                out
            }
            WriteArrivals::Random { count } => {
                let mut times: Vec<Timestamp> = sample(&mut rng, cfg.horizon as usize, *count)
                    .into_iter()
                    .map(|t| t as Timestamp)
                    .collect();
                times.sort_unstable();
                times.into_iter().map(|t| (t, None)).collect()
            }
        };
        let mut writes_rng = rng.clone();
        writes_rng.set_stream(1);
        let mut read_rng = rng;
        read_rng.set_stream(2);

        let clock = LogicalClock::new();
        let store = Arc::new(MemImageStore::new());
        let runtime = Runtime::new(store.clone(), clock.clone());
        let master = Master::new(base);
        let pool = Arc::new(ReplicaPool::new());
        let gateway = Gateway::new(Mode::EventualConsistency, pool, Arc::new(Mutex::new(master)), clock)
            .with_audit_log(AuditLog::disabled());
        let report = SimReport {
            seed: cfg.seed,
            staleness_bound: staleness_bound(&cfg),
            records: Vec::new(),
            committed_writes: 0,
            failed_writes: 0,
            unpropagated_writes: 0,
            max_staleness: 0,
            mean_staleness: 0.0,
            read_count: 0,
            read_error_count: 0,
            availability: 1.0,
            rollout_count: 0,
            images_built: 0,
            dumps_taken: 0,
            dumps_unchanged: 0,
            dumps_skipped: 0,
        };
        let mut sim = Simulation {
            cfg,
            store,
            runtime,
            gateway,
            arrivals,
            writes: WriteGen {
                rng: writes_rng,
                live: Vec::new(),
                next_id: 1,
            },
            read_rng,
            pipeline: Pipeline::Idle,
            queued: None,
            latest: None,
            coverage: BTreeMap::new(),
            tracked: Vec::new(),
            log_len_seen: 0,
            visible_upto: 0,
            report,
        };
        sim.boot()?;
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    /// Highest generation whose content the image serves, if the image was built here.
    pub fn coverage(&self, image_id: &Digest) -> Option<u64> {
        self.coverage.get(image_id).copied()
    }

    /// Bakes generation 0 and starts the pool on it before any time passes.
    fn boot(&mut self) -> Result<(), SimError> {
        let (doc, generation) = {
            let master = self.gateway.master();
            (emit_dump(master.base()), master.last_generation().clone())
        };
        let manifest = self.bake(&doc, &generation)?;
        for _ in 0..self.cfg.replica_count {
            let inst = self.runtime.launch(&manifest)?;
            self.gateway.pool().add(inst);
        }
        self.runtime.set_startup_delay(self.cfg.startup_delay);
        if self.cfg.dump_period > 0 {
            self.gateway.master().schedule_dumps(self.cfg.dump_period)?;
        }
        Ok(())
    }

    fn now(&self) -> Timestamp {
        self.runtime.clock().now()
    }

    fn bake(&mut self, doc: &DumpDocument, generation: &Generation) -> Result<ImageManifest, SimError> {
        let manifest = bake(doc, generation, &EngineConfig::default(), self.store.as_ref(), self.now())?.manifest;
        self.report.images_built += 1;
        self.extend_coverage(&manifest.image_id, generation.number);
        self.latest = Some(manifest.clone());
        Ok(manifest)
    }

    fn extend_coverage(&mut self, image_id: &Digest, generation: u64) {
        let entry = self.coverage.entry(image_id.clone()).or_insert(generation);
        *entry = (*entry).max(generation);
    }

    /// Runs to the horizon and returns the report.
    pub fn run(&mut self) -> Result<SimReport, SimError> {
        let mut next_arrival = 0;
        for t in 0..=self.cfg.horizon {
            self.runtime.clock().advance_to(t);
            self.advance_pipeline()?;
            while next_arrival < self.arrivals.len() && self.arrivals[next_arrival].0 == t {
                let w = match self.arrivals[next_arrival].1.clone() {
                    Some(w) => w,
                    None => self.writes.next(),
                };
                self.write(&w, t)?;
                next_arrival += 1;
            }
            let dumps = self.gateway.master().advance_to(t)?;
            for (doc, generation) in dumps {
                self.on_dump(doc, generation)?;
            }
            self.advance_pipeline()?;
            self.note_visibility(t);
            self.reads();
        }
        Ok(self.finish())
    }

    fn write(&mut self, w: &WriteStatement, t: Timestamp) -> Result<(), SimError> {
        match self.gateway.route_write(w, Caller::User) {
            Ok(WriteAck::Applied { ts, .. }) => {
                debug_assert_eq!(ts, t);
                self.report.committed_writes += 1;
                self.tracked.push(Tracked {
                    write_ts: ts,
                    included: None,
                    visible_at: None,
                });
                if self.cfg.dump_period == 0 {
                    let dumped = self.gateway.master().dump_now()?;
                    self.on_dump(dumped.0, dumped.1)?;
                }
                Ok(())
            }
            Ok(WriteAck::Queued(_)) => unreachable!("the simulator gateway is synchronous"),
            Err(GatewayError::Master(MasterError::Data(_))) => {
                self.report.failed_writes += 1;
                Ok(())
            }
            Err(GatewayError::Master(e)) => Err(e.into()),
            Err(e) => unreachable!("writes never touch replicas: {e}"),
        }
    }

    fn on_dump(&mut self, doc: DumpDocument, generation: Generation) -> Result<(), SimError> {
        self.report.dumps_taken += 1;
        let log_len = self
            .gateway
            .master()
            .dump_history()
            .last()
            .map_or(0, |d| d.log_len);
        for tracked in &mut self.tracked[self.log_len_seen..log_len] {
            tracked.included = Some(generation.number);
        }
        self.log_len_seen = log_len;
        match self.pipeline {
            Pipeline::Idle => self.start(doc, generation),
            _ => {
                if self.queued.replace((doc, generation)).is_some() {
                    self.report.dumps_skipped += 1;
                }
            }
        }
        Ok(())
    }

    /// Begins building `generation`, or only extends coverage when nothing changed.
    fn start(&mut self, doc: DumpDocument, generation: Generation) {
        if should_rebuild(self.latest.as_ref(), &generation) {
            self.pipeline = Pipeline::Building {
                doc,
                generation,
                done_at: self.now() + self.cfg.build_time,
            };
        } else {
            self.report.dumps_unchanged += 1;
            let id = self.latest.as_ref().expect("an image exists after boot").image_id.clone();
            self.extend_coverage(&id, generation.number);
        }
    }

    fn advance_pipeline(&mut self) -> Result<(), SimError> {
        loop {
            match std::mem::replace(&mut self.pipeline, Pipeline::Idle) {
                Pipeline::Idle => match self.queued.take() {
                    Some((doc, generation)) => self.start(doc, generation),
                    None => return Ok(()),
                },
                Pipeline::Building {
                    doc,
                    generation,
                    done_at,
                } if done_at <= self.now() => {
                    let manifest = self.bake(&doc, &generation)?;
                    let plan = plan_rollout(self.gateway.pool(), &manifest, self.cfg.strategy)?;
                    if !plan.is_empty() {
                        self.report.rollout_count += 1;
                    }
                    self.pipeline = Pipeline::RollingOut(RolloutRun::start(&plan, self.gateway.pool())?);
                }
                building @ Pipeline::Building { .. } => {
                    self.pipeline = building;
                    return Ok(());
                }
                Pipeline::RollingOut(mut run) => match run.poll(&self.runtime) {
                    RolloutPoll::Pending { .. } => {
                        self.pipeline = Pipeline::RollingOut(run);
                        return Ok(());
                    }
                    RolloutPoll::Done(_) => {}
                    RolloutPoll::Failed(f) => return Err(f.into()),
                },
            }
        }
    }

    /// Marks writes whose generation every pool member now serves.
    fn note_visibility(&mut self, t: Timestamp) {
        let floor = self
            .gateway
            .pool()
            .members()
            .iter()
            .map(|m| self.coverage.get(m.image_id()).copied().unwrap_or(0))
            .min()
            .unwrap_or(0);
        // Writes are captured in log order, so visibility advances as a prefix.
        while let Some(tracked) = self.tracked.get_mut(self.visible_upto) {
            match tracked.included {
                Some(g) if g <= floor => tracked.visible_at = Some(t),
                _ => break,
            }
            self.visible_upto += 1;
        }
    }

    fn reads(&mut self) {
        for _ in 0..self.cfg.read_rate {
            let id = self.read_rng.gen_range(0..self.writes.next_id.max(2));
            let q = ReadQuery::all("features").filter("feature_id", id);
            self.report.read_count += 1;
            if self.gateway.route_read(&q).is_err() {
                self.report.read_error_count += 1;
            }
        }
    }

    fn finish(&mut self) -> SimReport {
        let mut report = self.report.clone();
        report.records = self
            .tracked
            .iter()
            .filter_map(|t| {
                Some(StalenessRecord {
                    write_ts: t.write_ts,
                    included_generation: t.included?,
                    all_visible_ts: t.visible_at?,
                    staleness: t.visible_at? - t.write_ts,
                })
            })
            .collect();
        report.unpropagated_writes = report.committed_writes - report.records.len();
        report.max_staleness = report.records.iter().map(|r| r.staleness).max().unwrap_or(0);
        if !report.records.is_empty() {
            let total: u64 = report.records.iter().map(|r| r.staleness).sum();
            report.mean_staleness = total as f64 / report.records.len() as f64;
        }
        if report.read_count > 0 {
            report.availability = 1.0 - report.read_error_count as f64 / report.read_count as f64;
        }
        report
    }
}

/// Validates `cfg`, runs it to the horizon, and reports.
pub fn run_sim(cfg: SimConfig) -> Result<SimReport, SimError> {
    Simulation::new(cfg)?.run()
}
