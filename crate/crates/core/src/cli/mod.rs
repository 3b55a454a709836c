//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the command itself
//! fails (bad dump, failed verification, invalid config, ...). Data goes to
//! standard output and diagnostics to standard error.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::bakery::{bake, export_image, import_image, verify_image, EngineConfig, FsImageStore, ImageManifest, ImageStore};
use crate::clock::LogicalClock;
use crate::digest::Digest;
use crate::dump::{parse_dump, parse_dump_bytes, DumpDocument, DumpError};
use crate::gateway::{Mode, ReplicaPool};
use crate::master::{parse_write, DumpStore, Generation, Master};
use crate::rollout::{events_to_jsonl, execute_rollout, plan_rollout, RolloutStrategy};
use crate::runtime::{ReadQuery, Runtime};
use crate::simulator::{sweep, Simulation, SimConfig, SweepGrid, WriteArrivals};

#[derive(Debug, Parser)]
#[command(name = "imagebake", version, about = "Bake database dumps into immutable images and serve them from disposable replicas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StoreArg {
    /// Image store directory.
    #[arg(long, env = "IMAGEBAKE_STORE", default_value = "./store")]
    store: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bake a dump file into an image and print its id.
    Bake {
        #[arg(long)]
        dump: PathBuf,
        #[command(flatten)]
        store: StoreArg,
        /// Generation number recorded in the manifest.
        #[arg(long, default_value_t = 0)]
        gen: u64,
    },
    /// Re-check an image's layers and manifest.
    Verify {
        #[arg(long)]
        image: Digest,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Launch replicas from an image and print their inspect descriptors.
    Run {
        #[arg(long)]
        image: Digest,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Run one SELECT against a fresh replica; prints one JSON array per row.
    Read {
        #[arg(long)]
        image: Digest,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Apply writes to a master directory and dump a new generation.
    Write {
        #[arg(long)]
        master: PathBuf,
        #[arg(long)]
        sql: String,
        /// Dump to start from when the master directory is empty.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Print an image manifest.
    Inspect {
        #[arg(long)]
        image: Digest,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Roll a pool of replicas from one image to another; prints events as JSON lines.
    Rollout {
        #[arg(long)]
        from: Digest,
        #[arg(long)]
        to: Digest,
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        min_available: usize,
        #[arg(long, default_value_t = 1)]
        max_surge: usize,
        #[arg(long, default_value_t = 1)]
        startup_delay: u64,
        /// Make the N-th launch of the rollout fail, to exercise rollback.
        #[arg(long)]
        fail_launch: Option<u64>,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Run a staleness simulation.
    Simulate(SimulateArgs),
    /// Run a simulation grid and print CSV.
    Sweep {
        /// JSON sweep grid.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scripted walk-through of one write scenario; prints the audit log.
    Demo {
        #[arg(long, value_parser = ["read-only", "eventual", "async"])]
        scenario: String,
    },
    /// Write an image to a single-file archive.
    Export {
        #[arg(long)]
        image: Digest,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Load an image archive into the store and print its id.
    Import {
        #[arg(long)]
        archive: PathBuf,
        #[command(flatten)]
        store: StoreArg,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON config; inline flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dump_period: Option<u64>,
    #[arg(long)]
    build_time: Option<u64>,
    #[arg(long)]
    startup_delay: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    min_available: Option<usize>,
    #[arg(long)]
    max_surge: Option<usize>,
    /// Number of random writes.
    #[arg(long)]
    writes: Option<usize>,
    #[arg(long)]
    read_rate: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
}

impl SimulateArgs {
    fn config(&self) -> Result<SimConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| domain(format!("{}: {e}", path.display())))?,
            None => SimConfig::single_write_example(),
        };
        let overrides = [
            (self.dump_period, &mut cfg.dump_period),
            (self.build_time, &mut cfg.build_time),
            (self.startup_delay, &mut cfg.startup_delay),
            (self.read_rate, &mut cfg.read_rate),
            (self.horizon, &mut cfg.horizon),
            (self.seed, &mut cfg.seed),
        ];
        for (value, field) in overrides {
            if let Some(v) = value {
                *field = v;
            }
        }
        if let Some(n) = self.replicas {
            cfg.replica_count = n;
        }
        if let Some(m) = self.min_available {
            cfg.strategy.min_available = m;
        }
        if let Some(s) = self.max_surge {
            cfg.strategy.max_surge = s;
        }
        if let Some(count) = self.writes {
            cfg.write_arrivals = WriteArrivals::Random { count };
        }
        Ok(cfg)
    }
}

/// A command failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn domain(e: impl Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn dump_failure(path: &Path, e: DumpError) -> Failure {
    match e.position() {
        Some((line, column)) => domain(format!("{}:{line}:{column}: {e}", path.display())),
        None => domain(format!("{}: {e}", path.display())),
    }
}

fn open_store(arg: &StoreArg) -> Result<Arc<FsImageStore>, Failure> {
    FsImageStore::open(&arg.store).map(Arc::new).map_err(domain)
}

fn manifest(store: &dyn ImageStore, id: &Digest) -> Result<ImageManifest, Failure> {
    store
        .get_manifest(id)
        .map_err(domain)?
        .ok_or_else(|| domain(format!("unknown image {id}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| domain(e);
    match command {
        Command::Bake { dump, store, gen } => {
            let bytes = fs::read(&dump).map_err(|e| domain(format!("{}: {e}", dump.display())))?;
            parse_dump_bytes(&bytes).map_err(|e| dump_failure(&dump, e))?;
            let text = String::from_utf8(bytes).expect("parser accepted the bytes as UTF-8");
            let doc = DumpDocument::from_text(text).map_err(|e| dump_failure(&dump, e))?;
            let store = open_store(&store)?;
            let generation = Generation::for_dump(gen, &doc, 0);
            let baked = bake(&doc, &generation, &EngineConfig::default(), store.as_ref(), 0).map_err(domain)?;
            writeln!(out, "{}", baked.manifest.image_id).map_err(io)?;
        }
        Command::Verify { image, store } => {
            let store = open_store(&store)?;
            let m = manifest(store.as_ref(), &image)?;
            let report = verify_image(&m, store.as_ref()).map_err(domain)?;
            write!(out, "{report}").map_err(io)?;
            if !report.passed() {
                return Err(domain(format!("image {image} failed verification")));
            }
        }
        Command::Run { image, replicas, store } => {
            let store = open_store(&store)?;
            let runtime = Runtime::new(store, LogicalClock::new());
            let mut descriptors = Vec::with_capacity(replicas);
            for _ in 0..replicas {
                descriptors.push(runtime.launch_image(&image).map_err(domain)?.inspect());
            }
            let json = serde_json::to_string_pretty(&descriptors).map_err(domain)?;
            writeln!(out, "{json}").map_err(io)?;
        }
        Command::Read { image, query, store } => {
            let store = open_store(&store)?;
            let replica = Runtime::new(store, LogicalClock::new()).launch_image(&image).map_err(domain)?;
            let q = ReadQuery::parse(&query, replica.snapshot()).map_err(domain)?;
            for row in replica.exec_read(&q).map_err(domain)? {
                writeln!(out, "{}", serde_json::to_string(&row).map_err(domain)?).map_err(io)?;
            }
        }
        Command::Write { master, sql, init } => {
            let store = DumpStore::open(&master).map_err(domain)?;
            let mut m = if store.generations().map_err(domain)?.is_empty() {
                let init = init.ok_or_else(|| domain(format!("{} is empty; pass --init DUMP", master.display())))?;
                let base = parse_dump(&read_text(&init)?).map_err(|e| dump_failure(&init, e))?;
                Master::create(base, store).map_err(domain)?
            } else {
                Master::restore(store).map_err(domain)?
            };
            let writes = parse_write(&sql, m.current()).map_err(domain)?;
            for w in &writes {
                let t = m.next_write_ts();
                let affected = m.apply_write(w, t).map_err(domain)?;
                writeln!(err, "{} on {}: {affected} row(s)", kind(w), w.table()).map_err(io)?;
            }
            let (_, generation) = m.dump_now().map_err(domain)?;
            let path = m.store().expect("opened with a store").dump_path(generation.number);
            writeln!(out, "{}", serde_json::to_string(&generation).map_err(domain)?).map_err(io)?;
            writeln!(err, "wrote {}", path.display()).map_err(io)?;
        }
        Command::Inspect { image, store } => {
            let store = open_store(&store)?;
            writeln!(out, "{}", manifest(store.as_ref(), &image)?.to_json_pretty()).map_err(io)?;
        }
        Command::Rollout {
            from,
            to,
            replicas,
            min_available,
            max_surge,
            startup_delay,
            fail_launch,
            store,
        } => {
            let store = open_store(&store)?;
            let target = manifest(store.as_ref(), &to)?;
            let runtime = Runtime::new(store, LogicalClock::new());
            let pool = Arc::new(ReplicaPool::new());
            for _ in 0..replicas {
                pool.add(runtime.launch_image(&from).map_err(domain)?);
            }
            runtime.set_startup_delay(startup_delay);
            let plan = plan_rollout(&pool, &target, RolloutStrategy::new(min_available, max_surge)).map_err(domain)?;
            if let Some(n) = fail_launch {
                if n == 0 {
                    return Err(Failure {
                        code: 1,
                        message: "--fail-launch counts from 1".into(),
                    });
                }
                runtime.fail_nth_launch(n);
            }
            match execute_rollout(&plan, &runtime, &pool) {
                Ok(events) => write!(out, "{}", events_to_jsonl(&events)).map_err(io)?,
                Err(failure) => {
                    write!(out, "{}", events_to_jsonl(&failure.events)).map_err(io)?;
                    return Err(domain(format!("rollout rolled back: {}", failure.error)));
                }
            }
        }
        Command::Simulate(args) => {
            let cfg = args.config()?;
            let report = Simulation::new(cfg).and_then(|mut s| s.run()).map_err(domain)?;
            if let Some(path) = &args.out {
                write_file(path, &report.to_json())?;
            }
            write!(out, "{}", report.to_table()).map_err(io)?;
        }
        Command::Sweep { grid, out: out_path } => {
            let grid: SweepGrid =
                serde_json::from_str(&read_text(&grid)?).map_err(|e| domain(format!("{}: {e}", grid.display())))?;
            let outcome = sweep(&grid);
            for (point, reason) in &outcome.errors {
                writeln!(err, "skipped {point}: {reason}").map_err(io)?;
            }
            if outcome.rows.is_empty() {
                return Err(domain("no grid point could run"));
            }
            match out_path {
                Some(path) => write_file(&path, &outcome.to_csv())?,
                None => write!(out, "{}", outcome.to_csv()).map_err(io)?,
            }
        }
        Command::Demo { scenario } => {
            let mode: Mode = scenario.parse().map_err(|m| Failure { code: 1, message: m })?;
            let transcript = crate::demo::run_demo(mode).map_err(domain)?;
            write!(out, "{}", transcript.to_text()).map_err(io)?;
        }
        Command::Export { image, out: path, store } => {
            let store = open_store(&store)?;
            export_image(store.as_ref(), &image, &path).map_err(domain)?;
            writeln!(err, "exported {} to {}", image.short(), path.display()).map_err(io)?;
        }
        Command::Import { archive, store } => {
            let store = open_store(&store)?;
            let m = import_image(store.as_ref(), &archive).map_err(domain)?;
            let report = verify_image(&m, store.as_ref()).map_err(domain)?;
            if !report.passed() {
                write!(err, "{report}").map_err(io)?;
                return Err(domain(format!("imported image {} failed verification", m.image_id)));
            }
            writeln!(out, "{}", m.image_id).map_err(io)?;
        }
    }
    Ok(())
}

fn kind(w: &crate::master::WriteStatement) -> &'static str {
    use crate::master::WriteStatement::*;
    match w {
        Insert { .. } => "INSERT",
        Update { .. } => "UPDATE",
        Delete { .. } => "DELETE",
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
