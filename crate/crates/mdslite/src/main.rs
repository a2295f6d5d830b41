use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mdslite::analysis::{self, describe_run};
use mdslite::bench::{run_benchmark, BenchConfig, LogSource, QueryTemplate};
use mdslite::giis::{start_giis, GiisConfig};
use mdslite::gris::{start_gris, GrisConfig};
use mdslite::replicate::{replicate, ExperimentMatrix, Scale, Scenario};
use mdslite::sink::EventSink;
use mdslite_core::{AttrSelection, Credential, EntryName, Filter, Scope, Ttl};

#[derive(Parser)]
#[command(name = "mdslite", version, about = "Hierarchical information service and load-test toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a resource information server.
    Gris {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Seconds, or "inf".
        #[arg(long)]
        cache_ttl: Option<Ttl>,
        /// Aggregate directory to register with.
        #[arg(long)]
        register_to: Option<String>,
        #[arg(long)]
        register_ttl: Option<f64>,
        #[arg(long)]
        coalesce: bool,
        #[arg(long)]
        secret: Option<String>,
    },
    /// Run an aggregate directory.
    Giis {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        cache_ttl: Option<Ttl>,
        /// Seconds between registration sweeps.
        #[arg(long)]
        sweep_interval: Option<f64>,
    },
    /// Drive closed-loop load against a server.
    Bench(BenchArgs),
    /// Summarize event logs into CSV.
    Analyze {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Write summary.csv and phases.csv here instead of printing.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare two summary CSV files row by row.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the standard experiment matrices.
    Replicate {
        /// Scenario name or "all"; repeatable.
        #[arg(long, default_value = "all")]
        scenario: Vec<String>,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the user counts, e.g. 1,10,50.
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<usize>>,
        /// Override the run duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Write gnuplot data files from a summary CSV.
    EmitPlotdata {
        summary: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 1)]
    users: usize,
    /// Seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 1000)]
    think_ms: u64,
    #[arg(long, default_value = "mds-vo-name=local")]
    base: String,
    #[arg(long, default_value = "sub")]
    scope: Scope,
    #[arg(long, default_value = "(objectclass=*)")]
    filter: String,
    #[arg(long, default_value = "*")]
    attrs: String,
    #[arg(long, default_value = "bench.log")]
    log: PathBuf,
    /// Summary CSV for this run; phases and samples go next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Server event logs to merge; repeatable.
    #[arg(long)]
    server_log: Vec<PathBuf>,
    #[arg(long, default_value = "adhoc")]
    scenario: String,
    #[arg(long, default_value_t = 0.0)]
    warmup: f64,
    #[arg(long, default_value_t = 1.0)]
    sample_interval: f64,
    #[arg(long, default_value_t = 300.0)]
    timeout: f64,
    #[arg(long)]
    persistent: bool,
    #[arg(long, default_value = "mdsuser")]
    identity: String,
    #[arg(long, default_value = mdslite::gris::DEFAULT_SECRET)]
    secret: String,
}

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn on_signal(_: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

/// Blocks until SIGINT or SIGTERM, flushing the log once a second.
fn wait_for_signal(sink: &EventSink) {
    // SAFETY: the handler only stores to an atomic.
    unsafe {
        libc::signal(libc::SIGINT, on_signal as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_signal as *const () as libc::sighandler_t);
    }
    while !STOP.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(200));
        if let Err(e) = sink.flush() {
            log::warn!("flushing log: {e}");
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Gris { config, listen, log, cache_ttl, register_to, register_ttl, coalesce, secret } => {
            let mut cfg = GrisConfig::load(&config)?;
            cfg.listen = listen.unwrap_or(cfg.listen);
            cfg.log = log.or(cfg.log);
            cfg.cache_ttl = cache_ttl.unwrap_or(cfg.cache_ttl);
            cfg.register_to = register_to.or(cfg.register_to);
            cfg.register_ttl = register_ttl.unwrap_or(cfg.register_ttl);
            cfg.coalesce |= coalesce;
            cfg.secret = secret.unwrap_or(cfg.secret);
            let log_path = cfg.log.clone().unwrap_or_else(|| "gris.log".into());
            let sink = EventSink::file(&log_path).with_context(|| format!("opening {}", log_path.display()))?;
            let mut handle = start_gris(&cfg, sink.clone())?;
            println!("gris {} serving {} providers on {}", cfg.suffix, cfg.providers.len(), handle.endpoint());
            wait_for_signal(&sink);
            handle.shutdown();
            sink.close()?;
        }
        Command::Giis { config, listen, log, cache_ttl, sweep_interval } => {
            let mut cfg = GiisConfig::load(&config)?;
            cfg.listen = listen.unwrap_or(cfg.listen);
            cfg.log = log.or(cfg.log);
            cfg.cache_ttl = cache_ttl.unwrap_or(cfg.cache_ttl);
            if let Some(s) = sweep_interval {
                if !positive(s) {
                    bail!("sweep interval must be positive");
                }
                cfg.sweep_interval = Duration::from_secs_f64(s);
            }
            let log_path = cfg.log.clone().unwrap_or_else(|| "giis.log".into());
            let sink = EventSink::file(&log_path).with_context(|| format!("opening {}", log_path.display()))?;
            let mut handle = start_giis(&cfg, sink.clone())?;
            println!("giis {} on {}", cfg.suffix, handle.endpoint());
            wait_for_signal(&sink);
            handle.shutdown();
            sink.close()?;
        }
        Command::Bench(a) => bench(a)?,
        Command::Analyze { logs, out_dir } => {
            let result = analysis::analyze(&logs)?;
            for r in &result.runs {
                eprint!("{}", describe_run(r));
            }
            if result.diagnostics > 0 {
                eprintln!("{} malformed log lines skipped", result.diagnostics);
            }
            let summary = analysis::summary_csv(&result.rows());
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("summary.csv"), summary)?;
                    std::fs::write(dir.join("phases.csv"), analysis::phase_csv(&result.phase_rows()))?;
                }
                None => print!("{summary}"),
            }
        }
        Command::Compare { a, b, out } => {
            let rows = analysis::compare(&analysis::read_summary_csv(&a)?, &analysis::read_summary_csv(&b)?)?;
            let text = analysis::comparison_csv(&rows);
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Replicate { scenario, scale, out_dir, users, duration } => {
            let scenarios: Vec<Scenario> = if scenario.iter().any(|s| s == "all") {
                Scenario::ALL.to_vec()
            } else {
                scenario.iter().map(|s| s.parse()).collect::<Result<_, String>>().map_err(anyhow::Error::msg)?
            };
            let matrices: Vec<ExperimentMatrix> = scenarios
                .into_iter()
                .map(|s| {
                    let mut m = ExperimentMatrix::standard(s, scale);
                    if let Some(u) = &users {
                        m.user_counts = u.clone();
                    }
                    if let Some(d) = duration {
                        m.duration = Duration::from_secs_f64(d);
                    }
                    m
                })
                .collect();
            let outcome = replicate(&matrices, scale, &out_dir)?;
            for f in &outcome.findings {
                println!("{f}");
            }
            for p in &outcome.files {
                eprintln!("wrote {}", p.display());
            }
            if !outcome.all_pass() {
                bail!("some findings failed");
            }
        }
        Command::EmitPlotdata { summary, out_dir } => {
            let rows = analysis::read_summary_csv(&summary)?;
            for p in analysis::emit_plotdata(&rows, &out_dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let template = QueryTemplate {
        base: EntryName::parse(&a.base)?,
        scope: a.scope,
        filter: Filter::parse(&a.filter)?,
        attrs: AttrSelection::parse(&a.attrs),
    };
    if !positive(a.duration) || !positive(a.sample_interval) || !positive(a.timeout) || a.warmup < 0.0 {
        bail!("duration, sample interval and timeout must be positive");
    }
    let mut cfg = BenchConfig::new(a.target, template, a.users, Duration::from_secs_f64(a.duration), Duration::from_millis(a.think_ms));
    cfg.credential = Credential::new(a.identity, a.secret).context("identity must not be empty")?;
    cfg.scenario = a.scenario;
    cfg.warmup = Duration::from_secs_f64(a.warmup);
    cfg.sample_interval = Duration::from_secs_f64(a.sample_interval);
    cfg.timeout = Duration::from_secs_f64(a.timeout);
    cfg.persistent = a.persistent;
    cfg.server_logs = a.server_log.into_iter().map(LogSource::File).collect();
    let sink = EventSink::file(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
    let report = run_benchmark(&cfg, sink.clone())?;
    sink.close()?;

    eprint!("{}", describe_run(&report.summary));
    eprintln!(
        "issued={} succeeded={} incomplete={} errors={:?} mean-response-bytes={:.0}",
        report.issued, report.succeeded, report.incomplete, report.errors, report.mean_response_bytes
    );
    if let Some(b) = report.closed_loop_bound() {
        eprintln!("closed-loop bound {b:.3}/s");
    }
    if report.overloaded {
        eprintln!("note: load proxy exceeded {} per core; client-side saturation is likely", mdslite::bench::OVERLOAD_PER_CORE);
    }
    let summary = analysis::summary_csv(std::slice::from_ref(&report.summary.row));
    match a.out {
        Some(p) => {
            std::fs::write(&p, summary)?;
            std::fs::write(sibling(&p, "phases.csv"), analysis::phase_csv(&report.summary.phase_rows()))?;
            std::fs::write(sibling(&p, "samples.csv"), report.samples_csv())?;
        }
        None => print!("{summary}"),
    }
    Ok(())
}

/// False for NaN as well as for zero and negatives.
fn positive(x: f64) -> bool {
    x > 0.0
}
