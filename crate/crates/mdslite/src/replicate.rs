//! Experiment matrices and the driver that runs them end to end: fresh
//! services per point, warmed caches where the scenario calls for them,
//! logs on disk, summaries rebuilt from those logs.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use mdslite_core::{EntryName, PhaseName, Ttl};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, SummaryRow};
use crate::bench::{run_benchmark, BenchConfig, BenchError, LogSource, QueryTemplate, RunReport};
use crate::giis::{start_giis, GiisConfig, GiisHandle};
use crate::gris::{start_gris, uniform_providers, GrisConfig, GrisError, GrisHandle};
use crate::sink::EventSink;

pub const VO_SUFFIX: &str = "mds-vo-name=local";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    GrisCached,
    GrisUncached,
    GiisCached,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::GrisCached, Scenario::GrisUncached, Scenario::GiisCached];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::GrisCached => "gris-cached",
            Scenario::GrisUncached => "gris-uncached",
            Scenario::GiisCached => "giis-cached",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Short runs on one machine.
    Desk,
    /// Long runs at full user counts; only a plan is written.
    Full,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(format!("unknown scale {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    pub scenario: Scenario,
    pub user_counts: Vec<usize>,
    pub duration: Duration,
    pub think: Duration,
    pub sample_interval: Duration,
    pub providers: usize,
    pub provider_cost: Duration,
    pub entry_count: usize,
    pub entry_bytes: usize,
    pub gris_ttl: Ttl,
    /// Member servers behind the aggregate directory.
    pub grises: usize,
    pub giis_ttl: Ttl,
}

#[derive(Debug, Error)]
pub enum ReplicateError {
    #[error("invalid matrix for {0}: {1}")]
    InvalidMatrix(Scenario, String),
    #[error(transparent)]
    Service(#[from] GrisError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentMatrix {
    pub fn standard(scenario: Scenario, scale: Scale) -> Self {
        let (user_counts, duration, sample) = match scale {
            Scale::Desk => (vec![1, 5, 10, 20, 50], 30.0, 1.0),
            Scale::Full => (vec![1, 50, 100, 150, 200, 300, 400, 500, 600], 600.0, 5.0),
        };
        Self {
            scenario,
            user_counts,
            duration: Duration::from_secs_f64(duration),
            think: Duration::from_secs(1),
            sample_interval: Duration::from_secs_f64(sample),
            providers: 10,
            provider_cost: Duration::from_millis(50),
            entry_count: 4,
            entry_bytes: 220,
            gris_ttl: if scenario == Scenario::GrisUncached { Ttl::Zero } else { Ttl::Infinite },
            grises: 5,
            giis_ttl: Ttl::from_secs_f64(duration * 2.0),
        }
    }

    pub fn validate(&self) -> Result<(), ReplicateError> {
        let bad = |m: &str| Err(ReplicateError::InvalidMatrix(self.scenario, m.to_owned()));
        if self.user_counts.is_empty() || self.user_counts.contains(&0) {
            return bad("user counts must be non-empty and positive");
        }
        if self.providers == 0 || self.entry_count == 0 || self.duration.is_zero() {
            return bad("providers, entry count and duration must be positive");
        }
        match self.scenario {
            Scenario::GrisCached if self.gris_ttl != Ttl::Infinite => bad("cached server needs an infinite TTL"),
            Scenario::GrisUncached if self.gris_ttl != Ttl::Zero => bad("uncached server needs a zero TTL"),
            Scenario::GiisCached if self.grises == 0 => bad("needs at least one member server"),
            Scenario::GiisCached if self.giis_ttl.as_secs_f64() < self.duration.as_secs_f64() => {
                bad("aggregate cache TTL must cover the run")
            }
            _ => Ok(()),
        }
    }

    fn host(i: usize) -> EntryName {
        EntryName::parse(&format!("mds-host-name=host{i}, {VO_SUFFIX}")).expect("valid name")
    }

    fn gris_config(&self, i: usize) -> GrisConfig {
        let sfx = Self::host(i);
        let ps = uniform_providers(&sfx, self.providers, self.provider_cost, self.entry_count, self.entry_bytes, 1 + i as u64 * 97);
        GrisConfig::new(sfx, self.gris_ttl, ps)
    }

    fn giis_config(&self) -> GiisConfig {
        GiisConfig::new(EntryName::parse(VO_SUFFIX).expect("valid name"), self.giis_ttl, Duration::from_secs(5))
    }
}

/// Services for one measurement point.
pub struct Deployment {
    pub members: Vec<GrisHandle>,
    pub giis: Option<GiisHandle>,
    pub target: String,
    pub base: EntryName,
}

impl Deployment {
    pub fn start(m: &ExperimentMatrix, sink: &Arc<EventSink>) -> Result<Self, ReplicateError> {
        match m.scenario {
            Scenario::GrisCached | Scenario::GrisUncached => {
                let cfg = m.gris_config(0);
                let g = start_gris(&cfg, sink.clone())?;
                if m.scenario == Scenario::GrisCached {
                    g.gris.warm()?;
                }
                Ok(Self { target: g.endpoint(), base: cfg.suffix, members: vec![g], giis: None })
            }
            Scenario::GiisCached => {
                let gcfg = m.giis_config();
                let giis = start_giis(&gcfg, sink.clone())?;
                let mut members = Vec::new();
                for i in 0..m.grises {
                    let mut cfg = m.gris_config(i);
                    cfg.register_to = Some(giis.endpoint());
                    cfg.register_ttl = m.duration.as_secs_f64().max(30.0);
                    let g = start_gris(&cfg, sink.clone())?;
                    g.gris.warm()?;
                    members.push(g);
                }
                giis.giis.warm();
                Ok(Self { target: giis.endpoint(), base: gcfg.suffix, members, giis: Some(giis) })
            }
        }
    }

    pub fn shutdown(&mut self) {
        if let Some(g) = &mut self.giis {
            g.shutdown();
        }
        for m in &mut self.members {
            m.shutdown();
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub report: RunReport,
    /// The row rebuilt from the logs on disk.
    pub row: SummaryRow,
    /// Provider invocations across all member servers, warmup included.
    pub invocations: u64,
    /// Queries the aggregate directory sent to members, warmup included.
    pub outbound: Option<u64>,
    pub logs: Vec<PathBuf>,
}

/// Runs one (scenario, users) point with logs under `dir`.
pub fn run_point(m: &ExperimentMatrix, users: usize, dir: &Path) -> Result<PointResult, ReplicateError> {
    std::fs::create_dir_all(dir)?;
    let (server_log, client_log) = (dir.join("servers.log"), dir.join("client.log"));
    for p in [&server_log, &client_log] {
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    let servers = EventSink::file(&server_log)?;
    let client = EventSink::file(&client_log)?;
    let mut deployment = Deployment::start(m, &servers)?;
    let mut cfg = BenchConfig::new(deployment.target.clone(), QueryTemplate::full_tree(deployment.base.clone()), users, m.duration, m.think);
    cfg.scenario = m.scenario.as_str().into();
    cfg.sample_interval = m.sample_interval;
    cfg.server_logs = vec![LogSource::Sink(servers.clone())];
    let report = run_benchmark(&cfg, client.clone());
    let invocations = deployment.members.iter().map(|g| g.gris.invocations()).sum();
    let outbound = deployment.giis.as_ref().map(|g| g.giis.outbound_queries());
    deployment.shutdown();
    servers.close()?;
    client.close()?;
    let report = report?;
    std::fs::write(dir.join("samples.csv"), report.samples_csv())?;
    let logs = vec![client_log, server_log];
    let analysis = analysis::analyze(&logs)?;
    let row = analysis.runs.last().map(|r| r.row.clone()).ok_or(AnalysisError::NoCompleteLifelines)?;
    Ok(PointResult { report, row, invocations, outbound, logs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.label, self.detail)
    }
}

#[derive(Debug, Default)]
pub struct ReplicateOutcome {
    pub rows: BTreeMap<Scenario, Vec<SummaryRow>>,
    pub findings: Vec<Finding>,
    pub files: Vec<PathBuf>,
}

impl ReplicateOutcome {
    pub fn all_pass(&self) -> bool {
        self.findings.iter().all(|f| f.pass)
    }
}

fn finding(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> Finding {
    Finding { label: label.into(), pass, detail: detail.into() }
}

/// Checks the qualitative relations each scenario is expected to show.
pub fn findings(rows: &BTreeMap<Scenario, Vec<SummaryRow>>, bounds: &[(String, f64, Option<f64>)]) -> Vec<Finding> {
    let mut out = Vec::new();
    for (label, throughput, bound) in bounds {
        if let Some(b) = bound {
            out.push(finding(format!("{label} closed-loop bound"), *throughput <= *b, format!("{throughput:.3} <= {b:.3}")));
        }
    }
    for (s, rs) in rows {
        for r in rs {
            out.push(finding(format!("{s} U={} errors", r.users), r.errors == 0, format!("{} errors", r.errors)));
        }
    }
    if let Some(rs) = rows.get(&Scenario::GrisUncached) {
        for r in rs {
            out.push(finding(format!("gris-uncached U={} rpt/ort >= 0.9", r.users), r.rpt_over_ort >= 0.9, format!("{:.4}", r.rpt_over_ort)));
            let dominant = PhaseName::ALL.into_iter().max_by(|a, b| r.phase(*a).total_cmp(&r.phase(*b))).expect("seven phases");
            out.push(finding(
                format!("gris-uncached U={} dominant phase", r.users),
                dominant == PhaseName::ServerInvoking,
                dominant.as_str(),
            ));
        }
    }
    if let Some(rs) = rows.get(&Scenario::GrisCached) {
        for r in rs {
            let inv = r.phase(PhaseName::ServerInvoking);
            out.push(finding(format!("gris-cached U={} no provider invocation", r.users), inv == 0.0, format!("{inv:.6}")));
            out.push(finding(format!("gris-cached U={} mean RPT <= 50 ms", r.users), r.mean_rpt <= 0.05, format!("{:.6}", r.mean_rpt)));
        }
    }
    if let (Some(c), Some(u)) = (rows.get(&Scenario::GrisCached), rows.get(&Scenario::GrisUncached)) {
        if let Ok(pairs) = analysis::compare(c, u) {
            for p in pairs.iter().filter(|p| p.users >= 10) {
                out.push(finding(
                    format!("U={} cached throughput > uncached", p.users),
                    p.a.throughput > p.b.throughput,
                    format!("{:.3} vs {:.3}", p.a.throughput, p.b.throughput),
                ));
            }
        }
    }
    if let (Some(a), Some(c)) = (rows.get(&Scenario::GiisCached), rows.get(&Scenario::GrisCached)) {
        if let Ok(pairs) = analysis::compare(a, c) {
            for p in pairs {
                let (x, y) = (p.a.phase(PhaseName::ServerSearchIndex), p.b.phase(PhaseName::ServerSearchIndex));
                out.push(finding(
                    format!("U={} aggregate search-index > server search-index", p.users),
                    x > y,
                    format!("{x:.6} vs {y:.6}"),
                ));
            }
        }
    }
    out
}

/// Runs (desk) or plans (full) the given matrices under `out_dir`.
pub fn replicate(matrices: &[ExperimentMatrix], scale: Scale, out_dir: &Path) -> Result<ReplicateOutcome, ReplicateError> {
    for m in matrices {
        m.validate()?;
    }
    std::fs::create_dir_all(out_dir)?;
    let mut outcome = ReplicateOutcome::default();
    if scale == Scale::Full {
        let plan = out_dir.join("plan.txt");
        std::fs::write(&plan, plan_text(matrices))?;
        outcome.files.push(plan);
        return Ok(outcome);
    }
    let mut bounds = Vec::new();
    for m in matrices {
        let sdir = out_dir.join(m.scenario.as_str());
        let mut rows = Vec::new();
        let mut phase_rows = Vec::new();
        for &u in &m.user_counts {
            log::info!("running {} with {u} users for {:?}", m.scenario, m.duration);
            let point = run_point(m, u, &sdir.join(format!("u{u}")))?;
            let r = &point.report;
            bounds.push((format!("{} U={u}", m.scenario), r.throughput(), r.closed_loop_bound()));
            phase_rows.extend(r.summary.phase_rows());
            rows.push(point.row);
        }
        let summary = sdir.join("summary.csv");
        std::fs::write(&summary, analysis::summary_csv(&rows))?;
        let phases = sdir.join("phases.csv");
        std::fs::write(&phases, analysis::phase_csv(&phase_rows))?;
        outcome.files.extend([summary, phases]);
        outcome.files.extend(analysis::emit_plotdata(&rows, &sdir.join("plot"))?);
        outcome.rows.insert(m.scenario, rows);
    }
    outcome.findings = findings(&outcome.rows, &bounds);
    let mut text = String::new();
    for f in &outcome.findings {
        let _ = writeln!(text, "{f}");
    }
    let path = out_dir.join("findings.txt");
    std::fs::write(&path, text)?;
    outcome.files.push(path);
    Ok(outcome)
}

fn gris_config_text(c: &GrisConfig) -> String {
    let mut s = format!("suffix={}\ncache-ttl={}\n", c.suffix, c.cache_ttl);
    for p in &c.providers {
        let _ = writeln!(s, "provider={},{},{},{},{},{}", p.name, p.suffix, p.cost.as_millis(), p.entry_count, p.entry_bytes, p.seed);
    }
    s
}

fn plan_text(matrices: &[ExperimentMatrix]) -> String {
    let mut s = String::from("# Long-run plan. Start the services, then run each bench line in turn.\n");
    for m in matrices {
        let _ = writeln!(s, "\n## {}", m.scenario);
        let members = if m.scenario == Scenario::GiisCached { m.grises } else { 1 };
        if m.scenario == Scenario::GiisCached {
            let _ = writeln!(s, "# giis.conf\nsuffix={VO_SUFFIX}\ncache-ttl={}\nsweep-interval=5\nlisten=0.0.0.0:2136", m.giis_ttl);
            let _ = writeln!(s, "mdslite giis --config giis.conf --log giis.log");
        }
        for i in 0..members {
            let _ = write!(s, "# gris{i}.conf\n{}", gris_config_text(&m.gris_config(i)));
            let port = 2135 + 10 * (i + 1);
            let reg = if m.scenario == Scenario::GiisCached { " --register-to <giis-host>:2136".to_owned() } else { String::new() };
            let _ = writeln!(s, "mdslite gris --config gris{i}.conf --listen 0.0.0.0:{port} --log gris{i}.log{reg}");
        }
        let (target, base) = match m.scenario {
            Scenario::GiisCached => ("<giis-host>:2136".to_owned(), VO_SUFFIX.to_owned()),
            _ => ("<gris-host>:2145".to_owned(), ExperimentMatrix::host(0).to_string()),
        };
        for u in &m.user_counts {
            let _ = writeln!(
                s,
                "mdslite bench --target {target} --base '{base}' --users {u} --duration {} --think-ms {} --sample-interval {} --scenario {} --log bench-{}-u{u}.log --out {}-u{u}.csv",
                m.duration.as_secs_f64(),
                m.think.as_millis(),
                m.sample_interval.as_secs_f64(),
                m.scenario,
                m.scenario,
                m.scenario
            );
        }
    }
    s
}
