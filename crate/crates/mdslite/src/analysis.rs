//! Turning event logs into per-run summaries, and the CSV and plot-data
//! files built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use mdslite_core::lifeline::Quarantined;
use mdslite_core::{check_decomposition, correlate, parse_log, phase_stats, Edge, LogEvent, Micros, PhaseLifeline, PhaseName, PhaseStats, Timestamp};
use thiserror::Error;

pub const RUN_START: &str = "bench.run.start";
pub const RUN_END: &str = "bench.run.end";
pub const QUERY_ERROR: &str = "bench.query.error";
pub const CLIENT_PROG: &str = "bench";
/// Residual bound used for the decomposition check.
pub const RESIDUAL_EPSILON: Micros = Micros(5_000);

pub const SUMMARY_HEADER: [&str; 15] = [
    "scenario",
    "users",
    "throughput",
    "mean_ort",
    "mean_rpt",
    "t_client_connect",
    "t_client_bind",
    "t_server_initsearch",
    "t_server_searchindex",
    "t_server_invoking",
    "t_server_genresult",
    "t_client_endconnect",
    "rpt_over_ort",
    "connect_fraction",
    "errors",
];

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no complete lifelines in the input")]
    NoCompleteLifelines,
    #[error("user grids differ: {0:?} vs {1:?}")]
    GridMismatch(Vec<usize>, Vec<usize>),
    #[error("duplicate row for {0} users")]
    DuplicateUsers(usize),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    BadRow(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io { path: path.display().to_string(), source }
}

/// One row per (scenario, users) run. Times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub users: usize,
    pub throughput: f64,
    pub mean_ort: f64,
    pub mean_rpt: f64,
    /// Mean duration per phase, indexed by [`PhaseName::index`].
    pub phases: [f64; 7],
    pub rpt_over_ort: f64,
    pub connect_fraction: f64,
    pub errors: u64,
}

impl SummaryRow {
    pub fn phase(&self, p: PhaseName) -> f64 {
        self.phases[p.index()]
    }

    fn record(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.6}");
        let mut out = vec![self.scenario.clone(), self.users.to_string(), f(self.throughput), f(self.mean_ort), f(self.mean_rpt)];
        out.extend(self.phases.iter().map(|v| f(*v)));
        out.extend([f(self.rpt_over_ort), f(self.connect_fraction), self.errors.to_string()]);
        out
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self, AnalysisError> {
        if r.len() != SUMMARY_HEADER.len() {
            return Err(AnalysisError::BadRow(format!("expected {} fields, got {}", SUMMARY_HEADER.len(), r.len())));
        }
        let num = |i: usize| -> Result<f64, AnalysisError> {
            r[i].parse().map_err(|_| AnalysisError::BadRow(format!("{}: {:?}", SUMMARY_HEADER[i], &r[i])))
        };
        let int = |i: usize| -> Result<u64, AnalysisError> {
            r[i].parse().map_err(|_| AnalysisError::BadRow(format!("{}: {:?}", SUMMARY_HEADER[i], &r[i])))
        };
        Ok(Self {
            scenario: r[0].to_owned(),
            users: int(1)? as usize,
            throughput: num(2)?,
            mean_ort: num(3)?,
            mean_rpt: num(4)?,
            phases: [num(5)?, num(6)?, num(7)?, num(8)?, num(9)?, num(10)?, num(11)?],
            rpt_over_ort: num(12)?,
            connect_fraction: num(13)?,
            errors: int(14)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub scenario: String,
    pub users: usize,
    pub phase: PhaseName,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

/// Parameters of one benchmark run as recorded by its start marker.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub run_id: String,
    pub scenario: String,
    pub users: usize,
    pub duration_secs: f64,
    pub think_secs: f64,
    pub warmup_secs: f64,
    pub start: Timestamp,
    pub end: Option<Timestamp>,
}

impl RunMeta {
    pub fn start_extras(&self) -> Vec<(&'static str, String)> {
        vec![
            ("scenario", self.scenario.clone()),
            ("users", self.users.to_string()),
            ("duration", format!("{}", self.duration_secs)),
            ("think", format!("{}", self.think_secs)),
            ("warmup", format!("{}", self.warmup_secs)),
        ]
    }

    fn from_marker(e: &LogEvent) -> Option<Self> {
        let num = |k: &str| e.extra(k).and_then(|v| v.parse::<f64>().ok());
        Some(Self {
            run_id: e.qid.clone(),
            scenario: e.extra("scenario")?.to_owned(),
            users: e.extra("users")?.parse().ok()?,
            duration_secs: num("duration")?,
            think_secs: num("think").unwrap_or(0.0),
            warmup_secs: num("warmup").unwrap_or(0.0),
            start: e.ts,
            end: None,
        })
    }

    fn window_start(&self) -> Timestamp {
        self.start + Micros::from_secs_f64(self.warmup_secs)
    }

    fn deadline(&self) -> Timestamp {
        self.start + Micros::from_secs_f64(self.duration_secs)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecompositionSummary {
    pub checked: usize,
    pub within_epsilon: usize,
    /// Lifelines whose RPT equals the sum of the four server phases.
    pub rpt_exact: usize,
    pub max_residual: Micros,
}

impl DecompositionSummary {
    pub fn within_fraction(&self) -> f64 {
        if self.checked == 0 {
            return 0.0;
        }
        self.within_epsilon as f64 / self.checked as f64
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub meta: RunMeta,
    pub row: SummaryRow,
    pub stats: Option<PhaseStats>,
    pub lifelines: Vec<PhaseLifeline>,
    pub quarantined: Vec<Quarantined>,
    /// Successful queries finished inside the measured window.
    pub completed: u64,
    pub decomposition: DecompositionSummary,
}

impl RunSummary {
    pub fn phase_rows(&self) -> Vec<PhaseRow> {
        let Some(s) = &self.stats else { return Vec::new() };
        PhaseName::ALL
            .into_iter()
            .map(|p| PhaseRow {
                scenario: self.meta.scenario.clone(),
                users: self.meta.users,
                phase: p,
                mean: s.phase(p).mean,
                median: s.phase(p).median,
                p95: s.phase(p).p95,
            })
            .collect()
    }
}

/// Summarizes one run from the merged events of the client and servers.
/// Only events inside the run's time span are considered; the run's
/// queries are those whose Client-Connect.start came from the load client.
pub fn summarize_run(meta: &RunMeta, events: &[LogEvent]) -> RunSummary {
    let end = meta.end.unwrap_or(Timestamp(i64::MAX));
    let in_span: Vec<&LogEvent> = events.iter().filter(|e| e.ts >= meta.start && e.ts <= end).collect();
    let qids: BTreeSet<&str> = in_span
        .iter()
        .filter(|e| e.prog == CLIENT_PROG && e.phase() == Some((PhaseName::ClientConnect, Edge::Start)))
        .map(|e| e.qid.as_str())
        .collect();
    let mine: Vec<LogEvent> = in_span.iter().filter(|e| qids.contains(e.qid.as_str())).map(|e| (*e).clone()).collect();
    let corr = correlate(&mine);
    let (from, deadline) = (meta.window_start(), meta.deadline());
    let lifelines: Vec<PhaseLifeline> = corr.complete.into_iter().filter(|l| l.start() >= from).collect();
    let completed = mine
        .iter()
        .filter(|e| e.prog == CLIENT_PROG && e.phase() == Some((PhaseName::ClientEndConnect, Edge::End)))
        .filter(|e| e.ts > from && e.ts <= deadline)
        .count() as u64;
    let errors = in_span.iter().filter(|e| e.evnt == QUERY_ERROR).count() as u64;
    let window = (meta.duration_secs - meta.warmup_secs).max(f64::MIN_POSITIVE);

    let mut decomposition = DecompositionSummary::default();
    for l in &lifelines {
        let d = check_decomposition(l, RESIDUAL_EPSILON);
        decomposition.checked += 1;
        decomposition.within_epsilon += d.pass as usize;
        let server: i64 = PhaseName::SERVER.iter().map(|p| l.duration(*p).0).sum();
        decomposition.rpt_exact += (server == l.rpt().0) as usize;
        decomposition.max_residual = decomposition.max_residual.max(Micros(d.residual.0.abs()));
    }

    let stats = phase_stats(&lifelines).ok();
    let nan = f64::NAN;
    let row = SummaryRow {
        scenario: meta.scenario.clone(),
        users: meta.users,
        throughput: completed as f64 / window,
        mean_ort: stats.as_ref().map_or(nan, |s| s.ort.mean),
        mean_rpt: stats.as_ref().map_or(nan, |s| s.rpt.mean),
        phases: std::array::from_fn(|i| stats.as_ref().map_or(nan, |s| s.phases[i].mean)),
        rpt_over_ort: stats.as_ref().map_or(nan, |s| s.rpt_over_ort),
        connect_fraction: stats.as_ref().map_or(nan, |s| s.connect_fraction),
        errors,
    };
    RunSummary { meta: meta.clone(), row, stats, lifelines, quarantined: corr.quarantined, completed, decomposition }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub runs: Vec<RunSummary>,
    /// Lines that failed to parse.
    pub diagnostics: usize,
}

impl Analysis {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }

    pub fn phase_rows(&self) -> Vec<PhaseRow> {
        self.runs.iter().flat_map(RunSummary::phase_rows).collect()
    }
}

/// Reads and merges the given logs and summarizes every benchmark run found
/// in them. Logs without run markers are treated as one ad hoc run.
pub fn analyze(paths: &[PathBuf]) -> Result<Analysis, AnalysisError> {
    let mut events = Vec::new();
    let mut diagnostics = 0;
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(io_err(p))?;
        let parsed = parse_log(&text);
        for d in &parsed.diagnostics {
            log::warn!("{}:{}: {}", p.display(), d.line, d.error);
        }
        diagnostics += parsed.diagnostics.len();
        events.extend(parsed.events);
    }
    analyze_events(events, diagnostics)
}

pub fn analyze_events(mut events: Vec<LogEvent>, diagnostics: usize) -> Result<Analysis, AnalysisError> {
    events.sort_by_key(|e| e.ts);
    let mut metas: Vec<RunMeta> = Vec::new();
    for e in &events {
        if e.evnt == RUN_START {
            if let Some(m) = RunMeta::from_marker(e) {
                metas.push(m);
            }
        } else if e.evnt == RUN_END {
            if let Some(m) = metas.iter_mut().rev().find(|m| m.run_id == e.qid && m.end.is_none()) {
                m.end = Some(e.ts);
            }
        }
    }
    if metas.is_empty() {
        metas.push(adhoc_meta(&events).ok_or(AnalysisError::NoCompleteLifelines)?);
    }
    let runs: Vec<RunSummary> = metas.iter().map(|m| summarize_run(m, &events)).collect();
    if runs.iter().all(|r| r.lifelines.is_empty()) {
        return Err(AnalysisError::NoCompleteLifelines);
    }
    Ok(Analysis { runs, diagnostics })
}

fn adhoc_meta(events: &[LogEvent]) -> Option<RunMeta> {
    let (first, last) = (events.first()?.ts, events.last()?.ts);
    let workers: BTreeSet<&str> = events
        .iter()
        .filter(|e| e.prog == CLIENT_PROG)
        .filter_map(|e| e.qid.strip_prefix("q-").and_then(|r| r.split('-').next()))
        .collect();
    Some(RunMeta {
        run_id: "adhoc".into(),
        scenario: "adhoc".into(),
        users: workers.len().max(1),
        duration_secs: (last - first).as_secs_f64(),
        think_secs: 0.0,
        warmup_secs: 0.0,
        start: first,
        end: Some(last),
    })
}

pub fn write_summary_csv(rows: &[SummaryRow], out: impl io::Write) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|e| AnalysisError::Io { path: "output".into(), source: e })?;
    Ok(())
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut buf = Vec::new();
    write_summary_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_summary_csv(&text)
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, AnalysisError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(AnalysisError::BadRow(format!("unexpected header {header:?}")));
    }
    r.records().map(|rec| SummaryRow::from_record(&rec?)).collect()
}

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "users", "phase", "mean", "median", "p95"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.users.to_string(),
            r.phase.as_str().to_owned(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.median),
            format!("{:.6}", r.p95),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub users: usize,
    pub a: SummaryRow,
    pub b: SummaryRow,
}

impl ComparisonRow {
    pub fn throughput_ratio(&self) -> f64 {
        self.a.throughput / self.b.throughput
    }

    pub fn a_throughput_ge_b(&self) -> bool {
        self.a.throughput >= self.b.throughput
    }
}

fn by_users(rows: &[SummaryRow]) -> Result<BTreeMap<usize, &SummaryRow>, AnalysisError> {
    let mut m = BTreeMap::new();
    for r in rows {
        if m.insert(r.users, r).is_some() {
            return Err(AnalysisError::DuplicateUsers(r.users));
        }
    }
    Ok(m)
}

/// Pairs two scenarios' rows by user count. The user grids must match.
pub fn compare(a: &[SummaryRow], b: &[SummaryRow]) -> Result<Vec<ComparisonRow>, AnalysisError> {
    let (ma, mb) = (by_users(a)?, by_users(b)?);
    if !ma.keys().eq(mb.keys()) {
        return Err(AnalysisError::GridMismatch(ma.keys().copied().collect(), mb.keys().copied().collect()));
    }
    Ok(ma.iter().map(|(u, ra)| ComparisonRow { users: *u, a: (*ra).clone(), b: mb[u].clone() }).collect())
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "users,throughput_a,throughput_b,throughput_delta,throughput_ratio,\
         mean_ort_a,mean_ort_b,mean_ort_delta,mean_ort_ratio,\
         mean_rpt_a,mean_rpt_b,mean_rpt_delta,mean_rpt_ratio,a_throughput_ge_b\n",
    );
    for r in rows {
        let _ = write!(out, "{}", r.users);
        for (x, y) in [(r.a.throughput, r.b.throughput), (r.a.mean_ort, r.b.mean_ort), (r.a.mean_rpt, r.b.mean_rpt)] {
            let _ = write!(out, ",{x:.6},{y:.6},{:.6},{:.6}", x - y, x / y);
        }
        let _ = writeln!(out, ",{}", r.a_throughput_ge_b());
    }
    out
}

/// Writes gnuplot data files and script stubs, one set per scenario.
/// Returns the written paths in a fixed order.
pub fn emit_plotdata(rows: &[SummaryRow], dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut scenarios: BTreeMap<&str, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        scenarios.entry(&r.scenario).or_default().push(r);
    }
    let mut written = Vec::new();
    for (scenario, mut rs) in scenarios {
        rs.sort_by_key(|r| r.users);
        let mut put = |name: String, body: String| -> Result<(), AnalysisError> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(io_err(&p))?;
            written.push(p);
            Ok(())
        };

        let mut tp = String::from("# users throughput\n");
        let mut times = String::from("# users mean_ort mean_rpt\n");
        let mut phases = String::from("# users");
        for p in PhaseName::ALL {
            let _ = write!(phases, " {}", p.column());
        }
        phases.push('\n');
        for r in &rs {
            let _ = writeln!(tp, "{} {:.6}", r.users, r.throughput);
            let _ = writeln!(times, "{} {:.6} {:.6}", r.users, r.mean_ort, r.mean_rpt);
            let _ = write!(phases, "{}", r.users);
            for v in r.phases {
                let _ = write!(phases, " {v:.6}");
            }
            phases.push('\n');
        }
        put(format!("{scenario}_throughput.dat"), tp)?;
        put(format!("{scenario}_response.dat"), times)?;
        put(format!("{scenario}_phases.dat"), phases)?;

        put(
            format!("{scenario}_throughput.gp"),
            format!(
                "set xlabel 'concurrent users'\nset ylabel 'queries/s'\n\
                 plot '{scenario}_throughput.dat' using 1:2 with linespoints title '{scenario}'\n"
            ),
        )?;
        put(
            format!("{scenario}_response.gp"),
            format!(
                "set xlabel 'concurrent users'\nset ylabel 'seconds'\n\
                 plot '{scenario}_response.dat' using 1:2 with linespoints title 'ORT', \\\n\
                 \x20    '' using 1:3 with linespoints title 'RPT'\n"
            ),
        )?;
        let mut gp = String::from("set xlabel 'concurrent users'\nset ylabel 'seconds'\nset key outside\n");
        for (i, p) in PhaseName::ALL.into_iter().enumerate() {
            let lead = if i == 0 { format!("plot '{scenario}_phases.dat'") } else { "     ''".to_owned() };
            let tail = if i + 1 < PhaseName::ALL.len() { ", \\" } else { "" };
            let _ = writeln!(gp, "{lead} using 1:{} with linespoints title '{}'{tail}", i + 2, p.as_str());
        }
        put(format!("{scenario}_phases.gp"), gp)?;
    }
    Ok(written)
}

/// Human-readable summary of one run.
pub fn describe_run(r: &RunSummary) -> String {
    let mut s = format!(
        "{} users={} throughput={:.3}/s completed={} errors={} lifelines={} quarantined={}\n",
        r.meta.scenario,
        r.meta.users,
        r.row.throughput,
        r.completed,
        r.row.errors,
        r.lifelines.len(),
        r.quarantined.len()
    );
    if let Some(st) = &r.stats {
        let _ = writeln!(
            s,
            "  ORT mean={:.6} p95={:.6}  RPT mean={:.6}  rpt/ort={:.3}  dominant={}",
            st.ort.mean,
            st.ort.p95,
            st.rpt.mean,
            st.rpt_over_ort,
            st.dominant_phase()
        );
        for p in PhaseName::ALL {
            let v = st.phase(p);
            let _ = writeln!(s, "  {:<20} mean={:.6} median={:.6} p95={:.6}", p.as_str(), v.mean, v.median, v.p95);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdslite_core::phase::marker_name;
    use mdslite_core::Level;

    fn ev(ts: i64, prog: &str, evnt: &str, qid: &str) -> LogEvent {
        LogEvent {
            ts: Timestamp(ts),
            host: "h".into(),
            prog: prog.into(),
            lvl: Level::Info,
            evnt: evnt.into(),
            qid: qid.into(),
            extra: vec![],
        }
    }

    fn lifeline(qid: &str, t0: i64, d: i64) -> Vec<LogEvent> {
        let mut out = Vec::new();
        let mut t = t0;
        for p in PhaseName::ALL {
            let prog = if p.is_server() { "gris" } else { CLIENT_PROG };
            out.push(ev(t, prog, &marker_name(p, Edge::Start), qid));
            t += d;
            out.push(ev(t, prog, &marker_name(p, Edge::End), qid));
        }
        out
    }

    fn run_events() -> Vec<LogEvent> {
        let mut start = ev(0, CLIENT_PROG, RUN_START, "run-1");
        start.extra = vec![
            ("scenario".into(), "gris-cached".into()),
            ("users".into(), "2".into()),
            ("duration".into(), "1".into()),
        ];
        let mut out = vec![start];
        out.extend(lifeline("q-0-0", 10, 1_000));
        out.extend(lifeline("q-1-0", 20, 3_000));
        // finishes after the deadline: counted as a lifeline, not in throughput
        out.extend(lifeline("q-0-1", 990_000, 10_000));
        out.push(ev(1_100_000, CLIENT_PROG, QUERY_ERROR, "q-1-1"));
        out.push(ev(1_200_000, CLIENT_PROG, RUN_END, "run-1"));
        out
    }

    #[test]
    fn summarizes_a_run() {
        let a = analyze_events(run_events(), 0).unwrap();
        let r = &a.runs[0];
        assert_eq!(r.lifelines.len(), 3);
        assert_eq!(r.completed, 2);
        assert_eq!(r.row.throughput, 2.0);
        assert_eq!(r.row.errors, 1);
        assert_eq!(r.decomposition.rpt_exact, 3);
        assert_eq!(r.decomposition.within_epsilon, 3);
        assert!((r.row.phase(PhaseName::ClientBind) - (1e-3 + 3e-3 + 10e-3) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let rows = analyze_events(run_events(), 0).unwrap().rows();
        let text = summary_csv(&rows);
        assert!(text.starts_with("scenario,users,throughput,mean_ort,mean_rpt,t_client_connect,t_client_bind,t_server_initsearch,t_server_searchindex,t_server_invoking,t_server_genresult,t_client_endconnect,rpt_over_ort,connect_fraction,errors\n"));
        let back = parse_summary_csv(&text).unwrap();
        assert_eq!(summary_csv(&back), text);
        assert!(parse_summary_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn no_lifelines() {
        assert!(matches!(analyze_events(vec![], 0), Err(AnalysisError::NoCompleteLifelines)));
        let only_client = vec![ev(0, CLIENT_PROG, "Client-Connect.start", "q-0-0")];
        assert!(matches!(analyze_events(only_client, 0), Err(AnalysisError::NoCompleteLifelines)));
    }

    #[test]
    fn compare_requires_equal_grids() {
        let row = |u: usize, t: f64| SummaryRow {
            scenario: "s".into(),
            users: u,
            throughput: t,
            mean_ort: 1.0,
            mean_rpt: 0.5,
            phases: [0.0; 7],
            rpt_over_ort: 0.5,
            connect_fraction: 0.1,
            errors: 0,
        };
        let a = vec![row(1, 2.0), row(10, 4.0)];
        let b = vec![row(10, 2.0), row(1, 1.0)];
        let c = compare(&a, &b).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(ComparisonRow::a_throughput_ge_b));
        assert!(comparison_csv(&c).lines().nth(1).unwrap().starts_with("1,2.000000,1.000000,1.000000,2.000000"));
        assert!(matches!(compare(&a, &[row(1, 1.0)]), Err(AnalysisError::GridMismatch(..))));
    }

    #[test]
    fn plotdata_shape() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<SummaryRow> = [1, 5, 10, 20, 50]
            .into_iter()
            .map(|u| SummaryRow {
                scenario: "gris-cached".into(),
                users: u,
                throughput: u as f64,
                mean_ort: 0.1,
                mean_rpt: 0.01,
                phases: [0.001; 7],
                rpt_over_ort: 0.1,
                connect_fraction: 0.2,
                errors: 0,
            })
            .collect();
        let files = emit_plotdata(&rows, dir.path()).unwrap();
        assert_eq!(files.len(), 6);
        let tp = std::fs::read_to_string(dir.path().join("gris-cached_throughput.dat")).unwrap();
        assert_eq!(tp.lines().filter(|l| !l.starts_with('#')).count(), 5);
        let ph = std::fs::read_to_string(dir.path().join("gris-cached_phases.dat")).unwrap();
        assert!(ph.lines().skip(1).all(|l| l.split(' ').count() == 8));
        let before: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        emit_plotdata(&rows, dir.path()).unwrap();
        let after: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        assert_eq!(before, after);
    }
}
