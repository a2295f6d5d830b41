//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion. Positional arguments such as
//! `c3 c9` restrict the run to those criteria.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use mdslite::giis::{start_giis, GiisConfig};
use mdslite::gris::{start_gris, uniform_providers, GrisConfig, GrisHandle};
use mdslite::net::{client_query, ClientOptions};
use mdslite::replicate::{run_point, ExperimentMatrix, PointResult, Scale, Scenario};
use mdslite::sink::EventSink;
use mdslite_core::entry::AttrSelection;
use mdslite_core::wire::MessageKind;
use mdslite_core::{
    build_index, decode, encode, eval_filter, parse_log, serialize_log, Credential, Entry, EntryName, Filter, Frame, Level,
    LogEvent, Message, PhaseName, Rdn, Scope, SearchError, SearchRequest, Timestamp, Ttl,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Measurement points, each run at most once and shared between criteria.
struct Points {
    root: tempfile::TempDir,
    done: BTreeMap<String, PointResult>,
}

impl Points {
    fn get(&mut self, key: &str, m: &ExperimentMatrix, users: usize) -> &PointResult {
        if !self.done.contains_key(key) {
            eprintln!("  running {key} ({} users, {:?})", users, m.duration);
            let t = Instant::now();
            let p = run_point(m, users, &self.root.path().join(key)).unwrap_or_else(|e| panic!("{key}: {e}"));
            eprintln!(
                "  {key}: throughput {:.3}/s, {} lifelines, {:.1}s",
                p.row.throughput,
                p.report.summary.lifelines.len(),
                t.elapsed().as_secs_f64()
            );
            self.done.insert(key.to_owned(), p);
        }
        &self.done[key]
    }
}

fn gris_matrix(scenario: Scenario, secs: u64) -> ExperimentMatrix {
    let mut m = ExperimentMatrix::standard(scenario, Scale::Desk);
    m.duration = Duration::from_secs(secs);
    m.think = Duration::from_secs(1);
    m.providers = 10;
    m.provider_cost = Duration::from_millis(50);
    m
}

fn cached(p: &mut Points, users: usize) -> &PointResult {
    p.get(&format!("gris-cached-u{users}"), &gris_matrix(Scenario::GrisCached, 30), users)
}

fn uncached(p: &mut Points, users: usize) -> &PointResult {
    p.get(&format!("gris-uncached-u{users}"), &gris_matrix(Scenario::GrisUncached, 30), users)
}

fn giis_point(p: &mut Points) -> &PointResult {
    let mut m = gris_matrix(Scenario::GiisCached, 30);
    m.grises = 5;
    m.giis_ttl = Ttl::from_secs_f64(600.0);
    p.get("giis-cached-u20", &m, 20)
}

fn c1_decomposition(p: &mut Points) -> Verdict {
    let d = &cached(p, 10).report.summary.decomposition;
    verdict(
        d.checked > 0 && d.rpt_exact == d.checked && d.within_fraction() >= 0.99,
        format!(
            "{} lifelines, RPT exact {}/{}, residual <= 5 ms {:.2}%, max residual {} us",
            d.checked,
            d.rpt_exact,
            d.checked,
            100.0 * d.within_fraction(),
            d.max_residual.0
        ),
    )
}

fn c2_serial_oracle(p: &mut Points) -> Verdict {
    let mut m = gris_matrix(Scenario::GrisUncached, 20);
    m.providers = 1;
    m.provider_cost = Duration::from_millis(100);
    m.think = Duration::ZERO;
    let r = p.get("serial-provider-u10", &m, 10);
    let lifelines = &r.report.summary.lifelines;
    let mut arrivals: Vec<i64> = lifelines.iter().map(|l| l.interval(PhaseName::ServerInvoking).start.0).collect();
    arrivals.sort_unstable();
    let service = 100_000i64;
    let mut depart = i64::MIN;
    let mut oracle_sum = 0i64;
    for a in &arrivals {
        depart = depart.max(*a) + service;
        oracle_sum += depart - a;
    }
    let n = arrivals.len().max(1) as f64;
    let oracle = oracle_sum as f64 / n / 1e6;
    let observed = r.row.phase(PhaseName::ServerInvoking);
    let rel = (observed - oracle).abs() / oracle;
    verdict(!arrivals.is_empty() && rel <= 0.15, format!("observed {observed:.4}s vs oracle {oracle:.4}s ({:.1}% off, n={})", rel * 100.0, arrivals.len()))
}

fn c3_uncached_dominance(p: &mut Points) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for u in [10, 20, 50] {
        let r = &uncached(p, u).row;
        let dominant = PhaseName::ALL.into_iter().max_by(|a, b| r.phase(*a).total_cmp(&r.phase(*b))).unwrap();
        pass &= r.rpt_over_ort >= 0.9 && dominant == PhaseName::ServerInvoking;
        parts.push(format!("U={u} rpt/ort={:.4} dominant={dominant}", r.rpt_over_ort));
    }
    verdict(pass, parts.join("; "))
}

fn c4_cache_advantage(p: &mut Points) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for u in [1, 10, 50] {
        let c = cached(p, u);
        let (ct, rpt, inv_row) = (c.row.throughput, c.row.mean_rpt, c.row.phase(PhaseName::ServerInvoking));
        let zero_invoking = inv_row == 0.0
            && c.invocations == 10
            && c.report.summary.lifelines.iter().all(|l| l.duration(PhaseName::ServerInvoking).0 == 0);
        let ut = uncached(p, u).row.throughput;
        let faster = u < 10 || ct > ut;
        pass &= faster && rpt <= 0.05 && zero_invoking;
        parts.push(format!("U={u} cached {ct:.2}/s vs {ut:.2}/s, RPT {:.2} ms, invoking zero={zero_invoking}", rpt * 1e3));
    }
    verdict(pass, parts.join("; "))
}

fn c5_closed_loop(p: &mut Points) -> Verdict {
    let one = p.get("gris-cached-u1-60s", &gris_matrix(Scenario::GrisCached, 60), 1).row.throughput;
    let mut violations = Vec::new();
    for (k, r) in &p.done {
        let (t, bound) = (r.report.throughput(), r.report.closed_loop_bound());
        if bound.is_some_and(|b| t > b) {
            violations.push(format!("{k}: {t:.3} > {:.3}", bound.unwrap()));
        }
    }
    verdict(
        (0.9..=1.0).contains(&one) && violations.is_empty(),
        format!("U=1 over 60 s: {one:.4}/s; bound held on {} of {} runs {violations:?}", p.done.len() - violations.len(), p.done.len()),
    )
}

fn c6_soft_state() -> Verdict {
    let sink = EventSink::memory();
    let vo = EntryName::parse("mds-vo-name=local").unwrap();
    let giis = start_giis(&GiisConfig::new(vo.clone(), Ttl::from_secs_f64(600.0), Duration::from_secs(2)), sink.clone()).unwrap();
    let mut members: Vec<GrisHandle> = (0..5)
        .map(|i| {
            let sfx = EntryName::parse(&format!("mds-host-name=soft{i}, mds-vo-name=local")).unwrap();
            let mut cfg = GrisConfig::new(sfx.clone(), Ttl::Infinite, uniform_providers(&sfx, 10, Duration::ZERO, 4, 220, i));
            cfg.register_to = Some(giis.endpoint());
            cfg.register_ttl = 10.0;
            start_gris(&cfg, sink.clone()).unwrap()
        })
        .collect();
    let cred = Credential::new("tester", "mdslite").unwrap();
    let q = |qid: &str| client_query(&giis.endpoint(), &cred, &SearchRequest::full_tree(vo.clone(), qid), None, &ClientOptions::default());
    let per_member = members[0].gris.entry_count();
    let before = q("soft-0").map(|o| o.entries.len()).unwrap_or(0);

    // let a renewal or two happen so the kill lands at an arbitrary point
    std::thread::sleep(Duration::from_millis(4_500));
    let killed = members.split_off(3);
    let t_kill = Instant::now();
    for mut k in killed {
        k.shutdown();
    }
    let mut failures = 0;
    let mut seq = 1;
    let swept_after = loop {
        if giis.giis.registrations().len() == 3 {
            break Some(t_kill.elapsed());
        }
        if t_kill.elapsed() > Duration::from_secs(20) {
            break None;
        }
        if q(&format!("soft-{seq}")).is_err() {
            failures += 1;
        }
        seq += 1;
        std::thread::sleep(Duration::from_millis(250));
    };
    let after = q("soft-final");
    let after_count = after.as_ref().map(|o| o.entries.len()).unwrap_or(0);
    let survivors: usize = members.iter().map(|m| m.gris.entry_count()).sum();
    let in_time = swept_after.is_some_and(|d| d <= Duration::from_secs(12));
    verdict(
        before == 5 * per_member && in_time && failures == 0 && after.is_ok() && after_count == survivors,
        format!(
            "before {before} entries; swept after {:?}; {failures} failed queries meanwhile; after {after_count} (survivors hold {survivors})",
            swept_after.map(|d| format!("{:.2}s", d.as_secs_f64()))
        ),
    )
}

fn c7_giis_cache(p: &mut Points) -> Verdict {
    let gris_bytes = cached(p, 20).report.mean_response_bytes;
    let g = giis_point(p);
    let outbound = g.outbound.unwrap_or(u64::MAX);
    let ratio = g.report.mean_response_bytes / gris_bytes;
    verdict(
        outbound <= 5 && (4.0..=6.0).contains(&ratio) && g.report.errors.is_empty(),
        format!(
            "outbound {outbound}; response {:.0} B vs single server {:.0} B (x{ratio:.2}); {} queries",
            g.report.mean_response_bytes, gris_bytes, g.report.succeeded
        ),
    )
}

fn c8_index_size(p: &mut Points) -> Verdict {
    let gris = cached(p, 20).row.phase(PhaseName::ServerSearchIndex);
    let giis = giis_point(p).row.phase(PhaseName::ServerSearchIndex);
    verdict(giis > gris, format!("U=20 search-index mean: aggregate {:.1} us vs server {:.1} us", giis * 1e6, gris * 1e6))
}

fn random_directory(rng: &mut ChaCha8Rng) -> (EntryName, Vec<Entry>) {
    let suffix = EntryName::parse("mds-vo-name=local").unwrap();
    let n = rng.gen_range(0..=1000);
    let mut names: Vec<EntryName> = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let parent = if names.is_empty() || rng.gen_bool(0.2) { suffix.clone() } else { names.choose(rng).unwrap().clone() };
        let name = parent.child(Rdn::new(["n", "mds-host-name", "dev"][i % 3], format!("e{i}")).unwrap());
        let mut b = Entry::builder(name.clone(), Timestamp(i as i64))
            .attr("objectclass", ["MdsHost", "MdsDevice", "MdsCpu"][rng.gen_range(0..3)])
            .attr("cpu", rng.gen_range(0..8).to_string());
        if rng.gen_bool(0.5) {
            b = b.attr("free", ["yes", "no"][rng.gen_range(0..2)]);
        }
        if rng.gen_bool(0.3) {
            b = b.attr("cpu", rng.gen_range(0..8).to_string());
        }
        entries.push(b.build().unwrap());
        names.push(name);
    }
    (suffix, entries)
}

fn random_filter(rng: &mut ChaCha8Rng, depth: u32) -> Filter {
    let attrs = ["objectclass", "cpu", "free", "missing"];
    match rng.gen_range(0..if depth == 0 { 2 } else { 4 }) {
        0 => Filter::presence(*attrs.choose(rng).unwrap()),
        1 => {
            let a = *attrs.choose(rng).unwrap();
            let v = match a {
                "objectclass" => ["MdsHost", "MdsDevice", "MdsCpu"].choose(rng).unwrap().to_string(),
                "free" => ["yes", "no"].choose(rng).unwrap().to_string(),
                _ => rng.gen_range(0..8).to_string(),
            };
            Filter::equality(a, v)
        }
        k => {
            let parts = (0..rng.gen_range(1..4)).map(|_| random_filter(rng, depth - 1)).collect();
            if k == 2 { Filter::And(parts) } else { Filter::Or(parts) }
        }
    }
}

fn brute_force(entries: &[Entry], req: &SearchRequest) -> Vec<Entry> {
    let mut out: Vec<(String, Entry)> = entries
        .iter()
        .filter(|e| e.name().in_scope(&req.base, req.scope))
        .filter(|e| eval_filter(e, &req.filter))
        .map(|e| (e.name().to_string(), e.project(&req.attrs)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, e)| e).collect()
}

fn c9_search_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut queries, mut mismatches, mut largest) = (0, 0, 0);
    for _ in 0..200 {
        let (suffix, entries) = random_directory(&mut rng);
        largest = largest.max(entries.len());
        let index = build_index(entries.clone(), suffix.clone()).unwrap();
        for _ in 0..25 {
            let base = match rng.gen_range(0..5) {
                0 => suffix.clone(),
                1 => suffix.child(Rdn::new("n", "absent").unwrap()),
                _ if !entries.is_empty() => entries.choose(&mut rng).unwrap().name().clone(),
                _ => suffix.clone(),
            };
            let scope = *[Scope::Base, Scope::OneLevel, Scope::Subtree].choose(&mut rng).unwrap();
            let attrs = if rng.gen_bool(0.7) { AttrSelection::All } else { AttrSelection::parse("cpu") };
            let req = SearchRequest { base, scope, filter: random_filter(&mut rng, 3), attrs, qid: "q".into() };
            queries += 1;
            let ok = match index.search(&req) {
                Ok(found) => found == brute_force(&entries, &req),
                Err(SearchError::NoSuchBase(_)) => scope != Scope::Subtree && !entries.iter().any(|e| e.name() == &req.base),
                Err(_) => false,
            };
            mismatches += !ok as usize;
        }
    }
    verdict(mismatches == 0, format!("200 directories (largest {largest} entries), {queries} searches, {mismatches} mismatches"))
}

fn printable(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen_range(0x20u8..0x7f) as char).collect()
}

fn token(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| rng.gen_range(0x21u8..0x7f) as char).collect()
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let kinds = [
        MessageKind::Bind,
        MessageKind::BindOk,
        MessageKind::BindErr,
        MessageKind::Search,
        MessageKind::Result,
        MessageKind::Register,
        MessageKind::RegisterOk,
        MessageKind::Error,
        MessageKind::Unbind,
        MessageKind::Unknown("X-PROBE".into()),
    ];
    let headers = (0..rng.gen_range(0..6))
        .map(|_| {
            let n = rng.gen_range(1..10);
            let key: String = (0..n).map(|_| *b"abcdefghijklmnopqrstuvwxyz-".choose(rng).unwrap() as char).collect();
            (format!("k{key}"), printable(rng, 24))
        })
        .collect();
    let mut body = String::new();
    for _ in 0..rng.gen_range(0..8) {
        body.push_str(&printable(rng, 40));
        body.push_str(["\n", "é", "漢", "", "\n\n"].choose(rng).unwrap());
    }
    Message { kind: kinds.choose(rng).unwrap().clone(), headers, body }
}

fn random_event(rng: &mut ChaCha8Rng) -> LogEvent {
    let evnt = if rng.gen_bool(0.7) {
        format!("{}.{}", PhaseName::ALL[rng.gen_range(0..7)], ["start", "end"].choose(rng).unwrap())
    } else {
        token(rng, 16)
    };
    LogEvent {
        ts: Timestamp(rng.gen_range(0..4_102_444_800_000_000)),
        host: token(rng, 12),
        prog: token(rng, 8),
        lvl: if rng.gen_bool(0.5) { Level::Info } else { Level::Error },
        evnt,
        qid: token(rng, 12),
        extra: (0..rng.gen_range(0..3))
            .map(|_| {
                let key: String = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
                let val = if rng.gen_bool(0.1) { String::new() } else { token(rng, 10) };
                (key, val)
            })
            .collect(),
    }
}

fn analyze_twice(logs: &[std::path::PathBuf], out: &Path) -> Result<bool, String> {
    let mut outputs = Vec::new();
    for i in 0..2 {
        let dir = out.join(format!("analysis-{i}"));
        let res = std::process::Command::new(env!("CARGO_BIN_EXE_mdslite"))
            .arg("analyze")
            .args(logs)
            .arg("--out-dir")
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !res.status.success() {
            return Err(String::from_utf8_lossy(&res.stderr).into_owned());
        }
        let read = |f: &str| std::fs::read(dir.join(f)).map_err(|e| e.to_string());
        outputs.push((read("summary.csv")?, read("phases.csv")?));
    }
    Ok(outputs[0] == outputs[1] && !outputs[0].0.is_empty())
}

fn c10_round_trips(p: &mut Points) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut wire_bad = 0;
    for _ in 0..10_000 {
        let m = random_message(&mut rng);
        let ok = encode(&m).ok().is_some_and(|f| {
            let again = decode(&f).ok();
            again.as_ref() == Some(&m)
                && encode(again.as_ref().unwrap()).ok().as_ref() == Some(&f)
                && Frame::from_bytes(f.as_bytes().to_vec()).ok().as_ref() == Some(&f)
        });
        wire_bad += !ok as usize;
    }
    let events: Vec<LogEvent> = (0..10_000).map(|_| random_event(&mut rng)).collect();
    let text = serialize_log(&events);
    let parsed = parse_log(&text);
    let logs_ok = parsed.diagnostics.is_empty() && parsed.events == events && serialize_log(&parsed.events) == text;

    let c1 = cached(p, 10);
    let logs = c1.logs.clone();
    let det = analyze_twice(&logs, p.root.path());
    verdict(
        wire_bad == 0 && logs_ok && det == Ok(true),
        format!("10000 messages ({wire_bad} failed), 10000 log lines (exact={logs_ok}), analyze deterministic: {det:?}"),
    )
}

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.to_lowercase()).collect();
    let known = ["c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9", "c10"];
    let selected: Vec<&str> = if wanted.is_empty() {
        known.to_vec()
    } else {
        known.iter().copied().filter(|k| wanted.iter().any(|w| w == k)).collect()
    };
    if selected.is_empty() {
        return;
    }
    let mut points = Points { root: tempfile::tempdir().expect("temp dir"), done: BTreeMap::new() };
    let names = [
        "decomposition",
        "serialized-provider oracle",
        "uncached dominance",
        "cache advantage",
        "closed-loop bound",
        "soft-state cleanup",
        "aggregate cache efficiency",
        "index-size search cost",
        "brute-force search equivalence",
        "format round-trips",
    ];
    // closed-loop bound last: it checks every run made before it
    let order = ["c9", "c10", "c1", "c2", "c3", "c4", "c6", "c7", "c8", "c5"];
    let mut results: BTreeMap<usize, Verdict> = BTreeMap::new();
    for id in order.iter().filter(|k| selected.contains(k)) {
        let n: usize = id[1..].parse().unwrap();
        eprintln!("C{n} {}", names[n - 1]);
        let t = Instant::now();
        let v = match n {
            1 => c1_decomposition(&mut points),
            2 => c2_serial_oracle(&mut points),
            3 => c3_uncached_dominance(&mut points),
            4 => c4_cache_advantage(&mut points),
            5 => c5_closed_loop(&mut points),
            6 => c6_soft_state(),
            7 => c7_giis_cache(&mut points),
            8 => c8_index_size(&mut points),
            9 => c9_search_equivalence(),
            _ => c10_round_trips(&mut points),
        };
        eprintln!("  {} in {:.1}s: {}", if v.pass { "pass" } else { "FAIL" }, t.elapsed().as_secs_f64(), v.detail);
        results.insert(n, v);
    }
    println!();
    for (n, v) in &results {
        println!("{} C{n} {}: {}", if v.pass { "PASS" } else { "FAIL" }, names[n - 1], v.detail);
    }
    if results.values().any(|v| !v.pass) {
        std::process::exit(1);
    }
}
