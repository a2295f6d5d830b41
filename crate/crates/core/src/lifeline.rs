//! Per-query lifelines assembled from start/end phase events.
//!
//! A complete lifeline has all seven phases. ORT runs from the start of
//! Client-Connect to the end of Client-EndConnect; RPT is the sum of the
//! four server phase durations. What ORT holds beyond the sum of the client
//! phases and RPT is the inter-phase gap (request transit and scheduling),
//! reported as the decomposition residual.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::TelemetryError;
use crate::logfmt::LogEvent;
use crate::phase::{Edge, PhaseName};
use crate::stats::{summarize, Summary};
use crate::time::{Micros, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Interval {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> Micros {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseLifeline {
    qid: String,
    phases: [Interval; 7],
    ort: Micros,
    rpt: Micros,
}

impl PhaseLifeline {
    /// Builds a lifeline; every phase must be present with `end >= start`.
    pub fn from_intervals(
        qid: impl Into<String>,
        phases: [Option<Interval>; 7],
    ) -> Result<Self, TelemetryError> {
        let qid = qid.into();
        let mut full = [Interval::new(Timestamp(0), Timestamp(0)); 7];
        for (slot, p) in full.iter_mut().zip(phases) {
            match p {
                Some(iv) if iv.end >= iv.start => *slot = iv,
                _ => return Err(TelemetryError::IncompleteLifeline(qid)),
            }
        }
        let rpt = PhaseName::SERVER.iter().map(|p| full[p.index()].duration()).sum();
        let ort = full[PhaseName::ClientEndConnect.index()].end - full[PhaseName::ClientConnect.index()].start;
        Ok(Self { qid, phases: full, ort, rpt })
    }

    pub fn qid(&self) -> &str {
        &self.qid
    }

    pub fn interval(&self, phase: PhaseName) -> Interval {
        self.phases[phase.index()]
    }

    pub fn duration(&self, phase: PhaseName) -> Micros {
        self.interval(phase).duration()
    }

    pub fn ort(&self) -> Micros {
        self.ort
    }

    pub fn rpt(&self) -> Micros {
        self.rpt
    }

    pub fn start(&self) -> Timestamp {
        self.interval(PhaseName::ClientConnect).start
    }

    pub fn end(&self) -> Timestamp {
        self.interval(PhaseName::ClientEndConnect).end
    }

    /// Server phases follow one another without overlap.
    pub fn server_phases_ordered(&self) -> bool {
        PhaseName::SERVER
            .windows(2)
            .all(|w| self.interval(w[0]).end <= self.interval(w[1]).start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuarantineReason {
    Missing(Vec<PhaseName>),
    Duplicated(PhaseName),
    Inverted(PhaseName),
    ServerOverlap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quarantined {
    pub qid: String,
    pub reason: QuarantineReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Correlation {
    pub complete: Vec<PhaseLifeline>,
    pub quarantined: Vec<Quarantined>,
}

#[derive(Default)]
struct Pending {
    starts: [Option<Timestamp>; 7],
    ends: [Option<Timestamp>; 7],
    duplicate: Option<PhaseName>,
}

/// Groups phase events by query id and assembles lifelines. Events may come
/// from any number of producers in any order; non-phase events are ignored.
pub fn correlate(events: &[LogEvent]) -> Correlation {
    let mut by_qid: BTreeMap<&str, Pending> = BTreeMap::new();
    for e in events {
        let Some((phase, edge)) = e.phase() else { continue };
        let p = by_qid.entry(e.qid.as_str()).or_default();
        let slot = match edge {
            Edge::Start => &mut p.starts[phase.index()],
            Edge::End => &mut p.ends[phase.index()],
        };
        if slot.is_some() {
            p.duplicate.get_or_insert(phase);
        }
        *slot = Some(e.ts);
    }

    let mut out = Correlation::default();
    for (qid, p) in by_qid {
        let qid = String::from(qid);
        if let Some(phase) = p.duplicate {
            out.quarantined.push(Quarantined { qid, reason: QuarantineReason::Duplicated(phase) });
            continue;
        }
        let missing: Vec<PhaseName> = PhaseName::ALL
            .into_iter()
            .filter(|ph| p.starts[ph.index()].is_none() || p.ends[ph.index()].is_none())
            .collect();
        if !missing.is_empty() {
            out.quarantined.push(Quarantined { qid, reason: QuarantineReason::Missing(missing) });
            continue;
        }
        if let Some(ph) = PhaseName::ALL.into_iter().find(|ph| p.ends[ph.index()] < p.starts[ph.index()]) {
            out.quarantined.push(Quarantined { qid, reason: QuarantineReason::Inverted(ph) });
            continue;
        }
        let intervals: [Option<Interval>; 7] =
            core::array::from_fn(|i| Some(Interval::new(p.starts[i].unwrap(), p.ends[i].unwrap())));
        let lifeline = PhaseLifeline::from_intervals(qid.clone(), intervals).expect("checked complete");
        if !lifeline.server_phases_ordered() {
            out.quarantined.push(Quarantined { qid, reason: QuarantineReason::ServerOverlap });
            continue;
        }
        out.complete.push(lifeline);
    }
    out.complete.sort_by(|a, b| a.start().cmp(&b.start()).then_with(|| a.qid.cmp(&b.qid)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decomposition {
    pub ort: Micros,
    /// T_cc + T_cb + RPT + T_cec
    pub phase_sum: Micros,
    /// ORT minus the phase sum: the summed inter-phase gaps.
    pub residual: Micros,
    pub pass: bool,
}

pub fn check_decomposition(lifeline: &PhaseLifeline, epsilon: Micros) -> Decomposition {
    let phase_sum = lifeline.duration(PhaseName::ClientConnect)
        + lifeline.duration(PhaseName::ClientBind)
        + lifeline.rpt()
        + lifeline.duration(PhaseName::ClientEndConnect);
    let residual = Micros(lifeline.ort().0 - phase_sum.0);
    Decomposition { ort: lifeline.ort(), phase_sum, residual, pass: residual.0.abs() <= epsilon.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStats {
    pub count: usize,
    /// Indexed by [`PhaseName::index`]; seconds.
    pub phases: [Summary; 7],
    pub ort: Summary,
    pub rpt: Summary,
    pub rpt_over_ort: f64,
    pub connect_fraction: f64,
}

impl PhaseStats {
    pub fn phase(&self, phase: PhaseName) -> &Summary {
        &self.phases[phase.index()]
    }

    /// The phase with the largest mean duration.
    pub fn dominant_phase(&self) -> PhaseName {
        PhaseName::ALL
            .into_iter()
            .max_by(|a, b| self.phase(*a).mean.total_cmp(&self.phase(*b).mean))
            .unwrap()
    }
}

pub fn phase_stats(lifelines: &[PhaseLifeline]) -> Result<PhaseStats, TelemetryError> {
    if lifelines.is_empty() {
        return Err(TelemetryError::EmptyInput);
    }
    let column = |f: &dyn Fn(&PhaseLifeline) -> Micros| -> Vec<f64> {
        lifelines.iter().map(|l| f(l).as_secs_f64()).collect()
    };
    let phases: [Summary; 7] =
        core::array::from_fn(|i| summarize(&column(&|l| l.duration(PhaseName::ALL[i]))));
    let ort = summarize(&column(&|l| l.ort()));
    let rpt = summarize(&column(&|l| l.rpt()));
    let ratio = |num: f64| if ort.mean > 0.0 { num / ort.mean } else { 0.0 };
    Ok(PhaseStats {
        count: lifelines.len(),
        rpt_over_ort: ratio(rpt.mean),
        connect_fraction: ratio(
            phases[PhaseName::ClientConnect.index()].mean + phases[PhaseName::ClientEndConnect.index()].mean,
        ),
        phases,
        ort,
        rpt,
    })
}
