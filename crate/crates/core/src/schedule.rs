//! Time-unit reconstruction of the pipelined schedule.
//!
//! For token `i` the main process first climbs to the early layer `d̄`:
//! from layer 1 at the start of a run, or from layer `d − d̄ + 1` when the
//! previous token's speculation matched and a sub-process handed over its
//! layer-`(d − d̄)` state. Then a speculation window of `d − d̄` time units
//! opens: the main process finishes layers `d̄ + 1..=d` while `k`
//! sub-processes run layers `1..=d − d̄` for the candidate next tokens.
//! Match checks and hand-offs are instantaneous.

use serde::{Deserialize, Serialize};

use crate::config::{DecodingConfig, MatchSequence};
use crate::error::Result;

pub const MAIN_PROCESS: u32 = 0;

/// One contiguous layer range computed by one process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    /// 0 is the main process, `1..=k` the sub-processes.
    pub process_id: u32,
    /// 0-based index of the token whose forward pass this is. Sub-process
    /// events launched while token `i` is finishing belong to token `i + 1`.
    pub token_index: u32,
    pub layer_start: u32,
    pub layer_end: u32,
    pub t_start: u64,
    pub t_end: u64,
    /// Speculative work from a window that ended in a mismatch (or from the
    /// last token, which has no successor). The schedule is abstract over
    /// which candidate matched, so all sub-events of a matching window are
    /// kept.
    pub discarded: bool,
}

impl ScheduleEvent {
    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTimeline {
    pub config: DecodingConfig,
    pub matches: MatchSequence,
    pub events: Vec<ScheduleEvent>,
    pub makespan: u64,
}

/// Replays the decoding state machine for a fixed match outcome sequence.
pub fn build_schedule(config: &DecodingConfig, matches: &MatchSequence) -> Result<ScheduleTimeline> {
    let cfg = config.validate(true)?;
    matches.check_tokens(cfg.tokens)?;

    let d = cfg.depth;
    let dbar = cfg.early_layer;
    let saved = cfg.saved_layers();
    let mut events = Vec::new();
    let push = |events: &mut Vec<ScheduleEvent>, pid, token, first: u32, last: u32, t: u64, discarded| {
        if last >= first {
            let len = u64::from(last - first + 1);
            events.push(ScheduleEvent {
                process_id: pid,
                token_index: token,
                layer_start: first,
                layer_end: last,
                t_start: t,
                t_end: t + len,
                discarded,
            });
        }
    };

    let mut now = 0u64;
    let mut resumed = false;
    for token in 0..cfg.tokens {
        // main process up to the early layer
        let first = if resumed { saved + 1 } else { 1 };
        push(&mut events, MAIN_PROCESS, token, first, dbar, now, false);
        if dbar >= first {
            now += u64::from(dbar - first + 1);
        }

        // speculation window; the outcome of the last token's speculation is never used
        let matched = matches.bits().get(token as usize).copied().unwrap_or(false);
        push(&mut events, MAIN_PROCESS, token, dbar + 1, d, now, false);
        for pid in 1..=cfg.sub_processes {
            push(&mut events, pid, token + 1, 1, saved, now, !matched);
        }
        now += u64::from(saved);
        resumed = matched;
    }

    let makespan = events.iter().map(|e| e.t_end).max().unwrap_or(0);
    Ok(ScheduleTimeline {
        config: cfg,
        matches: matches.clone(),
        events,
        makespan,
    })
}

/// Busy process count for every time unit in `[0, makespan)`.
pub fn occupancy_profile(timeline: &ScheduleTimeline) -> Vec<u32> {
    let mut profile = vec![0u32; timeline.makespan as usize];
    for e in &timeline.events {
        for slot in &mut profile[e.t_start as usize..e.t_end as usize] {
            *slot += 1;
        }
    }
    profile
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub n_runs: u64,
    pub makespan: u64,
    pub expected_makespan: u64,
    pub occupancy_sum: u64,
    pub expected_compute: u64,
    /// `makespan − (d̄ℓ + (d − d̄)N)`
    pub latency_residual: i64,
    /// `Σ occupancy − ((d̄ + k(d − d̄))ℓ + (d − d̄)N)`
    pub compute_residual: i64,
    /// Time units where some process runs more than one event.
    pub overlap_units: u64,
    /// Time units in `[0, makespan)` where the main process is idle.
    pub main_idle_units: u64,
    pub peak_occupancy: u32,
    pub latency_ok: bool,
    pub compute_ok: bool,
    pub no_overlap: bool,
    pub main_never_idle: bool,
}

impl VerificationReport {
    pub fn all_ok(&self) -> bool {
        self.latency_ok && self.compute_ok && self.no_overlap && self.main_never_idle
    }
}

/// Checks the timeline against the run-based latency and compute identities.
pub fn verify_identities(timeline: &ScheduleTimeline) -> VerificationReport {
    let cfg = &timeline.config;
    let n_runs = (timeline.matches.failures() + 1) as u64;
    let ell = u64::from(cfg.tokens);
    let dbar = u64::from(cfg.early_layer);
    let saved = u64::from(cfg.saved_layers());
    let k = u64::from(cfg.sub_processes);

    let expected_makespan = dbar * ell + saved * n_runs;
    let expected_compute = (dbar + k * saved) * ell + saved * n_runs;
    let profile = occupancy_profile(timeline);
    let occupancy_sum: u64 = profile.iter().map(|&c| u64::from(c)).sum();

    let span = timeline.makespan as usize;
    let mut per_process = vec![vec![0u32; span]; cfg.sub_processes as usize + 1];
    for e in &timeline.events {
        for slot in &mut per_process[e.process_id as usize][e.t_start as usize..e.t_end as usize] {
            *slot += 1;
        }
    }
    let overlap_units = per_process
        .iter()
        .flat_map(|row| row.iter())
        .filter(|&&c| c > 1)
        .count() as u64;
    let main_idle_units = per_process[0].iter().filter(|&&c| c == 0).count() as u64;

    let latency_residual = timeline.makespan as i64 - expected_makespan as i64;
    let compute_residual = occupancy_sum as i64 - expected_compute as i64;
    VerificationReport {
        n_runs,
        makespan: timeline.makespan,
        expected_makespan,
        occupancy_sum,
        expected_compute,
        latency_residual,
        compute_residual,
        overlap_units,
        main_idle_units,
        peak_occupancy: profile.iter().copied().max().unwrap_or(0),
        latency_ok: latency_residual == 0,
        compute_ok: compute_residual == 0,
        no_overlap: overlap_units == 0,
        main_never_idle: main_idle_units == 0,
    }
}

pub const EVENTS_CSV_HEADER: &str =
    "process_id,token_index,layer_start,layer_end,t_start,t_end,discarded";

pub fn events_to_csv(timeline: &ScheduleTimeline) -> String {
    let mut out = String::from(EVENTS_CSV_HEADER);
    out.push('\n');
    for e in &timeline.events {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.process_id, e.token_index, e.layer_start, e.layer_end, e.t_start, e.t_end, e.discarded
        ));
    }
    out
}

/// Text Gantt chart, one row per process and one column per time unit.
///
/// `#` main process, `+` speculation from a matching window, `x` discarded
/// speculation, `.` idle.
pub fn gantt_text(timeline: &ScheduleTimeline) -> String {
    let span = timeline.makespan as usize;
    let procs = timeline.config.sub_processes as usize + 1;
    let mut rows = vec![vec!['.'; span]; procs];
    for e in &timeline.events {
        let c = match (e.process_id, e.discarded) {
            (MAIN_PROCESS, _) => '#',
            (_, false) => '+',
            (_, true) => 'x',
        };
        for slot in &mut rows[e.process_id as usize][e.t_start as usize..e.t_end as usize] {
            *slot = c;
        }
    }
    let mut out = String::new();
    for (pid, row) in rows.iter().enumerate() {
        let label = if pid == 0 { "main ".to_string() } else { format!("sub{pid:<2}") };
        out.push_str(&label);
        out.push('|');
        out.extend(row.iter());
        out.push_str("|\n");
    }
    out
}
