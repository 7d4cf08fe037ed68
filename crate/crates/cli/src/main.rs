//! `ppd` command-line front end.
//!
//! Exit codes: 0 success, 1 identity/property failure, 2 usage or
//! validation error.

mod args;

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use ppd::analytic::{self, tradeoff_sweep};
use ppd::mockmodel::ExactnessSuite;
use ppd::render::{gantt_svg, tradeoff_svg, ComputeAxis};
use ppd::schedule::{build_schedule, events_to_csv, gantt_text, verify_identities};
use ppd::stochastic::{monte_carlo, sample_match_sequence, trial_rng};
use ppd::trace::{forecast_from_trace, load_traces, match_rate, match_rate_by_bucket, report_to_csv};
use ppd::{DecodingConfig, MatchSequence};

use args::{AnalyzeArgs, Cli, Command, Format, GanttFormat, MatchRateArgs, ScheduleArgs, SimulateArgs, SweepArgs, VerifyArgs, XAxis};

enum Failure {
    /// Bad flags or a configuration that violates a constraint.
    Usage(String),
    /// A checked identity or property did not hold.
    Check(String),
}

impl From<ppd::PpdError> for Failure {
    fn from(e: ppd::PpdError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Schedule(a) => cmd_schedule(a),
        Command::Matchrate(a) => cmd_matchrate(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn write_or_print(path: Option<&Path>, contents: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, contents)?,
        None => io::stdout().lock().write_all(contents.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    config: DecodingConfig,
    expected_latency: f64,
    expected_total_compute: f64,
    per_token_latency: f64,
    avg_compute_per_time_unit: f64,
    avg_compute_per_token: f64,
    /// Expected per-token latency over the sequential cost `d`.
    latency_per_token_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    halfdepth: Option<HalfDepth>,
}

#[derive(Serialize)]
struct HalfDepth {
    latency_per_token_norm: f64,
    compute_per_time_unit: f64,
    compute_per_token: f64,
}

fn cmd_analyze(a: AnalyzeArgs) -> CmdResult {
    let cfg = a.config.resolve(true)?;
    let p = cfg.require_p()?;
    let expected = analytic::expected_report(&cfg)?;
    let halfdepth = if 2 * cfg.early_layer == cfg.depth {
        Some(HalfDepth {
            latency_per_token_norm: analytic::per_token_latency_halfdepth(p, 1.0)?,
            compute_per_time_unit: analytic::avg_compute_per_time_unit_halfdepth(p, cfg.sub_processes)?,
            compute_per_token: analytic::avg_compute_per_token_halfdepth(p, cfg.sub_processes)?,
        })
    } else {
        None
    };
    let report = AnalyzeReport {
        config: cfg,
        expected_latency: expected.total_latency,
        expected_total_compute: expected.total_compute,
        per_token_latency: expected.per_token_latency,
        avg_compute_per_time_unit: expected.avg_compute_per_time_unit,
        avg_compute_per_token: expected.avg_compute_per_token,
        latency_per_token_norm: expected.per_token_latency / f64::from(cfg.depth),
        halfdepth,
    };
    match a.format {
        Format::Json => print_json(&report),
        Format::Csv => {
            let mut header = String::from("d,d_bar,k,ell,p_correct,expected_latency,expected_total_compute,per_token_latency,avg_compute_per_time_unit,avg_compute_per_token,latency_per_token_norm");
            let mut row = format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                cfg.depth,
                cfg.early_layer,
                cfg.sub_processes,
                cfg.tokens,
                p,
                report.expected_latency,
                report.expected_total_compute,
                report.per_token_latency,
                report.avg_compute_per_time_unit,
                report.avg_compute_per_token,
                report.latency_per_token_norm
            );
            if let Some(h) = &report.halfdepth {
                header.push_str(",halfdepth_latency_per_token_norm,halfdepth_compute_per_time_unit,halfdepth_compute_per_token");
                row.push_str(&format!(",{},{},{}", h.latency_per_token_norm, h.compute_per_time_unit, h.compute_per_token));
            }
            write_or_print(None, &format!("{header}\n{row}\n"))
        }
    }
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let p_values = a.p_grid()?;
    let rows = tradeoff_sweep(a.d, a.dbar, a.l, &a.k_list, &p_values)?;
    write_or_print(a.out.as_deref(), &analytic::sweep_to_csv(&rows))?;
    if let Some(svg) = &a.svg {
        let axis = match a.x_axis {
            XAxis::TimeUnit => ComputeAxis::PerTimeUnit,
            XAxis::Token => ComputeAxis::PerToken,
        };
        fs::write(svg, tradeoff_svg(&rows, axis))?;
    }
    if let Some(json) = &a.json {
        fs::write(json, serde_json::to_string_pretty(&rows).map_err(io::Error::from)? + "\n")?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let cfg = a.config.resolve(true)?;
    let summary = monte_carlo(&cfg, a.trials, a.seed)?;
    print_json(&summary)
}

fn cmd_schedule(a: ScheduleArgs) -> CmdResult {
    let (cfg, matches) = match &a.matches {
        Some(s) => {
            let m = MatchSequence::parse(s)?;
            let mut cfg = a.config.clone();
            let ell = m.tokens() as u32;
            match cfg.l {
                Some(l) if l != ell => {
                    return Err(Failure::Usage(format!(
                        "--matches has {} bits but --l {l} needs {}",
                        m.len(),
                        l.saturating_sub(1)
                    )))
                }
                _ => cfg.l = Some(ell),
            }
            (cfg.resolve_without_p(true)?, m)
        }
        None => {
            let cfg = a.config.resolve(true)?;
            let p = cfg.require_p()?;
            let m = sample_match_sequence(&mut trial_rng(a.seed, 0), p, cfg.tokens)?;
            (cfg, m)
        }
    };
    let timeline = build_schedule(&cfg, &matches)?;
    let artifact = match a.gantt {
        GanttFormat::Text => gantt_text(&timeline),
        GanttFormat::Csv => events_to_csv(&timeline),
        GanttFormat::Svg => gantt_svg(&timeline),
    };
    write_or_print(a.out.as_deref(), &artifact)?;
    let report = verify_identities(&timeline);
    print_json(&report)?;
    if report.all_ok() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "latency residual {}, compute residual {}",
            report.latency_residual, report.compute_residual
        )))
    }
}

#[derive(Serialize)]
struct MatchRateOutput {
    #[serde(flatten)]
    report: ppd::trace::MatchRateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    forecast: Option<ppd::trace::TraceForecast>,
}

fn cmd_matchrate(a: MatchRateArgs) -> CmdResult {
    let records = load_traces(BufReader::new(File::open(&a.input)?))?;
    let report = match a.bucket {
        Some(w) => match_rate_by_bucket(&records, a.k, w)?,
        None => match_rate(&records, a.k)?,
    };
    let forecast = match (a.d, a.dbar, a.l) {
        (Some(d), Some(dbar), Some(l)) => Some(forecast_from_trace(&records, a.k, d, dbar, l)?),
        (None, None, None) => None,
        _ => return Err(Failure::Usage("forecast needs all of --d, --dbar and --l".into())),
    };
    match a.format {
        Format::Json => print_json(&MatchRateOutput { report, forecast }),
        Format::Csv => write_or_print(None, &report_to_csv(&report)),
    }
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    if a.instances == 0 {
        return Err(Failure::Usage("--instances must be >= 1".into()));
    }
    let suite = ExactnessSuite {
        instances: a.instances,
        seed: a.seed,
        vocab_sizes: a.vocab,
        depths: a.depths,
        sub_processes: a.k_list,
        max_ell: a.max_l,
    };
    let summary = suite.run()?;
    print_json(&summary)?;
    match &summary.first_failure {
        None => Ok(()),
        Some(c) => Err(Failure::Check(format!(
            "{} of {} instances failed; first: instance {} (model seed {}): {}",
            summary.failed, summary.suite.instances, c.instance, c.model.seed, c.reason
        ))),
    }
}
