//! Browser bindings for the interactive demo in `www/`.
//!
//! Each exported function returns a JSON string. The `*_json` functions
//! hold the logic and are plain Rust so they can be tested natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use ppd::analytic::{expected_latency, expected_total_compute, sweep_to_csv, tradeoff_sweep};
use ppd::render::{gantt_svg, tradeoff_svg, ComputeAxis};
use ppd::schedule::{build_schedule, gantt_text, occupancy_profile, verify_identities};
use ppd::stochastic::monte_carlo;
use ppd::{DecodingConfig, MatchSequence};

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| format!("cannot parse {t:?}")))
        .collect()
}

/// Trade-off curves; `ell = 0` selects the large-ℓ limit.
#[allow(clippy::too_many_arguments)]
pub fn tradeoff_json(
    d: u32,
    dbar: u32,
    ell: u32,
    k_list: &str,
    p_from: f64,
    p_to: f64,
    steps: u32,
    per_token_axis: bool,
) -> Result<String, String> {
    let ks: Vec<u32> = parse_list(k_list)?;
    let ps: Vec<f64> = match steps {
        0 => Vec::new(),
        1 => vec![p_from],
        n => (0..n)
            .map(|i| p_from + (p_to - p_from) * f64::from(i) / f64::from(n - 1))
            .collect(),
    };
    let tokens = (ell > 0).then_some(ell);
    let rows = tradeoff_sweep(d, dbar, tokens, &ks, &ps).map_err(|e| e.to_string())?;
    let axis = if per_token_axis { ComputeAxis::PerToken } else { ComputeAxis::PerTimeUnit };
    Ok(json!({
        "rows": rows,
        "csv": sweep_to_csv(&rows),
        "svg": tradeoff_svg(&rows, axis),
    })
    .to_string())
}

/// Schedule for an explicit `T`/`F` match string (`ell` = length + 1).
pub fn schedule_json(d: u32, dbar: u32, k: u32, matches: &str) -> Result<String, String> {
    let m = MatchSequence::parse(matches.trim()).map_err(|e| e.to_string())?;
    let cfg = DecodingConfig::new(d, dbar, k, m.tokens() as u32);
    let timeline = build_schedule(&cfg, &m).map_err(|e| e.to_string())?;
    Ok(json!({
        "svg": gantt_svg(&timeline),
        "text": gantt_text(&timeline),
        "occupancy": occupancy_profile(&timeline),
        "report": verify_identities(&timeline),
    })
    .to_string())
}

/// Monte Carlo estimate next to the closed-form expectations.
pub fn simulate_json(d: u32, dbar: u32, k: u32, ell: u32, p: f64, trials: u32, seed: u32) -> Result<String, String> {
    let cfg = DecodingConfig::new(d, dbar, k, ell).with_p(p);
    let summary = monte_carlo(&cfg, u64::from(trials), u64::from(seed)).map_err(|e| e.to_string())?;
    let lat = expected_latency(&cfg).map_err(|e| e.to_string())?;
    let comp = expected_total_compute(&cfg).map_err(|e| e.to_string())?;
    let z = |mean: f64, target: f64, se: f64| if se > 0.0 { (mean - target) / se } else { 0.0 };
    Ok(json!({
        "summary": summary,
        "expected_latency": lat,
        "expected_total_compute": comp,
        "expected_n_runs": f64::from(ell) - f64::from(ell - 1) * p,
        "z_latency": z(summary.mean_latency, lat, summary.stderr_latency),
        "z_compute": z(summary.mean_compute, comp, summary.stderr_compute),
    })
    .to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn tradeoff(
    d: u32,
    dbar: u32,
    ell: u32,
    k_list: &str,
    p_from: f64,
    p_to: f64,
    steps: u32,
    per_token_axis: bool,
) -> Result<String, JsError> {
    tradeoff_json(d, dbar, ell, k_list, p_from, p_to, steps, per_token_axis).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn schedule(d: u32, dbar: u32, k: u32, matches: &str) -> Result<String, JsError> {
    schedule_json(d, dbar, k, matches).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(d: u32, dbar: u32, k: u32, ell: u32, p: f64, trials: u32, seed: u32) -> Result<String, JsError> {
    simulate_json(d, dbar, k, ell, p, trials, seed).map_err(|e| JsError::new(&e))
}
