//! Match-rate estimation from per-token prediction logs.
//!
//! Input is JSON Lines, one record per generated position:
//!
//! ```text
//! {"example_id": "q17", "position": 3, "early_topk": [5, 11, 2], "final": 11, "layer": 20}
//! ```

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::config::{DecodingConfig, LatencyComputeReport};
use crate::error::{domain, PpdError, Result};
use crate::mockmodel::TokenId;

/// Two-sided 95% normal quantile used by the Wilson interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub example_id: String,
    /// 1-based index of the generated token within its example.
    pub position: u32,
    /// Early-layer candidates, best first.
    pub early_topk: Vec<TokenId>,
    #[serde(rename = "final")]
    pub final_token: TokenId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
}

impl TraceRecord {
    pub fn matches_at(&self, k: usize) -> bool {
        self.early_topk[..k].contains(&self.final_token)
    }
}

/// Parses JSON Lines; blank lines are skipped.
pub fn load_traces<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line).map_err(|e| PpdError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if record.position == 0 {
            return Err(PpdError::Parse {
                line: line_no,
                reason: "position must be >= 1".into(),
            });
        }
        let mut seen = HashSet::with_capacity(record.early_topk.len());
        if let Some(&dup) = record.early_topk.iter().find(|&&id| !seen.insert(id)) {
            return Err(PpdError::DuplicateId { line: line_no, id: dup });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_traces<W: Write>(mut writer: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub first_position: u32,
    pub last_position: u32,
    pub count: u64,
    pub matches: u64,
    /// `None` for an empty bucket.
    pub p_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRateReport {
    pub k: u32,
    pub total_positions: u64,
    pub matches: u64,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<Bucket>,
}

fn check_cutoff(records: &[TraceRecord], k: u32) -> Result<usize> {
    if k == 0 {
        return domain("k must be >= 1");
    }
    let available = records.iter().map(|r| r.early_topk.len()).min().unwrap_or(usize::MAX);
    if k as usize > available {
        return domain(format!(
            "k = {k} exceeds the shortest early_topk list ({available})"
        ));
    }
    Ok(k as usize)
}

/// Fraction of positions whose final token is among the first `k` early candidates.
pub fn match_rate(records: &[TraceRecord], k: u32) -> Result<MatchRateReport> {
    let cut = check_cutoff(records, k)?;
    let total = records.len() as u64;
    let matches = records.iter().filter(|r| r.matches_at(cut)).count() as u64;
    Ok(MatchRateReport {
        k,
        total_positions: total,
        matches,
        p_hat: if total == 0 { 0.0 } else { matches as f64 / total as f64 },
        ci95: wilson_interval(matches, total, Z_95),
        buckets: Vec::new(),
    })
}

/// [`match_rate`] plus a breakdown over position ranges `[1..w], [w+1..2w], …`.
pub fn match_rate_by_bucket(records: &[TraceRecord], k: u32, bucket_width: u32) -> Result<MatchRateReport> {
    if bucket_width == 0 {
        return domain("bucket_width must be >= 1");
    }
    let mut report = match_rate(records, k)?;
    let cut = k as usize;
    let max_pos = records.iter().map(|r| r.position).max().unwrap_or(0);
    let n_buckets = max_pos.div_ceil(bucket_width) as usize;
    let mut counts = vec![(0u64, 0u64); n_buckets];
    for r in records {
        let slot = &mut counts[((r.position - 1) / bucket_width) as usize];
        slot.0 += 1;
        slot.1 += u64::from(r.matches_at(cut));
    }
    report.buckets = counts
        .into_iter()
        .enumerate()
        .map(|(i, (count, matches))| Bucket {
            first_position: i as u32 * bucket_width + 1,
            last_position: (i as u32 + 1) * bucket_width,
            count,
            matches,
            p_hat: (count > 0).then(|| matches as f64 / count as f64),
        })
        .collect();
    Ok(report)
}

/// Report as CSV: one row per bucket, then a `Total` row.
pub fn report_to_csv(report: &MatchRateReport) -> String {
    let mut out = String::from("range,count,matches,p_hat\n");
    for b in &report.buckets {
        let p = b.p_hat.map(|p| p.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}-{},{},{},{}\n",
            b.first_position, b.last_position, b.count, b.matches, p
        ));
    }
    out.push_str(&format!(
        "Total,{},{},{}\n",
        report.total_positions, report.matches, report.p_hat
    ));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceForecast {
    pub p_hat: f64,
    pub ci95: (f64, f64),
    /// Expected totals at `p̂`.
    pub expected: LatencyComputeReport,
    /// Expected total latency at the upper and lower interval ends
    /// (low latency first).
    pub latency_range: (f64, f64),
    /// Large-ℓ forms for an early layer at half depth, evaluated at `p̂`.
    pub latency_per_token_norm_halfdepth: f64,
    pub compute_per_time_unit_halfdepth: f64,
    pub compute_per_token_halfdepth: f64,
}

/// Plugs the estimated match rate into the latency/compute expectations.
pub fn forecast_from_trace(records: &[TraceRecord], k: u32, depth: u32, early_layer: u32, ell: u32) -> Result<TraceForecast> {
    if records.is_empty() {
        return domain("cannot forecast from an empty trace");
    }
    let rate = match_rate(records, k)?;
    let base = DecodingConfig::new(depth, early_layer, k, ell);
    let at = |p: f64| base.with_p(p);
    let expected = analytic::expected_report(&at(rate.p_hat))?;
    let (lo, hi) = rate.ci95;
    let latency_range = (
        analytic::expected_latency(&at(hi))?,
        analytic::expected_latency(&at(lo))?,
    );
    Ok(TraceForecast {
        p_hat: rate.p_hat,
        ci95: rate.ci95,
        expected,
        latency_range,
        latency_per_token_norm_halfdepth: analytic::per_token_latency_halfdepth(rate.p_hat, 1.0)?,
        compute_per_time_unit_halfdepth: analytic::avg_compute_per_time_unit_halfdepth(rate.p_hat, k)?,
        compute_per_token_halfdepth: analytic::avg_compute_per_token_halfdepth(rate.p_hat, k)?,
    })
}

/// Synthetic trace with a planted match probability: each position's final
/// token is placed among the first `k` of `k_max` candidates with
/// probability `p`, otherwise outside them.
pub fn synthetic_trace<R: rand::Rng + ?Sized>(
    rng: &mut R,
    positions: usize,
    p: f64,
    k: usize,
    k_max: usize,
    example_len: u32,
) -> Vec<TraceRecord> {
    assert!(k >= 1 && k <= k_max && example_len >= 1);
    (0..positions)
        .map(|i| {
            let early_topk: Vec<TokenId> = (0..k_max as u32).map(|j| j * 7 + 3).collect();
            let final_token = if rng.gen_bool(p) {
                early_topk[rng.gen_range(0..k)]
            } else if k < k_max && rng.gen_bool(0.5) {
                early_topk[rng.gen_range(k..k_max)]
            } else {
                1_000_000
            };
            TraceRecord {
                example_id: format!("syn{}", i as u32 / example_len),
                position: i as u32 % example_len + 1,
                early_topk,
                final_token,
                layer: None,
            }
        })
        .collect()
}
