//! Closed-form latency and compute expressions.
//!
//! Two families live here. The `*_halfdepth` functions are the large-ℓ
//! approximations for an early layer at exactly half depth; they are
//! normalized so that sequential decoding costs 1 per token. The
//! `expected_*` functions are exact expectations for any `d̄ ≥ d/2` and any
//! finite ℓ under independent per-token matches with probability `p`.

use serde::{Deserialize, Serialize};

use crate::config::{check_probability, DecodingConfig, LatencyComputeReport};
use crate::error::Result;

/// Per-token latency `d·(1 − p/2)` for `d̄ = d/2`, `ℓ ≫ 1`.
pub fn per_token_latency_halfdepth(p_correct: f64, depth: f64) -> Result<f64> {
    check_probability(p_correct)?;
    Ok(depth * (1.0 - p_correct / 2.0))
}

/// Average busy compute units per time unit, `(k + 2 − p) / (2 − p)`.
pub fn avg_compute_per_time_unit_halfdepth(p_correct: f64, sub_processes: u32) -> Result<f64> {
    check_probability(p_correct)?;
    let k = f64::from(sub_processes);
    Ok((k + 2.0 - p_correct) / (2.0 - p_correct))
}

/// Average compute per token normalized by `d`, `(2 + k − p) / 2`.
pub fn avg_compute_per_token_halfdepth(p_correct: f64, sub_processes: u32) -> Result<f64> {
    check_probability(p_correct)?;
    let k = f64::from(sub_processes);
    Ok((2.0 + k - p_correct) / 2.0)
}

/// Expected time units to emit ℓ tokens: `dℓ − (d − d̄)(ℓ − 1)p`.
pub fn expected_latency(config: &DecodingConfig) -> Result<f64> {
    let cfg = config.validate(true)?;
    let p = cfg.require_p()?;
    Ok(latency_at(&cfg, p))
}

/// Expected busy compute: expected latency plus `k(d − d̄)ℓ` of speculation.
pub fn expected_total_compute(config: &DecodingConfig) -> Result<f64> {
    let cfg = config.validate(true)?;
    let p = cfg.require_p()?;
    Ok(latency_at(&cfg, p) + speculation_compute(&cfg))
}

/// Both expectations packed into a report.
pub fn expected_report(config: &DecodingConfig) -> Result<LatencyComputeReport> {
    let latency = expected_latency(config)?;
    let compute = expected_total_compute(config)?;
    Ok(LatencyComputeReport::from_totals(latency, compute, config.tokens))
}

fn latency_at(cfg: &DecodingConfig, p: f64) -> f64 {
    let d = f64::from(cfg.depth);
    let ell = f64::from(cfg.tokens);
    let saved = f64::from(cfg.saved_layers());
    d * ell - saved * (ell - 1.0) * p
}

fn speculation_compute(cfg: &DecodingConfig) -> f64 {
    f64::from(cfg.sub_processes) * f64::from(cfg.saved_layers()) * f64::from(cfg.tokens)
}

/// One point of a latency/compute trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u32,
    pub p_correct: f64,
    /// Per-token latency divided by the sequential cost `d`.
    pub latency_per_token_norm: f64,
    pub compute_per_time_unit: f64,
    /// Compute per token divided by `d`.
    pub compute_per_token: f64,
}

pub const SWEEP_CSV_HEADER: &str =
    "k,p_correct,latency_per_token_norm,compute_per_time_unit,compute_per_token";

/// Trade-off curve over a `(k, p)` grid, ordered by `k` then `p`.
///
/// With `tokens = Some(ℓ)` every row is the exact finite-ℓ expectation
/// (expected latency and compute, normalized by `dℓ`). With `None` the
/// ℓ → ∞ limit is used, which for `d̄ = d/2` coincides with the
/// `*_halfdepth` forms.
pub fn tradeoff_sweep(
    depth: u32,
    early_layer: u32,
    tokens: Option<u32>,
    k_values: &[u32],
    p_values: &[f64],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(k_values.len() * p_values.len());
    for &k in k_values {
        for &p in p_values {
            let cfg = DecodingConfig::new(depth, early_layer, k, tokens.unwrap_or(1))
                .with_p(p)
                .validate(true)?;
            let d = f64::from(depth);
            let (latency, compute, ell) = match tokens {
                Some(ell) => (
                    expected_latency(&cfg)?,
                    expected_total_compute(&cfg)?,
                    f64::from(ell),
                ),
                None => {
                    // per-token limits of the exact expressions
                    let saved = f64::from(cfg.saved_layers());
                    let latency = d - saved * p;
                    (latency, latency + f64::from(k) * saved, 1.0)
                }
            };
            rows.push(SweepRow {
                k,
                p_correct: p,
                latency_per_token_norm: latency / (d * ell),
                compute_per_time_unit: compute / latency,
                compute_per_token: compute / (d * ell),
            });
        }
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k, r.p_correct, r.latency_per_token_norm, r.compute_per_time_unit, r.compute_per_token
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Exact expectation by enumerating every match sequence of length ℓ−1
    /// and summing per-run costs `d + (X − 1)d̄`.
    fn enumerate_expected_latency(d: u32, dbar: u32, ell: u32, p: f64) -> f64 {
        let n = ell - 1;
        let mut total = 0.0;
        for mask in 0u64..(1u64 << n) {
            let mut prob = 1.0;
            let mut latency = 0u64;
            let mut run = 1u64;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    prob *= p;
                    run += 1;
                } else {
                    prob *= 1.0 - p;
                    latency += u64::from(d) + (run - 1) * u64::from(dbar);
                    run = 1;
                }
            }
            latency += u64::from(d) + (run - 1) * u64::from(dbar);
            total += prob * latency as f64;
        }
        total
    }

    #[test]
    fn halfdepth_latency_examples() {
        assert!(close(per_token_latency_halfdepth(0.7415, 1.0).unwrap(), 0.62925, 1e-12));
        assert_eq!(per_token_latency_halfdepth(0.0, 40.0).unwrap(), 40.0);
        assert_eq!(per_token_latency_halfdepth(1.0, 40.0).unwrap(), 20.0);
        assert!(per_token_latency_halfdepth(1.5, 40.0).is_err());
    }

    #[test]
    fn halfdepth_compute_examples() {
        let v = avg_compute_per_time_unit_halfdepth(0.6837, 3).unwrap();
        assert!(close(v, 3.279_112, 1e-5), "{v}");
        assert_eq!(avg_compute_per_time_unit_halfdepth(1.0, 3).unwrap(), 4.0);
        assert_eq!(avg_compute_per_time_unit_halfdepth(0.0, 3).unwrap(), 2.5);
        assert!(avg_compute_per_time_unit_halfdepth(-0.01, 3).is_err());
    }

    #[test]
    fn halfdepth_compute_per_token_examples() {
        let v = avg_compute_per_token_halfdepth(0.6837, 3).unwrap();
        let product = per_token_latency_halfdepth(0.6837, 1.0).unwrap()
            * avg_compute_per_time_unit_halfdepth(0.6837, 3).unwrap();
        assert!(close(v, 2.15815, 1e-12));
        assert!(close(v, product, 1e-12));
        assert_eq!(avg_compute_per_token_halfdepth(1.0, 0).unwrap(), 0.5);
        assert_eq!(avg_compute_per_token_halfdepth(0.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn expected_latency_examples() {
        let cfg = DecodingConfig::new(40, 20, 3, 1).with_p(0.9);
        assert_eq!(expected_latency(&cfg).unwrap(), 40.0);
        let cfg = DecodingConfig::new(40, 20, 3, 128).with_p(0.5);
        assert_eq!(expected_latency(&cfg).unwrap(), 3850.0);
        let cfg = DecodingConfig::new(40, 20, 3, 128).with_p(1.0);
        assert_eq!(expected_latency(&cfg).unwrap(), 2580.0);
        assert_eq!(2580, 40 + 127 * 20);
    }

    #[test]
    fn expected_latency_matches_enumeration_oracle() {
        for &(d, dbar, ell, p) in &[
            (40, 20, 1, 0.9),
            (40, 20, 8, 0.5),
            (40, 30, 12, 0.2163),
            (8, 5, 10, 0.8),
            (9, 9, 6, 0.3),
        ] {
            let oracle = enumerate_expected_latency(d, dbar, ell, p);
            let got = expected_latency(&DecodingConfig::new(d, dbar, 1, ell).with_p(p)).unwrap();
            assert!(close(got, oracle, 1e-9 * oracle), "{d} {dbar} {ell} {p}: {got} vs {oracle}");
        }
    }

    #[test]
    fn expected_latency_matches_sampling_oracle() {
        // 10^5 Bernoulli sequences, N = 1 + #failures, T = d̄ℓ + (d − d̄)N
        let mut rng = crate::stochastic::trial_rng(7, 0);
        let trials = 100_000;
        let mut sum = 0.0;
        for _ in 0..trials {
            let fails = (0..127).filter(|_| !rng.gen_bool(0.5)).count() as f64;
            sum += 20.0 * 128.0 + 20.0 * (1.0 + fails);
        }
        let mean = sum / trials as f64;
        assert!((mean - 3850.0).abs() / 3850.0 < 0.005, "{mean}");
    }

    #[test]
    fn expected_total_compute_examples() {
        let cfg = DecodingConfig::new(40, 20, 0, 128).with_p(0.5);
        assert_eq!(expected_total_compute(&cfg).unwrap(), 3850.0);
        let cfg = DecodingConfig::new(40, 20, 3, 128).with_p(0.6837);
        assert!(close(expected_total_compute(&cfg).unwrap(), 11063.402, 1e-8));
        let cfg = DecodingConfig::new(40, 40, 5, 10).with_p(0.7);
        assert_eq!(expected_total_compute(&cfg).unwrap(), 400.0);
    }

    #[test]
    fn theorem_forms_reject_bad_configs() {
        assert!(expected_latency(&DecodingConfig::new(40, 10, 3, 8).with_p(0.5)).is_err());
        assert!(expected_latency(&DecodingConfig::new(40, 20, 3, 8)).is_err());
        assert!(expected_total_compute(&DecodingConfig::new(40, 20, 3, 8).with_p(2.0)).is_err());
    }

    #[test]
    fn latency_monotone_in_p() {
        let ps: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
        for &(d, dbar, ell) in &[(40, 20, 128), (40, 39, 2), (7, 4, 30)] {
            let lat: Vec<f64> = ps
                .iter()
                .map(|&p| expected_latency(&DecodingConfig::new(d, dbar, 1, ell).with_p(p)).unwrap())
                .collect();
            assert!(lat.windows(2).all(|w| w[1] < w[0]));
        }
        for &(d, dbar, ell) in &[(40, 40, 128), (40, 20, 1)] {
            let lat: Vec<f64> = ps
                .iter()
                .map(|&p| expected_latency(&DecodingConfig::new(d, dbar, 1, ell).with_p(p)).unwrap())
                .collect();
            assert!(lat.iter().all(|&l| l == lat[0]));
        }
    }

    #[test]
    fn single_run_boundary() {
        for &(d, dbar, ell) in &[(40, 20, 128), (64, 33, 256), (8, 8, 3)] {
            let cfg = DecodingConfig::new(d, dbar, 2, ell).with_p(1.0);
            assert_eq!(expected_latency(&cfg).unwrap(), f64::from(d + (ell - 1) * dbar));
        }
    }

    #[test]
    fn large_ell_converges_to_halfdepth() {
        for &d in &[2u32, 40, 64] {
            for &p in &[0.0, 0.2163, 0.6837, 1.0] {
                let ell = 10_000;
                let dbar = d / 2;
                let exact = expected_latency(&DecodingConfig::new(d, dbar, 1, ell).with_p(p))
                    .unwrap()
                    / f64::from(ell);
                let approx = per_token_latency_halfdepth(p, f64::from(d)).unwrap();
                let bound =
                    f64::from(d) * f64::from(d - dbar) / (f64::from(dbar) * f64::from(ell));
                assert!((exact - approx).abs() <= bound * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn product_identity() {
        for k in 0..8 {
            for i in 0..=100 {
                let p = f64::from(i) / 100.0;
                let lhs = avg_compute_per_token_halfdepth(p, k).unwrap();
                let rhs = per_token_latency_halfdepth(p, 1.0).unwrap()
                    * avg_compute_per_time_unit_halfdepth(p, k).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
            }
        }
    }

    #[test]
    fn sweep_examples() {
        let rows = tradeoff_sweep(40, 20, None, &[1], &[0.2163]).unwrap();
        assert!(close(rows[0].latency_per_token_norm, 0.89185, 1e-12));
        assert!(close(rows[0].compute_per_time_unit, 1.5606, 1e-4));
        let rows = tradeoff_sweep(40, 20, None, &[5], &[0.7415]).unwrap();
        assert!(close(rows[0].compute_per_time_unit, 4.9730, 1e-4));
        assert!(tradeoff_sweep(40, 20, None, &[1, 3], &[]).unwrap().is_empty());
    }

    #[test]
    fn sweep_ordering_and_rejection() {
        let rows = tradeoff_sweep(40, 20, Some(128), &[3, 1], &[0.1, 0.9]).unwrap();
        let keys: Vec<(u32, f64)> = rows.iter().map(|r| (r.k, r.p_correct)).collect();
        assert_eq!(keys, vec![(3, 0.1), (3, 0.9), (1, 0.1), (1, 0.9)]);
        let exact = expected_latency(&DecodingConfig::new(40, 20, 3, 128).with_p(0.9)).unwrap();
        assert!(close(rows[1].latency_per_token_norm, exact / (40.0 * 128.0), 1e-15));
        assert!(tradeoff_sweep(40, 20, None, &[1], &[0.5, 1.01]).is_err());
        assert!(tradeoff_sweep(40, 19, None, &[1], &[0.5]).is_err());
    }

    #[test]
    fn sweep_limit_matches_halfdepth_forms() {
        let rows = tradeoff_sweep(40, 20, None, &[0, 1, 3, 5], &[0.0, 0.3, 0.7415, 1.0]).unwrap();
        for r in rows {
            assert!(close(r.latency_per_token_norm, per_token_latency_halfdepth(r.p_correct, 1.0).unwrap(), 1e-12));
            assert!(close(r.compute_per_time_unit, avg_compute_per_time_unit_halfdepth(r.p_correct, r.k).unwrap(), 1e-12));
            assert!(close(r.compute_per_token, avg_compute_per_token_halfdepth(r.p_correct, r.k).unwrap(), 1e-12));
        }
    }

    #[test]
    fn csv_header() {
        let csv = sweep_to_csv(&tradeoff_sweep(40, 20, None, &[1], &[0.5]).unwrap());
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,0.5,0.75,1.6666666666666667,1.25");
    }
}
