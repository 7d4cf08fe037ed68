//! Monte Carlo sampling of independent per-token matches.
//!
//! Random streams come from ChaCha8 (`rand_chacha::ChaCha8Rng`): the trial
//! seed selects the key and trial `i` uses ChaCha stream `i`, so every trial
//! owns an independent, counter-addressed stream. Parallel and serial
//! execution therefore produce bit-identical results.

use rand::distributions::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_probability, DecodingConfig, LatencyComputeReport, MatchSequence, RunDecomposition};
use crate::error::{domain, Result};

/// Name of the generator behind [`trial_rng`].
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), key from seed, stream = trial index";

/// Independent generator for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `ell − 1` independent Bernoulli(`p_correct`) match bits.
pub fn sample_match_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    p_correct: f64,
    ell: u32,
) -> Result<MatchSequence> {
    check_probability(p_correct)?;
    if ell == 0 {
        return domain("ell must be >= 1");
    }
    let coin = Bernoulli::new(p_correct).expect("probability already validated");
    let bits = (1..ell).map(|_| coin.sample(rng)).collect();
    Ok(MatchSequence::new(bits))
}

/// Cost of a realized generation, summed run by run.
///
/// A run of length `X` takes `d + (X − 1)d̄` time units and keeps
/// `(d̄ + k(d − d̄))X + (d − d̄)` compute-unit·time-units busy.
pub fn cost_of_runs(config: &DecodingConfig, runs: &RunDecomposition) -> Result<LatencyComputeReport> {
    let cfg = config.validate(true)?;
    if runs.total_tokens() != u64::from(cfg.tokens) {
        return domain(format!(
            "runs cover {} tokens, config has ell = {}",
            runs.total_tokens(),
            cfg.tokens
        ));
    }
    let (latency, compute) = run_totals(&cfg, runs);
    Ok(LatencyComputeReport::from_totals(latency as f64, compute as f64, cfg.tokens))
}

fn run_totals(cfg: &DecodingConfig, runs: &RunDecomposition) -> (u64, u64) {
    let d = u64::from(cfg.depth);
    let dbar = u64::from(cfg.early_layer);
    let k = u64::from(cfg.sub_processes);
    let saved = d - dbar;
    runs.run_lengths().iter().fold((0, 0), |(lat, comp), &x| {
        let x = u64::from(x);
        (lat + d + (x - 1) * dbar, comp + (dbar + k * saved) * x + saved)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub config: DecodingConfig,
    pub trials: u64,
    pub seed: u64,
    pub mean_latency: f64,
    pub mean_compute: f64,
    pub mean_n_runs: f64,
    pub stderr_latency: f64,
    pub stderr_compute: f64,
    pub stderr_n_runs: f64,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    latency: u64,
    compute: u64,
    n_runs: u64,
}

fn run_trial(cfg: &DecodingConfig, p: f64, seed: u64, index: u64) -> TrialOutcome {
    let mut rng = trial_rng(seed, index);
    let matches = sample_match_sequence(&mut rng, p, cfg.tokens).expect("validated");
    let runs = matches.decompose();
    let (latency, compute) = run_totals(cfg, &runs);
    TrialOutcome {
        latency,
        compute,
        n_runs: runs.n_runs() as u64,
    }
}

/// Runs `trials` seeded simulations of sample → decompose → cost.
///
/// Trials execute in parallel with the `parallel` feature; results are
/// aggregated in trial-index order either way.
pub fn monte_carlo(config: &DecodingConfig, trials: u64, seed: u64) -> Result<MonteCarloSummary> {
    let cfg = config.validate(true)?;
    let p = cfg.require_p()?;
    if trials == 0 {
        return domain("trials must be >= 1");
    }
    #[cfg(feature = "parallel")]
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(&cfg, p, seed, i))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<TrialOutcome> = (0..trials).map(|i| run_trial(&cfg, p, seed, i)).collect();

    let (mean_latency, stderr_latency) = mean_stderr(outcomes.iter().map(|o| o.latency as f64));
    let (mean_compute, stderr_compute) = mean_stderr(outcomes.iter().map(|o| o.compute as f64));
    let (mean_n_runs, stderr_n_runs) = mean_stderr(outcomes.iter().map(|o| o.n_runs as f64));
    Ok(MonteCarloSummary {
        config: cfg,
        trials,
        seed,
        mean_latency,
        mean_compute,
        mean_n_runs,
        stderr_latency,
        stderr_compute,
        stderr_n_runs,
    })
}

/// Mean and standard error (unbiased variance) in a fixed summation order.
fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
