//! Domain types shared by every module: the decoding configuration, the
//! per-token match bits, their decomposition into runs, and the
//! latency/compute report.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Parameters of one pipelined decoding setup.
///
/// `depth` is the number of layers (one time unit each), `early_layer` the
/// layer whose hidden state feeds the early top-k classifier, `sub_processes`
/// the number of speculative workers (`sub_processes + 1` compute units in
/// total) and `tokens` the number of tokens to generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    #[serde(rename = "d")]
    pub depth: u32,
    #[serde(rename = "d_bar")]
    pub early_layer: u32,
    #[serde(rename = "k")]
    pub sub_processes: u32,
    #[serde(rename = "ell")]
    pub tokens: u32,
    #[serde(rename = "p_correct", default, skip_serializing_if = "Option::is_none")]
    pub p_correct: Option<f64>,
}

impl DecodingConfig {
    pub fn new(depth: u32, early_layer: u32, sub_processes: u32, tokens: u32) -> Self {
        DecodingConfig {
            depth,
            early_layer,
            sub_processes,
            tokens,
            p_correct: None,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p_correct = Some(p);
        self
    }

    /// Checks every invariant. With `require_theorem_regime` the early layer
    /// must additionally sit in the upper half of the network (`2·d̄ ≥ d`).
    pub fn validate(self, require_theorem_regime: bool) -> Result<Self> {
        if self.depth == 0 {
            return domain("d must be >= 1");
        }
        if self.early_layer == 0 {
            return domain("d_bar must be >= 1");
        }
        if self.early_layer > self.depth {
            return domain(format!(
                "d_bar > d ({} > {})",
                self.early_layer, self.depth
            ));
        }
        if self.tokens == 0 {
            return domain("ell must be >= 1");
        }
        if let Some(p) = self.p_correct {
            check_probability(p)?;
        }
        if require_theorem_regime && 2 * u64::from(self.early_layer) < u64::from(self.depth) {
            return domain(format!(
                "d_bar < d/2 ({} < {}/2): outside the theorem regime",
                self.early_layer, self.depth
            ));
        }
        Ok(self)
    }

    /// `d − d̄`: layers a sub-process pre-computes and a match saves.
    pub fn saved_layers(&self) -> u32 {
        self.depth - self.early_layer
    }

    pub fn require_p(&self) -> Result<f64> {
        match self.p_correct {
            Some(p) => Ok(p),
            None => domain("p_correct is required"),
        }
    }
}

/// Validates a probability in the closed interval [0, 1].
pub fn check_probability(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("p_correct must lie in [0, 1], got {p}"));
    }
    Ok(p)
}

/// Early-prediction outcomes for a generation of `tokens` tokens.
///
/// Bit `t` is true iff the early top-k prediction made while producing token
/// `t + 1` contained the final token. Only the first `tokens − 1` outcomes
/// influence the schedule, so that is the stored length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchSequence {
    bits: Vec<bool>,
}

impl MatchSequence {
    pub fn new(bits: Vec<bool>) -> Self {
        MatchSequence { bits }
    }

    /// Parses a string of `T`/`F` characters (case-insensitive; `1`/`0`
    /// also accepted).
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                'T' | 't' | '1' => Ok(true),
                'F' | 'f' | '0' => Ok(false),
                other => domain(format!("invalid match character {other:?}")),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of tokens this sequence describes.
    pub fn tokens(&self) -> usize {
        self.bits.len() + 1
    }

    pub fn failures(&self) -> usize {
        self.bits.iter().filter(|b| !**b).count()
    }

    pub fn check_tokens(&self, tokens: u32) -> Result<()> {
        if self.tokens() != tokens as usize {
            return domain(format!(
                "match sequence has {} bits, expected ell - 1 = {}",
                self.bits.len(),
                tokens.saturating_sub(1)
            ));
        }
        Ok(())
    }

    /// Splits the generation into runs: a run ends after every failed
    /// prediction, and the final run ends at the last token.
    pub fn decompose(&self) -> RunDecomposition {
        let mut runs = Vec::with_capacity(self.failures() + 1);
        let mut current = 1u32;
        for &matched in &self.bits {
            if matched {
                current += 1;
            } else {
                runs.push(current);
                current = 1;
            }
        }
        runs.push(current);
        RunDecomposition { run_lengths: runs }
    }

    pub fn to_tf_string(&self) -> String {
        self.bits.iter().map(|&b| if b { 'T' } else { 'F' }).collect()
    }
}

/// Lengths `X_1..X_N` of the maximal runs of a generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunDecomposition {
    run_lengths: Vec<u32>,
}

impl RunDecomposition {
    pub fn from_lengths(run_lengths: Vec<u32>) -> Result<Self> {
        if run_lengths.is_empty() {
            return domain("a generation has at least one run");
        }
        if run_lengths.contains(&0) {
            return domain("run lengths must be >= 1");
        }
        Ok(RunDecomposition { run_lengths })
    }

    pub fn run_lengths(&self) -> &[u32] {
        &self.run_lengths
    }

    pub fn n_runs(&self) -> usize {
        self.run_lengths.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.run_lengths.iter().map(|&x| u64::from(x)).sum()
    }

    /// Inverse of [`MatchSequence::decompose`].
    pub fn to_matches(&self) -> MatchSequence {
        let mut bits = Vec::with_capacity(self.total_tokens() as usize);
        for (i, &x) in self.run_lengths.iter().enumerate() {
            bits.extend(std::iter::repeat_n(true, x as usize - 1));
            if i + 1 < self.run_lengths.len() {
                bits.push(false);
            }
        }
        MatchSequence::new(bits)
    }
}

/// Totals and averages for one generation (or their expectations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyComputeReport {
    /// Time units from the first layer of token 1 to the last layer of token ℓ.
    pub total_latency: f64,
    /// Busy compute-unit·time-units, including discarded speculation.
    pub total_compute: f64,
    pub per_token_latency: f64,
    pub avg_compute_per_time_unit: f64,
    pub avg_compute_per_token: f64,
}

impl LatencyComputeReport {
    pub fn from_totals(total_latency: f64, total_compute: f64, tokens: u32) -> Self {
        let ell = f64::from(tokens);
        LatencyComputeReport {
            total_latency,
            total_compute,
            per_token_latency: total_latency / ell,
            avg_compute_per_time_unit: total_compute / total_latency,
            avg_compute_per_token: total_compute / ell,
        }
    }
}
