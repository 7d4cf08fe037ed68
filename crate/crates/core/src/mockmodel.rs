//! A deterministic layered "language model" built from a 64-bit mixer.
//!
//! Each layer maps `(previous hidden, layer index, context digest)` to a new
//! 64-bit hidden value; the layer-0 input at a position is the digest of the
//! whole token prefix, so the hidden state at `(position, layer)` depends only
//! on the seed, the layer and the prefix. Both classifiers score token `v` as
//! `mix(hidden, v)` and rank by score. Running the full pipelined decoder on
//! top of it exercises every step of the real algorithm, hand-off included.
//!
//! The mixer is the SplitMix64 finalizer (Stafford's "Mix13" constants).

use std::thread;

use serde::{Deserialize, Serialize};

use crate::config::{DecodingConfig, MatchSequence};
use crate::error::{domain, Result};
use crate::trace::TraceRecord;

pub type TokenId = u32;

/// Token id reserved for end-of-sequence.
pub const EOS: TokenId = 0;

const PREFIX_SALT: u64 = 0x243f_6a88_85a3_08d3;
const LAYER_SALT: u64 = 0x1319_8a2e_0370_7344;
const SCORE_SALT: u64 = 0xa409_3822_299f_31d0;
const BIAS_SALT: u64 = 0x082e_fa98_ec4e_6c89;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HiddenState(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockModel {
    pub vocab_size: u32,
    pub depth: u32,
    pub seed: u64,
    pub eos_enabled: bool,
    /// Probability that the early classifier ranks with the final-layer
    /// hidden state instead of its own; raises the match rate above `k/V`.
    /// Resolved per position from the seed and the prefix digest.
    #[serde(default)]
    pub bias: f64,
}

impl MockModel {
    pub fn new(vocab_size: u32, depth: u32, seed: u64) -> Result<Self> {
        if vocab_size < 2 {
            return domain("vocab_size must be >= 2");
        }
        if depth == 0 {
            return domain("depth must be >= 1");
        }
        Ok(MockModel {
            vocab_size,
            depth,
            seed,
            eos_enabled: false,
            bias: 0.0,
        })
    }

    pub fn with_eos(mut self, enabled: bool) -> Self {
        self.eos_enabled = enabled;
        self
    }

    pub fn with_bias(mut self, bias: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&bias) {
            return domain(format!("bias must lie in [0, 1], got {bias}"));
        }
        self.bias = bias;
        Ok(self)
    }

    /// Digest of the empty prefix.
    pub fn empty_digest(&self) -> u64 {
        mix64(self.seed ^ PREFIX_SALT)
    }

    /// Digest of `prefix` after appending `token`.
    pub fn extend_digest(&self, digest: u64, token: TokenId) -> u64 {
        mix64(digest ^ mix64(u64::from(token).wrapping_add(PREFIX_SALT)))
    }

    pub fn context_digest(&self, tokens: &[TokenId]) -> u64 {
        tokens
            .iter()
            .fold(self.empty_digest(), |h, &t| self.extend_digest(h, t))
    }

    /// One layer of the model.
    pub fn forward_layer(&self, prev: HiddenState, layer: u32, context_digest: u64) -> HiddenState {
        debug_assert!((1..=self.depth).contains(&layer));
        let layer_key = mix64(self.seed ^ LAYER_SALT ^ u64::from(layer).rotate_left(32));
        HiddenState(mix64(prev.0 ^ layer_key ^ context_digest.rotate_left(17)))
    }

    /// Applies layers `first..=last`; an empty range returns `h` unchanged.
    pub fn forward_range(&self, h: HiddenState, first: u32, last: u32, context_digest: u64) -> HiddenState {
        (first..=last).fold(h, |h, layer| self.forward_layer(h, layer, context_digest))
    }

    /// Hidden state after `layer` layers at the position following `digest`'s prefix.
    pub fn hidden_at(&self, context_digest: u64, layer: u32) -> HiddenState {
        self.forward_range(HiddenState(context_digest), 1, layer, context_digest)
    }

    fn score(&self, hidden: HiddenState, token: TokenId) -> u64 {
        mix64(hidden.0 ^ mix64(u64::from(token) ^ SCORE_SALT ^ self.seed))
    }

    /// The `k` highest-scoring tokens, best first; ties go to the smaller id.
    pub fn early_topk(&self, hidden: HiddenState, k: u32) -> Result<Vec<TokenId>> {
        if k == 0 || k > self.vocab_size {
            return domain(format!("k must lie in 1..={}, got {k}", self.vocab_size));
        }
        let mut ranked: Vec<(u64, TokenId)> = (0..self.vocab_size)
            .map(|v| (self.score(hidden, v), v))
            .collect();
        let by_rank = |a: &(u64, TokenId), b: &(u64, TokenId)| b.0.cmp(&a.0).then(a.1.cmp(&b.1));
        let k = k as usize;
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, by_rank);
            ranked.truncate(k);
        }
        ranked.sort_unstable_by(by_rank);
        Ok(ranked.into_iter().map(|(_, v)| v).collect())
    }

    /// Greedy final-layer prediction.
    pub fn final_token(&self, hidden: HiddenState) -> TokenId {
        (0..self.vocab_size)
            .map(|v| (self.score(hidden, v), v))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, v)| v)
            .expect("vocab_size >= 2")
    }

    /// Early classifier at the position after `context_digest`, fed with the
    /// early-layer hidden state.
    pub fn early_candidates(&self, context_digest: u64, hidden_early: HiddenState, k: u32) -> Result<Vec<TokenId>> {
        let copy_final = self.bias > 0.0 && {
            let u = (mix64(context_digest ^ BIAS_SALT ^ self.seed) >> 11) as f64 / (1u64 << 53) as f64;
            u < self.bias
        };
        if copy_final {
            self.early_topk(self.hidden_at(context_digest, self.depth), k)
        } else {
            self.early_topk(hidden_early, k)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub tokens: Vec<TokenId>,
    /// One bit per generated token except the last.
    pub match_trace: MatchSequence,
    pub main_layer_count: u64,
    pub spec_layer_count: u64,
    /// Early top-k candidates computed while producing each generated token.
    #[serde(default)]
    pub early_candidates: Vec<Vec<TokenId>>,
}

fn stop_on(model: &MockModel, generated: &[TokenId]) -> bool {
    model.eos_enabled && generated.last() == Some(&EOS)
}

/// Plain greedy decoding: a full `d`-layer pass per token.
pub fn decode_sequential(model: &MockModel, prompt: &[TokenId], ell: u32) -> Result<DecodeResult> {
    if ell == 0 {
        return domain("ell must be >= 1");
    }
    let mut digest = model.context_digest(prompt);
    let mut tokens = Vec::with_capacity(ell as usize);
    let mut layers = 0u64;
    while tokens.len() < ell as usize && !stop_on(model, &tokens) {
        let token = model.final_token(model.hidden_at(digest, model.depth));
        layers += u64::from(model.depth);
        tokens.push(token);
        digest = model.extend_digest(digest, token);
    }
    Ok(DecodeResult {
        tokens,
        match_trace: MatchSequence::new(Vec::new()),
        main_layer_count: layers,
        spec_layer_count: 0,
        early_candidates: Vec::new(),
    })
}

/// How the sub-process forwards inside one speculation window are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Serial,
    /// One OS thread per sub-process; the match check joins them all.
    Threaded,
}

/// Pipelined decoding with early top-k speculation.
pub fn decode_ppd(model: &MockModel, prompt: &[TokenId], ell: u32, early_layer: u32, k: u32) -> Result<DecodeResult> {
    decode_ppd_with(model, prompt, ell, early_layer, k, Execution::Serial)
}

pub fn decode_ppd_with(
    model: &MockModel,
    prompt: &[TokenId],
    ell: u32,
    early_layer: u32,
    k: u32,
    execution: Execution,
) -> Result<DecodeResult> {
    let cfg = DecodingConfig::new(model.depth, early_layer, k, ell).validate(true)?;
    if k == 0 || k > model.vocab_size {
        return domain(format!("k must lie in 1..={}, got {k}", model.vocab_size));
    }
    let d = cfg.depth;
    let dbar = cfg.early_layer;
    let saved = cfg.saved_layers();

    let mut digest = model.context_digest(prompt);
    let mut tokens = Vec::with_capacity(ell as usize);
    let mut outcomes = Vec::with_capacity(ell as usize);
    let mut early_candidates = Vec::with_capacity(ell as usize);
    let mut main_layers = 0u64;
    let mut spec_layers = 0u64;
    // layer-(d − d̄) state for the current position, handed over by a sub-process
    let mut handoff: Option<HiddenState> = None;

    while tokens.len() < ell as usize && !stop_on(model, &tokens) {
        let h_early = match handoff.take() {
            Some(h) => {
                main_layers += u64::from(dbar - saved);
                model.forward_range(h, saved + 1, dbar, digest)
            }
            None => {
                main_layers += u64::from(dbar);
                model.forward_range(HiddenState(digest), 1, dbar, digest)
            }
        };
        let candidates = model.early_candidates(digest, h_early, k)?;

        let speculate = |candidate: TokenId| {
            let next = model.extend_digest(digest, candidate);
            model.forward_range(HiddenState(next), 1, saved, next)
        };
        let (h_final, speculative) = match execution {
            Execution::Serial => {
                let h_final = model.forward_range(h_early, dbar + 1, d, digest);
                (h_final, candidates.iter().map(|&c| speculate(c)).collect::<Vec<_>>())
            }
            Execution::Threaded => thread::scope(|s| {
                let handles: Vec<_> = candidates
                    .iter()
                    .map(|&c| s.spawn(move || speculate(c)))
                    .collect();
                let h_final = model.forward_range(h_early, dbar + 1, d, digest);
                let spec = handles
                    .into_iter()
                    .map(|h| h.join().expect("sub-process panicked"))
                    .collect();
                (h_final, spec)
            }),
        };
        main_layers += u64::from(d - dbar);
        spec_layers += u64::from(k) * u64::from(saved);

        let token = model.final_token(h_final);
        let hit = candidates.iter().position(|&c| c == token);
        handoff = hit.map(|i| speculative[i]);
        outcomes.push(hit.is_some());
        early_candidates.push(candidates);
        tokens.push(token);
        digest = model.extend_digest(digest, token);
    }

    // the last speculation has no next token to feed
    outcomes.pop();
    Ok(DecodeResult {
        tokens,
        match_trace: MatchSequence::new(outcomes),
        main_layer_count: main_layers,
        spec_layer_count: spec_layers,
        early_candidates,
    })
}

/// Trace records for every generated position whose match outcome shaped
/// the schedule (positions `1..ℓ_gen`).
pub fn emit_trace(result: &DecodeResult, example_id: &str, layer: Option<u32>) -> Vec<TraceRecord> {
    result
        .match_trace
        .bits()
        .iter()
        .enumerate()
        .map(|(i, _)| TraceRecord {
            example_id: example_id.to_string(),
            position: i as u32 + 1,
            early_topk: result.early_candidates[i].clone(),
            final_token: result.tokens[i],
            layer,
        })
        .collect()
}

/// Committed reference rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRollout {
    pub seed: u64,
    pub prompt: Vec<TokenId>,
    pub d: u32,
    pub d_bar: u32,
    pub k: u32,
    #[serde(rename = "V")]
    pub vocab_size: u32,
    pub tokens: Vec<TokenId>,
    pub match_trace: MatchSequence,
}

impl GoldenRollout {
    pub fn generate(seed: u64, prompt: Vec<TokenId>, d: u32, d_bar: u32, k: u32, vocab_size: u32, ell: u32) -> Result<Self> {
        let model = MockModel::new(vocab_size, d, seed)?;
        let seq = decode_sequential(&model, &prompt, ell)?;
        let ppd = decode_ppd(&model, &prompt, ell, d_bar, k)?;
        Ok(GoldenRollout {
            seed,
            prompt,
            d,
            d_bar,
            k,
            vocab_size,
            tokens: seq.tokens,
            match_trace: ppd.match_trace,
        })
    }
}

/// Parameter space for randomized sequential-vs-pipelined comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessSuite {
    pub instances: u32,
    pub seed: u64,
    pub vocab_sizes: Vec<u32>,
    pub depths: Vec<u32>,
    pub sub_processes: Vec<u32>,
    pub max_ell: u32,
}

impl Default for ExactnessSuite {
    fn default() -> Self {
        ExactnessSuite {
            instances: 1000,
            seed: 0,
            vocab_sizes: vec![4, 16, 64],
            depths: vec![8, 40],
            sub_processes: vec![1, 3, 5],
            max_ell: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub instance: u32,
    pub model: MockModel,
    pub prompt: Vec<TokenId>,
    pub ell: u32,
    pub d_bar: u32,
    pub k: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessSummary {
    pub suite: ExactnessSuite,
    pub passed: u32,
    pub failed: u32,
    pub eos_truncated: u32,
    pub first_failure: Option<Counterexample>,
}

impl ExactnessSuite {
    /// Draws `instances` random models and prompts, decodes each both ways
    /// and checks token equality plus the main-process layer identity.
    pub fn run(&self) -> Result<ExactnessSummary> {
        use rand::seq::SliceRandom;
        use rand::Rng;

        if self.instances == 0 {
            return domain("instances must be >= 1");
        }
        if self.vocab_sizes.iter().any(|&v| v < 2) || self.depths.contains(&0) || self.max_ell == 0 {
            return domain("vocab sizes must be >= 2, depths and max_ell >= 1");
        }
        if self.sub_processes.contains(&0) {
            return domain("sub-process counts must be >= 1");
        }
        let mut summary = ExactnessSummary {
            suite: self.clone(),
            passed: 0,
            failed: 0,
            eos_truncated: 0,
            first_failure: None,
        };
        for i in 0..self.instances {
            let mut rng = crate::stochastic::trial_rng(self.seed, u64::from(i));
            let v = *self.vocab_sizes.choose(&mut rng).ok_or_else(|| crate::PpdError::Domain("empty vocab list".into()))?;
            let d = *self.depths.choose(&mut rng).ok_or_else(|| crate::PpdError::Domain("empty depth list".into()))?;
            let ks: Vec<u32> = self.sub_processes.iter().copied().filter(|&k| k <= v).collect();
            let Some(&k) = ks.choose(&mut rng) else {
                return domain(format!("no sub-process count fits vocab size {v}"));
            };
            let dbar = rng.gen_range(d.div_ceil(2)..=d);
            let ell = rng.gen_range(1..=self.max_ell);
            let bias = if rng.gen_bool(0.5) { rng.gen::<f64>() } else { 0.0 };
            let model = MockModel::new(v, d, rng.gen())?
                .with_eos(rng.gen_bool(0.5))
                .with_bias(bias)?;
            let prompt: Vec<TokenId> = (0..rng.gen_range(0..6)).map(|_| rng.gen_range(0..v)).collect();

            let seq = decode_sequential(&model, &prompt, ell)?;
            let ppd = decode_ppd(&model, &prompt, ell, dbar, k)?;
            let generated = ppd.tokens.len() as u64;
            let runs = ppd.match_trace.failures() as u64 + 1;
            let expected_main = u64::from(dbar) * generated + u64::from(d - dbar) * runs;
            let reason = if seq.tokens != ppd.tokens {
                Some(format!("tokens differ: sequential {:?}, pipelined {:?}", seq.tokens, ppd.tokens))
            } else if ppd.main_layer_count != expected_main {
                Some(format!("main layers {} != {expected_main}", ppd.main_layer_count))
            } else {
                None
            };
            match reason {
                None => summary.passed += 1,
                Some(reason) => {
                    summary.failed += 1;
                    summary.first_failure.get_or_insert(Counterexample {
                        instance: i,
                        model,
                        prompt,
                        ell,
                        d_bar: dbar,
                        k,
                        reason,
                    });
                }
            }
            if generated < u64::from(ell) {
                summary.eos_truncated += 1;
            }
        }
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn model(v: u32, d: u32, seed: u64) -> MockModel {
        MockModel::new(v, d, seed).unwrap()
    }

    #[test]
    fn mixer_reference_values() {
        // SplitMix64 outputs for seed 0: mix(0x9e3779b97f4a7c15), mix(2·golden)
        assert_eq!(mix64(0x9e37_79b9_7f4a_7c15), 0xe220_a839_7b1d_cdaf);
        assert_eq!(mix64(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(2)), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn forward_layer_is_deterministic_and_layer_sensitive() {
        let m = model(16, 8, 1);
        let a = m.forward_layer(HiddenState(0), 1, 0);
        assert_eq!(a, m.forward_layer(HiddenState(0), 1, 0));
        assert_ne!(a, m.forward_layer(HiddenState(0), 2, 0));

        let m = model(16, 64, 1);
        let mut seen = HashSet::new();
        let mut probe = 12345u64;
        for _ in 0..10_000 {
            probe = mix64(probe);
            let layer = (probe % 64) as u32 + 1;
            let out = m.forward_layer(HiddenState(probe), layer, probe.rotate_left(7));
            assert!(seen.insert(out), "collision");
        }
    }

    #[test]
    fn chained_layers_match_hidden_at() {
        let m = model(16, 12, 5);
        let digest = m.context_digest(&[3, 1, 4]);
        let mut h = HiddenState(digest);
        for layer in 1..=12 {
            h = m.forward_layer(h, layer, digest);
        }
        assert_eq!(h, m.hidden_at(digest, 12));
        assert_eq!(m.final_token(h), m.final_token(m.hidden_at(digest, 12)));
    }

    #[test]
    fn handoff_reproduces_full_forward() {
        let m = model(64, 40, 9);
        for saved in [1, 10, 20] {
            let digest = m.context_digest(&[7, 8, 9, 10]);
            let handed = m.hidden_at(digest, saved);
            let resumed = m.forward_range(handed, saved + 1, 40, digest);
            assert_eq!(resumed, m.hidden_at(digest, 40));
        }
    }

    #[test]
    fn topk_properties() {
        let m = model(16, 4, 2);
        let h = HiddenState(0xdead_beef);
        let mut all = m.early_topk(h, 16).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        let top1 = m.early_topk(h, 1).unwrap();
        let top2 = m.early_topk(h, 2).unwrap();
        assert_eq!(top1[..], top2[..1]);
        assert_eq!(m.early_topk(h, 5).unwrap()[..], m.early_topk(h, 16).unwrap()[..5]);
        assert_eq!(top1[0], m.final_token(h));
        assert!(m.early_topk(h, 17).is_err());
        assert!(m.early_topk(h, 0).is_err());
    }

    #[test]
    fn top1_is_uniform() {
        let m = model(16, 4, 3);
        let n = 64_000u64;
        let mut counts = [0u64; 16];
        for i in 0..n {
            counts[m.final_token(HiddenState(mix64(i))) as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let sigma = (n as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma + 1.0, "{counts:?}");
        }
    }

    #[test]
    fn sequential_single_token() {
        let m = model(16, 8, 4);
        let r = decode_sequential(&m, &[1, 2], 1).unwrap();
        assert_eq!(r.tokens.len(), 1);
        assert_eq!(r.main_layer_count, 8);
        assert!(decode_sequential(&m, &[1], 0).is_err());
    }

    #[test]
    fn sequential_eos_stops_early() {
        // first seed in 0..1000 whose first greedy token is EOS (scanned with
        // the brute-force decoder below)
        let found = (0..1000u64)
            .find(|&s| {
                let m = model(16, 8, s);
                let digest = m.context_digest(&[5]);
                m.final_token(m.hidden_at(digest, 8)) == EOS
            })
            .expect("some seed starts with EOS");
        assert_eq!(found, EOS_FIRST_SEED);
        let m = model(16, 8, EOS_FIRST_SEED).with_eos(true);
        let r = decode_sequential(&m, &[5], 20).unwrap();
        assert_eq!(r.tokens, vec![EOS]);
        let r = decode_sequential(&m.with_eos(false), &[5], 20).unwrap();
        assert_eq!(r.tokens.len(), 20);
    }

    const EOS_FIRST_SEED: u64 = 40;

    #[test]
    fn prompt_order_matters() {
        let m = model(64, 8, 11);
        let mut differing = 0;
        for i in 0..100u64 {
            let a: Vec<TokenId> = (0..4).map(|j| (mix64(i * 8 + j) % 64) as u32).collect();
            let mut b = a.clone();
            b.reverse();
            if a == b {
                continue;
            }
            let ra = decode_sequential(&m, &a, 8).unwrap();
            let rb = decode_sequential(&m, &b, 8).unwrap();
            if ra.tokens != rb.tokens {
                differing += 1;
            }
        }
        assert!(differing >= 95, "{differing}");
    }

    #[test]
    fn ppd_matches_sequential_small_sweep() {
        for seed in 0..50u64 {
            for &(v, d, dbar, k) in &[(4, 8, 4, 1), (16, 8, 6, 3), (64, 40, 20, 5), (16, 40, 40, 3)] {
                for eos in [false, true] {
                    let m = model(v, d, seed).with_eos(eos);
                    let prompt = [(seed % v as u64) as u32, 1];
                    let seq = decode_sequential(&m, &prompt, 24).unwrap();
                    let ppd = decode_ppd(&m, &prompt, 24, dbar, k).unwrap();
                    assert_eq!(seq.tokens, ppd.tokens);
                    let ell = ppd.tokens.len() as u64;
                    let n = ppd.match_trace.failures() as u64 + 1;
                    assert_eq!(ppd.main_layer_count, u64::from(dbar) * ell + u64::from(d - dbar) * n);
                    assert_eq!(ppd.spec_layer_count, u64::from(k) * u64::from(d - dbar) * ell);
                    assert_eq!(ppd.match_trace.tokens() as u64, ell);
                }
            }
        }
    }

    #[test]
    fn exhaustive_speculation_always_matches() {
        let m = model(8, 10, 3);
        let r = decode_ppd(&m, &[1], 16, 6, 8).unwrap();
        assert!(r.match_trace.bits().iter().all(|&b| b));
        assert_eq!(r.main_layer_count, 6 * 16 + 4);
    }

    #[test]
    fn full_depth_early_layer_saves_nothing() {
        let m = model(4, 10, 3);
        let r = decode_ppd(&m, &[1], 16, 10, 2).unwrap();
        assert_eq!(r.main_layer_count, 160);
        assert_eq!(r.spec_layer_count, 0);
    }

    #[test]
    fn ppd_rejects_bad_regime() {
        let m = model(16, 40, 3);
        assert!(decode_ppd(&m, &[1], 8, 19, 3).is_err());
        assert!(decode_ppd(&m, &[1], 8, 20, 0).is_err());
        assert!(decode_ppd(&m, &[1], 8, 20, 17).is_err());
    }

    #[test]
    fn threaded_execution_is_identical() {
        for seed in 0..20 {
            let m = model(16, 12, seed).with_bias(0.5).unwrap();
            let a = decode_ppd_with(&m, &[2, 3], 20, 7, 3, Execution::Serial).unwrap();
            let b = decode_ppd_with(&m, &[2, 3], 20, 7, 3, Execution::Threaded).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bias_raises_match_rate() {
        let rate = |bias: f64| {
            let mut hits = 0usize;
            let mut total = 0usize;
            for seed in 0..40 {
                let m = model(16, 8, seed).with_bias(bias).unwrap();
                let r = decode_ppd(&m, &[1], 101, 4, 1).unwrap();
                hits += r.match_trace.len() - r.match_trace.failures();
                total += r.match_trace.len();
            }
            hits as f64 / total as f64
        };
        let (low, high) = (rate(0.0), rate(0.9));
        assert!(low < 0.15, "{low}");
        assert!(high > 0.85, "{high}");
        assert!(model(4, 4, 0).with_bias(1.5).is_err());
    }

    #[test]
    fn emitted_trace_reproduces_match_bits() {
        let m = model(16, 8, 21).with_bias(0.4).unwrap();
        let r = decode_ppd(&m, &[9], 64, 5, 3).unwrap();
        let records = emit_trace(&r, "ex0", Some(5));
        assert_eq!(records.len(), r.match_trace.len());
        let bits: Vec<bool> = records.iter().map(|rec| rec.early_topk.contains(&rec.final_token)).collect();
        assert_eq!(bits, r.match_trace.bits());
        assert!(records.iter().enumerate().all(|(i, rec)| rec.position == i as u32 + 1));
    }

    #[test]
    fn exactness_suite_passes_and_is_reproducible() {
        let suite = ExactnessSuite { instances: 200, seed: 5, ..Default::default() };
        let a = suite.run().unwrap();
        assert_eq!((a.passed, a.failed), (200, 0));
        assert!(a.first_failure.is_none());
        assert!(a.eos_truncated > 0);
        assert_eq!(a, suite.run().unwrap());
        assert!(ExactnessSuite { instances: 0, ..Default::default() }.run().is_err());
        assert!(ExactnessSuite { vocab_sizes: vec![2], sub_processes: vec![3], ..Default::default() }.run().is_err());
    }

    #[test]
    fn emitted_trace_for_single_token_is_empty() {
        let m = model(16, 8, 21);
        let r = decode_ppd(&m, &[9], 1, 5, 3).unwrap();
        assert!(emit_trace(&r, "x", None).is_empty());
    }

    #[test]
    fn unbiased_match_rate_is_k_over_v() {
        let mut hits = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let m = model(16, 8, seed);
            let r = decode_ppd(&m, &[1], 201, 4, 1).unwrap();
            let recs = emit_trace(&r, "x", None);
            hits += recs.iter().filter(|rec| rec.early_topk.contains(&rec.final_token)).count();
            total += recs.len();
        }
        let p = 1.0 / 16.0;
        let p_hat = hits as f64 / total as f64;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        assert!((p_hat - p).abs() <= 4.0 * sigma, "{p_hat} over {total}");
    }
}
