//! Committed greedy rollouts of the mock model. Regenerate with
//! `PPD_BLESS=1 cargo test -p ppd-core --test golden`.

use std::path::PathBuf;

use ppd::mockmodel::{decode_ppd, decode_sequential, GoldenRollout, MockModel};

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_rollouts.json")
}

fn generate() -> Vec<GoldenRollout> {
    vec![
        GoldenRollout::generate(7, vec![3, 1, 4, 1, 5], 40, 20, 3, 16, 48).unwrap(),
        GoldenRollout::generate(2024, vec![9], 8, 6, 1, 4, 32).unwrap(),
        GoldenRollout::generate(99, vec![], 40, 30, 5, 64, 64).unwrap(),
    ]
}

#[test]
fn golden_rollouts_are_stable() {
    let fresh = generate();
    if std::env::var_os("PPD_BLESS").is_some() {
        let json = serde_json::to_string_pretty(&fresh).unwrap();
        std::fs::write(fixture_path(), json + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(fixture_path()).expect("fixture present");
    let committed: Vec<GoldenRollout> = serde_json::from_str(&text).unwrap();
    assert_eq!(committed, fresh);
}

#[test]
fn golden_tokens_replay_through_both_decoders() {
    let text = std::fs::read_to_string(fixture_path()).expect("fixture present");
    let committed: Vec<GoldenRollout> = serde_json::from_str(&text).unwrap();
    for g in committed {
        let model = MockModel::new(g.vocab_size, g.d, g.seed).unwrap();
        let ell = g.tokens.len() as u32;
        assert_eq!(decode_sequential(&model, &g.prompt, ell).unwrap().tokens, g.tokens);
        let ppd = decode_ppd(&model, &g.prompt, ell, g.d_bar, g.k).unwrap();
        assert_eq!(ppd.tokens, g.tokens);
        assert_eq!(ppd.match_trace, g.match_trace);
    }
}
