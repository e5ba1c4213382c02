use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;
use triehh::protocol::{run, selectors, MultiWord, RunOptions, SingleWord};
use triehh::{run_multi_word, run_single_word, ProtocolParams, User, UserDataset};

fn params(threshold: u32, batch_size: u64, max_length: u32) -> ProtocolParams {
    ProtocolParams {
        threshold,
        batch_size,
        max_length,
    }
}

fn star_sun_moon() -> UserDataset {
    let mut words = vec!["star$"; 3];
    words.extend(["sun$"; 4]);
    words.extend(["moon$"; 4]);
    words.extend(["cat$", "dog$", "fish$", "bird$", "tree$", "lamp$", "rock$", "wind$", "hill$"]);
    UserDataset::from_words(&words, 10).unwrap()
}

#[test]
fn heavy_words_beat_fillers() {
    let d = star_sun_moon();
    let mut found: BTreeMap<String, usize> = BTreeMap::new();
    for seed in 0..1000 {
        let r = run_single_word(&d, params(2, 10, 10), seed).unwrap();
        for w in r.words {
            *found.entry(w).or_insert(0) += 1;
        }
    }
    let sun = found.get("sun$").copied().unwrap_or(0);
    let moon = found.get("moon$").copied().unwrap_or(0);
    let best_filler = found
        .iter()
        .filter(|(w, _)| !["star$", "sun$", "moon$"].contains(&w.as_str()))
        .map(|(_, &c)| c)
        .max()
        .unwrap_or(0);
    assert_eq!(best_filler, 0, "{found:?}");
    assert!(sun > best_filler && moon > best_filler, "{found:?}");
    // With 4 holders out of 20 and 10 sampled, each round passes with
    // P(X >= 2) = 1 - [C(16,10) + 4 C(16,9)] / C(20,10) = 0.9567, so moon
    // (five rounds, no shared prefix) is found with probability about 0.80.
    let p: f64 = 1.0 - (8008.0 + 4.0 * 11440.0) / 184_756.0;
    let expected = p.powi(5);
    let sigma = (expected * (1.0 - expected) / 1000.0).sqrt();
    let moon_rate = moon as f64 / 1000.0;
    assert!((moon_rate - expected).abs() < 4.0 * sigma, "{moon_rate} vs {expected}");
}

#[test]
fn one_sequence_per_user_makes_modes_agree() {
    let users: Vec<User> = (0..60)
        .map(|i| {
            let word = ["ab$", "ac$", "b$", "abc$"][i % 4];
            User::new(format!("u{i}"), vec![(word.to_string(), 1 + (i as u64 % 5))])
        })
        .collect();
    let d = UserDataset::new(users, 6).unwrap();
    let p = params(4, 20, 6);
    let mut single = BTreeMap::new();
    let mut multi = BTreeMap::new();
    for seed in 0..300 {
        let a = run_single_word(&d, p, seed).unwrap();
        let b = run_multi_word(&d, p, seed).unwrap();
        assert_eq!(a.words, b.words);
        for w in a.words {
            *single.entry(w).or_insert(0) += 1;
        }
        for w in b.words {
            *multi.entry(w).or_insert(0) += 1;
        }
    }
    assert_eq!(single, multi);
}

#[test]
fn multi_word_marginal_matches_flattened_population() {
    // Each user holds {x$: 1, y$: 1}; a round's vote count for "x" is
    // Binomial(m, 1/2), so with m = 40 and theta = 20 the first round
    // passes with probability P(Bin(40, 1/2) >= 20) = 0.56269.
    let users: Vec<User> = (0..100)
        .map(|i| User::new(format!("u{i}"), vec![("x$".to_string(), 1u64), ("y$".to_string(), 1)]))
        .collect();
    let d = UserDataset::new(users, 3).unwrap();
    let runs = 4000;
    let hits = (0..runs)
        .filter(|&s| {
            let r = run_multi_word(&d, params(20, 40, 3), s).unwrap();
            r.trie.contains("x")
        })
        .count();
    let expected = 0.562_685_343_8;
    let rate = hits as f64 / runs as f64;
    let sigma = (expected * (1.0 - expected) / runs as f64).sqrt();
    assert!((rate - expected).abs() < 4.0 * sigma, "{rate}");
}

fn dataset() -> impl Strategy<Value = UserDataset> {
    let user = prop::collection::vec(("[ab]{1,3}".prop_map(|b| format!("{b}$")), 1u64..4), 1..4);
    prop::collection::vec(user, 2..40).prop_map(|users| {
        let users = users
            .into_iter()
            .enumerate()
            .map(|(i, seqs)| User::new(format!("u{i}"), seqs))
            .collect();
        UserDataset::new(users, 5).unwrap()
    })
}

fn single_dataset() -> impl Strategy<Value = UserDataset> {
    prop::collection::vec("[ab]{1,3}".prop_map(|b| format!("{b}$")), 2..40)
        .prop_map(|words| UserDataset::from_words(&words, 5).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn run_invariants(d in dataset(), theta in 1u32..4, frac in 0.1f64..1.0, seed in any::<u64>()) {
        let n = d.len();
        let m = ((n as f64 * frac).ceil() as u64).clamp(1, n as u64);
        let p = params(theta, m, 5);
        let options = RunOptions { verbose: true, ..RunOptions::default() };
        let report = run(&d, p, seed, &MultiWord, &options).unwrap();

        // No fabrication.
        let held: HashSet<String> = d.vocabulary().into_iter().collect();
        for w in &report.words {
            prop_assert!(held.contains(w));
        }
        // Threshold respected.
        prop_assert!(report.anonymity_violations().is_empty());
        // Termination and the round cap.
        prop_assert!(report.rounds <= 6);
        prop_assert_eq!(report.rounds, report.log.len());
        if report.rounds < 6 {
            prop_assert!(report.log.last().unwrap().added.is_empty());
        }
        // Participation: m distinct valid users per round.
        let mut events = 0;
        for round in &report.log {
            let sampled = round.sampled_users.as_ref().unwrap();
            let distinct: BTreeSet<usize> = sampled.iter().copied().collect();
            prop_assert_eq!(sampled.len() as u64, m);
            prop_assert_eq!(distinct.len(), sampled.len());
            prop_assert!(sampled.iter().all(|&u| u < n));
            events += sampled.len();
        }
        prop_assert!(events as u64 <= 6 * m);
        // Determinism.
        let again = run(&d, p, seed, &MultiWord, &options).unwrap();
        prop_assert_eq!(report.to_json(), again.to_json());
    }

    #[test]
    fn higher_threshold_finds_a_subset(d in single_dataset(), theta in 1u32..4, seed in any::<u64>()) {
        let m = (d.len() as u64 / 2).max(1);
        let low = run_single_word(&d, params(theta, m, 5), seed).unwrap();
        let high = run_single_word(&d, params(theta + 1, m, 5), seed).unwrap();
        let lo: BTreeSet<String> = low.trie.extract_prefixes().into_iter().collect();
        let hi: BTreeSet<String> = high.trie.extract_prefixes().into_iter().collect();
        prop_assert!(hi.is_subset(&lo));
        prop_assert!(high.rounds <= low.rounds);
    }
}

#[test]
fn selectors_resolve_by_name() {
    let reg = selectors();
    assert_eq!(reg.resolve("single").unwrap().name(), "single");
    assert_eq!(reg.resolve("multi").unwrap().name(), "multi");
    assert!(reg.resolve("pairs").is_err());
    let d = star_sun_moon();
    let a = run(&d, params(2, 10, 10), 5, &SingleWord, &RunOptions::default()).unwrap();
    let b = run(&d, params(2, 10, 10), 5, reg.resolve("single").unwrap().as_ref(), &RunOptions::default()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}
