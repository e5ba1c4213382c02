//! Synthetic populations drawn from word-frequency tables.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::EOS;
use crate::dataset::{User, UserDataset};
use crate::error::{Error, Result};

const SENTIMENT140_TOP100: &str = include_str!("../fixtures/sentiment140_top100.json");
const OOV_TOP100: &str = include_str!("../fixtures/oov_top100.json");

/// Words with their population frequencies. Mass left over below 1 goes to
/// filler words that each occur exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    entries: Vec<(String, f64)>,
}

impl FrequencyTable {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for (w, f) in &entries {
            if w.is_empty() || w.contains(EOS) || w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("invalid word {w:?} in frequency table")));
            }
            if !f.is_finite() || *f < 0.0 {
                return Err(Error::InvalidInput(format!("invalid frequency {f} for {w:?}")));
            }
            if !seen.insert(w.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate word {w:?}")));
            }
            total += f;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "frequencies sum to {total}, more than 1"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, f)| f).sum()
    }

    pub fn frequency(&self, word: &str) -> Option<f64> {
        self.entries.iter().find(|(w, _)| w == word).map(|(_, f)| *f)
    }

    /// Zipf law with exponent `s` over `vocab` generated lowercase words.
    pub fn zipf(s: f64, vocab: usize, seed: u64) -> Result<Self> {
        if vocab == 0 || s.is_nan() || s <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "zipf needs s > 0 and a non-empty vocabulary (s = {s}, vocab = {vocab})"
            )));
        }
        let norm: f64 = (1..=vocab).map(|k| (k as f64).powf(-s)).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used = HashSet::new();
        let entries = (1..=vocab)
            .map(|k| {
                let word = loop {
                    let len = rng.gen_range(3..=8);
                    let w = random_word(&mut rng, len);
                    if used.insert(w.clone()) {
                        break w;
                    }
                };
                (word, (k as f64).powf(-s) / norm)
            })
            .collect();
        Self::new(entries)
    }
}

/// Word-frequency tables bundled with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Top 100 words of the Sentiment140 tweet corpus.
    Sentiment140Top100,
    /// Top 100 out-of-vocabulary words of the same corpus.
    OovTop100,
}

impl Fixture {
    pub const ALL: [Fixture; 2] = [Fixture::Sentiment140Top100, Fixture::OovTop100];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Sentiment140Top100 => "sentiment140-top100",
            Fixture::OovTop100 => "oov-top100",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "fixture",
                name: name.to_owned(),
                available: Self::ALL.map(Fixture::name).join(", "),
            })
    }

    pub fn table(self) -> FrequencyTable {
        let raw = match self {
            Fixture::Sentiment140Top100 => SENTIMENT140_TOP100,
            Fixture::OovTop100 => OOV_TOP100,
        };
        let entries: Vec<(String, f64)> =
            serde_json::from_str(raw).expect("bundled fixture is valid JSON");
        FrequencyTable::new(entries).expect("bundled fixture is a valid table")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub users: usize,
    pub words_per_user: usize,
    /// Maximum sequence length including EOS; longer words are truncated.
    pub max_length: u32,
    pub seed: u64,
}

fn random_word(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| char::from(b'a' + rng.gen_range(0..26u8))).collect()
}

fn to_sequence(word: &str, max_length: u32) -> String {
    let mut s: String = word.chars().take(max_length as usize - 1).collect();
    s.push(EOS);
    s
}

/// Draws `words_per_user` words i.i.d. from `table` for each user.
pub fn generate_synthetic(table: &FrequencyTable, config: &SyntheticConfig) -> Result<UserDataset> {
    if config.users == 0 {
        return Err(Error::InvalidInput("number of users must be at least 1".into()));
    }
    if config.words_per_user == 0 {
        return Err(Error::InvalidInput("words per user must be at least 1".into()));
    }
    if config.max_length < 2 {
        return Err(Error::InvalidInput(format!(
            "max length must be at least 2, got {}",
            config.max_length
        )));
    }
    let sequences: Vec<String> = table
        .entries
        .iter()
        .map(|(w, _)| to_sequence(w, config.max_length))
        .collect();
    let cumulative: Vec<f64> = table
        .entries
        .iter()
        .scan(0.0, |acc, (_, f)| {
            *acc += f;
            Some(*acc)
        })
        .collect();
    let mut used: HashSet<String> = sequences.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let filler_len = (config.max_length as usize - 1).clamp(1, 8);

    let mut users = Vec::with_capacity(config.users);
    for i in 0..config.users {
        let mut held = Vec::with_capacity(config.words_per_user);
        for _ in 0..config.words_per_user {
            let r: f64 = rng.gen();
            let idx = cumulative.partition_point(|&c| c <= r);
            if idx < sequences.len() {
                held.push((sequences[idx].clone(), 1));
            } else {
                let filler = loop {
                    let len = rng.gen_range(filler_len.min(4)..=filler_len);
                    let s = to_sequence(&random_word(&mut rng, len), config.max_length);
                    if used.insert(s.clone()) {
                        break s;
                    }
                };
                held.push((filler, 1));
            }
        }
        users.push(User::new(format!("u{i}"), held));
    }
    UserDataset::new(users, config.max_length)
}
