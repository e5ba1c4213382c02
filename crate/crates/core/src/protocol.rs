//! The multi-round discovery protocol.
//!
//! Round `i` samples `m` users without replacement, asks each selected user
//! for one sequence, and grows level `i` of the trie from those sequences. The
//! run stops at the first round that adds nothing, and never runs more than
//! `L + 1` rounds. How a user picks the sequence it reports is a
//! [`SequenceSelector`] strategy looked up by name in [`selectors`].

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::dataset::{User, UserDataset};
use crate::error::{Error, Result};
use crate::privacy::PrivacyParams;
use crate::registry::{no_arg, Registry};
use crate::sampling::{round_rng, sample_users};
use crate::trie::{grow_with_tally, Trie};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How a sampled user picks the one sequence it votes with.
pub trait SequenceSelector: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Rejects datasets the strategy cannot run on.
    fn validate(&self, dataset: &UserDataset) -> Result<()>;

    fn select<'a>(&self, user: &'a User, rng: &mut ChaCha8Rng) -> &'a str;
}

/// Each user holds exactly one distinct sequence and always reports it.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleWord;

impl SequenceSelector for SingleWord {
    fn name(&self) -> &'static str {
        "single"
    }

    fn validate(&self, dataset: &UserDataset) -> Result<()> {
        match dataset.users().iter().find(|u| u.distinct() != 1) {
            Some(u) => Err(Error::InvalidDataset(format!(
                "single-word mode needs one sequence per user; {:?} holds {}",
                u.id(),
                u.distinct()
            ))),
            None => Ok(()),
        }
    }

    fn select<'a>(&self, user: &'a User, _rng: &mut ChaCha8Rng) -> &'a str {
        &user.sequences()[0].0
    }
}

/// Each user draws one sequence with probability equal to its local frequency.
/// Users holding a single distinct sequence consume no randomness.
#[derive(Debug, Clone, Copy, Default)]
pub struct MultiWord;

impl SequenceSelector for MultiWord {
    fn name(&self) -> &'static str {
        "multi"
    }

    fn validate(&self, _dataset: &UserDataset) -> Result<()> {
        Ok(())
    }

    fn select<'a>(&self, user: &'a User, rng: &mut ChaCha8Rng) -> &'a str {
        if user.distinct() == 1 {
            return &user.sequences()[0].0;
        }
        user.by_ticket(rng.gen_range(0..user.total()))
    }
}

/// Registry of sequence selectors: `single`, `multi`.
pub fn selectors() -> Registry<dyn SequenceSelector> {
    let mut r: Registry<dyn SequenceSelector> = Registry::new("mode");
    r.register("single", |arg| {
        no_arg("single", arg)?;
        Ok(Box::new(SingleWord))
    });
    r.register("multi", |arg| {
        no_arg("multi", arg)?;
        Ok(Box::new(MultiWord))
    });
    r
}

/// The three knobs the protocol itself needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub threshold: u32,
    pub batch_size: u64,
    pub max_length: u32,
}

impl From<&PrivacyParams> for ProtocolParams {
    fn from(p: &PrivacyParams) -> Self {
        Self {
            threshold: p.theta(),
            batch_size: p.batch_size(),
            max_length: p.max_length(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub alphabet: Alphabet,
    /// Keep sampled ids and the full tally in each round log.
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedPrefix {
    pub prefix: String,
    pub votes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub added: Vec<AddedPrefix>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampled_users: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tally: Option<std::collections::BTreeMap<String, u32>>,
}

/// One protocol execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: String,
    pub seed: u64,
    pub params: ProtocolParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub privacy: Option<PrivacyParams>,
    pub rounds: usize,
    pub words: Vec<String>,
    pub trie: Trie,
    pub log: Vec<RoundLog>,
}

impl RunReport {
    /// Every added prefix with fewer than `threshold` votes. Empty for a valid run.
    pub fn anonymity_violations(&self) -> Vec<&AddedPrefix> {
        self.log
            .iter()
            .flat_map(|r| &r.added)
            .filter(|a| a.votes < self.params.threshold)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs the protocol over `dataset` with the given selector.
pub fn run(
    dataset: &UserDataset,
    params: ProtocolParams,
    seed: u64,
    selector: &dyn SequenceSelector,
    options: &RunOptions,
) -> Result<RunReport> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::InvalidDataset("dataset has no users".into()));
    }
    if params.threshold == 0 {
        return Err(Error::InvalidInput("threshold must be at least 1".into()));
    }
    let m = usize::try_from(params.batch_size)
        .map_err(|_| Error::InvalidInput("batch size does not fit in memory".into()))?;
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "batch size must lie in 1..={n}, got {m}"
        )));
    }
    let longest = dataset.longest();
    if longest > params.max_length as usize {
        return Err(Error::InvalidDataset(format!(
            "longest sequence has {longest} symbols, more than L = {}",
            params.max_length
        )));
    }
    selector.validate(dataset)?;

    let cap = params.max_length as usize + 1;
    let users = dataset.users();
    let mut trie = Trie::new();
    let mut log = Vec::new();
    let mut rounds = 0;
    let mut batch: Vec<&str> = Vec::with_capacity(m);

    for level in 1..=cap {
        let mut rng = round_rng(seed, level as u64);
        let sampled = sample_users(n, m, &mut rng)?;
        batch.clear();
        batch.extend(sampled.iter().map(|&u| selector.select(&users[u], &mut rng)));

        let growth = grow_with_tally(&batch, &trie, params.threshold, level, &options.alphabet)?;
        rounds = level;
        let added: Vec<AddedPrefix> = growth
            .added
            .iter()
            .map(|p| AddedPrefix {
                votes: growth.tally.get(p),
                prefix: p.clone(),
            })
            .collect();
        let grew = !added.is_empty();
        log.push(RoundLog {
            round: level,
            added,
            sampled_users: options.verbose.then_some(sampled),
            tally: options.verbose.then(|| growth.tally.counts.clone()),
        });
        trie = growth.trie;
        if !grew {
            break;
        }
    }

    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: selector.name().to_owned(),
        seed,
        params,
        privacy: None,
        rounds,
        words: trie.extract_words(),
        trie,
        log,
    })
}

/// Runs with the validated privacy parameters attached to the report.
pub fn run_private(
    dataset: &UserDataset,
    privacy: &PrivacyParams,
    seed: u64,
    selector: &dyn SequenceSelector,
    options: &RunOptions,
) -> Result<RunReport> {
    let mut report = run(dataset, privacy.into(), seed, selector, options)?;
    report.privacy = Some(privacy.clone());
    Ok(report)
}

/// One sequence per user; every sampled user votes with its only sequence.
pub fn run_single_word(
    dataset: &UserDataset,
    params: ProtocolParams,
    seed: u64,
) -> Result<RunReport> {
    run(dataset, params, seed, &SingleWord, &RunOptions::default())
}

/// Several sequences per user; each sampled user first draws one by local frequency.
pub fn run_multi_word(
    dataset: &UserDataset,
    params: ProtocolParams,
    seed: u64,
) -> Result<RunReport> {
    run(dataset, params, seed, &MultiWord, &RunOptions::default())
}
