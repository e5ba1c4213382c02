//! Users and the sequences they hold.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::alphabet::EOS;
use crate::error::{Error, Result};

/// One user's multiset of sequences with local frequencies `count / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct User {
    id: String,
    /// Sorted by sequence, counts >= 1.
    sequences: Vec<(String, u64)>,
    total: u64,
}

impl User {
    /// Merges repeated sequences. Zero counts are dropped.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        sequences: impl IntoIterator<Item = (S, u64)>,
    ) -> Self {
        let mut merged: BTreeMap<String, u64> = BTreeMap::new();
        for (seq, count) in sequences {
            if count > 0 {
                *merged.entry(seq.into()).or_insert(0) += count;
            }
        }
        let total = merged.values().sum();
        Self {
            id: id.into(),
            sequences: merged.into_iter().collect(),
            total,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sequences(&self) -> &[(String, u64)] {
        &self.sequences
    }

    pub fn distinct(&self) -> usize {
        self.sequences.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn count(&self, sequence: &str) -> u64 {
        self.sequences
            .binary_search_by(|(s, _)| s.as_str().cmp(sequence))
            .map(|i| self.sequences[i].1)
            .unwrap_or(0)
    }

    /// Local frequency of each held sequence.
    pub fn frequencies(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        let total = self.total as f64;
        self.sequences
            .iter()
            .map(move |(s, c)| (s.as_str(), *c as f64 / total))
    }

    /// The sequence whose cumulative count range contains `ticket`
    /// (`0 <= ticket < total`).
    pub fn by_ticket(&self, mut ticket: u64) -> &str {
        for (s, c) in &self.sequences {
            if ticket < *c {
                return s;
            }
            ticket -= c;
        }
        panic!("ticket {ticket} out of range for user {}", self.id)
    }

    /// Keeps only the sequences accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&str) -> bool) -> User {
        User::new(
            self.id.clone(),
            self.sequences
                .iter()
                .filter(|(s, _)| keep(s))
                .map(|(s, c)| (s.clone(), *c)),
        )
    }

    /// The highest-count sequence, ties broken by the lexicographically smallest.
    pub fn top(&self) -> Option<&str> {
        self.sequences
            .iter()
            .min_by(|a, b| match b.1.cmp(&a.1) {
                Ordering::Equal => a.0.cmp(&b.0),
                o => o,
            })
            .map(|(s, _)| s.as_str())
    }
}

/// A population of users whose sequences all end in EOS and have at most
/// `max_length` symbols including it.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDataset {
    users: Vec<User>,
    max_length: u32,
}

#[derive(Serialize, Deserialize)]
struct UserLine {
    user: String,
    sequences: BTreeMap<String, u64>,
}

impl UserDataset {
    pub fn new(users: Vec<User>, max_length: u32) -> Result<Self> {
        if max_length < 2 {
            return Err(Error::InvalidDataset(format!(
                "max length must be at least 2, got {max_length}"
            )));
        }
        for user in &users {
            if user.id.is_empty() {
                return Err(Error::InvalidDataset("empty user id".into()));
            }
            if user.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "user {:?} holds no sequences",
                    user.id
                )));
            }
            for (seq, _) in &user.sequences {
                check_sequence(seq, max_length)?;
            }
        }
        Ok(Self { users, max_length })
    }

    /// A dataset with one sequence per user, ids `u0, u1, ...`.
    pub fn from_words<S: AsRef<str>>(words: &[S], max_length: u32) -> Result<Self> {
        let users = words
            .iter()
            .enumerate()
            .map(|(i, w)| User::new(format!("u{i}"), [(w.as_ref().to_owned(), 1)]))
            .collect();
        Self::new(users, max_length)
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn max_length(&self) -> u32 {
        self.max_length
    }

    /// Length of the longest held sequence, EOS included.
    pub fn longest(&self) -> usize {
        self.users
            .iter()
            .flat_map(|u| u.sequences.iter().map(|(s, _)| s.chars().count()))
            .max()
            .unwrap_or(0)
    }

    pub fn is_single_word(&self) -> bool {
        self.users.iter().all(|u| u.distinct() == 1)
    }

    /// Number of users holding `sequence` at least once.
    pub fn holders(&self, sequence: &str) -> usize {
        self.users.iter().filter(|u| u.count(sequence) > 0).count()
    }

    /// Population frequency: the mean over users of each sequence's local frequency.
    pub fn population_frequencies(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for user in &self.users {
            for (s, f) in user.frequencies() {
                *out.entry(s.to_owned()).or_insert(0.0) += f;
            }
        }
        let n = self.users.len() as f64;
        for v in out.values_mut() {
            *v /= n;
        }
        out
    }

    /// Sequences ranked by population frequency, highest first; ties lexicographic.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut v: Vec<_> = self.population_frequencies().into_iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    /// Union of all held sequences.
    pub fn vocabulary(&self) -> Vec<String> {
        self.population_frequencies().into_keys().collect()
    }

    pub fn map_users(&self, f: impl FnMut(&User) -> User) -> Result<Self> {
        let users = self
            .users
            .iter()
            .map(f)
            .filter(|u| !u.is_empty())
            .collect();
        Self::new(users, self.max_length)
    }

    /// Writes one JSON object per user: `{"user": id, "sequences": {seq: count}}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for user in &self.users {
            let line = UserLine {
                user: user.id.clone(),
                sequences: user.sequences.iter().cloned().collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Reads the dump written by [`UserDataset::write_jsonl`].
    pub fn read_jsonl<R: BufRead>(input: R, max_length: u32) -> Result<Self> {
        let mut users = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: UserLine = serde_json::from_str(&line)?;
            users.push(User::new(parsed.user, parsed.sequences));
        }
        Self::new(users, max_length)
    }

    /// FNV-1a over the canonical JSONL dump.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_jsonl().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn check_sequence(seq: &str, max_length: u32) -> Result<()> {
    let len = seq.chars().count();
    if len < 2 || !seq.ends_with(EOS) || seq[..seq.len() - 1].contains(EOS) {
        return Err(Error::InvalidDataset(format!(
            "sequence {seq:?} must be non-empty and end with a single {EOS:?}"
        )));
    }
    if len > max_length as usize {
        return Err(Error::InvalidDataset(format!(
            "sequence {seq:?} has {len} symbols, more than L = {max_length}"
        )));
    }
    Ok(())
}
