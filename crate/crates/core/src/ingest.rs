//! Building datasets from tweet-style corpora.
//!
//! Text is split on whitespace, optionally lowercased and stripped of
//! surrounding punctuation, filtered against the alphabet and an optional
//! dictionary, truncated to `L - 1` symbols and terminated with EOS.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, EOS};
use crate::dataset::{User, UserDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub user: String,
    pub text: String,
}

/// Which of a user's words enter the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Only the highest-count word; ties go to the lexicographically smallest.
    Top1,
    #[default]
    All,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Maximum sequence length including EOS.
    pub max_length: u32,
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub alphabet: Alphabet,
    /// Words (in normalized, untruncated form) to drop.
    pub dictionary: Option<HashSet<String>>,
    pub selection: Selection,
}

impl IngestConfig {
    pub fn new(max_length: u32) -> Self {
        Self {
            max_length,
            lowercase: true,
            strip_punctuation: false,
            alphabet: Alphabet::default(),
            dictionary: None,
            selection: Selection::All,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_length < 2 {
            return Err(Error::InvalidInput(format!(
                "max length must be at least 2 (one symbol plus EOS), got {}",
                self.max_length
            )));
        }
        Ok(())
    }

    /// Normalizes one raw token; `None` when it is dropped.
    pub fn normalize(&self, token: &str) -> Option<String> {
        let mut word = if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_owned()
        };
        if self.strip_punctuation {
            word = word
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_owned();
        }
        if word.is_empty() || !word.chars().all(|c| self.alphabet.allows(c)) {
            return None;
        }
        if self.dictionary.as_ref().is_some_and(|d| d.contains(&word)) {
            return None;
        }
        let mut seq: String = word.chars().take(self.max_length as usize - 1).collect();
        seq.push(EOS);
        Some(seq)
    }
}

/// Accumulates per-user word counts in first-seen user order.
#[derive(Default)]
struct Accumulator {
    order: Vec<String>,
    counts: HashMap<String, BTreeMap<String, u64>>,
}

impl Accumulator {
    fn user(&mut self, id: &str) -> &mut BTreeMap<String, u64> {
        if !self.counts.contains_key(id) {
            self.order.push(id.to_owned());
        }
        self.counts.entry(id.to_owned()).or_default()
    }

    fn add_text(&mut self, config: &IngestConfig, record: &CorpusRecord) {
        let counts = self.user(&record.user);
        for seq in record.text.split_whitespace().filter_map(|t| config.normalize(t)) {
            *counts.entry(seq).or_insert(0) += 1;
        }
    }

    fn finish(mut self, config: &IngestConfig) -> Result<UserDataset> {
        let mut users = Vec::new();
        for id in self.order {
            let counts = self.counts.remove(&id).unwrap_or_default();
            let user = User::new(id, counts);
            let user = match config.selection {
                Selection::All => user,
                Selection::Top1 => match user.top() {
                    Some(top) => User::new(user.id().to_owned(), [(top.to_owned(), 1)]),
                    None => user,
                },
            };
            if !user.is_empty() {
                users.push(user);
            }
        }
        if users.is_empty() {
            return Err(Error::InvalidDataset(
                "no users left after tokenization and filtering".into(),
            ));
        }
        UserDataset::new(users, config.max_length)
    }
}

/// Builds a dataset from corpus records.
pub fn ingest_records<'a>(
    records: impl IntoIterator<Item = &'a CorpusRecord>,
    config: &IngestConfig,
) -> Result<UserDataset> {
    config.validate()?;
    let mut acc = Accumulator::default();
    for r in records {
        if r.user.is_empty() {
            return Err(Error::InvalidInput("record with empty user id".into()));
        }
        acc.add_text(config, r);
    }
    acc.finish(config)
}

/// Reads CSV records in either the six-column tweet layout
/// `(polarity, id, date, query, user, text)` or the two-column `(user, text)`
/// layout, chosen by the column count of the first row. Bytes that are not
/// UTF-8 are replaced.
pub fn read_csv_records<R: Read>(input: R) -> Result<Vec<CorpusRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = Vec::new();
    let mut layout: Option<usize> = None;
    for (line, row) in reader.byte_records().enumerate() {
        let row = row?;
        let width = *layout.get_or_insert(row.len());
        if row.len() != width {
            return Err(Error::InvalidInput(format!(
                "row {} has {} columns, expected {width}",
                line + 1,
                row.len()
            )));
        }
        let (user_col, text_col) = match width {
            6 => (4, 5),
            2 => (0, 1),
            w => {
                return Err(Error::InvalidInput(format!(
                    "unsupported CSV layout with {w} columns (expected 2 or 6)"
                )))
            }
        };
        let user = String::from_utf8_lossy(&row[user_col]).trim().to_owned();
        let text = String::from_utf8_lossy(&row[text_col]).into_owned();
        if line == 0 && width == 2 && user == "user" && text.trim() == "text" {
            continue;
        }
        if user.is_empty() {
            return Err(Error::InvalidInput(format!("row {} has an empty user id", line + 1)));
        }
        records.push(CorpusRecord { user, text });
    }
    Ok(records)
}

pub fn ingest_csv(path: impl AsRef<Path>, config: &IngestConfig) -> Result<UserDataset> {
    config.validate()?;
    let records = read_csv_records(File::open(path)?)?;
    ingest_records(&records, config)
}

#[derive(Deserialize)]
struct WordsLine {
    user: String,
    words: BTreeMap<String, u64>,
}

/// Reads pre-tokenized lines `{"user": id, "words": {word: count}}`.
pub fn ingest_jsonl_reader<R: BufRead>(input: R, config: &IngestConfig) -> Result<UserDataset> {
    config.validate()?;
    let mut acc = Accumulator::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: WordsLine = serde_json::from_str(&line)?;
        if parsed.user.is_empty() {
            return Err(Error::InvalidInput("record with empty user id".into()));
        }
        let counts = acc.user(&parsed.user);
        for (word, c) in parsed.words {
            if let Some(seq) = config.normalize(&word) {
                *counts.entry(seq).or_insert(0) += c;
            }
        }
    }
    acc.finish(config)
}

pub fn ingest_jsonl(path: impl AsRef<Path>, config: &IngestConfig) -> Result<UserDataset> {
    ingest_jsonl_reader(BufReader::new(File::open(path)?), config)
}

/// One word per line; blank lines ignored.
pub fn read_dictionary<R: BufRead>(input: R) -> Result<HashSet<String>> {
    let mut words = HashSet::new();
    for line in input.lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() {
            words.insert(w.to_owned());
        }
    }
    Ok(words)
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    read_dictionary(BufReader::new(File::open(path)?))
}

/// Removes sequences whose EOS-stripped form is in `dictionary` and drops
/// users left with nothing. Sequences truncated during ingestion are compared
/// in truncated form; filter at ingestion time through
/// [`IngestConfig::dictionary`] to match untruncated words.
pub fn filter_oov(dataset: &UserDataset, dictionary: &HashSet<String>) -> Result<UserDataset> {
    if dictionary.is_empty() {
        return Err(Error::InvalidInput("dictionary is empty".into()));
    }
    dataset.map_users(|u| u.retain(|s| !dictionary.contains(s.strip_suffix(EOS).unwrap_or(s))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, text: &str) -> CorpusRecord {
        CorpusRecord {
            user: user.into(),
            text: text.into(),
        }
    }

    #[test]
    fn counts_and_frequencies() {
        let d = ingest_records(&[rec("alice", "sun sun"), rec("alice", "moon")], &IngestConfig::new(10))
            .unwrap();
        let u = &d.users()[0];
        assert_eq!(u.count("sun$"), 2);
        assert_eq!(u.count("moon$"), 1);
        let f: BTreeMap<_, _> = u.frequencies().collect();
        assert!((f["sun$"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f["moon$"] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn top1_keeps_best_word() {
        let cfg = IngestConfig {
            selection: Selection::Top1,
            ..IngestConfig::new(10)
        };
        let d = ingest_records(&[rec("alice", "sun sun moon")], &cfg).unwrap();
        assert_eq!(d.users()[0].sequences(), &[("sun$".to_string(), 1)]);
        let d = ingest_records(&[rec("bob", "b a")], &cfg).unwrap();
        assert_eq!(d.users()[0].sequences()[0].0, "a$");
    }

    #[test]
    fn truncates_to_l_minus_one() {
        let long = "abcdefghijklmnopqrstuvwxy";
        let d = ingest_records(&[rec("u", long)], &IngestConfig::new(10)).unwrap();
        assert_eq!(d.users()[0].sequences()[0].0, "abcdefghi$");
    }

    #[test]
    fn punctuation_survives_by_default() {
        let d = ingest_records(&[rec("u", "*hugs* @MileyCyrus b/c")], &IngestConfig::new(20)).unwrap();
        let seqs: Vec<_> = d.users()[0].sequences().iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(seqs, vec!["*hugs*$", "@mileycyrus$", "b/c$"]);
        let cfg = IngestConfig {
            strip_punctuation: true,
            ..IngestConfig::new(20)
        };
        let d = ingest_records(&[rec("u", "*hugs*")], &cfg).unwrap();
        assert_eq!(d.users()[0].sequences()[0].0, "hugs$");
    }

    #[test]
    fn drops_disallowed_tokens_and_empty_users() {
        let d = ingest_records(&[rec("a", "café $5 ok"), rec("b", "naïve")], &IngestConfig::new(10)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.users()[0].sequences()[0].0, "ok$");
        assert!(ingest_records(&[rec("b", "naïve")], &IngestConfig::new(10)).is_err());
        assert!(ingest_records(&[rec("", "x")], &IngestConfig::new(10)).is_err());
        assert!(ingest_records(&[rec("a", "x")], &IngestConfig::new(1)).is_err());
    }

    #[test]
    fn dictionary_at_ingestion_uses_untruncated_form() {
        let cfg = IngestConfig {
            dictionary: Some(["abcdefghijk".to_string()].into()),
            ..IngestConfig::new(5)
        };
        let d = ingest_records(&[rec("u", "abcdefghijk abcdefghijz")], &cfg).unwrap();
        assert_eq!(d.users()[0].sequences(), &[("abcd$".to_string(), 1)]);
    }

    #[test]
    fn csv_layouts() {
        let six = "\"0\",\"1\",\"Mon\",\"NO_QUERY\",\"alice\",\"sun sun moon\"\n\"4\",\"2\",\"Mon\",\"NO_QUERY\",\"bob\",\"hi\"\n";
        let r = read_csv_records(six.as_bytes()).unwrap();
        assert_eq!(r, vec![rec("alice", "sun sun moon"), rec("bob", "hi")]);
        let two = "user,text\nalice,sun moon\n";
        assert_eq!(read_csv_records(two.as_bytes()).unwrap(), vec![rec("alice", "sun moon")]);
        assert!(read_csv_records("a,b,c\n".as_bytes()).is_err());
        assert!(read_csv_records("a,b\nc,d,e\n".as_bytes()).is_err());
    }

    #[test]
    fn jsonl_words() {
        let text = "{\"user\":\"a\",\"words\":{\"Sun\":2,\"moon\":1}}\n\n{\"user\":\"b\",\"words\":{\"x\":1}}\n";
        let d = ingest_jsonl_reader(text.as_bytes(), &IngestConfig::new(10)).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.users()[0].count("sun$"), 2);
    }

    #[test]
    fn oov_filter() {
        let d = UserDataset::new(vec![User::new("u", [("sun$", 2), ("b/c$", 1)])], 10).unwrap();
        let dict: HashSet<String> = ["sun".to_string()].into();
        let out = filter_oov(&d, &dict).unwrap();
        assert_eq!(out.users()[0].sequences(), &[("b/c$".to_string(), 1)]);
        assert_eq!(out.users()[0].frequencies().next().unwrap().1, 1.0);

        let other: HashSet<String> = ["zzz".to_string()].into();
        assert_eq!(filter_oov(&d, &other).unwrap(), d);

        let all: HashSet<String> = ["sun".to_string(), "b/c".to_string()].into();
        let two = UserDataset::new(
            vec![User::new("u", [("sun$", 2), ("b/c$", 1)]), User::new("v", [("x$", 1)])],
            10,
        )
        .unwrap();
        assert_eq!(filter_oov(&two, &all).unwrap().len(), 1);
        assert!(filter_oov(&d, &HashSet::new()).is_err());
    }

    #[test]
    fn dictionary_file() {
        let dict = read_dictionary("the\n\n and \n".as_bytes()).unwrap();
        assert_eq!(dict.len(), 2);
        assert!(dict.contains("and"));
    }
}
