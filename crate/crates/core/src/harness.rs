//! Repeated seeded runs and the utility metrics computed over them.
//!
//! Ground truth for top-`K` is the `K` sequences with the highest population
//! frequency. Per run, with `D` the discovered words:
//!
//! * `recall@K = |D ∩ truth(K)| / K`
//! * `precision@K = |D ∩ truth(K)| / |D|`, 0 when `D` is empty
//!
//! Means carry a normal-approximation 95% interval `1.96 * s / sqrt(R)`. The
//! reported F1 is the harmonic mean of the mean precision and mean recall; its
//! interval comes from the per-run F1 values.

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{discovery_rate, occurrences_for, DiscoveryQuery};
use crate::dataset::UserDataset;
use crate::error::{Error, Result};
use crate::privacy::{choose_parameters, theta_rule, PrivacyParams};
use crate::protocol::{run, selectors, ProtocolParams, RunOptions};

const Z_95: f64 = 1.96;

/// Where a battery's protocol parameters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    /// Chosen for the dataset size from a privacy target.
    Derive {
        epsilon: f64,
        delta_mode: String,
        max_length: u32,
    },
    Privacy(PrivacyParams),
    /// Raw protocol knobs with no privacy claim.
    Protocol(ProtocolParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub params: ParamSource,
    pub runs: usize,
    pub top_k: Vec<usize>,
    pub base_seed: u64,
    /// Selector name, `single` or `multi`.
    pub mode: String,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidInput("runs must be at least 1".into()));
        }
        if self.top_k.contains(&0) {
            return Err(Error::InvalidInput("every K must be at least 1".into()));
        }
        Ok(())
    }

    fn resolve(&self, dataset: &UserDataset) -> Result<(ProtocolParams, Option<PrivacyParams>)> {
        match &self.params {
            ParamSource::Derive {
                epsilon,
                delta_mode,
                max_length,
            } => {
                let rule = theta_rule(delta_mode)?;
                let p = choose_parameters(dataset.len() as u64, *max_length, *epsilon, rule.as_ref())?;
                Ok(((&p).into(), Some(p)))
            }
            ParamSource::Privacy(p) => Ok((p.into(), Some(p.clone()))),
            ParamSource::Protocol(p) => Ok((*p, None)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci_half_width: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let ci_half_width = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
            Z_95 * var.sqrt() / r.sqrt()
        };
        Self {
            mean,
            ci_half_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKMetrics {
    pub k: usize,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRate {
    pub word: String,
    pub population_frequency: f64,
    pub holders: usize,
    pub discovered_runs: usize,
    pub rate: f64,
    /// Worst-case prediction, single-word mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theoretical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub runs: usize,
    pub base_seed: u64,
    pub n: usize,
    pub params: ProtocolParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacyParams>,
    pub top_k: Vec<TopKMetrics>,
    /// The top-`max K` words plus every word discovered at least once.
    pub words: Vec<WordRate>,
    pub rounds: Stat,
    pub discovered: Stat,
    /// Added prefixes whose tally was below the threshold, across all runs.
    pub anonymity_violations: usize,
    /// Wall-clock time of the runs; not part of the serialized report.
    #[serde(skip)]
    pub elapsed: Duration,
}

struct Outcome {
    words: Vec<String>,
    rounds: usize,
    violations: usize,
}

fn precision_recall(discovered: &HashSet<&str>, truth: &[&str], k: usize) -> (f64, f64) {
    let hits = truth.iter().filter(|w| discovered.contains(*w)).count() as f64;
    let precision = if discovered.is_empty() {
        0.0
    } else {
        hits / discovered.len() as f64
    };
    (precision, hits / k as f64)
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Runs `spec.runs` independent executions with seeds `base_seed + i` and
/// aggregates their metrics.
pub fn run_battery(spec: &ExperimentSpec, dataset: &UserDataset) -> Result<MetricsReport> {
    spec.validate()?;
    let (params, privacy) = spec.resolve(dataset)?;
    let selector = selectors().resolve(&spec.mode)?;
    let options = RunOptions::default();

    let start = Instant::now();
    let outcomes: Vec<Outcome> = (0..spec.runs as u64)
        .into_par_iter()
        .map(|i| {
            let report = run(dataset, params, spec.base_seed.wrapping_add(i), selector.as_ref(), &options)?;
            Ok(Outcome {
                violations: report.anonymity_violations().len(),
                rounds: report.rounds,
                words: report.words,
            })
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed();

    let ranked = dataset.ranked();
    let max_k = spec.top_k.iter().copied().max().unwrap_or(0);
    let sets: Vec<HashSet<&str>> = outcomes
        .iter()
        .map(|o| o.words.iter().map(String::as_str).collect())
        .collect();

    let top_k = spec
        .top_k
        .iter()
        .map(|&k| {
            let truth: Vec<&str> = ranked.iter().take(k).map(|(w, _)| w.as_str()).collect();
            let (mut ps, mut rs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
            for set in &sets {
                let (p, r) = precision_recall(set, &truth, k);
                ps.push(p);
                rs.push(r);
                fs.push(harmonic(p, r));
            }
            let precision = Stat::of(&ps);
            let recall = Stat::of(&rs);
            let f1 = Stat {
                mean: harmonic(precision.mean, recall.mean),
                ci_half_width: Stat::of(&fs).ci_half_width,
            };
            TopKMetrics {
                k,
                precision,
                recall,
                f1,
            }
        })
        .collect();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for set in &sets {
        for w in set {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let freqs: BTreeMap<&str, f64> = ranked.iter().map(|(w, f)| (w.as_str(), *f)).collect();
    let mut listed: Vec<&str> = ranked.iter().take(max_k).map(|(w, _)| w.as_str()).collect();
    let in_top: HashSet<&str> = listed.iter().copied().collect();
    listed.extend(counts.keys().filter(|w| !in_top.contains(*w)));
    let single = spec.mode == "single";
    let words = listed
        .into_iter()
        .map(|w| {
            let holders = dataset.holders(w);
            let discovered_runs = counts.get(w).copied().unwrap_or(0);
            let theoretical = if single {
                Some(worst_case_rate(dataset.len(), &params, holders as u64, w)?)
            } else {
                None
            };
            Ok(WordRate {
                word: w.to_owned(),
                population_frequency: freqs.get(w).copied().unwrap_or(0.0),
                holders,
                discovered_runs,
                rate: discovered_runs as f64 / spec.runs as f64,
                theoretical,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rounds: Vec<f64> = outcomes.iter().map(|o| o.rounds as f64).collect();
    let found: Vec<f64> = outcomes.iter().map(|o| o.words.len() as f64).collect();
    Ok(MetricsReport {
        mode: selector.name().to_owned(),
        runs: spec.runs,
        base_seed: spec.base_seed,
        n: dataset.len(),
        params,
        privacy,
        top_k,
        words,
        rounds: Stat::of(&rounds),
        discovered: Stat::of(&found),
        anonymity_violations: outcomes.iter().map(|o| o.violations).sum(),
        elapsed,
    })
}

fn worst_case_rate(n: usize, params: &ProtocolParams, occurrences: u64, word: &str) -> Result<f64> {
    discovery_rate(&DiscoveryQuery {
        n: n as u64,
        batch_size: params.batch_size,
        theta: params.threshold,
        occurrences,
        length: word.chars().count() as u32,
    })
}

impl MetricsReport {
    /// One row per `(K, metric)`: `k,metric,mean,ci_half_width`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,metric,mean,ci_half_width\n");
        for m in &self.top_k {
            for (name, s) in [("precision", m.precision), ("recall", m.recall), ("f1", m.f1)] {
                out.push_str(&format!("{},{name},{},{}\n", m.k, s.mean, s.ci_half_width));
            }
        }
        out
    }

    /// `x,y,ci` rows of recall against K.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("x,y,ci\n");
        for m in &self.top_k {
            out.push_str(&format!("{},{},{}\n", m.k, m.recall.mean, m.recall.ci_half_width));
        }
        out
    }

    pub fn recall(&self, k: usize) -> Option<Stat> {
        self.top_k.iter().find(|m| m.k == k).map(|m| m.recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub bin_low: f64,
    pub bin_high: f64,
    /// Mean population frequency of the words in the bin.
    pub frequency: f64,
    pub words: usize,
    pub empirical: f64,
    /// Binomial standard deviation of the bin's empirical rate over the runs.
    pub empirical_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theoretical: Option<f64>,
}

/// `count` log-spaced bin edges covering `[min, max]`.
pub fn log_bins(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && count >= 1) {
        return Err(Error::InvalidInput(format!(
            "need 0 < min < max and at least one bin (min = {min}, max = {max}, bins = {count})"
        )));
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..=count)
        .map(|i| (lo + (hi - lo) * i as f64 / count as f64).exp())
        .collect())
}

/// Buckets every sequence in the dataset by population frequency and compares
/// how often the runs found it with the worst-case prediction at
/// `W = ceil(f * n)`. The last bin includes its upper edge.
pub fn discovery_curve_from(
    report: &MetricsReport,
    dataset: &UserDataset,
    edges: &[f64],
) -> Result<Vec<CurveRow>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("bin edges must be increasing".into()));
    }
    let found: BTreeMap<&str, usize> = report
        .words
        .iter()
        .map(|w| (w.word.as_str(), w.discovered_runs))
        .collect();
    let n = dataset.len() as u64;
    let single = report.mode == "single";
    let last = edges.len() - 2;
    let mut bins: Vec<Vec<(f64, f64, Option<f64>)>> = vec![Vec::new(); edges.len() - 1];
    for (word, f) in dataset.ranked() {
        let Some(b) = (0..=last).find(|&b| f >= edges[b] && (f < edges[b + 1] || (b == last && f <= edges[b + 1]))) else {
            continue;
        };
        let rate = found.get(word.as_str()).copied().unwrap_or(0) as f64 / report.runs as f64;
        let theoretical = if single {
            Some(worst_case_rate(dataset.len(), &report.params, occurrences_for(f, n), &word)?)
        } else {
            None
        };
        bins[b].push((f, rate, theoretical));
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, b)| {
            let len = b.len() as f64;
            let empirical = b.iter().map(|x| x.1).sum::<f64>() / len;
            CurveRow {
                bin_low: edges[i],
                bin_high: edges[i + 1],
                frequency: b.iter().map(|x| x.0).sum::<f64>() / len,
                words: b.len(),
                empirical,
                empirical_sigma: (empirical * (1.0 - empirical) / report.runs as f64).sqrt(),
                theoretical: single.then(|| b.iter().filter_map(|x| x.2).sum::<f64>() / len),
            }
        })
        .collect())
}

pub fn discovery_curve(
    spec: &ExperimentSpec,
    dataset: &UserDataset,
    edges: &[f64],
) -> Result<Vec<CurveRow>> {
    let report = run_battery(spec, dataset)?;
    discovery_curve_from(&report, dataset, edges)
}

/// `frequency,empirical,theoretical` rows.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("frequency,empirical,empirical_sigma,theoretical\n");
    for r in rows {
        let theo = r.theoretical.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{theo}\n", r.frequency, r.empirical, r.empirical_sigma));
    }
    out
}
