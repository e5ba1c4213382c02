//! Federated discovery of frequent sequences by trie growth under client sampling.
//!
//! Each round samples a batch of users, lets those whose sequence extends an
//! already-discovered prefix vote for the next symbol, and keeps the prefixes
//! that collect at least `theta` votes. The sampling and the threshold alone
//! make the output differentially private; [`privacy`] turns a target
//! `(epsilon, delta)` into protocol parameters and [`analysis`] predicts how
//! often a sequence of a given frequency is discovered.

pub mod alphabet;
pub mod analysis;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod lambert;
pub mod privacy;
pub mod protocol;
pub mod registry;
pub mod sampling;
pub mod synthetic;
pub mod trie;

pub use alphabet::{Alphabet, EOS};
pub use analysis::{discovery_rate, min_population, round_probability, DiscoveryQuery};
pub use dataset::{User, UserDataset};
pub use error::{Error, Result};
pub use harness::{run_battery, ExperimentSpec, MetricsReport, ParamSource};
pub use ingest::{filter_oov, ingest_csv, IngestConfig};
pub use privacy::{choose_parameters, theta_rule, PrivacyParams, ThetaRule};
pub use protocol::{run, run_multi_word, run_single_word, ProtocolParams, RunOptions, RunReport, SequenceSelector};
pub use synthetic::{generate_synthetic, Fixture, FrequencyTable, SyntheticConfig};
pub use trie::{grow_one_level, Trie, VoteTally};
