//! Symbol sets for sequences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// End-of-sequence marker appended to every word.
pub const EOS: char = '$';

/// The set of symbols a sequence may contain. EOS is always a member but may
/// only appear as the final symbol of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: BTreeSet<char>,
}

impl Default for Alphabet {
    /// Printable ASCII (excluding space) with `$` reserved for EOS.
    fn default() -> Self {
        Self::from_symbols((0x21u8..=0x7e).map(char::from))
    }
}

impl Alphabet {
    pub fn from_symbols(symbols: impl IntoIterator<Item = char>) -> Self {
        let mut symbols: BTreeSet<char> = symbols.into_iter().collect();
        symbols.insert(EOS);
        Self { symbols }
    }

    /// Accepts every symbol. Useful for tests and pre-validated data.
    pub fn unrestricted() -> Self {
        Self {
            symbols: BTreeSet::new(),
        }
    }

    fn is_unrestricted(&self) -> bool {
        self.symbols.is_empty()
    }

    /// True when `c` may appear in the body of a sequence.
    pub fn allows(&self, c: char) -> bool {
        c != EOS && (self.is_unrestricted() || self.symbols.contains(&c))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Checks that every symbol is allowed and that EOS, if present, is last.
    pub fn validate(&self, sequence: &str) -> Result<()> {
        let mut chars = sequence.chars().peekable();
        while let Some(c) = chars.next() {
            let last = chars.peek().is_none();
            if c == EOS {
                if !last {
                    return Err(Error::InvalidInput(format!(
                        "EOS marker inside sequence {sequence:?}"
                    )));
                }
            } else if !self.allows(c) {
                return Err(Error::AlphabetMismatch {
                    symbol: c,
                    sequence: sequence.to_owned(),
                });
            }
        }
        Ok(())
    }
}
