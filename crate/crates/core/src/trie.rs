//! Server-side prefix tree and the single-round voting step.
//!
//! A round at level `i` asks every sampled sequence `w` with `|w| >= i` whose
//! length-`(i-1)` prefix is already in the trie to vote for its length-`i`
//! prefix. Prefixes with at least `threshold` votes are appended as children
//! of their parent node. Nothing else in the trie changes.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::alphabet::{Alphabet, EOS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    symbol: Option<char>,
    depth: usize,
    children: BTreeMap<char, Node>,
}

impl Node {
    fn root() -> Self {
        Self {
            symbol: None,
            depth: 0,
            children: BTreeMap::new(),
        }
    }

    /// `None` for the root.
    pub fn symbol(&self) -> Option<char> {
        self.symbol
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn children(&self) -> impl Iterator<Item = &Node> {
        self.children.values()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn child(&self, c: char) -> Option<&Node> {
        self.children.get(&c)
    }

    fn count(&self) -> usize {
        self.children.values().map(|c| 1 + c.count()).sum()
    }

    fn count_at(&self, depth: usize) -> usize {
        if self.depth == depth {
            1
        } else {
            self.children.values().map(|c| c.count_at(depth)).sum()
        }
    }
}

/// Prefix tree of discovered popular prefixes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trie {
    root: Node,
    levels: usize,
}

impl Default for Trie {
    fn default() -> Self {
        Self::new()
    }
}

impl Trie {
    /// A trie holding only the root.
    pub fn new() -> Self {
        Self {
            root: Node::root(),
            levels: 0,
        }
    }

    /// Builds a trie containing every prefix of every path. Mostly for tests.
    pub fn from_paths<S: AsRef<str>>(paths: &[S]) -> Result<Self> {
        let mut trie = Self::new();
        for path in paths {
            let path = path.as_ref();
            let chars: Vec<char> = path.chars().collect();
            for i in 1..=chars.len() {
                trie.insert_extension(&chars[..i])?;
            }
        }
        Ok(trie)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of populated levels below the root.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Number of non-root nodes.
    pub fn len(&self) -> usize {
        self.root.count()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_leaf()
    }

    /// Number of nodes at `depth` (1-based; 0 is the root).
    pub fn nodes_at(&self, depth: usize) -> usize {
        self.root.count_at(depth)
    }

    /// True when the root-to-node path spelled by `prefix` exists. The empty
    /// prefix names the root and is always present.
    pub fn contains(&self, prefix: &str) -> bool {
        self.find(prefix.chars()).is_some()
    }

    fn find(&self, prefix: impl IntoIterator<Item = char>) -> Option<&Node> {
        let mut node = &self.root;
        for c in prefix {
            node = node.child(c)?;
        }
        Some(node)
    }

    /// Appends the last symbol of `path` under the node spelled by the rest.
    fn insert_extension(&mut self, path: &[char]) -> Result<()> {
        let (&last, parent_path) = path
            .split_last()
            .ok_or_else(|| Error::InvalidInput("cannot insert the empty prefix".into()))?;
        let mut node = &mut self.root;
        for c in parent_path {
            if node.symbol == Some(EOS) {
                break;
            }
            node = node.children.get_mut(c).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "parent of {:?} is not in the trie",
                    path.iter().collect::<String>()
                ))
            })?;
        }
        if node.symbol == Some(EOS) {
            return Err(Error::InvalidInput(format!(
                "cannot extend past EOS in {:?}",
                path.iter().collect::<String>()
            )));
        }
        let depth = node.depth + 1;
        node.children.entry(last).or_insert_with(|| Node {
            symbol: Some(last),
            depth,
            children: BTreeMap::new(),
        });
        self.levels = self.levels.max(depth);
        Ok(())
    }

    /// Every root-to-leaf path ending in EOS, in lexicographic order.
    pub fn extract_words(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut path = String::new();
        walk(&self.root, &mut path, &mut |node, path| {
            if node.symbol == Some(EOS) {
                out.push(path.to_owned());
            }
        });
        out
    }

    /// Every root-to-node path (excluding the root) in depth-first symbol order.
    pub fn extract_prefixes(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut path = String::new();
        walk(&self.root, &mut path, &mut |node, path| {
            if node.symbol.is_some() {
                out.push(path.to_owned());
            }
        });
        out
    }
}

fn walk(node: &Node, path: &mut String, visit: &mut impl FnMut(&Node, &str)) {
    visit(node, path);
    for child in node.children.values() {
        let c = child.symbol.expect("non-root node has a symbol");
        path.push(c);
        walk(child, path, visit);
        path.pop();
    }
}

/// Votes cast for length-`level` prefixes in one round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub level: usize,
    pub counts: BTreeMap<String, u32>,
}

impl VoteTally {
    /// Counts one vote per eligible sequence. A sequence is eligible when it has
    /// at least `level` symbols and its length-`(level-1)` prefix is in `trie`.
    pub fn collect<S: AsRef<str>>(
        sequences: &[S],
        trie: &Trie,
        level: usize,
        alphabet: &Alphabet,
    ) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidInput("level must be at least 1".into()));
        }
        let mut counts = BTreeMap::new();
        for seq in sequences {
            let seq = seq.as_ref();
            alphabet.validate(seq)?;
            let mut chars = seq.chars();
            let parent: String = chars.by_ref().take(level - 1).collect();
            if parent.chars().count() < level - 1 {
                continue;
            }
            let Some(next) = chars.next() else {
                continue;
            };
            if !trie.contains(&parent) {
                continue;
            }
            let mut prefix = parent;
            prefix.push(next);
            *counts.entry(prefix).or_insert(0) += 1;
        }
        Ok(Self { level, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    pub fn get(&self, prefix: &str) -> u32 {
        self.counts.get(prefix).copied().unwrap_or(0)
    }

    /// Prefixes meeting the threshold, in symbol order.
    pub fn passing(&self, threshold: u32) -> Vec<&str> {
        self.counts
            .iter()
            .filter(|(_, &c)| c >= threshold)
            .map(|(p, _)| p.as_str())
            .collect()
    }
}

/// Outcome of one voting round.
#[derive(Debug, Clone)]
pub struct Growth {
    pub trie: Trie,
    pub tally: VoteTally,
    pub added: Vec<String>,
}

/// Runs one voting round and returns the grown trie with its tally.
pub fn grow_with_tally<S: AsRef<str>>(
    sequences: &[S],
    trie: &Trie,
    threshold: u32,
    level: usize,
    alphabet: &Alphabet,
) -> Result<Growth> {
    if threshold == 0 {
        return Err(Error::InvalidInput("threshold must be at least 1".into()));
    }
    if level == 0 {
        return Err(Error::InvalidInput("level must be at least 1".into()));
    }
    if trie.levels() >= level {
        return Err(Error::InvalidInput(format!(
            "trie already has {} levels; cannot grow level {level}",
            trie.levels()
        )));
    }
    let tally = VoteTally::collect(sequences, trie, level, alphabet)?;
    let mut grown = trie.clone();
    let mut added = Vec::new();
    for prefix in tally.passing(threshold) {
        let chars: Vec<char> = prefix.chars().collect();
        grown.insert_extension(&chars)?;
        added.push(prefix.to_owned());
    }
    Ok(Growth {
        trie: grown,
        tally,
        added,
    })
}

/// Returns `trie` plus every length-`level` prefix with at least `threshold` votes.
pub fn grow_one_level<S: AsRef<str>>(
    sequences: &[S],
    trie: &Trie,
    threshold: u32,
    level: usize,
    alphabet: &Alphabet,
) -> Result<Trie> {
    grow_with_tally(sequences, trie, threshold, level, alphabet).map(|g| g.trie)
}

#[derive(Serialize, Deserialize)]
struct NodeRepr {
    symbol: Option<String>,
    children: Vec<NodeRepr>,
}

#[derive(Serialize, Deserialize)]
struct TrieRepr {
    node: NodeRepr,
}

impl From<&Node> for NodeRepr {
    fn from(node: &Node) -> Self {
        Self {
            symbol: node.symbol.map(String::from),
            children: node.children.values().map(NodeRepr::from).collect(),
        }
    }
}

impl Serialize for Trie {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TrieRepr {
            node: NodeRepr::from(&self.root),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Trie {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        fn build<E: serde::de::Error>(
            repr: NodeRepr,
            path: &mut Vec<char>,
            trie: &mut Trie,
        ) -> std::result::Result<(), E> {
            for child in repr.children {
                let sym = child
                    .symbol
                    .as_deref()
                    .ok_or_else(|| E::custom("non-root node without symbol"))?;
                let mut it = sym.chars();
                let c = match (it.next(), it.next()) {
                    (Some(c), None) => c,
                    _ => return Err(E::custom(format!("symbol {sym:?} is not one character"))),
                };
                path.push(c);
                if trie.contains(&path.iter().collect::<String>()) {
                    return Err(E::custom("duplicate sibling symbol"));
                }
                trie.insert_extension(path).map_err(E::custom)?;
                build(child, path, trie)?;
                path.pop();
            }
            Ok(())
        }
        let repr = TrieRepr::deserialize(deserializer)?;
        if repr.node.symbol.is_some() {
            return Err(D::Error::custom("root must have a null symbol"));
        }
        let mut trie = Trie::new();
        build(repr.node, &mut Vec::new(), &mut trie)?;
        Ok(trie)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn any() -> Alphabet {
        Alphabet::default()
    }

    #[test]
    fn first_round_counts_shared_initials() {
        let seqs = ["sun$", "sun$", "star$", "moon$"];
        let g = grow_with_tally(&seqs, &Trie::new(), 2, 1, &any()).unwrap();
        assert_eq!(g.tally.get("s"), 3);
        assert_eq!(g.tally.get("m"), 1);
        assert_eq!(g.trie.extract_prefixes(), vec!["s"]);
        assert_eq!(g.added, vec!["s"]);
    }

    #[test]
    fn empty_sample_leaves_trie_unchanged() {
        let t = Trie::from_paths(&["su"]).unwrap();
        let empty: [&str; 0] = [];
        assert_eq!(grow_one_level(&empty, &t, 1, 3, &any()).unwrap(), t);
    }

    #[test]
    fn gate_excludes_unknown_parent() {
        let t = Trie::from_paths(&["s"]).unwrap();
        let out = grow_one_level(&["moon$"], &t, 1, 2, &any()).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn short_sequences_do_not_vote() {
        let t = Trie::from_paths(&["ab$"]).unwrap();
        let tally = VoteTally::collect(&["ab$"], &t, 4, &any()).unwrap();
        assert_eq!(tally.total(), 0);
    }

    #[test]
    fn words_exclude_open_prefixes() {
        let t = Trie::from_paths(&["sun$", "sta"]).unwrap();
        assert_eq!(t.extract_words(), vec!["sun$"]);
        assert!(Trie::new().extract_words().is_empty());
        let t = Trie::from_paths(&["sun$", "moon$"]).unwrap();
        assert_eq!(t.extract_words(), vec!["moon$", "sun$"]);
    }

    #[test]
    fn prefixes_enumerate_all_nodes() {
        assert!(Trie::new().extract_prefixes().is_empty());
        assert_eq!(
            Trie::from_paths(&["su"]).unwrap().extract_prefixes(),
            vec!["s", "su"]
        );
        let fig = Trie::from_paths(&["sun$", "sta", "moon$"]).unwrap();
        let p = fig.extract_prefixes();
        assert_eq!(p.len(), 11);
        assert!(p.contains(&"sta".to_string()));
        assert_eq!(fig.len(), 11);
        assert_eq!(fig.levels(), 5);
    }

    #[test]
    fn rejects_alphabet_mismatch() {
        let a = Alphabet::from_symbols("abc".chars());
        let r = grow_one_level(&["abd$"], &Trie::new(), 1, 1, &a);
        assert!(matches!(r, Err(Error::AlphabetMismatch { symbol: 'd', .. })));
    }

    #[test]
    fn rejects_bad_preconditions() {
        let t = Trie::from_paths(&["ab"]).unwrap();
        assert!(grow_one_level(&["abc$"], &t, 1, 2, &any()).is_err());
        assert!(grow_one_level(&["abc$"], &t, 0, 3, &any()).is_err());
        assert!(grow_one_level(&["abc$"], &Trie::new(), 1, 0, &any()).is_err());
    }

    #[test]
    fn eos_nodes_stay_leaves() {
        let mut t = Trie::from_paths(&["a$"]).unwrap();
        assert!(t.insert_extension(&['a', '$', 'b']).is_err());
    }

    #[test]
    fn json_layout_and_round_trip() {
        let t = Trie::from_paths(&["ab", "a$"]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"{"node":{"symbol":null,"children":[{"symbol":"a","children":[{"symbol":"$","children":[]},{"symbol":"b","children":[]}]}]}}"#
        );
        let back: Trie = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_rejects_duplicate_siblings() {
        let bad = r#"{"node":{"symbol":null,"children":[{"symbol":"a","children":[]},{"symbol":"a","children":[]}]}}"#;
        assert!(serde_json::from_str::<Trie>(bad).is_err());
    }
}
