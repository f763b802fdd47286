use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of `N` symbols. Class `N` (the last one) is the CTC blank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Charset {
    symbols: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Charset {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &ch) in symbols.iter().enumerate() {
            if ch == '\n' || ch == '\r' {
                return Err(Error::InvalidArgument("line breaks cannot be charset symbols".into()));
            }
            if index.insert(ch, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate charset symbol {ch:?}")));
            }
        }
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("charset must contain at least one symbol".into()));
        }
        Ok(Self { symbols, index })
    }

    /// Sorted set of every character occurring in `texts`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        Self::new(set)
    }

    /// Number of symbols `N`, excluding the blank.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `N + 1`.
    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn blank_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn contains(&self, ch: char) -> bool {
        self.index.contains_key(&ch)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|ch| self.index.get(&ch).copied().ok_or(Error::UnknownCharacter { ch }))
            .collect()
    }

    /// Maps class indices back to text; the blank and out-of-range indices
    /// are skipped.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices.iter().filter_map(|&i| self.symbols.get(i)).collect()
    }
}

impl TryFrom<String> for Charset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(s.chars())
    }
}

impl From<Charset> for String {
    fn from(c: Charset) -> String {
        c.symbols.iter().collect()
    }
}
