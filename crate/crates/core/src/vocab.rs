use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Bijective token/index map. Token vocabularies start with the reserved
/// entries `<pad> <s> </s> <unk>` at indices 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk: Option<usize>,
}

impl Vocab {
    /// Vocabulary with the given reserved entries followed by `tokens` in
    /// order. Duplicates are dropped.
    pub fn from_tokens<I, S>(reserved: &[&str], tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
            unk: None,
        };
        for r in reserved {
            v.push(r.to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v.unk = v.index.get(UNK).copied();
        v
    }

    /// Frequency-sorted vocabulary (descending count, then lexicographic)
    /// keeping tokens seen at least `min_freq` times.
    pub fn build<'a, I>(reserved: &[&str], tokens: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut entries: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_tokens(reserved, entries.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Target/source token vocabulary with the four standard reserved entries.
    pub fn build_tokens<'a, I>(tokens: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        Self::build(&[PAD, BOS, EOS, UNK], tokens, min_freq)
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn unk_id(&self) -> Option<usize> {
        self.unk
    }

    /// Index of `token`, falling back to the unknown entry.
    pub fn id_or_unk(&self, token: &str) -> Result<usize> {
        self.get(token).or(self.unk).ok_or_else(|| Error::Unknown {
            kind: "token",
            value: token.to_string(),
        })
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the ordered token list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// One token per line, in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = text.lines().collect();
        let v = Self::from_tokens(&[], tokens.iter().copied());
        if v.len() != tokens.len() {
            return Err(Error::Data(format!("{}: duplicate vocabulary entries", path.display())));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_entries_come_first() {
        let v = Vocab::build_tokens(["b", "a", "b"].iter().copied(), 1);
        assert_eq!(v.tokens(), &[PAD, BOS, EOS, UNK, "b", "a"]);
        assert_eq!(v.id_or_unk("zzz").unwrap(), UNK_ID);
        assert_eq!(v.get("b"), Some(4));
    }

    #[test]
    fn min_freq_filters() {
        let v = Vocab::build_tokens(["b", "a", "b"].iter().copied(), 2);
        assert!(!v.contains("a"));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = Vocab::build_tokens(["x", "y"].iter().copied(), 1);
        v.save(&path).unwrap();
        let back = Vocab::load(&path).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.fingerprint(), back.fingerprint());
    }
}
