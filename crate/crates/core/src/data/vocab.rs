use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::DialogueInstance;
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

const PAD: &str = "<pad>";
const UNK: &str = "<unk>";

/// Token/id map with `0 = <pad>` and `1 = <unk>` reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        v.insert(PAD);
        v.insert(UNK);
        v
    }

    /// Every token of `instances` (contexts and responses) in order of first
    /// occurrence.
    pub fn build(instances: &[DialogueInstance]) -> Self {
        let mut v = Self::new();
        for inst in instances {
            for tok in inst.context.iter().flatten().chain(&inst.response) {
                v.insert(tok);
            }
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.index.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    /// Id of `token`, or [`UNK_ID`] when absent. Never returns [`PAD_ID`] for
    /// real text.
    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&PAD_ID) | None => UNK_ID,
            Some(&id) => id,
        }
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line; line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if v.index.contains_key(line) {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    reason: format!("duplicate token `{line}`"),
                });
            }
            v.insert(line);
        }
        if v.token(PAD_ID) != Some(PAD) || v.token(UNK_ID) != Some(UNK) {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                reason: "vocabulary must start with <pad> and <unk>".into(),
            });
        }
        Ok(v)
    }
}
