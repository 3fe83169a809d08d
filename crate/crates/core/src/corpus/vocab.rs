use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const CLS: TokenId = 1;
pub const SEP: TokenId = 2;
pub const EOQ: TokenId = 3;
pub const UNK: TokenId = 4;

pub const RESERVED: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[EOQ]", "[UNK]"];

/// Word-level vocabulary. Ids 0..5 are the reserved markers; the rest are
/// assigned contiguously in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.tokens.push(r.to_string());
            v.index.insert(r.to_string(), v.tokens.len() - 1);
        }
        v
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `[UNK]`.
    pub fn id(&self, token: &str) -> TokenId {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Writes one token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: "vocabulary must start with the reserved tokens".into(),
            });
        }
        let mut v = Self::new();
        for (n, line) in lines.iter().enumerate().skip(RESERVED.len()) {
            if v.get(line).is_some() {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    msg: format!("duplicate token {line:?} on line {}", n + 1),
                });
            }
            v.insert(line);
        }
        Ok(v)
    }
}

/// A token with its `[start, end)` character offsets in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercases and splits on whitespace and punctuation. Each punctuation
/// character is its own token, except `,` and `.` between two digits
/// (`90,000`, `3.5`). Offsets count characters, not bytes.
pub fn split_with_offsets(text: &str) -> Vec<OffsetToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;
    let flush = |cur: &mut String, start: usize, end: usize, out: &mut Vec<OffsetToken>| {
        if !cur.is_empty() {
            out.push(OffsetToken {
                text: std::mem::take(cur),
                start,
                end,
            });
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut cur, cur_start, i, &mut out);
            continue;
        }
        let numeric_sep = (c == ',' || c == '.')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if is_punct(c) && !numeric_sep {
            flush(&mut cur, cur_start, i, &mut out);
            out.push(OffsetToken {
                text: c.to_lowercase().collect(),
                start: i,
                end: i + 1,
            });
            continue;
        }
        if cur.is_empty() {
            cur_start = i;
        }
        cur.extend(c.to_lowercase());
    }
    flush(&mut cur, cur_start, chars.len(), &mut out);
    out
}

pub fn split_words(text: &str) -> Vec<String> {
    split_with_offsets(text).into_iter().map(|t| t.text).collect()
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    split_with_offsets(text)
        .iter()
        .map(|t| vocab.id(&t.text))
        .collect()
}

pub fn detokenize(ids: &[TokenId], vocab: &Vocabulary) -> String {
    ids.iter()
        .map(|&i| vocab.token(i))
        .collect::<Vec<_>>()
        .join(" ")
}
