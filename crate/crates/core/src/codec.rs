//! Token ↔ text codecs used wherever an analysis needs to look at text.
//!
//! Tokenization proper is out of scope; these are the two small codecs the
//! command line tools ship with, plus the trait any external tokenizer can
//! implement.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub trait TextCodec: Send + Sync {
    /// Render tokens as text. May be lossy for sequences that do not decode
    /// cleanly (e.g. a multi-byte character split at a context edge).
    fn decode(&self, tokens: &[u32]) -> String;

    fn encode(&self, text: &str) -> Result<Vec<u32>>;

    /// Rewrite the text behind `tokens` with `f` and re-encode.
    ///
    /// Codecs whose `decode` is lossy override this so bytes that are not
    /// text pass through untouched.
    fn map_text(&self, tokens: &[u32], f: &mut dyn FnMut(&str) -> String) -> Result<Vec<u32>> {
        self.encode(&f(&self.decode(tokens)))
    }

    /// Token id of `word` if it encodes to exactly one token.
    fn single_token(&self, word: &str) -> Option<u32> {
        match self.encode(word).ok()?.as_slice() {
            [t] => Some(*t),
            _ => None,
        }
    }

    /// True if `word` occurs in this vocabulary at all.
    fn can_encode(&self, word: &str) -> bool {
        self.encode(word).is_ok()
    }
}

/// One token per UTF-8 byte (ids 0..=255).
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteCodec;

impl TextCodec for ByteCodec {
    fn decode(&self, tokens: &[u32]) -> String {
        let bytes: Vec<u8> = tokens.iter().map(|&t| t as u8).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        Ok(text.bytes().map(u32::from).collect())
    }

    fn map_text(&self, tokens: &[u32], f: &mut dyn FnMut(&str) -> String) -> Result<Vec<u32>> {
        if let Some(t) = tokens.iter().find(|&&t| t > 255) {
            return Err(Error::Input(format!("token {t} is not a byte")));
        }
        let bytes: Vec<u8> = tokens.iter().map(|&t| t as u8).collect();
        let mut out = Vec::with_capacity(tokens.len());
        for chunk in bytes.utf8_chunks() {
            out.extend(f(chunk.valid()).bytes().map(u32::from));
            out.extend(chunk.invalid().iter().map(|&b| u32::from(b)));
        }
        Ok(out)
    }
}

/// Whitespace word vocabulary: each token is one word, decode joins words
/// with single spaces.
#[derive(Debug, Clone)]
pub struct WordCodec {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

impl WordCodec {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("vocabulary entry {i} ({w:?}) is not a single word")));
            }
            if ids.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Self { words, ids })
    }

    /// Load a vocabulary file with one word per line; the line number is the id.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(str::to_owned).collect())
    }

    /// Vocabulary of every distinct word in `texts`, in first-seen order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words = Vec::new();
        let mut ids = HashMap::new();
        for text in texts {
            for w in text.split_whitespace() {
                if !ids.contains_key(w) {
                    ids.insert(w.to_owned(), words.len() as u32);
                    words.push(w.to_owned());
                }
            }
        }
        Self { words, ids }
    }

    /// Add `word` if absent and return its id.
    pub fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_owned());
        self.ids.insert(word.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl TextCodec for WordCodec {
    fn decode(&self, tokens: &[u32]) -> String {
        let mut out = String::new();
        for (i, &t) in tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match self.words.get(t as usize) {
                Some(w) => out.push_str(w),
                None => out.push('\u{FFFD}'),
            }
        }
        out
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace()
            .map(|w| {
                self.ids
                    .get(w)
                    .copied()
                    .ok_or_else(|| Error::Input(format!("word {w:?} is not in the vocabulary")))
            })
            .collect()
    }
}
