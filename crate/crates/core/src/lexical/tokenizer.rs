use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Text → token ids. Implementations are deterministic and every id they emit
/// is below `vocab_size()`.
pub trait Tokenizer: Send + Sync {
    fn id(&self) -> &str;
    fn vocab_size(&self) -> u32;
    fn tokenize(&self, text: &str) -> Vec<TokenId>;
}

/// Splits into words (runs of alphanumerics and `_`) and single punctuation
/// characters, dropping whitespace.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() || ch == '_' {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !ch.is_whitespace() {
            out.push(&text[i..i + ch.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Whitespace + punctuation splitter; each observed type is hashed to an id.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    id: String,
    vocab_size: u32,
}

impl WordTokenizer {
    pub const DEFAULT_VOCAB: u32 = 1 << 31;

    pub fn new(vocab_size: u32) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::config("tokenizer vocab_size must be positive"));
        }
        Ok(Self {
            id: format!("word-hash-{vocab_size}"),
            vocab_size,
        })
    }

    pub fn token_id(&self, word: &str) -> TokenId {
        let digest = Sha256::digest(word.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % u64::from(self.vocab_size)) as TokenId
    }
}

impl Default for WordTokenizer {
    fn default() -> Self {
        Self::new(Self::DEFAULT_VOCAB).expect("non-zero vocab")
    }
}

impl Tokenizer for WordTokenizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split_words(text).into_iter().map(|w| self.token_id(w)).collect()
    }
}

/// Greedy longest-match subword tokenizer over an external vocabulary file
/// (one token per line, id = zero-based line index). Word-internal pieces
/// prefer the `##` continuation form when the vocabulary has one.
#[derive(Debug, Clone)]
pub struct SubwordTokenizer {
    id: String,
    vocab: HashMap<String, TokenId>,
    vocab_size: u32,
    max_piece_chars: usize,
    unk: TokenId,
}

impl SubwordTokenizer {
    const UNK_CANDIDATES: [&'static str; 2] = ["[UNK]", "<unk>"];

    pub fn from_file(path: &Path, unk_token: Option<&str>) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = format!(
            "subword:{}",
            path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
        );
        Self::from_lines(id, body.lines(), unk_token)
    }

    pub fn from_lines<'a>(
        id: impl Into<String>,
        lines: impl IntoIterator<Item = &'a str>,
        unk_token: Option<&str>,
    ) -> Result<Self> {
        let mut vocab = HashMap::new();
        let mut size: u32 = 0;
        let mut max_piece_chars = 1;
        for line in lines {
            let tok = line.strip_suffix('\r').unwrap_or(line);
            if !tok.is_empty() {
                vocab.entry(tok.to_string()).or_insert(size);
                max_piece_chars = max_piece_chars.max(tok.trim_start_matches("##").chars().count());
            }
            size = size
                .checked_add(1)
                .ok_or_else(|| Error::config("vocabulary larger than u32::MAX"))?;
        }
        let unk = match unk_token {
            Some(t) => vocab.get(t).copied(),
            None => Self::UNK_CANDIDATES.iter().find_map(|t| vocab.get(*t).copied()),
        }
        .ok_or_else(|| Error::config("vocabulary has no unknown-token entry ([UNK] or <unk>)"))?;
        Ok(Self {
            id: id.into(),
            vocab,
            vocab_size: size,
            max_piece_chars,
            unk,
        })
    }

    fn lookup(&self, piece: &str, continuation: bool) -> Option<TokenId> {
        if continuation {
            if let Some(&id) = self.vocab.get(&format!("##{piece}")) {
                return Some(id);
            }
        }
        self.vocab.get(piece).copied()
    }

    fn tokenize_word(&self, word: &str, out: &mut Vec<TokenId>) {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n_chars = bounds.len() - 1;
        let mut pos = 0;
        while pos < n_chars {
            let longest = (pos + self.max_piece_chars).min(n_chars);
            let hit = (pos + 1..=longest)
                .rev()
                .find_map(|end| self.lookup(&word[bounds[pos]..bounds[end]], pos > 0).map(|id| (id, end)));
            match hit {
                Some((id, end)) => {
                    out.push(id);
                    pos = end;
                }
                None => {
                    out.push(self.unk);
                    pos += 1;
                }
            }
        }
    }
}

impl Tokenizer for SubwordTokenizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for word in split_words(text) {
            self.tokenize_word(word, &mut out);
        }
        out
    }
}

/// Declarative tokenizer choice, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TokenizerSpec {
    Word {
        #[serde(default)]
        vocab_size: Option<u32>,
    },
    Subword {
        vocab_path: PathBuf,
        #[serde(default)]
        unk_token: Option<String>,
    },
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        TokenizerSpec::Word { vocab_size: None }
    }
}

impl TokenizerSpec {
    /// Builds the tokenizer; relative vocabulary paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Arc<dyn Tokenizer>> {
        Ok(match self {
            TokenizerSpec::Word { vocab_size } => {
                Arc::new(WordTokenizer::new(vocab_size.unwrap_or(WordTokenizer::DEFAULT_VOCAB))?)
            }
            TokenizerSpec::Subword { vocab_path, unk_token } => {
                let path = if vocab_path.is_absolute() {
                    vocab_path.clone()
                } else {
                    base.join(vocab_path)
                };
                Arc::new(SubwordTokenizer::from_file(&path, unk_token.as_deref())?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_words_keeps_punctuation() {
        assert_eq!(
            split_words("def f(x):\n  return x_1+2"),
            vec!["def", "f", "(", "x", ")", ":", "return", "x_1", "+", "2"]
        );
        assert!(split_words("   ").is_empty());
    }

    #[test]
    fn word_tokenizer_is_deterministic_and_bounded() {
        let t = WordTokenizer::new(97).unwrap();
        let a = t.tokenize("for i in range(10): print(i)");
        assert_eq!(a, t.tokenize("for i in range(10): print(i)"));
        assert!(a.iter().all(|&id| id < 97));
        // same word, same id
        assert_eq!(a[1], a[a.len() - 2]);
    }

    #[test]
    fn subword_greedy_longest_match() {
        let vocab = ["[UNK]", "un", "unre", "##lated", "##late", "##d", "related", "(", ")"];
        let t = SubwordTokenizer::from_lines("v", vocab, None).unwrap();
        assert_eq!(t.vocab_size(), 9);
        // unre + ##lated
        assert_eq!(t.tokenize("unrelated"), vec![2, 3]);
        assert_eq!(t.tokenize("related"), vec![6]);
        // unknown character falls back to [UNK] and the rest still matches
        assert_eq!(t.tokenize("zun"), vec![0, 1]);
        assert_eq!(t.tokenize("(un)"), vec![7, 1, 8]);
    }

    #[test]
    fn subword_requires_unk() {
        assert!(SubwordTokenizer::from_lines("v", ["a", "b"], None).is_err());
        assert!(SubwordTokenizer::from_lines("v", ["a", "?"], Some("?")).is_ok());
    }
}
