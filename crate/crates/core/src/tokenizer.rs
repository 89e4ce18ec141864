//! WordPiece tokenization and fixed-length sequence encoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONTINUATION_PREFIX: &str = "##";
/// Words longer than this (in chars) are mapped straight to the unknown token.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary is missing required token {0:?}")]
    MissingSpecialToken(String),
    #[error("vocabulary token {token:?} appears twice (ids {first} and {second})")]
    DuplicateToken {
        token: String,
        first: u32,
        second: u32,
    },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("claim needs {claim_pieces} pieces but at most {budget} fit alongside a non-empty text")]
    ClaimTooLong { claim_pieces: usize, budget: usize },
}

/// Token inventory; a token's id is its position in the list.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unk_id: u32,
    cls_id: u32,
    sep_id: u32,
}

impl Vocabulary {
    pub const PAD_ID: u32 = 0;

    /// Builds a vocabulary with the standard `[UNK]`, `[CLS]` and `[SEP]`
    /// special tokens. Index 0 is the pad token.
    pub fn new(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        Self::with_specials(tokens, "[UNK]", "[CLS]", "[SEP]")
    }

    pub fn with_specials(
        tokens: Vec<String>,
        unk: &str,
        cls: &str,
        sep: &str,
    ) -> Result<Self, TokenizerError> {
        if tokens.is_empty() {
            return Err(TokenizerError::EmptyVocabulary);
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if let Some(first) = ids.insert(tok.clone(), i as u32) {
                return Err(TokenizerError::DuplicateToken {
                    token: tok.clone(),
                    first,
                    second: i as u32,
                });
            }
        }
        let lookup = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| TokenizerError::MissingSpecialToken(name.to_string()))
        };
        let unk_id = lookup(unk)?;
        let cls_id = lookup(cls)?;
        let sep_id = lookup(sep)?;
        for special in [unk_id, cls_id, sep_id] {
            if special == Self::PAD_ID {
                return Err(TokenizerError::MissingSpecialToken("[PAD] at index 0".into()));
            }
        }
        Ok(Vocabulary {
            tokens,
            ids,
            unk_id,
            cls_id,
            sep_id,
        })
    }

    /// Parses the one-token-per-line layout used by pretrained BERT
    /// vocabularies. Line `n` holds the token with id `n`.
    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let tokens = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::new(tokens)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn cls_id(&self) -> u32 {
        self.cls_id
    }

    pub fn sep_id(&self) -> u32 {
        self.sep_id
    }

    pub fn unk_token(&self) -> &str {
        &self.tokens[self.unk_id as usize]
    }

    /// Greedy longest-match-first segmentation of each whitespace-separated
    /// word. A word with no complete segmentation becomes a single unknown
    /// token.
    pub fn wordpiece(&self, text: &str) -> Vec<String> {
        let mut pieces = Vec::new();
        for word in text.split_whitespace() {
            match self.segment_word(word) {
                Some(mut word_pieces) => pieces.append(&mut word_pieces),
                None => pieces.push(self.unk_token().to_string()),
            }
        }
        pieces
    }

    fn segment_word(&self, word: &str) -> Option<Vec<String>> {
        let boundaries: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n_chars = boundaries.len() - 1;
        if n_chars > MAX_WORD_CHARS {
            return None;
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < n_chars {
            let mut found = None;
            for end in (start + 1..=n_chars).rev() {
                let sub = &word[boundaries[start]..boundaries[end]];
                let candidate = if start > 0 {
                    format!("{CONTINUATION_PREFIX}{sub}")
                } else {
                    sub.to_string()
                };
                if self.ids.contains_key(&candidate) {
                    found = Some((end, candidate));
                    break;
                }
            }
            let (end, piece) = found?;
            out.push(piece);
            start = end;
        }
        Some(out)
    }

    fn piece_ids(&self, text: &str) -> Vec<u32> {
        self.wordpiece(text)
            .iter()
            .map(|p| self.id(p).unwrap_or(self.unk_id))
            .collect()
    }
}

/// Transformer input geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub max_tokens: usize,
    pub embed_dim: usize,
}

impl Default for ModelGeometry {
    fn default() -> Self {
        ModelGeometry {
            max_tokens: 192,
            embed_dim: 768,
        }
    }
}

impl ModelGeometry {
    /// Total encoder outputs seen by a sequence-level head.
    pub fn flattened_dim(&self) -> usize {
        self.max_tokens * self.embed_dim
    }
}

/// A padded, fixed-length encoding of one text or one claim/text pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub actual_length: usize,
    pub truncated: bool,
}

impl TokenSequence {
    fn assemble(
        vocab: &Vocabulary,
        geometry: ModelGeometry,
        first: &[u32],
        second: Option<&[u32]>,
        truncated: bool,
    ) -> Self {
        let mut ids = Vec::with_capacity(geometry.max_tokens);
        let mut segment_ids = Vec::with_capacity(geometry.max_tokens);
        ids.push(vocab.cls_id);
        ids.extend_from_slice(first);
        ids.push(vocab.sep_id);
        segment_ids.resize(ids.len(), 0);
        if let Some(second) = second {
            ids.extend_from_slice(second);
            ids.push(vocab.sep_id);
            segment_ids.resize(ids.len(), 1);
        }
        let actual_length = ids.len();
        ids.resize(geometry.max_tokens, Vocabulary::PAD_ID);
        segment_ids.resize(geometry.max_tokens, 0);
        TokenSequence {
            ids,
            segment_ids,
            actual_length,
            truncated,
        }
    }

    /// Checks every structural invariant of an encoded sequence.
    pub fn check(&self, vocab: &Vocabulary, geometry: ModelGeometry, pair: bool) -> Result<(), String> {
        let n = geometry.max_tokens;
        if self.ids.len() != n || self.segment_ids.len() != n {
            return Err(format!("length {} != {n}", self.ids.len()));
        }
        if self.actual_length < 2 || self.actual_length > n {
            return Err(format!("actual_length {} out of range", self.actual_length));
        }
        if self.ids[0] != vocab.cls_id {
            return Err("first token is not [CLS]".into());
        }
        if self.ids[self.actual_length - 1] != vocab.sep_id {
            return Err("content does not end with [SEP]".into());
        }
        for i in self.actual_length..n {
            if self.ids[i] != Vocabulary::PAD_ID || self.segment_ids[i] != 0 {
                return Err(format!("position {i} is not padding"));
            }
        }
        let content = &self.ids[..self.actual_length];
        let seps: Vec<usize> = content
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == vocab.sep_id)
            .map(|(i, _)| i)
            .collect();
        let segments = &self.segment_ids[..self.actual_length];
        if pair {
            if seps.len() != 2 {
                return Err(format!("pair encoding has {} [SEP] tokens", seps.len()));
            }
            let switch = seps[0] + 1;
            if segments[..switch].iter().any(|&s| s != 0) || segments[switch..].iter().any(|&s| s != 1) {
                return Err("segment ids do not switch 0 -> 1 after the first [SEP]".into());
            }
        } else {
            if seps.len() != 1 {
                return Err(format!("single encoding has {} [SEP] tokens", seps.len()));
            }
            if segments.iter().any(|&s| s != 0) {
                return Err("single encoding has non-zero segment ids".into());
            }
        }
        Ok(())
    }
}

/// `[CLS] text [SEP]`, padded or tail-truncated to `max_tokens`.
pub fn encode_single(text: &str, vocab: &Vocabulary, geometry: ModelGeometry) -> TokenSequence {
    let budget = geometry.max_tokens.saturating_sub(2);
    let mut pieces = vocab.piece_ids(text);
    let truncated = pieces.len() > budget;
    pieces.truncate(budget);
    TokenSequence::assemble(vocab, geometry, &pieces, None, truncated)
}

/// `[CLS] claim [SEP] text [SEP]`, padded to `max_tokens`.
///
/// Only the text is ever truncated. A claim so long that no text piece
/// would fit is an error rather than a silently claim-only encoding.
pub fn encode_pair(
    claim: &str,
    text: &str,
    vocab: &Vocabulary,
    geometry: ModelGeometry,
) -> Result<TokenSequence, TokenizerError> {
    let budget = geometry.max_tokens.saturating_sub(3);
    let claim_ids = vocab.piece_ids(claim);
    let mut text_ids = vocab.piece_ids(text);
    let needed_for_text = usize::from(!text_ids.is_empty());
    if claim_ids.len() + needed_for_text > budget {
        return Err(TokenizerError::ClaimTooLong {
            claim_pieces: claim_ids.len(),
            budget: budget - needed_for_text,
        });
    }
    let room = budget - claim_ids.len();
    let truncated = text_ids.len() > room;
    text_ids.truncate(room);
    Ok(TokenSequence::assemble(
        vocab,
        geometry,
        &claim_ids,
        Some(&text_ids),
        truncated,
    ))
}
