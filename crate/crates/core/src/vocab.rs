//! Token/id vocabulary with reserved specials and per-language routing tokens.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::corpus::{routing_token, LanguageSet, SentencePair};
use crate::error::{Error, Result};

/// Reserved ids, always present and always first.
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bijective token <-> id map.
///
/// Layout: `<pad>`, `<s>`, `</s>`, `<unk>`, one routing token `<2xx>` per
/// configured language (sorted by language code), then content tokens by
/// descending corpus frequency with ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_of: HashMap<String, usize>,
    token_of: Vec<String>,
    languages: Vec<String>,
}

impl Vocabulary {
    /// Builds the vocabulary over every pair of every corpus.
    ///
    /// `min_count` drops content tokens seen fewer times; `max_size` caps the
    /// total vocabulary size (specials included; specials are never dropped).
    pub fn build(
        corpora: &[&[SentencePair]],
        languages: &LanguageSet,
        min_count: usize,
        max_size: usize,
    ) -> Result<Self> {
        if corpora.iter().all(|c| c.is_empty()) {
            return Err(Error::contract("cannot build a vocabulary from empty corpora".to_string()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for corpus in corpora {
            for pair in corpus.iter() {
                for tok in pair.source_tokens.iter().chain(pair.target_tokens.iter()) {
                    *counts.entry(tok.as_str()).or_insert(0) += 1;
                }
            }
        }

        let mut token_of: Vec<String> = vec![
            PAD_TOKEN.to_string(),
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        for lang in languages.codes() {
            token_of.push(routing_token(lang));
        }

        let reserved: Vec<String> = token_of.clone();
        let mut content: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(tok, count)| *count >= min_count && !reserved.iter().any(|r| r == tok))
            .collect();
        content.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        for (tok, _) in content {
            if token_of.len() >= max_size {
                break;
            }
            token_of.push(tok.to_string());
        }

        Self::from_tokens(token_of, languages.codes().to_vec())
    }

    fn from_tokens(token_of: Vec<String>, languages: Vec<String>) -> Result<Self> {
        let mut id_of = HashMap::with_capacity(token_of.len());
        for (id, tok) in token_of.iter().enumerate() {
            if id_of.insert(tok.clone(), id).is_some() {
                return Err(Error::contract(format!("duplicate token in vocabulary: {tok:?}")));
            }
        }
        Ok(Vocabulary { id_of, token_of, languages })
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    /// Id of a token, falling back to `<unk>`.
    pub fn encode_token(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id of a token, `None` when out of vocabulary.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.token_of[id]
    }

    /// Routing-token id for a configured language.
    pub fn lang_token_id(&self, lang: &str) -> Result<usize> {
        self.id_of.get(&routing_token(lang)).copied().ok_or_else(|| {
            Error::config(format!(
                "language {lang:?} has no routing token in this vocabulary (configured: {:?})",
                self.languages
            ))
        })
    }

    /// FNV-1a content hash over the ordered token list; used to pair
    /// checkpoints with the vocabulary they were trained against.
    pub fn content_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        for tok in &self.token_of {
            for b in tok.as_bytes() {
                hash ^= u64::from(*b);
                hash = hash.wrapping_mul(0x100000001b3);
            }
            hash ^= u64::from(b'\n');
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }

    /// One token per line; line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for tok in &self.token_of {
            writeln!(out, "{tok}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Encoding {
            path: path.to_path_buf(),
            offset: e.utf8_error().valid_up_to(),
        })?;
        let token_of: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if token_of.len() < 4
            || token_of[PAD_ID] != PAD_TOKEN
            || token_of[BOS_ID] != BOS_TOKEN
            || token_of[EOS_ID] != EOS_TOKEN
            || token_of[UNK_ID] != UNK_TOKEN
        {
            return Err(Error::format(format!(
                "vocabulary file {path:?} does not start with the reserved specials"
            )));
        }
        // Routing tokens sit directly after the specials.
        let mut languages = Vec::new();
        for tok in token_of.iter().skip(4) {
            match parse_routing_token(tok) {
                Some(lang) => languages.push(lang.to_string()),
                None => break,
            }
        }
        Self::from_tokens(token_of, languages)
    }
}

/// Language code of a well-formed routing token `<2xx>`.
fn parse_routing_token(token: &str) -> Option<&str> {
    let inner = token.strip_prefix("<2")?.strip_suffix('>')?;
    if !inner.is_empty() && inner.chars().all(|c| c.is_ascii_lowercase()) {
        Some(inner)
    } else {
        None
    }
}
