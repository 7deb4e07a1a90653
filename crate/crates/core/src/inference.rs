//! Greedy translation with attention-weight capture.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{ModelParams, TapedModel};
use crate::tape::Tape;
use crate::tensor::argmax;
use crate::vocab::{Vocabulary, BOS_ID, EOS_ID, PAD_ID};

/// Why decoding stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    EndToken,
    LengthCap,
}

impl std::fmt::Display for EndReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EndReason::EndToken => write!(f, "end-token"),
            EndReason::LengthCap => write!(f, "length-cap"),
        }
    }
}

/// A finished translation. `attention` has one row per output token, each
/// row a distribution over the encoder input positions (routing token
/// included at position 0).
#[derive(Debug, Clone)]
pub struct Translation {
    /// The encoder's actual input: routing token plus source tokens.
    pub source_tokens: Vec<String>,
    /// Surface output; never contains `<s>`, `</s>` or `<pad>`.
    pub tokens: Vec<String>,
    pub attention: Vec<Vec<f64>>,
    pub ended_by: EndReason,
}

pub const DEFAULT_MAX_DECODE_LEN: usize = 50;

/// Greedily translates one sentence into `target_lang`.
///
/// The routing token is always prepended (identically for seen and
/// zero-shot pairs); out-of-vocabulary source tokens map to `<unk>`; ties in
/// the argmax resolve to the lowest token id; decoding stops at `</s>` or
/// after `max_len` steps.
pub fn greedy_translate(
    source: &[String],
    target_lang: &str,
    params: &ModelParams,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Translation> {
    if source.is_empty() {
        return Err(Error::contract("cannot translate an empty sentence".to_string()));
    }
    if params.vocab_hash != vocab.content_hash() {
        return Err(Error::compatibility(format!(
            "model was trained against vocabulary hash {:016x}, got {:016x}",
            params.vocab_hash,
            vocab.content_hash()
        )));
    }
    let routing_id = vocab.lang_token_id(target_lang)?;

    let mut source_tokens = Vec::with_capacity(source.len() + 1);
    source_tokens.push(vocab.token(routing_id).to_string());
    let mut source_ids = Vec::with_capacity(source.len() + 1);
    source_ids.push(routing_id);
    for tok in source {
        let id = vocab.encode_token(tok);
        source_ids.push(id);
        source_tokens.push(tok.clone());
    }

    let mut tape = Tape::new();
    let model = TapedModel::register_with_overrides(&mut tape, params, &HashMap::new())?;
    let encoded = model.encode(&mut tape, &source_ids)?;

    let mut state = (encoded.h0, encoded.c0);
    let mut prev = BOS_ID;
    let mut tokens = Vec::new();
    let mut attention = Vec::new();
    let mut ended_by = EndReason::LengthCap;
    for _ in 0..max_len {
        let (logits, next_state, weights) =
            model.decode_step(&mut tape, prev, state, &encoded)?;
        state = next_state;
        let chosen = argmax(tape.value(logits));
        if chosen == EOS_ID {
            ended_by = EndReason::EndToken;
            break;
        }
        // <pad> and <s> never surface; anything else renders literally.
        if chosen != PAD_ID && chosen != BOS_ID {
            tokens.push(vocab.token(chosen).to_string());
            attention.push(tape.value(weights).to_vec());
        }
        prev = chosen;
    }

    Ok(Translation { source_tokens, tokens, attention, ended_by })
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Renders the attention matrix as CSV: source tokens as column headers,
/// output tokens as row labels.
pub fn export_attention(t: &Translation) -> String {
    let mut out = String::new();
    let header: Vec<String> = std::iter::once(String::new())
        .chain(t.source_tokens.iter().map(|s| csv_escape(s)))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (token, row) in t.tokens.iter().zip(&t.attention) {
        let mut fields = vec![csv_escape(token)];
        fields.extend(row.iter().map(|w| format!("{w:.6}")));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, LanguageSet, SentencePair};
    use crate::model::ModelConfig;
    use crate::rng::SeededRng;

    fn fixture() -> (ModelParams, Vocabulary) {
        let langs = LanguageSet::new(&["aa".to_string(), "bb".to_string()]).unwrap();
        let pairs = vec![SentencePair {
            source_tokens: tokenize("one two three four five"),
            target_tokens: tokenize("uno dos tres cuatro cinco"),
            source_lang: "aa".to_string(),
            target_lang: "bb".to_string(),
        }];
        let vocab = Vocabulary::build(&[&pairs], &langs, 1, 100).unwrap();
        let config = ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 6,
            hidden: 6,
            attn_dim: 6,
            layers: 2,
            bidirectional: true,
        };
        let mut rng = SeededRng::new(77);
        let params = ModelParams::init(config, vocab.content_hash(), &mut rng, None).unwrap();
        (params, vocab)
    }

    #[test]
    fn translation_terminates_and_respects_the_cap() {
        let (params, vocab) = fixture();
        let source = tokenize("one two three");
        for cap in [1usize, 3, 7, 50] {
            let t = greedy_translate(&source, "bb", &params, &vocab, cap).unwrap();
            assert!(t.tokens.len() <= cap);
            if t.ended_by == EndReason::LengthCap {
                assert!(t.tokens.len() <= cap);
            }
        }
    }

    #[test]
    fn translation_is_deterministic_and_excludes_specials() {
        let (params, vocab) = fixture();
        let source = tokenize("five four one");
        let a = greedy_translate(&source, "bb", &params, &vocab, 20).unwrap();
        let b = greedy_translate(&source, "bb", &params, &vocab, 20).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.attention, b.attention);
        for tok in &a.tokens {
            assert!(tok != "<s>" && tok != "</s>" && tok != "<pad>");
        }
        // Encoder input starts with the routing token.
        assert_eq!(a.source_tokens[0], "<2bb>");
        assert_eq!(a.source_tokens.len(), source.len() + 1);
    }

    #[test]
    fn attention_rows_align_with_output_and_sum_to_one() {
        let (params, vocab) = fixture();
        let source = tokenize("two three four five");
        let t = greedy_translate(&source, "aa", &params, &vocab, 15).unwrap();
        assert_eq!(t.attention.len(), t.tokens.len());
        for row in &t.attention {
            assert_eq!(row.len(), t.source_tokens.len());
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn oov_source_tokens_are_not_an_error() {
        let (params, vocab) = fixture();
        let source = vec!["synthetic".to_string(), "one".to_string()];
        let t = greedy_translate(&source, "bb", &params, &vocab, 10).unwrap();
        assert_eq!(t.source_tokens[1], "synthetic");
    }

    #[test]
    fn contract_violations_are_typed() {
        let (params, vocab) = fixture();
        assert!(matches!(
            greedy_translate(&[], "bb", &params, &vocab, 10),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            greedy_translate(&tokenize("one"), "zz", &params, &vocab, 10),
            Err(Error::Config(_))
        ));

        let mut stale = params;
        stale.vocab_hash ^= 1;
        assert!(matches!(
            greedy_translate(&tokenize("one"), "bb", &stale, &vocab, 10),
            Err(Error::Compatibility(_))
        ));
    }

    #[test]
    fn export_attention_layout_matches_the_translation() {
        let t = Translation {
            source_tokens: vec!["<2bb>".into(), "a".into(), "b,c".into(), "d".into()],
            tokens: vec!["x".into(), "y".into(), "z".into()],
            attention: vec![vec![0.25; 4], vec![0.25; 4], vec![0.25; 4]],
            ended_by: EndReason::EndToken,
        };
        let csv = export_attention(&t);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], ",<2bb>,a,\"b,c\",d");
        for line in &lines[1..] {
            // Label plus 4 data columns, each row summing to ~1.
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5);
            let sum: f64 = fields[1..].iter().map(|f| f.parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn export_attention_of_empty_translation_is_header_only() {
        let t = Translation {
            source_tokens: vec!["<2bb>".into(), "a".into()],
            tokens: vec![],
            attention: vec![],
            ended_by: EndReason::EndToken,
        };
        let csv = export_attention(&t);
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(t.ended_by, EndReason::EndToken);
    }
}
