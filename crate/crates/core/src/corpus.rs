//! Parallel-corpus ingestion: tokenization, routing tokens, length
//! filtering, integer encoding and padded batching.

use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, BOS_ID, EOS_ID, PAD_ID};

/// Default sentence-length cap; longer pairs are dropped entirely.
pub const DEFAULT_MAX_SENTENCE_LEN: usize = 30;

/// One aligned sentence pair, already tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub source_lang: String,
    pub target_lang: String,
}

/// The configured set of language codes (lowercase ASCII).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageSet {
    codes: Vec<String>,
}

impl LanguageSet {
    pub fn new(codes: &[String]) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::config("language set must not be empty".to_string()));
        }
        for code in codes {
            if code.is_empty() || !code.chars().all(|c| c.is_ascii_lowercase()) {
                return Err(Error::config(format!(
                    "language code {code:?} must be nonempty lowercase ASCII"
                )));
            }
        }
        let mut codes = codes.to_vec();
        codes.sort();
        codes.dedup();
        Ok(LanguageSet { codes })
    }

    /// Codes in sorted order.
    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn contains(&self, code: &str) -> bool {
        self.codes.iter().any(|c| c == code)
    }
}

/// The reserved routing token for a target language, e.g. `<2hi>`.
pub fn routing_token(lang: &str) -> String {
    format!("<2{lang}>")
}

/// Characters split off as standalone punctuation tokens. ASCII punctuation
/// plus the Devanagari danda/double danda and common typographic marks.
/// Combining marks and matras are deliberately NOT in this set: splitting on
/// general Unicode categories would break Devanagari words apart.
fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{0964}' | '\u{0965}') // । ॥
        || matches!(c, '‘' | '’' | '“' | '”' | '«' | '»' | '…' | '—' | '–' | '¿' | '¡')
}

/// Lowercases, splits punctuation into standalone tokens and splits on
/// whitespace. Scripts without case are unaffected by the lowercasing.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in line.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else {
            for lc in c.to_lowercase() {
                current.push(lc);
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Prepends the routing token naming the target language.
///
/// Pure prepend: callers must not apply it twice.
pub fn prepend_lang_token(
    tokens: &[String],
    target_lang: &str,
    languages: &LanguageSet,
) -> Result<Vec<String>> {
    if !languages.contains(target_lang) {
        return Err(Error::config(format!(
            "target language {target_lang:?} is not configured (known: {:?})",
            languages.codes()
        )));
    }
    let mut out = Vec::with_capacity(tokens.len() + 1);
    out.push(routing_token(target_lang));
    out.extend_from_slice(tokens);
    Ok(out)
}

/// Keeps exactly the pairs where BOTH sides have at most `max_len` tokens
/// (measured before routing-token prepending). Order is preserved.
pub fn filter_by_length(pairs: Vec<SentencePair>, max_len: usize) -> Result<Vec<SentencePair>> {
    if max_len < 1 {
        return Err(Error::contract(format!("max_len must be at least 1, got {max_len}")));
    }
    Ok(pairs
        .into_iter()
        .filter(|p| p.source_tokens.len() <= max_len && p.target_tokens.len() <= max_len)
        .collect())
}

/// Encoded, padded batch ready for the trainer.
///
/// `target_in` starts with `<s>`; `target_out` ends with `</s>`; both are
/// padded to the batch maximum with `<pad>` and `mask` is 1 exactly on the
/// real `target_out` positions (so each mask row sums to the true target
/// length plus one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source_ids: Vec<Vec<usize>>,
    pub source_lengths: Vec<usize>,
    pub target_in: Vec<Vec<usize>>,
    pub target_out: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_ids.is_empty()
    }
}

/// Encodes pairs (source side already routing-token-prepended) into a padded
/// batch. Unknown tokens map to `<unk>`.
pub fn encode_batch(pairs: &[SentencePair], vocab: &Vocabulary) -> Result<Batch> {
    if pairs.is_empty() {
        return Err(Error::contract("encode_batch needs at least one pair".to_string()));
    }
    let max_src = pairs.iter().map(|p| p.source_tokens.len()).max().unwrap();
    let max_tgt = pairs.iter().map(|p| p.target_tokens.len()).max().unwrap() + 1;

    let mut batch = Batch {
        source_ids: Vec::with_capacity(pairs.len()),
        source_lengths: Vec::with_capacity(pairs.len()),
        target_in: Vec::with_capacity(pairs.len()),
        target_out: Vec::with_capacity(pairs.len()),
        mask: Vec::with_capacity(pairs.len()),
    };
    for p in pairs {
        if p.source_tokens.is_empty() || p.target_tokens.is_empty() {
            return Err(Error::contract(
                "encode_batch requires nonempty source and target token lists".to_string(),
            ));
        }
        let mut src: Vec<usize> = p.source_tokens.iter().map(|t| vocab.encode_token(t)).collect();
        batch.source_lengths.push(src.len());
        src.resize(max_src, PAD_ID);
        batch.source_ids.push(src);

        let tgt: Vec<usize> = p.target_tokens.iter().map(|t| vocab.encode_token(t)).collect();
        let mut tin = Vec::with_capacity(max_tgt);
        tin.push(BOS_ID);
        tin.extend_from_slice(&tgt);
        tin.resize(max_tgt, PAD_ID);
        let mut tout = tgt.clone();
        tout.push(EOS_ID);
        let true_len = tout.len();
        tout.resize(max_tgt, PAD_ID);
        let mut mask = vec![true; true_len];
        mask.resize(max_tgt, false);
        batch.target_in.push(tin);
        batch.target_out.push(tout);
        batch.mask.push(mask);
    }
    Ok(batch)
}

/// Hindi inflectional suffixes stripped by [`stem_hindi`], longest first.
/// A small subset of the standard lightweight Hindi stemmer tables covering
/// plural/oblique noun endings and frequent verb endings.
pub const HINDI_SUFFIXES: &[&str] = &[
    "\u{093F}\u{092F}\u{094B}\u{0902}", // ियों
    "\u{093F}\u{092F}\u{093E}\u{0901}", // ियाँ
    "\u{093F}\u{092F}\u{093E}\u{0902}", // ियां
    "\u{093E}\u{0913}\u{0902}",         // ाओं
    "\u{093E}\u{090F}\u{0902}",         // ाएं
    "\u{093E}\u{090F}\u{0901}",         // ाएँ
    "\u{0941}\u{0913}\u{0902}",         // ुओं
    "\u{0941}\u{090F}\u{0902}",         // ुएं
    "\u{0924}\u{0940}\u{0902}",         // तीं
    "\u{094B}\u{0902}",                 // ों
    "\u{0947}\u{0902}",                 // ें
    "\u{0940}\u{0902}",                 // ीं
    "\u{093E}\u{0901}",                 // ाँ
    "\u{093E}\u{0902}",                 // ां
    "\u{0928}\u{093E}",                 // ना
    "\u{0928}\u{0947}",                 // ने
    "\u{0924}\u{093E}",                 // ता
    "\u{0924}\u{0940}",                 // ती
    "\u{0924}\u{0947}",                 // ते
];

/// Strips one suffix from [`HINDI_SUFFIXES`] (longest match first) from each
/// token, never leaving fewer than two characters. Non-Devanagari tokens
/// pass through unchanged. Off by default; enabled by a preprocessing flag.
pub fn stem_hindi(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| stem_hindi_token(t)).collect()
}

fn stem_hindi_token(token: &str) -> String {
    let n_chars = token.chars().count();
    for suffix in HINDI_SUFFIXES {
        if let Some(stem) = token.strip_suffix(suffix) {
            let suffix_chars = suffix.chars().count();
            if n_chars - suffix_chars >= 2 {
                return stem.to_string();
            }
        }
    }
    token.to_string()
}

/// Reads a UTF-8 text file into lines, reporting the byte offset of any
/// invalid UTF-8.
pub fn read_utf8_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Encoding {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

/// Raw aligned sentence pairs from `<base>.<src_lang>` + `<base>.<tgt_lang>`
/// line files.
pub fn load_aligned_files(base: &Path, src_lang: &str, tgt_lang: &str) -> Result<Vec<(String, String)>> {
    let src_path = base.with_extension(src_lang);
    let tgt_path = base.with_extension(tgt_lang);
    let src_lines = read_utf8_lines(&src_path)?;
    let tgt_lines = read_utf8_lines(&tgt_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::format(format!(
            "aligned files disagree: {src_path:?} has {} lines, {tgt_path:?} has {}",
            src_lines.len(),
            tgt_lines.len()
        )));
    }
    Ok(src_lines.into_iter().zip(tgt_lines).collect())
}

/// Raw sentence pairs from a TSV file (`source TAB target` per line).
pub fn load_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let lines = read_utf8_lines(path)?;
    let mut pairs = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut it = line.splitn(2, '\t');
        let src = it.next().unwrap_or_default();
        let tgt = it.next().ok_or_else(|| {
            Error::format_at(format!("TSV line has no TAB separator in {path:?}"), i + 1)
        })?;
        pairs.push((src.to_string(), tgt.to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("Hello, world."), vec!["hello", ",", "world", "."]);
    }

    #[test]
    fn tokenize_empty_line_is_empty() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn tokenize_devanagari_splits_on_whitespace_and_danda() {
        // "राम गच्छति।" — the danda is punctuation, matras stay inside words.
        let line = "\u{930}\u{93E}\u{92E} \u{917}\u{91A}\u{94D}\u{91B}\u{924}\u{93F}\u{964}";
        let toks = tokenize(line);
        assert_eq!(
            toks,
            vec![
                "\u{930}\u{93E}\u{92E}".to_string(),
                "\u{917}\u{91A}\u{94D}\u{91B}\u{924}\u{93F}".to_string(),
                "\u{964}".to_string(),
            ]
        );
    }

    fn langs() -> LanguageSet {
        LanguageSet::new(&["hi".to_string(), "pt".to_string()]).unwrap()
    }

    #[test]
    fn prepend_adds_routing_token_at_head() {
        let out = prepend_lang_token(&["namaste".to_string()], "hi", &langs()).unwrap();
        assert_eq!(out, vec!["<2hi>".to_string(), "namaste".to_string()]);
    }

    #[test]
    fn prepend_on_empty_sentence_yields_just_the_token() {
        let out = prepend_lang_token(&[], "pt", &langs()).unwrap();
        assert_eq!(out, vec!["<2pt>".to_string()]);
    }

    #[test]
    fn prepend_is_not_idempotent_by_design() {
        let once = prepend_lang_token(&["x".to_string()], "hi", &langs()).unwrap();
        let twice = prepend_lang_token(&once, "hi", &langs()).unwrap();
        assert_eq!(
            twice,
            vec!["<2hi>".to_string(), "<2hi>".to_string(), "x".to_string()]
        );
    }

    #[test]
    fn prepend_unknown_language_is_a_config_error() {
        let err = prepend_lang_token(&[], "zz", &langs()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn pair_of_lengths(src: usize, tgt: usize) -> SentencePair {
        SentencePair {
            source_tokens: (0..src).map(|i| format!("s{i}")).collect(),
            target_tokens: (0..tgt).map(|i| format!("t{i}")).collect(),
            source_lang: "hi".to_string(),
            target_lang: "pt".to_string(),
        }
    }

    #[test]
    fn filter_removes_31_token_side_and_keeps_30() {
        let pairs = vec![pair_of_lengths(31, 5), pair_of_lengths(30, 30), pair_of_lengths(5, 31)];
        let kept = filter_by_length(pairs, 30).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].source_tokens.len(), 30);
    }

    #[test]
    fn filter_of_empty_list_is_empty() {
        assert!(filter_by_length(Vec::new(), 30).unwrap().is_empty());
    }

    #[test]
    fn stemmer_strips_listed_suffix() {
        // लड़कों -> लड़क
        let word = "\u{932}\u{95C}\u{915}\u{94B}\u{902}".to_string();
        let out = stem_hindi(&[word]);
        assert_eq!(out, vec!["\u{932}\u{95C}\u{915}".to_string()]);
    }

    #[test]
    fn stemmer_leaves_unsuffixed_and_short_tokens_alone() {
        let words = vec!["hello".to_string(), "\u{092E}\u{0948}\u{0902}".to_string()];
        // मैं is two consonant chars + matra chain; stripping ीं/ें variants
        // would leave one char, so it must survive intact.
        let out = stem_hindi(&words);
        assert_eq!(out, words);
        assert!(stem_hindi(&[]).is_empty());
    }

    #[test]
    fn encode_batch_shapes_and_padding() {
        let vocab_pairs = vec![SentencePair {
            source_tokens: tokenize("a b c d"),
            target_tokens: tokenize("a b c d"),
            source_lang: "hi".to_string(),
            target_lang: "pt".to_string(),
        }];
        let vocab = Vocabulary::build(&[&vocab_pairs], &langs(), 1, 100).unwrap();

        let one = vec![SentencePair {
            source_tokens: vec!["<2pt>".into(), "a".into(), "b".into()],
            target_tokens: vec!["a".into()],
            source_lang: "hi".into(),
            target_lang: "pt".into(),
        }];
        let batch = encode_batch(&one, &vocab).unwrap();
        assert_eq!(batch.source_ids.len(), 1);
        assert_eq!(batch.source_ids[0].len(), 3);

        let two = vec![
            SentencePair {
                source_tokens: vec!["<2pt>".into(), "a".into()],
                target_tokens: vec!["a".into()],
                source_lang: "hi".into(),
                target_lang: "pt".into(),
            },
            SentencePair {
                source_tokens: vec!["<2pt>".into(), "a".into(), "b".into(), "c".into()],
                target_tokens: vec!["a".into(), "b".into(), "c".into()],
                source_lang: "hi".into(),
                target_lang: "pt".into(),
            },
        ];
        let batch = encode_batch(&two, &vocab).unwrap();
        // Shorter source row padded with two <pad> ids.
        assert_eq!(batch.source_ids[0].len(), 4);
        assert_eq!(&batch.source_ids[0][2..], &[PAD_ID, PAD_ID]);
        assert_eq!(batch.source_lengths, vec![2, 4]);
        // target_in starts with <s>, target_out ends with </s> at true length.
        assert_eq!(batch.target_in[0][0], BOS_ID);
        assert_eq!(batch.target_out[0][1], EOS_ID);
        // Mask row-sums are true target length + 1.
        let sums: Vec<usize> =
            batch.mask.iter().map(|row| row.iter().filter(|&&b| b).count()).collect();
        assert_eq!(sums, vec![2, 4]);
        // Shifted-by-one alignment between target_in and target_out.
        for (tin, tout) in batch.target_in.iter().zip(&batch.target_out) {
            for t in 1..tin.len() {
                if tout[t - 1] != EOS_ID && tout[t - 1] != PAD_ID {
                    assert_eq!(tin[t], tout[t - 1]);
                }
            }
        }
    }

    #[test]
    fn encode_decode_round_trip_for_in_vocab_tokens() {
        let base = vec![SentencePair {
            source_tokens: tokenize("u v w"),
            target_tokens: tokenize("x y"),
            source_lang: "hi".to_string(),
            target_lang: "pt".to_string(),
        }];
        let vocab = Vocabulary::build(&[&base], &langs(), 1, 100).unwrap();
        let tokens = vec!["<2pt>".to_string(), "u".to_string(), "w".to_string()];
        let ids: Vec<usize> = tokens.iter().map(|t| vocab.encode_token(t)).collect();
        let back: Vec<String> = ids.iter().map(|&i| vocab.token(i).to_string()).collect();
        assert_eq!(back, tokens);
    }

    #[test]
    fn tsv_and_aligned_files_load_identically() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("corpus.hi"), "one two\nthree\n").unwrap();
        std::fs::write(dir.path().join("corpus.pt"), "um dois\ntres\n").unwrap();
        std::fs::write(dir.path().join("corpus.tsv"), "one two\tum dois\nthree\ttres\n").unwrap();
        let aligned = load_aligned_files(&dir.path().join("corpus"), "hi", "pt").unwrap();
        let tsv = load_tsv(&dir.path().join("corpus.tsv")).unwrap();
        assert_eq!(aligned, tsv);
        assert_eq!(aligned.len(), 2);
    }

    #[test]
    fn invalid_utf8_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, [b'o', b'k', 0xFF, b'x']).unwrap();
        match read_utf8_lines(&path) {
            Err(Error::Encoding { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected encoding error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn filter_output_is_a_subset_meeting_the_bound(
            lens in proptest::collection::vec((1usize..40, 1usize..40), 0..30),
            max_len in 1usize..35,
        ) {
            let pairs: Vec<SentencePair> =
                lens.iter().map(|&(s, t)| pair_of_lengths(s, t)).collect();
            let kept = filter_by_length(pairs.clone(), max_len).unwrap();
            prop_assert!(kept.len() <= pairs.len());
            let mut cursor = pairs.iter();
            for k in &kept {
                prop_assert!(k.source_tokens.len() <= max_len);
                prop_assert!(k.target_tokens.len() <= max_len);
                // Order-preserving subset: each kept pair occurs later in the input.
                prop_assert!(cursor.any(|p| p == k));
            }
        }

        #[test]
        fn prepend_grows_by_one_with_routing_head(
            tokens in proptest::collection::vec("[a-z]{1,6}", 0..10),
            lang in "[a-z]{2,3}",
        ) {
            let langs = LanguageSet::new(&[lang.clone()]).unwrap();
            let tokens: Vec<String> = tokens;
            let out = prepend_lang_token(&tokens, &lang, &langs).unwrap();
            prop_assert_eq!(out.len(), tokens.len() + 1);
            let head = &out[0];
            prop_assert!(head.starts_with("<2") && head.ends_with('>'));
            prop_assert!(head[2..head.len() - 1].chars().all(|c| c.is_ascii_lowercase()));
        }
    }
}
