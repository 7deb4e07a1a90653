//! Corpus-level BLEU-4 with clipped n-gram counts and brevity penalty.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

/// How zero n-gram matches are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Any zero precision zeroes the whole score.
    None,
    /// A zero match count for an order becomes 1 in the numerator and adds 1
    /// to that order's denominator; other orders are untouched.
    AddOneOnZero,
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothing::None => write!(f, "none"),
            Smoothing::AddOneOnZero => write!(f, "add-one-on-zero"),
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Smoothing::None),
            "add-one-on-zero" => Ok(Smoothing::AddOneOnZero),
            other => Err(Error::config(format!(
                "unknown smoothing {other:?} (expected \"none\" or \"add-one-on-zero\")"
            ))),
        }
    }
}

/// The full scoring breakdown, self-describing about its smoothing mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Clipped modified precisions p1..p4, after smoothing.
    pub precisions: [f64; MAX_ORDER],
    /// exp(1 - r/c) when the hypothesis corpus is shorter, else 1.
    pub brevity_penalty: f64,
    /// Final score in [0, 1].
    pub score: f64,
    pub hypothesis_length: usize,
    pub reference_length: usize,
    pub smoothing: Smoothing,
}

impl BleuReport {
    /// key=value rendering; scores are in [0, 1] unless `percent` is set.
    pub fn render(&self, percent: bool) -> String {
        let factor = if percent { 100.0 } else { 1.0 };
        let mut out = String::new();
        out.push_str(&format!("bleu={:.6}\n", self.score * factor));
        for (i, p) in self.precisions.iter().enumerate() {
            out.push_str(&format!("p{}={:.6}\n", i + 1, p * factor));
        }
        out.push_str(&format!("brevity_penalty={:.6}\n", self.brevity_penalty));
        out.push_str(&format!("hypothesis_length={}\n", self.hypothesis_length));
        out.push_str(&format!("reference_length={}\n", self.reference_length));
        out.push_str(&format!("smoothing={}\n", self.smoothing));
        out
    }

    /// Single CSV row matching [`BleuReport::csv_header`].
    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            self.score,
            self.precisions[0],
            self.precisions[1],
            self.precisions[2],
            self.precisions[3],
            self.brevity_penalty,
            self.hypothesis_length,
            self.reference_length,
            self.smoothing
        )
    }

    pub fn csv_header() -> &'static str {
        "bleu,p1,p2,p3,p4,brevity_penalty,hypothesis_length,reference_length,smoothing"
    }
}

/// Corpus-level BLEU-4 of line-aligned single-reference corpora.
pub fn bleu(
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
    smoothing: Smoothing,
) -> Result<BleuReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::contract(format!(
            "hypothesis/reference corpora differ in length: {} vs {}",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::contract("cannot score an empty corpus".to_string()));
    }

    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            if hyp.len() < n {
                continue;
            }
            totals[n - 1] += (hyp.len() - n + 1) as u64;
            let mut ref_counts: HashMap<&[String], u64> = HashMap::new();
            if reference.len() >= n {
                for gram in reference.windows(n) {
                    *ref_counts.entry(gram).or_insert(0) += 1;
                }
            }
            let mut hyp_counts: HashMap<&[String], u64> = HashMap::new();
            for gram in hyp.windows(n) {
                *hyp_counts.entry(gram).or_insert(0) += 1;
            }
            for (gram, count) in hyp_counts {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matches[n - 1] += count.min(clip);
            }
        }
    }

    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut zeroed = false;
    for n in 0..MAX_ORDER {
        let p = if totals[n] == 0 {
            // Nothing of this order to assess; no smoothing can apply.
            0.0
        } else if matches[n] > 0 {
            matches[n] as f64 / totals[n] as f64
        } else {
            match smoothing {
                Smoothing::None => 0.0,
                Smoothing::AddOneOnZero => 1.0 / (totals[n] + 1) as f64,
            }
        };
        precisions[n] = p;
        if p > 0.0 {
            log_sum += p.ln();
        } else {
            zeroed = true;
        }
    }

    let brevity_penalty = if hyp_len < ref_len && hyp_len > 0 {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if zeroed {
        0.0
    } else {
        brevity_penalty * (log_sum / MAX_ORDER as f64).exp()
    };

    Ok(BleuReport {
        precisions,
        brevity_penalty,
        score,
        hypothesis_length: hyp_len,
        reference_length: ref_len,
        smoothing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    /// Naive reference scorer: enumerates every n-gram of every hypothesis
    /// and looks it up in the reference by scanning, no hash maps. Kept
    /// deliberately independent of the fast path.
    fn brute_force_bleu(
        hyps: &[Vec<String>],
        refs: &[Vec<String>],
        smoothing: Smoothing,
    ) -> BleuReport {
        let mut matches = [0u64; 4];
        let mut totals = [0u64; 4];
        let mut hyp_len = 0;
        let mut ref_len = 0;
        for (hyp, reference) in hyps.iter().zip(refs) {
            hyp_len += hyp.len();
            ref_len += reference.len();
            for n in 1..=4usize {
                if hyp.len() < n {
                    continue;
                }
                totals[n - 1] += (hyp.len() - n + 1) as u64;
                // Count each distinct hypothesis n-gram exactly once, clipped
                // against the reference occurrence count.
                let hyp_grams: Vec<&[String]> = hyp.windows(n).collect();
                for (pos, gram) in hyp_grams.iter().enumerate() {
                    if hyp_grams[..pos].iter().any(|g| g == gram) {
                        continue;
                    }
                    let in_hyp = hyp_grams.iter().filter(|g| g == &gram).count() as u64;
                    let in_ref = if reference.len() >= n {
                        reference.windows(n).filter(|g| g == gram).count() as u64
                    } else {
                        0
                    };
                    matches[n - 1] += in_hyp.min(in_ref);
                }
            }
        }
        let mut precisions = [0.0; 4];
        let mut log_sum = 0.0;
        let mut zeroed = false;
        for n in 0..4 {
            let p = if totals[n] == 0 {
                0.0
            } else if matches[n] > 0 {
                matches[n] as f64 / totals[n] as f64
            } else if smoothing == Smoothing::AddOneOnZero {
                1.0 / (totals[n] + 1) as f64
            } else {
                0.0
            };
            precisions[n] = p;
            if p > 0.0 {
                log_sum += p.ln();
            } else {
                zeroed = true;
            }
        }
        let bp = if hyp_len < ref_len && hyp_len > 0 {
            (1.0 - ref_len as f64 / hyp_len as f64).exp()
        } else {
            1.0
        };
        BleuReport {
            precisions,
            brevity_penalty: bp,
            score: if zeroed { 0.0 } else { bp * (log_sum / 4.0).exp() },
            hypothesis_length: hyp_len,
            reference_length: ref_len,
            smoothing,
        }
    }

    #[test]
    fn identical_corpora_score_one() {
        let corpus = vec![toks("a b c d e"), toks("f g h i")];
        let report = bleu(&corpus, &corpus, Smoothing::None).unwrap();
        assert_eq!(report.score, 1.0);
        assert_eq!(report.brevity_penalty, 1.0);
        assert_eq!(report.precisions, [1.0; 4]);
    }

    #[test]
    fn zero_unigram_overlap_scores_zero_unsmoothed() {
        let report =
            bleu(&[toks("x y z w")], &[toks("a b c d")], Smoothing::None).unwrap();
        assert_eq!(report.score, 0.0);
        assert_eq!(report.precisions[0], 0.0);
    }

    #[test]
    fn worked_example_matches_the_hand_count() {
        // hyp "the cat on the mat" vs ref "the cat sat on the mat":
        // p1=5/5, p2=3/4, p3=1/3, p4=0/2 -> smoothed 1/3; BP=exp(1-6/5).
        let report = bleu(
            &[toks("the cat on the mat")],
            &[toks("the cat sat on the mat")],
            Smoothing::AddOneOnZero,
        )
        .unwrap();
        assert_eq!(report.precisions[0], 1.0);
        assert_eq!(report.precisions[1], 0.75);
        assert!((report.precisions[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.precisions[3] - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.brevity_penalty - (1.0f64 - 6.0 / 5.0).exp()).abs() < 1e-12);
        let expected =
            (1.0f64 - 6.0 / 5.0).exp() * (0.75f64 * (1.0 / 3.0) * (1.0 / 3.0)).powf(0.25);
        assert!((report.score - expected).abs() < 1e-12);
        // Same example scores zero without smoothing (p4 = 0).
        let unsmoothed = bleu(
            &[toks("the cat on the mat")],
            &[toks("the cat sat on the mat")],
            Smoothing::None,
        )
        .unwrap();
        assert_eq!(unsmoothed.score, 0.0);
    }

    #[test]
    fn length_mismatch_and_empty_corpus_are_contract_errors() {
        assert!(matches!(
            bleu(&[toks("a")], &[], Smoothing::None),
            Err(Error::Contract(_))
        ));
        assert!(matches!(bleu(&[], &[], Smoothing::None), Err(Error::Contract(_))));
    }

    #[test]
    fn repetition_is_clipped_by_reference_count() {
        // "the" appears twice in the reference; repeating it 6 times caps
        // p1 at 2/6.
        let report = bleu(
            &[toks("the the the the the the")],
            &[toks("the cat sat on the mat")],
            Smoothing::None,
        )
        .unwrap();
        assert!((report.precisions[0] - 2.0 / 6.0).abs() < 1e-12);
    }

    fn random_corpus(rng: &mut SeededRng, sentences: usize) -> Vec<Vec<String>> {
        let alphabet = ["a", "b", "c", "d", "e"];
        (0..sentences)
            .map(|_| {
                let len = 1 + rng.below(9);
                (0..len).map(|_| alphabet[rng.below(alphabet.len())].to_string()).collect()
            })
            .collect()
    }

    #[test]
    fn fast_path_equals_brute_force_on_random_corpora() {
        let mut rng = SeededRng::new(31337);
        for case in 0..100 {
            let n = 1 + rng.below(6);
            let hyps = random_corpus(&mut rng, n);
            let refs = random_corpus(&mut rng, n);
            for smoothing in [Smoothing::None, Smoothing::AddOneOnZero] {
                let fast = bleu(&hyps, &refs, smoothing).unwrap();
                let slow = brute_force_bleu(&hyps, &refs, smoothing);
                assert_eq!(fast.precisions, slow.precisions, "case {case}");
                assert_eq!(fast.score, slow.score, "case {case}");
                assert_eq!(fast.brevity_penalty, slow.brevity_penalty, "case {case}");
            }
        }
    }

    proptest! {
        /// Deleting a hypothesis token never raises the clipped unigram
        /// numerator. (Higher orders enjoy no such monotonicity: removing a
        /// token can join its neighbours into a brand-new matching n-gram,
        /// e.g. hyp "a x b" vs ref "a b x" gains the bigram "a b" when "x"
        /// is deleted. The counter is the brute-force scan.)
        #[test]
        fn deleting_a_token_never_raises_clipped_unigram_matches(
            seed in 0u64..500,
        ) {
            let mut rng = SeededRng::new(seed);
            let hyps = random_corpus(&mut rng, 3);
            let refs = random_corpus(&mut rng, 3);
            prop_assume!(hyps.iter().all(|h| h.len() >= 2));

            let unigram_matches = |hyps: &[Vec<String>]| -> u64 {
                let mut m = 0;
                for (hyp, reference) in hyps.iter().zip(&refs) {
                    let mut seen: Vec<&String> = Vec::new();
                    for tok in hyp {
                        if seen.contains(&tok) { continue; }
                        seen.push(tok);
                        let in_hyp = hyp.iter().filter(|t| *t == tok).count() as u64;
                        let in_ref = reference.iter().filter(|t| *t == tok).count() as u64;
                        m += in_hyp.min(in_ref);
                    }
                }
                m
            };

            let before = unigram_matches(&hyps);
            let mut mutated = hyps.clone();
            let victim = rng.below(mutated.len());
            let pos = rng.below(mutated[victim].len());
            mutated[victim].remove(pos);
            let after = unigram_matches(&mutated);
            prop_assert!(after <= before, "unigram matches rose: {before} -> {after}");
        }
    }
}
