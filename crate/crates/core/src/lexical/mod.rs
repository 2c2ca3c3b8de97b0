//! Word-overlap metrics: ROUGE-L, BLEU and METEOR.
//!
//! All functions score a single candidate against its reference. Corpus-level
//! figures are the mean of per-pair scores (see [`crate::eval`]).

mod meteor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{ngrams, TokenSequence};

pub use meteor::{meteor, meteor_alignment, MeteorAlignment};

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_length(a: &TokenSequence, b: &TokenSequence) -> usize {
    let (a, b) = (a.tokens(), b.tokens());
    // keep the shorter sequence on the inner axis
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if inner.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; inner.len() + 1];
    let mut curr = vec![0usize; inner.len() + 1];
    for x in outer {
        for (j, y) in inner.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                curr[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[inner.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RougeConfig {
    /// Recall weight. `1.0` gives the plain harmonic mean.
    pub beta: f64,
}

impl Default for RougeConfig {
    fn default() -> Self {
        RougeConfig { beta: 1.0 }
    }
}

/// LCS-based F-measure between a candidate and a reference.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence, beta: f64) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * precision * recall / (recall + b2 * precision)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Replace a zero match count by `epsilon` before dividing.
    AddEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Modified n-gram precisions, index 0 holding unigrams.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// Set when the candidate had no tokens; the score is then 0.
    pub empty_candidate: bool,
}

/// Sentence BLEU with clipped n-gram counts and the standard brevity penalty.
///
/// The effective reference length is the reference length closest to the
/// candidate length, the shorter one on ties.
pub fn bleu(
    candidate: &TokenSequence,
    references: &[TokenSequence],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuScore> {
    if max_n == 0 {
        return Err(Error::InvalidInput("BLEU order must be at least 1".into()));
    }
    if candidate.is_empty() {
        return Ok(BleuScore {
            score: 0.0,
            precisions: vec![0.0; max_n],
            brevity_penalty: 0.0,
            empty_candidate: true,
        });
    }

    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let cand_counts = ngrams(candidate, n);
        let ref_counts: Vec<_> = references.iter().map(|r| ngrams(r, n)).collect();
        let total: usize = cand_counts.values().sum();
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &count)| {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                count.min(max_ref)
            })
            .sum();
        let p = match smoothing {
            _ if clipped > 0 => clipped as f64 / total as f64,
            Smoothing::None => 0.0,
            Smoothing::AddEpsilon(eps) => eps / total.max(1) as f64,
        };
        precisions.push(p);
    }

    let c = candidate.len();
    let r = references
        .iter()
        .map(TokenSequence::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let brevity_penalty = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };

    let score = if precisions.iter().any(|&p| p <= 0.0) {
        0.0
    } else {
        let w = 1.0 / max_n as f64;
        brevity_penalty * precisions.iter().map(|p| w * p.ln()).sum::<f64>().exp()
    };

    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        empty_candidate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexicalConfig {
    pub rouge: RougeConfig,
    pub bleu: BleuConfig,
}

impl LexicalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bleu.max_n == 0 {
            return Err(Error::Config("bleu.max_n must be at least 1".into()));
        }
        if !(self.rouge.beta.is_finite() && self.rouge.beta > 0.0) {
            return Err(Error::Config("rouge.beta must be a positive number".into()));
        }
        if let Smoothing::AddEpsilon(eps) = self.bleu.smoothing {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Config("bleu.smoothing epsilon must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-pair lexical scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalScores {
    pub rouge_l: f64,
    pub bleu1: f64,
    /// BLEU at the configured maximum order (4 unless overridden).
    pub bleu4: f64,
    pub meteor: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub empty_candidate: bool,
}

pub fn score_pair(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    config: &LexicalConfig,
) -> Result<LexicalScores> {
    let refs = std::slice::from_ref(reference);
    let bleu1 = bleu(candidate, refs, 1, config.bleu.smoothing)?;
    let bleu_n = bleu(candidate, refs, config.bleu.max_n, config.bleu.smoothing)?;
    Ok(LexicalScores {
        rouge_l: rouge_l(candidate, reference, config.rouge.beta),
        bleu1: bleu1.score,
        bleu4: bleu_n.score,
        meteor: meteor(candidate, reference),
        empty_candidate: bleu1.empty_candidate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words)
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(&seq(&["a", "b", "c"]), &seq(&["a", "b", "c"])), 3);
        assert_eq!(
            lcs_length(&seq(&["a", "b", "c", "d"]), &seq(&["a", "c", "b", "d"])),
            3
        );
        assert_eq!(lcs_length(&seq(&[]), &seq(&["a", "b"])), 0);
        assert_eq!(lcs_length(&seq(&["a"]), &seq(&[])), 0);
    }

    #[test]
    fn rouge_examples() {
        let a = seq(&["lungs", "are", "clear"]);
        assert_eq!(rouge_l(&a, &a, 1.0), 1.0);
        assert_eq!(rouge_l(&seq(&["a", "b"]), &seq(&["a", "c"]), 1.0), 0.5);
        assert_eq!(rouge_l(&seq(&["a", "b"]), &seq(&["c", "d"]), 1.0), 0.0);
        assert_eq!(rouge_l(&seq(&[]), &seq(&["c"]), 1.0), 0.0);
    }

    #[test]
    fn rouge_beta_weights_recall() {
        // LCS = 1, P = 1, R = 1/4
        let cand = seq(&["a"]);
        let reference = seq(&["a", "b", "c", "d"]);
        let f1 = rouge_l(&cand, &reference, 1.0);
        let f2 = rouge_l(&cand, &reference, 2.0);
        assert!((f1 - 0.4).abs() < 1e-12);
        // (1+4)*1*0.25 / (0.25 + 4)
        assert!((f2 - 1.25 / 4.25).abs() < 1e-12);
    }

    #[test]
    fn bleu_identity() {
        let s = seq(&["no", "acute", "cardiopulmonary", "process", "."]);
        let b = bleu(&s, std::slice::from_ref(&s), 4, Smoothing::None).unwrap();
        assert_eq!(b.score, 1.0);
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn bleu_clips_repeated_unigrams() {
        let b = bleu(&seq(&["a", "a"]), &[seq(&["a"])], 1, Smoothing::None).unwrap();
        assert_eq!(b.precisions, [0.5]);
        assert_eq!(b.brevity_penalty, 1.0);
        assert_eq!(b.score, 0.5);
    }

    #[test]
    fn bleu_brevity_penalty() {
        let b = bleu(
            &seq(&["a", "b"]),
            &[seq(&["a", "b", "c", "d"])],
            1,
            Smoothing::None,
        )
        .unwrap();
        assert!((b.score - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bleu_zero_precision_without_smoothing() {
        // no bigram overlap
        let b = bleu(&seq(&["a", "b"]), &[seq(&["b", "a"])], 2, Smoothing::None).unwrap();
        assert_eq!(b.score, 0.0);
        let s = bleu(
            &seq(&["a", "b"]),
            &[seq(&["b", "a"])],
            2,
            Smoothing::AddEpsilon(0.1),
        )
        .unwrap();
        // p1 = 1, p2 = 0.1 / 1
        assert!((s.score - 0.1f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bleu_empty_candidate_is_flagged() {
        let b = bleu(&seq(&[]), &[seq(&["a"])], 4, Smoothing::None).unwrap();
        assert!(b.empty_candidate);
        assert_eq!(b.score, 0.0);
        assert!(bleu(&seq(&["a"]), &[seq(&["a"])], 0, Smoothing::None).is_err());
    }

    #[test]
    fn bleu_picks_closest_reference_length() {
        let cand = seq(&["a", "b", "c"]);
        let refs = [seq(&["a", "b", "c", "d", "e", "f"]), seq(&["a", "b", "c", "d"])];
        let b = bleu(&cand, &refs, 1, Smoothing::None).unwrap();
        assert!((b.brevity_penalty - (1.0 - 4.0 / 3.0f64).exp()).abs() < 1e-15);
    }

    fn lcs_brute(a: &[String], b: &[String]) -> usize {
        // longest subsequence of `a` (by bitmask) that is also a subsequence of `b`
        let is_subseq = |sub: &[&String], full: &[String]| {
            let mut it = full.iter();
            sub.iter().all(|s| it.any(|f| f == *s))
        };
        (0u32..1 << a.len())
            .filter_map(|mask| {
                let sub: Vec<&String> =
                    (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
                is_subseq(&sub, b).then_some(sub.len())
            })
            .max()
            .unwrap_or(0)
    }

    fn small_seq(max: usize) -> impl Strategy<Value = TokenSequence> {
        proptest::collection::vec("[a-d]", 0..=max).prop_map(TokenSequence::from_tokens)
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in small_seq(8), b in small_seq(8)) {
            let l = lcs_length(&a, &b);
            prop_assert_eq!(l, lcs_brute(a.tokens(), b.tokens()));
            prop_assert_eq!(l, lcs_length(&b, &a));
            prop_assert!(l <= a.len().min(b.len()));
        }

        #[test]
        fn rouge_appending_shared_token_never_decreases(a in small_seq(8), b in small_seq(8)) {
            let before = rouge_l(&a, &b, 1.0);
            let mut a2: Vec<String> = a.tokens().to_vec();
            let mut b2: Vec<String> = b.tokens().to_vec();
            a2.push("z".into());
            b2.push("z".into());
            let after = rouge_l(&TokenSequence::from_tokens(&a2), &TokenSequence::from_tokens(&b2), 1.0);
            prop_assert!(after + 1e-15 >= before);
        }

        #[test]
        fn unigram_bleu_equal_length_permutation_invariant(
            pairs in proptest::collection::vec(("[a-d]", "[a-d]"), 1..8),
            seed in any::<u64>(),
        ) {
            let c: Vec<String> = pairs.iter().map(|p| p.0.clone()).collect();
            let r: Vec<String> = pairs.iter().map(|p| p.1.clone()).collect();
            // deterministic permutation derived from the seed
            let mut order: Vec<usize> = (0..c.len()).collect();
            order.sort_by_key(|&i| (i as u64 + 1).wrapping_mul(seed | 1).rotate_left(17));
            let pc: Vec<&String> = order.iter().map(|&i| &c[i]).collect();
            let pr: Vec<&String> = order.iter().map(|&i| &r[i]).collect();
            let base = bleu(&TokenSequence::from_tokens(&c), &[TokenSequence::from_tokens(&r)], 1, Smoothing::None).unwrap();
            let perm = bleu(&TokenSequence::from_tokens(pc), &[TokenSequence::from_tokens(pr)], 1, Smoothing::None).unwrap();
            prop_assert_eq!(base.score, perm.score);
        }

        #[test]
        fn unigram_bleu_matches_counting_oracle(a in small_seq(8), b in small_seq(8)) {
            prop_assume!(!a.is_empty());
            let got = bleu(&a, std::slice::from_ref(&b), 1, Smoothing::None).unwrap().score;
            // clipped matches by removing matched tokens from a reference pool
            let mut pool: Vec<&String> = b.tokens().iter().collect();
            let mut matched = 0;
            for t in a.tokens() {
                if let Some(pos) = pool.iter().position(|p| *p == t) {
                    pool.swap_remove(pos);
                    matched += 1;
                }
            }
            let p1 = matched as f64 / a.len() as f64;
            let bp = if a.len() > b.len() { 1.0 } else { (1.0 - b.len() as f64 / a.len() as f64).exp() };
            let want = if matched == 0 { 0.0 } else { bp * p1 };
            prop_assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }
}
