use std::collections::HashMap;

use crate::textnorm::TokenSequence;

/// Search nodes explored before the alignment search settles for the best
/// alignment found so far.
const SEARCH_BUDGET: usize = 2_000_000;

const ALPHA_WEIGHT: f64 = 9.0;
const PENALTY_GAMMA: f64 = 0.5;
const PENALTY_BETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeteorAlignment {
    /// Matched `(candidate index, reference index)` pairs, sorted by candidate index.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
    /// False if the search budget ran out before optimality was proven.
    pub exact: bool,
}

impl MeteorAlignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Exact-match unigram alignment with the largest number of matches and,
/// among those, the fewest chunks.
///
/// A chunk is a maximal run of matches that are adjacent and in the same
/// order on both sides, so minimising chunks is the same as maximising the
/// number of matched pairs `(i, j)` whose successor `(i + 1, j + 1)` is also
/// matched. The maximum match count is fixed by per-word multiplicities; the
/// chunk count is minimised by branch and bound seeded with a longest-run
/// greedy alignment.
pub fn meteor_alignment(candidate: &TokenSequence, reference: &TokenSequence) -> MeteorAlignment {
    let cand = intern(candidate.tokens(), reference.tokens());
    let (cand_ids, ref_ids) = (&cand.0, &cand.1);
    let vocab = cand.2;

    let mut cand_count = vec![0usize; vocab];
    let mut ref_positions: Vec<Vec<usize>> = vec![Vec::new(); vocab];
    for &w in cand_ids {
        cand_count[w] += 1;
    }
    for (j, &w) in ref_ids.iter().enumerate() {
        ref_positions[w].push(j);
    }
    let skips: Vec<usize> = (0..vocab)
        .map(|w| cand_count[w].saturating_sub(ref_positions[w].len()))
        .collect();
    let total_matches: usize = (0..vocab)
        .map(|w| cand_count[w].min(ref_positions[w].len()))
        .sum();

    if total_matches == 0 {
        return MeteorAlignment {
            pairs: Vec::new(),
            chunks: 0,
            exact: true,
        };
    }

    let greedy = greedy_alignment(cand_ids, ref_ids);
    debug_assert_eq!(greedy.len(), total_matches);
    let greedy_links = total_matches - count_chunks(&greedy);

    // linkable[i]: some reference bigram equals the candidate bigram ending at i
    let mut ref_bigrams = std::collections::HashSet::new();
    for w in ref_ids.windows(2) {
        ref_bigrams.insert((w[0], w[1]));
    }
    let linkable: Vec<usize> = (0..cand_ids.len())
        .map(|i| usize::from(i > 0 && ref_bigrams.contains(&(cand_ids[i - 1], cand_ids[i]))))
        .collect();
    let mut suffix_linkable = vec![0usize; cand_ids.len() + 1];
    for i in (0..cand_ids.len()).rev() {
        suffix_linkable[i] = suffix_linkable[i + 1] + linkable[i];
    }
    let ceiling = suffix_linkable[0].min(total_matches - 1);

    let mut search = Search {
        cand: cand_ids,
        ref_positions: &ref_positions,
        suffix_linkable: &suffix_linkable,
        ceiling,
        used: vec![false; ref_ids.len()],
        skips_left: skips,
        assignment: vec![None; cand_ids.len()],
        best_links: greedy_links,
        best: None,
        nodes: 0,
        exhausted: false,
    };
    if greedy_links < ceiling {
        search.descend(0, 0);
    }

    let exact = !search.exhausted;
    let pairs = match search.best {
        Some(assign) => assign
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i, j)))
            .collect(),
        None => greedy,
    };
    let chunks = count_chunks(&pairs);
    MeteorAlignment {
        pairs,
        chunks,
        exact,
    }
}

fn intern<'a>(a: &'a [String], b: &'a [String]) -> (Vec<usize>, Vec<usize>, usize) {
    let mut ids: HashMap<&'a str, usize> = HashMap::new();
    let mut map = |seq: &'a [String]| -> Vec<usize> {
        seq.iter()
            .map(|t| {
                let next = ids.len();
                *ids.entry(t.as_str()).or_insert(next)
            })
            .collect()
    };
    let a_ids = map(a);
    let b_ids = map(b);
    (a_ids, b_ids, ids.len())
}

/// Repeatedly aligns the longest run of still-unmatched tokens common to both
/// sides, earliest on the candidate side first.
fn greedy_alignment(cand: &[usize], reference: &[usize]) -> Vec<(usize, usize)> {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        // run[j + 1] = length of the common unmatched run ending at (i, j)
        let mut prev = vec![0usize; reference.len() + 1];
        let mut curr = vec![0usize; reference.len() + 1];
        for i in 0..cand.len() {
            for j in 0..reference.len() {
                curr[j + 1] = if !cand_used[i] && !ref_used[j] && cand[i] == reference[j] {
                    prev[j] + 1
                } else {
                    0
                };
                let len = curr[j + 1];
                if len > 0 && best.is_none_or(|(_, _, l)| len > l) {
                    best = Some((i + 1 - len, j + 1 - len, len));
                }
            }
            std::mem::swap(&mut prev, &mut curr);
        }
        let Some((i0, j0, len)) = best else { break };
        for k in 0..len {
            cand_used[i0 + k] = true;
            ref_used[j0 + k] = true;
            pairs.push((i0 + k, j0 + k));
        }
    }
    pairs.sort_unstable();
    pairs
}

struct Search<'a> {
    cand: &'a [usize],
    ref_positions: &'a [Vec<usize>],
    suffix_linkable: &'a [usize],
    ceiling: usize,
    used: Vec<bool>,
    skips_left: Vec<usize>,
    assignment: Vec<Option<usize>>,
    best_links: usize,
    best: Option<Vec<Option<usize>>>,
    nodes: usize,
    exhausted: bool,
}

impl Search<'_> {
    fn descend(&mut self, i: usize, links: usize) {
        if self.best_links >= self.ceiling || self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.nodes > SEARCH_BUDGET {
            self.exhausted = true;
            return;
        }
        if i == self.cand.len() {
            if links > self.best_links {
                self.best_links = links;
                self.best = Some(self.assignment.clone());
            }
            return;
        }
        if links + self.suffix_linkable[i] <= self.best_links {
            return;
        }

        let w = self.cand[i];
        let prev_j = if i > 0 { self.assignment[i - 1] } else { None };
        let extend = prev_j.map(|p| p + 1);

        // Try extending the previous match first; it is the only choice that
        // gains a link.
        if let Some(j) = extend {
            if self.ref_positions[w].binary_search(&j).is_ok() && !self.used[j] {
                self.assign(i, j, links + 1);
            }
        }
        for idx in 0..self.ref_positions[w].len() {
            let j = self.ref_positions[w][idx];
            if self.used[j] || Some(j) == extend {
                continue;
            }
            self.assign(i, j, links);
        }
        if self.skips_left[w] > 0 {
            self.skips_left[w] -= 1;
            self.descend(i + 1, links);
            self.skips_left[w] += 1;
        }
    }

    fn assign(&mut self, i: usize, j: usize, links: usize) {
        self.used[j] = true;
        self.assignment[i] = Some(j);
        self.descend(i + 1, links);
        self.assignment[i] = None;
        self.used[j] = false;
    }
}

/// METEOR with exact matching only:
/// `Fmean * (1 - 0.5 * (chunks / matches)^3)` where
/// `Fmean = 10PR / (R + 9P)`. Zero when nothing matches.
pub fn meteor(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let alignment = meteor_alignment(candidate, reference);
    score_from_counts(
        alignment.matches(),
        alignment.chunks,
        candidate.len(),
        reference.len(),
    )
}

pub(crate) fn score_from_counts(
    matches: usize,
    chunks: usize,
    cand_len: usize,
    ref_len: usize,
) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let precision = m / cand_len as f64;
    let recall = m / ref_len as f64;
    let fmean = (1.0 + ALPHA_WEIGHT) * precision * recall / (recall + ALPHA_WEIGHT * precision);
    let penalty = PENALTY_GAMMA * (chunks as f64 / m).powf(PENALTY_BETA);
    fmean * (1.0 - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words)
    }

    #[test]
    fn identical_ten_tokens() {
        let s = seq(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let a = meteor_alignment(&s, &s);
        assert_eq!((a.matches(), a.chunks), (10, 1));
        assert!((meteor(&s, &s) - 0.9995).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(meteor(&seq(&["a", "b"]), &seq(&["c", "d"])), 0.0);
        assert_eq!(meteor(&seq(&[]), &seq(&["c", "d"])), 0.0);
    }

    #[test]
    fn swapped_pair_has_two_chunks() {
        let a = meteor_alignment(&seq(&["the", "cat"]), &seq(&["cat", "the"]));
        assert_eq!((a.matches(), a.chunks), (2, 2));
        assert!((meteor(&seq(&["the", "cat"]), &seq(&["cat", "the"])) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn repeated_tokens_choose_contiguous_alignment() {
        // greedy-by-position would match the first "the" to the first "the"
        let cand = seq(&["the", "lungs", "are", "clear"]);
        let reference = seq(&["the", "heart", "is", "normal", "the", "lungs", "are", "clear"]);
        let a = meteor_alignment(&cand, &reference);
        assert_eq!(a.chunks, 1);
        assert_eq!(a.pairs, [(0, 4), (1, 5), (2, 6), (3, 7)]);
        assert!(a.exact);
    }

    #[test]
    fn long_repetitive_input_stays_bounded() {
        let words: Vec<&str> = ["no", "effusion", ".", "the", "lungs", "are", "clear", "."]
            .iter()
            .cycle()
            .take(120)
            .copied()
            .collect();
        let mut shuffled = words.clone();
        shuffled.reverse();
        let a = meteor_alignment(&seq(&words), &seq(&shuffled));
        assert_eq!(a.matches(), 120);
        assert!(a.chunks >= 1);
    }
}
