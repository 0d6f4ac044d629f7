//! METEOR with exact-match unigram alignment.
//!
//! The alignment maximizes the number of matched unigrams and breaks ties
//! by the minimum number of chunks (maximal runs contiguous in both
//! sentences). Minimizing chunks exactly is combinatorial, so sentences
//! where both sides have at most [`EXHAUSTIVE_LIMIT`] tokens are solved by
//! exhaustive search and longer ones by a left-to-right longest-run greedy
//! pass. Scoring uses the parameterized harmonic mean with the published
//! defaults: alpha = 0.9, beta = 3, gamma = 0.5.

pub const ALPHA: f64 = 0.9;
pub const BETA: f64 = 3.0;
pub const GAMMA: f64 = 0.5;

/// Both sentences at or below this length use the exhaustive alignment.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Unigram alignment statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Full METEOR decomposition for one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorResult {
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub matches: usize,
    pub chunks: usize,
    pub penalty: f64,
    /// In [0, 1].
    pub score: f64,
}

impl MeteorResult {
    fn zero() -> Self {
        MeteorResult {
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            matches: 0,
            chunks: 0,
            penalty: 0.0,
            score: 0.0,
        }
    }
}

/// Maximum possible match count: per-token-type minimum of the two
/// occurrence counts.
fn max_matches<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> usize {
    let mut cand_counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in candidate {
        *cand_counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut ref_counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in reference {
        *ref_counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    cand_counts
        .iter()
        .map(|(tok, &c)| c.min(ref_counts.get(tok).copied().unwrap_or(0)))
        .sum()
}

/// Exhaustive maximum-match alignment with minimum chunk count.
///
/// Enumerates assignments of candidate positions to unused reference
/// positions in candidate order, pruning branches that cannot reach the
/// maximum cardinality, and keeps the minimum chunk count.
pub fn exhaustive_alignment<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Alignment {
    let target = max_matches(candidate, reference);
    if target == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();

    struct Search<'a> {
        cand: &'a [&'a str],
        refr: &'a [&'a str],
        used: Vec<bool>,
        target: usize,
        best_chunks: usize,
    }

    impl Search<'_> {
        // prev = (cand_pos + 1, ref_pos + 1) of the last matched pair, or None.
        fn go(
            &mut self,
            pos: usize,
            matched: usize,
            chunks: usize,
            prev: Option<(usize, usize)>,
        ) {
            if chunks >= self.best_chunks {
                return; // cannot improve
            }
            if matched == self.target {
                self.best_chunks = chunks;
                return;
            }
            if pos == self.cand.len() || matched + (self.cand.len() - pos) < self.target {
                return; // cannot reach maximum cardinality
            }
            for j in 0..self.refr.len() {
                if self.used[j] || self.refr[j] != self.cand[pos] {
                    continue;
                }
                let extends = prev == Some((pos, j));
                self.used[j] = true;
                self.go(
                    pos + 1,
                    matched + 1,
                    if extends { chunks } else { chunks + 1 },
                    Some((pos + 1, j + 1)),
                );
                self.used[j] = false;
            }
            // Leave this candidate position unmatched.
            self.go(pos + 1, matched, chunks, prev);
        }
    }

    let mut search = Search {
        cand: &cand,
        refr: &refr,
        used: vec![false; refr.len()],
        target,
        best_chunks: usize::MAX,
    };
    search.go(0, 0, 0, None);
    Alignment {
        matches: target,
        chunks: search.best_chunks,
    }
}

/// Beam width of the fast aligner. A single-path longest-run greedy can
/// mis-resolve chunk ties (placing one run can break two others), so ties
/// among longest runs are explored with a small deterministic beam.
const BEAM_WIDTH: usize = 24;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct BeamState {
    chunks: usize,
    cand_used: Vec<bool>,
    ref_used: Vec<bool>,
    matches: usize,
}

/// Branch candidates over still-unused positions: every maximal common
/// run plus its prefixes and suffixes, longest first, then (i, j) order.
/// An optimal decomposition may need a sub-run even when the full run is
/// available (two of its runs can mutually block each other's extension),
/// so maximal runs alone are not enough.
fn candidate_runs(cand: &[&str], refr: &[&str], state: &BeamState) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    for i in 0..cand.len() {
        if state.cand_used[i] {
            continue;
        }
        for j in 0..refr.len() {
            if state.ref_used[j] {
                continue;
            }
            // Only run starts: positions interior to a run are covered by
            // the run's own prefixes/suffixes.
            if i > 0
                && j > 0
                && !state.cand_used[i - 1]
                && !state.ref_used[j - 1]
                && cand[i - 1] == refr[j - 1]
                && cand[i] == refr[j]
            {
                continue;
            }
            let mut len = 0;
            while i + len < cand.len()
                && j + len < refr.len()
                && !state.cand_used[i + len]
                && !state.ref_used[j + len]
                && cand[i + len] == refr[j + len]
            {
                len += 1;
            }
            if len > 0 {
                for sub in 1..=len {
                    runs.push((i, j, sub)); // prefixes (sub == len: the run)
                    if sub < len {
                        runs.push((i + len - sub, j + len - sub, sub)); // suffixes
                    }
                }
            }
        }
    }
    runs.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    runs.dedup();
    runs
}

/// Fast left-to-right alignment: repeatedly matches a longest common run
/// over still-unused positions, keeping a small beam over the tied
/// placements. Every completed state is a maximal matching, which in the
/// exact-match setting is always maximum cardinality, so states compare by
/// chunk count alone. Deterministic: tied states order by chunk count and
/// position masks.
pub fn greedy_alignment<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Alignment {
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();

    let mut beam = vec![BeamState {
        chunks: 0,
        cand_used: vec![false; cand.len()],
        ref_used: vec![false; refr.len()],
        matches: 0,
    }];
    let mut best: Option<Alignment> = None;

    while !beam.is_empty() {
        let mut next: Vec<BeamState> = Vec::new();
        for state in &beam {
            let runs = candidate_runs(&cand, &refr, state);
            if runs.is_empty() {
                let done = Alignment {
                    matches: state.matches,
                    chunks: state.chunks,
                };
                best = Some(match best {
                    None => done,
                    Some(prev) if done.chunks < prev.chunks => done,
                    Some(prev) => prev,
                });
                continue;
            }
            if let Some(found) = best {
                if state.chunks + 1 >= found.chunks {
                    continue; // completing needs at least one more chunk
                }
            }
            for &(i, j, len) in &runs {
                let mut extended = state.clone();
                for k in 0..len {
                    extended.cand_used[i + k] = true;
                    extended.ref_used[j + k] = true;
                }
                extended.matches += len;
                extended.chunks += 1;
                next.push(extended);
            }
        }
        // Fewer chunks first, then more matched tokens; masks only break
        // ties deterministically.
        next.sort_by(|a, b| {
            a.chunks
                .cmp(&b.chunks)
                .then(b.matches.cmp(&a.matches))
                .then(a.cand_used.cmp(&b.cand_used))
                .then(a.ref_used.cmp(&b.ref_used))
        });
        next.dedup_by(|a, b| a.cand_used == b.cand_used && a.ref_used == b.ref_used);
        next.truncate(BEAM_WIDTH);
        beam = next;
    }
    best.unwrap_or(Alignment {
        matches: 0,
        chunks: 0,
    })
}

/// Alignment used for scoring: exhaustive for short pairs, greedy beyond.
pub fn align<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Alignment {
    if candidate.len() <= EXHAUSTIVE_LIMIT && reference.len() <= EXHAUSTIVE_LIMIT {
        exhaustive_alignment(candidate, reference)
    } else {
        greedy_alignment(candidate, reference)
    }
}

/// Sentence-level METEOR.
pub fn meteor_sentence<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> MeteorResult {
    if candidate.is_empty() || reference.is_empty() {
        return MeteorResult::zero();
    }
    let alignment = align(candidate, reference);
    if alignment.matches == 0 {
        return MeteorResult::zero();
    }
    let m = alignment.matches as f64;
    let precision = m / candidate.len() as f64;
    let recall = m / reference.len() as f64;
    let fmean = precision * recall / (ALPHA * precision + (1.0 - ALPHA) * recall);
    let penalty = GAMMA * (alignment.chunks as f64 / m).powf(BETA);
    MeteorResult {
        precision,
        recall,
        fmean,
        matches: alignment.matches,
        chunks: alignment.chunks,
        penalty,
        score: fmean * (1.0 - penalty),
    }
}

/// Corpus METEOR as the macro-average of sentence scores, as a percentage.
pub fn corpus_meteor<C, R, S>(candidates: &[C], references: &[R]) -> f64
where
    C: AsRef<[S]>,
    R: AsRef<[S]>,
    S: AsRef<str>,
{
    assert!(!candidates.is_empty(), "corpus must contain at least one pair");
    assert_eq!(candidates.len(), references.len());
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| meteor_sentence(c.as_ref(), r.as_ref()).score)
        .sum();
    100.0 * sum / candidates.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_single_word_scores_half() {
        // One match in one chunk: penalty = 0.5 * (1/1)^3 = 0.5.
        let r = meteor_sentence(&toks("car"), &toks("car"));
        assert_eq!((r.matches, r.chunks), (1, 1));
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert!((r.score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_ten_word_sentence() {
        let s = toks("the car slows down because the light has turned red");
        let r = meteor_sentence(&s, &s);
        assert_eq!((r.matches, r.chunks), (10, 1));
        assert!((r.penalty - 0.0005).abs() < 1e-12);
        assert!((r.score - 0.9995).abs() < 1e-9);
    }

    #[test]
    fn zero_overlap_scores_zero() {
        let r = meteor_sentence(&toks("a b c"), &toks("x y z"));
        assert_eq!(r.score, 0.0);
        assert_eq!(r.matches, 0);
    }

    #[test]
    fn empty_sides_score_zero() {
        let empty: Vec<String> = vec![];
        assert_eq!(meteor_sentence(&empty, &toks("a")).score, 0.0);
        assert_eq!(meteor_sentence(&toks("a"), &empty).score, 0.0);
    }

    #[test]
    fn chunk_tie_breaking_prefers_fewer_chunks() {
        // "a b a" vs "a a b": three matches are achievable in 2 chunks
        // ("a b" aligned contiguously plus the leftover "a"), not 3.
        let r = exhaustive_alignment(&toks("a b a"), &toks("a a b"));
        assert_eq!(r.matches, 3);
        assert_eq!(r.chunks, 2);
        let g = greedy_alignment(&toks("a b a"), &toks("a a b"));
        assert_eq!(g.matches, 3);
        assert_eq!(g.chunks, 2);
    }

    #[test]
    fn reordered_words_count_two_chunks() {
        let r = meteor_sentence(&toks("b a"), &toks("a b"));
        assert_eq!((r.matches, r.chunks), (2, 2));
        // P = R = 1, fmean = 1, penalty = 0.5 * 1 = 0.5.
        assert!((r.score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn corpus_meteor_macro_average() {
        let cands = vec![toks("car"), toks("x")];
        let refs = vec![toks("car"), toks("y")];
        // Scores 0.5 and 0.0, mean 0.25 -> 25%.
        assert!((corpus_meteor(&cands, &refs) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_meteor_identical_ten_word_sentences() {
        let corpus = vec![
            toks("the car slows down because the light has turned red"),
            toks("the car moves off because the road ahead is clear"),
        ];
        assert!((corpus_meteor(&corpus, &corpus) - 99.95).abs() < 1e-9);
    }

    fn random_sentence(rng: &mut SplitMix64, vocab: &[&str], max_len: usize) -> Vec<String> {
        let len = 1 + rng.index(max_len);
        (0..len).map(|_| vocab[rng.index(vocab.len())].to_string()).collect()
    }

    #[test]
    fn greedy_matches_exhaustive_on_short_random_pairs() {
        let vocab = ["a", "b", "c", "d", "car", "is", "lane", "red"];
        let mut rng = SplitMix64::new(20240901);
        for _ in 0..2000 {
            let cand = random_sentence(&mut rng, &vocab, EXHAUSTIVE_LIMIT);
            let refr = random_sentence(&mut rng, &vocab, EXHAUSTIVE_LIMIT);
            let ex = exhaustive_alignment(&cand, &refr);
            let gr = greedy_alignment(&cand, &refr);
            assert_eq!(
                ex, gr,
                "alignment mismatch for {:?} vs {:?}",
                cand, refr
            );
        }
    }

    #[test]
    fn greedy_achieves_maximum_cardinality() {
        let vocab = ["a", "b", "c"];
        let mut rng = SplitMix64::new(7);
        for _ in 0..500 {
            let cand = random_sentence(&mut rng, &vocab, 14);
            let refr = random_sentence(&mut rng, &vocab, 14);
            let gr = greedy_alignment(&cand, &refr);
            assert_eq!(gr.matches, max_matches(&cand, &refr));
        }
    }
}
