//! Rule-based candidate filters and reranking by coherence and relevance.

use std::collections::HashSet;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Backends};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_repeat_ngram: usize,
    /// Two sentences whose word edit distance is at most this fraction of
    /// the longer one count as repeats.
    pub sentence_similarity_ratio: f64,
    pub banned_strings_hard: Vec<String>,
    pub banned_strings_soft: Vec<String>,
    /// Distinct soft strings that must appear before a candidate fails.
    pub soft_threshold: usize,
    pub colon_head_window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_repeat_ngram: 5,
            sentence_similarity_ratio: 0.2,
            banned_strings_hard: [
                "\nComment",
                "copyright",
                "all rights reserved",
                "http://",
                "https://",
                "www.",
            ]
            .map(String::from)
            .to_vec(),
            banned_strings_soft: [
                "Chapter",
                "Author's note",
                "Epilogue",
                "Prologue",
                "The End",
                "To be continued",
                "Part ",
                "Summary",
            ]
            .map(String::from)
            .to_vec(),
            soft_threshold: 2,
            colon_head_window: 4,
        }
    }
}

impl FilterConfig {
    /// Replaces the banned lists with the non-comment lines of the given
    /// files, when set.
    pub fn load_lists(
        &mut self,
        hard: Option<&std::path::Path>,
        soft: Option<&std::path::Path>,
    ) -> std::io::Result<()> {
        let read = |p: &std::path::Path| -> std::io::Result<Vec<String>> {
            Ok(std::fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
                .map(|l| l.replace("\\n", "\n"))
                .collect())
        };
        if let Some(p) = hard {
            self.banned_strings_hard = read(p)?;
        }
        if let Some(p) = soft {
            self.banned_strings_soft = read(p)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FilterFailure {
    Empty,
    RepeatedNgram { ngram: String },
    RepeatsPrompt { ngram: String },
    SimilarSentences { first: usize, second: usize },
    HardBanned { string: String },
    SoftBanned { strings: Vec<String> },
    ColonHeading { paragraph: usize },
    Person { word: String },
}

impl FilterFailure {
    pub fn category(&self) -> &'static str {
        match self {
            FilterFailure::Empty => "empty",
            FilterFailure::RepeatedNgram { .. }
            | FilterFailure::RepeatsPrompt { .. }
            | FilterFailure::SimilarSentences { .. } => "repetition",
            FilterFailure::HardBanned { .. }
            | FilterFailure::SoftBanned { .. }
            | FilterFailure::ColonHeading { .. } => "narration",
            FilterFailure::Person { .. } => "person",
        }
    }
}

pub type FilterVerdict = Result<(), FilterFailure>;

fn ngrams(words: &[String], n: usize) -> Vec<String> {
    if n == 0 || words.len() < n {
        return Vec::new();
    }
    words.windows(n).map(|w| w.join(" ")).collect()
}

/// Word-level Levenshtein distance.
pub fn word_edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, wa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, wb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(wa != wb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The text outside double-quoted spans. A quote left open runs to the end
/// of the text.
pub fn outside_quotes(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut open: Option<char> = None;
    for c in s.chars() {
        match open {
            Some(o) if text::is_closer(o, c) => {
                open = None;
                out.push(' ');
            }
            Some(_) => {}
            None if text::is_opener(c) => open = Some(c),
            None => out.push(c),
        }
    }
    out
}

static PERSON: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(I|[Ww][Ee]|[Yy][Oo][Uu])\b").unwrap());

fn check_repetition(candidate: &str, prompt: &str, cfg: &FilterConfig) -> FilterVerdict {
    let words = text::normalized_words(candidate);
    let mut seen = HashSet::new();
    for g in ngrams(&words, cfg.min_repeat_ngram) {
        if !seen.insert(g.clone()) {
            return Err(FilterFailure::RepeatedNgram { ngram: g });
        }
    }
    let prompt_grams: HashSet<String> = ngrams(&text::normalized_words(prompt), cfg.min_repeat_ngram)
        .into_iter()
        .collect();
    for g in ngrams(&words, cfg.min_repeat_ngram) {
        if prompt_grams.contains(&g) {
            return Err(FilterFailure::RepeatsPrompt { ngram: g });
        }
    }
    let sentences: Vec<Vec<String>> = text::split_sentences(candidate)
        .iter()
        .map(|s| text::normalized_words(s))
        .filter(|w| !w.is_empty())
        .collect();
    for i in 0..sentences.len() {
        for j in i + 1..sentences.len() {
            let longest = sentences[i].len().max(sentences[j].len());
            let d = word_edit_distance(&sentences[i], &sentences[j]);
            if d as f64 <= cfg.sentence_similarity_ratio * longest as f64 {
                return Err(FilterFailure::SimilarSentences { first: i, second: j });
            }
        }
    }
    Ok(())
}

fn check_narration(candidate: &str, cfg: &FilterConfig) -> FilterVerdict {
    let lower = candidate.to_lowercase();
    if let Some(s) = cfg
        .banned_strings_hard
        .iter()
        .find(|s| !s.is_empty() && lower.contains(&s.to_lowercase()))
    {
        return Err(FilterFailure::HardBanned { string: s.clone() });
    }
    let soft: Vec<String> = cfg
        .banned_strings_soft
        .iter()
        .filter(|s| !s.is_empty() && lower.contains(&s.to_lowercase()))
        .cloned()
        .collect();
    if soft.len() >= cfg.soft_threshold.max(1) {
        return Err(FilterFailure::SoftBanned { strings: soft });
    }
    for (i, para) in candidate.split("\n\n").filter(|p| !p.trim().is_empty()).enumerate() {
        let head: Vec<&str> = para.split_whitespace().take(cfg.colon_head_window).collect();
        if head.iter().any(|w| w.contains(':')) {
            return Err(FilterFailure::ColonHeading { paragraph: i });
        }
    }
    Ok(())
}

fn check_person(candidate: &str) -> FilterVerdict {
    match PERSON.find(&outside_quotes(candidate)) {
        Some(m) => Err(FilterFailure::Person {
            word: m.as_str().to_string(),
        }),
        None => Ok(()),
    }
}

/// First failing rule among, in order: empty, repetition, narration
/// artifacts, first or second person outside quotes.
pub fn heuristic_filter(candidate: &str, prompt: &str, cfg: &FilterConfig) -> FilterVerdict {
    if candidate.trim().is_empty() {
        return Err(FilterFailure::Empty);
    }
    check_repetition(candidate, prompt, cfg)?;
    check_narration(candidate, cfg)?;
    check_person(candidate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub coherence_weight: f64,
    pub relevance_weight: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            coherence_weight: 1.0,
            relevance_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub coherence_lp: f64,
    pub relevance_lp: f64,
    pub composite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the generator's output.
    pub index: usize,
    pub text: String,
    pub verdict: FilterVerdict,
    pub scores: Option<Scores>,
}

impl Candidate {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
            verdict: Ok(()),
            scores: None,
        }
    }

    fn composite(&self) -> f64 {
        self.scores.as_ref().map_or(f64::NEG_INFINITY, |s| s.composite)
    }
}

/// Log-probabilities of coherence with `previous` and relevance to
/// `outline_point`. A zero probability gives negative infinity.
pub fn score_candidate(
    backends: &Backends,
    cfg: &RerankConfig,
    candidate: &str,
    previous: &str,
    outline_point: &str,
) -> Result<Scores, BackendError> {
    let coherence_lp = backends.coherence(previous, candidate)?.ln();
    let relevance_lp = backends.relevance(outline_point, candidate)?.ln();
    let composite = if coherence_lp == f64::NEG_INFINITY || relevance_lp == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        cfg.coherence_weight * coherence_lp + cfg.relevance_weight * relevance_lp
    };
    Ok(Scores {
        coherence_lp,
        relevance_lp,
        composite,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reranked {
    pub candidates: Vec<Candidate>,
    /// Positions into `candidates`, best first.
    pub ranked: Vec<usize>,
    /// No candidate passed the filters; the best-scoring one was taken
    /// anyway.
    pub degraded: bool,
}

impl Reranked {
    pub fn best(&self) -> &Candidate {
        &self.candidates[self.ranked[0]]
    }
}

fn order(cands: &[Candidate], pool: &[usize]) -> Vec<usize> {
    let mut ranked = pool.to_vec();
    ranked.sort_by(|&a, &b| {
        cands[b]
            .composite()
            .total_cmp(&cands[a].composite())
            .then(cands[a].index.cmp(&cands[b].index))
    });
    ranked
}

/// Filters, scores survivors concurrently and sorts them by composite
/// score, lower sample index first on ties. With no survivors every
/// candidate is scored and the result is marked degraded.
pub fn rerank(
    backends: &Backends,
    filters: &FilterConfig,
    cfg: &RerankConfig,
    mut candidates: Vec<Candidate>,
    prompt: &str,
    previous: &str,
    outline_point: &str,
) -> Result<Reranked, BackendError> {
    if candidates.is_empty() {
        return Err(BackendError::Precondition("rerank needs at least one candidate".into()));
    }
    for c in &mut candidates {
        c.verdict = heuristic_filter(&c.text, prompt, filters);
    }
    let survivors: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].verdict.is_ok())
        .collect();
    let degraded = survivors.is_empty();
    let pool: Vec<usize> = if degraded {
        (0..candidates.len()).collect()
    } else {
        survivors
    };
    let scores: Vec<(usize, Scores)> = pool
        .par_iter()
        .map(|&i| score_candidate(backends, cfg, &candidates[i].text, previous, outline_point).map(|s| (i, s)))
        .collect::<Result<_, _>>()?;
    for (i, s) in scores {
        candidates[i].scores = Some(s);
    }
    if degraded {
        log::warn!(
            "all {} candidates failed the filters; taking the best-scoring one",
            candidates.len()
        );
    }
    let ranked = order(&candidates, &pool);
    Ok(Reranked {
        candidates,
        ranked,
        degraded,
    })
}
