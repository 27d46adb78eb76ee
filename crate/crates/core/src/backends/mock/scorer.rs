use std::collections::BTreeSet;
use std::sync::Arc;

use crate::backends::{BackendResult, ContinuationScorer};

use super::HashedBagOfWords;

/// Scores by content-word overlap: the fraction of the continuation's
/// distinct content words that also occur in the reference, squashed into
/// `[0.05, 0.95]` so that log-probabilities stay finite.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapScorer;

fn overlap(reference: &str, text: &str) -> f64 {
    let r: BTreeSet<String> = HashedBagOfWords::words(reference).collect();
    let t: BTreeSet<String> = HashedBagOfWords::words(text).collect();
    if t.is_empty() {
        return 0.05;
    }
    let shared = t.intersection(&r).count() as f64 / t.len() as f64;
    0.05 + 0.9 * shared
}

impl ContinuationScorer for OverlapScorer {
    fn coherence(&self, prefix: &str, continuation: &str) -> BackendResult<f64> {
        Ok(overlap(prefix, continuation))
    }

    fn relevance(&self, summary: &str, passage: &str) -> BackendResult<f64> {
        Ok(overlap(summary, passage))
    }
}

type ScoreFn = dyn Fn(&str, &str) -> f64 + Send + Sync;

/// Scorer backed by closures; tests use it to inject exact probabilities.
#[derive(Clone)]
pub struct FnScorer {
    pub coherence: Arc<ScoreFn>,
    pub relevance: Arc<ScoreFn>,
}

impl FnScorer {
    pub fn new(
        coherence: impl Fn(&str, &str) -> f64 + Send + Sync + 'static,
        relevance: impl Fn(&str, &str) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            coherence: Arc::new(coherence),
            relevance: Arc::new(relevance),
        }
    }

    pub fn constant(p_coherence: f64, p_relevance: f64) -> Self {
        Self::new(move |_, _| p_coherence, move |_, _| p_relevance)
    }
}

impl ContinuationScorer for FnScorer {
    fn coherence(&self, prefix: &str, continuation: &str) -> BackendResult<f64> {
        Ok((self.coherence)(prefix, continuation))
    }

    fn relevance(&self, summary: &str, passage: &str) -> BackendResult<f64> {
        Ok((self.relevance)(summary, passage))
    }
}
