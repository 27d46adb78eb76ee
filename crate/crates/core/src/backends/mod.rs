//! Interfaces to every external model capability the engine consumes.
//!
//! Each capability is a small object-safe trait so that runs can mix
//! implementations: the deterministic [`mock`] set for offline use and tests,
//! or the [`http`] clients that talk to a completion API and a scoring
//! model server. All traits are `Send + Sync`; callers may issue requests
//! concurrently.

pub mod http;
pub mod mock;
mod tokenizer;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use tokenizer::{Tokenizer, WhitespaceTokenizer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Network or server-side failure; safe to retry.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("prompt of {prompt_tokens} tokens plus {max_tokens} generated exceeds context limit {limit}")]
    ContextOverflow {
        prompt_tokens: usize,
        max_tokens: usize,
        limit: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Response could not be decoded or violated the wire schema.
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub type BackendResult<T> = Result<T, BackendError>;

fn require_non_empty(what: &str, s: &str) -> BackendResult<()> {
    if s.trim().is_empty() {
        Err(BackendError::Precondition(format!("{what} must be non-empty")))
    } else {
        Ok(())
    }
}

/// Sampling parameters for one generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_tokens: usize,
    pub temperature: f64,
    pub num_samples: usize,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    /// Resampling counter. Callers bump it when re-asking the same prompt
    /// after rejecting earlier outputs; seeded backends mix it into their
    /// sampling seed so a retry yields fresh samples.
    #[serde(default)]
    pub attempt: u32,
}

impl GenParams {
    pub fn new(max_tokens: usize, temperature: f64, num_samples: usize) -> Self {
        Self {
            max_tokens,
            temperature,
            num_samples,
            stop_sequences: Vec::new(),
            attempt: 0,
        }
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop_sequences.push(stop.into());
        self
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn validate(&self) -> BackendResult<()> {
        if self.max_tokens == 0 {
            return Err(BackendError::Precondition("max_tokens must be >= 1".into()));
        }
        if self.num_samples == 0 {
            return Err(BackendError::Precondition("num_samples must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::Precondition("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cuts `text` at the first occurrence of any stop sequence.
pub fn apply_stop_sequences(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentVerdict {
    pub p_entail: f64,
    pub p_neutral: f64,
    pub p_contradict: f64,
}

impl EntailmentVerdict {
    /// Builds a verdict from raw non-negative weights, normalizing them to
    /// sum to one.
    pub fn from_weights(entail: f64, neutral: f64, contradict: f64) -> Self {
        let total = entail + neutral + contradict;
        if !(total > 0.0) {
            return Self::uniform();
        }
        Self {
            p_entail: entail / total,
            p_neutral: neutral / total,
            p_contradict: contradict / total,
        }
    }

    pub fn uniform() -> Self {
        Self {
            p_entail: 1.0 / 3.0,
            p_neutral: 1.0 / 3.0,
            p_contradict: 1.0 / 3.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let parts = [self.p_entail, self.p_neutral, self.p_contradict];
        parts.iter().all(|p| (0.0..=1.0).contains(p)) && (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-6
    }

    pub fn validated(self) -> BackendResult<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(BackendError::Protocol(format!("invalid entailment triple {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResult {
    /// Empty means the model abstained.
    pub answer: String,
    pub confidence: f64,
}

impl QaResult {
    pub fn abstain() -> Self {
        Self {
            answer: String::new(),
            confidence: 0.0,
        }
    }

    pub fn is_abstention(&self) -> bool {
        self.answer.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedEntity {
    pub surface: String,
    pub is_person: bool,
}

/// Text generation: completion, insertion and instruction-driven edits.
pub trait LanguageModel: Send + Sync {
    fn context_limit(&self) -> usize;

    fn complete(&self, prompt: &str, params: &GenParams) -> BackendResult<Vec<String>>;

    /// Generates text bridging `prefix` to `suffix`. The returned text does
    /// not include the suffix.
    fn insert(&self, prefix: &str, suffix: &str, params: &GenParams) -> BackendResult<String>;

    fn edit(&self, text: &str, instruction: &str) -> BackendResult<String>;
}

pub trait Embedder: Send + Sync {
    /// One unit-norm vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>>;
}

/// Relevance between two embeddings: their inner product.
pub fn relevance(query: &[f32], doc: &[f32]) -> f64 {
    query.iter().zip(doc).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum()
}

pub trait EntailmentModel: Send + Sync {
    fn entail(&self, premise: &str, hypothesis: &str) -> BackendResult<EntailmentVerdict>;
}

pub trait QuestionAnswerer: Send + Sync {
    fn answer(&self, question: &str, context: &str) -> BackendResult<QaResult>;
}

pub trait EntityRecognizer: Send + Sync {
    fn detect_entities(&self, text: &str) -> BackendResult<Vec<DetectedEntity>>;
}

/// Discriminative rerankers. Both return the probability of the positive
/// class in `[0, 1]`.
pub trait ContinuationScorer: Send + Sync {
    fn coherence(&self, prefix: &str, continuation: &str) -> BackendResult<f64>;
    fn relevance(&self, summary: &str, passage: &str) -> BackendResult<f64>;
}

/// Retry policy for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 200,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            initial_backoff_ms: 0,
        }
    }

    /// Runs `op`, retrying retryable errors with exponential backoff.
    pub fn run<T>(&self, mut op: impl FnMut() -> BackendResult<T>) -> BackendResult<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let wait = self.initial_backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("backend call failed ({e}); retry {} in {wait} ms", attempt + 1);
                    if wait > 0 {
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// The full set of capabilities one run uses.
#[derive(Clone)]
pub struct Backends {
    pub lm: Arc<dyn LanguageModel>,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub embedder: Arc<dyn Embedder>,
    pub nli: Arc<dyn EntailmentModel>,
    pub qa: Arc<dyn QuestionAnswerer>,
    pub ner: Arc<dyn EntityRecognizer>,
    pub scorer: Arc<dyn ContinuationScorer>,
    pub retry: RetryPolicy,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl Backends {
    pub fn count_tokens(&self, text: &str) -> usize {
        self.tokenizer.count_tokens(text)
    }

    pub fn truncate_left(&self, text: &str, budget: usize) -> String {
        self.tokenizer.truncate_left(text, budget)
    }

    /// Completion with the context-limit precondition checked and transport
    /// failures retried.
    pub fn complete(&self, prompt: &str, params: &GenParams) -> BackendResult<Vec<String>> {
        params.validate()?;
        let prompt_tokens = self.count_tokens(prompt);
        let limit = self.lm.context_limit();
        if prompt_tokens + params.max_tokens > limit {
            return Err(BackendError::ContextOverflow {
                prompt_tokens,
                max_tokens: params.max_tokens,
                limit,
            });
        }
        let out = self.retry.run(|| self.lm.complete(prompt, params))?;
        if out.len() != params.num_samples {
            return Err(BackendError::Protocol(format!(
                "expected {} samples, got {}",
                params.num_samples,
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn complete_one(&self, prompt: &str, params: &GenParams) -> BackendResult<String> {
        let mut p = params.clone();
        p.num_samples = 1;
        Ok(self.complete(prompt, &p)?.remove(0))
    }

    pub fn insert(&self, prefix: &str, suffix: &str, params: &GenParams) -> BackendResult<String> {
        require_non_empty("insert prefix", prefix)?;
        params.validate()?;
        let prompt_tokens = self.count_tokens(prefix) + self.count_tokens(suffix);
        let limit = self.lm.context_limit();
        if prompt_tokens + params.max_tokens > limit {
            return Err(BackendError::ContextOverflow {
                prompt_tokens,
                max_tokens: params.max_tokens,
                limit,
            });
        }
        self.retry.run(|| self.lm.insert(prefix, suffix, params))
    }

    pub fn edit(&self, text: &str, instruction: &str) -> BackendResult<String> {
        require_non_empty("edit text", text)?;
        require_non_empty("edit instruction", instruction)?;
        self.retry.run(|| self.lm.edit(text, instruction))
    }

    pub fn embed(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Err(BackendError::Precondition("embed needs at least one text".into()));
        }
        let out = self.retry.run(|| self.embedder.embed(texts))?;
        if out.len() != texts.len() {
            return Err(BackendError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn entail(&self, premise: &str, hypothesis: &str) -> BackendResult<EntailmentVerdict> {
        require_non_empty("entailment premise", premise)?;
        require_non_empty("entailment hypothesis", hypothesis)?;
        self.retry.run(|| self.nli.entail(premise, hypothesis))?.validated()
    }

    pub fn answer(&self, question: &str, context: &str) -> BackendResult<QaResult> {
        require_non_empty("question", question)?;
        require_non_empty("qa context", context)?;
        let r = self.retry.run(|| self.qa.answer(question, context))?;
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(BackendError::Protocol(format!(
                "confidence {} out of range",
                r.confidence
            )));
        }
        Ok(r)
    }

    pub fn detect_entities(&self, text: &str) -> BackendResult<Vec<DetectedEntity>> {
        require_non_empty("ner text", text)?;
        self.retry.run(|| self.ner.detect_entities(text))
    }

    pub fn coherence(&self, prefix: &str, continuation: &str) -> BackendResult<f64> {
        let p = self.retry.run(|| self.scorer.coherence(prefix, continuation))?;
        check_probability(p)
    }

    pub fn relevance(&self, summary: &str, passage: &str) -> BackendResult<f64> {
        let p = self.retry.run(|| self.scorer.relevance(summary, passage))?;
        check_probability(p)
    }
}

fn check_probability(p: f64) -> BackendResult<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(BackendError::Protocol(format!("probability {p} out of range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn retry_stops_on_non_retryable() {
        let calls = AtomicU32::new(0);
        let r: BackendResult<()> = RetryPolicy::none().run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Precondition("x".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn retry_recovers_from_transport() {
        let calls = AtomicU32::new(0);
        let policy = RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 0,
        };
        let r = policy.run(|| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendError::Transport("503".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r, Ok(7));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_gives_up() {
        let calls = AtomicU32::new(0);
        let policy = RetryPolicy {
            max_retries: 2,
            initial_backoff_ms: 0,
        };
        let r: BackendResult<()> = policy.run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transport("down".into()))
        });
        assert!(matches!(r, Err(BackendError::Transport(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn stop_sequences_cut_earliest() {
        let stops = vec!["\n\n".to_string(), "END".to_string()];
        assert_eq!(apply_stop_sequences("abc END x\n\ny", &stops), "abc ");
        assert_eq!(apply_stop_sequences("abc", &stops), "abc");
    }

    #[test]
    fn verdict_normalization() {
        let v = EntailmentVerdict::from_weights(2.0, 1.0, 1.0);
        assert!(v.is_valid());
        assert!((v.p_entail - 0.5).abs() < 1e-12);
        assert!(EntailmentVerdict::from_weights(0.0, 0.0, 0.0).is_valid());
        let bad = EntailmentVerdict {
            p_entail: 0.5,
            p_neutral: 0.5,
            p_contradict: 0.5,
        };
        assert!(bad.validated().is_err());
    }
}
