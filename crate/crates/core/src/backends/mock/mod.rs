//! Deterministic offline backends.
//!
//! Every mock is a pure function of its inputs and a seed: identical calls
//! return byte-identical results across runs and platforms. Lookup tables
//! live in plain-text fixture files (`fixtures/*.tsv`) so tests can extend
//! them; rule-based fallbacks cover everything the tables do not.

mod embed;
mod fixtures;
mod lm;
mod ner;
mod nli;
mod prose;
mod qa;
mod scorer;
mod understand;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use embed::HashedBagOfWords;
pub use fixtures::{Fixtures, NamedPerson};
pub use lm::{CompletionRule, MockLanguageModel};
pub use ner::HeuristicNer;
pub use nli::{ConstantEntailment, MockEntailment, NoisyEntailment};
pub use qa::MockQa;
pub use scorer::{FnScorer, OverlapScorer};

use super::{Backends, RetryPolicy, WhitespaceTokenizer};

/// Context limit the mock language model advertises, matching the default
/// generator context length.
pub const MOCK_CONTEXT_LIMIT: usize = 1024;

/// 64-bit FNV-1a over the parts, each followed by a separator byte.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter().chain(std::iter::once(&0xffu8)) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub(crate) fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
    let seed_bytes = seed.to_le_bytes();
    all.push(&seed_bytes);
    all.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(stable_hash(&all))
}

/// Unit-interval value derived from a hash.
pub(crate) fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Builds the standard offline backend set used by the CLI's `mock`
/// profile and the end-to-end tests.
pub fn mock_backends(seed: u64) -> Backends {
    mock_backends_with(seed, Fixtures::builtin())
}

pub fn mock_backends_with(seed: u64, fixtures: Fixtures) -> Backends {
    let fixtures = Arc::new(fixtures);
    Backends {
        lm: Arc::new(MockLanguageModel::new(seed, fixtures.clone())),
        tokenizer: Arc::new(WhitespaceTokenizer),
        embedder: Arc::new(HashedBagOfWords::default()),
        nli: Arc::new(MockEntailment::new(fixtures.clone()).attribute_aware(true)),
        qa: Arc::new(MockQa::new(fixtures.clone()).extractive(true)),
        ner: Arc::new(HeuristicNer::new(fixtures.clone())),
        scorer: Arc::new(OverlapScorer),
        retry: RetryPolicy::none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable() {
        // Frozen so that fixtures keyed on it never drift.
        assert_eq!(stable_hash(&[]), 0xcbf2_9ce4_8422_2325);
        assert_eq!(stable_hash(&[b"a"]), stable_hash(&[b"a"]));
        assert_ne!(stable_hash(&[b"ab", b"c"]), stable_hash(&[b"a", b"bc"]));
    }

    #[test]
    fn unit_in_range() {
        for i in 0..1000u64 {
            let u = unit(stable_hash(&[&i.to_le_bytes()]));
            assert!((0.0..1.0).contains(&u));
        }
    }
}
