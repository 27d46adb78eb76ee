use crate::backends::{BackendResult, Embedder};

use super::stable_hash;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "to", "in", "on", "at", "for", "with", "is", "was", "are", "were",
    "be", "been", "s", "it", "its", "as", "by", "that", "this", "from", "has", "had", "have", "he", "she", "they",
    "his", "her", "their", "them", "him",
];

/// Hashed bag-of-words embedding: each non-stopword word increments one of
/// `dim` buckets, and the vector is scaled to unit length. A text with no
/// content words embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    pub dim: usize,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self { dim: 512 }
    }
}

impl HashedBagOfWords {
    pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .filter(|w| !STOPWORDS.contains(&w.as_str()))
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for w in Self::words(text) {
            let b = (stable_hash(&[w.as_bytes()]) % self.dim as u64) as usize;
            v[b] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashedBagOfWords {
    fn embed(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
