//! Character knowledge base and contradiction handling.
//!
//! Each passage is mined for simple facts about the characters it
//! mentions; facts become attribute-value pairs; new pairs are merged into
//! per-character dictionaries, where a conflicting value is either a
//! refinement (kept), unrelated (ignored) or a contradiction (flagged and
//! sent to the edit backend for correction).

mod bank;
mod correct;
mod detect;
mod extract;
mod facts;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendResult, Backends};
use crate::templates::Templates;
use crate::text;

pub use bank::{Example, ExampleBank};
pub use correct::Correction;
pub use detect::{DetectMode, DetectReport, KbUpdate};
pub use facts::parse_fact_list;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub character: String,
    pub text: String,
    pub passage_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub key: String,
    pub value: String,
    pub source_fact: Fact,
    pub confidence: f64,
}

impl AttributeEntry {
    /// An entry whose source fact is its own sentence rendering.
    pub fn stated(character: &str, key: &str, value: &str, passage_index: usize) -> Self {
        Self {
            key: key.to_string(),
            value: value.to_string(),
            source_fact: Fact {
                character: character.to_string(),
                text: text::render_attribute(character, key, value),
                passage_index,
            },
            confidence: 1.0,
        }
    }
}

/// One value per key. Entries are only ever added or replaced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeDictionary {
    entries: BTreeMap<String, AttributeEntry>,
}

impl AttributeDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&AttributeEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &AttributeEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn put(&mut self, entry: AttributeEntry) {
        self.entries.insert(entry.key.clone(), entry);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionFlag {
    pub character: String,
    pub key: String,
    pub old: AttributeEntry,
    pub new: AttributeEntry,
    pub p_contradict: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MergeOutcome {
    Added,
    KeptExisting,
    Replaced,
    Flagged(ContradictionFlag),
}

impl MergeOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            MergeOutcome::Added => "added",
            MergeOutcome::KeptExisting => "kept_existing",
            MergeOutcome::Replaced => "replaced",
            MergeOutcome::Flagged(_) => "flagged",
        }
    }
}

/// Result of one merge. `observed_p_contradict` is set whenever the key
/// was already present with a different value, i.e. whenever the two
/// values were compared.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub outcome: MergeOutcome,
    pub observed_p_contradict: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    pub fact_samples: usize,
    pub fact_max_tokens: usize,
    pub fact_temperature: f64,
    /// Outputs a fact must appear in to be kept without entailment support.
    pub fact_agreement: usize,
    pub entail_threshold: f64,
    pub contradict_threshold: f64,
    pub qa_threshold: f64,
    /// Few-shot examples picked from the bank for key extraction.
    pub key_examples: usize,
    pub key_max_tokens: usize,
    pub key_temperature: f64,
    pub value_samples: usize,
    pub value_max_tokens: usize,
    pub value_temperature: f64,
    pub correction_attempts: u32,
    /// Edits longer than this multiple of the input's tokens are rejected.
    pub max_length_ratio: f64,
    pub complete_relations: bool,
    /// Run per-character extraction concurrently.
    pub parallel: bool,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            fact_samples: 3,
            fact_max_tokens: 128,
            fact_temperature: 0.8,
            fact_agreement: 2,
            entail_threshold: 0.5,
            contradict_threshold: 0.5,
            qa_threshold: 0.5,
            key_examples: 5,
            key_max_tokens: 64,
            key_temperature: 0.5,
            value_samples: 3,
            value_max_tokens: 16,
            value_temperature: 0.8,
            correction_attempts: 3,
            max_length_ratio: 1.5,
            complete_relations: true,
            parallel: true,
        }
    }
}

/// The sentence form an attribute is compared in.
pub fn attribute_sentence(character: &str, key: &str, value: &str) -> String {
    text::render_attribute(character, key, value)
}

/// Merges `entry` into `dict`. A repeated value is kept without comparison.
/// With the key present under another value, both values are
/// rendered as sentences and compared in both directions: if either
/// direction entails, the value on the entailing side is kept (the new one
/// only when its direction is strictly stronger); otherwise a contradiction
/// above threshold is flagged; otherwise nothing changes.
pub fn merge_attribute(
    backends: &Backends,
    cfg: &EditConfig,
    dict: &mut AttributeDictionary,
    character: &str,
    entry: AttributeEntry,
) -> BackendResult<Merge> {
    let Some(old) = dict.get(&entry.key).cloned() else {
        dict.put(entry);
        return Ok(Merge {
            outcome: MergeOutcome::Added,
            observed_p_contradict: None,
        });
    };
    if text::normalize(&old.value) == text::normalize(&entry.value) {
        return Ok(Merge {
            outcome: MergeOutcome::KeptExisting,
            observed_p_contradict: None,
        });
    }
    let new_s = attribute_sentence(character, &entry.key, &entry.value);
    let old_s = attribute_sentence(character, &old.key, &old.value);
    let new_to_old = backends.entail(&new_s, &old_s)?;
    let old_to_new = backends.entail(&old_s, &new_s)?;
    let p_contradict = new_to_old.p_contradict.max(old_to_new.p_contradict);
    let outcome = if new_to_old.p_entail.max(old_to_new.p_entail) > cfg.entail_threshold {
        if new_to_old.p_entail > old_to_new.p_entail {
            dict.put(entry);
            MergeOutcome::Replaced
        } else {
            MergeOutcome::KeptExisting
        }
    } else if p_contradict > cfg.contradict_threshold {
        MergeOutcome::Flagged(ContradictionFlag {
            character: character.to_string(),
            key: entry.key.clone(),
            old,
            new: entry,
            p_contradict,
        })
    } else {
        MergeOutcome::KeptExisting
    };
    Ok(Merge {
        outcome,
        observed_p_contradict: Some(p_contradict),
    })
}

/// Human-readable dump: one block per character, `key: value` per line.
pub fn format_kb(kb: &BTreeMap<String, AttributeDictionary>) -> String {
    let mut blocks = Vec::new();
    for (name, dict) in kb {
        let mut block = name.clone();
        for e in dict.entries() {
            block.push_str(&format!("\n{}: {}", e.key, e.value));
        }
        blocks.push(block);
    }
    blocks.join("\n\n")
}

/// Runs the extraction, merge and correction steps against one backend
/// set.
pub struct Editor {
    pub backends: Backends,
    pub templates: Templates,
    pub cfg: EditConfig,
    pub bank: ExampleBank,
    bank_vectors: OnceLock<Vec<Vec<f32>>>,
}

impl Editor {
    pub fn new(backends: Backends, templates: Templates, cfg: EditConfig, bank: ExampleBank) -> Self {
        Self {
            backends,
            templates,
            cfg,
            bank,
            bank_vectors: OnceLock::new(),
        }
    }

    pub fn merge(
        &self,
        dict: &mut AttributeDictionary,
        character: &str,
        entry: AttributeEntry,
    ) -> BackendResult<Merge> {
        merge_attribute(&self.backends, &self.cfg, dict, character, entry)
    }
}
