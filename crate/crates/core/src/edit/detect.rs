use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CharacterSheet, Plan};
use crate::text;

use super::{AttributeDictionary, AttributeEntry, ContradictionFlag, Editor, MergeOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectMode {
    /// Flags only.
    Boolean,
    /// Flags plus the largest contradiction probability over all key
    /// conflicts.
    Probability,
}

/// One merge applied (or attempted) against the knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbUpdate {
    pub character: String,
    pub key: String,
    pub value: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub flags: Vec<ContradictionFlag>,
    /// Set in probability mode; 0 when no key conflicted.
    pub max_p_contradict: Option<f64>,
    pub updates: Vec<KbUpdate>,
}

impl Editor {
    /// Facts, keys and values for one character in one passage. Failing
    /// sub-steps drop the fact they were working on.
    fn harvest(&self, passage: &str, character: &str, passage_index: usize, known: &[String]) -> Vec<AttributeEntry> {
        let facts = match self.list_facts(passage, character, passage_index) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("fact listing failed for {character}: {e}");
                return Vec::new();
            }
        };
        let mut out: Vec<AttributeEntry> = Vec::new();
        for fact in facts {
            let keys = match self.extract_attribute_keys(&fact.text, character, passage, known) {
                Ok(k) => k,
                Err(e) => {
                    log::warn!("key extraction failed on {:?}: {e}", fact.text);
                    continue;
                }
            };
            for key in keys {
                if out.iter().any(|e| e.key == key) {
                    continue;
                }
                match self.infer_value(&fact.text, character, &key) {
                    Ok(Some((value, p))) => out.push(AttributeEntry {
                        key,
                        value,
                        source_fact: fact.clone(),
                        confidence: p,
                    }),
                    Ok(None) => log::debug!("no value for {character}/{key}"),
                    Err(e) => log::warn!("value inference failed for {character}/{key}: {e}"),
                }
            }
        }
        out
    }

    /// Merges harvested entries in order, completing relations for newly
    /// stored relation keys.
    fn apply(
        &self,
        kb: &mut BTreeMap<String, AttributeDictionary>,
        character: &str,
        entries: Vec<AttributeEntry>,
        report: &mut DetectReport,
    ) {
        let known: Vec<String> = kb.keys().cloned().collect();
        let mut queue: Vec<(String, AttributeEntry, bool)> =
            entries.into_iter().map(|e| (character.to_string(), e, true)).collect();
        queue.reverse();
        while let Some((who, entry, primary)) = queue.pop() {
            let Some(dict) = kb.get_mut(&who) else { continue };
            let merged = match self.merge(dict, &who, entry.clone()) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("merge failed for {who}/{}: {e}", entry.key);
                    continue;
                }
            };
            if let Some(p) = merged.observed_p_contradict {
                if let Some(max) = report.max_p_contradict.as_mut() {
                    *max = max.max(p);
                }
            }
            report.updates.push(KbUpdate {
                character: who.clone(),
                key: entry.key.clone(),
                value: entry.value.clone(),
                outcome: merged.outcome.label().to_string(),
            });
            match merged.outcome {
                MergeOutcome::Flagged(flag) => report.flags.push(flag),
                MergeOutcome::Added | MergeOutcome::Replaced
                    if primary && self.cfg.complete_relations && text::is_possessive_key(&entry.key) =>
                {
                    match self.complete_relations(&who, &entry, &known) {
                        Ok(adds) => {
                            for (other, e) in adds.into_iter().rev() {
                                queue.push((other, e, false));
                            }
                        }
                        Err(e) => log::warn!("relation completion failed for {who}/{}: {e}", entry.key),
                    }
                }
                _ => {}
            }
        }
    }

    /// Updates `kb` from a new passage and reports contradictions. Only
    /// characters already in `kb` and mentioned in the passage are looked
    /// at. Extraction runs per character in parallel; merges happen in
    /// name order.
    pub fn detect(
        &self,
        passage: &str,
        passage_index: usize,
        kb: &mut BTreeMap<String, AttributeDictionary>,
        mode: DetectMode,
    ) -> DetectReport {
        let known: Vec<String> = kb.keys().cloned().collect();
        let present: Vec<&String> = known.iter().filter(|n| text::mentions(passage, n)).collect();
        let work = |name: &&String| ((*name).clone(), self.harvest(passage, name, passage_index, &known));
        let harvested: Vec<(String, Vec<AttributeEntry>)> = if self.cfg.parallel {
            present.par_iter().map(work).collect()
        } else {
            present.iter().map(work).collect()
        };
        let mut report = DetectReport {
            max_p_contradict: (mode == DetectMode::Probability).then_some(0.0),
            ..DetectReport::default()
        };
        for (name, entries) in harvested {
            self.apply(kb, &name, entries, &mut report);
        }
        report
    }

    /// Knowledge base seeded from the plan's character descriptions, with
    /// each description treated as passage 0.
    pub fn seed_kb(&self, plan: &Plan) -> BTreeMap<String, AttributeDictionary> {
        let mut kb: BTreeMap<String, AttributeDictionary> = plan
            .characters
            .iter()
            .map(|c| (c.name.clone(), AttributeDictionary::new()))
            .collect();
        let known: Vec<String> = kb.keys().cloned().collect();
        let work = |c: &CharacterSheet| (c.name.clone(), self.harvest(&c.description, &c.name, 0, &known));
        let mut harvested: Vec<(String, Vec<AttributeEntry>)> = if self.cfg.parallel {
            plan.characters.par_iter().map(work).collect()
        } else {
            plan.characters.iter().map(work).collect()
        };
        harvested.sort_by(|a, b| a.0.cmp(&b.0));
        let mut report = DetectReport::default();
        for (name, entries) in harvested {
            self.apply(&mut kb, &name, entries, &mut report);
        }
        for f in &report.flags {
            log::info!("plan descriptions disagree on {}/{}", f.character, f.key);
        }
        kb
    }
}
