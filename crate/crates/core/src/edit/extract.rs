use crate::backends::{relevance, BackendResult, GenParams};
use crate::templates::render;
use crate::text;

use super::{attribute_sentence, AttributeEntry, Editor, Fact};

/// Strips a generated value down to its first line without trailing
/// punctuation or quotes.
fn clean_value(raw: &str) -> String {
    raw.lines()
        .next()
        .unwrap_or("")
        .trim()
        .trim_end_matches(['.', ',', ';', '!', '"'])
        .trim()
        .to_string()
}

impl Editor {
    fn bank_vectors(&self) -> BackendResult<&Vec<Vec<f32>>> {
        if let Some(v) = self.bank_vectors.get() {
            return Ok(v);
        }
        let contexts: Vec<String> = self.bank.examples.iter().map(|e| e.context.clone()).collect();
        let vectors = self.backends.embed(&contexts)?;
        Ok(self.bank_vectors.get_or_init(|| vectors))
    }

    /// The bank examples most relevant to `fact`, most relevant first; ties
    /// keep bank order.
    pub fn select_examples(&self, fact: &str) -> BackendResult<Vec<usize>> {
        if self.bank.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.backends.embed(&[fact.to_string()])?.remove(0);
        let vectors = self.bank_vectors()?;
        let mut ranked: Vec<(usize, f64)> = vectors.iter().map(|v| relevance(&q, v)).enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked.into_iter().take(self.cfg.key_examples).map(|(i, _)| i).collect())
    }

    /// Maps a possessive key onto the full name of a known character, so
    /// `Karen's` becomes `Karen Zellerion's`.
    pub fn canonical_key(key: &str, known: &[String]) -> String {
        match text::possessive_owner(key) {
            Some(owner) => match text::resolve_name(owner, known.iter().map(String::as_str)) {
                Some(full) => format!("{full}'s"),
                None => key.to_string(),
            },
            None => key.trim().to_string(),
        }
    }

    fn question_for(&self, character: &str, key: &str) -> String {
        match text::possessive_owner(key) {
            Some(other) => render(&self.templates.qa_relation, &[("name", character), ("other", other)]),
            None => render(&self.templates.qa_attribute, &[("name", character), ("key", key)]),
        }
    }

    /// Whether the QA model answers the key's question confidently from
    /// either the fact or the passage.
    fn key_answerable(&self, character: &str, key: &str, fact: &str, passage: &str) -> BackendResult<bool> {
        let q = self.question_for(character, key);
        for ctx in [fact, passage] {
            if ctx.trim().is_empty() {
                continue;
            }
            let r = self.backends.answer(&q, ctx)?;
            if !r.is_abstention() && r.confidence >= self.cfg.qa_threshold {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Attribute keys a fact states about `character`. Values produced in
    /// this step are thrown away.
    pub fn extract_attribute_keys(
        &self,
        fact: &str,
        character: &str,
        passage: &str,
        known: &[String],
    ) -> BackendResult<Vec<String>> {
        let examples: String = self
            .select_examples(fact)?
            .into_iter()
            .map(|i| self.bank.examples[i].render())
            .collect();
        let prompt = render(
            &self.templates.attribute_keys,
            &[("examples", &examples), ("name", character), ("fact", fact)],
        );
        let params = GenParams::new(self.cfg.key_max_tokens, self.cfg.key_temperature, 1).with_stop("\n----");
        let out = self.backends.complete_one(&prompt, &params)?;
        let mut keys: Vec<String> = Vec::new();
        for line in format!("{character}{out}").lines() {
            let Some(st) = text::parse_attribute_line(line, character) else {
                log::debug!("discarding unparseable attribute line {line:?}");
                continue;
            };
            let key = Self::canonical_key(&st.key, known);
            let self_ref = text::possessive_owner(&key).is_some_and(|o| text::names_match(o, character));
            if self_ref || keys.contains(&key) {
                continue;
            }
            keys.push(key);
        }
        let mut gated = Vec::new();
        for key in keys {
            if self.key_answerable(character, &key, fact, passage)? {
                gated.push(key);
            } else {
                log::debug!("QA gate dropped key {key:?} for {character}");
            }
        }
        Ok(gated)
    }

    /// Value for (character, key) read off the fact: the majority of the
    /// samples, else a sample entailed by another; accepted only if the
    /// fact entails the resulting statement. Returns the value and that
    /// entailment probability.
    pub fn infer_value(&self, fact: &str, character: &str, key: &str) -> BackendResult<Option<(String, f64)>> {
        let statement = if text::is_possessive_key(key) {
            format!("{character} is {key}")
        } else {
            format!("{character}'s {key} is")
        };
        let prompt = render(
            &self.templates.attribute_value,
            &[("fact", fact), ("statement", &statement)],
        );
        let params = GenParams::new(
            self.cfg.value_max_tokens,
            self.cfg.value_temperature,
            self.cfg.value_samples,
        )
        .with_stop("\n");
        let samples: Vec<String> = self
            .backends
            .complete(&prompt, &params)?
            .iter()
            .map(|s| clean_value(s))
            .filter(|s| !s.is_empty())
            .collect();
        let mut chosen = None;
        for s in &samples {
            let n = text::normalize(s);
            if samples.iter().filter(|o| text::normalize(o) == n).count() >= 2 {
                chosen = Some(s.clone());
                break;
            }
        }
        if chosen.is_none() {
            'outer: for (i, s) in samples.iter().enumerate() {
                let hyp = attribute_sentence(character, key, s);
                for (j, o) in samples.iter().enumerate() {
                    if i != j
                        && self
                            .backends
                            .entail(&attribute_sentence(character, key, o), &hyp)?
                            .p_entail
                            > self.cfg.entail_threshold
                    {
                        chosen = Some(s.clone());
                        break 'outer;
                    }
                }
            }
        }
        let Some(value) = chosen else {
            return Ok(None);
        };
        let gate = self
            .backends
            .entail(fact, &attribute_sentence(character, key, &value))?;
        if gate.p_entail > self.cfg.entail_threshold {
            Ok(Some((value, gate.p_entail)))
        } else {
            Ok(None)
        }
    }

    /// For a relation key naming another known character, asks for the
    /// reciprocal relation and returns the implied entries as
    /// (character, entry) pairs: the other's relation to `character`, and
    /// name slots on both sides.
    pub fn complete_relations(
        &self,
        character: &str,
        entry: &AttributeEntry,
        known: &[String],
    ) -> BackendResult<Vec<(String, AttributeEntry)>> {
        let Some(owner) = text::possessive_owner(&entry.key) else {
            return Ok(Vec::new());
        };
        let Some(other) = text::resolve_name(owner, known.iter().map(String::as_str)) else {
            return Ok(Vec::new());
        };
        if other == character {
            return Ok(Vec::new());
        }
        let fact = &entry.source_fact.text;
        let prompt = render(
            &self.templates.relation,
            &[("fact", fact), ("other", other), ("name", character)],
        );
        let params = GenParams::new(8, 0.0, 1).with_stop("\n");
        let reciprocal = clean_value(&self.backends.complete_one(&prompt, &params)?);
        if reciprocal.is_empty() || reciprocal.split_whitespace().count() > 4 {
            log::warn!("could not read reciprocal relation of {other} to {character}: {reciprocal:?}");
            return Ok(Vec::new());
        }
        let make = |subject: &str, key: String, value: String| AttributeEntry {
            key,
            value,
            source_fact: Fact {
                character: subject.to_string(),
                text: fact.clone(),
                passage_index: entry.source_fact.passage_index,
            },
            confidence: entry.confidence,
        };
        Ok(vec![
            (
                other.to_string(),
                make(other, format!("{character}'s"), reciprocal.clone()),
            ),
            (
                character.to_string(),
                make(character, format!("{}'s name", entry.value), other.to_string()),
            ),
            (
                other.to_string(),
                make(other, format!("{reciprocal}'s name"), character.to_string()),
            ),
        ])
    }
}
