use crate::backends::{BackendResult, GenParams};
use crate::templates::render;
use crate::text;

use super::{Editor, Fact};

/// Parses a numbered list `1. ...`, `2. ...`. Blank lines are skipped; the
/// list ends at the first line that does not carry the next number.
/// Returns `None` when not even item 1 is present.
pub fn parse_fact_list(raw: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let marker = format!("{}.", out.len() + 1);
        let Some(body) = line.strip_prefix(&marker) else { break };
        let body = body.trim();
        if body.is_empty() {
            break;
        }
        out.push(body.to_string());
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// First sentence of a list item, with a closing period added if missing.
fn as_fact_sentence(item: &str) -> String {
    let s = text::first_sentences(item, 1);
    let s = s.trim();
    if s.ends_with(['.', '!', '?', '"']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

impl Editor {
    /// Samples several fact lists about `character` and keeps the facts the
    /// samples agree on: repeated in enough outputs, or entailed by a fact
    /// from another output.
    pub fn list_facts(&self, passage: &str, character: &str, passage_index: usize) -> BackendResult<Vec<Fact>> {
        let prompt = render(&self.templates.facts, &[("passage", passage), ("name", character)]);
        let params = GenParams::new(
            self.cfg.fact_max_tokens,
            self.cfg.fact_temperature,
            self.cfg.fact_samples,
        );
        let outputs = self.backends.complete(&prompt, &params)?;
        let lists: Vec<Vec<String>> = outputs
            .iter()
            .filter_map(|o| parse_fact_list(&format!("1. {character}{o}")))
            .map(|items| items.iter().map(|i| as_fact_sentence(i)).collect())
            .collect();
        if lists.is_empty() {
            log::warn!("no parseable fact list for {character}");
            return Ok(Vec::new());
        }
        let mut kept: Vec<String> = Vec::new();
        for (i, list) in lists.iter().enumerate() {
            for fact in list {
                let norm = text::normalize(fact);
                if kept.iter().any(|k| text::normalize(k) == norm) {
                    continue;
                }
                let repeats = lists
                    .iter()
                    .filter(|l| l.iter().any(|f| text::normalize(f) == norm))
                    .count();
                let mut keep = repeats >= self.cfg.fact_agreement;
                if !keep {
                    'outer: for (j, other) in lists.iter().enumerate() {
                        if j == i {
                            continue;
                        }
                        for premise in other {
                            if self.backends.entail(premise, fact)?.p_entail > self.cfg.entail_threshold {
                                keep = true;
                                break 'outer;
                            }
                        }
                    }
                }
                if keep {
                    kept.push(fact.clone());
                }
            }
        }
        Ok(kept
            .into_iter()
            .map(|text| Fact {
                character: character.to_string(),
                text,
                passage_index,
            })
            .collect())
    }
}
