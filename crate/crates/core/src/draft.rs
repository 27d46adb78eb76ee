//! Prompt composition for each drafting step and candidate sampling.
//!
//! A prompt is a fixed sequence of labeled segments. When it does not fit
//! the token budget, the relevant-context segment shrinks first, then the
//! recent-summary span, and only then is the verbatim tail of the last
//! passage cut from the left.

use serde::{Deserialize, Serialize};

use crate::backends::{relevance, BackendError, Backends, GenParams};
use crate::model::{flatten_outline, CharacterSheet, OutlineLeaf, Passage, Plan, PASSAGE_SEPARATOR};
use crate::templates::{render, Templates};
use crate::text;

pub const NARRATION_NOTE: &str = "The story is written in third person.";
pub const END_NOTE: &str = "This is the end of the story.";

#[derive(Debug, thiserror::Error)]
pub enum DraftError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("prompt needs {needed} tokens even fully shrunk; limit is {limit}")]
    Budget { needed: usize, limit: usize },
    #[error("outline leaf {0} out of range")]
    NoSuchLeaf(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRole {
    RelevantContext,
    NarrationNote,
    PreviousOutline,
    RecentSummary,
    CurrentOutline,
    AutoregressiveContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub segments: Vec<Segment>,
    pub budget: usize,
    pub reserved_generation: usize,
}

impl PromptSpec {
    pub fn render(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn limit(&self) -> usize {
        self.budget.saturating_sub(self.reserved_generation)
    }

    pub fn segment(&self, role: SegmentRole) -> Option<&Segment> {
        self.segments.iter().find(|s| s.role == role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DraftConfig {
    pub num_candidates: usize,
    pub temperature: f64,
    /// Passages before the last one that the recent summary covers.
    pub summary_passages: usize,
    pub summary_max_tokens: usize,
    pub summary_temperature: f64,
    pub description_max_tokens: usize,
    pub description_temperature: f64,
    pub description_sentences: usize,
}

impl Default for DraftConfig {
    fn default() -> Self {
        Self {
            num_candidates: 10,
            temperature: 0.8,
            summary_passages: 2,
            summary_max_tokens: 128,
            summary_temperature: 0.3,
            description_max_tokens: 96,
            description_temperature: 0.8,
            description_sentences: 3,
        }
    }
}

/// Context window split: total tokens and the part kept free for the
/// continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub total: usize,
    pub reserved: usize,
}

impl Budget {
    pub fn limit(&self) -> usize {
        self.total.saturating_sub(self.reserved)
    }
}

/// Plan items the drafting prompt can draw on, in plan order.
pub fn plan_items(plan: &Plan) -> Vec<String> {
    let mut items = vec![
        format!("Premise: {}", plan.premise),
        format!("Setting: {}", plan.setting),
    ];
    items.extend(
        plan.characters
            .iter()
            .filter(|c| !c.description.trim().is_empty())
            .map(|c| c.description.clone()),
    );
    items
}

/// Indices into `plan_items(plan)` to include, in plan order. With no
/// story yet everything is a candidate in plan order; otherwise items are
/// ranked by relevance to the last passage. Items are taken in rank order
/// until the next one does not fit `budget_tokens`.
pub fn select_relevant_context(
    backends: &Backends,
    plan: &Plan,
    passages: &[Passage],
    budget_tokens: usize,
) -> Result<Vec<usize>, BackendError> {
    let items = plan_items(plan);
    let order: Vec<usize> = match passages.last() {
        None => (0..items.len()).collect(),
        Some(last) => {
            let mut texts = vec![last.text.clone()];
            texts.extend(items.iter().cloned());
            let vecs = backends.embed(&texts)?;
            let mut ranked: Vec<(usize, f64)> = vecs[1..].iter().map(|v| relevance(&vecs[0], v)).enumerate().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.into_iter().map(|(i, _)| i).collect()
        }
    };
    let mut used = 0;
    let mut chosen = Vec::new();
    for i in order {
        let cost = backends.count_tokens(&items[i]);
        if used + cost > budget_tokens {
            break;
        }
        used += cost;
        chosen.push(i);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Texts of completed outline points before `leaf`. Points under a
/// different top-level branch collapse into that branch's text; earlier
/// points sharing the current branch are listed individually.
pub fn previous_outline_summary(leaves: &[OutlineLeaf], leaf: usize) -> String {
    let Some(current) = leaves.get(leaf) else {
        return String::new();
    };
    let mut out: Vec<String> = Vec::new();
    for l in &leaves[..leaf] {
        let shared = l
            .ancestor_labels
            .iter()
            .zip(&current.ancestor_labels)
            .take_while(|(a, b)| a == b)
            .count();
        let text = if shared < l.ancestors.len() {
            &l.ancestors[shared]
        } else {
            &l.text
        };
        if out.last() != Some(text) {
            out.push(text.clone());
        }
    }
    out.join(" ")
}

pub struct Drafter<'a> {
    pub backends: &'a Backends,
    pub templates: &'a Templates,
    pub cfg: &'a DraftConfig,
}

impl Drafter<'_> {
    /// Summary of the `k` passages before the last one; empty when there
    /// are none. Falls back to their first sentences if the backend fails.
    pub fn summarize_recent(&self, passages: &[Passage], k: usize) -> String {
        if passages.len() < 2 || k == 0 {
            return String::new();
        }
        let end = passages.len() - 1;
        let span = &passages[end.saturating_sub(k)..end];
        let joined = span
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join(PASSAGE_SEPARATOR);
        let prompt = render(&self.templates.summary, &[("text", &joined)]);
        let params = GenParams::new(self.cfg.summary_max_tokens, self.cfg.summary_temperature, 1).with_stop("\n\n");
        match self.backends.complete_one(&prompt, &params) {
            Ok(s) if !s.trim().is_empty() => s.trim().to_string(),
            Ok(_) | Err(_) => {
                log::warn!("summary unavailable; using leading sentences instead");
                span.iter()
                    .map(|p| text::first_sentences(&p.text, 1))
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        }
    }

    /// Builds the prompt for the next passage under `leaf`.
    pub fn compose_prompt(
        &self,
        plan: &Plan,
        passages: &[Passage],
        leaf: usize,
        budget: Budget,
    ) -> Result<PromptSpec, DraftError> {
        let leaves = flatten_outline(plan);
        let current = leaves.get(leaf).ok_or(DraftError::NoSuchLeaf(leaf))?;
        let limit = budget.limit();
        let spec = |segments: Vec<Segment>| PromptSpec {
            segments,
            budget: budget.total,
            reserved_generation: budget.reserved,
        };
        let items = plan_items(plan);

        if passages.is_empty() {
            let fixed = [seg(SegmentRole::NarrationNote, NARRATION_NOTE),
                seg(
                    SegmentRole::CurrentOutline,
                    &format!("Chapter 1 Summary: {}", current.text),
                ),
                seg(SegmentRole::AutoregressiveContext, "Full text below:\n\nChapter 1")];
            let mut keep = items.len();
            loop {
                let mut segments = Vec::new();
                if keep > 0 {
                    segments.push(seg(
                        SegmentRole::RelevantContext,
                        &setup_block(&items[..keep], &plan.characters),
                    ));
                }
                segments.extend(fixed.iter().cloned());
                let p = spec(segments);
                let n = self.backends.count_tokens(&p.render());
                if n <= limit {
                    return Ok(p);
                }
                if keep == 0 {
                    return Err(DraftError::Budget { needed: n, limit });
                }
                keep -= 1;
            }
        }

        let last_leaf = leaf + 1 == leaves.len();
        let mut outline_line = format!("In the upcoming passage, {}", current.text);
        if last_leaf {
            outline_line.push(' ');
            outline_line.push_str(END_NOTE);
        }
        let previous = previous_outline_summary(&leaves, leaf);
        let last = &passages[passages.len() - 1].text;

        let build = |context: &[usize], summary: &str, tail: &str| {
            let mut segments = Vec::new();
            if !context.is_empty() {
                let body = context
                    .iter()
                    .map(|&i| items[i].as_str())
                    .collect::<Vec<_>>()
                    .join("\n\n");
                segments.push(seg(
                    SegmentRole::RelevantContext,
                    &format!("Relevant Context:\n\n{body}"),
                ));
            }
            segments.push(seg(SegmentRole::NarrationNote, NARRATION_NOTE));
            if !previous.is_empty() {
                segments.push(seg(
                    SegmentRole::PreviousOutline,
                    &format!("Previous story summary: {previous}"),
                ));
            }
            if !summary.is_empty() {
                segments.push(seg(
                    SegmentRole::RecentSummary,
                    &format!("Events immediately prior to the upcoming passage: {summary}"),
                ));
            }
            segments.push(seg(SegmentRole::CurrentOutline, &outline_line));
            segments.push(seg(
                SegmentRole::AutoregressiveContext,
                &format!("Full text below:\n\n{tail}"),
            ));
            spec(segments)
        };
        let cost = |p: &PromptSpec| self.backends.count_tokens(&p.render());

        // Shrink the summary span only once no context is left to drop.
        for k in (0..=self.cfg.summary_passages).rev() {
            let summary = self.summarize_recent(passages, k);
            let bare = build(&[], &summary, last);
            let rest = cost(&bare);
            if rest <= limit {
                let mut room = limit - rest;
                loop {
                    let context = select_relevant_context(self.backends, plan, passages, room)?;
                    let p = build(&context, &summary, last);
                    let n = cost(&p);
                    if n <= limit || context.is_empty() {
                        return Ok(p);
                    }
                    room = room.saturating_sub(n - limit);
                }
            }
            if k == 0 {
                let without_tail = cost(&build(&[], "", ""));
                if without_tail >= limit {
                    return Err(DraftError::Budget {
                        needed: without_tail,
                        limit,
                    });
                }
                let mut room = limit - without_tail;
                loop {
                    let tail = self.backends.truncate_left(last, room);
                    let p = build(&[], "", &tail);
                    let n = cost(&p);
                    if n <= limit {
                        return Ok(p);
                    }
                    if room == 0 {
                        return Err(DraftError::Budget { needed: n, limit });
                    }
                    room -= 1;
                }
            }
        }
        unreachable!("summary span loop always reaches k = 0")
    }

    /// `num_candidates` continuations of at most `max_tokens` each.
    pub fn generate_candidates(
        &self,
        prompt: &str,
        max_tokens: usize,
        attempt: u32,
    ) -> Result<Vec<String>, BackendError> {
        let params = GenParams::new(max_tokens, self.cfg.temperature, self.cfg.num_candidates).with_attempt(attempt);
        self.backends.complete(prompt, &params)
    }

    /// Person entities in `passage` not matching any known character, each
    /// with a generated description. Description failures leave it empty.
    pub fn new_characters(
        &self,
        passage: &str,
        passage_index: usize,
        known: &[CharacterSheet],
    ) -> Result<Vec<CharacterSheet>, BackendError> {
        let mut added: Vec<CharacterSheet> = Vec::new();
        for ent in self.backends.detect_entities(passage)? {
            if !ent.is_person {
                continue;
            }
            let name = ent.surface.trim();
            let matches_existing = known
                .iter()
                .chain(added.iter())
                .any(|c| text::names_match(&c.name, name));
            if name.is_empty() || matches_existing {
                continue;
            }
            let prompt = render(
                &self.templates.entity_description,
                &[("passage", passage), ("name", name)],
            );
            let params =
                GenParams::new(self.cfg.description_max_tokens, self.cfg.description_temperature, 1).with_stop("\n");
            let description = match self.backends.complete_one(&prompt, &params) {
                Ok(out) if !out.trim().is_empty() => {
                    text::first_sentences(&format!("{name} is {}", out.trim()), self.cfg.description_sentences)
                }
                Ok(_) => String::new(),
                Err(e) => {
                    log::warn!("no description for new character {name}: {e}");
                    String::new()
                }
            };
            added.push(CharacterSheet {
                name: name.to_string(),
                description,
                created_at: passage_index,
            });
        }
        Ok(added)
    }
}

fn seg(role: SegmentRole, text: &str) -> Segment {
    Segment {
        role,
        text: text.to_string(),
    }
}

/// Premise, setting and a `Characters:` block built from the kept items.
fn setup_block(items: &[String], characters: &[CharacterSheet]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut chars: Vec<&str> = Vec::new();
    for item in items {
        if item.starts_with("Premise: ") || item.starts_with("Setting: ") {
            parts.push(item.clone());
        } else if characters.iter().any(|c| &c.description == item) {
            chars.push(item);
        }
    }
    if !chars.is_empty() {
        parts.push(format!("Characters:\n{}", chars.join("\n")));
    }
    parts.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OutlineNode;

    fn leaves(plan_outline: Vec<OutlineNode>) -> Vec<OutlineLeaf> {
        let plan = Plan {
            premise: crate::model::Premise::new("P.").unwrap(),
            setting: "The story is set in a town.".into(),
            characters: vec![],
            outline: plan_outline,
        };
        flatten_outline(&plan)
    }

    fn node(label: &str, text: &str, kids: &[(&str, &str)]) -> OutlineNode {
        let mut n = OutlineNode::leaf(label, text);
        n.children = kids.iter().map(|(l, t)| OutlineNode::leaf(*l, *t)).collect();
        n
    }

    #[test]
    fn previous_outline_flat() {
        let l = leaves(vec![node("1", "A.", &[]), node("2", "B.", &[]), node("3", "C.", &[])]);
        assert_eq!(previous_outline_summary(&l, 0), "");
        assert_eq!(previous_outline_summary(&l, 2), "A. B.");
    }

    #[test]
    fn previous_outline_collapses_finished_branches() {
        let l = leaves(vec![
            node("1", "A.", &[("1.a", "a1."), ("1.b", "a2.")]),
            node("2", "B.", &[("2.a", "b1."), ("2.b", "b2.")]),
        ]);
        assert_eq!(previous_outline_summary(&l, 1), "a1.");
        assert_eq!(previous_outline_summary(&l, 2), "A.");
        assert_eq!(previous_outline_summary(&l, 3), "A. b1.");
    }

    #[test]
    fn segment_roles_are_ordered() {
        let mut roles = [SegmentRole::AutoregressiveContext,
            SegmentRole::RelevantContext,
            SegmentRole::CurrentOutline];
        roles.sort();
        assert_eq!(roles[0], SegmentRole::RelevantContext);
    }
}
