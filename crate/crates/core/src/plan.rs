//! Premise, setting, characters and outline generation.
//!
//! Everything here is rejection sampling around a completion backend:
//! generate, parse, check, resample with a bumped attempt counter. All caps
//! on resampling are configurable so a run always terminates.

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Backends, GenParams};
use crate::model::{child_label, CharacterSheet, OutlineNode, Plan, Premise, PremiseError, SETTING_PREFIX};
use crate::templates::{render, Templates};
use crate::text;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Premise(#[from] PremiseError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no usable setting after {attempts} attempts")]
    SettingGenerationFailed { attempts: u32 },
    #[error("every sampled name was filtered out in {rounds} rounds")]
    NameSamplingExhausted { rounds: u32 },
    #[error("no description for {name} after {attempts} attempts")]
    DescriptionFailed { name: String, attempts: u32 },
    #[error("no well-formed outline{} after {attempts} attempts", .required.map(|n| format!(" with {n} points")).unwrap_or_default())]
    OutlineGenerationFailed { attempts: u32, required: Option<usize> },
    #[error("could not expand outline point {label} after {attempts} attempts")]
    ExpansionFailed { label: String, attempts: u32 },
}

pub type PlanResult<T> = Result<T, PlanError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NameFilterConfig {
    /// Case-insensitive; a name containing any of these is dropped.
    pub banned_substrings: Vec<String>,
    pub prefer_word_count: usize,
    pub samples_per_round: usize,
}

impl Default for NameFilterConfig {
    fn default() -> Self {
        Self {
            banned_substrings: [
                "protagonist",
                "antagonist",
                "narrator",
                "character",
                "age",
                "gender",
                "name",
                "unknown",
                "unnamed",
                "none",
            ]
            .map(String::from)
            .to_vec(),
            prefer_word_count: 2,
            samples_per_round: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub premise_max_tokens: usize,
    pub premise_temperature: f64,
    pub setting_max_tokens: usize,
    pub setting_temperature: f64,
    pub setting_attempts: u32,
    pub max_characters: usize,
    pub names: NameFilterConfig,
    pub name_max_tokens: usize,
    pub name_temperature: f64,
    pub name_rounds: u32,
    pub description_max_tokens: usize,
    pub description_temperature: f64,
    pub description_attempts: u32,
    /// Longest description kept, in sentences.
    pub description_sentences: usize,
    pub outline_max_tokens: usize,
    pub outline_temperature: f64,
    pub outline_attempts: u32,
    pub expand_max_tokens: usize,
    pub expand_temperature: f64,
    pub expand_attempts: u32,
    pub min_children: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            premise_max_tokens: 128,
            premise_temperature: 1.0,
            setting_max_tokens: 48,
            setting_temperature: 0.8,
            setting_attempts: 5,
            max_characters: 3,
            names: NameFilterConfig::default(),
            name_max_tokens: 8,
            name_temperature: 1.0,
            name_rounds: 3,
            description_max_tokens: 96,
            description_temperature: 0.8,
            description_attempts: 3,
            description_sentences: 3,
            outline_max_tokens: 256,
            outline_temperature: 0.8,
            outline_attempts: 20,
            expand_max_tokens: 256,
            expand_temperature: 0.8,
            expand_attempts: 10,
            min_children: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed;

impl std::fmt::Display for Malformed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("malformed numbered list")
    }
}

impl std::error::Error for Malformed {}

/// Parses `1. A\n2. B\n...`. Every non-blank line must carry the next
/// number followed by a non-empty body.
pub fn parse_numbered_list(raw: &str) -> Result<Vec<String>, Malformed> {
    let mut out = Vec::new();
    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let marker = format!("{}.", out.len() + 1);
        let body = line.strip_prefix(&marker).ok_or(Malformed)?;
        if !body.is_empty() && !body.starts_with(char::is_whitespace) {
            return Err(Malformed);
        }
        let body = body.trim();
        if body.is_empty() {
            return Err(Malformed);
        }
        out.push(body.to_string());
    }
    if out.is_empty() {
        Err(Malformed)
    } else {
        Ok(out)
    }
}

pub fn render_numbered_list<S: AsRef<str>>(points: &[S]) -> String {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. {}", i + 1, p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Indented outline with each node's last label component, e.g.
/// `1. A` and `    a. B`.
pub fn render_outline(nodes: &[OutlineNode]) -> String {
    fn walk(nodes: &[OutlineNode], depth: usize, out: &mut Vec<String>) {
        for n in nodes {
            let tail = n.label.rsplit('.').next().unwrap_or(&n.label);
            out.push(format!("{}{}. {}", "    ".repeat(depth), tail, n.text));
            walk(&n.children, depth + 1, out);
        }
    }
    let mut out = Vec::new();
    walk(nodes, 0, &mut out);
    out.join("\n")
}

fn has_punctuation(name: &str) -> bool {
    name.chars().any(|c| !(c.is_alphanumeric() || c == ' '))
}

/// Cleans one raw name sample: first line, trimmed.
pub fn clean_name(raw: &str) -> String {
    raw.lines()
        .next()
        .unwrap_or("")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whether a single name passes the banned-substring and punctuation
/// rules.
pub fn name_allowed(name: &str, cfg: &NameFilterConfig) -> bool {
    let lower = name.to_lowercase();
    !name.is_empty()
        && !has_punctuation(name)
        && !cfg.banned_substrings.iter().any(|b| lower.contains(&b.to_lowercase()))
}

/// Picks one name from a round of samples: banned or punctuated names go,
/// names repeated within the round go unless the premise mentions them,
/// names already taken by `existing` go; then names with the preferred word
/// count come first, in sample order.
pub fn filter_names(
    candidates: &[String],
    premise: &str,
    existing: &[String],
    cfg: &NameFilterConfig,
) -> Option<String> {
    let names: Vec<String> = candidates.iter().map(|c| clean_name(c)).collect();
    let survivors: Vec<&String> = names
        .iter()
        .filter(|n| name_allowed(n, cfg))
        .filter(|n| premise.contains(n.as_str()) || names.iter().filter(|m| m == n).count() <= 1)
        .filter(|n| !existing.iter().any(|e| text::names_match(e, n)))
        .collect();
    survivors
        .iter()
        .find(|n| n.split_whitespace().count() == cfg.prefer_word_count)
        .or_else(|| survivors.first())
        .map(|n| n.to_string())
}

/// Text of the characters block used in later prompts: one description per
/// line.
pub fn characters_block(characters: &[CharacterSheet]) -> String {
    characters
        .iter()
        .map(|c| c.description.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct Planner<'a> {
    pub backends: &'a Backends,
    pub templates: &'a Templates,
    pub cfg: &'a PlanConfig,
}

impl Planner<'_> {
    /// `n` premises drawn in batches of ten, each batch a fresh attempt.
    pub fn generate_premises(&self, n: usize) -> PlanResult<Vec<Premise>> {
        if n == 0 {
            return Err(PlanError::Precondition("premise count must be >= 1".into()));
        }
        let mut out = Vec::with_capacity(n);
        let mut attempt = 0u32;
        while out.len() < n {
            let batch = (n - out.len()).min(10);
            let params =
                GenParams::new(self.cfg.premise_max_tokens, self.cfg.premise_temperature, batch).with_attempt(attempt);
            for raw in self.backends.complete(&self.templates.premise, &params)? {
                let para = raw.trim().split("\n\n").next().unwrap_or("").to_string();
                match Premise::new(para) {
                    Ok(p) => out.push(p),
                    Err(e) => log::debug!("discarding premise sample: {e}"),
                }
            }
            attempt += 1;
            if attempt > 10 * (n as u32 / 10 + 1) {
                return Err(PlanError::Precondition(
                    "premise backend keeps returning empty text".into(),
                ));
            }
        }
        out.truncate(n);
        Ok(out)
    }

    pub fn generate_premise(&self) -> PlanResult<Premise> {
        Ok(self.generate_premises(1)?.remove(0))
    }

    pub fn generate_setting(&self, premise: &Premise) -> PlanResult<String> {
        let prompt = render(&self.templates.setting, &[("premise", premise.as_str())]);
        for attempt in 0..self.cfg.setting_attempts {
            let params =
                GenParams::new(self.cfg.setting_max_tokens, self.cfg.setting_temperature, 1).with_attempt(attempt);
            let out = self.backends.complete_one(&prompt, &params)?;
            let out = out.lines().next().unwrap_or("").trim_end();
            if out.trim().is_empty() {
                continue;
            }
            let sentence = text::first_sentences(&format!("{SETTING_PREFIX} in {}", out.trim_start()), 1);
            return Ok(if sentence.ends_with(['.', '!', '?']) {
                sentence
            } else {
                format!("{sentence}.")
            });
        }
        Err(PlanError::SettingGenerationFailed {
            attempts: self.cfg.setting_attempts,
        })
    }

    fn entries_block(&self, prior: &[CharacterSheet]) -> String {
        prior
            .iter()
            .enumerate()
            .map(|(i, c)| {
                render(
                    &self.templates.character_entry,
                    &[
                        ("number", &(i + 1).to_string()),
                        ("name", &c.name),
                        ("description", &c.description),
                    ],
                )
            })
            .collect()
    }

    pub fn sample_character_name(
        &self,
        premise: &Premise,
        setting: &str,
        prior: &[CharacterSheet],
    ) -> PlanResult<String> {
        let prompt = render(
            &self.templates.character_name,
            &[
                ("premise", premise.as_str()),
                ("setting", setting),
                ("characters", &self.entries_block(prior)),
                ("number", &(prior.len() + 1).to_string()),
            ],
        );
        let existing: Vec<String> = prior.iter().map(|c| c.name.clone()).collect();
        for round in 0..self.cfg.name_rounds {
            let params = GenParams::new(
                self.cfg.name_max_tokens,
                self.cfg.name_temperature,
                self.cfg.names.samples_per_round,
            )
            .with_stop("\n")
            .with_attempt(round);
            let samples = self.backends.complete(&prompt, &params)?;
            if let Some(name) = filter_names(&samples, premise.as_str(), &existing, &self.cfg.names) {
                return Ok(name);
            }
            log::debug!("name round {round} produced no usable name");
        }
        Err(PlanError::NameSamplingExhausted {
            rounds: self.cfg.name_rounds,
        })
    }

    /// Description starting with the character's name, cut to the
    /// configured number of sentences.
    pub fn generate_character_description(
        &self,
        name: &str,
        premise: &Premise,
        setting: &str,
        prior: &[CharacterSheet],
    ) -> PlanResult<String> {
        let prompt = render(
            &self.templates.character_description,
            &[
                ("premise", premise.as_str()),
                ("setting", setting),
                ("characters", &self.entries_block(prior)),
                ("number", &(prior.len() + 1).to_string()),
                ("name", name),
            ],
        );
        for attempt in 0..self.cfg.description_attempts {
            let params = GenParams::new(self.cfg.description_max_tokens, self.cfg.description_temperature, 1)
                .with_stop("\n")
                .with_attempt(attempt);
            let out = self.backends.complete_one(&prompt, &params)?;
            if out.trim().is_empty() {
                continue;
            }
            return Ok(text::first_sentences(
                &format!("{name} is {}", out.trim()),
                self.cfg.description_sentences,
            ));
        }
        Err(PlanError::DescriptionFailed {
            name: name.to_string(),
            attempts: self.cfg.description_attempts,
        })
    }

    /// Up to `max_characters` characters, each conditioned on those before
    /// it. A failed name round ends the list early unless it is the first.
    pub fn generate_characters(&self, premise: &Premise, setting: &str) -> PlanResult<Vec<CharacterSheet>> {
        let mut sheets: Vec<CharacterSheet> = Vec::new();
        while sheets.len() < self.cfg.max_characters {
            let name = match self.sample_character_name(premise, setting, &sheets) {
                Ok(n) => n,
                Err(PlanError::NameSamplingExhausted { .. }) if !sheets.is_empty() => break,
                Err(e) => return Err(e),
            };
            let description = self.generate_character_description(&name, premise, setting, &sheets)?;
            sheets.push(CharacterSheet {
                name,
                description,
                created_at: 0,
            });
        }
        Ok(sheets)
    }

    /// Top-level outline, resampled until it parses and, when `required`
    /// is set, has exactly that many points.
    pub fn generate_outline(
        &self,
        premise: &Premise,
        setting: &str,
        characters: &[CharacterSheet],
        required: Option<usize>,
    ) -> PlanResult<Vec<OutlineNode>> {
        let prompt = render(
            &self.templates.outline,
            &[
                ("premise", premise.as_str()),
                ("setting", setting),
                ("characters", &characters_block(characters)),
            ],
        );
        for attempt in 0..self.cfg.outline_attempts {
            let params = GenParams::new(self.cfg.outline_max_tokens, self.cfg.outline_temperature, 1)
                .with_stop("\n\n")
                .with_attempt(attempt);
            let out = self.backends.complete_one(&prompt, &params)?;
            let Ok(points) = parse_numbered_list(&format!("1.{out}")) else {
                log::debug!("outline attempt {attempt} malformed");
                continue;
            };
            if required.is_some_and(|k| points.len() != k) {
                log::debug!("outline attempt {attempt} has {} points", points.len());
                continue;
            }
            return Ok(points
                .into_iter()
                .enumerate()
                .map(|(i, t)| OutlineNode::leaf(child_label(None, i), t))
                .collect());
        }
        Err(PlanError::OutlineGenerationFailed {
            attempts: self.cfg.outline_attempts,
            required,
        })
    }

    /// Gives every leaf shallower than `target_depth` at least
    /// `min_children` sub-points, level by level.
    pub fn expand_outline(&self, plan: &Plan, target_depth: usize) -> PlanResult<Plan> {
        let current = plan.outline_depth();
        if target_depth < current {
            return Err(PlanError::Precondition(format!(
                "target depth {target_depth} is below current depth {current}"
            )));
        }
        let mut plan = plan.clone();
        while plan.outline_depth() < target_depth {
            let snapshot = render_outline(&plan.outline);
            let mut outline = std::mem::take(&mut plan.outline);
            self.expand_level(&plan, &snapshot, &mut outline, 1, target_depth)?;
            plan.outline = outline;
        }
        Ok(plan)
    }

    fn expand_level(
        &self,
        plan: &Plan,
        snapshot: &str,
        nodes: &mut [OutlineNode],
        depth: usize,
        target: usize,
    ) -> PlanResult<()> {
        for node in nodes.iter_mut() {
            if !node.children.is_empty() {
                self.expand_level(plan, snapshot, &mut node.children, depth + 1, target)?;
            } else if depth < target {
                node.children = self.sub_points(plan, snapshot, node)?;
            }
        }
        Ok(())
    }

    fn sub_points(&self, plan: &Plan, snapshot: &str, node: &OutlineNode) -> PlanResult<Vec<OutlineNode>> {
        let prompt = render(
            &self.templates.outline_expand,
            &[
                ("premise", plan.premise.as_str()),
                ("setting", &plan.setting),
                ("characters", &characters_block(&plan.characters)),
                ("outline", snapshot),
                ("label", &node.label),
                ("point", &node.text),
            ],
        );
        for attempt in 0..self.cfg.expand_attempts {
            let params = GenParams::new(self.cfg.expand_max_tokens, self.cfg.expand_temperature, 1)
                .with_stop("\n\n")
                .with_attempt(attempt);
            let out = self.backends.complete_one(&prompt, &params)?;
            match parse_numbered_list(&format!("1.{out}")) {
                Ok(points) if points.len() >= self.cfg.min_children => {
                    return Ok(points
                        .into_iter()
                        .enumerate()
                        .map(|(i, t)| OutlineNode::leaf(child_label(Some(&node.label), i), t))
                        .collect());
                }
                _ => log::debug!("expansion of {} attempt {attempt} rejected", node.label),
            }
        }
        Err(PlanError::ExpansionFailed {
            label: node.label.clone(),
            attempts: self.cfg.expand_attempts,
        })
    }

    /// Setting, characters and outline for `premise`.
    pub fn generate_plan(&self, premise: Premise, outline_points: Option<usize>, depth: usize) -> PlanResult<Plan> {
        let setting = self.generate_setting(&premise)?;
        let characters = self.generate_characters(&premise, &setting)?;
        let outline = self.generate_outline(&premise, &setting, &characters, outline_points)?;
        let plan = Plan {
            premise,
            setting,
            characters,
            outline,
        };
        if depth > 1 {
            self.expand_outline(&plan, depth)
        } else {
            Ok(plan)
        }
    }
}
