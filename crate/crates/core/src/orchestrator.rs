//! Whole-story runs: the planned pipeline, the rolling-window baseline and
//! ablations of the former.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, BackendResult, Backends, GenParams, LanguageModel};
use crate::config::Config;
use crate::draft::{Budget, DraftError, Drafter};
use crate::edit::{AttributeDictionary, ContradictionFlag, Correction, DetectMode, Editor, ExampleBank, KbUpdate};
use crate::model::{flatten_outline, story_text, CharacterSheet, Passage, PassageWindow, Plan, Premise};
use crate::plan::{PlanError, Planner};
use crate::rewrite::{rerank, Candidate};
use crate::templates::Templates;

pub const SCHEMA_VERSION: u32 = 1;
pub const ENDING: &str = "The End.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Plan, then draft, rerank and edit passage by passage.
    Planned,
    /// Premise plus story so far, truncated from the left.
    Rolling,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_plan: bool,
    pub no_rerank: bool,
    pub no_edit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Exact number of top-level outline points; unset accepts any.
    pub outline_points: Option<usize>,
    /// 1 for a flat outline, 2 to expand every point into sub-points.
    pub outline_depth: usize,
    pub passages_per_leaf: usize,
    /// Move to the next outline leaf when the best candidate's score drops
    /// by more than `alignment_threshold`, instead of a fixed count.
    pub adaptive: bool,
    pub alignment_threshold: f64,
    pub min_passages_per_leaf: usize,
    pub max_passages_per_leaf: usize,
    /// Hard cap on passages in adaptive mode.
    pub max_passages: usize,
    pub continuation_tokens: usize,
    pub max_context: usize,
    pub rolling_truncate: usize,
    pub rolling_total: usize,
    pub ablations: Ablations,
    /// Record every generation request in the artifact.
    pub dump_prompts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Planned,
            seed: 0,
            outline_points: Some(3),
            outline_depth: 1,
            passages_per_leaf: 4,
            adaptive: false,
            alignment_threshold: 1.0,
            min_passages_per_leaf: 1,
            max_passages_per_leaf: 8,
            max_passages: 48,
            continuation_tokens: 256,
            max_context: 1024,
            rolling_truncate: 768,
            rolling_total: 3072,
            ablations: Ablations::default(),
            dump_prompts: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("outline_depth", self.outline_depth),
            ("passages_per_leaf", self.passages_per_leaf),
            ("min_passages_per_leaf", self.min_passages_per_leaf),
            ("max_passages_per_leaf", self.max_passages_per_leaf),
            ("max_passages", self.max_passages),
            ("continuation_tokens", self.continuation_tokens),
            ("max_context", self.max_context),
            ("rolling_truncate", self.rolling_truncate),
            ("rolling_total", self.rolling_total),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("run.{name} must be >= 1"));
        }
        if self.outline_points == Some(0) {
            return Err("run.outline_points must be >= 1 when set".into());
        }
        if self.rolling_truncate + self.continuation_tokens > self.max_context {
            return Err("run.rolling_truncate + run.continuation_tokens exceeds run.max_context".into());
        }
        if self.continuation_tokens >= self.max_context {
            return Err("run.continuation_tokens must be below run.max_context".into());
        }
        if self.min_passages_per_leaf > self.max_passages_per_leaf {
            return Err("run.min_passages_per_leaf exceeds run.max_passages_per_leaf".into());
        }
        if self.adaptive {
            if !(self.alignment_threshold > 0.0) {
                return Err("run.alignment_threshold must be positive".into());
            }
            if self.ablations.no_rerank {
                return Err("adaptive pacing needs reranker scores; it cannot run with no_rerank".into());
            }
            if self.ablations.no_plan {
                return Err("adaptive pacing follows the outline; it cannot run with no_plan".into());
            }
        }
        Ok(())
    }

    fn budget(&self) -> Budget {
        Budget {
            total: self.max_context,
            reserved: self.continuation_tokens,
        }
    }
}

/// Whether to move past the current outline leaf: the new best candidate
/// scores worse than the previous passage by more than `threshold`.
pub fn outline_alignment_step(prev_best_lp: f64, new_best_lp: f64, threshold: f64) -> bool {
    prev_best_lp - new_best_lp > threshold
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Draft(#[from] DraftError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// Finished, but with unresolved contradictions or fallbacks.
    Degraded,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub kind: String,
    pub prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<GenParams>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditLog {
    pub flags: Vec<ContradictionFlag>,
    pub corrections: Vec<Correction>,
    pub updates: Vec<KbUpdate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub passage_index: usize,
    pub section_path: String,
    pub prompt: String,
    pub prompt_tokens: usize,
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edit: Option<EditLog>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub new_characters: Vec<String>,
}

/// One pacing decision in adaptive mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDecision {
    pub leaf: String,
    pub best_lp: f64,
    pub advanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryArtifact {
    pub schema_version: u32,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: Config,
    pub premise: String,
    pub plan: Option<Plan>,
    /// Characters found mid-story when there is no plan to hold them.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub characters: Vec<CharacterSheet>,
    pub passages: Vec<Passage>,
    pub steps: Vec<StepLog>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub alignment: Vec<AlignmentDecision>,
    pub kb: BTreeMap<String, AttributeDictionary>,
    pub ending: Option<String>,
    pub final_text: String,
    pub unresolved_flags: usize,
    pub fallbacks: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<PromptRecord>,
}

impl StoryArtifact {
    pub fn total_tokens(&self) -> usize {
        self.passages.iter().map(|p| p.token_count).sum()
    }
}

/// Wraps a language model and records every call it serves.
pub struct Recorder {
    inner: Arc<dyn LanguageModel>,
    records: Mutex<Vec<PromptRecord>>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn LanguageModel>) -> Self {
        Self {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn take(&self) -> Vec<PromptRecord> {
        std::mem::take(&mut *self.records.lock().unwrap_or_else(|e| e.into_inner()))
    }

    fn push(&self, r: PromptRecord) {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(r);
    }
}

impl LanguageModel for Recorder {
    fn context_limit(&self) -> usize {
        self.inner.context_limit()
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> BackendResult<Vec<String>> {
        let out = self.inner.complete(prompt, params)?;
        self.push(PromptRecord {
            kind: "complete".into(),
            prompt: prompt.to_string(),
            suffix: None,
            params: Some(params.clone()),
            outputs: out.clone(),
        });
        Ok(out)
    }

    fn insert(&self, prefix: &str, suffix: &str, params: &GenParams) -> BackendResult<String> {
        let out = self.inner.insert(prefix, suffix, params)?;
        self.push(PromptRecord {
            kind: "insert".into(),
            prompt: prefix.to_string(),
            suffix: Some(suffix.to_string()),
            params: Some(params.clone()),
            outputs: vec![out.clone()],
        });
        Ok(out)
    }

    fn edit(&self, text: &str, instruction: &str) -> BackendResult<String> {
        let out = self.inner.edit(text, instruction)?;
        self.push(PromptRecord {
            kind: "edit".into(),
            prompt: text.to_string(),
            suffix: Some(instruction.to_string()),
            params: None,
            outputs: vec![out.clone()],
        });
        Ok(out)
    }
}

/// Mutable state of one run.
struct Session {
    plan: Option<Plan>,
    loose: Vec<CharacterSheet>,
    passages: Vec<Passage>,
    kb: BTreeMap<String, AttributeDictionary>,
    steps: Vec<StepLog>,
    alignment: Vec<AlignmentDecision>,
    unresolved: usize,
    fallbacks: usize,
    ending: Option<String>,
    final_text: String,
}

impl Session {
    fn new() -> Self {
        Self {
            plan: None,
            loose: Vec::new(),
            passages: Vec::new(),
            kb: BTreeMap::new(),
            steps: Vec::new(),
            alignment: Vec::new(),
            unresolved: 0,
            fallbacks: 0,
            ending: None,
            final_text: String::new(),
        }
    }

    fn push_passage(&mut self, text: String, section_path: String, token_count: usize) -> usize {
        let index = self.passages.len();
        self.passages.push(Passage {
            text,
            section_path,
            index,
            token_count,
        });
        index
    }

    fn characters(&self) -> &[CharacterSheet] {
        match &self.plan {
            Some(p) => &p.characters,
            None => &self.loose,
        }
    }
}

/// Outcome of generating and ranking one step's candidates.
struct Drafted {
    prompt: String,
    prompt_tokens: usize,
    candidates: Vec<Candidate>,
    chosen: usize,
    degraded: bool,
    best_lp: Option<f64>,
}

/// Everything one run needs. Construct once per run; runs share nothing.
pub struct Runner {
    pub config: Config,
    backends: Backends,
    templates: Templates,
    editor: Editor,
    recorder: Option<Arc<Recorder>>,
}

impl Runner {
    pub fn new(config: Config, backends: Backends, templates: Templates, bank: ExampleBank) -> Self {
        let mut backends = backends;
        let recorder = config
            .run
            .dump_prompts
            .then(|| Arc::new(Recorder::new(backends.lm.clone())));
        if let Some(r) = &recorder {
            backends.lm = r.clone();
        }
        let mut edit_cfg = config.edit.clone();
        // Recorded calls must come out in a reproducible order.
        if recorder.is_some() {
            edit_cfg.parallel = false;
        }
        let editor = Editor::new(backends.clone(), templates.clone(), edit_cfg, bank);
        Self {
            config,
            backends,
            templates,
            editor,
            recorder,
        }
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    /// Runs the configured mode. Errors still yield an artifact, marked
    /// aborted and holding whatever was generated.
    pub fn run(&self, premise: &Premise) -> StoryArtifact {
        let mut s = Session::new();
        let result = self.config.run.validate().map_err(RunError::Config).and_then(|()| {
            match (self.config.run.mode, self.config.run.ablations.no_plan) {
                (Mode::Rolling, _) => self.rolling(premise, &mut s),
                (Mode::Planned, true) => self.unplanned(premise, &mut s),
                (Mode::Planned, false) => self.planned(premise, &mut s),
            }
        });
        self.finish(premise, s, result.err())
    }

    fn finish(&self, premise: &Premise, s: Session, error: Option<RunError>) -> StoryArtifact {
        let status = if error.is_some() {
            RunStatus::Aborted
        } else if s.unresolved > 0 || s.fallbacks > 0 {
            RunStatus::Degraded
        } else {
            RunStatus::Complete
        };
        if let Some(e) = &error {
            log::error!("run aborted: {e}");
        }
        let final_text = if error.is_some() {
            story_text(&s.passages, PassageWindow::All)
        } else {
            s.final_text
        };
        StoryArtifact {
            schema_version: SCHEMA_VERSION,
            status,
            error: error.map(|e| e.to_string()),
            config: self.config.clone(),
            premise: premise.to_string(),
            plan: s.plan,
            characters: s.loose,
            passages: s.passages,
            steps: s.steps,
            alignment: s.alignment,
            kb: s.kb,
            ending: s.ending,
            final_text,
            unresolved_flags: s.unresolved,
            fallbacks: s.fallbacks,
            prompts: self.recorder.as_ref().map(|r| r.take()).unwrap_or_default(),
        }
    }

    fn drafter(&self) -> Drafter<'_> {
        Drafter {
            backends: &self.backends,
            templates: &self.templates,
            cfg: &self.config.draft,
        }
    }

    /// The rolling prompt: premise and story so far, cut from the left.
    pub fn rolling_prompt(&self, premise: &Premise, passages: &[Passage]) -> String {
        let story = story_text(passages, PassageWindow::All);
        let full = if story.is_empty() {
            premise.to_string()
        } else {
            format!("{premise}\n\n{story}")
        };
        self.backends.truncate_left(&full, self.config.run.rolling_truncate)
    }

    fn rolling(&self, premise: &Premise, s: &mut Session) -> Result<(), RunError> {
        let run = &self.config.run;
        let mut total = 0;
        while total < run.rolling_total {
            let prompt = self.rolling_prompt(premise, &s.passages);
            let params = GenParams::new(run.continuation_tokens, self.config.draft.temperature, 1);
            let raw = self.backends.complete_one(&prompt, &params)?;
            let text = raw.trim().to_string();
            let tokens = self.backends.count_tokens(&text);
            let index = s.push_passage(text, String::new(), tokens);
            s.steps.push(StepLog {
                passage_index: index,
                section_path: String::new(),
                prompt_tokens: self.backends.count_tokens(&prompt),
                prompt,
                candidates: vec![Candidate::new(0, raw)],
                chosen: 0,
                degraded: false,
                edit: None,
                new_characters: Vec::new(),
            });
            // A model that returns nothing would otherwise loop forever.
            total += tokens.max(1);
        }
        self.end_story(s);
        Ok(())
    }

    fn draft_step(&self, prompt: String, previous: &str, target: &str) -> Result<Drafted, RunError> {
        let run = &self.config.run;
        let prompt_tokens = self.backends.count_tokens(&prompt);
        if run.ablations.no_rerank {
            let params = GenParams::new(run.continuation_tokens, self.config.draft.temperature, 1);
            let text = self.backends.complete_one(&prompt, &params)?;
            return Ok(Drafted {
                prompt,
                prompt_tokens,
                candidates: vec![Candidate::new(0, text)],
                chosen: 0,
                degraded: false,
                best_lp: None,
            });
        }
        let outs = self
            .drafter()
            .generate_candidates(&prompt, run.continuation_tokens, 0)?;
        let candidates = outs
            .into_iter()
            .enumerate()
            .map(|(i, t)| Candidate::new(i, t))
            .collect();
        let ranked = rerank(
            &self.backends,
            &self.config.filters,
            &self.config.rerank,
            candidates,
            &prompt,
            previous,
            target,
        )?;
        let chosen = ranked.ranked[0];
        let best_lp = ranked.best().scores.as_ref().map(|sc| sc.composite);
        Ok(Drafted {
            prompt,
            prompt_tokens,
            chosen,
            degraded: ranked.degraded,
            best_lp,
            candidates: ranked.candidates,
        })
    }

    /// Edits, appends and registers the chosen candidate.
    fn accept(&self, s: &mut Session, d: Drafted, section_path: String) -> Result<(), RunError> {
        let index = s.passages.len();
        let mut text = d.candidates[d.chosen].text.trim().to_string();
        if d.degraded {
            s.fallbacks += 1;
        }
        let edit = if self.config.run.ablations.no_edit {
            None
        } else {
            let report = self.editor.detect(&text, index, &mut s.kb, DetectMode::Boolean);
            let mut corrections = Vec::new();
            for flag in &report.flags {
                let c = self.editor.correct(&text, flag);
                if c.resolved {
                    text = c.text.clone();
                } else {
                    s.unresolved += 1;
                }
                corrections.push(c);
            }
            Some(EditLog {
                flags: report.flags,
                corrections,
                updates: report.updates,
            })
        };
        let tokens = self.backends.count_tokens(&text);
        s.push_passage(text.clone(), section_path.clone(), tokens);
        let mut new_characters = Vec::new();
        // Without a plan the knowledge base is the only consumer of new
        // characters.
        if s.plan.is_some() || !self.config.run.ablations.no_edit {
            let added = self.drafter().new_characters(&text, index, s.characters())?;
            for c in added {
                new_characters.push(c.name.clone());
                if !self.config.run.ablations.no_edit {
                    s.kb.entry(c.name.clone()).or_default();
                }
                match &mut s.plan {
                    Some(p) => p.characters.push(c),
                    None => s.loose.push(c),
                }
            }
        }
        s.steps.push(StepLog {
            passage_index: index,
            section_path,
            prompt: d.prompt,
            prompt_tokens: d.prompt_tokens,
            candidates: d.candidates,
            chosen: d.chosen,
            degraded: d.degraded,
            edit,
            new_characters,
        });
        Ok(())
    }

    /// Rolling-style prompting with the reranking and editing stages.
    fn unplanned(&self, premise: &Premise, s: &mut Session) -> Result<(), RunError> {
        let mut total = 0;
        while total < self.config.run.rolling_total {
            let prompt = self.rolling_prompt(premise, &s.passages);
            let previous = s.passages.last().map_or(premise.to_string(), |p| p.text.clone());
            let d = self.draft_step(prompt, &previous, premise.as_str())?;
            self.accept(s, d, String::new())?;
            total += s.passages.last().map_or(0, |p| p.token_count).max(1);
        }
        self.end_story(s);
        Ok(())
    }

    pub fn make_plan(&self, premise: &Premise) -> Result<Plan, RunError> {
        let planner = Planner {
            backends: &self.backends,
            templates: &self.templates,
            cfg: &self.config.plan,
        };
        Ok(planner.generate_plan(
            premise.clone(),
            self.config.run.outline_points,
            self.config.run.outline_depth,
        )?)
    }

    fn planned(&self, premise: &Premise, s: &mut Session) -> Result<(), RunError> {
        let run = &self.config.run;
        let plan = self.make_plan(premise)?;
        if !run.ablations.no_edit {
            s.kb = self.editor.seed_kb(&plan);
        }
        s.plan = Some(plan);
        let leaves = flatten_outline(s.plan.as_ref().expect("plan set above"));
        'leaves: for (li, leaf) in leaves.iter().enumerate() {
            let mut in_leaf = 0;
            let mut prev_lp: Option<f64> = None;
            loop {
                let done = if run.adaptive {
                    in_leaf >= run.max_passages_per_leaf
                } else {
                    in_leaf >= run.passages_per_leaf
                };
                if done {
                    break;
                }
                if run.adaptive && s.passages.len() >= run.max_passages {
                    break 'leaves;
                }
                let plan = s.plan.as_ref().expect("plan set above");
                let spec = self.drafter().compose_prompt(plan, &s.passages, li, run.budget())?;
                let previous = s.passages.last().map_or(premise.to_string(), |p| p.text.clone());
                let d = self.draft_step(spec.render(), &previous, &leaf.text)?;
                if run.adaptive {
                    let lp = d.best_lp.unwrap_or(f64::NEG_INFINITY);
                    let advance = in_leaf >= run.min_passages_per_leaf
                        && prev_lp.is_some_and(|p| outline_alignment_step(p, lp, run.alignment_threshold));
                    s.alignment.push(AlignmentDecision {
                        leaf: leaf.label.clone(),
                        best_lp: lp,
                        advanced: advance,
                    });
                    if advance {
                        break;
                    }
                    prev_lp = Some(lp);
                }
                self.accept(s, d, leaf.label.clone())?;
                in_leaf += 1;
            }
        }
        self.end_story(s);
        Ok(())
    }

    /// Bridges the story to a closing "The End." with the insert backend;
    /// on failure the closing line is appended bare.
    fn end_story(&self, s: &mut Session) {
        let story = story_text(&s.passages, PassageWindow::All);
        let run = &self.config.run;
        let room = run
            .max_context
            .saturating_sub(run.continuation_tokens + self.backends.count_tokens(ENDING));
        let prefix = self.backends.truncate_left(&story, room);
        let params = GenParams::new(run.continuation_tokens, self.config.draft.temperature, 1);
        let bridge = if prefix.trim().is_empty() {
            Err(BackendError::Precondition("nothing to end".into()))
        } else {
            self.backends.insert(&prefix, ENDING, &params)
        };
        match bridge {
            Ok(b) if !b.trim().is_empty() => {
                s.final_text = format!("{} {} {ENDING}", story.trim_end(), b.trim());
                s.ending = Some(b);
            }
            other => {
                if let Err(e) = other {
                    log::warn!("ending insert failed: {e}");
                }
                s.fallbacks += 1;
                s.final_text = if story.trim().is_empty() {
                    ENDING.to_string()
                } else {
                    format!("{}\n\n{ENDING}", story.trim_end())
                };
            }
        }
    }
}
