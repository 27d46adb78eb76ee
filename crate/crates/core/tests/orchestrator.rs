use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use storyweave::backends::{BackendError, BackendResult, GenParams, LanguageModel};
use storyweave::config::Config;
use storyweave::orchestrator::{outline_alignment_step, Mode, RunStatus, ENDING};

mod common;

use common::runs::*;

#[test]
fn default_run_shape() {
    let t = Instant::now();
    let a = default_run(0);
    let elapsed = t.elapsed();
    assert_eq!(a.status, RunStatus::Complete, "{:?}", a.error);
    assert_eq!(a.passages.len(), 12);
    assert!(a.passages.iter().all(|p| p.token_count <= 256 && p.token_count > 0));
    assert!(a.final_text.ends_with(ENDING));
    assert!(a.ending.is_some());
    let labels: Vec<&str> = a.passages.iter().map(|p| p.section_path.as_str()).collect();
    assert_eq!(labels, ["1", "1", "1", "1", "2", "2", "2", "2", "3", "3", "3", "3"]);
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");
}

#[test]
fn runs_are_byte_identical() {
    for seed in [0, 5] {
        let a = serde_json::to_string(&default_run(seed)).unwrap();
        let b = serde_json::to_string(&default_run(seed)).unwrap();
        assert_eq!(a, b);
    }
    assert_ne!(default_run(0).final_text, default_run(1).final_text);
}

#[test]
fn draft_prompts_fit_budget() {
    for seed in 0..4 {
        let a = default_run(seed);
        for s in &a.steps {
            assert!(
                s.prompt_tokens <= 1024 - 256,
                "seed {seed} step {}: {}",
                s.passage_index,
                s.prompt_tokens
            );
        }
    }
}

#[test]
fn rolling_prompts_fit_budget() {
    let mut c = Config::default();
    c.run.mode = Mode::Rolling;
    let a = run(&c);
    assert_eq!(a.status, RunStatus::Complete, "{:?}", a.error);
    assert!(a.total_tokens() >= c.run.rolling_total);
    assert!(a.steps.len() > 1);
    assert!(a.steps.iter().all(|s| s.prompt_tokens <= 768));
    // The window is full once the story outgrows it.
    assert!(a.steps.iter().any(|s| s.prompt_tokens == 768));
    assert!(a.final_text.ends_with(ENDING));
}

#[test]
fn bare_ablation_equals_rolling() {
    for seed in [0, 3] {
        let mut rolling = Config::default();
        rolling.run.seed = seed;
        rolling.run.mode = Mode::Rolling;
        let mut bare = Config::default();
        bare.run.seed = seed;
        bare.run.ablations.no_plan = true;
        bare.run.ablations.no_rerank = true;
        bare.run.ablations.no_edit = true;
        let (r, b) = (run(&rolling), run(&bare));
        assert_eq!(r.steps.len(), b.steps.len());
        for (x, y) in r.steps.iter().zip(&b.steps) {
            assert_eq!(x.prompt, y.prompt);
            assert_eq!(x.candidates, y.candidates);
        }
        assert_eq!(r.passages, b.passages);
        assert_eq!(r.final_text, b.final_text);
    }
}

#[test]
fn ablations_change_the_run() {
    let mut c = Config::default();
    c.run.ablations.no_edit = true;
    let a = run(&c);
    assert!(a.kb.is_empty());
    assert!(a.steps.iter().all(|s| s.edit.is_none()));
    let mut c = Config::default();
    c.run.ablations.no_rerank = true;
    let a = run(&c);
    assert!(a.steps.iter().all(|s| s.candidates.len() == 1));
    let mut c = Config::default();
    c.run.ablations.no_plan = true;
    let a = run(&c);
    assert!(a.plan.is_none());
    assert!(a.steps.iter().all(|s| s.candidates.len() == 10));
}

#[test]
fn alignment_rule() {
    assert!(outline_alignment_step(-1.0, -1.6, 0.5));
    assert!(!outline_alignment_step(-1.0, -1.2, 0.5));
    assert!(!outline_alignment_step(-1.0, -1.5, 0.5));
    assert!(!outline_alignment_step(-2.0, -1.0, 0.5));
}

#[test]
fn adaptive_pacing_follows_schedule() {
    let a = adaptive_run();
    assert_ne!(a.status, RunStatus::Aborted, "{:?}", a.error);
    let bad = adaptive_mismatches(&a);
    assert!(bad.is_empty(), "{bad:#?}");
    let per_leaf: Vec<usize> = ["1", "2", "3"]
        .iter()
        .map(|l| a.passages.iter().filter(|p| p.section_path == *l).count())
        .collect();
    assert_eq!(per_leaf, [2, 4, 8]);
}

#[test]
fn adaptive_respects_passage_cap() {
    let mut c = Config::default();
    c.run.adaptive = true;
    c.run.max_passages = 5;
    c.run.ablations.no_edit = true;
    c.draft.num_candidates = 2;
    let a = run(&c);
    assert!(a.passages.len() <= 5);
}

#[test]
fn invalid_config_aborts() {
    let mut c = Config::default();
    c.run.adaptive = true;
    c.run.ablations.no_rerank = true;
    let a = run(&c);
    assert_eq!(a.status, RunStatus::Aborted);
    assert!(a.error.is_some());
    assert!(a.passages.is_empty());
}

struct NoInsert(Arc<dyn LanguageModel>);

impl LanguageModel for NoInsert {
    fn context_limit(&self) -> usize {
        self.0.context_limit()
    }
    fn complete(&self, prompt: &str, params: &GenParams) -> BackendResult<Vec<String>> {
        self.0.complete(prompt, params)
    }
    fn insert(&self, _: &str, _: &str, _: &GenParams) -> BackendResult<String> {
        Err(BackendError::Transport("insert unavailable".into()))
    }
    fn edit(&self, text: &str, instruction: &str) -> BackendResult<String> {
        self.0.edit(text, instruction)
    }
}

#[test]
fn failed_ending_appends_bare_line() {
    let c = Config::default();
    let mut b = c.build_backends().unwrap();
    b.lm = Arc::new(NoInsert(b.lm.clone()));
    let a = run_with(&c, b);
    assert_eq!(a.status, RunStatus::Degraded);
    assert!(a.fallbacks >= 1);
    assert!(a.ending.is_none());
    assert!(a.final_text.ends_with(&format!("\n\n{ENDING}")));
    assert_eq!(a.passages.len(), 12);
}

struct Counting {
    inner: Arc<dyn LanguageModel>,
    calls: AtomicUsize,
}

impl LanguageModel for Counting {
    fn context_limit(&self) -> usize {
        self.inner.context_limit()
    }
    fn complete(&self, prompt: &str, params: &GenParams) -> BackendResult<Vec<String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt, params)
    }
    fn insert(&self, prefix: &str, suffix: &str, params: &GenParams) -> BackendResult<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.insert(prefix, suffix, params)
    }
    fn edit(&self, text: &str, instruction: &str) -> BackendResult<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.edit(text, instruction)
    }
}

#[test]
fn prompt_dump_has_one_record_per_call() {
    let mut c = Config::default();
    c.run.dump_prompts = true;
    let mut b = c.build_backends().unwrap();
    let counter = Arc::new(Counting {
        inner: b.lm.clone(),
        calls: AtomicUsize::new(0),
    });
    b.lm = counter.clone();
    let a = run_with(&c, b);
    assert_eq!(a.prompts.len(), counter.calls.load(Ordering::SeqCst));
    assert!(a.prompts.iter().any(|p| p.kind == "insert"));
    // Recording does not change the story.
    let mut plain = c.clone();
    plain.run.dump_prompts = false;
    assert_eq!(run(&plain).final_text, a.final_text);
    let again = run(&c);
    assert_eq!(
        serde_json::to_string(&again.prompts).unwrap(),
        serde_json::to_string(&a.prompts).unwrap()
    );
}

#[test]
fn hierarchical_run_uses_sub_points() {
    let mut c = Config::default();
    c.run.outline_depth = 2;
    c.run.passages_per_leaf = 1;
    let a = run(&c);
    assert_eq!(a.status, RunStatus::Complete, "{:?}", a.error);
    let plan = a.plan.as_ref().unwrap();
    assert_eq!(plan.outline_depth(), 2);
    assert!(a.passages.len() >= 6);
    assert!(a.passages.iter().all(|p| p.section_path.contains('.')));
}

#[test]
fn artifact_json_round_trips() {
    let a = default_run(2);
    let s = serde_json::to_string(&a).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["status"], "complete");
}
