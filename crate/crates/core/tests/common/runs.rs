use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use storyweave::backends::mock::FnScorer;
use storyweave::backends::Backends;
use storyweave::config::Config;
use storyweave::model::Premise;
use storyweave::orchestrator::{Runner, StoryArtifact};

pub const PREMISE: &str =
    "After her mother vanishes at sea, a young lighthouse keeper uncovers a smuggling ring in her village.";

pub fn premise() -> Premise {
    Premise::new(PREMISE).unwrap()
}

pub fn run_with(config: &Config, backends: Backends) -> StoryArtifact {
    let r = Runner::new(
        config.clone(),
        backends,
        config.templates().unwrap(),
        config.example_bank().unwrap(),
    );
    r.run(&premise())
}

pub fn run(config: &Config) -> StoryArtifact {
    run_with(config, config.build_backends().unwrap())
}

pub fn default_run(seed: u64) -> StoryArtifact {
    let mut c = Config::default();
    c.run.seed = seed;
    run(&c)
}

/// Best-candidate log-probabilities in call order, and for each the
/// decision the pacing rule must take (threshold 1, minimum 1 per leaf).
/// The last leaf never drops and so fills up to the per-leaf maximum.
pub const SCHEDULE: &[(f64, bool)] = &[
    (-1.0, false),
    (-1.5, false),
    (-2.6, true),
    (-5.0, false),
    (-5.9, false),
    (-4.0, false),
    (-4.99, false),
    (-6.0, true),
    (-1.0, false),
    (-1.9, false),
    (-1.0, false),
    (-1.0, false),
    (-1.5, false),
    (-2.4, false),
    (-2.0, false),
    (-2.5, false),
];

/// Runs adaptive pacing over a 3-point outline with one candidate per
/// step, whose coherence follows `SCHEDULE` (relevance is fixed at 1).
pub fn adaptive_run() -> StoryArtifact {
    let mut c = Config::default();
    c.run.adaptive = true;
    c.run.alignment_threshold = 1.0;
    c.run.min_passages_per_leaf = 1;
    c.run.max_passages_per_leaf = 8;
    c.run.ablations.no_edit = true;
    c.draft.num_candidates = 1;
    let mut b = c.build_backends().unwrap();
    let calls = Arc::new(AtomicUsize::new(0));
    b.scorer = Arc::new(FnScorer::new(
        move |_, _| {
            let i = calls.fetch_add(1, Ordering::SeqCst);
            SCHEDULE.get(i).map_or(0.5, |(lp, _)| lp.exp())
        },
        |_, _| 1.0,
    ));
    run_with(&c, b)
}

/// Mismatches between the recorded pacing decisions and `SCHEDULE`.
pub fn adaptive_mismatches(a: &StoryArtifact) -> Vec<String> {
    let mut out = Vec::new();
    if a.alignment.len() != SCHEDULE.len() {
        out.push(format!("{} decisions, expected {}", a.alignment.len(), SCHEDULE.len()));
    }
    for (i, (d, (lp, want))) in a.alignment.iter().zip(SCHEDULE).enumerate() {
        if (d.best_lp - lp).abs() > 1e-9 || d.advanced != *want {
            out.push(format!(
                "step {i}: lp {} advanced {} (want {lp} {want})",
                d.best_lp, d.advanced
            ));
        }
    }
    let accepted = SCHEDULE.iter().filter(|(_, adv)| !adv).count();
    if a.passages.len() != accepted {
        out.push(format!("{} passages, expected {accepted}", a.passages.len()));
    }
    out
}
