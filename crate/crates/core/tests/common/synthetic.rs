use std::sync::Arc;

use storyweave::backends::mock::{mock_backends, ConstantEntailment, NoisyEntailment};
use storyweave::backends::Backends;
use storyweave::edit::{EditConfig, Editor, ExampleBank};
use storyweave::eval::{evaluate, synthetic_tuples, EvalReport, Method};
use storyweave::templates::Templates;

pub const TUPLES: usize = 20;

pub fn report(backends: Backends, seed: u64) -> EvalReport {
    let editor = Editor::new(
        backends.clone(),
        Templates::default(),
        EditConfig::default(),
        ExampleBank::builtin(),
    );
    evaluate(&synthetic_tuples(TUPLES, seed), &Method::ALL, &backends, &editor)
}

pub fn oracle(seed: u64) -> EvalReport {
    report(mock_backends(seed), seed)
}

pub fn uninformative(seed: u64) -> EvalReport {
    let mut b = mock_backends(seed);
    b.nli = Arc::new(ConstantEntailment::default());
    report(b, seed)
}

/// Noise model for the ordering check.
#[derive(Debug, Clone, Copy)]
pub enum Noise {
    Uniform { amplitude: f64 },
    LengthScaled { amplitude: f64, reference_words: usize },
}

pub fn noisy(seed: u64, noise: Noise) -> EvalReport {
    let mut b = mock_backends(seed);
    let inner = b.nli.clone();
    b.nli = Arc::new(match noise {
        Noise::Uniform { amplitude } => NoisyEntailment::uniform(inner, seed, amplitude),
        Noise::LengthScaled {
            amplitude,
            reference_words,
        } => NoisyEntailment::length_scaled(inner, seed, amplitude, reference_words),
    });
    report(b, seed)
}

/// Structured >= Entailment-DPR >= Entailment.
pub fn ordering_holds(r: &EvalReport) -> bool {
    let get = |m| r.auc(m).unwrap_or(f64::NAN);
    get(Method::Structured) >= get(Method::EntailmentDpr) && get(Method::EntailmentDpr) >= get(Method::Entailment)
}

/// Seeds 0..n on which the ordering holds.
pub fn ordering_count(seeds: u64, noise: Noise) -> usize {
    (0..seeds).filter(|&s| ordering_holds(&noisy(s, noise))).count()
}
