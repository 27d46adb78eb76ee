use std::sync::Arc;

use crate::backends::{BackendResult, DetectedEntity, EntityRecognizer};

use super::Fixtures;

/// Capitalized words that never start a name on their own.
const FUNCTION_WORDS: &[&str] = &[
    "The",
    "A",
    "An",
    "In",
    "On",
    "At",
    "As",
    "When",
    "Then",
    "After",
    "Before",
    "But",
    "And",
    "So",
    "If",
    "While",
    "Once",
    "Now",
    "Later",
    "Finally",
    "Meanwhile",
    "Suddenly",
    "Soon",
    "With",
    "Without",
    "Outside",
    "Inside",
    "Even",
    "Still",
    "Yet",
    "For",
    "From",
    "To",
    "By",
    "Of",
    "Every",
    "Each",
    "That",
    "This",
    "There",
    "Here",
    "It",
    "They",
    "He",
    "She",
    "We",
    "You",
    "His",
    "Her",
    "Their",
    "Our",
    "My",
    "Your",
    "Its",
    "I",
    "I'm",
    "I'd",
    "I'll",
    "I've",
    "Yes",
    "No",
    "Oh",
    "OK",
    "Okay",
    "What",
    "Why",
    "How",
    "Who",
    "Where",
    "Chapter",
    "Full",
    "Events",
    "Previous",
    "Relevant",
    "Summary",
    "Question",
    "Outline",
    "Premise",
    "Setting",
    "Characters",
    "Context",
];

/// Names are maximal runs of capitalized words. A run starting a sentence
/// is kept only when it has at least two words, and a leading function word
/// ("The", "When", ...) is dropped from a run. Surfaces in the non-person
/// lexicon are reported with `is_person = false`.
#[derive(Debug, Clone)]
pub struct HeuristicNer {
    fixtures: Arc<Fixtures>,
}

impl HeuristicNer {
    pub fn new(fixtures: Arc<Fixtures>) -> Self {
        Self { fixtures }
    }

    pub fn extract(&self, text: &str) -> Vec<DetectedEntity> {
        capitalized_runs(text)
            .into_iter()
            .map(|surface| DetectedEntity {
                is_person: !self.fixtures.is_non_person(&surface),
                surface,
            })
            .collect()
    }
}

impl EntityRecognizer for HeuristicNer {
    fn detect_entities(&self, text: &str) -> BackendResult<Vec<DetectedEntity>> {
        Ok(self.extract(text))
    }
}

/// Distinct candidate name surfaces in order of first appearance.
pub(crate) fn capitalized_runs(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let mut run: Vec<String> = Vec::new();
        let mut run_initial = false;
        let mut at_sentence_start = true;
        for raw in line.split_whitespace() {
            let leading = raw.trim_start_matches(['"', '\u{201C}', '(', '\'', '\u{2018}']);
            let core_end = leading
                .find(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
                .unwrap_or(leading.len());
            let mut core = &leading[..core_end];
            let mut breaks_after = core_end < leading.len();
            if let Some(stripped) = core.strip_suffix("'s") {
                core = stripped;
                breaks_after = true;
            }
            let ends_sentence = raw
                .trim_end_matches(['"', '\u{201D}', ')', '\'', '\u{2019}'])
                .ends_with(['.', '!', '?']);
            let capitalized = core.chars().next().is_some_and(char::is_uppercase)
                && core.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\'');
            if capitalized {
                if run.is_empty() {
                    run_initial = at_sentence_start;
                }
                run.push(core.to_string());
            }
            if !capitalized || breaks_after {
                flush(&mut run, run_initial, &mut out);
            }
            at_sentence_start = ends_sentence;
        }
        flush(&mut run, run_initial, &mut out);
    }
    out
}

fn flush(run: &mut Vec<String>, initial: bool, out: &mut Vec<String>) {
    if run.is_empty() {
        return;
    }
    let mut words: &[String] = run;
    let mut initial = initial;
    while let Some(first) = words.first() {
        if FUNCTION_WORDS.contains(&first.as_str()) {
            words = &words[1..];
            initial = false;
        } else {
            break;
        }
    }
    if !words.is_empty() && !(initial && words.len() < 2) {
        let surface = words.join(" ");
        if !out.contains(&surface) {
            out.push(surface);
        }
    }
    run.clear();
}
