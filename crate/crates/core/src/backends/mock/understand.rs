//! The mock models' shared "reading comprehension": a handful of surface
//! patterns that turn simple sentences into attribute statements.

use crate::text::{self, AttributeStatement};

use super::Fixtures;

const FEMALE_NOUNS: &[&str] = &["woman", "girl", "lady", "mother", "daughter", "sister", "wife"];
const MALE_NOUNS: &[&str] = &["man", "boy", "gentleman", "father", "son", "brother", "husband"];

/// Leading capitalized words of a sentence that plausibly form its subject,
/// longest candidate first.
fn subject_candidates(sentence: &str) -> Vec<String> {
    let mut words = Vec::new();
    for w in sentence.split_whitespace().take(4) {
        let core = w.trim_matches(|c: char| matches!(c, '"' | ',' | '.'));
        let base = core.strip_suffix("'s").unwrap_or(core);
        if base.chars().next().is_some_and(char::is_uppercase) && base.chars().all(|c| c.is_alphabetic() || c == '-') {
            words.push(base.to_string());
            if base.len() != core.len() {
                break;
            }
        } else {
            break;
        }
    }
    (1..=words.len()).rev().map(|n| words[..n].join(" ")).collect()
}

/// Which surface of `subject` (full name or one of its words) the sentence
/// starts with.
fn matching_surface(sentence: &str, subject: &str) -> Option<String> {
    let s = sentence.trim_start_matches(['"', '\u{201C}']);
    let mut options: Vec<String> = vec![subject.to_string()];
    options.extend(subject.split_whitespace().map(str::to_string));
    options.into_iter().find(|o| {
        s.strip_prefix(o.as_str())
            .is_some_and(|rest| rest.starts_with(' ') || rest.starts_with("'s "))
    })
}

/// Interprets one sentence. With `subject` given, only statements about
/// that character are returned and they carry the full name; otherwise the
/// subject is read off the sentence.
pub(crate) fn interpret(sentence: &str, subject: Option<&str>, fx: &Fixtures) -> Vec<AttributeStatement> {
    let sentence = sentence
        .trim()
        .trim_start_matches(['"', '\u{201C}']);
    let (surface, full) = match subject {
        Some(s) => match matching_surface(sentence, s) {
            Some(surface) => (surface, s.to_string()),
            None => return Vec::new(),
        },
        None => {
            let Some(best) = subject_candidates(sentence).into_iter().find(|c| {
                text::parse_attribute_line(sentence, c).is_some()
                    || sentence[c.len()..].starts_with(" is ")
                    || sentence[c.len()..].starts_with(" was ")
                    || sentence[c.len()..].starts_with(" has ")
                    || sentence[c.len()..].starts_with(" had ")
            }) else {
                return Vec::new();
            };
            (best.clone(), best)
        }
    };
    let mut out = Vec::new();
    let mut push = |key: String, value: String| {
        let st = AttributeStatement {
            subject: full.clone(),
            key,
            value,
        };
        if !out.contains(&st) {
            out.push(st);
        }
    };

    if let Some(mut st) = text::parse_attribute_line(sentence, &surface) {
        st.value = st
            .value
            .trim_end_matches(['.', '!', ','])
            .to_string();
        // Values like "friend who recently got engaged" keep only the head.
        for stop in [" who ", ",", " and "] {
            if let Some(cut) = st.value.find(stop) {
                st.value.truncate(cut);
            }
        }
        push(st.key, st.value);
        return out;
    }

    let rest = sentence[surface.len()..].trim_start();
    let body = rest.strip_prefix("is ").or_else(|| rest.strip_prefix("was "));
    if let Some(body) = body {
        let body = body.trim_end_matches(['.', '!']);
        let words: Vec<&str> = body.split_whitespace().collect();
        // "a good friend of Karen's" / "the mother of Julie"
        if let Some(of) = words.iter().position(|w| *w == "of") {
            let rel_words: Vec<&str> = words[..of]
                .iter()
                .copied()
                .filter(|w| !matches!(*w, "a" | "an" | "the" | "good" | "close" | "old" | "dear"))
                .collect();
            let rel = rel_words.join(" ");
            let owner_words: Vec<&str> = words[of + 1..]
                .iter()
                .map(|w| w.trim_end_matches(','))
                .take_while(|w| w.chars().next().is_some_and(char::is_uppercase))
                .collect();
            if !owner_words.is_empty() && fx.is_relation(&rel) {
                let owner = owner_words.join(" ");
                let owner = owner.strip_suffix("'s").unwrap_or(&owner).to_string();
                push(format!("{owner}'s"), rel);
            }
        }
        for w in &words {
            let w = w
                .trim_matches(|c: char| !c.is_alphanumeric() && c != '-')
                .to_lowercase();
            if FEMALE_NOUNS.contains(&w.as_str()) {
                push("gender".into(), "female".into());
            } else if MALE_NOUNS.contains(&w.as_str()) {
                push("gender".into(), "male".into());
            }
            if let Some(age) = w.strip_suffix("-year-old") {
                push("age".into(), format!("{age} years"));
            }
        }
        if let Some(pos) = words.iter().position(|w| w.trim_end_matches(['.', ',']) == "old") {
            if pos >= 2 && words[pos - 1] == "years" {
                push("age".into(), format!("{} years", words[pos - 2]));
            }
        }
    }
    let lower = sentence.to_lowercase();
    if let Some(i) = lower.find(" hair") {
        let before: Vec<&str> = lower[..i].split_whitespace().collect();
        // "with [curly] brown hair": the verb may sit up to two words back.
        if let Some(color) = before.last() {
            let lead = before.len().saturating_sub(3);
            let verb = before[lead..before.len() - 1]
                .iter()
                .any(|w| matches!(*w, "with" | "has" | "had"));
            if verb {
                push("hair color".into(), color.trim_matches(',').to_string());
            }
        }
    }
    out
}

/// Interprets every sentence of a multi-sentence text.
pub(crate) fn interpret_text(textual: &str, subject: Option<&str>, fx: &Fixtures) -> Vec<AttributeStatement> {
    text::split_sentences(textual)
        .iter()
        .flat_map(|s| interpret(s, subject, fx))
        .collect()
}

pub(crate) fn keys_match(a: &str, b: &str) -> bool {
    match (text::possessive_owner(a), text::possessive_owner(b)) {
        (Some(x), Some(y)) => text::names_match(x, y),
        (None, None) => text::normalize(a) == text::normalize(b),
        _ => false,
    }
}
