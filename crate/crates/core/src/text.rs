//! Small text utilities shared across the pipeline: sentence splitting,
//! word normalization, name matching and the rule-based attribute sentence
//! forms used by the knowledge base.

/// Splits text into sentences.
///
/// Terminators are `.`, `!` and `?`. A terminator inside a quoted span does
/// not end the sentence unless the quote closes right after it and the next
/// word starts with an uppercase letter. Line breaks always end a sentence
/// and reset the quote state.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        split_line(line, &mut out);
    }
    out
}

fn split_line(line: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = line.chars().collect();
    let mut start = 0usize;
    let mut quote: Option<char> = None;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        match quote {
            Some(open) => {
                if is_closer(open, c) {
                    quote = None;
                    if i > 0 && is_terminator(chars[i - 1]) && next_word_is_capitalized(&chars, i + 1) {
                        push_sentence(&chars[start..=i], out);
                        start = i + 1;
                    }
                }
            }
            None => {
                if is_opener(c) {
                    quote = Some(c);
                } else if is_terminator(c) {
                    let mut end = i;
                    while end + 1 < chars.len() && is_terminator(chars[end + 1]) {
                        end += 1;
                    }
                    if end + 1 == chars.len() || chars[end + 1].is_whitespace() {
                        push_sentence(&chars[start..=end], out);
                        start = end + 1;
                    }
                    i = end;
                }
            }
        }
        i += 1;
    }
    if start < chars.len() {
        push_sentence(&chars[start..], out);
    }
}

fn push_sentence(chars: &[char], out: &mut Vec<String>) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

fn next_word_is_capitalized(chars: &[char], from: usize) -> bool {
    let mut j = from;
    if j >= chars.len() {
        return true;
    }
    if !chars[j].is_whitespace() {
        return false;
    }
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    j >= chars.len() || chars[j].is_uppercase() || is_opener(chars[j])
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

pub(crate) fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\u{201C}')
}

pub(crate) fn is_closer(open: char, c: char) -> bool {
    match open {
        '"' => c == '"',
        '\u{201C}' => c == '\u{201D}',
        _ => false,
    }
}

/// Lowercased words with surrounding punctuation removed. Empty tokens are
/// dropped.
pub fn normalized_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Canonical form for comparing short generated strings: lowercase,
/// collapsed whitespace, no trailing sentence punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['.', '!', '?', ',', ';'])
        .trim()
        .to_lowercase()
}

/// First `n` sentences of `text`, joined by single spaces.
pub fn first_sentences(text: &str, n: usize) -> String {
    split_sentences(text).into_iter().take(n).collect::<Vec<_>>().join(" ")
}

/// Whether a detected surface name refers to the known full name: every
/// word of the shorter one appears (case-insensitively) in the longer.
pub fn names_match(a: &str, b: &str) -> bool {
    let wa: Vec<String> = a.split_whitespace().map(|w| w.to_lowercase()).collect();
    let wb: Vec<String> = b.split_whitespace().map(|w| w.to_lowercase()).collect();
    if wa.is_empty() || wb.is_empty() {
        return false;
    }
    let (short, long) = if wa.len() <= wb.len() { (&wa, &wb) } else { (&wb, &wa) };
    short.iter().all(|w| long.contains(w))
}

/// Finds the known name a surface mention refers to, if any.
pub fn resolve_name<'a, I>(mention: &str, known: I) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut partial = None;
    for name in known {
        if name.eq_ignore_ascii_case(mention) {
            return Some(name);
        }
        if partial.is_none() && names_match(mention, name) {
            partial = Some(name);
        }
    }
    partial
}

/// Whether `text` mentions the character, by full name or by any single
/// word of the name, on word boundaries.
pub fn mentions(text: &str, name: &str) -> bool {
    let words: Vec<&str> = text
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .collect();
    name.split_whitespace().any(|part| words.contains(&part))
}

/// A parsed attribute statement such as `Lucy's age is fourteen` or
/// `Lucy is Karen's friend`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeStatement {
    pub subject: String,
    pub key: String,
    pub value: String,
}

/// Renders an attribute as a simple sentence. Possessive keys (naming
/// another character) use the `X is Y's value` form.
pub fn render_attribute(subject: &str, key: &str, value: &str) -> String {
    if is_possessive_key(key) {
        format!("{subject} is {key} {value}.")
    } else {
        format!("{subject}'s {key} is {value}.")
    }
}

pub fn is_possessive_key(key: &str) -> bool {
    key.ends_with("'s") && key.len() > 2
}

/// Owner name of a possessive key (`Karen's` -> `Karen`).
pub fn possessive_owner(key: &str) -> Option<&str> {
    if is_possessive_key(key) {
        Some(&key[..key.len() - 2])
    } else {
        None
    }
}

/// Parses one line as an attribute statement about `subject`.
///
/// Accepted forms:
/// - `{subject}'s {key} is {value}`
/// - `{subject} is {Name}'s {value}` where `{Name}` is one or more
///   capitalized words
///
/// Anything else is rejected. A trailing period is ignored, and `was` is
/// accepted in place of `is`.
pub fn parse_attribute_line(line: &str, subject: &str) -> Option<AttributeStatement> {
    let line = line.trim().trim_end_matches('.').trim();
    let rest = line.strip_prefix(subject)?;
    if let Some(after) = rest.strip_prefix("'s ") {
        let (key, value) = split_copula(after)?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() || key.contains('\n') {
            return None;
        }
        return Some(AttributeStatement {
            subject: subject.to_string(),
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    let after = rest.strip_prefix(" is ").or_else(|| rest.strip_prefix(" was "))?;
    let idx = after.find("'s ")?;
    let owner = &after[..idx];
    if owner.is_empty()
        || !owner
            .split_whitespace()
            .all(|w| w.chars().next().is_some_and(|c| c.is_uppercase()))
    {
        return None;
    }
    let value = after[idx + 3..].trim();
    if value.is_empty() {
        return None;
    }
    Some(AttributeStatement {
        subject: subject.to_string(),
        key: format!("{owner}'s"),
        value: value.to_string(),
    })
}

fn split_copula(s: &str) -> Option<(&str, &str)> {
    for cop in [" is ", " was "] {
        if let Some(i) = s.find(cop) {
            return Some((&s[..i], &s[i + cop.len()..]));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_respect_quotes() {
        let s = split_sentences("\"I am here. Really,\" she said. She left.");
        assert_eq!(s, vec!["\"I am here. Really,\" she said.", "She left."]);
    }

    #[test]
    fn closing_quote_can_end_sentence() {
        let s = split_sentences("He said, \"Go home.\" Then he left. \"Stop!\" she cried.");
        assert_eq!(
            s,
            vec!["He said, \"Go home.\"", "Then he left.", "\"Stop!\" she cried."]
        );
    }

    #[test]
    fn lines_split_sentences() {
        let s = split_sentences("One\nTwo three.\n\nFour");
        assert_eq!(s, vec!["One", "Two three.", "Four"]);
    }

    #[test]
    fn ellipsis_and_abbrev_like_runs() {
        let s = split_sentences("Wait... what?! Fine.");
        assert_eq!(s, vec!["Wait...", "what?!", "Fine."]);
    }

    #[test]
    fn name_matching() {
        assert!(names_match("Karen", "Karen Zellerion"));
        assert!(names_match("karen zellerion", "Karen Zellerion"));
        assert!(!names_match("Kar", "Karen Zellerion"));
        assert_eq!(
            resolve_name("Karen", ["Luke Zellerion", "Karen Zellerion"]),
            Some("Karen Zellerion")
        );
        assert!(mentions("They met Karen at noon.", "Karen Zellerion"));
        assert!(!mentions("They met Karenina at noon.", "Karen Zellerion"));
    }

    #[test]
    fn attribute_lines() {
        let a = parse_attribute_line("Lucy is Karen's friend", "Lucy").unwrap();
        assert_eq!((a.key.as_str(), a.value.as_str()), ("Karen's", "friend"));
        let b = parse_attribute_line("Nora Johnson's friend's name is Selma Vincenti", "Nora Johnson").unwrap();
        assert_eq!(b.key, "friend's name");
        assert_eq!(b.value, "Selma Vincenti");
        assert!(parse_attribute_line("Lucy is a good friend of Karen", "Lucy").is_none());
        assert!(parse_attribute_line("Karen is Lucy's friend", "Lucy").is_none());
        let c = parse_attribute_line("Beth Christensen is Julie Christensen's mother.", "Beth Christensen").unwrap();
        assert_eq!(c.key, "Julie Christensen's");
    }

    #[test]
    fn render_forms() {
        assert_eq!(
            render_attribute("Karen", "gender", "female"),
            "Karen's gender is female."
        );
        assert_eq!(render_attribute("Lucy", "Karen's", "friend"), "Lucy is Karen's friend.");
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Lucy is  an older woman. "), "lucy is an older woman");
        assert_eq!(
            normalized_words("The old-man, by \"the\" sea."),
            vec!["the", "old-man", "by", "the", "sea"]
        );
    }
}
