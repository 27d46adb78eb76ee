use storyweave::rewrite::{heuristic_filter, FilterConfig, FilterFailure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    Pass,
    Empty,
    Ngram,
    PromptNgram,
    Similar,
    Hard,
    Soft,
    Colon,
    Person,
}

pub struct Case {
    pub name: &'static str,
    pub candidate: &'static str,
    pub prompt: &'static str,
    pub ratio: Option<f64>,
    pub want: Want,
}

const fn case(name: &'static str, candidate: &'static str, want: Want) -> Case {
    Case {
        name,
        candidate,
        prompt: "",
        ratio: None,
        want,
    }
}

// Ten words; B differs from A at positions 3 and 7, so no 5-gram is shared.
pub const A10: &str = "The tall sailor carried ropes across the wet dock slowly.";
pub const B10: &str = "The tall sailor dragged ropes across the old dock slowly.";

pub fn cases() -> Vec<Case> {
    use Want::*;
    vec![
        case("empty", "", Empty),
        case("whitespace only", "  \n\t ", Empty),
        case("plain narration", "Mara climbed the stairs. The lamp flickered twice.", Pass),
        case(
            "5-gram repeated within candidate",
            "He walked to the old mill. Later he walked to the old mill again.",
            Ngram,
        ),
        case(
            "5-gram repeat ignores case and punctuation",
            "Over the green hill, quickly! Then over the Green Hill quickly we",
            Ngram,
        ),
        case(
            "4-gram repeat allowed",
            "She ran to the gate. Then she ran to the river bank at dusk.",
            Pass,
        ),
        Case {
            name: "5-gram copied from prompt",
            candidate: "Rain fell as the boat left the harbor at dawn.",
            prompt: "Earlier, the boat left the harbor at dawn with cargo.",
            ratio: None,
            want: PromptNgram,
        },
        Case {
            name: "4-gram shared with prompt allowed",
            candidate: "Rain fell as the boat left the harbor.",
            prompt: "Earlier, the boat left port.",
            ratio: None,
            want: Pass,
        },
        case("identical sentences", "Tom slept. Tom slept.", Similar),
        Case {
            name: "ratio exactly at 0.2 fails",
            candidate: "The tall sailor carried ropes across the wet dock slowly. The tall sailor dragged ropes across the old dock slowly.",
            prompt: "",
            ratio: None,
            want: Similar,
        },
        Case {
            name: "threshold 0.2 - eps passes distance 2 of 10",
            candidate: "The tall sailor carried ropes across the wet dock slowly. The tall sailor dragged ropes across the old dock slowly.",
            prompt: "",
            ratio: Some(0.2 - 1e-9),
            want: Pass,
        },
        Case {
            name: "threshold 0.2 + eps fails distance 2 of 10",
            candidate: "The tall sailor carried ropes across the wet dock slowly. The tall sailor dragged ropes across the old dock slowly.",
            prompt: "",
            ratio: Some(0.2 + 1e-9),
            want: Similar,
        },
        case(
            "distance 3 of 10 passes",
            "The tall sailor carried ropes across the wet dock slowly. The tall sailor dragged ropes along the old dock slowly.",
            Pass,
        ),
        case(
            "distance 2 of 9 passes",
            "The tall sailor carried ropes across wet dock slowly. The tall sailor dragged ropes across old dock slowly.",
            Pass,
        ),
        case(
            "distance 2 of 11 fails",
            "The tall sailor carried ropes across the wet dock very slowly. The tall sailor dragged ropes across the old dock very slowly.",
            Similar,
        ),
        case(
            "near duplicates need not be adjacent",
            "The tall sailor carried ropes across the wet dock slowly. Gulls screamed. The tall sailor dragged ropes across the old dock slowly.",
            Similar,
        ),
        case("hard banned string", "Visit www.example.org for more.", Hard),
        case("hard banned is case-insensitive", "COPYRIGHT belongs to nobody.", Hard),
        case("hard banned comment marker", "She left.\nComments are closed.", Hard),
        case("one soft banned string passes", "She read the summary aloud.", Pass),
        case("two soft banned strings fail", "Chapter two began. Epilogue aside, she waited.", Soft),
        case("soft strings are case-insensitive", "CHAPTER nine had a PROLOGUE.", Soft),
        case(
            "repeat soft string counts once",
            "Chapter one ended at noon. A new chapter started later.",
            Pass,
        ),
        case("colon heading first paragraph", "Chapter Four: The Storm\n\nRain fell.", Colon),
        case("colon heading later paragraph", "Rain fell hard.\n\nPart two: calm seas arrived.", Colon),
        case(
            "colon past the head window passes",
            "The old keeper finally said one thing: go.",
            Pass,
        ),
        case("colon inside head window fails", "Then she said: go now.", Colon),
        case("first person outside quotes", "I opened the door.", Person),
        case("plural first person", "Then we left the town.", Person),
        case("second person", "The wind followed you home.", Person),
        case("contraction counts", "Later I'm sure it rained.", Person),
        case("first person inside quotes", "\"I will go,\" Ana said.", Pass),
        case("second person inside curly quotes", "\u{201C}You came back,\u{201D} he said.", Pass),
        case("unclosed quote runs to end", "Ana said, \"I will go and you will stay.", Pass),
        case("person after closed quote", "\"Wait,\" Ana said, and you listened.", Person),
        case("lowercase i is not a pronoun", "The letter i was smudged.", Pass),
        case("pronoun inside word is ignored", "Iowa was yours, Weston said.", Pass),
    ]
}

pub fn classify(c: &Case) -> Want {
    let mut cfg = FilterConfig::default();
    if let Some(r) = c.ratio {
        cfg.sentence_similarity_ratio = r;
    }
    match heuristic_filter(c.candidate, c.prompt, &cfg) {
        Ok(()) => Want::Pass,
        Err(FilterFailure::Empty) => Want::Empty,
        Err(FilterFailure::RepeatedNgram { .. }) => Want::Ngram,
        Err(FilterFailure::RepeatsPrompt { .. }) => Want::PromptNgram,
        Err(FilterFailure::SimilarSentences { .. }) => Want::Similar,
        Err(FilterFailure::HardBanned { .. }) => Want::Hard,
        Err(FilterFailure::SoftBanned { .. }) => Want::Soft,
        Err(FilterFailure::ColonHeading { .. }) => Want::Colon,
        Err(FilterFailure::Person { .. }) => Want::Person,
    }
}

/// Reference for the person rule: split into word tokens, then decide for
/// each token separately whether an unclosed quote precedes it.
pub fn person_oracle(s: &str) -> bool {
    let chars: Vec<char> = s.chars().collect();
    let inside = |pos: usize| {
        let mut open: Option<char> = None;
        for &c in &chars[..pos] {
            open = match (open, c) {
                (None, '"') => Some('"'),
                (None, '\u{201C}') => Some('\u{201C}'),
                (Some('"'), '"') => None,
                (Some('\u{201C}'), '\u{201D}') => None,
                (o, _) => o,
            };
        }
        open.is_some()
    };
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut i = 0;
    while i < chars.len() {
        if !is_word(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && is_word(chars[i]) {
            i += 1;
        }
        let tok: String = chars[start..i].iter().collect();
        let hit = tok == "I" || tok.eq_ignore_ascii_case("we") || tok.eq_ignore_ascii_case("you");
        if hit && !inside(start) {
            return true;
        }
    }
    false
}

pub const VOCAB: &[&str] = &[
    "I", "i", "we", "We", "WE", "you", "You", "YOU", "your", "yours", "you're", "I'm", "we'll", "Iowa", "Weston",
    "bayou", "iris", "the", "boat", "Ana", "said", "ran", "slowly", ",", ".", "\"", "\u{201C}", "\u{201D}", "'",
];

/// Config with every rule but the person rule disabled.
pub fn person_only() -> FilterConfig {
    FilterConfig {
        min_repeat_ngram: 1000,
        sentence_similarity_ratio: -1.0,
        banned_strings_hard: vec![],
        banned_strings_soft: vec![],
        soft_threshold: 1000,
        colon_head_window: 0,
    }
}

pub fn person_flagged(s: &str) -> bool {
    matches!(
        heuristic_filter(s, "", &person_only()),
        Err(FilterFailure::Person { .. })
    )
}
