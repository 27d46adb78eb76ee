//! Word banks and the sentence generator behind the mock model's story
//! passages, premises, settings, descriptions and outlines.
//!
//! Sentences are built from templates with a slot every two or three words
//! so that independently generated passages rarely share five-word runs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{stable_hash, Fixtures};
use crate::text;

pub(crate) const SYMMETRIC_RELATIONS: &[&str] = &["friend", "cousin", "neighbor", "rival", "colleague", "best friend"];

const PROTAGONISTS: &[(&str, &str)] = &[
    ("Lila Rosen", "a fourteen-year-old girl who tinkers with broken radios"),
    ("Oliver Jackson", "a retired lighthouse keeper"),
    ("Diane Chambers", "a young botanist"),
    ("Henry Grey", "a disgraced detective"),
    ("Sophie Jameson", "a violinist in a struggling orchestra"),
    ("Tommy Foster", "a twelve-year-old boy with a paper route"),
    ("Nora Johnson", "a night-shift nurse"),
    ("Samuel Ortiz", "a stonemason restoring an old chapel"),
    ("Grace Lindqvist", "a cartographer"),
    ("Felix Moreau", "a failed chef"),
];

const CONFLICTS: &[&str] = &[
    "finds a sealed letter addressed to {obj} that was written fifty years ago. {Subj} must discover who sent it before the sender's family destroys the evidence.",
    "inherits a crumbling house on an island that everyone in town refuses to visit. {Subj} must decide whether to sell it or uncover why it was abandoned.",
    "is accused of a theft {subj} did not commit. {Subj} has one week to find the real culprit before the trial begins.",
    "discovers that {pos} late mentor kept a hidden journal full of unfinished experiments. {Subj} must finish the last one before a rival claims the credit.",
    "agrees to guide a group of strangers through the mountains during the worst storm in decades. Not everyone in the group is who they claim to be.",
    "learns that {pos} estranged sister has returned to town under a false name. {Subj} must confront her before an old family secret comes out.",
    "wins a strange contest whose prize is a map with a single marked location. Following it leads {obj} into a long-buried feud between two families.",
    "is hired to care for an elderly stranger who insists they have met before. {Subj} slowly realizes the stranger remembers a life {subj} has forgotten.",
    "wakes to find that the river through town has run dry overnight. {Subj} must find out why before the harvest fails and the town turns on itself.",
    "receives an anonymous warning that someone close to {obj} is lying. {Subj} must work out who before the lie costs {obj} everything.",
];

const SETTINGS: &[&str] = &[
    " a small fishing town on a rocky northern coast, where fog rolls in most evenings. The harbor is the center of town life.",
    " a crowded river city in the early twentieth century. Trams rattle past the markets all day.",
    " a quiet farming valley surrounded by pine forests. Winters there are long and harsh.",
    " a sprawling old apartment building on the edge of a modern city. The elevator has not worked for years.",
    " a remote mountain village reachable only by a single winding road. News arrives slowly.",
    " a seaside resort town during the off season. Most of the hotels stand empty.",
    " an island community connected to the mainland by a ferry that runs twice a day. Everyone knows everyone.",
    " a dusty desert town built around an abandoned silver mine. The wind never stops.",
];

const AGES: &[&str] = &[
    "twelve",
    "fourteen",
    "sixteen",
    "nineteen",
    "twenty-three",
    "thirty",
    "thirty-five",
    "forty-two",
    "fifty",
    "sixty-one",
    "seventy",
];
const HAIR: &[&str] = &["brown", "black", "red", "blond", "gray", "auburn", "dark", "silver"];
const TRAITS: &[&str] = &[
    "stubborn",
    "curious",
    "gentle",
    "sharp-tongued",
    "patient",
    "restless",
    "loyal",
    "secretive",
    "cheerful",
    "anxious",
    "proud",
    "generous",
    "quiet",
    "reckless",
];

const MOVE: &[&str] = &[
    "walked", "hurried", "crept", "wandered", "marched", "drifted", "stumbled", "slipped", "strolled", "raced",
    "edged", "climbed",
];
const PREP_PLACE: &[&str] = &[
    "toward", "past", "along", "across", "around", "behind", "beside", "through", "beyond", "near",
];
const ADJ: &[&str] = &[
    "narrow",
    "crowded",
    "silent",
    "crooked",
    "damp",
    "sunlit",
    "forgotten",
    "windy",
    "dusty",
    "cluttered",
    "empty",
    "gloomy",
    "warm",
    "cold",
    "faded",
    "tiny",
    "broad",
    "shadowy",
    "muddy",
    "bright",
    "weathered",
    "brittle",
    "tangled",
    "hollow",
];
const PLACE: &[&str] = &[
    "harbor",
    "kitchen",
    "bridge",
    "market",
    "orchard",
    "station",
    "library",
    "garden",
    "hallway",
    "cellar",
    "porch",
    "meadow",
    "shed",
    "dock",
    "courtyard",
    "attic",
    "workshop",
    "alley",
    "square",
    "greenhouse",
    "boathouse",
    "chapel",
    "barn",
    "pier",
];
const PARTICIPLE: &[&str] = &[
    "clutching",
    "carrying",
    "hiding",
    "gripping",
    "balancing",
    "dragging",
    "holding",
    "tucking away",
    "turning over",
    "studying",
];
const OBJECT: &[&str] = &[
    "notebook",
    "lantern",
    "envelope",
    "umbrella",
    "photograph",
    "key",
    "basket",
    "coat",
    "compass",
    "scarf",
    "map",
    "ticket",
    "bottle",
    "ledger",
    "watch",
    "letter",
    "rope",
    "bag",
    "candle",
    "box",
];
const OBJ_ADJ: &[&str] = &[
    "worn", "heavy", "battered", "small", "precious", "borrowed", "soaked", "old", "creased", "polished", "rusty",
    "spare", "stolen", "chipped",
];
const NOUN: &[&str] = &[
    "wind", "rain", "clock", "radio", "dog", "kettle", "fire", "tide", "crowd", "gull", "bell", "engine", "door",
    "floor", "storm", "shutter", "stove", "cart", "gate", "crow",
];
const INTRANS: &[&str] = &[
    "howled",
    "ticked",
    "creaked",
    "rattled",
    "hissed",
    "groaned",
    "hummed",
    "whistled",
    "flickered",
    "thudded",
    "roared",
    "sighed",
    "clattered",
    "buzzed",
];
const ADVERB: &[&str] = &[
    "softly",
    "loudly",
    "slowly",
    "suddenly",
    "steadily",
    "faintly",
    "briefly",
    "endlessly",
    "nervously",
    "quietly",
    "sharply",
    "lazily",
    "wildly",
    "patiently",
];
const PERCEIVE: &[&str] = &[
    "watched",
    "studied",
    "eyed",
    "glanced at",
    "stared at",
    "considered",
    "noticed",
    "examined",
    "searched",
    "scanned",
];
const FEEL: &[&str] = &[
    "uneasy",
    "hopeful",
    "tired",
    "relieved",
    "restless",
    "guilty",
    "curious",
    "calm",
    "angry",
    "determined",
    "confused",
    "lonely",
    "grateful",
    "wary",
];
const TIME: &[&str] = &[
    "that morning",
    "before dawn",
    "by noon",
    "after supper",
    "at dusk",
    "late that night",
    "all afternoon",
    "the next day",
    "within the hour",
    "before long",
];
const SAID: &[&str] = &[
    "said",
    "whispered",
    "muttered",
    "called",
    "replied",
    "snapped",
    "admitted",
    "insisted",
    "murmured",
    "laughed",
];
const THINK: &[&str] = &["think", "believe", "suspect", "know", "hope", "doubt", "guess", "fear"];
const ACTION: &[&str] = &[
    "open", "check", "follow", "leave", "find", "fix", "burn", "hide", "read", "sell", "keep", "move",
];
const REMEMBER: &[&str] = &[
    "remembered",
    "recalled",
    "thought about",
    "pictured",
    "wondered about",
    "missed",
    "dreamed of",
    "worried about",
];
const MEMORY: &[&str] = &[
    "summers",
    "promises",
    "arguments",
    "letters",
    "winters",
    "stories",
    "journeys",
    "lessons",
    "secrets",
    "songs",
];

pub(crate) struct Cast {
    /// (first name, full name, female)
    pub people: Vec<(String, String, bool)>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, bank: &'a [&'a str]) -> &'a str {
    bank.choose(rng).copied().unwrap_or("")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub(crate) fn gender_of(fx: &Fixtures, full: &str) -> bool {
    match fx.person(full) {
        Some(p) => p.female,
        None => stable_hash(&[full.as_bytes()]).is_multiple_of(2),
    }
}

/// Symmetric relation the mock assigns to a pair, independent of order.
pub(crate) fn relation_between(seed: u64, a: &str, b: &str) -> &'static str {
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    let h = stable_hash(&[&seed.to_le_bytes(), x.as_bytes(), y.as_bytes()]);
    SYMMETRIC_RELATIONS[(h % SYMMETRIC_RELATIONS.len() as u64) as usize]
}

pub(crate) fn premise(index: usize, fx: &Fixtures) -> String {
    let (name, role) = PROTAGONISTS[(index / CONFLICTS.len()) % PROTAGONISTS.len()];
    let conflict = CONFLICTS[index % CONFLICTS.len()];
    let female = gender_of(fx, name);
    let (subj, obj, pos) = if female {
        ("she", "her", "her")
    } else {
        ("he", "him", "his")
    };
    let conflict = conflict
        .replace("{Subj}", &capitalize(subj))
        .replace("{subj}", subj)
        .replace("{obj}", obj)
        .replace("{pos}", pos);
    format!(" {name}, {role}, {conflict}")
}

pub(crate) const PREMISE_COUNT: usize = 100;

pub(crate) fn setting(h: u64) -> String {
    SETTINGS[(h % SETTINGS.len() as u64) as usize].to_string()
}

/// Description continuing "`{name} is`".
pub(crate) fn description(rng: &mut ChaCha8Rng, seed: u64, fx: &Fixtures, full: &str, others: &[String]) -> String {
    let female = gender_of(fx, full);
    let age = pick(rng, AGES);
    let young = matches!(age, "twelve" | "fourteen" | "sixteen");
    let noun = match (female, young) {
        (true, true) => "girl",
        (true, false) => "woman",
        (false, true) => "boy",
        (false, false) => "man",
    };
    let first = full.split_whitespace().next().unwrap_or(full);
    let subj = if female { "She" } else { "He" };
    let t1 = pick(rng, TRAITS);
    let mut t2 = pick(rng, TRAITS);
    if t2 == t1 {
        t2 = TRAITS[(TRAITS.iter().position(|t| *t == t1).unwrap_or(0) + 1) % TRAITS.len()];
    }
    let mut out = format!(
        " a {age}-year-old {noun} with {} hair. {subj} is {t1} and {t2}.",
        pick(rng, HAIR)
    );
    if let Some(other) = others.iter().find(|o| o.as_str() != full) {
        let other_first = other.split_whitespace().next().unwrap_or(other);
        out.push_str(&format!(
            " {first} is {other_first}'s {}.",
            relation_between(seed, full, other)
        ));
    }
    out
}

fn outline_point(rng: &mut ChaCha8Rng, stage: usize, a: &str, b: &str) -> String {
    let banks: [&[&str]; 3] = [
        &[
            "{A} discovers a hidden clue in the {place} that points to an old secret.",
            "{A} meets {B} and they agree to work together despite their doubts.",
            "{A} receives unsettling news and decides to investigate the {place}.",
            "{A} and {B} find a strange object buried near the {place}.",
        ],
        &[
            "{A} and {B} argue about whether to trust the stranger who keeps appearing.",
            "{A} follows the trail to the {place} and uncovers a painful truth about {B}.",
            "A storm traps {A} and {B} in the {place}, forcing them to face their past.",
            "{A} is betrayed by someone close and must decide whom to believe.",
        ],
        &[
            "{A} confronts the person behind the mystery and finally makes peace with {B}.",
            "{A} and {B} reveal the secret to the whole town and start over.",
            "{A} gives up what {A} wanted most in order to protect {B}.",
            "{A} returns to the {place} one last time and lets the past go.",
        ],
    ];
    let bank = banks[stage.min(2)];
    pick(rng, bank)
        .replace("{A}", a)
        .replace("{B}", b)
        .replace("{place}", pick(rng, PLACE))
}

/// Continuation of an outline prompt ending in "1.".
pub(crate) fn outline(rng: &mut ChaCha8Rng, cast: &Cast) -> String {
    let (a, b) = two_names(cast);
    let mut lines = Vec::new();
    for stage in 0..3 {
        let (x, y) = if stage == 1 {
            (b.as_str(), a.as_str())
        } else {
            (a.as_str(), b.as_str())
        };
        let point = outline_point(rng, stage, x, y);
        lines.push(if stage == 0 {
            format!(" {point}")
        } else {
            format!("{}. {point}", stage + 1)
        });
    }
    lines.join("\n")
}

/// Continuation of an outline-expansion prompt ending in "1.": four minor
/// points.
pub(crate) fn sub_points(rng: &mut ChaCha8Rng, cast: &Cast, point: &str) -> String {
    let (a, b) = two_names(cast);
    // The noun after the first "the" is a good enough topic.
    let words: Vec<&str> = point.split_whitespace().collect();
    let topic = words
        .windows(2)
        .find(|w| w[0].eq_ignore_ascii_case("the"))
        .map(|w| w[1].trim_matches(|c: char| !c.is_alphabetic()))
        .filter(|w| w.len() > 2 && w.chars().all(|c| c.is_lowercase()))
        .unwrap_or("plan");
    let mut bank = vec![
        format!("{a} notices the first sign of the {topic}."),
        format!("{b} warns {a} to stay away from the {}.", pick(rng, PLACE)),
        format!("{a} searches the {} for answers.", pick(rng, PLACE)),
        format!("{a} and {b} quarrel over the {topic}."),
        format!("{b} reveals a secret about the {topic}."),
        format!("{a} makes a risky choice about the {topic}."),
        format!("{a} spends a sleepless night thinking about {b}."),
        format!("The {topic} turns out to matter more than {a} expected."),
    ];
    bank.shuffle(rng);
    let items: Vec<String> = bank
        .into_iter()
        .take(4)
        .enumerate()
        .map(|(i, t)| {
            if i == 0 {
                format!(" {t}")
            } else {
                format!("{}. {t}", i + 1)
            }
        })
        .collect();
    items.join("\n")
}

fn two_names(cast: &Cast) -> (String, String) {
    let a = cast
        .people
        .first()
        .map(|p| p.0.clone())
        .unwrap_or_else(|| "Mara".to_string());
    let b = cast
        .people
        .get(1)
        .map(|p| p.0.clone())
        .unwrap_or_else(|| "the stranger".to_string());
    (a, b)
}

pub(crate) struct ProseOptions<'a> {
    pub seed: u64,
    pub target_tokens: usize,
    pub topic_words: &'a [String],
    pub newcomer: Option<(String, bool)>,
    pub first_person_slip: bool,
    pub artifact: bool,
    pub repeat_sentence: bool,
    pub attribute_slip: bool,
    /// Text whose five-word runs the passage should not reuse.
    pub avoid: &'a str,
}

const GRAM: usize = 5;

fn grams_of(words: &[String]) -> Vec<String> {
    words.windows(GRAM).map(|w| w.join(" ")).collect()
}

fn noun_or_topic(rng: &mut ChaCha8Rng, bank: &[&'static str], topic: &[String]) -> String {
    if !topic.is_empty() && rng.gen_bool(0.3) {
        topic.choose(rng).cloned().unwrap_or_default()
    } else {
        pick(rng, bank).to_string()
    }
}

fn sentence(rng: &mut ChaCha8Rng, cast: &Cast, opts: &ProseOptions<'_>) -> String {
    let n = cast.people.len().max(1);
    let ai = rng.gen_range(0..n);
    let (a, female) = cast
        .people
        .get(ai)
        .map(|p| (p.0.clone(), p.2))
        .unwrap_or_else(|| ("Mara".to_string(), true));
    let other = if cast.people.len() > 1 {
        let mut bi = rng.gen_range(0..n - 1);
        if bi >= ai {
            bi += 1;
        }
        Some(&cast.people[bi])
    } else {
        None
    };
    let pos = if female { "her" } else { "his" };
    let subj = if female { "she" } else { "he" };
    let topic = opts.topic_words;
    match rng.gen_range(0..9) {
        0 => format!(
            "{a} {} {} the {} {}, {} {pos} {} {}.",
            pick(rng, MOVE),
            pick(rng, PREP_PLACE),
            pick(rng, ADJ),
            noun_or_topic(rng, PLACE, topic),
            pick(rng, PARTICIPLE),
            pick(rng, OBJ_ADJ),
            pick(rng, OBJECT)
        ),
        1 => format!(
            "The {} {} {} while {a} {} the {} {}.",
            pick(rng, NOUN),
            pick(rng, INTRANS),
            pick(rng, ADVERB),
            pick(rng, PERCEIVE),
            pick(rng, ADJ),
            noun_or_topic(rng, OBJECT, topic)
        ),
        2 => format!(
            "{a} felt {} {}, and {subj} {} the {} {} once more.",
            pick(rng, FEEL),
            pick(rng, TIME),
            pick(rng, PERCEIVE),
            pick(rng, OBJ_ADJ),
            noun_or_topic(rng, OBJECT, topic)
        ),
        3 => {
            let listener = other.map(|o| o.0.clone()).unwrap_or_else(|| "nobody".to_string());
            format!(
                "\"I {} we should {} the {} {} {},\" {a} {} to {listener}.",
                pick(rng, THINK),
                pick(rng, ACTION),
                pick(rng, OBJ_ADJ),
                noun_or_topic(rng, OBJECT, topic),
                pick(rng, TIME),
                pick(rng, SAID)
            )
        }
        4 => format!(
            "{a} {} the {} {} of {pos} {} {}.",
            pick(rng, REMEMBER),
            pick(rng, ADJ),
            pick(rng, MEMORY),
            pick(rng, OBJ_ADJ),
            noun_or_topic(rng, PLACE, topic)
        ),
        5 => match other {
            Some(o) => {
                let full_a = &cast.people[ai].1;
                format!(
                    "{a} was {}'s {}, and {subj} felt {} about the {} {} ahead.",
                    o.0,
                    relation_between(opts.seed, full_a, &o.1),
                    pick(rng, FEEL),
                    pick(rng, ADJ),
                    pick(rng, MEMORY)
                )
            }
            None => format!(
                "Somewhere a {} {} {} {}.",
                pick(rng, NOUN),
                pick(rng, INTRANS),
                pick(rng, ADVERB),
                pick(rng, TIME)
            ),
        },
        6 => format!(
            "Outside the {} {}, a {} {} {} {}.",
            pick(rng, ADJ),
            noun_or_topic(rng, PLACE, topic),
            pick(rng, NOUN),
            pick(rng, INTRANS),
            pick(rng, ADVERB),
            pick(rng, TIME)
        ),
        7 => {
            let listener = other.map(|o| o.0.clone()).unwrap_or_else(|| "the dog".to_string());
            format!(
                "\"Did you {} the {} {}?\" {listener} asked, and {a} {} {}.",
                pick(rng, ACTION),
                pick(rng, OBJ_ADJ),
                noun_or_topic(rng, OBJECT, topic),
                ["nodded", "shrugged", "hesitated", "frowned", "smiled"][rng.gen_range(0..5)],
                pick(rng, ADVERB)
            )
        }
        _ => format!(
            "{a} {} the {} {} and {} {} {}.",
            pick(rng, PERCEIVE),
            pick(rng, ADJ),
            noun_or_topic(rng, PLACE, topic),
            ["waited", "listened", "paused", "sighed", "lingered", "counted"][rng.gen_range(0..6)],
            pick(rng, ADVERB),
            pick(rng, TIME)
        ),
    }
}

/// A sentence sharing no five-word run with `seen`, counting runs that
/// start in `tail`. Gives up after a few tries; the filters catch the rest.
fn fresh_sentence(
    rng: &mut ChaCha8Rng,
    cast: &Cast,
    opts: &ProseOptions<'_>,
    seen: &HashSet<String>,
    tail: &[String],
) -> String {
    let mut s = String::new();
    for _ in 0..24 {
        s = sentence(rng, cast, opts);
        let mut words = tail.to_vec();
        words.extend(text::normalized_words(&s));
        if !grams_of(&words).iter().any(|g| seen.contains(g)) {
            break;
        }
    }
    s
}

/// A story passage of roughly `target_tokens` whitespace tokens, never more.
pub(crate) fn passage(rng: &mut ChaCha8Rng, cast: &Cast, opts: &ProseOptions<'_>) -> String {
    let mut sentences: Vec<String> = Vec::new();
    let mut tokens = 0;
    let mut extras: Vec<String> = Vec::new();
    if let Some((name, female)) = &opts.newcomer {
        let anchor = cast
            .people
            .first()
            .map(|p| p.0.clone())
            .unwrap_or_else(|| "Mara".into());
        let noun = if *female { "woman" } else { "man" };
        extras.push(format!(
            "That was when {anchor} met a {} {noun} named {name}, who {} {} the {}.",
            pick(rng, TRAITS),
            pick(rng, MOVE),
            pick(rng, PREP_PLACE),
            pick(rng, PLACE)
        ));
    }
    if opts.first_person_slip {
        extras.push(format!(
            "I {} the {} {} {}.",
            pick(rng, PERCEIVE),
            pick(rng, ADJ),
            pick(rng, PLACE),
            pick(rng, TIME)
        ));
    }
    if opts.attribute_slip {
        if let Some((first, _, female)) = cast.people.choose(rng) {
            extras.push(format!(
                "{first} had {} hair that caught the light as {} turned toward the {}.",
                pick(rng, HAIR),
                if *female { "she" } else { "he" },
                pick(rng, PLACE)
            ));
        }
    }
    let mut seen: HashSet<String> = grams_of(&text::normalized_words(opts.avoid)).into_iter().collect();
    let mut tail: Vec<String> = Vec::new();
    let mut inserted = 0;
    loop {
        let s = if !extras.is_empty() && (inserted < 1 && sentences.len() >= 2 || rng.gen_bool(0.15)) {
            inserted += 1;
            extras.remove(0)
        } else if opts.repeat_sentence && sentences.len() == 4 {
            sentences[1].clone()
        } else {
            fresh_sentence(rng, cast, opts, &seen, &tail)
        };
        let n = s.split_whitespace().count();
        if tokens + n > opts.target_tokens && !sentences.is_empty() {
            break;
        }
        if tokens + n > opts.target_tokens {
            let kept: Vec<&str> = s.split_whitespace().take(opts.target_tokens).collect();
            sentences.push(kept.join(" "));
            break;
        }
        tokens += n;
        tail.extend(text::normalized_words(&s));
        seen.extend(grams_of(&tail));
        tail.drain(..tail.len().saturating_sub(GRAM - 1));
        sentences.push(s);
    }
    let mut text = format!(" {}", sentences.join(" "));
    if opts.artifact {
        let note = "\n\nAuthor's note: Chapter two is coming soon.";
        let budget = opts.target_tokens.saturating_sub(note.split_whitespace().count());
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() > budget {
            text = format!(" {}", words[..budget].join(" "));
        }
        text.push_str(note);
    }
    text
}

/// Bridge text used for insertion requests.
pub(crate) fn bridge(rng: &mut ChaCha8Rng, cast: &Cast) -> String {
    let (a, _) = two_names(cast);
    format!(
        " In the {} days that followed, {a} {} the {} {} and finally felt at peace.",
        pick(rng, ADJ),
        pick(rng, REMEMBER),
        pick(rng, ADJ),
        pick(rng, MEMORY)
    )
}

pub(crate) fn junk_value(rng: &mut ChaCha8Rng) -> String {
    pick(
        rng,
        &[
            "unknown", "tall", "tired", "seven", "blue", "nobody", "far away", "quiet",
        ],
    )
    .to_string()
}
