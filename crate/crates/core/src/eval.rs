//! Contradiction-detection evaluation: (setup, story) pairs scored by each
//! detector, summarized as ROC-AUC.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{relevance, BackendError, BackendResult, Backends};
use crate::edit::{DetectMode, Editor};
use crate::model::{CharacterSheet, Plan, Premise};
use crate::text::split_sentences;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing tuples: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("tuple {id}: field {field} is empty")]
    EmptyField { id: String, field: &'static str },
    #[error("ROC-AUC needs at least one positive and one negative")]
    SingleClass,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("unknown method {0:?}; expected entailment, entailment-dpr or structured")]
    UnknownMethod(String),
}

/// Setup `s` with its story `t`, and the altered setup `s_prime` with its
/// story `t_prime`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTuple {
    pub id: String,
    pub s: String,
    pub s_prime: String,
    pub t: String,
    pub t_prime: String,
}

impl EvalTuple {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (field, v) in [
            ("s", &self.s),
            ("s_prime", &self.s_prime),
            ("t", &self.t),
            ("t_prime", &self.t_prime),
        ] {
            if v.trim().is_empty() {
                return Err(EvalError::EmptyField {
                    id: self.id.clone(),
                    field,
                });
            }
        }
        Ok(())
    }
}

pub fn parse_tuples(json: &str) -> Result<Vec<EvalTuple>, EvalError> {
    let tuples: Vec<EvalTuple> = serde_json::from_str(json)?;
    for t in &tuples {
        t.validate()?;
    }
    Ok(tuples)
}

pub fn load_tuples(path: &Path) -> Result<Vec<EvalTuple>, EvalError> {
    let src = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tuples(&src)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Consistent,
    Contradictory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub tuple_id: String,
    pub setup: String,
    pub story: String,
    pub label: Label,
}

/// Four pairs per tuple: the matching ones consistent, the crossed ones
/// contradictory.
pub fn expand_tuples(tuples: &[EvalTuple]) -> Vec<LabeledPair> {
    let mut out = Vec::with_capacity(tuples.len() * 4);
    for t in tuples {
        for (setup, story, label) in [
            (&t.s, &t.t, Label::Consistent),
            (&t.s_prime, &t.t_prime, Label::Consistent),
            (&t.s, &t.t_prime, Label::Contradictory),
            (&t.s_prime, &t.t, Label::Contradictory),
        ] {
            out.push(LabeledPair {
                tuple_id: t.id.clone(),
                setup: setup.clone(),
                story: story.clone(),
                label,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Entailment,
    EntailmentDpr,
    Structured,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Entailment, Method::EntailmentDpr, Method::Structured];

    pub fn name(self) -> &'static str {
        match self {
            Method::Entailment => "entailment",
            Method::EntailmentDpr => "entailment-dpr",
            Method::Structured => "structured",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| EvalError::UnknownMethod(s.to_string()))
    }
}

/// Highest contradiction probability over every (setup sentence, story
/// sentence) pair.
pub fn entailment_baseline(backends: &Backends, setup: &str, story: &str) -> BackendResult<f64> {
    let s = split_sentences(setup);
    let t = split_sentences(story);
    let mut best = 0.0f64;
    for a in &s {
        for b in &t {
            best = best.max(backends.entail(a, b)?.p_contradict);
        }
    }
    Ok(best)
}

/// Like [`entailment_baseline`], but each story sentence is checked only
/// against the setup sentence closest to it by embedding; ties go to the
/// earlier setup sentence.
pub fn entailment_dpr_baseline(backends: &Backends, setup: &str, story: &str) -> BackendResult<f64> {
    let s = split_sentences(setup);
    let t = split_sentences(story);
    if s.is_empty() || t.is_empty() {
        return Ok(0.0);
    }
    let se = backends.embed(&s)?;
    let te = backends.embed(&t)?;
    let mut best = 0.0f64;
    for (sentence, q) in t.iter().zip(&te) {
        let mut pick = 0;
        let mut pick_score = f64::NEG_INFINITY;
        for (i, d) in se.iter().enumerate() {
            let r = relevance(q, d);
            if r > pick_score {
                pick = i;
                pick_score = r;
            }
        }
        best = best.max(backends.entail(&s[pick], sentence)?.p_contradict);
    }
    Ok(best)
}

static DESCRIPTION_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Z][\w'-]*(?: [A-Z][\w'-]*)+) (?:is|was) ").expect("valid regex"));

/// Reads character descriptions out of a setup: a sentence opening with a
/// multi-word capitalized name and "is"/"was" starts a description, and
/// following sentences join it until the next one starts.
pub fn parse_setup_characters(setup: &str) -> Vec<CharacterSheet> {
    let mut out: Vec<CharacterSheet> = Vec::new();
    let mut current: Option<usize> = None;
    for line in setup.lines() {
        let line = line.trim();
        let line = ["Characters:", "Character:"]
            .iter()
            .find_map(|p| line.strip_prefix(p))
            .unwrap_or(line)
            .trim();
        if line.is_empty() {
            current = None;
            continue;
        }
        for sentence in split_sentences(line) {
            if let Some(c) = DESCRIPTION_START.captures(&sentence) {
                let name = c[1].to_string();
                match out.iter().position(|x| x.name == name) {
                    Some(i) => {
                        out[i].description.push(' ');
                        out[i].description.push_str(&sentence);
                        current = Some(i);
                    }
                    None => {
                        out.push(CharacterSheet {
                            name,
                            description: sentence,
                            created_at: 0,
                        });
                        current = Some(out.len() - 1);
                    }
                }
            } else if let Some(i) = current {
                out[i].description.push(' ');
                out[i].description.push_str(&sentence);
            }
        }
    }
    out
}

/// The knowledge-base detector: seeds character dictionaries from the
/// setup, then reports the highest contradiction probability met while
/// merging the story's attributes. 0 when nothing conflicts.
pub fn structured_detector(editor: &Editor, setup: &str, story: &str) -> f64 {
    let characters = parse_setup_characters(setup);
    if characters.is_empty() {
        log::warn!("no character descriptions found in setup");
        return 0.0;
    }
    let Ok(premise) = Premise::new(setup) else {
        return 0.0;
    };
    let plan = Plan {
        premise,
        setting: String::new(),
        characters,
        outline: Vec::new(),
    };
    let mut kb = editor.seed_kb(&plan);
    editor
        .detect(story, 1, &mut kb, DetectMode::Probability)
        .max_p_contradict
        .unwrap_or(0.0)
}

pub fn score_pair(method: Method, backends: &Backends, editor: &Editor, pair: &LabeledPair) -> BackendResult<f64> {
    match method {
        Method::Entailment => entailment_baseline(backends, &pair.setup, &pair.story),
        Method::EntailmentDpr => entailment_dpr_baseline(backends, &pair.setup, &pair.story),
        Method::Structured => Ok(structured_detector(editor, &pair.setup, &pair.story)),
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting half. Computed from midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied runs share their mean rank.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub tuple_id: String,
    pub label: Label,
    /// Null when the method could not score the pair.
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub auc: Option<f64>,
    pub scored: usize,
    pub excluded: usize,
    pub pairs: Vec<PairScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tuples: usize,
    pub pairs: usize,
    pub results: Vec<MethodResult>,
}

impl EvalReport {
    pub fn auc(&self, method: Method) -> Option<f64> {
        self.results.iter().find(|r| r.method == method).and_then(|r| r.auc)
    }

    /// Aligned plain-text table, one row per method.
    pub fn table(&self) -> String {
        let mut rows = vec![["method".to_string(), "auc".into(), "scored".into(), "excluded".into()]];
        for r in &self.results {
            rows.push([
                r.method.name().to_string(),
                r.auc.map_or("n/a".into(), |a| format!("{a:.3}")),
                r.scored.to_string(),
                r.excluded.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line = format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                r[0],
                r[1],
                r[2],
                r[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }
}

/// Scores every pair with every method. Pairs run in parallel; results
/// keep pair order. A pair a method cannot score is left out of that
/// method's AUC and counted as excluded.
pub fn evaluate(tuples: &[EvalTuple], methods: &[Method], backends: &Backends, editor: &Editor) -> EvalReport {
    let pairs = expand_tuples(tuples);
    let results = methods
        .iter()
        .map(|&method| {
            let scored: Vec<PairScore> = pairs
                .par_iter()
                .map(|p| {
                    let r: Result<f64, BackendError> = score_pair(method, backends, editor, p);
                    PairScore {
                        tuple_id: p.tuple_id.clone(),
                        label: p.label,
                        score: r.as_ref().ok().copied(),
                        error: r.err().map(|e| {
                            log::warn!("{} could not score a pair of {}: {e}", method.name(), p.tuple_id);
                            e.to_string()
                        }),
                    }
                })
                .collect();
            let (scores, labels): (Vec<f64>, Vec<bool>) = scored
                .iter()
                .filter_map(|p| p.score.map(|s| (s, p.label == Label::Contradictory)))
                .unzip();
            MethodResult {
                method,
                auc: roc_auc(&scores, &labels).ok(),
                scored: scores.len(),
                excluded: scored.len() - scores.len(),
                pairs: scored,
            }
        })
        .collect();
    EvalReport {
        tuples: tuples.len(),
        pairs: pairs.len(),
        results,
    }
}

const FIRST: &[(&str, bool)] = &[
    ("Julie", true),
    ("Beth", true),
    ("Nora", true),
    ("Clara", true),
    ("Maya", true),
    ("Ruth", true),
    ("Tom", false),
    ("Peter", false),
    ("Daniel", false),
    ("Victor", false),
    ("Owen", false),
    ("Arthur", false),
];
const LAST: &[&str] = &[
    "Christensen",
    "Holloway",
    "Marsh",
    "Okafor",
    "Lindgren",
    "Barrett",
    "Castillo",
    "Whitaker",
];
const RELATIONS: &[&str] = &[
    "mother", "friend", "sister", "teacher", "neighbor", "cousin", "aunt", "rival",
];
const HAIR: &[&str] = &["red", "black", "blond", "brown", "gray", "auburn"];
const AGES: &[&str] = &["twelve", "nineteen", "thirty", "forty-two", "sixty-one", "seventy"];
const FILLER: &[&str] = &[
    "The wind pushed against the shutters all evening.",
    "Rain had turned the lane into a river of mud.",
    "Somewhere down the hill a dog barked twice and went quiet.",
    "The kettle began to whistle in the empty kitchen.",
    "Nobody in the village had seen the ferry since Tuesday.",
    "A single lamp burned in the window of the old mill.",
    "The church bell rang out the hour.",
    "Fog rolled in from the harbor before noon.",
    "The market stalls were already packed away.",
    "Gulls circled over the fishing boats.",
    "A cart rattled over the cobblestones and stopped outside.",
    "The smell of bread drifted from the bakery on the corner.",
    "Someone had left the garden gate open again.",
    "Thunder rolled somewhere beyond the hills.",
    "The clock on the mantel had stopped at a quarter past three.",
    "Children were shouting in the square below.",
    "The letter on the table was still unopened.",
    "Snow had begun to gather along the windowsills.",
    "The radio crackled with news from the capital.",
    "A train whistled as it crossed the old bridge.",
    "The fire had burned down to a few red coals.",
    "The streetlamps flickered on one by one.",
    "Water dripped steadily from the broken gutter.",
    "The orchard was heavy with late apples.",
];
const PREMISES: &[&str] = &[
    "returns to the village after twenty years away.",
    "inherits a shop that nobody wants to buy.",
    "finds a locked box buried under the floorboards.",
    "is asked to keep a secret that could ruin a friend.",
    "agrees to search for a missing dog during a storm.",
];
const PLACES: &[&str] = &[
    "a small fishing village",
    "a mountain town",
    "a crowded river city",
    "a farming valley",
];

/// Filler sentences per synthetic story.
const STORY_FILLER: usize = 14;

#[derive(Clone, Copy)]
enum Varied {
    Relation,
    Hair,
    Age,
}

/// Deterministic tuples whose setups differ in one attribute and whose
/// stories each restate their own setup's value among filler sentences.
pub fn synthetic_tuples(n: usize, seed: u64) -> Vec<EvalTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut firsts: Vec<&(&str, bool)> = FIRST.iter().collect();
            firsts.shuffle(&mut rng);
            let (fa, female_a) = *firsts[0];
            let (fb, female_b) = *firsts[1];
            let a = format!("{fa} {}", LAST[rng.gen_range(0..LAST.len())]);
            let b = format!("{fb} {}", LAST[rng.gen_range(0..LAST.len())]);
            let noun = |female: bool| if female { "woman" } else { "man" };
            let age_a = AGES[rng.gen_range(0..AGES.len())];
            let age_b = AGES[rng.gen_range(0..AGES.len())];
            let premise = PREMISES[rng.gen_range(0..PREMISES.len())];
            let place = PLACES[rng.gen_range(0..PLACES.len())];
            let kind = [Varied::Relation, Varied::Hair, Varied::Age][i % 3];
            let two = |bank: &[&'static str], rng: &mut ChaCha8Rng| {
                let mut v: Vec<&str> = bank.to_vec();
                v.shuffle(rng);
                (v[0], v[1])
            };
            let (x, y) = match kind {
                Varied::Relation => two(RELATIONS, &mut rng),
                Varied::Hair => two(HAIR, &mut rng),
                Varied::Age => two(AGES, &mut rng),
            };
            let setup = |v: &str| {
                let (desc_b, extra) = match kind {
                    Varied::Relation => (
                        format!("{b} is a {age_b}-year-old {}.", noun(female_b)),
                        format!(" {b} is {a}'s {v}."),
                    ),
                    Varied::Hair => (
                        format!("{b} is a {age_b}-year-old {} with {v} hair.", noun(female_b)),
                        String::new(),
                    ),
                    Varied::Age => (format!("{b} is a {v}-year-old {}.", noun(female_b)), String::new()),
                };
                format!(
                    "Premise: {a} {premise}\nSetting: The story is set in {place}.\nCharacters:\n{a} is a {age_a}-year-old {}.\n{desc_b}{extra}",
                    noun(female_a)
                )
            };
            let mut fill: Vec<&str> = FILLER.to_vec();
            fill.shuffle(&mut rng);
            let pos = rng.gen_range(1..STORY_FILLER);
            let story = |v: &str| {
                let pro = if female_b { "herself" } else { "himself" };
                let key_sentence = match kind {
                    Varied::Relation => format!("{b} was {a}'s {v}, and {fa} trusted that."),
                    Varied::Hair => format!("{b} had {v} hair that was wet from the rain."),
                    Varied::Age => format!("{b} was a {v}-year-old {} who kept to {pro}.", noun(female_b)),
                };
                let mut sentences: Vec<String> = fill[..STORY_FILLER].iter().map(|s| s.to_string()).collect();
                sentences.insert(pos, key_sentence);
                sentences.insert(0, format!("{a} waited by the door."));
                sentences.join(" ")
            };
            EvalTuple {
                id: format!("synthetic-{i}"),
                s: setup(x),
                s_prime: setup(y),
                t: story(x),
                t_prime: story(y),
            }
        })
        .collect()
}
