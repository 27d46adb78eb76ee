use proptest::prelude::*;
use storyweave::backends::mock::mock_backends;
use storyweave::draft::{Budget, DraftConfig, Drafter, SegmentRole};
use storyweave::model::{CharacterSheet, OutlineNode, Passage, Plan, Premise};
use storyweave::templates::Templates;

pub const WORDS: &[&str] = &[
    "harbor", "lantern", "Mara", "quietly", "storm", "the", "of", "ran", "letter", "Tomas", "cliff", "salt", "gray",
    "sang", "under", "boats", "night", "found", "a", "key",
];

pub fn words(range: std::ops::Range<usize>) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), range).prop_map(|w| {
        let mut s = w.join(" ");
        s.push('.');
        s
    })
}

pub fn plan_strategy() -> impl Strategy<Value = Plan> {
    (
        words(3..120),
        words(3..60),
        prop::collection::vec(words(5..200), 0..5),
        prop::collection::vec((words(3..40), prop::collection::vec(words(3..30), 0..4)), 1..5),
    )
        .prop_map(|(premise, setting, descs, outline)| Plan {
            premise: Premise::new(premise).unwrap(),
            setting: format!("The story is set in {setting}"),
            characters: descs
                .into_iter()
                .enumerate()
                .map(|(i, d)| CharacterSheet {
                    name: format!("Person {i}"),
                    description: format!("Person {i} is {d}"),
                    created_at: 0,
                })
                .collect(),
            outline: outline
                .into_iter()
                .enumerate()
                .map(|(i, (text, kids))| {
                    let label = (i + 1).to_string();
                    let mut n = OutlineNode::leaf(label.clone(), text);
                    n.children = kids
                        .into_iter()
                        .enumerate()
                        .map(|(j, t)| OutlineNode::leaf(format!("{label}.{}", (b'a' + j as u8) as char), t))
                        .collect();
                    n
                })
                .collect(),
        })
}

pub fn passages_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(words(1..700), 0..6)
}

pub fn case_strategy() -> impl Strategy<Value = (Plan, Vec<String>, prop::sample::Index)> {
    (plan_strategy(), passages_strategy(), any::<prop::sample::Index>())
}

/// Composes a prompt for one generated case and checks it: within 768
/// tokens, outline and narration segments present, and the verbatim tail
/// a suffix of the last passage. Returns the prompt's token count.
pub fn check_case(plan: &Plan, texts: &[String], pick: &prop::sample::Index) -> Result<usize, String> {
    let b = mock_backends(0);
    let t = Templates::default();
    let cfg = DraftConfig::default();
    let d = Drafter {
        backends: &b,
        templates: &t,
        cfg: &cfg,
    };
    let passages: Vec<Passage> = texts
        .iter()
        .enumerate()
        .map(|(index, text)| Passage {
            token_count: b.count_tokens(text),
            text: text.clone(),
            section_path: String::new(),
            index,
        })
        .collect();
    let leaves = storyweave::model::flatten_outline(plan);
    let leaf = pick.index(leaves.len());
    let budget = Budget {
        total: 1024,
        reserved: 256,
    };
    let spec = d
        .compose_prompt(plan, &passages, leaf, budget)
        .map_err(|e| e.to_string())?;
    let n = b.count_tokens(&spec.render());
    if n > 768 {
        return Err(format!("{n} tokens"));
    }
    if spec.segment(SegmentRole::CurrentOutline).is_none() || spec.segment(SegmentRole::NarrationNote).is_none() {
        return Err("missing outline or narration segment".into());
    }
    if let Some(last) = passages.last() {
        let tail = &spec.segment(SegmentRole::AutoregressiveContext).unwrap().text;
        let body = tail.strip_prefix("Full text below:\n\n").ok_or("tail header missing")?;
        let words: Vec<&str> = body.split_whitespace().collect();
        let all: Vec<&str> = last.text.split_whitespace().collect();
        if !all.ends_with(&words) {
            return Err("tail is not a suffix of the last passage".into());
        }
    }
    Ok(n)
}
