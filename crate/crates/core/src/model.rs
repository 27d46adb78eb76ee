//! Core story types: premise, plan, outline tree, passages and the running
//! story state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::edit::AttributeDictionary;

/// Prefix every generated setting starts with.
pub const SETTING_PREFIX: &str = "The story is set";

/// Separator between passages in assembled story text.
pub const PASSAGE_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Premise(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PremiseError {
    #[error("premise is empty")]
    Empty,
    #[error("premise spans more than one paragraph")]
    MultiParagraph,
}

impl Premise {
    pub fn new(text: impl Into<String>) -> Result<Self, PremiseError> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(PremiseError::Empty);
        }
        if text.contains("\n\n") || text.contains("\r\n\r\n") {
            return Err(PremiseError::MultiParagraph);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Premise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterSheet {
    pub name: String,
    pub description: String,
    /// Passage index the character was introduced at; 0 for plan-time
    /// characters.
    pub created_at: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineNode {
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<OutlineNode>,
}

impl OutlineNode {
    pub fn leaf(label: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(OutlineNode::depth).max().unwrap_or(0)
    }
}

/// Label for the `index`-th (0-based) child of `parent`: top level uses
/// numbers, the second level letters, deeper levels numbers again.
pub fn child_label(parent: Option<&str>, index: usize) -> String {
    match parent {
        None => (index + 1).to_string(),
        Some(p) => {
            let depth = p.split('.').count();
            if depth % 2 == 1 {
                format!("{p}.{}", letter_label(index))
            } else {
                format!("{p}.{}", index + 1)
            }
        }
    }
}

fn letter_label(mut index: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push((b'a' + (index % 26) as u8) as char);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    s.iter().rev().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub premise: Premise,
    pub setting: String,
    pub characters: Vec<CharacterSheet>,
    pub outline: Vec<OutlineNode>,
}

impl Plan {
    pub fn outline_depth(&self) -> usize {
        self.outline.iter().map(OutlineNode::depth).max().unwrap_or(0)
    }

    /// Looks up an outline node by its label.
    pub fn node(&self, label: &str) -> Option<&OutlineNode> {
        fn find<'a>(nodes: &'a [OutlineNode], label: &str) -> Option<&'a OutlineNode> {
            for n in nodes {
                if n.label == label {
                    return Some(n);
                }
                if let Some(hit) = find(&n.children, label) {
                    return Some(hit);
                }
            }
            None
        }
        find(&self.outline, label)
    }

    pub fn character(&self, name: &str) -> Option<&CharacterSheet> {
        self.characters.iter().find(|c| c.name == name)
    }
}

/// One outline leaf in depth-first order together with the texts of its
/// ancestors (outermost first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineLeaf {
    pub label: String,
    pub text: String,
    pub ancestors: Vec<String>,
    /// Labels of the ancestors, parallel to `ancestors`.
    pub ancestor_labels: Vec<String>,
}

pub fn flatten_outline(plan: &Plan) -> Vec<OutlineLeaf> {
    fn walk(nodes: &[OutlineNode], path: &mut Vec<(String, String)>, out: &mut Vec<OutlineLeaf>) {
        for n in nodes {
            if n.children.is_empty() {
                out.push(OutlineLeaf {
                    label: n.label.clone(),
                    text: n.text.clone(),
                    ancestors: path.iter().map(|(_, t)| t.clone()).collect(),
                    ancestor_labels: path.iter().map(|(l, _)| l.clone()).collect(),
                });
            } else {
                path.push((n.label.clone(), n.text.clone()));
                walk(&n.children, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(&plan.outline, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub text: String,
    pub section_path: String,
    pub index: usize,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryState {
    pub plan: Plan,
    passages: Vec<Passage>,
    pub kb: BTreeMap<String, AttributeDictionary>,
    pub current_leaf: usize,
}

impl StoryState {
    pub fn new(plan: Plan) -> Self {
        Self {
            plan,
            passages: Vec::new(),
            kb: BTreeMap::new(),
            current_leaf: 0,
        }
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn last_passage(&self) -> Option<&Passage> {
        self.passages.last()
    }

    /// Appends a passage. The index is assigned here so indices stay
    /// contiguous; earlier passages are never touched.
    pub fn push_passage(&mut self, text: String, section_path: String, token_count: usize) -> &Passage {
        let index = self.passages.len();
        self.passages.push(Passage {
            text,
            section_path,
            index,
            token_count,
        });
        &self.passages[index]
    }
}

/// Which passages to include when assembling story text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassageWindow {
    All,
    Last(usize),
}

pub fn story_text(passages: &[Passage], window: PassageWindow) -> String {
    let start = match window {
        PassageWindow::All => 0,
        PassageWindow::Last(k) => passages.len().saturating_sub(k),
    };
    passages[start..]
        .iter()
        .map(|p| p.text.as_str())
        .collect::<Vec<_>>()
        .join(PASSAGE_SEPARATOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_with(outline: Vec<OutlineNode>) -> Plan {
        Plan {
            premise: Premise::new("A premise.").unwrap(),
            setting: "The story is set in a town.".into(),
            characters: vec![],
            outline,
        }
    }

    #[test]
    fn flat_outline_labels() {
        let plan = plan_with(vec![
            OutlineNode::leaf("1", "A"),
            OutlineNode::leaf("2", "B"),
            OutlineNode::leaf("3", "C"),
        ]);
        let leaves = flatten_outline(&plan);
        let labels: Vec<_> = leaves.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(labels, vec!["1", "2", "3"]);
        assert!(leaves.iter().all(|l| l.ancestors.is_empty()));
    }

    #[test]
    fn one_branch_tree() {
        let plan = plan_with(vec![OutlineNode {
            text: "Top".into(),
            label: "1".into(),
            children: vec![OutlineNode::leaf("1.a", "x"), OutlineNode::leaf("1.b", "y")],
        }]);
        let leaves = flatten_outline(&plan);
        assert_eq!(leaves.len(), 2);
        assert_eq!(leaves[0].label, "1.a");
        assert_eq!(leaves[1].label, "1.b");
        assert_eq!(leaves[1].ancestors, vec!["Top".to_string()]);
        assert_eq!(plan.outline_depth(), 2);
    }

    #[test]
    fn labels() {
        assert_eq!(child_label(None, 0), "1");
        assert_eq!(child_label(Some("2"), 2), "2.c");
        assert_eq!(child_label(Some("2.c"), 0), "2.c.1");
        assert_eq!(child_label(Some("1"), 26), "1.aa");
    }

    #[test]
    fn premise_validation() {
        assert_eq!(Premise::new("  "), Err(PremiseError::Empty));
        assert_eq!(Premise::new("a\n\nb"), Err(PremiseError::MultiParagraph));
        assert!(Premise::new("One line.\nStill the same paragraph.").is_ok());
    }

    #[test]
    fn story_text_windows() {
        let mut st = StoryState::new(plan_with(vec![OutlineNode::leaf("1", "A")]));
        assert_eq!(story_text(st.passages(), PassageWindow::All), "");
        for t in ["p0", "p1", "p2"] {
            st.push_passage(t.into(), "1".into(), 1);
        }
        assert_eq!(story_text(st.passages(), PassageWindow::Last(1)), "p2");
        assert_eq!(story_text(st.passages(), PassageWindow::All), "p0\n\np1\n\np2");
        assert_eq!(story_text(st.passages(), PassageWindow::Last(10)), "p0\n\np1\n\np2");
    }
}
