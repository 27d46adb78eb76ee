use std::collections::HashMap;
use std::path::Path;

use crate::backends::EntailmentVerdict;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedPerson {
    pub name: String,
    pub female: bool,
}

/// Lookup tables backing the mocks.
#[derive(Debug, Clone, Default)]
pub struct Fixtures {
    pub names: Vec<NamedPerson>,
    /// relation -> reciprocal relation
    pub relations: Vec<(String, String)>,
    pub non_person: Vec<String>,
    pub entailment: HashMap<(String, String), EntailmentVerdict>,
    /// (question, context) -> (answer, confidence); empty context matches
    /// any context.
    pub qa: HashMap<(String, String), (String, f64)>,
    pub edits: HashMap<(String, String), String>,
}

fn rows(src: &str) -> impl Iterator<Item = Vec<&str>> {
    src.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
}

fn unescape(s: &str) -> String {
    s.replace("\\n", "\n").replace("\\t", "\t")
}

impl Fixtures {
    pub fn builtin() -> Self {
        let mut f = Self::default();
        f.load_names(include_str!("../../../fixtures/names.tsv"));
        f.load_relations(include_str!("../../../fixtures/relations.tsv"));
        f.load_non_person(include_str!("../../../fixtures/non_person.txt"));
        f.load_entailment(include_str!("../../../fixtures/entailment.tsv"));
        f.load_qa(include_str!("../../../fixtures/qa.tsv"));
        f.load_edits(include_str!("../../../fixtures/edit.tsv"));
        f
    }

    /// Loads any of the fixture files present in `dir` on top of the
    /// current tables.
    pub fn extend_from_dir(&mut self, dir: &Path) -> std::io::Result<()> {
        let read = |name: &str| -> std::io::Result<Option<String>> {
            let p = dir.join(name);
            if p.is_file() {
                Ok(Some(std::fs::read_to_string(p)?))
            } else {
                Ok(None)
            }
        };
        if let Some(s) = read("names.tsv")? {
            self.load_names(&s);
        }
        if let Some(s) = read("relations.tsv")? {
            self.load_relations(&s);
        }
        if let Some(s) = read("non_person.txt")? {
            self.load_non_person(&s);
        }
        if let Some(s) = read("entailment.tsv")? {
            self.load_entailment(&s);
        }
        if let Some(s) = read("qa.tsv")? {
            self.load_qa(&s);
        }
        if let Some(s) = read("edit.tsv")? {
            self.load_edits(&s);
        }
        Ok(())
    }

    pub fn load_names(&mut self, src: &str) {
        for r in rows(src) {
            if let [name, gender, ..] = r.as_slice() {
                self.names.push(NamedPerson {
                    name: name.trim().to_string(),
                    female: gender.trim() == "f",
                });
            }
        }
    }

    pub fn load_relations(&mut self, src: &str) {
        for r in rows(src) {
            if let [rel, rec, ..] = r.as_slice() {
                self.relations.push((rel.trim().to_string(), rec.trim().to_string()));
            }
        }
    }

    pub fn load_non_person(&mut self, src: &str) {
        for l in src.lines() {
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                self.non_person.push(l.to_string());
            }
        }
    }

    pub fn load_entailment(&mut self, src: &str) {
        for r in rows(src) {
            if let [p, h, e, n, c, ..] = r.as_slice() {
                let parse = |s: &str| s.trim().parse::<f64>().unwrap_or(0.0);
                self.entailment.insert(
                    (unescape(p), unescape(h)),
                    EntailmentVerdict::from_weights(parse(e), parse(n), parse(c)),
                );
            }
        }
    }

    pub fn load_qa(&mut self, src: &str) {
        for r in rows(src) {
            if let [q, ctx, a, conf, ..] = r.as_slice() {
                self.qa.insert(
                    (unescape(q), unescape(ctx)),
                    (unescape(a), conf.trim().parse().unwrap_or(0.0)),
                );
            }
        }
    }

    pub fn load_edits(&mut self, src: &str) {
        for r in rows(src) {
            if let [t, i, o, ..] = r.as_slice() {
                self.edits.insert((unescape(t), unescape(i)), unescape(o));
            }
        }
    }

    pub fn reciprocal(&self, relation: &str) -> Option<&str> {
        let rel = relation.trim().to_lowercase();
        self.relations
            .iter()
            .find(|(r, _)| *r == rel)
            .map(|(_, rec)| rec.as_str())
    }

    pub fn is_relation(&self, word: &str) -> bool {
        self.reciprocal(word).is_some()
    }

    pub fn is_non_person(&self, surface: &str) -> bool {
        self.non_person.iter().any(|n| n.eq_ignore_ascii_case(surface))
    }

    pub fn person(&self, name: &str) -> Option<&NamedPerson> {
        self.names.iter().find(|p| p.name == name)
    }
}
