use storyweave::backends::mock::mock_backends;
use storyweave::backends::{BackendResult, EntailmentModel, EntailmentVerdict};
use storyweave::edit::{merge_attribute, AttributeDictionary, AttributeEntry, EditConfig, MergeOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V {
    Entail,
    Neutral,
    Contradict,
}

pub const ALL: [V; 3] = [V::Entail, V::Neutral, V::Contradict];

fn verdict(v: V) -> EntailmentVerdict {
    match v {
        V::Entail => EntailmentVerdict::from_weights(0.9, 0.07, 0.03),
        V::Neutral => EntailmentVerdict::from_weights(0.05, 0.9, 0.05),
        V::Contradict => EntailmentVerdict::from_weights(0.03, 0.07, 0.9),
    }
}

/// Answers by direction: premise holding the new value, or the old one.
struct Directional {
    new_to_old: V,
    old_to_new: V,
}

impl EntailmentModel for Directional {
    fn entail(&self, premise: &str, _hypothesis: &str) -> BackendResult<EntailmentVerdict> {
        Ok(verdict(if premise.contains("NEWVALUE") {
            self.new_to_old
        } else {
            self.old_to_new
        }))
    }
}

/// Expected outcome per (new entails old?, old entails new?) cell.
pub fn expected(new_to_old: V, old_to_new: V) -> &'static str {
    use V::*;
    match (new_to_old, old_to_new) {
        (Entail, Entail) => "kept_existing",
        (Entail, Neutral) => "replaced",
        (Entail, Contradict) => "replaced",
        (Neutral, Entail) => "kept_existing",
        (Neutral, Neutral) => "kept_existing",
        (Neutral, Contradict) => "flagged",
        (Contradict, Entail) => "kept_existing",
        (Contradict, Neutral) => "flagged",
        (Contradict, Contradict) => "flagged",
    }
}

/// Outcome label and the value left in the dictionary.
pub fn run_cell(new_to_old: V, old_to_new: V) -> (&'static str, String) {
    let mut b = mock_backends(0);
    b.nli = std::sync::Arc::new(Directional { new_to_old, old_to_new });
    let cfg = EditConfig::default();
    let mut d = AttributeDictionary::new();
    merge_attribute(
        &b,
        &cfg,
        &mut d,
        "Ana",
        AttributeEntry::stated("Ana", "job", "OLDVALUE", 0),
    )
    .unwrap();
    let m = merge_attribute(
        &b,
        &cfg,
        &mut d,
        "Ana",
        AttributeEntry::stated("Ana", "job", "NEWVALUE", 1),
    )
    .unwrap();
    if let MergeOutcome::Flagged(f) = &m.outcome {
        assert!((f.p_contradict - 0.9).abs() < 1e-12);
    }
    (m.outcome.label(), d.get("job").unwrap().value.clone())
}

/// Mismatching cells as readable strings.
pub fn table_mismatches() -> Vec<String> {
    let mut out = Vec::new();
    for a in ALL {
        for b in ALL {
            let (got, value) = run_cell(a, b);
            let want = expected(a, b);
            let want_value = if want == "replaced" { "NEWVALUE" } else { "OLDVALUE" };
            if got != want || value != want_value {
                out.push(format!(
                    "new->old {a:?}, old->new {b:?}: want {want}, got {got} ({value})"
                ));
            }
        }
    }
    out
}
