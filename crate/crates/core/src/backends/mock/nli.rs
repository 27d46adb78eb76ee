use std::sync::Arc;

use crate::backends::{BackendResult, EntailmentModel, EntailmentVerdict};
use crate::text;

use super::understand::{interpret_text, keys_match};
use super::{stable_hash, unit, Fixtures};

const ENTAIL: (f64, f64, f64) = (0.95, 0.04, 0.01);
const NEUTRAL: (f64, f64, f64) = (0.05, 0.9, 0.05);
const CONTRADICT: (f64, f64, f64) = (0.02, 0.03, 0.95);

fn verdict((e, n, c): (f64, f64, f64)) -> EntailmentVerdict {
    EntailmentVerdict::from_weights(e, n, c)
}

/// Table-driven entailment. Lookup order: the fixture table on the exact
/// pair; identical strings entail; optionally the attribute rule below;
/// otherwise neutral.
///
/// The attribute rule reads both texts as attribute statements. When the
/// hypothesis states a (subject, key) the premise also states, equal values
/// entail, a premise value whose words include the hypothesis value's
/// entails ("good friend" entails "friend"), the reverse is neutral, and
/// anything else contradicts. Keys of the form `friend's name` are treated
/// as multi-valued, so differing values there are neutral.
#[derive(Debug, Clone)]
pub struct MockEntailment {
    fixtures: Arc<Fixtures>,
    attribute_aware: bool,
}

impl MockEntailment {
    pub fn new(fixtures: Arc<Fixtures>) -> Self {
        Self {
            fixtures,
            attribute_aware: false,
        }
    }

    pub fn attribute_aware(mut self, on: bool) -> Self {
        self.attribute_aware = on;
        self
    }

    fn attribute_rule(&self, premise: &str, hypothesis: &str) -> Option<EntailmentVerdict> {
        let hyps = interpret_text(hypothesis, None, &self.fixtures);
        let prems = interpret_text(premise, None, &self.fixtures);
        let mut best: Option<(f64, f64, f64)> = None;
        for h in &hyps {
            for p in &prems {
                if !text::names_match(&p.subject, &h.subject) || !keys_match(&p.key, &h.key) {
                    continue;
                }
                let pv = text::normalized_words(&p.value);
                let hv = text::normalized_words(&h.value);
                let v = if pv == hv || hv.iter().all(|w| pv.contains(w)) {
                    ENTAIL
                } else if pv.iter().all(|w| hv.contains(w)) || h.key.ends_with("'s name") {
                    // A character can have several friends: name slots
                    // never contradict.
                    NEUTRAL
                } else {
                    CONTRADICT
                };
                // One conflicting attribute makes the whole pair a
                // contradiction; otherwise any support is entailment.
                let rank = |x: (f64, f64, f64)| {
                    if x == CONTRADICT {
                        2
                    } else if x == ENTAIL {
                        1
                    } else {
                        0
                    }
                };
                if best.is_none_or(|b| rank(v) > rank(b)) {
                    best = Some(v);
                }
            }
        }
        best.map(verdict)
    }

    pub fn judge(&self, premise: &str, hypothesis: &str) -> EntailmentVerdict {
        if let Some(v) = self
            .fixtures
            .entailment
            .get(&(premise.to_string(), hypothesis.to_string()))
        {
            return *v;
        }
        if text::normalize(premise) == text::normalize(hypothesis) {
            return verdict(ENTAIL);
        }
        if self.attribute_aware {
            if let Some(v) = self.attribute_rule(premise, hypothesis) {
                return v;
            }
        }
        verdict(NEUTRAL)
    }
}

impl EntailmentModel for MockEntailment {
    fn entail(&self, premise: &str, hypothesis: &str) -> BackendResult<EntailmentVerdict> {
        Ok(self.judge(premise, hypothesis))
    }
}

/// Returns the same verdict for every pair: an uninformative model.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEntailment(pub EntailmentVerdict);

impl Default for ConstantEntailment {
    fn default() -> Self {
        Self(EntailmentVerdict::uniform())
    }
}

impl EntailmentModel for ConstantEntailment {
    fn entail(&self, _: &str, _: &str) -> BackendResult<EntailmentVerdict> {
        Ok(self.0)
    }
}

/// Wraps another entailment model and blends its contradiction probability
/// with hashed uniform noise: `p_c' = (1 - a) p_c + a u`, where `u` depends
/// only on (seed, premise, hypothesis). The remaining mass is split between
/// entailment and neutral in the inner model's proportions.
///
/// With `length_reference` set, `a` is scaled by the pair's combined word
/// count over the reference (capped at 1), so long inputs are judged less
/// reliably than short ones.
pub struct NoisyEntailment {
    pub inner: Arc<dyn EntailmentModel>,
    pub seed: u64,
    pub amplitude: f64,
    pub length_reference: Option<usize>,
}

impl NoisyEntailment {
    pub fn uniform(inner: Arc<dyn EntailmentModel>, seed: u64, amplitude: f64) -> Self {
        Self {
            inner,
            seed,
            amplitude,
            length_reference: None,
        }
    }

    pub fn length_scaled(inner: Arc<dyn EntailmentModel>, seed: u64, amplitude: f64, reference_words: usize) -> Self {
        Self {
            inner,
            seed,
            amplitude,
            length_reference: Some(reference_words.max(1)),
        }
    }

    fn effective_amplitude(&self, premise: &str, hypothesis: &str) -> f64 {
        let a = self.amplitude.clamp(0.0, 1.0);
        match self.length_reference {
            None => a,
            Some(r) => {
                let words = premise.split_whitespace().count() + hypothesis.split_whitespace().count();
                a * (words as f64 / r as f64).min(1.0)
            }
        }
    }
}

impl EntailmentModel for NoisyEntailment {
    fn entail(&self, premise: &str, hypothesis: &str) -> BackendResult<EntailmentVerdict> {
        let v = self.inner.entail(premise, hypothesis)?;
        let u = unit(stable_hash(&[
            &self.seed.to_le_bytes(),
            premise.as_bytes(),
            hypothesis.as_bytes(),
        ]));
        let a = self.effective_amplitude(premise, hypothesis);
        let pc = (1.0 - a) * v.p_contradict + a * u;
        let rest = v.p_entail + v.p_neutral;
        let (pe, pn) = if rest > 0.0 {
            (v.p_entail / rest * (1.0 - pc), v.p_neutral / rest * (1.0 - pc))
        } else {
            ((1.0 - pc) / 2.0, (1.0 - pc) / 2.0)
        };
        Ok(EntailmentVerdict::from_weights(pe, pn, pc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nli() -> MockEntailment {
        MockEntailment::new(Arc::new(Fixtures::builtin())).attribute_aware(true)
    }

    fn is_max_entail(v: EntailmentVerdict) -> bool {
        v.p_entail > v.p_neutral && v.p_entail > v.p_contradict
    }

    #[test]
    fn reflexive() {
        assert!(is_max_entail(nli().judge("The sky darkened.", "The sky darkened.")));
    }

    #[test]
    fn table_entry_wins() {
        let v = nli().judge("Beth is Julie's mother.", "Beth is Julie's friend.");
        assert!((v.p_contradict - 0.95).abs() < 1e-9);
    }

    #[test]
    fn unrelated_is_neutral() {
        let v = MockEntailment::new(Arc::new(Fixtures::builtin())).judge("It rained.", "Tom ate soup.");
        assert!(v.p_neutral > v.p_entail && v.p_neutral > v.p_contradict);
    }

    #[test]
    fn attribute_rule() {
        let n = nli();
        assert!(is_max_entail(n.judge(
            "Nora Johnson is Mark's good friend.",
            "Nora Johnson is Mark's friend."
        )));
        let v = n.judge("Nora Johnson is Mark's sister.", "Nora Johnson is Mark's friend.");
        assert!(v.p_contradict > 0.9);
        let v = n.judge("Nora is Mark Bradley's friend.", "Nora is Mark Bradley's good friend.");
        assert!(v.p_neutral > 0.5);
        assert!(is_max_entail(n.judge(
            "Nora Johnson is a fourteen-year-old girl.",
            "Nora Johnson's age is fourteen years."
        )));
        // Different keys say nothing about each other.
        let v = n.judge("Nora Johnson's age is ten years.", "Nora Johnson's gender is female.");
        assert!(v.p_neutral > 0.5);
    }

    #[test]
    fn noise_keeps_triples_valid() {
        let noisy = NoisyEntailment::uniform(Arc::new(nli()), 3, 0.4);
        for (p, h) in [
            ("a b", "c d"),
            ("Beth is Julie's mother.", "Beth is Julie's friend."),
            ("x", "x"),
        ] {
            let v = noisy.entail(p, h).unwrap();
            assert!(v.is_valid());
            assert_eq!(v, noisy.entail(p, h).unwrap());
        }
    }

    #[test]
    fn length_scaling() {
        let n = NoisyEntailment::length_scaled(Arc::new(nli()), 3, 1.0, 10);
        assert_eq!(n.effective_amplitude("a b", "c d e"), 0.5);
        assert_eq!(n.effective_amplitude("a b c d e f", "g h i j k l"), 1.0);
        let u = NoisyEntailment::uniform(Arc::new(nli()), 3, 0.7);
        assert_eq!(u.effective_amplitude("a", "b"), 0.7);
    }
}
