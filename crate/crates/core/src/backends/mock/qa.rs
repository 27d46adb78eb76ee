use std::sync::Arc;

use crate::backends::{BackendResult, QaResult, QuestionAnswerer};

use super::understand::{interpret_text, keys_match};
use super::Fixtures;

/// Table-driven question answering. A row keyed on (question, context)
/// wins over one keyed on (question, "") which matches any context. With
/// `extractive` on, questions of the forms `What is {name}'s {key}?` and
/// `What is {name}'s relationship to {other}?` are answered from attribute
/// statements found in the context. Everything else abstains.
#[derive(Debug, Clone)]
pub struct MockQa {
    fixtures: Arc<Fixtures>,
    extractive: bool,
}

impl MockQa {
    pub fn new(fixtures: Arc<Fixtures>) -> Self {
        Self {
            fixtures,
            extractive: false,
        }
    }

    pub fn extractive(mut self, on: bool) -> Self {
        self.extractive = on;
        self
    }

    fn extract(&self, question: &str, context: &str) -> Option<String> {
        let body = question.strip_prefix("What is ")?.strip_suffix('?')?;
        let idx = body.find("'s ")?;
        let name = &body[..idx];
        let rest = &body[idx + 3..];
        let key = match rest.strip_prefix("relationship to ") {
            Some(other) => format!("{other}'s"),
            None => rest.to_string(),
        };
        interpret_text(context, Some(name), &self.fixtures)
            .into_iter()
            .find(|st| keys_match(&st.key, &key))
            .map(|st| st.value)
    }

    pub fn lookup(&self, question: &str, context: &str) -> QaResult {
        let q = question.to_string();
        let hit = self
            .fixtures
            .qa
            .get(&(q.clone(), context.to_string()))
            .or_else(|| self.fixtures.qa.get(&(q, String::new())));
        if let Some((answer, confidence)) = hit {
            return QaResult {
                answer: answer.clone(),
                confidence: *confidence,
            };
        }
        if self.extractive {
            if let Some(answer) = self.extract(question, context) {
                return QaResult {
                    answer,
                    confidence: 0.9,
                };
            }
        }
        QaResult::abstain()
    }
}

impl QuestionAnswerer for MockQa {
    fn answer(&self, question: &str, context: &str) -> BackendResult<QaResult> {
        Ok(self.lookup(question, context))
    }
}
