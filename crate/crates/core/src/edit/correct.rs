use serde::{Deserialize, Serialize};

use crate::templates::render;

use super::{ContradictionFlag, Editor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub text: String,
    pub resolved: bool,
    pub attempts: u32,
}

impl Editor {
    pub fn edit_instruction(&self, flag: &ContradictionFlag) -> String {
        render(
            &self.templates.edit_instruction,
            &[("fact", &flag.old.source_fact.text)],
        )
    }

    /// Asks the edit backend to restore the standing fact. An edit that
    /// changes nothing, or grows the passage past the length limit, is
    /// rejected and retried; when every attempt fails the passage comes
    /// back unchanged.
    pub fn correct(&self, passage: &str, flag: &ContradictionFlag) -> Correction {
        let instruction = self.edit_instruction(flag);
        let limit = self.backends.count_tokens(passage) as f64 * self.cfg.max_length_ratio;
        let mut attempts = 0;
        while attempts < self.cfg.correction_attempts {
            attempts += 1;
            let out = match self.backends.edit(passage, &instruction) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("edit call failed: {e}");
                    continue;
                }
            };
            if out.trim() == passage.trim() {
                log::debug!("edit attempt {attempts} made no change");
                continue;
            }
            if self.backends.count_tokens(&out) as f64 > limit {
                log::debug!("edit attempt {attempts} too long");
                continue;
            }
            return Correction {
                text: out,
                resolved: true,
                attempts,
            };
        }
        log::warn!("unresolved contradiction on {}/{}", flag.character, flag.key);
        Correction {
            text: passage.to_string(),
            resolved: false,
            attempts,
        }
    }
}
