//! Prompt templates with `{name}` placeholders.
//!
//! Defaults are compiled in from `templates/*.txt`; a directory of
//! same-named files can override any subset of them.

use std::path::Path;

use serde::{Deserialize, Serialize};

macro_rules! templates {
    ($($field:ident),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
        pub struct Templates {
            $(pub $field: String,)*
        }

        impl Default for Templates {
            fn default() -> Self {
                Self {
                    $($field: include_str!(concat!("../templates/", stringify!($field), ".txt")).to_string(),)*
                }
            }
        }

        impl Templates {
            /// Replaces every template for which `dir/<name>.txt` exists.
            pub fn with_overrides(mut self, dir: &Path) -> std::io::Result<Self> {
                $(
                    let p = dir.join(concat!(stringify!($field), ".txt"));
                    if p.is_file() {
                        self.$field = std::fs::read_to_string(&p)?;
                    }
                )*
                Ok(self)
            }
        }
    };
}

templates!(
    premise,
    setting,
    character_name,
    character_entry,
    character_description,
    outline,
    outline_expand,
    summary,
    entity_description,
    facts,
    attribute_keys,
    attribute_value,
    relation,
    qa_attribute,
    qa_relation,
    edit_instruction,
);

/// Substitutes `{key}` placeholders. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
