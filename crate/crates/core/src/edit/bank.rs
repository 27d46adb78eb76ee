use std::path::Path;

/// One handwritten key-extraction example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub name: String,
    pub context: String,
    pub statements: Vec<String>,
}

impl Example {
    /// The example as it appears in a few-shot prompt, closed by the block
    /// separator.
    pub fn render(&self) -> String {
        format!(
            "Context ({}): {}\n{}\n----\n",
            self.name,
            self.context,
            self.statements.join("\n")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBank {
    pub examples: Vec<Example>,
}

impl Default for ExampleBank {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ExampleBank {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/attribute_examples.txt"))
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// Blocks separated by `----` lines; `#` lines are comments. A block
    /// whose first line is not `Context (Name): text` is skipped.
    pub fn parse(src: &str) -> Self {
        let mut examples = Vec::new();
        let lines: Vec<&str> = src.lines().filter(|l| !l.starts_with('#')).collect();
        for block in lines.split(|l| l.trim() == "----") {
            let mut it = block.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
            let Some(head) = it.next() else { continue };
            let Some(rest) = head.strip_prefix("Context (") else {
                continue;
            };
            let Some((name, context)) = rest.split_once("): ") else {
                continue;
            };
            examples.push(Example {
                name: name.to_string(),
                context: context.to_string(),
                statements: it.map(str::to_string).collect(),
            });
        }
        Self { examples }
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}
