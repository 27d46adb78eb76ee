/// Backend-owned token accounting. Budgets anywhere in the engine are
/// measured in the units of whichever tokenizer the run uses.
pub trait Tokenizer: Send + Sync {
    fn count_tokens(&self, text: &str) -> usize;

    /// Keeps the trailing part of `text` so that the result fits in
    /// `budget` tokens.
    fn truncate_left(&self, text: &str, budget: usize) -> String;
}

/// Whitespace-delimited words count as tokens. Truncation keeps the
/// original spacing of the retained suffix.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate_left(&self, text: &str, budget: usize) -> String {
        let total = self.count_tokens(text);
        if total <= budget {
            return text.to_string();
        }
        if budget == 0 {
            return String::new();
        }
        let skip = total - budget;
        let mut seen = 0;
        let mut in_word = false;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                in_word = false;
            } else if !in_word {
                in_word = true;
                if seen == skip {
                    return text[i..].to_string();
                }
                seen += 1;
            }
        }
        String::new()
    }
}
