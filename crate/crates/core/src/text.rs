//! Whitespace token counting and head-preserving truncation.

/// Counts tokens for corpus statistics and generated-review lengths.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Splits on Unicode whitespace. The default counter everywhere.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Result of [`truncate_head`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncated<'a> {
    pub text: &'a str,
    pub kept_tokens: usize,
    pub total_tokens: usize,
}

impl Truncated<'_> {
    pub fn was_truncated(&self) -> bool {
        self.kept_tokens < self.total_tokens
    }
}

/// Keeps the first `max_tokens` whitespace tokens of `text`, cutting right
/// after the last kept token so the original formatting of the head survives.
pub fn truncate_head(text: &str, max_tokens: usize) -> Truncated<'_> {
    let mut kept = 0usize;
    let mut end = 0usize;
    let mut total = 0usize;
    let mut in_token = false;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_token {
                in_token = false;
                if total <= max_tokens {
                    end = idx;
                }
            }
        } else if !in_token {
            in_token = true;
            total += 1;
            if total <= max_tokens {
                kept = total;
            }
        }
    }
    if in_token && total <= max_tokens {
        end = text.len();
    }
    if total <= max_tokens {
        return Truncated {
            text,
            kept_tokens: total,
            total_tokens: total,
        };
    }
    Truncated {
        text: &text[..end],
        kept_tokens: kept,
        total_tokens: total,
    }
}
