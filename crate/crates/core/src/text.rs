//! Word-level tokenization with exact span bookkeeping.
//!
//! Words are runs of alphanumeric characters; every punctuation character is
//! its own token. The mask marker [`MASK_TOKEN`] is kept atomic so masked
//! prompts survive a tokenize/detokenize round trip. All masking, diffing and
//! substitution in the toolkit happens at this word level.

use crate::error::{Error, Result};

/// Marker token standing in for a masked word position.
pub const MASK_TOKEN: &str = "[MASK]";

/// Marker token separating the two fields of a text pair.
pub const SEP_TOKEN: &str = "[SEP]";

/// A tokenized string: word-level tokens plus the character span each token
/// occupies in the normalized source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
    /// Half-open char-index spans into the normalized source, one per token.
    /// Spans are non-overlapping and strictly increasing.
    pub spans: Vec<(usize, usize)>,
}

impl TokenizedText {
    /// Builds a token sequence with empty spans, for text assembled in token
    /// space (prompts, candidates) rather than parsed from a source string.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let spans = vec![(0, 0); tokens.len()];
        TokenizedText { tokens, spans }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Collapses whitespace runs to single spaces and trims the ends.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
        } else {
            out.push(ch);
            last_space = false;
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}

fn is_word_char(ch: char) -> bool {
    ch.is_alphanumeric()
}

/// Splits normalized text into word-level tokens.
///
/// Alphanumeric runs form one token each; any other non-space character is a
/// single-character token. The literal `[MASK]` and `[SEP]` markers are kept
/// whole.
pub fn tokenize(text: &str) -> Result<TokenizedText> {
    let normalized = normalize(text);
    if normalized.is_empty() {
        return Err(Error::EmptyInput);
    }

    let chars: Vec<char> = normalized.chars().collect();
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch == ' ' {
            i += 1;
            continue;
        }
        if ch == '[' {
            if let Some(marker) = [MASK_TOKEN, SEP_TOKEN]
                .into_iter()
                .find(|m| matches_marker(&chars, i, m))
            {
                tokens.push(marker.to_string());
                spans.push((i, i + marker.chars().count()));
                i += marker.chars().count();
                continue;
            }
        }
        if is_word_char(ch) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
            spans.push((start, i));
        } else {
            tokens.push(ch.to_string());
            spans.push((i, i + 1));
            i += 1;
        }
    }
    Ok(TokenizedText { tokens, spans })
}

fn matches_marker(chars: &[char], at: usize, marker: &str) -> bool {
    marker.chars().enumerate().all(|(k, m)| chars.get(at + k) == Some(&m))
}

/// Punctuation that attaches to the preceding token (no space before it).
fn attaches_left(tok: &str) -> bool {
    matches!(tok, "," | "." | "!" | "?" | ";" | ":" | "'" | ")" | "]" | "}" | "%")
}

/// Tokens that attach to the following token (no space after them).
fn attaches_right(tok: &str) -> bool {
    matches!(tok, "(" | "[" | "{")
}

/// Joins tokens back into text, reattaching punctuation.
///
/// Inverse of [`tokenize`] on normalized text: `detokenize(tokenize(s)) ==
/// normalize(s)` whenever `s` is already in the toolkit's canonical
/// punctuation layout (which every bundled corpus line is).
pub fn detokenize(tok: &TokenizedText) -> Result<String> {
    detokenize_tokens(&tok.tokens)
}

/// [`detokenize`] over a plain token slice.
pub fn detokenize_tokens(tokens: &[String]) -> Result<String> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && !attaches_left(tok) && !attaches_right(tokens[i - 1].as_str()) {
            out.push(' ');
        }
        out.push_str(tok);
    }
    Ok(out)
}

/// True for sentence-final stop marks.
pub fn is_stop_mark(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_trailing_period() {
        let tok = tokenize("A man is riding a motorcycle.").unwrap();
        assert_eq!(tok.tokens, ["A", "man", "is", "riding", "a", "motorcycle", "."]);
    }

    #[test]
    fn single_token() {
        let tok = tokenize("x").unwrap();
        assert_eq!(tok.tokens, ["x"]);
        assert_eq!(tok.spans, [(0, 1)]);
    }

    #[test]
    fn whitespace_only_is_empty_input() {
        assert!(matches!(tokenize("  \t\n "), Err(Error::EmptyInput)));
    }

    #[test]
    fn punctuation_is_its_own_token() {
        let tok = tokenize("good, movie").unwrap();
        assert_eq!(tok.tokens, ["good", ",", "movie"]);
        assert_eq!(detokenize(&tok).unwrap(), "good, movie");
    }

    #[test]
    fn detokenize_space_join() {
        let tok = TokenizedText::from_tokens(vec!["A".into(), "man".into()]);
        assert_eq!(detokenize(&tok).unwrap(), "A man");
    }

    #[test]
    fn detokenize_empty_errors() {
        let tok = TokenizedText::from_tokens(vec![]);
        assert!(matches!(detokenize(&tok), Err(Error::EmptyInput)));
    }

    #[test]
    fn normalization_collapses_whitespace() {
        assert_eq!(normalize("  a \t b\n\nc "), "a b c");
    }

    #[test]
    fn apostrophe_attaches_left() {
        let tok = tokenize("it' s hard to think").unwrap();
        assert_eq!(tok.tokens, ["it", "'", "s", "hard", "to", "think"]);
        assert_eq!(detokenize(&tok).unwrap(), "it' s hard to think");
    }

    #[test]
    fn mask_marker_stays_atomic() {
        let tok = tokenize("openness, [MASK] little surprises.").unwrap();
        assert_eq!(tok.tokens, ["openness", ",", MASK_TOKEN, "little", "surprises", "."]);
        assert_eq!(detokenize(&tok).unwrap(), "openness, [MASK] little surprises.");
    }

    #[test]
    fn spans_partition_non_whitespace() {
        let s = normalize("You watch for that sense of openness, the little surprises.");
        let tok = tokenize(&s).unwrap();
        let chars: Vec<char> = s.chars().collect();
        let mut covered = vec![false; chars.len()];
        for &(a, b) in &tok.spans {
            for c in a..b {
                assert!(!covered[c], "span overlap at {c}");
                covered[c] = true;
            }
        }
        for (i, &ch) in chars.iter().enumerate() {
            assert_eq!(covered[i], ch != ' ', "coverage mismatch at {i}");
        }
    }

    #[test]
    fn round_trip_on_canonical_text() {
        for s in [
            "The film is predictable in the reassuring manner of a beautifully sung holiday carol.",
            "Rates an for effort and a for boring, it' s hard to think of a better way to describe it.",
            "You watch for that sense of openness, the little surprises.",
        ] {
            let tok = tokenize(s).unwrap();
            assert_eq!(detokenize(&tok).unwrap(), normalize(s));
        }
    }
}
