use serde::{Deserialize, Serialize};

/// Characters that always form a token of their own.
pub const PUNCT: &[char] = &['{', '}', '[', ']', ',', ';'];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offsets `(start, end)` into the original utterance.
    pub span: (usize, usize),
}

/// Splits on whitespace and isolates `{ } [ ] , ;`, lowercasing every token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let flush = |out: &mut Vec<Token>, s: usize, e: usize| {
        if e > s {
            out.push(Token {
                text: text[s..e].to_lowercase(),
                span: (s, e),
            });
        }
    };
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                flush(&mut out, s, i);
            }
        } else if PUNCT.contains(&ch) {
            if let Some(s) = start.take() {
                flush(&mut out, s, i);
            }
            flush(&mut out, i, i + ch.len_utf8());
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        flush(&mut out, s, text.len());
    }
    out
}

/// Token texts only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Joins tokens with the canonical punctuation spacing used by the pretty printer.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for tok in tokens {
        let t = tok.as_ref();
        let glue = match prev {
            None => false,
            Some(p) => matches!(p, "[" | "{") || matches!(t, ";" | "," | "]" | "}"),
        };
        if prev.is_some() && !glue {
            out.push(' ');
        }
        out.push_str(t);
        prev = Some(t);
    }
    out
}
