use std::ops::Range;

use serde::Serialize;

/// A lowercased word token with its stem and position in the token stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub surface: String,
    pub stem: String,
    pub index: usize,
}

/// Tokenizes `text` into lowercased word tokens.
///
/// Any maximal run of characters that are not letters or digits separates
/// tokens, except a period sitting between two digits, so `5.5` stays whole.
pub fn tokenize(text: &str) -> Vec<Token> {
    token_spans(text)
        .into_iter()
        .enumerate()
        .map(|(index, span)| {
            let surface = text[span].to_lowercase();
            let stem = stem(&surface);
            Token {
                surface,
                stem,
                index,
            }
        })
        .collect()
}

/// Lowercased token surfaces only.
pub fn words(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|span| text[span].to_lowercase())
        .collect()
}

/// Byte ranges of each token in `text`, in order.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (pos, &(offset, ch)) in chars.iter().enumerate() {
        let word_char = ch.is_alphanumeric()
            || (ch == '.'
                && start.is_some()
                && pos > 0
                && chars[pos - 1].1.is_ascii_digit()
                && chars.get(pos + 1).is_some_and(|(_, c)| c.is_ascii_digit()));
        match (word_char, start) {
            (true, None) => start = Some(offset),
            (false, Some(s)) => {
                spans.push(s..offset);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Light suffix stripper used for stem-level matching.
///
/// Strips at most one suffix, checked in order: `ies` -> `y`, a plural `s`
/// (which also covers `es`, leaving the `e`), `ing`, then `ed`.
pub fn stem(token: &str) -> String {
    let w = token.to_lowercase();
    let n = w.chars().count();
    if n > 3 && w.ends_with("ies") {
        format!("{}y", &w[..w.len() - 3])
    } else if n > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w[..w.len() - 1].to_string()
    } else if n > 5 && w.ends_with("ing") {
        w[..w.len() - 3].to_string()
    } else if n > 4 && w.ends_with("ed") {
        w[..w.len() - 2].to_string()
    } else {
        w
    }
}

/// True for tokens like `5`, `12.5`.
pub fn is_number(token: &str) -> bool {
    !token.is_empty()
        && token.chars().all(|c| c.is_ascii_digit() || c == '.')
        && token.chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// One sentence with the whitespace that followed it in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    pub sep: String,
}

/// Sentence segmentation that remembers separators so the source can be rebuilt.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentences {
    pub lead: String,
    pub parts: Vec<Segment>,
}

impl Sentences {
    pub fn parse(text: &str) -> Self {
        let lead_len = text.len() - text.trim_start().len();
        let lead = text[..lead_len].to_string();
        let mut parts = Vec::new();
        let bytes: Vec<(usize, char)> = text.char_indices().collect();
        let mut start = lead_len;
        let mut pos = bytes.iter().position(|&(o, _)| o >= lead_len).unwrap_or(bytes.len());
        while pos < bytes.len() {
            let (offset, ch) = bytes[pos];
            let next = bytes.get(pos + 1).map(|&(_, c)| c);
            let terminal = matches!(ch, '.' | '!' | '?') && next.is_none_or(char::is_whitespace);
            if terminal {
                let end = offset + ch.len_utf8();
                let mut sep_end = end;
                let mut k = pos + 1;
                while k < bytes.len() && bytes[k].1.is_whitespace() {
                    sep_end = bytes[k].0 + bytes[k].1.len_utf8();
                    k += 1;
                }
                parts.push(Segment {
                    text: text[start..end].to_string(),
                    sep: text[end..sep_end].to_string(),
                });
                start = sep_end;
                pos = k;
            } else {
                pos += 1;
            }
        }
        if start < text.len() {
            let rest = &text[start..];
            let body = rest.trim_end();
            parts.push(Segment {
                text: body.to_string(),
                sep: rest[body.len()..].to_string(),
            });
        }
        Sentences { lead, parts }
    }

    pub fn join(&self) -> String {
        let mut out = self.lead.clone();
        for part in &self.parts {
            out.push_str(&part.text);
            out.push_str(&part.sep);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<String> {
    Sentences::parse(text)
        .parts
        .into_iter()
        .map(|s| s.text)
        .collect()
}
