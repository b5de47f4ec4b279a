//! Measurement-item text helpers shared by extraction and synthesis.

/// Suffix the refinement prompt asks the model to append to reverse-coded items.
pub const REVERSE_MARKER: &str = "(R, reverse)";

/// Splits a `|`-separated list, trimming each segment, dropping empty ones and
/// removing a leading `N.` enumerator.
pub fn parse_pipe_list(text: &str) -> Vec<String> {
    text.split('|')
        .map(|seg| strip_enumerator(seg.trim()).trim())
        .filter(|seg| !seg.is_empty())
        .map(str::to_owned)
        .collect()
}

/// `"3. I like it."` -> `"I like it."`; anything else is returned as is.
pub fn strip_enumerator(text: &str) -> &str {
    let digits = text.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return text;
    }
    let rest = &text[digits..];
    match rest.strip_prefix('.') {
        Some(after) if after.is_empty() || after.starts_with(char::is_whitespace) => after.trim_start(),
        _ => text,
    }
}

pub fn is_reverse_coded(text: &str) -> bool {
    text.trim_end().ends_with(REVERSE_MARKER)
}

/// Key used to match item texts the model echoes back against the originals.
///
/// Lowercases, collapses whitespace, and strips trailing punctuation and the
/// reverse marker. Idempotent.
pub fn normalize_for_match(text: &str) -> String {
    let mut s = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let marker = REVERSE_MARKER.to_lowercase();
    loop {
        let before = s.len();
        if let Some(stripped) = s.strip_suffix(marker.as_str()) {
            s.truncate(stripped.len());
        }
        let kept = s
            .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?' | ',' | ';' | ':'))
            .len();
        s.truncate(kept);
        if s.len() == before {
            return s;
        }
    }
}
