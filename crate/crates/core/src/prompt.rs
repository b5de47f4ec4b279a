//! Prompt templates and placeholder substitution.
//!
//! Templates are plain text resources under `prompts/` with `{name}`
//! placeholders. Substitution is a single left-to-right pass, so values that
//! themselves contain braces are inserted literally.

use crate::gateway::ChatRequest;

pub const EXTRACTION_SYSTEM: &str = include_str!("../prompts/extraction_system.txt");
pub const EXTRACTION_USER: &str = include_str!("../prompts/extraction_user.txt");
pub const GENERALIZE_SYSTEM: &str = include_str!("../prompts/generalize_system.txt");
pub const GENERALIZE_USER: &str = include_str!("../prompts/generalize_user.txt");
pub const CONSTRUCT_SYSTEM: &str = include_str!("../prompts/construct_system.txt");
pub const CONSTRUCT_USER: &str = include_str!("../prompts/construct_user.txt");
pub const REFINE_SYSTEM: &str = include_str!("../prompts/refine_system.txt");
pub const REFINE_USER: &str = include_str!("../prompts/refine_user.txt");
pub const CLASSIFY_SYSTEM: &str = include_str!("../prompts/classify_system.txt");
pub const CLASSIFY_USER: &str = include_str!("../prompts/classify_user.txt");

/// Re-sends `request` with a note naming the rule the previous reply broke.
pub fn with_correction(request: &ChatRequest, problem: &str) -> ChatRequest {
    let mut corrected = request.clone();
    corrected.user_prompt.push_str("\n\nYour previous response was rejected: ");
    corrected.user_prompt.push_str(problem);
    corrected
        .user_prompt
        .push_str(". Please answer again and follow the response format exactly.");
    corrected
}

/// Replaces `{key}` tokens whose key appears in `vars`. Other braces are kept.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let key_len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
            .count();
        let value = (key_len > 0 && after[key_len..].starts_with('}'))
            .then(|| vars.iter().find(|(k, _)| *k == &after[..key_len]))
            .flatten();
        match value {
            Some((_, v)) => {
                out.push_str(v);
                rest = &after[key_len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Placeholder names used by a template, in order of first appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let key_len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
            .count();
        if key_len > 0 && after[key_len..].starts_with('}') {
            let name = &after[..key_len];
            if !names.contains(&name) {
                names.push(name);
            }
        }
        rest = after;
    }
    names
}
