//! Turning paper text into construct records.
//!
//! The model is asked for eight labeled lines (`Construct:`, `Definition:`,
//! `Usage:`, `Point and Type of Measurement Items:`, `Measurement Items:`,
//! `Number of Measurement Items:`, `Title:`, `APA reference:`). Items come
//! back as `1. ... | 2. ...`. After parsing, items can be generalized by
//! replacing system-specific terms with [`EVALUATION_TARGET`].

use thiserror::Error;

use crate::corpus::{content_id, validate_record, ConstructId, ConstructRecord, RecordError, EVALUATION_TARGET};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::items::{parse_pipe_list, strip_enumerator};
use crate::prompt;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("model output has no `{0}` line")]
    MissingField(&'static str),
    #[error("model declared {declared} items but {parsed} were returned")]
    CountMismatch { declared: usize, parsed: usize },
    #[error("cannot read a scale point count from `{0}`")]
    BadPoint(String),
    #[error("cannot read an item count from `{0}`")]
    BadCount(String),
    #[error("extracted record is invalid: {0}")]
    Invalid(#[from] RecordError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionOutput {
    pub raw_text: String,
    /// Validated; `id` is left empty and assigned at ingestion.
    pub record: ConstructRecord,
}

const LABEL_CONSTRUCT: &str = "Construct:";
const LABEL_DEFINITION: &str = "Definition:";
const LABEL_USAGE: &str = "Usage:";
const LABEL_POINT: &str = "Point and Type of Measurement Items:";
const LABEL_ITEMS: &str = "Measurement Items:";
const LABEL_COUNT: &str = "Number of Measurement Items:";
const LABEL_TITLE: &str = "Title:";
const LABEL_APA: &str = "APA reference:";

const LABELS: [&str; 8] = [
    LABEL_CONSTRUCT,
    LABEL_DEFINITION,
    LABEL_USAGE,
    LABEL_POINT,
    LABEL_ITEMS,
    LABEL_COUNT,
    LABEL_TITLE,
    LABEL_APA,
];

pub fn build_extraction_request(
    paper_text: &str,
    construct_name: &str,
) -> Result<ChatRequest, ExtractionError> {
    if paper_text.trim().is_empty() {
        return Err(ExtractionError::EmptyInput("paper text"));
    }
    if construct_name.trim().is_empty() {
        return Err(ExtractionError::EmptyInput("construct name"));
    }
    let user = prompt::render(
        prompt::EXTRACTION_USER,
        &[
            ("construct_name", construct_name.trim()),
            ("paper_text", paper_text),
        ],
    );
    Ok(ChatRequest::new(prompt::EXTRACTION_SYSTEM, user))
}

/// Strips list bullets and markdown bold so `- **Title:** X` reads as `Title: X`.
fn clean_line(line: &str) -> String {
    let mut s = line.trim();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = s.strip_prefix(bullet) {
            s = rest.trim_start();
            break;
        }
    }
    if s.starts_with("**") {
        s.replacen("**", "", 2)
    } else {
        s.to_owned()
    }
}

fn match_label(line: &str) -> Option<(usize, &str)> {
    LABELS.iter().enumerate().find_map(|(i, label)| {
        let head = line.get(..label.len())?;
        head.eq_ignore_ascii_case(label)
            .then(|| (i, line[label.len()..].trim()))
    })
}

fn leading_integer(text: &str) -> Option<(u32, &str)> {
    let text = text.trim_start().trim_start_matches('[');
    let digits = text.bytes().take_while(u8::is_ascii_digit).count();
    let value = text[..digits].parse().ok()?;
    Some((value, text[digits..].trim_start_matches(']')))
}

/// `"7-point Likert Type"` -> `(7, "Likert Type")`. Only the first scale is
/// read when several are listed.
fn parse_point_and_type(value: &str) -> Result<(u32, String), ExtractionError> {
    let (points, rest) =
        leading_integer(value).ok_or_else(|| ExtractionError::BadPoint(value.to_owned()))?;
    let rest = rest.trim_start_matches(['-', ' ']);
    let rest = match rest.get(..5) {
        Some(word) if word.eq_ignore_ascii_case("point") => &rest[5..],
        _ => rest,
    };
    let rest = rest.trim_start_matches(['-', ' ', ',']);
    let end = rest
        .match_indices(',')
        .find(|(i, _)| rest[i + 1..].trim_start().starts_with(|c: char| c.is_ascii_digit() || c == '['))
        .map_or(rest.len(), |(i, _)| i);
    Ok((points, rest[..end].trim().to_owned()))
}

fn parse_items(value: &str) -> Vec<String> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .filter(|v| v.trim_start().starts_with(|c: char| c.is_ascii_digit()))
        .unwrap_or(value);
    parse_pipe_list(inner)
}

/// Parses the eight-line extraction format into an unvalidated record.
pub fn parse_extraction_output(text: &str) -> Result<ConstructRecord, ExtractionError> {
    let mut fields: [Option<String>; 8] = Default::default();
    let mut current: Option<usize> = None;
    for raw in text.lines() {
        let line = clean_line(raw);
        if line.is_empty() {
            continue;
        }
        if let Some((i, value)) = match_label(&line) {
            if fields[i].is_none() {
                fields[i] = Some(value.to_owned());
                current = Some(i);
            } else {
                current = None;
            }
        } else if let Some(i) = current {
            let field = fields[i].get_or_insert_with(String::new);
            if !field.is_empty() {
                field.push(' ');
            }
            field.push_str(&line);
        }
    }

    let mut take = |label: &'static str| {
        let i = LABELS.iter().position(|l| *l == label).expect("known label");
        fields[i]
            .take()
            .ok_or(ExtractionError::MissingField(label.trim_end_matches(':')))
    };
    let name = take(LABEL_CONSTRUCT)?;
    let definition = take(LABEL_DEFINITION)?;
    let usage = take(LABEL_USAGE)?;
    let point = take(LABEL_POINT)?;
    let items = take(LABEL_ITEMS)?;
    let count = take(LABEL_COUNT)?;
    let paper_title = take(LABEL_TITLE)?;
    let apa_reference = take(LABEL_APA)?;

    let (scale_points, scale_type) = parse_point_and_type(&point)?;
    let items = parse_items(&items);
    let declared = leading_integer(&count)
        .map(|(n, _)| n as usize)
        .ok_or_else(|| ExtractionError::BadCount(count.clone()))?;
    if declared != items.len() {
        return Err(ExtractionError::CountMismatch {
            declared,
            parsed: items.len(),
        });
    }

    Ok(ConstructRecord {
        id: ConstructId::default(),
        name,
        definition,
        usage,
        scale_points,
        scale_type,
        items,
        item_count: declared,
        paper_title,
        apa_reference,
    })
}

/// Writes a record in the extraction format; inverse of [`parse_extraction_output`].
pub fn render_extraction_output(record: &ConstructRecord) -> String {
    let items = record
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {}", i + 1, item))
        .collect::<Vec<_>>()
        .join(" | ");
    format!(
        "{LABEL_CONSTRUCT} {}\n{LABEL_DEFINITION} {}\n{LABEL_USAGE} {}\n{LABEL_POINT} {}\n{LABEL_ITEMS} {}\n{LABEL_COUNT} {}\n{LABEL_TITLE} {}\n{LABEL_APA} {}",
        record.name,
        record.definition,
        record.usage,
        record.scale_label(),
        items,
        record.items.len(),
        record.paper_title,
        record.apa_reference,
    )
}

pub fn build_generalization_request(items: &[String]) -> Result<ChatRequest, ExtractionError> {
    if items.is_empty() {
        return Err(ExtractionError::EmptyInput("item list"));
    }
    let numbered = items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {}", i + 1, item))
        .collect::<Vec<_>>()
        .join("\n");
    let user = prompt::render(prompt::GENERALIZE_USER, &[("items", &numbered)]);
    Ok(ChatRequest::new(prompt::GENERALIZE_SYSTEM, user))
}

/// Replaces system-specific terms in `items` with the placeholder.
///
/// The reply must contain exactly one item per input item. A wrong count is
/// retried once with a corrective note before failing.
pub async fn generalize_items(
    gateway: &Gateway,
    items: &[String],
) -> Result<Vec<String>, ExtractionError> {
    let request = build_generalization_request(items)?;
    let mut attempt = request.clone();
    let mut last = None;
    for _ in 0..2 {
        let reply = gateway.chat(&attempt).await?;
        let parsed: Vec<String> = parse_pipe_list(reply.trim())
            .into_iter()
            .map(|s| strip_enumerator(&s).to_owned())
            .collect();
        if parsed.len() == items.len() {
            return Ok(parsed);
        }
        tracing::warn!(expected = items.len(), got = parsed.len(), "generalization count mismatch");
        last = Some(parsed.len());
        attempt = prompt::with_correction(
            &request,
            &format!(
                "it listed {} items but exactly {} are required, one per input item, in the same order",
                parsed.len(),
                items.len()
            ),
        );
    }
    Err(ExtractionError::CountMismatch {
        declared: items.len(),
        parsed: last.unwrap_or(0),
    })
}

/// Runs one extraction end to end: request, parse, optional generalization,
/// validation. The record gets its content-derived id.
pub async fn extract_record(
    gateway: &Gateway,
    paper_text: &str,
    construct_name: &str,
    generalize: bool,
) -> Result<ExtractionOutput, ExtractionError> {
    let request = build_extraction_request(paper_text, construct_name)?;
    let raw_text = gateway.chat(&request).await?;
    let mut record = parse_extraction_output(&raw_text)?;
    if generalize {
        record.items = generalize_items(gateway, &record.items).await?;
    }
    let mut record = validate_record(record)?;
    record.id = content_id(&record);
    Ok(ExtractionOutput { raw_text, record })
}

/// True when an item still carries the generalization placeholder.
pub fn has_placeholder(item: &str) -> bool {
    item.contains(EVALUATION_TARGET)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptEntry, ScriptedChat};

    const SAMPLE: &str = "Construct: Trust\n\
Definition: Trust is the willingness to rely on the chatbot.\n\
Usage: The paper uses the questionnaire to evaluate users' trust regarding chatbots.\n\
Point and Type of Measurement Items: 7-point Likert Type\n\
Measurement Items: 1. A | 2. B\n\
Number of Measurement Items: 2\n\
Title: Trusting Machines\n\
APA reference: Doe, J. (2020). Trusting Machines. CHI.";

    #[test]
    fn request_contains_format_labels() {
        let req = build_extraction_request("<paper body>", "Trust").unwrap();
        assert!(req.system_prompt.contains("Point and Type of Measurement Items:"));
        for label in LABELS {
            assert!(req.system_prompt.contains(label), "{label}");
        }
        assert!(req.user_prompt.contains("<paper body>"));
        assert_eq!(req, build_extraction_request("<paper body>", "Trust").unwrap());
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(
            build_extraction_request("body", " "),
            Err(ExtractionError::EmptyInput("construct name"))
        ));
        assert!(matches!(
            build_extraction_request("", "Trust"),
            Err(ExtractionError::EmptyInput("paper text"))
        ));
    }

    #[test]
    fn parses_sample() {
        let r = parse_extraction_output(SAMPLE).unwrap();
        assert_eq!(r.scale_points, 7);
        assert_eq!(r.scale_type, "Likert Type");
        assert_eq!(r.items, vec!["A", "B"]);
        assert_eq!(r.item_count, 2);
        assert_eq!(r.paper_title, "Trusting Machines");
        assert!(r.id.is_empty());
    }

    #[test]
    fn tolerates_markdown_and_brackets() {
        let text = "- **Construct:** Trust\n- **Definition:** D\n- **Usage:** U\n  continues here\n\
- **Point and Type of Measurement Items:** [5]-point Semantic Type, 7-point Likert Type\n\
- **Measurement Items:** [1. A | 2. B | 3. C]\n- **Number of Measurement Items:** [3]\n\
- **Title:** T\n- **APA reference:** R";
        let r = parse_extraction_output(text).unwrap();
        assert_eq!(r.usage, "U continues here");
        assert_eq!(r.scale_points, 5);
        assert_eq!(r.scale_type, "Semantic Type");
        assert_eq!(r.items, vec!["A", "B", "C"]);
    }

    #[test]
    fn missing_title_reported() {
        let text = SAMPLE.replace("Title: Trusting Machines\n", "");
        assert!(matches!(
            parse_extraction_output(&text),
            Err(ExtractionError::MissingField("Title"))
        ));
    }

    #[test]
    fn declared_count_checked() {
        let text = SAMPLE.replace("Number of Measurement Items: 2", "Number of Measurement Items: 3");
        assert!(matches!(
            parse_extraction_output(&text),
            Err(ExtractionError::CountMismatch {
                declared: 3,
                parsed: 2
            })
        ));
    }

    #[test]
    fn point_needs_leading_integer() {
        let text = SAMPLE.replace("7-point Likert Type", "Likert Type");
        assert!(matches!(
            parse_extraction_output(&text),
            Err(ExtractionError::BadPoint(_))
        ));
    }

    #[test]
    fn render_then_parse_is_identity() {
        let r = parse_extraction_output(SAMPLE).unwrap();
        assert_eq!(render_extraction_output(&r), SAMPLE);
    }

    #[tokio::test]
    async fn generalization_retries_once_on_count_mismatch() {
        let chat = ScriptedChat::new([
            ScriptEntry::any("only one"),
            ScriptEntry::any("1. a [Evaluation Target] | 2. b"),
        ]);
        let gw = Gateway::stub(chat.clone(), 8);
        let out = generalize_items(&gw, &["a robot".into(), "b".into()]).await.unwrap();
        assert_eq!(out, vec!["a [Evaluation Target]", "b"]);
        let requests = chat.requests();
        assert_eq!(requests.len(), 2);
        assert!(requests[1].user_prompt.contains("exactly 2 are required"));
    }

    #[tokio::test]
    async fn generalization_fails_after_second_mismatch() {
        let chat = ScriptedChat::new([ScriptEntry::any("x"), ScriptEntry::any("x | y | z")]);
        let gw = Gateway::stub(chat, 8);
        assert!(matches!(
            generalize_items(&gw, &["a".into(), "b".into()]).await,
            Err(ExtractionError::CountMismatch {
                declared: 2,
                parsed: 3
            })
        ));
    }

    #[tokio::test]
    async fn extract_record_end_to_end() {
        let chat = ScriptedChat::new([
            ScriptEntry::when("Construct: Trust", SAMPLE),
            ScriptEntry::when("Please rewrite the above items", "A | B"),
        ]);
        let gw = Gateway::stub(chat, 8);
        let out = extract_record(&gw, "paper", "Trust", true).await.unwrap();
        assert_eq!(out.raw_text, SAMPLE);
        assert_eq!(out.record.items, vec!["A", "B"]);
    }
}
