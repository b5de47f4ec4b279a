//! Custom-construct generation, item refinement and item classification.
//!
//! Each step renders a fixed prompt template, asks for a JSON reply and
//! validates it. Plain-text replies in the numbered "Response format" of the
//! prompts are accepted as a fallback. A reply that fails validation is
//! retried once with a note naming the broken rule; a second failure is
//! returned to the caller.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{ConstructId, ConstructRecord, EVALUATION_TARGET};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::items::{is_reverse_coded, normalize_for_match, strip_enumerator};
use crate::prompt;
use crate::recommend::{BriefError, ProjectBrief};

pub use crate::items::{parse_pipe_list, REVERSE_MARKER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomConstruct {
    pub name: String,
    pub definition: String,
    pub scale_points: u32,
    pub scale_type: String,
}

impl CustomConstruct {
    pub fn scale_label(&self) -> String {
        format!("{}-point {}", self.scale_points, self.scale_type)
    }
}

/// An item from a selected construct, before refinement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PooledItem {
    pub text: String,
    pub source_construct_id: ConstructId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedItem {
    pub text: String,
    /// True iff `text` ends with [`REVERSE_MARKER`].
    pub reverse_coded: bool,
    pub source_construct_id: ConstructId,
}

impl RefinedItem {
    pub fn new(text: impl Into<String>, source_construct_id: ConstructId) -> Self {
        let text = text.into().trim().to_owned();
        Self {
            reverse_coded: is_reverse_coded(&text),
            text,
            source_construct_id,
        }
    }
}

/// Appropriate/inappropriate split of the refined items.
///
/// Indices refer to positions in the refined list; both lists keep that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemClassification {
    pub appropriate: Vec<RefinedItem>,
    pub inappropriate: Vec<RefinedItem>,
    pub rationale: String,
    pub appropriate_indices: Vec<usize>,
    pub inappropriate_indices: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("classified item `{0}` does not match any remaining refined item")]
    Unmatched(String),
    #[error("refined items missing from the classification: {0:?}")]
    Missing(Vec<String>),
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Brief(#[from] BriefError),
    #[error("no constructs selected")]
    EmptySelection,
    #[error("no items to process")]
    EmptyItems,
    #[error("unparseable model reply: {0}")]
    Parse(String),
    #[error("custom construct point `{0}` is not an integer of at least 2")]
    BadPoint(String),
    #[error("expected {expected} refined items, model returned {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("refined item {index} still contains the placeholder: `{text}`")]
    PlaceholderLeak { index: usize, text: String },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl SynthesisError {
    fn is_reply_problem(&self) -> bool {
        matches!(
            self,
            SynthesisError::Parse(_)
                | SynthesisError::BadPoint(_)
                | SynthesisError::CountMismatch { .. }
                | SynthesisError::PlaceholderLeak { .. }
                | SynthesisError::Partition(_)
        )
    }
}

pub fn construct_schema() -> Value {
    json!({
        "type": "OBJECT",
        "properties": {
            "name": { "type": "STRING" },
            "definition": { "type": "STRING" },
            "point": { "type": "INTEGER" },
            "type": { "type": "STRING" }
        },
        "required": ["name", "definition", "point", "type"]
    })
}

pub fn refine_schema() -> Value {
    json!({
        "type": "OBJECT",
        "properties": {
            "items": { "type": "ARRAY", "items": { "type": "STRING" } }
        },
        "required": ["items"]
    })
}

pub fn classify_schema() -> Value {
    json!({
        "type": "OBJECT",
        "properties": {
            "appropriate_items": { "type": "ARRAY", "items": { "type": "STRING" } },
            "inappropriate_items": { "type": "ARRAY", "items": { "type": "STRING" } },
            "rationale": { "type": "STRING" }
        },
        "required": ["appropriate_items", "inappropriate_items", "rationale"]
    })
}

fn json_list<T: Serialize>(values: impl IntoIterator<Item = T>) -> String {
    let parts: Vec<String> = values
        .into_iter()
        .map(|v| serde_json::to_string(&v).expect("plain values serialize"))
        .collect();
    format!("[{}]", parts.join(", "))
}

pub fn build_construct_prompt(
    brief: &ProjectBrief,
    selected: &[ConstructRecord],
) -> Result<ChatRequest, SynthesisError> {
    let brief = brief.normalized()?;
    if selected.is_empty() {
        return Err(SynthesisError::EmptySelection);
    }
    let names = json_list(selected.iter().map(|r| &r.name));
    let definitions = json_list(selected.iter().map(|r| &r.definition));
    let points = json_list(selected.iter().map(|r| r.scale_points));
    let types = json_list(selected.iter().map(|r| &r.scale_type));
    let user = prompt::render(
        prompt::CONSTRUCT_USER,
        &[
            ("system_description", &brief.system_description),
            ("evaluation_purpose", &brief.evaluation_purpose),
            ("interactive_feature", &brief.interactive_feature),
            ("core_user_experience", &brief.core_user_experience),
            ("construct_names", &names),
            ("construct_definitions", &definitions),
            ("construct_points", &points),
            ("construct_types", &types),
        ],
    );
    Ok(ChatRequest::new(prompt::CONSTRUCT_SYSTEM, user).with_schema(construct_schema()))
}

fn context_vars<'a>(
    brief: &'a ProjectBrief,
    custom: &'a CustomConstruct,
    items: &'a str,
) -> [(&'static str, &'a str); 7] {
    [
        ("system_description", &brief.system_description),
        ("evaluation_purpose", &brief.evaluation_purpose),
        ("interactive_feature", &brief.interactive_feature),
        ("core_user_experience", &brief.core_user_experience),
        ("construct_name", &custom.name),
        ("construct_definition", &custom.definition),
        ("items", items),
    ]
}

pub fn build_refine_prompt(
    brief: &ProjectBrief,
    custom: &CustomConstruct,
    pooled: &[PooledItem],
) -> Result<ChatRequest, SynthesisError> {
    let brief = brief.normalized()?;
    if pooled.is_empty() {
        return Err(SynthesisError::EmptyItems);
    }
    let items = pooled.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join(" | ");
    let user = prompt::render(prompt::REFINE_USER, &context_vars(&brief, custom, &items));
    Ok(ChatRequest::new(prompt::REFINE_SYSTEM, user).with_schema(refine_schema()))
}

pub fn build_classify_prompt(
    brief: &ProjectBrief,
    custom: &CustomConstruct,
    refined: &[RefinedItem],
) -> Result<ChatRequest, SynthesisError> {
    let brief = brief.normalized()?;
    if refined.is_empty() {
        return Err(SynthesisError::EmptyItems);
    }
    let items = refined.iter().map(|r| r.text.as_str()).collect::<Vec<_>>().join(" | ");
    let user = prompt::render(prompt::CLASSIFY_USER, &context_vars(&brief, custom, &items));
    Ok(ChatRequest::new(prompt::CLASSIFY_SYSTEM, user).with_schema(classify_schema()))
}

/// Union of the selected constructs' items in source order, deduplicated by
/// normalized text (first occurrence wins).
pub fn pool_items(selected: &[ConstructRecord]) -> Vec<PooledItem> {
    let mut seen = HashSet::new();
    selected
        .iter()
        .flat_map(|r| r.items.iter().map(move |item| (item, &r.id)))
        .filter(|(item, _)| seen.insert(normalize_for_match(item)))
        .map(|(item, id)| PooledItem {
            text: item.clone(),
            source_construct_id: id.clone(),
        })
        .collect()
}

/// Finds a JSON object in a reply, tolerating code fences and surrounding prose.
fn json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let trimmed = text.trim();
    if let Ok(Value::Object(map)) = serde_json::from_str(trimmed) {
        return Some(map);
    }
    let start = trimmed.find('{')?;
    let end = trimmed.rfind('}')?;
    match serde_json::from_str(trimmed.get(start..=end)?) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

fn coerce_point(value: &Value) -> Result<u32, SynthesisError> {
    let n = match value {
        Value::Number(n) => n
            .as_u64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64)),
        Value::String(s) => s.trim().parse::<u64>().ok(),
        _ => None,
    };
    match n {
        Some(n) if (2..=u64::from(u32::MAX)).contains(&n) => Ok(n as u32),
        _ => Err(SynthesisError::BadPoint(match value {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })),
    }
}

/// Reads the label-prefixed value of a numbered plain-text reply line.
fn labeled<'a>(line: &'a str, labels: &[&str]) -> Option<&'a str> {
    let line = strip_enumerator(line.trim());
    labels.iter().find_map(|label| {
        let head = line.get(..label.len())?;
        head.eq_ignore_ascii_case(label).then(|| line[label.len()..].trim())
    })
}

pub fn parse_custom_construct(text: &str) -> Result<CustomConstruct, SynthesisError> {
    let (name, definition, point, scale_type) = if let Some(map) = json_object(text) {
        let get_str = |key: &str| {
            map.get(key)
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
        };
        (
            get_str("name"),
            get_str("definition"),
            map.get("point").cloned(),
            get_str("type"),
        )
    } else {
        let mut fields: [Option<String>; 4] = Default::default();
        let labels: [&[&str]; 4] = [
            &["Custom construct name:"],
            &["Custom construct definition:"],
            &["Custom construct point (scale):", "Custom construct point:"],
            &["Custom construct type (scale type):", "Custom construct type:"],
        ];
        for line in text.lines() {
            for (slot, options) in fields.iter_mut().zip(labels) {
                if let Some(v) = labeled(line, options) {
                    if !v.is_empty() {
                        slot.get_or_insert_with(|| v.to_owned());
                    }
                }
            }
        }
        let [name, definition, point, scale_type] = fields;
        (name, definition, point.map(Value::String), scale_type)
    };
    let missing = |field: &str| SynthesisError::Parse(format!("custom construct reply has no {field}"));
    let name = name.ok_or_else(|| missing("name"))?;
    let definition = definition.ok_or_else(|| missing("definition"))?;
    let point = point.ok_or_else(|| missing("point"))?;
    let scale_type = scale_type.ok_or_else(|| missing("type"))?;
    Ok(CustomConstruct {
        name,
        definition,
        scale_points: coerce_point(&point)?,
        scale_type,
    })
}

/// Item list from a refinement reply: `{"items": [...]}`, a `|` list, or one
/// item per line.
pub fn parse_item_list(text: &str) -> Result<Vec<String>, SynthesisError> {
    if let Some(map) = json_object(text) {
        let items = map
            .get("items")
            .and_then(Value::as_array)
            .ok_or_else(|| SynthesisError::Parse("reply has no `items` array".into()))?;
        return items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(|s| s.trim().to_owned())
                    .ok_or_else(|| SynthesisError::Parse("non-string entry in `items`".into()))
            })
            .filter(|r| r.as_ref().map_or(true, |s| !s.is_empty()))
            .collect();
    }
    if text.contains('|') {
        return Ok(parse_pipe_list(text));
    }
    Ok(text
        .lines()
        .map(|l| strip_enumerator(l.trim().trim_start_matches(['-', '*']).trim()).trim())
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawClassification {
    pub appropriate: Vec<String>,
    pub inappropriate: Vec<String>,
    pub rationale: String,
}

fn none_marker(s: &str) -> bool {
    let s = s.trim().trim_end_matches('.').to_ascii_lowercase();
    matches!(s.as_str(), "" | "none" | "n/a" | "-" | "no items")
}

fn string_array(map: &serde_json::Map<String, Value>, key: &str) -> Result<Vec<String>, SynthesisError> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(values)) => values
            .iter()
            .map(|v| {
                v.as_str()
                    .map(|s| s.trim().to_owned())
                    .ok_or_else(|| SynthesisError::Parse(format!("non-string entry in `{key}`")))
            })
            .collect(),
        Some(Value::String(s)) if none_marker(s) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(parse_pipe_list(s)),
        Some(_) => Err(SynthesisError::Parse(format!("`{key}` is not a list"))),
    }
}

pub fn parse_classification(text: &str) -> Result<RawClassification, SynthesisError> {
    if let Some(map) = json_object(text) {
        if !map.contains_key("appropriate_items") && !map.contains_key("inappropriate_items") {
            return Err(SynthesisError::Parse("reply has no item lists".into()));
        }
        return Ok(RawClassification {
            appropriate: string_array(&map, "appropriate_items")?,
            inappropriate: string_array(&map, "inappropriate_items")?,
            rationale: map
                .get("rationale")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .trim()
                .to_owned(),
        });
    }

    let mut appropriate = None;
    let mut inappropriate = None;
    let mut rationale: Option<String> = None;
    for line in text.lines() {
        if let Some(v) = labeled(line, &["Inappropriate items:"]) {
            inappropriate = Some(v.to_owned());
        } else if let Some(v) = labeled(line, &["Appropriate items:"]) {
            appropriate = Some(v.to_owned());
        } else if let Some(v) = labeled(line, &["Rationale for selection:", "Rationale:"]) {
            rationale = Some(v.to_owned());
        } else if let Some(r) = rationale.as_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                if !r.is_empty() {
                    r.push(' ');
                }
                r.push_str(extra);
            }
        }
    }
    if appropriate.is_none() && inappropriate.is_none() {
        return Err(SynthesisError::Parse("reply has no item lists".into()));
    }
    let list = |v: Option<String>| match v {
        Some(s) if !none_marker(&s) => parse_pipe_list(&s),
        _ => Vec::new(),
    };
    Ok(RawClassification {
        appropriate: list(appropriate),
        inappropriate: list(inappropriate),
        rationale: rationale.unwrap_or_default(),
    })
}

/// Maps the model's two lists back onto `refined`, requiring every refined
/// item to be claimed exactly once.
pub fn partition(
    refined: &[RefinedItem],
    raw: RawClassification,
) -> Result<ItemClassification, PartitionError> {
    let keys: Vec<String> = refined.iter().map(|r| normalize_for_match(&r.text)).collect();
    let mut taken = vec![false; refined.len()];
    let mut claim = |texts: &[String]| -> Result<Vec<usize>, PartitionError> {
        let mut indices = Vec::with_capacity(texts.len());
        for text in texts {
            let key = normalize_for_match(text);
            let pos = (0..keys.len())
                .find(|&i| !taken[i] && keys[i] == key)
                .ok_or_else(|| PartitionError::Unmatched(text.clone()))?;
            taken[pos] = true;
            indices.push(pos);
        }
        indices.sort_unstable();
        Ok(indices)
    };
    let appropriate_indices = claim(&raw.appropriate)?;
    let inappropriate_indices = claim(&raw.inappropriate)?;
    let missing: Vec<String> = taken
        .iter()
        .zip(refined)
        .filter(|(t, _)| !**t)
        .map(|(_, r)| r.text.clone())
        .collect();
    if !missing.is_empty() {
        return Err(PartitionError::Missing(missing));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| refined[i].clone()).collect();
    Ok(ItemClassification {
        appropriate: pick(&appropriate_indices),
        inappropriate: pick(&inappropriate_indices),
        rationale: raw.rationale,
        appropriate_indices,
        inappropriate_indices,
    })
}

/// Sends `request`, validates the reply with `check`, and retries once with a
/// corrective note if validation fails.
async fn ask_validated<T>(
    gateway: &Gateway,
    request: &ChatRequest,
    check: impl Fn(&str) -> Result<T, SynthesisError>,
) -> Result<T, SynthesisError> {
    let reply = gateway.chat(request).await?;
    match check(&reply) {
        Ok(v) => Ok(v),
        Err(err) if err.is_reply_problem() => {
            tracing::warn!(error = %err, "model reply rejected, retrying once");
            let corrected = prompt::with_correction(request, &err.to_string());
            let reply = gateway.chat(&corrected).await?;
            check(&reply)
        }
        Err(err) => Err(err),
    }
}

pub async fn generate_custom_construct(
    gateway: &Gateway,
    brief: &ProjectBrief,
    selected: &[ConstructRecord],
) -> Result<CustomConstruct, SynthesisError> {
    let request = build_construct_prompt(brief, selected)?;
    ask_validated(gateway, &request, parse_custom_construct).await
}

/// Refines pooled items for the project context. Output position `i`
/// corresponds to input position `i`.
pub async fn refine_items(
    gateway: &Gateway,
    brief: &ProjectBrief,
    custom: &CustomConstruct,
    pooled: &[PooledItem],
) -> Result<Vec<RefinedItem>, SynthesisError> {
    let request = build_refine_prompt(brief, custom, pooled)?;
    ask_validated(gateway, &request, |reply| {
        let texts = parse_item_list(reply)?;
        if texts.len() != pooled.len() {
            return Err(SynthesisError::CountMismatch {
                expected: pooled.len(),
                got: texts.len(),
            });
        }
        if let Some((index, text)) = texts.iter().enumerate().find(|(_, t)| t.contains(EVALUATION_TARGET)) {
            return Err(SynthesisError::PlaceholderLeak {
                index,
                text: text.clone(),
            });
        }
        Ok(texts
            .into_iter()
            .zip(pooled)
            .map(|(text, source)| RefinedItem::new(text, source.source_construct_id.clone()))
            .collect())
    })
    .await
}

pub async fn classify_items(
    gateway: &Gateway,
    brief: &ProjectBrief,
    custom: &CustomConstruct,
    refined: &[RefinedItem],
) -> Result<ItemClassification, SynthesisError> {
    let request = build_classify_prompt(brief, custom, refined)?;
    ask_validated(gateway, &request, |reply| {
        Ok(partition(refined, parse_classification(reply)?)?)
    })
    .await
}
