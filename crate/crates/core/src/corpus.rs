//! Construct records, their validation rules and the on-disk corpus format.
//!
//! A corpus file is UTF-8 JSON:
//!
//! ```json
//! { "version": 1, "records": [ { "id": "...", "name": "Trust", ... } ] }
//! ```
//!
//! Records with an empty `id` get a content-derived id at load time so that
//! re-ingesting the same file yields the same ids.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Placeholder substituted for system-specific terms in generalized items.
pub const EVALUATION_TARGET: &str = "[Evaluation Target]";

/// Corpus file versions this loader understands.
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstructId(String);

impl ConstructId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ConstructId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConstructId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// One construct as reported by one paper.
///
/// The same construct name collected from two papers is two records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructRecord {
    #[serde(default)]
    pub id: ConstructId,
    pub name: String,
    pub definition: String,
    pub usage: String,
    pub scale_points: u32,
    pub scale_type: String,
    pub items: Vec<String>,
    pub item_count: usize,
    pub paper_title: String,
    pub apa_reference: String,
}

impl ConstructRecord {
    /// "7-point Likert Type"
    pub fn scale_label(&self) -> String {
        format!("{}-point {}", self.scale_points, self.scale_type)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("item_count is {declared} but {actual} items are listed")]
    CountMismatch { declared: usize, actual: usize },
    #[error("field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("scale must have at least 2 points, got {0}")]
    BadScale(u32),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported corpus version {0} (expected {CORPUS_VERSION})")]
    UnsupportedVersion(u32),
    #[error("duplicate construct id `{0}`")]
    DuplicateId(ConstructId),
    #[error("record {index}: {source}")]
    InvalidRecord {
        index: usize,
        #[source]
        source: RecordError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub version: u32,
    pub records: Vec<ConstructRecord>,
}

impl CorpusFile {
    pub fn new(records: Vec<ConstructRecord>) -> Self {
        Self {
            version: CORPUS_VERSION,
            records,
        }
    }
}

/// Trims every text field and checks the record invariants.
pub fn validate_record(mut record: ConstructRecord) -> Result<ConstructRecord, RecordError> {
    trim_in_place(&mut record.name);
    trim_in_place(&mut record.definition);
    trim_in_place(&mut record.usage);
    trim_in_place(&mut record.scale_type);
    trim_in_place(&mut record.paper_title);
    trim_in_place(&mut record.apa_reference);
    record.items.iter_mut().for_each(trim_in_place);

    if record.name.is_empty() {
        return Err(RecordError::EmptyField("name"));
    }
    if record.definition.is_empty() {
        return Err(RecordError::EmptyField("definition"));
    }
    if record.paper_title.is_empty() {
        return Err(RecordError::EmptyField("paper_title"));
    }
    if record.items.is_empty() {
        return Err(RecordError::EmptyField("items"));
    }
    if record.items.iter().any(String::is_empty) {
        return Err(RecordError::EmptyField("items"));
    }
    if record.item_count != record.items.len() {
        return Err(RecordError::CountMismatch {
            declared: record.item_count,
            actual: record.items.len(),
        });
    }
    if record.scale_points < 2 {
        return Err(RecordError::BadScale(record.scale_points));
    }
    Ok(record)
}

fn trim_in_place(s: &mut String) {
    let trimmed = s.trim();
    if trimmed.len() != s.len() {
        *s = trimmed.to_owned();
    }
}

/// Content-derived id: hex prefix of SHA-256 over title, name and items.
pub fn content_id(record: &ConstructRecord) -> ConstructId {
    let mut hasher = Sha256::new();
    hasher.update(record.paper_title.as_bytes());
    hasher.update([0u8]);
    hasher.update(record.name.as_bytes());
    for item in &record.items {
        hasher.update([0u8]);
        hasher.update(item.as_bytes());
    }
    let digest = hasher.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    ConstructId(format!("c-{hex}"))
}

/// Parses and validates a corpus file. Record order is preserved.
pub fn load_corpus<R: Read>(source: R) -> Result<Vec<ConstructRecord>, CorpusError> {
    let file: CorpusFile = serde_json::from_reader(source)?;
    if file.version != CORPUS_VERSION {
        return Err(CorpusError::UnsupportedVersion(file.version));
    }
    let mut seen = HashSet::with_capacity(file.records.len());
    let mut records = Vec::with_capacity(file.records.len());
    for (index, record) in file.records.into_iter().enumerate() {
        let mut record =
            validate_record(record).map_err(|source| CorpusError::InvalidRecord { index, source })?;
        if record.id.as_str().trim().is_empty() {
            record.id = content_id(&record);
        }
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_corpus<W: Write>(sink: W, records: &[ConstructRecord]) -> Result<(), CorpusError> {
    let file = CorpusFile::new(records.to_vec());
    serde_json::to_writer_pretty(sink, &file)?;
    Ok(())
}

/// The text that gets embedded for a record.
///
/// Depends only on name, definition, usage and items.
pub fn canonical_embedding_document(record: &ConstructRecord) -> String {
    let mut doc = format!(
        "Construct: {}\nDefinition: {}\nUsage: {}\nItems:",
        record.name, record.definition, record.usage
    );
    for item in &record.items {
        doc.push('\n');
        doc.push_str(item);
    }
    doc
}

/// Read-only lookup of records by id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    records: BTreeMap<ConstructId, ConstructRecord>,
}

impl Catalog {
    pub fn new(records: impl IntoIterator<Item = ConstructRecord>) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for record in records {
            let id = record.id.clone();
            if map.insert(id.clone(), record).is_some() {
                return Err(CorpusError::DuplicateId(id));
            }
        }
        Ok(Self { records: map })
    }

    pub fn get(&self, id: &ConstructId) -> Option<&ConstructRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ConstructRecord> {
        self.records.values()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn record(name: &str, title: &str, items: &[&str]) -> ConstructRecord {
        ConstructRecord {
            id: ConstructId::default(),
            name: name.into(),
            definition: format!("{name} is a construct."),
            usage: format!("The paper uses the questionnaire to evaluate users' {name}."),
            scale_points: 7,
            scale_type: "Likert Type".into(),
            items: items.iter().map(|s| s.to_string()).collect(),
            item_count: items.len(),
            paper_title: title.into(),
            apa_reference: format!("Author, A. (2020). {title}. Journal, 1(1), 1-10."),
        }
    }

    #[test]
    fn accepts_matching_count() {
        let r = record("Trust", "Paper A", &["I1", "I2", "I3"]);
        assert!(validate_record(r).is_ok());
    }

    #[test]
    fn rejects_count_mismatch() {
        let mut r = record("Trust", "Paper A", &["I1", "I2", "I3", "I4"]);
        r.item_count = 5;
        assert_eq!(
            validate_record(r),
            Err(RecordError::CountMismatch {
                declared: 5,
                actual: 4
            })
        );
    }

    #[test]
    fn rejects_bad_scale_and_blank_fields() {
        let mut r = record("Trust", "Paper A", &["I1"]);
        r.scale_points = 1;
        assert_eq!(validate_record(r), Err(RecordError::BadScale(1)));

        let mut r = record("Trust", "Paper A", &["I1"]);
        r.name = "   ".into();
        assert_eq!(validate_record(r), Err(RecordError::EmptyField("name")));

        let mut r = record("Trust", "Paper A", &["I1"]);
        r.paper_title = "\t".into();
        assert_eq!(validate_record(r), Err(RecordError::EmptyField("paper_title")));

        let mut r = record("Trust", "Paper A", &[]);
        r.item_count = 0;
        assert_eq!(validate_record(r), Err(RecordError::EmptyField("items")));
    }

    #[test]
    fn trims_whitespace() {
        let mut r = record("Trust", "Paper A", &["  I1 "]);
        r.name = " Trust\n".into();
        let v = validate_record(r).unwrap();
        assert_eq!(v.name, "Trust");
        assert_eq!(v.items, vec!["I1"]);
    }

    #[test]
    fn same_name_from_different_papers_are_distinct() {
        let a = record("Trust", "Paper A", &["I trust it."]);
        let b = record("Trust", "Paper B", &["I trust it."]);
        let json = serde_json::to_vec(&CorpusFile::new(vec![a, b])).unwrap();
        let loaded = load_corpus(json.as_slice()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_ne!(loaded[0].id, loaded[1].id);
    }

    #[test]
    fn empty_corpus_is_valid() {
        let loaded = load_corpus(br#"{"version":1,"records":[]}"#.as_slice()).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut a = record("Trust", "Paper A", &["I1"]);
        let mut b = record("Usability", "Paper B", &["I2"]);
        a.id = "x".into();
        b.id = "x".into();
        let json = serde_json::to_vec(&CorpusFile::new(vec![a, b])).unwrap();
        assert!(matches!(
            load_corpus(json.as_slice()),
            Err(CorpusError::DuplicateId(id)) if id.as_str() == "x"
        ));
    }

    #[test]
    fn invalid_record_reports_index() {
        let a = record("Trust", "Paper A", &["I1"]);
        let mut b = record("Usability", "Paper B", &["I2"]);
        b.item_count = 3;
        let json = serde_json::to_vec(&CorpusFile::new(vec![a, b])).unwrap();
        match load_corpus(json.as_slice()) {
            Err(CorpusError::InvalidRecord { index, source }) => {
                assert_eq!(index, 1);
                assert!(matches!(source, RecordError::CountMismatch { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_version_and_garbage_rejected() {
        assert!(matches!(
            load_corpus(br#"{"version":7,"records":[]}"#.as_slice()),
            Err(CorpusError::UnsupportedVersion(7))
        ));
        assert!(matches!(
            load_corpus(b"{not json".as_slice()),
            Err(CorpusError::Parse(_))
        ));
    }

    #[test]
    fn embedding_document_layout() {
        let mut r = record("Trust", "P", &["I1", "I2"]);
        r.definition = "D".into();
        r.usage = "U".into();
        assert_eq!(
            canonical_embedding_document(&r),
            "Construct: Trust\nDefinition: D\nUsage: U\nItems:\nI1\nI2"
        );
        assert_eq!(canonical_embedding_document(&r), canonical_embedding_document(&r));

        let mut other = r.clone();
        other.items[1] = "I3".into();
        assert_ne!(
            canonical_embedding_document(&r),
            canonical_embedding_document(&other)
        );
    }

    #[test]
    fn embedding_document_ignores_citation_fields() {
        let a = record("Trust", "Paper A", &["I1"]);
        let mut b = a.clone();
        b.paper_title = "Other".into();
        b.apa_reference = "Other".into();
        b.scale_points = 5;
        b.id = "zzz".into();
        assert_eq!(canonical_embedding_document(&a), canonical_embedding_document(&b));
    }

    #[test]
    fn placeholder_is_nineteen_bytes() {
        assert_eq!(EVALUATION_TARGET.len(), 19);
    }
}
