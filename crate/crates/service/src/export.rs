//! Export of a finalized questionnaire.

use serde::{Deserialize, Serialize};

use scalesmith_core::corpus::{ConstructId, ConstructRecord};
use scalesmith_core::synthesis::{CustomConstruct, RefinedItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceConstruct {
    pub construct_id: ConstructId,
    pub name: String,
    pub paper_title: String,
    pub apa_reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub title: String,
    pub construct: CustomConstruct,
    pub scale: String,
    pub items: Vec<RefinedItem>,
    pub sources: Vec<SourceConstruct>,
}

impl ExportDocument {
    pub fn new(
        title: &str,
        construct: &CustomConstruct,
        items: &[RefinedItem],
        sources: &[&ConstructRecord],
    ) -> Self {
        Self {
            title: title.to_owned(),
            scale: construct.scale_label(),
            construct: construct.clone(),
            items: items.to_vec(),
            sources: sources
                .iter()
                .map(|r| SourceConstruct {
                    construct_id: r.id.clone(),
                    name: r.name.clone(),
                    paper_title: r.paper_title.clone(),
                    apa_reference: r.apa_reference.clone(),
                })
                .collect(),
        }
    }

    /// Distinct references in first-seen order.
    pub fn references(&self) -> Vec<&str> {
        let mut refs: Vec<&str> = Vec::new();
        for s in &self.sources {
            if !refs.contains(&s.apa_reference.as_str()) {
                refs.push(&s.apa_reference);
            }
        }
        refs
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Questionnaire: {}\n", self.title));
        out.push_str(&format!("Construct: {}\n", self.construct.name));
        out.push_str(&format!("Definition: {}\n", self.construct.definition));
        out.push_str(&format!("Scale: {}\n\nItems:\n", self.scale));
        for (i, item) in self.items.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, item.text));
        }
        let reverse: Vec<String> = self
            .items
            .iter()
            .enumerate()
            .filter(|(_, item)| item.reverse_coded)
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        out.push_str(&format!(
            "Reverse-coded items: {}\n\nSource constructs:\n",
            if reverse.is_empty() { "none".to_owned() } else { reverse.join(", ") }
        ));
        for s in &self.sources {
            out.push_str(&format!("- {} ({}): {}\n", s.name, s.construct_id, s.paper_title));
        }
        out.push_str("\nReferences:\n");
        for r in self.references() {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}
