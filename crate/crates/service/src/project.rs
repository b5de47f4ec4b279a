//! The persisted state of one questionnaire project.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use scalesmith_core::corpus::ConstructId;
use scalesmith_core::recommend::{ProjectBrief, RecommendationSet};
use scalesmith_core::synthesis::{CustomConstruct, ItemClassification, RefinedItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectId(Uuid);

impl ProjectId {
    pub fn new_random() -> Self {
        Self(Uuid::new_v4())
    }
}

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for ProjectId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(Self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: ProjectId,
    pub brief: ProjectBrief,
    pub recommendation: Option<RecommendationSet>,
    /// In the order the researcher submitted them.
    pub selected_ids: Vec<ConstructId>,
    pub custom: Option<CustomConstruct>,
    pub refined: Option<Vec<RefinedItem>>,
    pub classification: Option<ItemClassification>,
    pub final_items: Option<Vec<RefinedItem>>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Project {
    pub fn new(brief: ProjectBrief) -> Self {
        let now = Utc::now();
        Self {
            project_id: ProjectId::new_random(),
            brief,
            recommendation: None,
            selected_ids: Vec::new(),
            custom: None,
            refined: None,
            classification: None,
            final_items: None,
            created_at: now,
            updated_at: now,
        }
    }

    /// Drops everything derived from the selection.
    pub fn clear_development(&mut self) {
        self.custom = None;
        self.refined = None;
        self.classification = None;
        self.final_items = None;
    }

    pub fn touch(&mut self) {
        self.updated_at = Utc::now();
    }

    /// Indices of refined items that start out checked.
    pub fn pre_checked(&self) -> Vec<usize> {
        self.classification
            .as_ref()
            .map(|c| c.appropriate_indices.clone())
            .unwrap_or_default()
    }
}
