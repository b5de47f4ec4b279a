//! The three-step workflow over persisted projects.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use scalesmith_core::corpus::{load_corpus, Catalog, ConstructId, ConstructRecord};
use scalesmith_core::gateway::Gateway;
use scalesmith_core::index::VectorIndex;
use scalesmith_core::recommend::{ProjectBrief, RecommendationSet, Recommender};
use scalesmith_core::synthesis::{
    classify_items, generate_custom_construct, pool_items, refine_items, CustomConstruct, ItemClassification,
    RefinedItem,
};

use crate::error::{ServiceError, Step};
use crate::export::ExportDocument;
use crate::project::{Project, ProjectId};
use crate::store::ProjectStore;

/// Construct records plus their vectors. Read-only while serving.
#[derive(Debug)]
pub struct Library {
    catalog: Catalog,
    index: VectorIndex,
}

impl Library {
    /// Every indexed id must resolve to a record.
    pub fn new(records: Vec<ConstructRecord>, index: VectorIndex) -> Result<Self, ServiceError> {
        let catalog = Catalog::new(records)?;
        if let Some(orphan) = index.ids().find(|id| catalog.get(id).is_none()) {
            return Err(ServiceError::Internal(format!("indexed id `{orphan}` has no corpus record")));
        }
        Ok(Self { catalog, index })
    }

    pub fn load(corpus_path: &Path, index_path: &Path, dimension: usize) -> Result<Self, ServiceError> {
        let file = std::fs::File::open(corpus_path)
            .map_err(|e| ServiceError::Internal(format!("opening {}: {e}", corpus_path.display())))?;
        let records = load_corpus(std::io::BufReader::new(file))?;
        let index = VectorIndex::load(index_path, dimension)?;
        Self::new(records, index)
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevelopResult {
    pub custom: CustomConstruct,
    pub refined: Vec<RefinedItem>,
    pub classification: ItemClassification,
    /// Refined-item indices shown checked: the appropriate ones.
    pub pre_checked: Vec<usize>,
}

pub struct Workbench {
    store: ProjectStore,
    gateway: Gateway,
    library: Arc<Library>,
    recommender: Recommender,
}

impl Workbench {
    pub fn new(store: ProjectStore, gateway: Gateway, library: Arc<Library>, recommender: Recommender) -> Self {
        Self {
            store,
            gateway,
            library,
            recommender,
        }
    }

    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn construct(&self, id: &ConstructId) -> Result<&ConstructRecord, ServiceError> {
        self.library
            .catalog
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("construct {id}")))
    }

    pub fn create_project(&self, brief: ProjectBrief) -> Result<Project, ServiceError> {
        let brief = brief.normalized().map_err(|e| ServiceError::Validation(e.to_string()))?;
        let project = Project::new(brief);
        self.store.save(&project)?;
        tracing::info!(project = %project.project_id, "project created");
        Ok(project)
    }

    pub fn get_project(&self, id: ProjectId) -> Result<Project, ServiceError> {
        Ok(self.store.load(id)?)
    }

    pub async fn run_recommendation(&self, id: ProjectId) -> Result<RecommendationSet, ServiceError> {
        let _guard = self.store.lock(id).await;
        let mut project = self.store.load(id)?;
        let mut set = self
            .recommender
            .recommend(&self.gateway, &self.library.index, &project.brief)
            .await?;
        if let Some(prior) = &project.recommendation {
            set.shown_history.extend(prior.shown_history.iter().cloned());
        }
        let kept: Vec<ConstructId> = project
            .selected_ids
            .iter()
            .filter(|id| set.contains(id))
            .cloned()
            .collect();
        if kept != project.selected_ids {
            project.selected_ids = kept;
            project.clear_development();
        }
        project.recommendation = Some(set.clone());
        project.touch();
        self.store.save(&project)?;
        Ok(set)
    }

    /// Keeps the current selection and fills the other slots with constructs
    /// that have not been shown yet.
    pub async fn refresh_recommendation(
        &self,
        id: ProjectId,
        additional_info: &str,
    ) -> Result<RecommendationSet, ServiceError> {
        let _guard = self.store.lock(id).await;
        let mut project = self.store.load(id)?;
        let prior = project
            .recommendation
            .as_ref()
            .ok_or_else(|| ServiceError::Precondition("run a recommendation before refreshing".into()))?;
        let set = self
            .recommender
            .refresh(
                &self.gateway,
                &self.library.index,
                &project.brief,
                prior,
                &project.selected_ids,
                additional_info,
            )
            .await?;
        project.recommendation = Some(set.clone());
        project.touch();
        self.store.save(&project)?;
        Ok(set)
    }

    pub async fn submit_selection(&self, id: ProjectId, construct_ids: Vec<ConstructId>) -> Result<Project, ServiceError> {
        let _guard = self.store.lock(id).await;
        let mut project = self.store.load(id)?;
        let current = project
            .recommendation
            .as_ref()
            .ok_or_else(|| ServiceError::Precondition("no recommendation to select from".into()))?;
        if let Some(unknown) = construct_ids.iter().find(|c| !current.contains(c)) {
            return Err(ServiceError::UnknownConstruct(unknown.clone()));
        }
        let mut seen = BTreeSet::new();
        let selection: Vec<ConstructId> = construct_ids.into_iter().filter(|c| seen.insert(c.clone())).collect();
        if selection != project.selected_ids {
            project.selected_ids = selection;
            project.clear_development();
        }
        project.touch();
        self.store.save(&project)?;
        Ok(project)
    }

    /// Custom construct, refined items and classification, in that order.
    /// Artifacts are replaced only if all three steps succeed.
    pub async fn develop_items(&self, id: ProjectId) -> Result<DevelopResult, ServiceError> {
        let _guard = self.store.lock(id).await;
        let mut project = self.store.load(id)?;
        if project.selected_ids.is_empty() {
            return Err(ServiceError::Precondition("select at least one construct first".into()));
        }
        let selected: Vec<ConstructRecord> = project
            .selected_ids
            .iter()
            .map(|c| self.construct(c).cloned())
            .collect::<Result<_, _>>()?;
        let brief = &project.brief;

        let custom = generate_custom_construct(&self.gateway, brief, &selected)
            .await
            .map_err(|source| ServiceError::Synthesis { step: Step::Construct, source })?;
        let pooled = pool_items(&selected);
        let refined = refine_items(&self.gateway, brief, &custom, &pooled)
            .await
            .map_err(|source| ServiceError::Synthesis { step: Step::Refine, source })?;
        let classification = classify_items(&self.gateway, brief, &custom, &refined)
            .await
            .map_err(|source| ServiceError::Synthesis { step: Step::Classify, source })?;

        project.custom = Some(custom.clone());
        project.refined = Some(refined.clone());
        project.classification = Some(classification.clone());
        project.final_items = None;
        project.touch();
        self.store.save(&project)?;
        Ok(DevelopResult {
            pre_checked: classification.appropriate_indices.clone(),
            custom,
            refined,
            classification,
        })
    }

    /// Stores the chosen refined items in refined-list order.
    pub async fn finalize_items(&self, id: ProjectId, indices: Vec<usize>) -> Result<Project, ServiceError> {
        let _guard = self.store.lock(id).await;
        let mut project = self.store.load(id)?;
        let refined = project
            .refined
            .as_ref()
            .ok_or_else(|| ServiceError::Precondition("develop items before finalizing".into()))?;
        if indices.is_empty() {
            return Err(ServiceError::Validation("choose at least one item".into()));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= refined.len()) {
            return Err(ServiceError::IndexOutOfRange {
                index,
                len: refined.len(),
            });
        }
        let chosen: BTreeSet<usize> = indices.into_iter().collect();
        project.final_items = Some(chosen.into_iter().map(|i| refined[i].clone()).collect());
        project.touch();
        self.store.save(&project)?;
        Ok(project)
    }

    pub fn export(&self, id: ProjectId) -> Result<ExportDocument, ServiceError> {
        let project = self.store.load(id)?;
        let (Some(custom), Some(items)) = (&project.custom, &project.final_items) else {
            return Err(ServiceError::Precondition("finalize the items before exporting".into()));
        };
        let sources: Vec<&ConstructRecord> = project
            .selected_ids
            .iter()
            .map(|c| self.construct(c))
            .collect::<Result<_, _>>()?;
        Ok(ExportDocument::new(&project.brief.title, custom, items, &sources))
    }
}
