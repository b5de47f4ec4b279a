//! Two-stage construct recommendation.
//!
//! Stage 1 takes the `k1` constructs closest to the core user experience.
//! Stage 2 re-ranks those survivors against the evaluation purpose and keeps
//! `k2`. Refreshing keeps the researcher's selected constructs and fills the
//! other slots with constructs that have never been shown for the project.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ConstructId;
use crate::gateway::{EmbeddingVector, Gateway, GatewayError};
use crate::index::{IndexError, VectorIndex};

pub const DEFAULT_STAGE1_K: usize = 20;
pub const DEFAULT_STAGE2_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectBrief {
    pub title: String,
    pub system_description: String,
    pub evaluation_purpose: String,
    /// Independent variable of the hypothesis.
    pub interactive_feature: String,
    /// Dependent variable of the hypothesis.
    pub core_user_experience: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BriefError {
    #[error("brief field `{0}` is empty")]
    EmptyField(&'static str),
}

impl ProjectBrief {
    pub fn validate(&self) -> Result<(), BriefError> {
        let fields = [
            ("title", &self.title),
            ("system_description", &self.system_description),
            ("evaluation_purpose", &self.evaluation_purpose),
            ("interactive_feature", &self.interactive_feature),
            ("core_user_experience", &self.core_user_experience),
        ];
        for (name, value) in fields {
            if value.trim().is_empty() {
                return Err(BriefError::EmptyField(name));
            }
        }
        Ok(())
    }

    /// Validated copy with surrounding whitespace removed from every field.
    pub fn normalized(&self) -> Result<Self, BriefError> {
        self.validate()?;
        Ok(Self {
            title: self.title.trim().to_owned(),
            system_description: self.system_description.trim().to_owned(),
            evaluation_purpose: self.evaluation_purpose.trim().to_owned(),
            interactive_feature: self.interactive_feature.trim().to_owned(),
            core_user_experience: self.core_user_experience.trim().to_owned(),
        })
    }
}

/// `"Effects of {interactive_feature} to {core_user_experience}"`.
pub fn hypothesis(brief: &ProjectBrief) -> Result<String, BriefError> {
    let feature = brief.interactive_feature.trim();
    let experience = brief.core_user_experience.trim();
    if feature.is_empty() {
        return Err(BriefError::EmptyField("interactive_feature"));
    }
    if experience.is_empty() {
        return Err(BriefError::EmptyField("core_user_experience"));
    }
    Ok(format!("Effects of {feature} to {experience}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationHit {
    pub construct_id: ConstructId,
    pub stage1_similarity: f64,
    pub stage2_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub hits: Vec<RecommendationHit>,
    /// Every id ever displayed for the project.
    pub shown_history: BTreeSet<ConstructId>,
    /// Fewer than `k2` constructs could be returned.
    #[serde(default)]
    pub exhausted: bool,
}

impl RecommendationSet {
    pub fn ids(&self) -> impl Iterator<Item = &ConstructId> {
        self.hits.iter().map(|h| &h.construct_id)
    }

    pub fn contains(&self, id: &ConstructId) -> bool {
        self.hits.iter().any(|h| &h.construct_id == id)
    }
}

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error(transparent)]
    Brief(#[from] BriefError),
    #[error("the construct index is empty")]
    EmptyIndex,
    #[error("invalid cut-offs k1={k1}, k2={k2} (need 1 <= k2 <= k1)")]
    InvalidK { k1: usize, k2: usize },
    #[error("selected construct `{0}` is not part of the current recommendation")]
    UnknownSelection(ConstructId),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Query text for stage 2: the evaluation purpose, plus any extra context
/// separated by one space.
pub fn stage2_text(brief: &ProjectBrief, additional_info: Option<&str>) -> String {
    let purpose = brief.evaluation_purpose.trim();
    match additional_info.map(str::trim).filter(|s| !s.is_empty()) {
        Some(extra) => format!("{purpose} {extra}"),
        None => purpose.to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageQueries {
    pub stage1: EmbeddingVector,
    pub stage2: EmbeddingVector,
}

impl StageQueries {
    pub async fn embed(
        gateway: &Gateway,
        brief: &ProjectBrief,
        additional_info: Option<&str>,
    ) -> Result<Self, RecommendError> {
        brief.validate()?;
        let stage1 = gateway.embed(brief.core_user_experience.trim()).await?;
        let stage2 = gateway.embed(&stage2_text(brief, additional_info)).await?;
        Ok(Self { stage1, stage2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recommender {
    k1: usize,
    k2: usize,
}

impl Default for Recommender {
    fn default() -> Self {
        Self {
            k1: DEFAULT_STAGE1_K,
            k2: DEFAULT_STAGE2_K,
        }
    }
}

impl Recommender {
    pub fn new(k1: usize, k2: usize) -> Result<Self, RecommendError> {
        if k2 == 0 || k1 < k2 {
            return Err(RecommendError::InvalidK { k1, k2 });
        }
        Ok(Self { k1, k2 })
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    /// Stage 1 then stage 2, keeping `keep` hits and skipping `exclude`.
    fn two_stage(
        &self,
        index: &VectorIndex,
        queries: &StageQueries,
        keep: usize,
        exclude: &HashSet<ConstructId>,
    ) -> Result<Vec<RecommendationHit>, RecommendError> {
        let stage1 = index.search(&queries.stage1, self.k1, exclude)?;
        let stage1_scores: HashMap<&ConstructId, f64> =
            stage1.iter().map(|h| (&h.construct_id, h.similarity)).collect();
        let survivors: Vec<ConstructId> = stage1.iter().map(|h| h.construct_id.clone()).collect();
        let stage2 = index.search_within(&queries.stage2, &survivors, keep)?;
        Ok(stage2
            .into_iter()
            .map(|hit| RecommendationHit {
                stage1_similarity: stage1_scores[&hit.construct_id],
                stage2_similarity: hit.similarity,
                construct_id: hit.construct_id,
            })
            .collect())
    }

    pub fn recommend_with(
        &self,
        index: &VectorIndex,
        queries: &StageQueries,
    ) -> Result<RecommendationSet, RecommendError> {
        if index.is_empty() {
            return Err(RecommendError::EmptyIndex);
        }
        let hits = self.two_stage(index, queries, self.k2, &HashSet::new())?;
        Ok(RecommendationSet {
            shown_history: hits.iter().map(|h| h.construct_id.clone()).collect(),
            exhausted: hits.len() < self.k2,
            hits,
        })
    }

    /// Selected constructs, in the order they appear in `prior`.
    fn retained(
        prior: &RecommendationSet,
        selected: &[ConstructId],
    ) -> Result<Vec<RecommendationHit>, RecommendError> {
        if let Some(unknown) = selected.iter().find(|id| !prior.contains(id)) {
            return Err(RecommendError::UnknownSelection(unknown.clone()));
        }
        let wanted: HashSet<&ConstructId> = selected.iter().collect();
        Ok(prior
            .hits
            .iter()
            .filter(|h| wanted.contains(&h.construct_id))
            .cloned()
            .collect())
    }

    pub fn refresh_with(
        &self,
        index: &VectorIndex,
        queries: &StageQueries,
        prior: &RecommendationSet,
        selected: &[ConstructId],
    ) -> Result<RecommendationSet, RecommendError> {
        let mut hits = Self::retained(prior, selected)?;
        let slots = self.k2.saturating_sub(hits.len());
        let mut shown_history = prior.shown_history.clone();
        shown_history.extend(prior.ids().cloned());
        if slots == 0 {
            return Ok(RecommendationSet {
                hits,
                shown_history,
                exhausted: false,
            });
        }
        if index.is_empty() {
            return Err(RecommendError::EmptyIndex);
        }
        let exclude: HashSet<ConstructId> = shown_history.iter().cloned().collect();
        let fresh = self.two_stage(index, queries, slots, &exclude)?;
        let exhausted = fresh.len() < slots;
        shown_history.extend(fresh.iter().map(|h| h.construct_id.clone()));
        hits.extend(fresh);
        Ok(RecommendationSet {
            hits,
            shown_history,
            exhausted,
        })
    }

    pub async fn recommend(
        &self,
        gateway: &Gateway,
        index: &VectorIndex,
        brief: &ProjectBrief,
    ) -> Result<RecommendationSet, RecommendError> {
        if index.is_empty() {
            return Err(RecommendError::EmptyIndex);
        }
        let queries = StageQueries::embed(gateway, brief, None).await?;
        self.recommend_with(index, &queries)
    }

    pub async fn refresh(
        &self,
        gateway: &Gateway,
        index: &VectorIndex,
        brief: &ProjectBrief,
        prior: &RecommendationSet,
        selected: &[ConstructId],
        additional_info: &str,
    ) -> Result<RecommendationSet, RecommendError> {
        let retained = Self::retained(prior, selected)?;
        if retained.len() >= self.k2 {
            let mut shown_history = prior.shown_history.clone();
            shown_history.extend(prior.ids().cloned());
            return Ok(RecommendationSet {
                hits: retained,
                shown_history,
                exhausted: false,
            });
        }
        let queries = StageQueries::embed(gateway, brief, Some(additional_info)).await?;
        self.refresh_with(index, &queries, prior, selected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashingEmbedder, ScriptedChat};

    pub(crate) fn chatbot_brief() -> ProjectBrief {
        ProjectBrief {
            title: "Emotional chatbot study".into(),
            system_description: "AI-powered emotional chatbot".into(),
            evaluation_purpose: "I want to study how the anthropomorphism of an AI chatbot affects users' trust"
                .into(),
            interactive_feature: "anthropomorphism".into(),
            core_user_experience: "trust".into(),
        }
    }

    #[test]
    fn hypothesis_template() {
        assert_eq!(
            hypothesis(&chatbot_brief()).unwrap(),
            "Effects of anthropomorphism to trust"
        );
        let mut b = chatbot_brief();
        b.interactive_feature = "response latency".into();
        b.core_user_experience = "perceived responsiveness".into();
        assert_eq!(
            hypothesis(&b).unwrap(),
            "Effects of response latency to perceived responsiveness"
        );
        b.interactive_feature = "".into();
        assert_eq!(hypothesis(&b), Err(BriefError::EmptyField("interactive_feature")));
    }

    #[test]
    fn brief_validation() {
        let mut b = chatbot_brief();
        b.evaluation_purpose = "  ".into();
        assert_eq!(b.validate(), Err(BriefError::EmptyField("evaluation_purpose")));
    }

    #[test]
    fn defaults_and_bad_k() {
        let r = Recommender::default();
        assert_eq!((r.k1(), r.k2()), (20, 10));
        assert!(matches!(Recommender::new(5, 10), Err(RecommendError::InvalidK { .. })));
        assert!(matches!(Recommender::new(5, 0), Err(RecommendError::InvalidK { .. })));
    }

    #[test]
    fn stage2_query_composition() {
        let b = chatbot_brief();
        assert_eq!(stage2_text(&b, None), b.evaluation_purpose);
        assert_eq!(stage2_text(&b, Some("  ")), b.evaluation_purpose);
        assert_eq!(
            stage2_text(&b, Some("social presence")),
            format!("{} social presence", b.evaluation_purpose)
        );
    }

    fn small_index(n: usize) -> (Gateway, VectorIndex) {
        let embedder = HashingEmbedder::new(64);
        let mut index = VectorIndex::new(64);
        for i in 0..n {
            let v = EmbeddingVector::new(embedder.embed_sync(&format!("construct {i} about trust"))).unwrap();
            index.upsert(format!("c{i:02}").as_str().into(), v).unwrap();
        }
        (Gateway::stub(ScriptedChat::default(), 64), index)
    }

    #[tokio::test]
    async fn fewer_entries_than_k() {
        let (gw, index) = small_index(8);
        let set = Recommender::default()
            .recommend(&gw, &index, &chatbot_brief())
            .await
            .unwrap();
        assert_eq!(set.hits.len(), 8);
        assert!(set
            .hits
            .windows(2)
            .all(|w| w[0].stage2_similarity >= w[1].stage2_similarity));
        assert_eq!(set.shown_history.len(), 8);
    }

    #[tokio::test]
    async fn empty_index_rejected() {
        let gw = Gateway::stub(ScriptedChat::default(), 64);
        assert!(matches!(
            Recommender::default()
                .recommend(&gw, &VectorIndex::new(64), &chatbot_brief())
                .await,
            Err(RecommendError::EmptyIndex)
        ));
    }

    #[tokio::test]
    async fn refresh_keeping_everything_needs_no_retrieval() {
        let (gw, index) = small_index(30);
        let rec = Recommender::default();
        let brief = chatbot_brief();
        let prior = rec.recommend(&gw, &index, &brief).await.unwrap();
        let all: Vec<ConstructId> = prior.ids().cloned().collect();
        let next = rec.refresh(&gw, &index, &brief, &prior, &all, "x").await.unwrap();
        assert_eq!(next.hits, prior.hits);
        assert!(!next.exhausted);
    }

    #[tokio::test]
    async fn refresh_exhausts_small_corpus() {
        let (gw, index) = small_index(12);
        let rec = Recommender::default();
        let brief = chatbot_brief();
        let prior = rec.recommend(&gw, &index, &brief).await.unwrap();
        assert_eq!(prior.hits.len(), 10);
        let next = rec.refresh(&gw, &index, &brief, &prior, &[], "more").await.unwrap();
        assert_eq!(next.hits.len(), 2);
        assert!(next.exhausted);
        assert!(next.ids().all(|id| !prior.contains(id)));
        assert_eq!(next.shown_history.len(), 12);
    }

    #[tokio::test]
    async fn refresh_rejects_foreign_selection() {
        let (gw, index) = small_index(12);
        let rec = Recommender::default();
        let brief = chatbot_brief();
        let prior = rec.recommend(&gw, &index, &brief).await.unwrap();
        assert!(matches!(
            rec.refresh(&gw, &index, &brief, &prior, &["nope".into()], "").await,
            Err(RecommendError::UnknownSelection(_))
        ));
    }
}
