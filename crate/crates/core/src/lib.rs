//! Construct corpus, retrieval and item synthesis for building evaluation
//! questionnaires.
//!
//! The pipeline: papers are turned into [`corpus::ConstructRecord`]s by
//! [`extraction`], embedded into a [`index::VectorIndex`] by [`ingest`],
//! ranked against a project brief by [`recommend`], and the chosen constructs
//! are merged into a custom construct with refined items by [`synthesis`].
//! All model traffic goes through [`gateway::Gateway`].

pub mod corpus;
pub mod extraction;
pub mod gateway;
pub mod index;
pub mod ingest;
pub mod items;
pub mod prompt;
pub mod recommend;
pub mod synthesis;
