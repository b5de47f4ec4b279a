//! HTTP service, project persistence and command-line tooling around the
//! questionnaire workflow.

pub mod api;
pub mod config;
pub mod error;
pub mod export;
pub mod project;
pub mod store;
pub mod workbench;

pub use config::ServiceConfig;
pub use error::{ServiceError, Step};
pub use workbench::{DevelopResult, Library, Workbench};
