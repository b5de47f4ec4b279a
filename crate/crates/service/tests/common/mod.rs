//! Shared setup for the service tests: fixture corpus, stub gateway, server.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use scalesmith_core::corpus::{load_corpus, save_corpus, ConstructRecord, EVALUATION_TARGET};
use scalesmith_core::gateway::{Gateway, ScriptEntry, ScriptedChat};
use scalesmith_core::ingest::{ingest, IngestOptions};
use scalesmith_core::recommend::{ProjectBrief, Recommender};
use scalesmith_core::synthesis::PooledItem;
use scalesmith_service::store::ProjectStore;
use scalesmith_service::{api, Library, ServiceConfig, Workbench};

pub const DIM: usize = 768;

pub fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

pub fn fixture_records() -> Vec<ConstructRecord> {
    load_corpus(std::fs::File::open(core_dir().join("fixtures/corpus.json")).unwrap()).unwrap()
}

pub fn chatbot_brief() -> ProjectBrief {
    ProjectBrief {
        title: "Emotional chatbot study".into(),
        system_description: "AI-powered emotional chatbot".into(),
        evaluation_purpose: "I want to study how the anthropomorphism of an AI chatbot affects users' trust".into(),
        interactive_feature: "anthropomorphism".into(),
        core_user_experience: "trust".into(),
    }
}

pub fn config_for(data_dir: &Path) -> ServiceConfig {
    let mut config = ServiceConfig {
        data_dir: data_dir.to_owned(),
        ..ServiceConfig::default()
    };
    config.gateway.stub = true;
    config.gateway.dimension = DIM;
    config
}

/// Ingests the fixture corpus with the stub embedder into `data_dir`, the
/// same files the `ingest` command writes.
pub async fn prepare_data_dir(data_dir: &Path) {
    let gateway = Gateway::stub(ScriptedChat::default(), DIM);
    let out = ingest(&gateway, fixture_records(), IngestOptions::default()).await.unwrap();
    let config = config_for(data_dir);
    std::fs::create_dir_all(data_dir).unwrap();
    save_corpus(std::fs::File::create(config.corpus_path()).unwrap(), &out.records).unwrap();
    out.index.save(config.index_path()).unwrap();
}

/// A workbench over `data_dir` as the `serve` command would build it, with
/// `chat` standing in for the model.
pub fn open_workbench(data_dir: &Path, chat: ScriptedChat) -> Workbench {
    let config = config_for(data_dir);
    let library = Library::load(&config.corpus_path(), &config.index_path(), DIM).unwrap();
    Workbench::new(
        ProjectStore::open(config.projects_dir()).unwrap(),
        Gateway::stub(chat, DIM),
        Arc::new(library),
        Recommender::new(config.k1, config.k2).unwrap(),
    )
}

pub struct Server {
    pub base: String,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    pub async fn start(workbench: Workbench) -> Self {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = api::router(Arc::new(workbench));
        let handle = tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self { base, handle }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn stop(self) {
        self.handle.abort();
        let _ = self.handle.await;
    }
}

pub const CUSTOM_REPLY: &str = r#"{"name":"Anthropomorphic Trust","definition":"The extent to which users trust an AI chatbot whose conversation feels human-like.","point":7,"type":"Likert"}"#;

/// What a well-behaved model would answer: the placeholder replaced with
/// "chatbot", order and count kept.
pub fn refined_texts(pooled: &[PooledItem]) -> Vec<String> {
    pooled
        .iter()
        .map(|p| p.text.replace(EVALUATION_TARGET, "chatbot"))
        .collect()
}

/// Queues replies for the construct, refine and classify steps. Even
/// positions are classified appropriate.
pub fn script_development(chat: &ScriptedChat, pooled: &[PooledItem]) -> Vec<usize> {
    let refined = refined_texts(pooled);
    let (appropriate, inappropriate): (Vec<_>, Vec<_>) = refined.iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let texts = |v: &[(usize, &String)]| v.iter().map(|(_, t)| (*t).clone()).collect::<Vec<_>>();
    chat.extend([
        ScriptEntry::when("Selected constructs name:", CUSTOM_REPLY),
        ScriptEntry::when(
            "please modify the measurement items",
            serde_json::json!({ "items": refined }).to_string(),
        ),
        ScriptEntry::when(
            "Please select the most appropriate measurement items",
            serde_json::json!({
                "appropriate_items": texts(&appropriate),
                "inappropriate_items": texts(&inappropriate),
                "rationale": "Items about trust fit the hypothesis."
            })
            .to_string(),
        ),
    ]);
    appropriate.iter().map(|(i, _)| *i).collect()
}
