use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use scalesmith_core::corpus::{load_corpus, save_corpus, CorpusFile};
use scalesmith_core::extraction::extract_record;
use scalesmith_core::ingest::{ingest, IngestOptions};
use scalesmith_core::recommend::Recommender;
use scalesmith_service::config::ServiceConfig;
use scalesmith_service::store::ProjectStore;
use scalesmith_service::{api, Library, Workbench};

#[derive(Parser)]
#[command(name = "scalesmith", version, about = "Questionnaire design from a corpus of validated constructs")]
struct Cli {
    /// TOML configuration file. `SCALESMITH_*` variables override it.
    #[arg(long, global = true, env = "SCALESMITH_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file, embed every record and write the index snapshot.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Replace system-specific terms in items with the placeholder first.
        #[arg(long)]
        generalize: bool,
    },
    /// Extract one construct record from a plain-text paper.
    Extract {
        #[arg(long)]
        paper: PathBuf,
        #[arg(long)]
        construct: String,
        #[arg(long)]
        generalize: bool,
    },
    /// Nearest constructs to a free-text query.
    Search {
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let config = ServiceConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { corpus, generalize } => run_ingest(&config, corpus, generalize).await,
        Command::Extract {
            paper,
            construct,
            generalize,
        } => run_extract(&config, paper, &construct, generalize).await,
        Command::Search { text, k } => run_search(&config, &text, k).await,
        Command::Serve { port } => run_serve(config, port).await,
    }
}

async fn run_ingest(config: &ServiceConfig, corpus: PathBuf, generalize: bool) -> Result<()> {
    let file = std::fs::File::open(&corpus).with_context(|| format!("opening {}", corpus.display()))?;
    let records = load_corpus(std::io::BufReader::new(file))?;
    let gateway = config.gateway.build()?;
    let out = ingest(&gateway, records, IngestOptions { generalize }).await?;

    std::fs::create_dir_all(&config.data_dir)?;
    let corpus_out = config.corpus_path();
    let tmp = corpus_out.with_extension("json.tmp");
    save_corpus(std::fs::File::create(&tmp)?, &out.records)?;
    std::fs::rename(&tmp, &corpus_out)?;
    out.index.save(config.index_path())?;
    eprintln!(
        "ingested {} constructs into {}",
        out.records.len(),
        config.data_dir.display()
    );
    Ok(())
}

async fn run_extract(config: &ServiceConfig, paper: PathBuf, construct: &str, generalize: bool) -> Result<()> {
    let text = std::fs::read_to_string(&paper).with_context(|| format!("reading {}", paper.display()))?;
    let gateway = config.gateway.build()?;
    let output = extract_record(&gateway, &text, construct, generalize).await?;
    let file = CorpusFile::new(vec![output.record]);
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

async fn run_search(config: &ServiceConfig, text: &str, k: usize) -> Result<()> {
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let library = Library::load(&config.corpus_path(), &config.index_path(), config.gateway.dimension)?;
    let gateway = config.gateway.build()?;
    let query = gateway.embed(text).await?;
    let hits = library.index().search(&query, k, &Default::default())?;
    let mut out = std::io::stdout().lock();
    for hit in hits {
        let name = library
            .catalog()
            .get(&hit.construct_id)
            .map(|r| r.name.as_str())
            .unwrap_or("?");
        writeln!(out, "{:.6}\t{}\t{}", hit.similarity, hit.construct_id, name)?;
    }
    Ok(())
}

async fn run_serve(config: ServiceConfig, port: Option<u16>) -> Result<()> {
    let library = Library::load(&config.corpus_path(), &config.index_path(), config.gateway.dimension)
        .context("loading corpus and index (run `scalesmith ingest` first)")?;
    let workbench = Workbench::new(
        ProjectStore::open(config.projects_dir())?,
        config.gateway.build()?,
        Arc::new(library),
        Recommender::new(config.k1, config.k2)?,
    );
    let addr = format!("{}:{}", config.bind, port.unwrap_or(config.port));
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, api::router(Arc::new(workbench)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
