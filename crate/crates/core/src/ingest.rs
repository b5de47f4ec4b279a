//! Corpus ingestion: optional item generalization, then one embedding per record.

use futures::stream::{self, StreamExt, TryStreamExt};
use thiserror::Error;

use crate::corpus::{canonical_embedding_document, validate_record, ConstructId, ConstructRecord, RecordError};
use crate::extraction::{generalize_items, ExtractionError};
use crate::gateway::{Gateway, GatewayError};
use crate::index::{IndexError, VectorIndex};

/// Concurrent embedding requests issued by [`ingest`]. The gateway applies
/// its own in-flight bound on top of this.
const EMBED_CONCURRENCY: usize = 8;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("generalizing `{id}`: {source}")]
    Generalize { id: ConstructId, source: ExtractionError },
    #[error("record `{id}` invalid after generalization: {source}")]
    Invalid { id: ConstructId, source: RecordError },
    #[error("embedding `{id}`: {source}")]
    Embed { id: ConstructId, source: GatewayError },
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Rewrite items so system-specific terms become the placeholder.
    pub generalize: bool,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<ConstructRecord>,
    pub index: VectorIndex,
}

pub async fn ingest(
    gateway: &Gateway,
    records: Vec<ConstructRecord>,
    options: IngestOptions,
) -> Result<Ingested, IngestError> {
    let records = if options.generalize {
        let mut out = Vec::with_capacity(records.len());
        for mut record in records {
            let id = record.id.clone();
            record.items = generalize_items(gateway, &record.items)
                .await
                .map_err(|source| IngestError::Generalize { id: id.clone(), source })?;
            out.push(validate_record(record).map_err(|source| IngestError::Invalid { id, source })?);
        }
        out
    } else {
        records
    };

    let vectors: Vec<_> = stream::iter(records.iter())
        .map(|record| async move {
            gateway
                .embed(&canonical_embedding_document(record))
                .await
                .map(|v| (record.id.clone(), v))
                .map_err(|source| IngestError::Embed {
                    id: record.id.clone(),
                    source,
                })
        })
        .buffer_unordered(EMBED_CONCURRENCY)
        .try_collect()
        .await?;

    let mut index = VectorIndex::new(gateway.dimension());
    for (id, vector) in vectors {
        index.upsert(id, vector)?;
    }
    tracing::info!(records = records.len(), "corpus ingested");
    Ok(Ingested { records, index })
}
