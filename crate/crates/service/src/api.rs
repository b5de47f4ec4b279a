//! HTTP routes.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;

use scalesmith_core::corpus::{ConstructId, ConstructRecord};
use scalesmith_core::recommend::{ProjectBrief, RecommendationSet};

use crate::error::ServiceError;
use crate::project::{Project, ProjectId};
use crate::workbench::{DevelopResult, Workbench};

type AppState = Arc<Workbench>;

pub fn router(workbench: Arc<Workbench>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/recommendations", post(recommend))
        .route("/projects/{id}/recommendations/refresh", post(refresh))
        .route("/projects/{id}/selection", post(select))
        .route("/projects/{id}/develop", post(develop))
        .route("/projects/{id}/items", put(finalize))
        .route("/projects/{id}/export", get(export))
        .route("/constructs/{id}", get(construct))
        .with_state(workbench)
}

fn project_id(raw: &str) -> Result<ProjectId, ServiceError> {
    raw.parse().map_err(|_| ServiceError::NotFound(format!("project {raw}")))
}

async fn create_project(
    State(wb): State<AppState>,
    Json(brief): Json<ProjectBrief>,
) -> Result<(StatusCode, Json<Project>), ServiceError> {
    Ok((StatusCode::CREATED, Json(wb.create_project(brief)?)))
}

async fn get_project(State(wb): State<AppState>, Path(id): Path<String>) -> Result<Json<Project>, ServiceError> {
    Ok(Json(wb.get_project(project_id(&id)?)?))
}

async fn recommend(
    State(wb): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<RecommendationSet>, ServiceError> {
    Ok(Json(wb.run_recommendation(project_id(&id)?).await?))
}

#[derive(Debug, Default, Deserialize)]
struct RefreshBody {
    #[serde(default)]
    additional_info: String,
}

async fn refresh(
    State(wb): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<RefreshBody>>,
) -> Result<Json<RecommendationSet>, ServiceError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    Ok(Json(
        wb.refresh_recommendation(project_id(&id)?, &body.additional_info)
            .await?,
    ))
}

#[derive(Debug, Deserialize)]
struct SelectionBody {
    construct_ids: Vec<ConstructId>,
}

async fn select(
    State(wb): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<SelectionBody>,
) -> Result<Json<Project>, ServiceError> {
    Ok(Json(wb.submit_selection(project_id(&id)?, body.construct_ids).await?))
}

async fn develop(State(wb): State<AppState>, Path(id): Path<String>) -> Result<Json<DevelopResult>, ServiceError> {
    Ok(Json(wb.develop_items(project_id(&id)?).await?))
}

#[derive(Debug, Deserialize)]
struct ItemsBody {
    indices: Vec<usize>,
}

async fn finalize(
    State(wb): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ItemsBody>,
) -> Result<Json<Project>, ServiceError> {
    Ok(Json(wb.finalize_items(project_id(&id)?, body.indices).await?))
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(wb): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<ExportQuery>,
) -> Result<Response, ServiceError> {
    let doc = wb.export(project_id(&id)?)?;
    Ok(match query.format.as_deref() {
        Some("json") => Json(doc).into_response(),
        None | Some("text") => (
            [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
            doc.render_text(),
        )
            .into_response(),
        Some(other) => return Err(ServiceError::Validation(format!("unknown export format `{other}`"))),
    })
}

async fn construct(
    State(wb): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ConstructRecord>, ServiceError> {
    Ok(Json(wb.construct(&ConstructId::new(id))?.clone()))
}
