//! Google Generative Language API backend (`generateContent`, `embedContent`).

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatModel, ChatRequest, Embedder, GatewayError};

fn classify(err: reqwest::Error) -> GatewayError {
    if err.is_timeout() {
        GatewayError::Timeout(std::time::Duration::ZERO)
    } else {
        GatewayError::Transport(err.to_string())
    }
}

async fn post_json(
    client: &reqwest::Client,
    url: &str,
    api_key: &str,
    body: &Value,
) -> Result<Value, GatewayError> {
    let response = client
        .post(url)
        .header("x-goog-api-key", api_key)
        .json(body)
        .send()
        .await
        .map_err(classify)?;
    let status = response.status();
    let text = response.text().await.map_err(classify)?;
    if !status.is_success() {
        return Err(GatewayError::Provider {
            status: status.as_u16(),
            message: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct GeminiChat {
    client: reqwest::Client,
    url: String,
    api_key: String,
}

impl GeminiChat {
    pub fn new(base_url: &str, model: &str, api_key: &str) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: format!(
                "{}/v1beta/models/{}:generateContent",
                base_url.trim_end_matches('/'),
                model
            ),
            api_key: api_key.to_owned(),
        }
    }

    fn body(request: &ChatRequest) -> Value {
        let mut generation = json!({ "temperature": request.temperature });
        if let Some(schema) = &request.schema_hint {
            generation["responseMimeType"] = json!("application/json");
            generation["responseSchema"] = schema.clone();
        }
        json!({
            "systemInstruction": { "parts": [{ "text": request.system_prompt }] },
            "contents": [{ "role": "user", "parts": [{ "text": request.user_prompt }] }],
            "generationConfig": generation,
        })
    }
}

#[derive(Deserialize)]
struct GenerateResponse {
    #[serde(default)]
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
struct Candidate {
    content: Option<Content>,
}

#[derive(Deserialize)]
struct Content {
    #[serde(default)]
    parts: Vec<Part>,
}

#[derive(Deserialize)]
struct Part {
    #[serde(default)]
    text: String,
}

#[async_trait]
impl ChatModel for GeminiChat {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let raw = post_json(&self.client, &self.url, &self.api_key, &Self::body(request)).await?;
        let parsed: GenerateResponse =
            serde_json::from_value(raw).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let content = parsed
            .candidates
            .into_iter()
            .next()
            .and_then(|c| c.content)
            .ok_or_else(|| GatewayError::MalformedResponse("no candidates in response".into()))?;
        Ok(content.parts.into_iter().map(|p| p.text).collect())
    }
}

#[derive(Debug, Clone)]
pub struct GeminiEmbedder {
    client: reqwest::Client,
    url: String,
    model: String,
    api_key: String,
    dimension: usize,
}

impl GeminiEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: &str, dimension: usize) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: format!(
                "{}/v1beta/models/{}:embedContent",
                base_url.trim_end_matches('/'),
                model
            ),
            model: format!("models/{model}"),
            api_key: api_key.to_owned(),
            dimension,
        }
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: EmbeddingValues,
}

#[derive(Deserialize)]
struct EmbeddingValues {
    values: Vec<f64>,
}

#[async_trait]
impl Embedder for GeminiEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let body = json!({
            "model": self.model,
            "content": { "parts": [{ "text": text }] },
        });
        let raw = post_json(&self.client, &self.url, &self.api_key, &body).await?;
        let parsed: EmbedResponse =
            serde_json::from_value(raw).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        Ok(parsed.embedding.values)
    }
}
