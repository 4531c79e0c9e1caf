//! Client for the session control API.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{CreateSession, InputInfo, SessionCreated};
use crate::error::ClientError;
use crate::session::SessionState;

#[derive(Debug, Clone)]
pub struct ControlClient {
    http: reqwest::Client,
    base: String,
}

impl ControlClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base_url.into().trim_end_matches('/').to_string(),
        }
    }

    pub async fn inputs(&self) -> Result<Vec<InputInfo>, ClientError> {
        self.send(self.http.get(self.url("/inputs"))).await
    }

    pub async fn create(&self, request: &CreateSession) -> Result<String, ClientError> {
        let created: SessionCreated = self.send(self.http.post(self.url("/session")).json(request)).await?;
        Ok(created.id)
    }

    pub async fn state(&self, id: &str) -> Result<SessionState, ClientError> {
        self.send(self.http.get(self.url(&format!("/session/{id}")))).await
    }

    pub async fn pause(&self, id: &str) -> Result<SessionState, ClientError> {
        self.action(id, "pause").await
    }

    pub async fn resume(&self, id: &str) -> Result<SessionState, ClientError> {
        self.action(id, "resume").await
    }

    pub async fn stop(&self, id: &str) -> Result<SessionState, ClientError> {
        self.action(id, "stop").await
    }

    async fn action(&self, id: &str, action: &str) -> Result<SessionState, ClientError> {
        self.send(self.http.post(self.url(&format!("/session/{id}/{action}"))))
            .await
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn send<T: DeserializeOwned>(&self, request: reqwest::RequestBuilder) -> Result<T, ClientError> {
        let request = request.build().map_err(|source| ClientError::Http {
            url: self.base.clone(),
            source,
        })?;
        let url = request.url().to_string();
        let response = self.http.execute(request).await.map_err(|source| ClientError::Http {
            url: url.clone(),
            source,
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(ClientError::Status {
                url,
                status: status.as_u16(),
                body: response.text().await.unwrap_or_default(),
            });
        }
        response
            .json()
            .await
            .map_err(|source| ClientError::Http { url, source })
    }
}

/// Helper so tests and the CLI can print any API value as one JSON line.
pub fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}
