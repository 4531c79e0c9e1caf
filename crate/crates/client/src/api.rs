//! JSON bodies of the session control API.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub server_url: String,
    pub input_id: usize,
    #[serde(default = "default_true")]
    pub concurrent: bool,
    #[serde(default)]
    pub infer_delay_ms: u64,
    #[serde(default)]
    pub max_stages: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl CreateSession {
    pub fn new(server_url: impl Into<String>, input_id: usize) -> Self {
        Self {
            server_url: server_url.into(),
            input_id,
            concurrent: true,
            infer_delay_ms: 0,
            max_stages: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
}

/// A demo input offered to the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub id: usize,
    pub label: usize,
    pub shape: Vec<usize>,
    /// Leading input values, enough to draw a small preview.
    pub thumbnail: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
}
