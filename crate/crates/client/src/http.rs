//! HTTP access to a bundle server.

use std::time::Duration;

use futures::StreamExt;
use progrnet_core::BundleManifest;
use tokio::sync::watch;

use crate::error::ClientError;
use crate::session::Control;

#[derive(Debug, Clone)]
pub struct BundleClient {
    http: reqwest::Client,
    base: String,
}

impl BundleClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_client(reqwest::Client::new(), base_url)
    }

    pub fn with_client(http: reqwest::Client, base_url: impl Into<String>) -> Self {
        let base = base_url.into().trim_end_matches('/').to_string();
        Self { http, base }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn manifest(&self) -> Result<BundleManifest, ClientError> {
        let bytes = self.get_all("/manifest").await?;
        Ok(BundleManifest::from_json(&bytes)?)
    }

    pub async fn singleton(&self) -> Result<Vec<u8>, ClientError> {
        self.get_all("/weights-singleton").await
    }

    async fn get_all(&self, path: &str) -> Result<Vec<u8>, ClientError> {
        let (_keep, mut control) = watch::channel(Control::Run);
        self.fetch(path, &mut control, |_| {}).await
    }

    /// Streams `path` into memory. Honours pause (stops reading) and stop
    /// (drops the connection) between chunks. `progress` sees each chunk
    /// length.
    pub async fn fetch(
        &self,
        path: &str,
        control: &mut watch::Receiver<Control>,
        mut progress: impl FnMut(usize),
    ) -> Result<Vec<u8>, ClientError> {
        let url = self.url(path);
        let http_err = |source| ClientError::Http {
            url: url.clone(),
            source,
        };
        if *control.borrow() == Control::Stop {
            return Err(ClientError::Stopped);
        }
        let response = tokio::select! {
            r = self.http.get(&url).send() => r.map_err(http_err)?,
            _ = wait_for_stop(control) => return Err(ClientError::Stopped),
        };
        let status = response.status();
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(ClientError::Status {
                url,
                status: status.as_u16(),
                body,
            });
        }
        let mut body = Vec::with_capacity(response.content_length().unwrap_or(0) as usize);
        let mut stream = response.bytes_stream();
        // a closed control channel means nobody can pause or stop us
        let mut watching = true;
        loop {
            if watching {
                let signal = *control.borrow_and_update();
                match signal {
                    Control::Stop => return Err(ClientError::Stopped),
                    Control::Pause => {
                        watching = control.changed().await.is_ok();
                        continue;
                    }
                    Control::Run => {}
                }
            }
            let chunk = if watching {
                tokio::select! {
                    chunk = stream.next() => chunk,
                    changed = control.changed() => {
                        watching = changed.is_ok();
                        continue;
                    }
                }
            } else {
                stream.next().await
            };
            match chunk {
                Some(Ok(bytes)) => {
                    progress(bytes.len());
                    body.extend_from_slice(&bytes);
                }
                Some(Err(e)) => return Err(http_err(e)),
                None => break,
            }
        }
        Ok(body)
    }
}

async fn wait_for_stop(control: &mut watch::Receiver<Control>) {
    while *control.borrow_and_update() != Control::Stop {
        if control.changed().await.is_err() {
            std::future::pending::<()>().await;
        }
    }
}

/// Linear backoff between retries.
pub(crate) fn backoff(attempt: u32) -> Duration {
    Duration::from_millis(100 * u64::from(attempt))
}
