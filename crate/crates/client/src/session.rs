//! Progressive and singleton download sessions.
//!
//! A progressive session runs two activities: a downloader that fetches
//! stages strictly in order and ORs each verified stage into the
//! reconstruction state, and (in concurrent mode) an inference worker that
//! materializes the newest snapshot and runs the model while the next stage
//! downloads. At most one download and one inference are in flight. If the
//! worker falls behind, stages that arrived meanwhile are accumulated and only
//! the newest one is inferred.

use std::fmt;
use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use progrnet_core::{
    decode_stage, forward, split_singleton, BundleManifest, FormatError, Prediction, ReconstructionState, StageBlob,
    Tensor,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;

use crate::error::ClientError;
use crate::http::{backoff, BundleClient};

/// Signal from controllers to the downloader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Run,
    Pause,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Downloading,
    Paused,
    Stopped,
    Complete,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::Downloading => "downloading",
            SessionStatus::Paused => "paused",
            SessionStatus::Stopped => "stopped",
            SessionStatus::Complete => "complete",
        })
    }
}

/// Milliseconds since session start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub transfer_start_ms: f64,
    pub transfer_end_ms: f64,
    pub infer_start_ms: Option<f64>,
    pub infer_end_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub bits: u32,
    pub bytes: u64,
    pub timing: StageTiming,
    /// Missing when the stage was skipped for inference or its inference is
    /// still running.
    pub prediction: Option<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub total_stages: usize,
    pub stages_received: usize,
    pub bytes_received: u64,
    pub status: SessionStatus,
    pub error: Option<String>,
    pub finished_ms: Option<f64>,
    pub stages: Vec<StageReport>,
}

impl SessionState {
    fn new(id: String) -> Self {
        Self {
            id,
            total_stages: 0,
            stages_received: 0,
            bytes_received: 0,
            status: SessionStatus::Downloading,
            error: None,
            finished_ms: None,
            stages: Vec::new(),
        }
    }

    pub fn predictions(&self) -> impl Iterator<Item = (&StageReport, &Prediction)> {
        self.stages.iter().filter_map(|s| s.prediction.as_ref().map(|p| (s, p)))
    }
}

/// One inference on an intermediate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: usize,
    pub bits: u32,
    pub prediction: Prediction,
    pub timing: StageTiming,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOptions {
    /// Overlap inference with the next download.
    pub concurrent: bool,
    /// Never request stages past this one.
    pub max_stages: Option<usize>,
    /// Extra latency added to every inference, for timing experiments.
    pub infer_delay: Duration,
    /// Retries per request on network failure.
    pub retries: u32,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            concurrent: true,
            max_stages: None,
            infer_delay: Duration::ZERO,
            retries: 3,
        }
    }
}

struct Shared {
    state: Mutex<SessionState>,
    control: watch::Sender<Control>,
    started: Instant,
}

/// Cloneable handle for observing and steering a running session.
#[derive(Clone)]
pub struct SessionController {
    shared: Arc<Shared>,
}

impl SessionController {
    fn new(id: String) -> Self {
        let (control, _) = watch::channel(Control::Run);
        Self {
            shared: Arc::new(Shared {
                state: Mutex::new(SessionState::new(id)),
                control,
                started: Instant::now(),
            }),
        }
    }

    pub fn id(&self) -> String {
        self.lock().id.clone()
    }

    /// Consistent copy of the current state.
    pub fn snapshot(&self) -> SessionState {
        self.lock().clone()
    }

    pub fn status(&self) -> SessionStatus {
        self.lock().status
    }

    pub fn pause(&self) -> Result<(), ClientError> {
        self.transition(
            "pause",
            &[SessionStatus::Downloading],
            SessionStatus::Paused,
            Control::Pause,
        )
    }

    pub fn resume(&self) -> Result<(), ClientError> {
        self.transition(
            "resume",
            &[SessionStatus::Paused],
            SessionStatus::Downloading,
            Control::Run,
        )
    }

    pub fn stop(&self) -> Result<(), ClientError> {
        self.transition(
            "stop",
            &[SessionStatus::Downloading, SessionStatus::Paused],
            SessionStatus::Stopped,
            Control::Stop,
        )
    }

    fn transition(
        &self,
        action: &'static str,
        from: &[SessionStatus],
        to: SessionStatus,
        signal: Control,
    ) -> Result<(), ClientError> {
        let mut state = self.lock();
        if !from.contains(&state.status) {
            return Err(ClientError::InvalidTransition {
                action,
                from: state.status,
            });
        }
        state.status = to;
        if to == SessionStatus::Stopped {
            state.finished_ms = Some(self.elapsed_ms());
        }
        self.shared.control.send_replace(signal);
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, SessionState> {
        self.shared.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn update<R>(&self, f: impl FnOnce(&mut SessionState) -> R) -> R {
        f(&mut self.lock())
    }

    fn subscribe(&self) -> watch::Receiver<Control> {
        self.shared.control.subscribe()
    }

    fn stopped(&self) -> bool {
        *self.shared.control.borrow() == Control::Stop
    }

    fn elapsed_ms(&self) -> f64 {
        self.shared.started.elapsed().as_secs_f64() * 1e3
    }

    /// Ends the session from the inside: complete, stopped by policy, or
    /// failed. A user stop that already happened is left alone.
    fn finish(&self, status: SessionStatus, error: Option<String>) {
        let now = self.elapsed_ms();
        self.update(|s| {
            if s.status != SessionStatus::Stopped {
                s.status = status;
                s.finished_ms = Some(now);
            }
            if error.is_some() {
                s.error = error;
            }
        });
        if status == SessionStatus::Stopped {
            self.shared.control.send_replace(Control::Stop);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub state: SessionState,
    pub total: Duration,
}

/// A running progressive download.
pub struct ProgressiveSession {
    controller: SessionController,
    results: mpsc::UnboundedReceiver<StageResult>,
    task: JoinHandle<Result<SessionSummary, ClientError>>,
}

impl ProgressiveSession {
    /// Spawns the session on the current tokio runtime.
    pub fn start(client: BundleClient, input: Tensor, options: SessionOptions) -> Self {
        Self::start_with_id(client, input, options, uuid::Uuid::new_v4().to_string())
    }

    pub fn start_with_id(client: BundleClient, input: Tensor, options: SessionOptions, id: String) -> Self {
        let controller = SessionController::new(id);
        let (results_tx, results) = mpsc::unbounded_channel();
        let ctx = Arc::new(Ctx {
            client,
            input,
            options,
            controller: controller.clone(),
            results: results_tx,
        });
        let task = tokio::spawn(run(ctx));
        Self {
            controller,
            results,
            task,
        }
    }

    pub fn controller(&self) -> SessionController {
        self.controller.clone()
    }

    /// Next emitted result, in stage order. `None` once the session is over.
    pub async fn next_result(&mut self) -> Option<StageResult> {
        self.results.recv().await
    }

    /// Waits for the session to end. Unread results are dropped.
    pub async fn finish(self) -> Result<SessionSummary, ClientError> {
        drop(self.results);
        self.task.await.map_err(|e| ClientError::Join(e.to_string()))?
    }

    /// Collects every result and waits for the end.
    pub async fn collect(mut self) -> Result<(Vec<StageResult>, SessionSummary), ClientError> {
        let mut out = Vec::new();
        while let Some(r) = self.next_result().await {
            out.push(r);
        }
        let summary = self.finish().await?;
        Ok((out, summary))
    }
}

struct Ctx {
    client: BundleClient,
    input: Tensor,
    options: SessionOptions,
    controller: SessionController,
    results: mpsc::UnboundedSender<StageResult>,
}

async fn run(ctx: Arc<Ctx>) -> Result<SessionSummary, ClientError> {
    let outcome = pipeline(&ctx).await;
    let c = &ctx.controller;
    let result = match outcome {
        Ok(all) => {
            c.finish(
                if all {
                    SessionStatus::Complete
                } else {
                    SessionStatus::Stopped
                },
                None,
            );
            Ok(())
        }
        Err(ClientError::Stopped) => Ok(()),
        Err(e) => {
            c.finish(SessionStatus::Stopped, Some(e.to_string()));
            Err(e)
        }
    };
    let state = c.snapshot();
    result.map(|()| SessionSummary {
        total: Duration::from_secs_f64(state.finished_ms.unwrap_or_else(|| c.elapsed_ms()) / 1e3),
        state,
    })
}

/// Returns whether every stage of the bundle was received.
async fn pipeline(ctx: &Arc<Ctx>) -> Result<bool, ClientError> {
    let c = &ctx.controller;
    let mut control = c.subscribe();
    let manifest = Arc::new(retrying(ctx.options.retries, &mut control, || ctx.client.manifest()).await?);
    check_input(&manifest, &ctx.input)?;
    let total = manifest.stage_count();
    let limit = ctx.options.max_stages.unwrap_or(total).min(total);
    c.update(|s| s.total_stages = total);

    let mut state = ReconstructionState::new(manifest.clone())?;
    let (snapshots, inbox) = mpsc::unbounded_channel();
    let worker = ctx
        .options
        .concurrent
        .then(|| tokio::spawn(infer_worker(ctx.clone(), inbox)));

    for stage in 1..=limit {
        wait_while_paused(&mut control).await?;
        download_stage(ctx, &manifest, &mut state, &mut control, stage).await?;
        if ctx.options.concurrent {
            // the worker only ends early when the session is stopping
            let _ = snapshots.send(state.clone());
        } else {
            infer(ctx, state.clone()).await?;
        }
    }
    drop(snapshots);
    if let Some(worker) = worker {
        worker.await.map_err(|e| ClientError::Join(e.to_string()))??;
    }
    if c.stopped() {
        return Err(ClientError::Stopped);
    }
    Ok(limit == total)
}

fn check_input(manifest: &BundleManifest, input: &Tensor) -> Result<(), ClientError> {
    if input.shape() != manifest.model.input_shape.as_slice() {
        return Err(ClientError::Inference {
            stage: 0,
            source: progrnet_core::InferenceError::InputShape {
                expected: manifest.model.input_shape.clone(),
                actual: input.shape().to_vec(),
            },
        });
    }
    Ok(())
}

async fn wait_while_paused(control: &mut watch::Receiver<Control>) -> Result<(), ClientError> {
    loop {
        match *control.borrow_and_update() {
            Control::Run => return Ok(()),
            Control::Stop => return Err(ClientError::Stopped),
            Control::Pause => {}
        }
        if control.changed().await.is_err() {
            return Err(ClientError::Stopped);
        }
    }
}

/// Runs `op` with retries on transport errors, giving up early on stop.
async fn retrying<T, F, Fut>(retries: u32, control: &mut watch::Receiver<Control>, mut op: F) -> Result<T, ClientError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<T, ClientError>>,
{
    let mut attempt = 0;
    loop {
        match op().await {
            Err(e) if e.is_retriable() && attempt < retries => {
                attempt += 1;
                tracing::warn!(attempt, error = %e, "retrying");
                tokio::select! {
                    _ = tokio::time::sleep(backoff(attempt)) => {}
                    r = wait_for_stop(control) => return Err(r),
                }
            }
            other => return other,
        }
    }
}

async fn wait_for_stop(control: &mut watch::Receiver<Control>) -> ClientError {
    while *control.borrow_and_update() != Control::Stop {
        if control.changed().await.is_err() {
            std::future::pending::<()>().await;
        }
    }
    ClientError::Stopped
}

/// Fetches, verifies and applies one stage. A checksum or length mismatch
/// triggers one re-fetch.
async fn download_stage(
    ctx: &Ctx,
    manifest: &BundleManifest,
    state: &mut ReconstructionState,
    control: &mut watch::Receiver<Control>,
    stage: usize,
) -> Result<(), ClientError> {
    let c = &ctx.controller;
    let path = format!("/stage/{stage}");
    let transfer_start_ms = c.elapsed_ms();
    let mut refetched = false;
    loop {
        let mut attempt = 0;
        let bytes = loop {
            let progress = |n: usize| c.update(|s| s.bytes_received += n as u64);
            match ctx.client.fetch(&path, control, progress).await {
                Err(e) if e.is_retriable() && attempt < ctx.options.retries => {
                    attempt += 1;
                    tracing::warn!(stage, attempt, error = %e, "stage download failed, retrying");
                    tokio::select! {
                        _ = tokio::time::sleep(backoff(attempt)) => {}
                        r = wait_for_stop(control) => return Err(r),
                    }
                }
                other => break other?,
            }
        };
        let transfer_end_ms = c.elapsed_ms();
        let blob = StageBlob { stage, bytes };
        match decode_stage(&blob, manifest) {
            Ok(planes) => {
                state
                    .apply(stage, &planes)
                    .map_err(|source| ClientError::Stage { stage, source })?;
                let report = StageReport {
                    stage,
                    bits: state.effective_bits(),
                    bytes: blob.bytes.len() as u64,
                    timing: StageTiming {
                        transfer_start_ms,
                        transfer_end_ms,
                        ..Default::default()
                    },
                    prediction: None,
                };
                c.update(|s| {
                    s.stages_received = stage;
                    s.stages.push(report);
                });
                return Ok(());
            }
            Err(FormatError::Checksum { .. } | FormatError::Length { .. }) if !refetched => {
                tracing::warn!(stage, "stage failed verification, fetching again");
                refetched = true;
            }
            Err(source) => return Err(ClientError::Stage { stage, source }),
        }
    }
}

async fn infer_worker(
    ctx: Arc<Ctx>,
    mut inbox: mpsc::UnboundedReceiver<ReconstructionState>,
) -> Result<(), ClientError> {
    while let Some(mut snapshot) = inbox.recv().await {
        while let Ok(newer) = inbox.try_recv() {
            snapshot = newer;
        }
        if ctx.controller.stopped() {
            break;
        }
        infer(&ctx, snapshot).await?;
    }
    Ok(())
}

/// Materializes a snapshot, runs the model and publishes the result unless
/// the session was stopped meanwhile.
async fn infer(ctx: &Ctx, snapshot: ReconstructionState) -> Result<(), ClientError> {
    let c = &ctx.controller;
    let stage = snapshot.received();
    let bits = snapshot.effective_bits();
    let infer_start_ms = c.elapsed_ms();
    let input = ctx.input.clone();
    let prediction = tokio::task::spawn_blocking(move || {
        let weights = snapshot
            .materialize()
            .map_err(|source| ClientError::Stage { stage, source })?;
        forward(&snapshot.manifest().model, &weights, &input).map_err(|source| ClientError::Inference { stage, source })
    })
    .await
    .map_err(|e| ClientError::Join(e.to_string()))??;
    if !ctx.options.infer_delay.is_zero() {
        tokio::time::sleep(ctx.options.infer_delay).await;
    }
    let infer_end_ms = c.elapsed_ms();
    if c.stopped() {
        return Ok(());
    }
    let timing = c.update(|s| {
        let report = &mut s.stages[stage - 1];
        report.timing.infer_start_ms = Some(infer_start_ms);
        report.timing.infer_end_ms = Some(infer_end_ms);
        report.prediction = Some(prediction.clone());
        report.timing.clone()
    });
    // the receiver may have been dropped by a caller that only wants the summary
    let _ = ctx.results.send(StageResult {
        stage,
        bits,
        prediction,
        timing,
    });
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingletonResult {
    pub prediction: Prediction,
    pub bytes: u64,
    pub transfer: Duration,
    pub infer: Duration,
    pub total: Duration,
}

/// Downloads the whole model in one request, reconstructs it at full
/// precision and runs it once.
pub async fn singleton_session(
    client: &BundleClient,
    input: &Tensor,
    options: &SessionOptions,
) -> Result<SingletonResult, ClientError> {
    let started = Instant::now();
    let (_keep, mut control) = watch::channel(Control::Run);
    let manifest = Arc::new(retrying(options.retries, &mut control, || client.manifest()).await?);
    check_input(&manifest, input)?;

    let mut refetched = false;
    let blobs = loop {
        let payload = retrying(options.retries, &mut control, || client.singleton()).await?;
        match split_singleton(&payload, &manifest) {
            Ok(blobs) => break blobs,
            Err(FormatError::Checksum { .. } | FormatError::Length { .. }) if !refetched => {
                refetched = true;
            }
            Err(source) => return Err(ClientError::Stage { stage: 0, source }),
        }
    };
    let transfer = started.elapsed();
    let bytes = manifest.payload_bytes();

    let model = manifest.model.clone();
    let input = input.clone();
    let prediction = tokio::task::spawn_blocking(move || {
        let stages = blobs.len();
        let mut state = ReconstructionState::new(manifest)?;
        for blob in &blobs {
            state.apply_blob(blob)?;
        }
        let weights = state.materialize()?;
        forward(&model, &weights, &input).map_err(|source| ClientError::Inference { stage: stages, source })
    })
    .await
    .map_err(|e| ClientError::Join(e.to_string()))??;
    if !options.infer_delay.is_zero() {
        tokio::time::sleep(options.infer_delay).await;
    }
    let total = started.elapsed();
    Ok(SingletonResult {
        prediction,
        bytes,
        transfer,
        infer: total - transfer,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_machine() {
        let c = SessionController::new("s".into());
        assert_eq!(c.status(), SessionStatus::Downloading);
        assert!(matches!(
            c.resume(),
            Err(ClientError::InvalidTransition { action: "resume", .. })
        ));
        c.pause().unwrap();
        assert_eq!(*c.subscribe().borrow(), Control::Pause);
        assert!(c.pause().is_err());
        c.resume().unwrap();
        assert_eq!(c.status(), SessionStatus::Downloading);
        c.stop().unwrap();
        assert!(c.stopped());
        assert!(matches!(
            c.resume(),
            Err(ClientError::InvalidTransition {
                from: SessionStatus::Stopped,
                ..
            })
        ));
        assert!(c.stop().is_err());
        assert!(c.snapshot().finished_ms.is_some());
    }

    #[test]
    fn stop_from_pause_and_complete_is_terminal() {
        let c = SessionController::new("s".into());
        c.pause().unwrap();
        c.stop().unwrap();
        assert_eq!(c.status(), SessionStatus::Stopped);

        let c = SessionController::new("t".into());
        c.finish(SessionStatus::Complete, None);
        assert!(c.pause().is_err());
        assert!(c.stop().is_err());
    }

    #[test]
    fn internal_finish_keeps_user_stop() {
        let c = SessionController::new("s".into());
        c.stop().unwrap();
        c.finish(SessionStatus::Complete, None);
        assert_eq!(c.status(), SessionStatus::Stopped);
    }

    #[test]
    fn status_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&SessionStatus::Paused).unwrap(), "\"paused\"");
    }
}
