//! Wire types shared by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::config::Diagnostic;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub config_toml: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidateResponse {
    /// True when no error-severity diagnostic is present.
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub config_toml: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub scenario: String,
    pub seed: u64,
    pub progress_done: u64,
    pub progress_total: u64,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub summary: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobList {
    pub jobs: Vec<JobStatus>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

// ---- synchronous closed-form operations ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    NoMux,
    Mux,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarModelRequest {
    /// Base configuration carrying clock, detectors and network.
    pub config_toml: String,
    pub layout: Layout,
    /// Mean pairs per clock frame.
    pub mu_frame: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarModelPoint {
    pub mu_frame: f64,
    pub rate_hz: f64,
    pub car: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarModelResponse {
    pub points: Vec<CarModelPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferMuRequest {
    pub config_toml: String,
    pub layout: Layout,
    pub rate_hz: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferMuResponse {
    pub mu_frame: f64,
    pub p_out: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingGainRequest {
    pub k_switches: u32,
    pub per_switch_loss_db: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingGainResponse {
    pub net_gain_db: f64,
    pub modes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermalRequest {
    pub mu: f64,
    pub n_max: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermalResponse {
    pub pmf: Vec<f64>,
    pub heralded_single_prob: f64,
    pub multi_pair_prob: f64,
}
