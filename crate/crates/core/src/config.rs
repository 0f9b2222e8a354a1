//! Run configuration: one TOML file per scenario, with validation that
//! returns diagnostics rather than failing on the first problem.

use crate::analysis::LossBudget;
use crate::detect::{DetectorConfig, GateMode};
use crate::network::{RoutingTable, SwitchNetwork};
use crate::timeline::{ClockConfig, Source, TimeBin};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CarSweepNomux,
    CarSweepMux,
    Histogram,
    HomScan,
    Enhancement,
    DesignSweep,
    DelayScan,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::CarSweepNomux => "car_sweep_nomux",
            Scenario::CarSweepMux => "car_sweep_mux",
            Scenario::Histogram => "histogram",
            Scenario::HomScan => "hom_scan",
            Scenario::Enhancement => "enhancement",
            Scenario::DesignSweep => "design_sweep",
            Scenario::DelayScan => "delay_scan",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Detectors {
    /// Herald detector (free-running superconducting detector chain);
    /// `efficiency` is the folded coupling x filter x detector value.
    pub herald: DetectorConfig,
    /// Heralded-photon detector (gated avalanche diode chain).
    pub heralded: DetectorConfig,
}

impl Default for Detectors {
    fn default() -> Self {
        Detectors {
            herald: DetectorConfig {
                efficiency: 0.01,
                dark_prob_per_bin: 1e-5,
                gate: GateMode::FreeRunning,
            },
            heralded: DetectorConfig {
                efficiency: 0.30,
                dark_prob_per_bin: 1e-5,
                gate: GateMode::GatedFrame,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Collection efficiency to the source output port (no detector).
    pub eta_pair_collection: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { eta_pair_collection: 0.30 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu_per_pulse: f64,
    /// Frames for this point; falls back to `clock.frames`.
    pub frames: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnhancementConfig {
    pub no_mux_points: Vec<SweepPoint>,
    pub mux_points: Vec<SweepPoint>,
    pub car_levels: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomScanConfig {
    pub mu_source1_per_pulse: f64,
    pub mu_source2_per_pulse: f64,
    pub delay_grid_ps: Vec<f64>,
    pub frames_per_point: u64,
    pub overlap_sigma_ps: f64,
    pub intrinsic_overlap_max: f64,
    /// Reference-source herald chain.
    pub eta_herald2: f64,
    pub dark_herald2: f64,
    /// Source outputs to the coupler ports (network excluded for port 1).
    pub arm1_transmission: f64,
    pub arm2_transmission: f64,
    pub output_detector_eta: f64,
    pub output_detector_dark: f64,
    /// Diagnostic cap on sampled pair numbers (single-pair limit).
    #[serde(default)]
    pub pair_cap: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DelayScanConfig {
    pub lo_ns: f64,
    pub hi_ns: f64,
    pub step_ns: f64,
    pub frames_per_point: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignConfig {
    pub k_grid: Vec<u32>,
    pub loss_grid_db: Vec<f64>,
    pub mu_reference_per_frame: f64,
}

fn default_active_bins() -> Vec<TimeBin> {
    TimeBin::ALL.to_vec()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceConfig {
    pub mu_per_pulse: f64,
    #[serde(default = "default_active_bins")]
    pub active_bins: Vec<TimeBin>,
    #[serde(default)]
    pub bin_mu_scale: Option<[f64; 4]>,
    #[serde(default)]
    pub dump_events: bool,
    #[serde(default)]
    pub dump_routes: bool,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            mu_per_pulse: 0.05,
            active_bins: default_active_bins(),
            bin_mu_scale: None,
            dump_events: false,
            dump_routes: false,
        }
    }
}

impl SourceConfig {
    pub fn to_source(&self) -> Source {
        Source {
            mu_per_pulse: self.mu_per_pulse,
            active_bins: self.active_bins.clone(),
            bin_mu_scale: self.bin_mu_scale,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 means all available. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub network: SwitchNetwork,
    #[serde(default)]
    pub routing: RoutingTable,
    #[serde(default)]
    pub detectors: Detectors,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub enhancement: Option<EnhancementConfig>,
    #[serde(default)]
    pub hom: Option<HomScanConfig>,
    #[serde(default)]
    pub delay_scan: Option<DelayScanConfig>,
    #[serde(default)]
    pub design: Option<DesignConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn error(field: &str, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, field: field.to_string(), message: message.into() }
    }
    fn warning(field: &str, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, field: field.to_string(), message: message.into() }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        output_dir: Option<PathBuf>,
        workers: Option<usize>,
    ) {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        if let Some(dir) = output_dir {
            self.output_dir = dir;
        }
        if let Some(w) = workers {
            self.workers = w;
        }
    }

    pub fn loss_budget(&self) -> LossBudget {
        LossBudget {
            eta_heralding: self.detectors.herald.efficiency,
            eta_heralded_common: self.detectors.heralded.efficiency,
            eta_pair_collection: self.budget.eta_pair_collection,
        }
    }

    /// Stable digest of the effective configuration for output headers.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }

    /// Exhaustive invariant checks; returns diagnostics instead of
    /// failing fast. A config is runnable when no `Error` is present.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if let Err(e) = self.clock.validate() {
            out.push(Diagnostic::error("clock", e.to_string()));
        }
        if let Err(e) = self.network.validate() {
            out.push(Diagnostic::error("network", e.to_string()));
        }
        if let Err(e) = self.routing.validate() {
            out.push(Diagnostic::error("routing", e.to_string()));
        }
        if let Err(e) = self.detectors.herald.validate("detectors.herald") {
            out.push(Diagnostic::error("detectors.herald", e.to_string()));
        }
        if let Err(e) = self.detectors.heralded.validate("detectors.heralded") {
            out.push(Diagnostic::error("detectors.heralded", e.to_string()));
        }
        if let Err(e) = self.loss_budget().validate() {
            out.push(Diagnostic::error("budget", e.to_string()));
        }
        if self.budget.eta_pair_collection < self.detectors.heralded.efficiency {
            out.push(Diagnostic::warning(
                "budget.eta_pair_collection",
                "collection to the output port is below the full heralded detection chain; \
                 check the component products",
            ));
        }
        if let Err(e) = self.source.to_source().validate() {
            out.push(Diagnostic::error("source", e.to_string()));
        }
        if self.source.mu_per_pulse > 0.5 {
            out.push(Diagnostic::warning("source.mu_per_pulse", "mean pair number above 0.5 per pulse"));
        }
        if self.network.mean_route_loss_db() < 0.5 {
            out.push(Diagnostic::warning(
                "network.path_loss_db",
                format!(
                    "mean route loss {:.2} dB is below 0.5 dB; physically optimistic",
                    self.network.mean_route_loss_db()
                ),
            ));
        }
        if self.source.dump_events && self.clock.frames > 1_000_000 {
            out.push(Diagnostic::warning("source.dump_events", "event trace over more than 1e6 frames"));
        }

        let need = |out: &mut Vec<Diagnostic>, present: bool, field: &str| {
            if !present {
                out.push(Diagnostic::error(field, format!("scenario {} requires [{field}]", self.scenario.name())));
            }
        };
        match self.scenario {
            Scenario::CarSweepNomux | Scenario::CarSweepMux => {
                need(&mut out, self.sweep.is_some(), "sweep");
                if let Some(sweep) = &self.sweep {
                    if sweep.points.is_empty() {
                        out.push(Diagnostic::error("sweep.points", "mu grid must be nonempty"));
                    }
                    for (i, p) in sweep.points.iter().enumerate() {
                        if !(p.mu_per_pulse >= 0.0) {
                            out.push(Diagnostic::error(
                                &format!("sweep.points[{i}].mu_per_pulse"),
                                "must be >= 0",
                            ));
                        }
                    }
                }
                if self.scenario == Scenario::CarSweepNomux && self.source.active_bins.len() != 1 {
                    out.push(Diagnostic::error(
                        "source.active_bins",
                        "car_sweep_nomux pumps exactly one time bin",
                    ));
                }
            }
            Scenario::Histogram => {
                if self.source.active_bins.len() > 1 && self.clock.bins_per_frame != 4 {
                    out.push(Diagnostic::error("clock.bins_per_frame", "the network routes 4 bins"));
                }
            }
            Scenario::HomScan => {
                need(&mut out, self.hom.is_some(), "hom");
                if let Some(h) = &self.hom {
                    if h.delay_grid_ps.is_empty() {
                        out.push(Diagnostic::error("hom.delay_grid_ps", "delay grid must be nonempty"));
                    }
                    if !(h.overlap_sigma_ps > 0.0) {
                        out.push(Diagnostic::error("hom.overlap_sigma_ps", "must be positive"));
                    }
                    if !(0.0..=1.0).contains(&h.intrinsic_overlap_max) {
                        out.push(Diagnostic::error("hom.intrinsic_overlap_max", "must be in [0,1]"));
                    }
                    for (name, v) in [
                        ("hom.eta_herald2", h.eta_herald2),
                        ("hom.arm1_transmission", h.arm1_transmission),
                        ("hom.arm2_transmission", h.arm2_transmission),
                        ("hom.output_detector_eta", h.output_detector_eta),
                    ] {
                        if !(0.0..=1.0).contains(&v) {
                            out.push(Diagnostic::error(name, "must be in [0,1]"));
                        }
                    }
                    if h.frames_per_point == 0 {
                        out.push(Diagnostic::error("hom.frames_per_point", "must be positive"));
                    }
                }
            }
            Scenario::Enhancement => {
                need(&mut out, self.enhancement.is_some(), "enhancement");
                if let Some(e) = &self.enhancement {
                    if e.no_mux_points.is_empty() || e.mux_points.is_empty() {
                        out.push(Diagnostic::error("enhancement", "both mu grids must be nonempty"));
                    }
                    if e.car_levels.is_empty() {
                        out.push(Diagnostic::error("enhancement.car_levels", "must be nonempty"));
                    }
                }
            }
            Scenario::DesignSweep => {
                need(&mut out, self.design.is_some(), "design");
                if let Some(d) = &self.design {
                    if d.k_grid.is_empty() || d.loss_grid_db.is_empty() {
                        out.push(Diagnostic::error("design", "grids must be nonempty"));
                    }
                }
            }
            Scenario::DelayScan => {
                need(&mut out, self.delay_scan.is_some(), "delay_scan");
                if let Some(d) = &self.delay_scan {
                    if !(d.step_ns > 0.0) {
                        out.push(Diagnostic::error("delay_scan.step_ns", "must be positive"));
                    }
                    if d.hi_ns < d.lo_ns {
                        out.push(Diagnostic::error("delay_scan", "empty range"));
                    }
                }
            }
        }
        out
    }

    /// Validation gate: error if any `Error`-severity diagnostic exists.
    pub fn ensure_valid(&self) -> Result<()> {
        let diags = self.validate();
        let errors: Vec<&Diagnostic> =
            diags.iter().filter(|d| d.severity == Severity::Error).collect();
        if errors.is_empty() {
            Ok(())
        } else {
            let joined = errors
                .iter()
                .map(|d| format!("{}: {}", d.field, d.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::config(joined))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(scenario: &str, extra: &str) -> String {
        format!(
            r#"
scenario = "{scenario}"
master_seed = 7
output_dir = "out"
{extra}
"#
        )
    }

    #[test]
    fn parses_minimal_histogram_config() {
        let cfg = RunConfig::from_toml_str(&minimal("histogram", "")).unwrap();
        assert_eq!(cfg.scenario, Scenario::Histogram);
        assert!(cfg.ensure_valid().is_ok());
        assert_eq!(cfg.network.mean_route_loss_db(), 2.8);
    }

    #[test]
    fn sweep_requires_points() {
        let cfg = RunConfig::from_toml_str(&minimal(
            "car_sweep_nomux",
            "[sweep]\npoints = []\n[source]\nmu_per_pulse = 0.05\nactive_bins = [\"t1\"]",
        ))
        .unwrap();
        let diags = cfg.validate();
        assert!(diags.iter().any(|d| d.field == "sweep.points" && d.severity == Severity::Error));
    }

    #[test]
    fn bad_efficiency_names_field() {
        let mut cfg = RunConfig::from_toml_str(&minimal("histogram", "")).unwrap();
        cfg.detectors.herald.efficiency = 1.5;
        let diags = cfg.validate();
        assert!(diags
            .iter()
            .any(|d| d.field == "detectors.herald" && d.message.contains("efficiency")));
    }

    #[test]
    fn clock_mismatch_is_an_error() {
        let mut cfg = RunConfig::from_toml_str(&minimal("histogram", "")).unwrap();
        cfg.clock.bin_spacing_ns = 30.0;
        assert!(cfg.ensure_valid().is_err());
    }

    #[test]
    fn digest_stable_and_sensitive() {
        let a = RunConfig::from_toml_str(&minimal("histogram", "")).unwrap();
        let b = RunConfig::from_toml_str(&minimal("histogram", "")).unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = RunConfig::from_toml_str(&minimal("histogram", "")).unwrap();
        c.master_seed = 8;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn parse_error_mentions_location() {
        let err = RunConfig::from_toml_str("scenario = \"histogram\"\nmaster_seed = \"x\"")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line"), "{err}");
    }
}
