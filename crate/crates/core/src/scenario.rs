//! Scenario orchestration: one config in, deterministic CSV artifacts
//! out. Every scenario is reproducible bit for bit for a fixed
//! (config, seed), independent of the worker count.

use crate::analysis::{
    enhancement_at_car, enhancement_err, output_probability, CarCurve, CarModel, CurveLabel,
    CurvePoint, design_sweep,
};
use crate::config::{RunConfig, Scenario, SweepPoint};
use crate::engine::{
    run_hom_point, run_mux_tia, run_nomux_tia, scan_offsets, scan_switch_delay, HomParams, TiaParams,
    TiaRun,
};
use crate::hom::{noise_correct, visibility, OutputDetector};
use crate::output::{fmt_f64, CsvFile};
use crate::rng::derive_seed;
use crate::thermal::no_click_prob;
use crate::timeline::{generate_events, Source, TimeBin};
use crate::{Error, Result};
use serde_json::json;
use std::path::PathBuf;

const TAG_CURVE_NOMUX: u64 = 0x10;
const TAG_CURVE_MUX: u64 = 0x20;
const TAG_HISTOGRAM: u64 = 0x30;
const TAG_HOM: u64 = 0x40;
const TAG_DELAY: u64 = 0x50;

pub type Progress<'a> = &'a (dyn Fn(u64, u64) + Sync);

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Monte Carlo vs closed-form model at one grid point.
#[derive(Clone, Copy, Debug)]
pub struct ModelComparison {
    pub mu_frame_true: f64,
    pub rate_mc_hz: f64,
    pub rate_model_hz: f64,
    pub rate_sigma_hz: f64,
    pub car_mc: f64,
    pub car_model: f64,
    pub car_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct CurveRun {
    pub curve: CarCurve,
    pub comparisons: Vec<ModelComparison>,
    /// Herald clicks per frame at each point (for the ideal-enhancement
    /// ratio from heralding singles rates).
    pub herald_clicks_per_frame: Vec<f64>,
}

fn mu_units(label: CurveLabel, bins: u32) -> f64 {
    match label {
        CurveLabel::NoMux => 1.0,
        CurveLabel::Mux => bins as f64,
    }
}

/// Runs one CAR curve (Monte Carlo per grid point) and evaluates the
/// closed-form model alongside it.
pub fn run_curve(
    cfg: &RunConfig,
    label: CurveLabel,
    points: &[SweepPoint],
    network_override: Option<&crate::network::SwitchNetwork>,
    progress: Progress,
    progress_base: u64,
    progress_total: u64,
) -> Result<CurveRun> {
    let budget = cfg.loss_budget();
    let net = network_override.unwrap_or(&cfg.network).clone();
    let model = CarModel::new(
        &cfg.clock,
        &budget,
        cfg.detectors.herald.dark_prob_per_bin,
        cfg.detectors.heralded.dark_prob_per_bin,
        match label {
            CurveLabel::NoMux => None,
            CurveLabel::Mux => Some(net.clone()),
        },
    );
    let tag = match label {
        CurveLabel::NoMux => TAG_CURVE_NOMUX,
        CurveLabel::Mux => TAG_CURVE_MUX,
    };
    let mut curve_points = Vec::new();
    let mut comparisons = Vec::new();
    let mut herald_rates = Vec::new();
    for (i, pt) in points.iter().enumerate() {
        let mut clock = cfg.clock.clone();
        clock.frames = pt.frames.unwrap_or(cfg.clock.frames);
        let source = match label {
            CurveLabel::Mux => Source::new(pt.mu_per_pulse, TimeBin::ALL.to_vec()),
            CurveLabel::NoMux => {
                let bin = if cfg.source.active_bins.len() == 1 {
                    cfg.source.active_bins[0]
                } else {
                    TimeBin::T1
                };
                Source::new(pt.mu_per_pulse, vec![bin])
            }
        };
        let params = TiaParams {
            clock: &clock,
            source: &source,
            eta_herald: cfg.detectors.herald.efficiency,
            dark_herald: cfg.detectors.herald.dark_prob_per_bin,
            eta_signal: cfg.detectors.heralded.efficiency,
            dark_signal: cfg.detectors.heralded.dark_prob_per_bin,
            workers: cfg.workers,
            run_seed: derive_seed(&[cfg.master_seed, tag, i as u64]),
        };
        let run: TiaRun = match label {
            CurveLabel::Mux => run_mux_tia(&params, &net, &cfg.routing, false)?.0,
            CurveLabel::NoMux => run_nomux_tia(&params)?,
        };
        let mu_frame_true = pt.mu_per_pulse * mu_units(label, cfg.clock.bins_per_frame);
        let model_pt = model.point(mu_frame_true)?;
        let duration_s = clock.frames as f64 * clock.frame_period_ns * 1e-9;
        let (mu_hat, p_out) = output_probability(run.rate_hz, &model, budget.eta_pair_collection)?;
        curve_points.push(CurvePoint {
            mu_frame: mu_hat,
            rate_hz: run.rate_hz,
            car: run.car.car,
            car_err: run.car.car_err,
            p_out,
            coincidences: run.car.coincidences,
            accidentals: run.car.accidentals,
        });
        comparisons.push(ModelComparison {
            mu_frame_true,
            rate_mc_hz: run.rate_hz,
            rate_model_hz: model_pt.rate_hz,
            rate_sigma_hz: (run.car.coincidences.max(1) as f64).sqrt() / duration_s,
            car_mc: run.car.car,
            car_model: model_pt.car,
            car_sigma: run.car.car_err,
        });
        herald_rates.push(run.stop_count as f64 / clock.frames as f64);
        progress(progress_base + i as u64 + 1, progress_total);
    }
    curve_points.sort_by(|a, b| a.rate_hz.partial_cmp(&b.rate_hz).unwrap());
    let curve = CarCurve { label, points: curve_points };
    curve.validate()?;
    Ok(CurveRun { curve, comparisons, herald_clicks_per_frame: herald_rates })
}

fn write_curve_csv(
    dir: &std::path::Path,
    name: &str,
    cfg: &RunConfig,
    run: &CurveRun,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut csv = CsvFile::new(dir, name, cfg, &["mu", "rate_hz", "C", "A", "car", "car_err"]);
    for p in &run.curve.points {
        csv.row(&[
            fmt_f64(p.mu_frame),
            fmt_f64(p.rate_hz),
            p.coincidences.to_string(),
            p.accidentals.to_string(),
            fmt_f64(p.car),
            fmt_f64(p.car_err),
        ]);
    }
    files.push(csv.finish()?);
    let model_name = format!("model_comparison_{}.csv", name.trim_end_matches(".csv"));
    let mut csv = CsvFile::new(
        dir,
        &model_name,
        cfg,
        &["mu_frame", "rate_mc_hz", "rate_model_hz", "rate_sigma_hz", "car_mc", "car_model", "car_sigma"],
    );
    for c in &run.comparisons {
        csv.row(&[
            fmt_f64(c.mu_frame_true),
            fmt_f64(c.rate_mc_hz),
            fmt_f64(c.rate_model_hz),
            fmt_f64(c.rate_sigma_hz),
            fmt_f64(c.car_mc),
            fmt_f64(c.car_model),
            fmt_f64(c.car_sigma),
        ]);
    }
    files.push(csv.finish()?);
    Ok(files)
}

fn scenario_car_sweep(cfg: &RunConfig, label: CurveLabel, progress: Progress) -> Result<RunOutput> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::config("missing [sweep]"))?;
    let total = sweep.points.len() as u64;
    let run = run_curve(cfg, label, &sweep.points, None, progress, 0, total)?;
    let name = match label {
        CurveLabel::NoMux => "car_nomux.csv",
        CurveLabel::Mux => "car_mux.csv",
    };
    let files = write_curve_csv(&cfg.output_dir, name, cfg, &run)?;
    let summary = json!({
        "points": run.curve.points.len(),
        "car_min": run.curve.points.iter().map(|p| p.car).fold(f64::INFINITY, f64::min),
        "car_max": run.curve.points.iter().map(|p| p.car).fold(0.0, f64::max),
    });
    Ok(RunOutput { files, summary })
}

fn scenario_enhancement(cfg: &RunConfig, progress: Progress) -> Result<RunOutput> {
    let e = cfg.enhancement.as_ref().ok_or_else(|| Error::config("missing [enhancement]"))?;
    let total = (e.no_mux_points.len() + e.mux_points.len()) as u64;
    let nomux = run_curve(cfg, CurveLabel::NoMux, &e.no_mux_points, None, progress, 0, total)?;
    let mux = run_curve(
        cfg,
        CurveLabel::Mux,
        &e.mux_points,
        None,
        progress,
        e.no_mux_points.len() as u64,
        total,
    )?;
    let mut files = Vec::new();
    files.extend(write_curve_csv(&cfg.output_dir, "car_nomux.csv", cfg, &nomux)?);
    files.extend(write_curve_csv(&cfg.output_dir, "car_mux.csv", cfg, &mux)?);

    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "enhancement.csv",
        cfg,
        &["car_level", "p_out_nomux", "p_out_mux", "factor", "factor_err"],
    );
    let mut factors = Vec::new();
    let interp = |curve: &CarCurve, level: f64, field: fn(&CurvePoint) -> f64| -> Result<f64> {
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.car, field(p))).collect();
        crate::analysis::interp_log_log_points(&pts, level)
    };
    for &level in &e.car_levels {
        let p_nm = interp(&nomux.curve, level, |p| p.p_out)?;
        let p_mx = interp(&mux.curve, level, |p| p.p_out)?;
        let factor = enhancement_at_car(&nomux.curve, &mux.curve, level)?;
        let err = enhancement_err(&nomux.curve, &mux.curve, level)?;
        factors.push(factor);
        csv.row(&[fmt_f64(level), fmt_f64(p_nm), fmt_f64(p_mx), fmt_f64(factor), fmt_f64(err)]);
    }
    files.push(csv.finish()?);

    // Ideal enhancement from heralding singles rates at matched CAR.
    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "ideal_enhancement.csv",
        cfg,
        &["car_level", "herald_per_frame_nomux", "herald_per_frame_mux", "ideal_factor"],
    );
    let herald_curve = |run: &CurveRun| -> Vec<(f64, f64)> {
        run.curve
            .points
            .iter()
            .zip(&run.herald_clicks_per_frame)
            .map(|(p, &h)| (p.car, h))
            .collect()
    };
    let hn = herald_curve(&nomux);
    let hm = herald_curve(&mux);
    for &level in &e.car_levels {
        let a = crate::analysis::interp_log_log_points(&hn, level)?;
        let b = crate::analysis::interp_log_log_points(&hm, level)?;
        csv.row(&[fmt_f64(level), fmt_f64(a), fmt_f64(b), fmt_f64(b / a)]);
    }
    files.push(csv.finish()?);

    let mean = factors.iter().sum::<f64>() / factors.len().max(1) as f64;
    let summary = json!({
        "factor_mean": mean,
        "factor_min": factors.iter().copied().fold(f64::INFINITY, f64::min),
        "factor_max": factors.iter().copied().fold(0.0, f64::max),
    });
    Ok(RunOutput { files, summary })
}

/// Histogram scenario result, exposed for tests.
pub struct HistogramRun {
    pub tia: TiaRun,
    pub suppression_ratio: f64,
}

pub fn run_histogram(cfg: &RunConfig) -> Result<HistogramRun> {
    let source = cfg.source.to_source();
    let params = TiaParams {
        clock: &cfg.clock,
        source: &source,
        eta_herald: cfg.detectors.herald.efficiency,
        dark_herald: cfg.detectors.herald.dark_prob_per_bin,
        eta_signal: cfg.detectors.heralded.efficiency,
        dark_signal: cfg.detectors.heralded.dark_prob_per_bin,
        workers: cfg.workers,
        run_seed: derive_seed(&[cfg.master_seed, TAG_HISTOGRAM]),
    };
    let tia = if source.active_bins.len() > 1 {
        run_mux_tia(&params, &cfg.network, &cfg.routing, false)?.0
    } else {
        run_nomux_tia(&params)?
    };
    let sum_named = |prefix: &str, labels: &[&str]| -> u64 {
        tia.peak_counts
            .iter()
            .filter(|(name, _, _)| labels.iter().any(|l| name == &format!("{prefix}_{l}")))
            .map(|(_, _, c)| c)
            .sum()
    };
    let visible = sum_named("accidental", &["t1", "t3"]);
    let suppressed = sum_named("accidental", &["t2", "t4"]);
    let suppression_ratio =
        if suppressed == 0 { f64::INFINITY } else { visible as f64 / suppressed as f64 };
    Ok(HistogramRun { tia, suppression_ratio })
}

fn scenario_histogram(cfg: &RunConfig, progress: Progress) -> Result<RunOutput> {
    let run = run_histogram(cfg)?;
    progress(1, 2);
    let mut files = Vec::new();
    let mut csv = CsvFile::new(&cfg.output_dir, "histogram.csv", cfg, &["delay_ns", "count"]);
    for (i, &c) in run.tia.histogram.counts.iter().enumerate() {
        csv.row(&[i.to_string(), c.to_string()]);
    }
    files.push(csv.finish()?);
    let mut csv = CsvFile::new(&cfg.output_dir, "peaks.csv", cfg, &["label", "center_ns", "counts"]);
    for (label, center, count) in &run.tia.peak_counts {
        csv.row(&[label.clone(), fmt_f64(*center), count.to_string()]);
    }
    files.push(csv.finish()?);

    if cfg.source.dump_events {
        let mut clock = cfg.clock.clone();
        clock.frames = cfg.clock.frames;
        let events = generate_events(
            &clock,
            &cfg.source.to_source(),
            derive_seed(&[cfg.master_seed, TAG_HISTOGRAM]),
        )?;
        let mut csv =
            CsvFile::new(&cfg.output_dir, "event_trace.csv", cfg, &["frame", "bin", "pairs", "t_gen_ps"]);
        for e in &events {
            csv.row(&[
                e.frame.to_string(),
                e.bin.to_string(),
                e.pairs.to_string(),
                e.t_gen_ps.to_string(),
            ]);
        }
        files.push(csv.finish()?);
    }
    if cfg.source.dump_routes && cfg.source.active_bins.len() > 1 {
        let source = cfg.source.to_source();
        let params = TiaParams {
            clock: &cfg.clock,
            source: &source,
            eta_herald: cfg.detectors.herald.efficiency,
            dark_herald: cfg.detectors.herald.dark_prob_per_bin,
            eta_signal: cfg.detectors.heralded.efficiency,
            dark_signal: cfg.detectors.heralded.dark_prob_per_bin,
            workers: cfg.workers,
            run_seed: derive_seed(&[cfg.master_seed, TAG_HISTOGRAM]),
        };
        let (_, trace) = run_mux_tia(&params, &cfg.network, &cfg.routing, true)?;
        let mut csv = CsvFile::new(
            &cfg.output_dir,
            "route_trace.csv",
            cfg,
            &["frame", "bin", "code", "pairs", "blocked", "t_out_ps", "survivors"],
        );
        for r in trace.unwrap_or_default() {
            csv.row(&[
                r.frame.to_string(),
                r.bin.label().to_string(),
                r.code,
                r.pairs.to_string(),
                r.blocked.to_string(),
                r.t_out_ps.to_string(),
                r.survivors.to_string(),
            ]);
        }
        files.push(csv.finish()?);
    }
    progress(2, 2);
    let summary = json!({
        "car": run.tia.car.car,
        "coincidences": run.tia.car.coincidences,
        "accidentals": run.tia.car.accidentals,
        "suppression_ratio": run.suppression_ratio,
    });
    Ok(RunOutput { files, summary })
}

/// Interference scan result, exposed for tests.
pub struct HomScanRun {
    pub points: Vec<crate::engine::HomPoint>,
    pub v_raw: f64,
    pub v_net: f64,
    pub v_twofold: f64,
}

pub fn run_hom_scan(cfg: &RunConfig, progress: Progress) -> Result<HomScanRun> {
    let h = cfg.hom.as_ref().ok_or_else(|| Error::config("missing [hom]"))?;
    let mut clock = cfg.clock.clone();
    clock.frames = h.frames_per_point;
    let params = HomParams {
        clock,
        network: cfg.network.clone(),
        table: cfg.routing.clone(),
        mu_source1: h.mu_source1_per_pulse,
        mu_source2: h.mu_source2_per_pulse,
        eta_herald1: cfg.detectors.herald.efficiency,
        dark_herald1: cfg.detectors.herald.dark_prob_per_bin,
        eta_herald2: h.eta_herald2,
        dark_herald2: h.dark_herald2,
        arm1_transmission: h.arm1_transmission,
        arm2_transmission: h.arm2_transmission,
        output_detector: OutputDetector { eta: h.output_detector_eta, dark: h.output_detector_dark },
        overlap_sigma_ps: h.overlap_sigma_ps,
        intrinsic_overlap_max: h.intrinsic_overlap_max,
        pair_cap: h.pair_cap,
        workers: cfg.workers,
    };
    let total = h.delay_grid_ps.len() as u64;
    let mut points = Vec::new();
    for (i, &dt) in h.delay_grid_ps.iter().enumerate() {
        let seed = derive_seed(&[cfg.master_seed, TAG_HOM, i as u64]);
        points.push(run_hom_point(&params, seed, dt)?);
        progress(i as u64 + 1, total);
    }
    let raw: Vec<(f64, f64)> = points.iter().map(|p| (p.folds.delta_t_ps, p.folds.c_raw)).collect();
    let net: Vec<(f64, f64)> =
        points.iter().map(|p| (p.folds.delta_t_ps, noise_correct(&p.folds))).collect();
    let two: Vec<(f64, f64)> = points.iter().map(|p| (p.folds.delta_t_ps, p.twofold_raw)).collect();
    let v_raw = visibility(&raw)?.visibility;
    let v_net = visibility(&net)?.visibility;
    let v_twofold = visibility(&two)?.visibility;
    Ok(HomScanRun { points, v_raw, v_net, v_twofold })
}

fn scenario_hom(cfg: &RunConfig, progress: Progress) -> Result<RunOutput> {
    let run = run_hom_scan(cfg, progress)?;
    let mut files = Vec::new();
    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "hom_fourfold.csv",
        cfg,
        &["delta_t_ps", "c_raw", "c_n1", "c_n2", "c_d", "c_net", "visibility_fit"],
    );
    for p in &run.points {
        csv.row(&[
            fmt_f64(p.folds.delta_t_ps),
            fmt_f64(p.folds.c_raw),
            fmt_f64(p.folds.c_n1),
            fmt_f64(p.folds.c_n2),
            fmt_f64(p.folds.c_d),
            fmt_f64(noise_correct(&p.folds)),
            fmt_f64(run.v_raw),
        ]);
    }
    files.push(csv.finish()?);
    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "hom_twofold.csv",
        cfg,
        &["delta_t_ps", "c_raw", "visibility_fit"],
    );
    for p in &run.points {
        csv.row(&[fmt_f64(p.folds.delta_t_ps), fmt_f64(p.twofold_raw), fmt_f64(run.v_twofold)]);
    }
    files.push(csv.finish()?);
    let mut csv =
        CsvFile::new(&cfg.output_dir, "hom_summary.csv", cfg, &["curve", "visibility"]);
    csv.row(&["fourfold_raw".into(), fmt_f64(run.v_raw)]);
    csv.row(&["fourfold_corrected".into(), fmt_f64(run.v_net)]);
    csv.row(&["twofold_raw".into(), fmt_f64(run.v_twofold)]);
    files.push(csv.finish()?);
    let summary = json!({
        "v_raw": run.v_raw,
        "v_corrected": run.v_net,
        "v_twofold": run.v_twofold,
    });
    Ok(RunOutput { files, summary })
}

fn scenario_delay_scan(cfg: &RunConfig, progress: Progress) -> Result<RunOutput> {
    let d = cfg.delay_scan.as_ref().ok_or_else(|| Error::config("missing [delay_scan]"))?;
    let offsets = scan_offsets(d.lo_ns, d.hi_ns, d.step_ns)?;
    let mut clock = cfg.clock.clone();
    clock.frames = d.frames_per_point;
    let source = Source::new(cfg.source.mu_per_pulse, TimeBin::ALL.to_vec());
    let params = TiaParams {
        clock: &clock,
        source: &source,
        eta_herald: cfg.detectors.herald.efficiency,
        dark_herald: cfg.detectors.herald.dark_prob_per_bin,
        eta_signal: cfg.detectors.heralded.efficiency,
        dark_signal: cfg.detectors.heralded.dark_prob_per_bin,
        workers: cfg.workers,
        run_seed: derive_seed(&[cfg.master_seed, TAG_DELAY]),
    };
    let scan = scan_switch_delay(&params, &cfg.network, &cfg.routing, &offsets)?;
    progress(1, 1);
    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "delay_scan.csv",
        cfg,
        &["electronic_delay_ns", "coincidences"],
    );
    for (off, c) in &scan {
        csv.row(&[fmt_f64(*off), c.to_string()]);
    }
    let file = csv.finish()?;
    let best = scan.iter().max_by_key(|(_, c)| *c).map(|(o, _)| *o).unwrap_or(f64::NAN);
    Ok(RunOutput { files: vec![file], summary: json!({ "argmax_offset_ns": best }) })
}

fn scenario_design(cfg: &RunConfig, progress: Progress) -> Result<RunOutput> {
    let d = cfg.design.as_ref().ok_or_else(|| Error::config("missing [design]"))?;
    let rows = design_sweep(
        &d.k_grid,
        &d.loss_grid_db,
        d.mu_reference_per_frame,
        cfg.budget.eta_pair_collection,
    )?;
    progress(1, 1);
    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "design_table.csv",
        cfg,
        &["k", "modes", "per_switch_loss_db", "net_gain_db"],
    );
    for r in &rows {
        csv.row(&[
            r.k_switches.to_string(),
            r.modes.to_string(),
            fmt_f64(r.per_switch_loss_db),
            fmt_f64(r.net_gain_db),
        ]);
    }
    let mut files = vec![csv.finish()?];
    let mut csv = CsvFile::new(
        &cfg.output_dir,
        "design_output.csv",
        cfg,
        &["k", "per_switch_loss_db", "p_out", "break_even"],
    );
    for r in &rows {
        csv.row(&[
            r.k_switches.to_string(),
            fmt_f64(r.per_switch_loss_db),
            fmt_f64(r.p_out),
            r.break_even.to_string(),
        ]);
    }
    files.push(csv.finish()?);
    Ok(RunOutput { files, summary: json!({ "rows": rows.len() }) })
}

/// Runs a validated configuration and writes its artifacts.
pub fn run_scenario(cfg: &RunConfig, progress: Progress) -> Result<RunOutput> {
    cfg.ensure_valid()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    match cfg.scenario {
        Scenario::CarSweepNomux => scenario_car_sweep(cfg, CurveLabel::NoMux, progress),
        Scenario::CarSweepMux => scenario_car_sweep(cfg, CurveLabel::Mux, progress),
        Scenario::Histogram => scenario_histogram(cfg, progress),
        Scenario::HomScan => scenario_hom(cfg, progress),
        Scenario::Enhancement => scenario_enhancement(cfg, progress),
        Scenario::DesignSweep => scenario_design(cfg, progress),
        Scenario::DelayScan => scenario_delay_scan(cfg, progress),
    }
}

/// Herald stop-click probability per frame under the closed-form model,
/// used by diagnostics.
pub fn herald_click_per_frame(mu_per_pulse: f64, bins: u32, eta: f64, dark: f64) -> f64 {
    let h = 1.0 - (1.0 - dark) * no_click_prob(mu_per_pulse, eta);
    1.0 - (1.0 - h).powi(bins as i32)
}
