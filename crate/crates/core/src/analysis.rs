//! Inference chain: closed-form coincidence/accidental model, mean-pair
//! inversion, output-probability curves, enhancement factors and the
//! multiplexing-depth design explorer.
//!
//! The analytic model mirrors the Monte Carlo event semantics term by
//! term. Thermal expectations reduce to the generating function
//! E[(1-x)^n] = 1/(1+mu x), so every click probability below is closed
//! form; the multiplexed accidentals additionally track the latched-code
//! survival across the buffer window.

use crate::network::SwitchNetwork;
use crate::thermal::{heralded_single_prob, no_click_prob};
use crate::timeline::{ClockConfig, TimeBin};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Detection-chain efficiencies used by the inference.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossBudget {
    /// Herald arm: coupling x filter x herald detector.
    pub eta_heralding: f64,
    /// Heralded arm without the switching network: coupling x filter x
    /// gated detector.
    pub eta_heralded_common: f64,
    /// Collection efficiency to the source output port (no detector),
    /// used for output probabilities.
    pub eta_pair_collection: f64,
}

impl LossBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_heralding", self.eta_heralding),
            ("eta_heralded_common", self.eta_heralded_common),
            ("eta_pair_collection", self.eta_pair_collection),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("budget: {name} must be in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Which source layout a curve belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    NoMux,
    Mux,
}

/// One operating point of a CAR curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    /// True or inferred mean pairs per clock frame.
    pub mu_frame: f64,
    pub rate_hz: f64,
    pub car: f64,
    pub car_err: f64,
    /// Heralded single-photon output probability per clock frame.
    pub p_out: f64,
    pub coincidences: u64,
    pub accidentals: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarCurve {
    pub label: CurveLabel,
    pub points: Vec<CurvePoint>,
}

impl CarCurve {
    pub fn validate(&self) -> Result<()> {
        if self.points.iter().any(|p| !(p.rate_hz > 0.0)) {
            return Err(Error::domain("curve: rates must be positive"));
        }
        if self.points.windows(2).any(|w| w[0].rate_hz > w[1].rate_hz) {
            return Err(Error::domain("curve: points must be sorted by rate"));
        }
        Ok(())
    }
}

/// Closed-form model of one curve point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelPoint {
    pub mu_frame: f64,
    pub rate_hz: f64,
    pub car: f64,
    /// Per-frame probabilities behind the rate and CAR.
    pub p_coinc: f64,
    pub p_acc: f64,
    pub p_start: f64,
    pub p_stop: f64,
}

/// Analytic coincidence/accidental model. `network: Some(..)` selects the
/// multiplexed layout (all bins pumped, routed into the common slot);
/// `None` is the single-bin source.
#[derive(Clone, Debug)]
pub struct CarModel {
    pub frame_rate_hz: f64,
    pub bins_per_frame: u32,
    pub bin_spacing_ns: f64,
    pub eta_heralding: f64,
    pub eta_heralded_common: f64,
    pub dark_stop: f64,
    pub dark_start: f64,
    pub network: Option<SwitchNetwork>,
}

impl CarModel {
    pub fn new(
        clock: &ClockConfig,
        budget: &LossBudget,
        dark_stop: f64,
        dark_start: f64,
        network: Option<SwitchNetwork>,
    ) -> Self {
        CarModel {
            frame_rate_hz: clock.frame_rate_hz(),
            bins_per_frame: clock.bins_per_frame,
            bin_spacing_ns: clock.bin_spacing_ns,
            eta_heralding: budget.eta_heralding,
            eta_heralded_common: budget.eta_heralded_common,
            dark_stop,
            dark_start,
            network,
        }
    }

    /// Herald click probability per pumped slot.
    fn stop_click(&self, mu_pulse: f64) -> f64 {
        1.0 - (1.0 - self.dark_stop) * no_click_prob(mu_pulse, self.eta_heralding)
    }

    /// Joint herald-click x signal-delivery probability for one bin with
    /// per-photon delivery probability `p`.
    fn joint_click(&self, mu: f64, p: f64) -> f64 {
        let es = self.eta_heralding;
        1.0 - (1.0 - self.dark_stop) * no_click_prob(mu, es) - no_click_prob(mu, p)
            + (1.0 - self.dark_stop) * no_click_prob(mu, es + p - es * p)
    }

    /// Unheralded delivery probability: no herald click, >=1 delivered.
    fn unheralded_delivery(&self, mu: f64, p: f64) -> f64 {
        (1.0 - no_click_prob(mu, p)) - self.joint_click(mu, p)
    }

    /// Evaluates the model at a mean pair number per frame.
    pub fn point(&self, mu_frame: f64) -> Result<ModelPoint> {
        if !(mu_frame >= 0.0) {
            return Err(Error::domain(format!("car_model: mu must be >= 0, got {mu_frame}")));
        }
        match &self.network {
            None => Ok(self.point_single(mu_frame)),
            Some(net) => Ok(self.point_mux(mu_frame, net)),
        }
    }

    fn point_single(&self, mu: f64) -> ModelPoint {
        let es = self.eta_heralding;
        let ei = self.eta_heralded_common;
        let p_stop = self.stop_click(mu);
        let p_start = 1.0 - (1.0 - self.dark_start) * no_click_prob(mu, ei);
        // Joint click with both darks folded in; exact for the threshold
        // detectors because the thermal generating function is exact.
        let p_coinc = 1.0
            - (1.0 - self.dark_stop) * no_click_prob(mu, es)
            - (1.0 - self.dark_start) * no_click_prob(mu, ei)
            + (1.0 - self.dark_stop) * (1.0 - self.dark_start) * no_click_prob(mu, es + ei - es * ei);
        let p_acc = p_start * p_stop;
        ModelPoint {
            mu_frame: mu,
            rate_hz: p_coinc * self.frame_rate_hz,
            car: p_coinc / p_acc,
            p_coinc,
            p_acc,
            p_start,
            p_stop,
        }
    }

    fn point_mux(&self, mu_frame: f64, net: &SwitchNetwork) -> ModelPoint {
        let n = self.bins_per_frame as f64;
        let mu = mu_frame / n;
        let h = self.stop_click(mu);
        // Latch survival counts herald slots across the buffer window.
        let w = (net.buffer_delay_ns / self.bin_spacing_ns).round() as i32;
        let survive = |slots: i32| (1.0 - h).powi(slots);
        let q_own = survive(w);

        // Per-bin delivery probability through buffer + route + detector.
        let p_b: Vec<f64> = TimeBin::ALL
            .iter()
            .map(|&b| net.total_survival(b) * self.eta_heralded_common)
            .collect();
        let bar = |b: TimeBin| matches!(b, TimeBin::T1 | TimeBin::T3);

        // Own-latch survival with the uniform override-recovery for bar
        // routes (an override to exactly the photon's own code still
        // routes it; cross routes need the aligned drive and are lost).
        let kappa: Vec<f64> = TimeBin::ALL
            .iter()
            .map(|&b| if bar(b) { q_own + (1.0 - q_own) * 0.25 } else { q_own })
            .collect();

        let joint: Vec<f64> = TimeBin::ALL
            .iter()
            .zip(&p_b)
            .map(|(_, &p)| self.joint_click(mu, p))
            .collect();
        let unheralded: Vec<f64> = TimeBin::ALL
            .iter()
            .zip(&p_b)
            .map(|(_, &p)| self.unheralded_delivery(mu, p))
            .collect();

        // Unconditional start contribution of each bin: own-heralded and
        // correctly routed, plus the stale bar-latch delivery (the latch
        // must hold exactly the bin's own code, probability 1/4).
        let pi: Vec<f64> = (0..4)
            .map(|i| {
                let b = TimeBin::ALL[i];
                kappa[i] * joint[i] + if bar(b) { 0.25 * unheralded[i] } else { 0.0 }
            })
            .collect();

        // Coincidence peaks: own joint click plus same-gate flux from the
        // other bins and the gate dark (leading order; overlap terms are
        // below 1e-5 relative at the operating points).
        let mut p_coinc = 0.0;
        for i in 0..4 {
            let xi: f64 = self.dark_start + (0..4).filter(|&j| j != i).map(|j| pi[j]).sum::<f64>();
            p_coinc += kappa[i] * joint[i] * (1.0 - xi) + h * xi;
        }

        // Visible accidental peaks (bar bins): a stop one frame earlier
        // latches that bin's bar code; if no later herald intercedes
        // before the photon's switch arrival the unheralded photons of
        // the same bin are routed at full weight.
        let slot_of = |b: TimeBin| b.slot(self.bins_per_frame) as i32;
        let own_flux: f64 = pi.iter().sum();
        let acc_peak = |b: TimeBin| -> f64 {
            let i = b.delay_index() as usize;
            let mut stale = 0.0;
            for (j, &c) in TimeBin::ALL.iter().enumerate() {
                if !bar(c) {
                    continue;
                }
                let gap = self.bins_per_frame as i32 + slot_of(c) - slot_of(b) + w;
                let q_stop = survive(gap);
                let weight = if bar(b) {
                    // Bar stop: full weight while its latch holds (only
                    // for its own bin), uniform recovery afterwards.
                    if j == i {
                        q_stop + (1.0 - q_stop) * 0.25
                    } else {
                        (1.0 - q_stop) * 0.25
                    }
                } else {
                    // Cross stop: nothing passes while its latch holds.
                    (1.0 - q_stop) * 0.25
                };
                // Replace the stationary stale share of bin c's start
                // probability with the stop-conditioned one.
                stale += (weight - 0.25) * unheralded[j];
            }
            h * (self.dark_start + own_flux + stale)
        };
        let a_vis = acc_peak(TimeBin::T1) + acc_peak(TimeBin::T3);
        let p_acc = 2.0 * a_vis;

        // Stop stream probability per frame (any of the four slots) and
        // the common-gate start probability, for diagnostics.
        let p_stop = 1.0 - (1.0 - h).powi(4);
        let p_start = self.dark_start + own_flux;

        ModelPoint {
            mu_frame,
            rate_hz: p_coinc * self.frame_rate_hz,
            car: p_coinc / p_acc,
            p_coinc,
            p_acc,
            p_start,
            p_stop,
        }
    }

    /// Suppressed-peak model (cross-route stops), exposed for the
    /// histogram diagnostics and tests.
    pub fn suppressed_accidental(&self, mu_frame: f64) -> Result<f64> {
        let net = self
            .network
            .as_ref()
            .ok_or_else(|| Error::domain("suppressed accidentals exist only for the multiplexed model"))?;
        let n = self.bins_per_frame as f64;
        let mu = mu_frame / n;
        let h = self.stop_click(mu);
        let w = (net.buffer_delay_ns / self.bin_spacing_ns).round() as i32;
        let p_b: Vec<f64> = TimeBin::ALL
            .iter()
            .map(|&b| net.total_survival(b) * self.eta_heralded_common)
            .collect();
        let bar = |b: TimeBin| matches!(b, TimeBin::T1 | TimeBin::T3);
        let q_own = (1.0 - h).powi(w);
        let mut own_flux = 0.0;
        for (i, &b) in TimeBin::ALL.iter().enumerate() {
            let kappa = if bar(b) { q_own + (1.0 - q_own) * 0.25 } else { q_own };
            own_flux += kappa * self.joint_click(mu, p_b[i])
                + if bar(b) { 0.25 * self.unheralded_delivery(mu, p_b[i]) } else { 0.0 };
        }
        let slot_of = |b: TimeBin| b.slot(self.bins_per_frame) as i32;
        let mut total = 0.0;
        for &b in [TimeBin::T2, TimeBin::T4].iter() {
            let mut stale = 0.0;
            for (j, &c) in TimeBin::ALL.iter().enumerate() {
                if !bar(c) {
                    continue;
                }
                let gap = self.bins_per_frame as i32 + slot_of(c) - slot_of(b) + w;
                let q_stop = (1.0 - h).powi(gap);
                stale += ((1.0 - q_stop) * 0.25 - 0.25) * self.unheralded_delivery(mu, p_b[j]);
            }
            total += h * (self.dark_start + own_flux + stale);
        }
        Ok(total / 2.0)
    }
}

/// Inverts the model's rate component by bisection (1e-10 relative).
pub fn infer_mu(rate_hz: f64, model: &CarModel) -> Result<f64> {
    if !(rate_hz >= 0.0) {
        return Err(Error::domain(format!("infer_mu: rate must be >= 0, got {rate_hz}")));
    }
    if rate_hz == 0.0 {
        return Ok(0.0);
    }
    let mu_max = 4.0;
    let top = model.point(mu_max)?.rate_hz;
    if rate_hz > top {
        return Err(Error::NoSolution(format!(
            "rate {rate_hz} Hz exceeds the model maximum {top} Hz at mu_frame = {mu_max}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, mu_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.point(mid)?.rate_hz < rate_hz {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-10 * hi.max(1e-30) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Heralded single-photon output probability per clock frame for a
/// measured coincidence rate: invert the rate model, then apply the
/// single-pair formula with the collection efficiency. The multiplexed
/// source sums the per-mode output over its N bins with the
/// herald-weighted network transmissions.
pub fn output_probability(
    rate_hz: f64,
    model: &CarModel,
    eta_pair_collection: f64,
) -> Result<(f64, f64)> {
    let mu_frame = infer_mu(rate_hz, model)?;
    let p = match &model.network {
        None => heralded_single_prob(mu_frame)? * eta_pair_collection,
        Some(net) => {
            let mu_pulse = mu_frame / model.bins_per_frame as f64;
            let t_sum: f64 = TimeBin::ALL.iter().map(|&b| net.total_survival(b)).sum();
            heralded_single_prob(mu_pulse)? * eta_pair_collection * t_sum
        }
    };
    Ok((mu_frame, p))
}

/// Log-log linear interpolation over (x, y) samples with monotone x;
/// both axes span decades, so this is the stable choice.
pub fn interp_log_log_points(points: &[(f64, f64)], x: f64) -> Result<f64> {
    // points: (car, p_out) with car strictly monotone (either direction).
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if pts.len() < 2 {
        return Err(Error::Interpolation("need at least two curve points".into()));
    }
    if x < pts[0].0 || x > pts[pts.len() - 1].0 {
        return Err(Error::Interpolation(format!(
            "car level {x} outside curve span [{}, {}]",
            pts[0].0,
            pts[pts.len() - 1].0
        )));
    }
    let lx = x.ln();
    for w in pts.windows(2) {
        let (x0, y0) = (w[0].0.ln(), w[0].1.ln());
        let (x1, y1) = (w[1].0.ln(), w[1].1.ln());
        if lx >= x0 - 1e-12 && lx <= x1 + 1e-12 {
            let t = if (x1 - x0).abs() < 1e-15 { 0.0 } else { (lx - x0) / (x1 - x0) };
            return Ok((y0 + t * (y1 - y0)).exp());
        }
    }
    Err(Error::Interpolation("car level not bracketed".into()))
}

/// Enhancement factor: ratio of output probabilities at equal CAR,
/// log-log interpolated on both curves.
pub fn enhancement_at_car(no_mux: &CarCurve, mux: &CarCurve, car_level: f64) -> Result<f64> {
    if !(car_level > 0.0) {
        return Err(Error::Interpolation("car level must be positive".into()));
    }
    let nm: Vec<(f64, f64)> = no_mux.points.iter().map(|p| (p.car, p.p_out)).collect();
    let mx: Vec<(f64, f64)> = mux.points.iter().map(|p| (p.car, p.p_out)).collect();
    let p_nm = interp_log_log_points(&nm, car_level)?;
    let p_mx = interp_log_log_points(&mx, car_level)?;
    Ok(p_mx / p_nm)
}

/// First-order error on the factor from the curve points' rate errors
/// (Poisson on coincidences), interpolated at the same level.
pub fn enhancement_err(no_mux: &CarCurve, mux: &CarCurve, car_level: f64) -> Result<f64> {
    let rel = |curve: &CarCurve| -> Result<f64> {
        let pts: Vec<(f64, f64)> =
            curve.points.iter().map(|p| (p.car, 1.0 / (p.coincidences.max(1) as f64))).collect();
        Ok(interp_log_log_points(&pts, car_level)?.sqrt())
    };
    let factor = enhancement_at_car(no_mux, mux, car_level)?;
    Ok(factor * (rel(no_mux)?.powi(2) + rel(mux)?.powi(2)).sqrt())
}

/// Net gain of a k-switch binary multiplexing ladder: each switch doubles
/// the number of multiplexed modes (ideal 3 dB) and costs its insertion
/// loss. Break-even at 3 dB per switch.
pub fn scaling_gain(k_switches: u32, per_switch_loss_db: f64) -> Result<f64> {
    if !(per_switch_loss_db >= 0.0) {
        return Err(Error::domain("per-switch loss must be >= 0"));
    }
    Ok(k_switches as f64 * (3.0 - per_switch_loss_db))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DesignRow {
    pub k_switches: u32,
    pub modes: u64,
    pub per_switch_loss_db: f64,
    pub net_gain_db: f64,
    /// Output probability at the reference operating point scaled by the
    /// net gain.
    pub p_out: f64,
    pub break_even: bool,
}

/// Exhaustive (k, loss) table of the scaling law around a reference
/// operating point.
pub fn design_sweep(
    k_grid: &[u32],
    loss_grid_db: &[f64],
    mu_reference: f64,
    eta_pair_collection: f64,
) -> Result<Vec<DesignRow>> {
    if k_grid.is_empty() || loss_grid_db.is_empty() {
        return Err(Error::config("design sweep grids must be nonempty"));
    }
    let base = heralded_single_prob(mu_reference)? * eta_pair_collection;
    let mut rows = Vec::new();
    for &k in k_grid {
        for &loss in loss_grid_db {
            let gain = scaling_gain(k, loss)?;
            rows.push(DesignRow {
                k_switches: k,
                modes: 1u64 << k,
                per_switch_loss_db: loss,
                net_gain_db: gain,
                p_out: (base * 10f64.powf(gain / 10.0)).min(1.0),
                break_even: (loss - 3.0).abs() < 1e-12,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> LossBudget {
        LossBudget { eta_heralding: 0.01, eta_heralded_common: 0.30, eta_pair_collection: 0.30 }
    }

    fn clock() -> ClockConfig {
        ClockConfig::default()
    }

    fn single_model() -> CarModel {
        CarModel::new(&clock(), &budget(), 1e-5, 1e-5, None)
    }

    fn mux_model() -> CarModel {
        CarModel::new(&clock(), &budget(), 1e-5, 1e-5, Some(SwitchNetwork::default()))
    }

    #[test]
    fn car_monotone_decreasing_in_mu() {
        for model in [single_model(), mux_model()] {
            let mut prev = f64::INFINITY;
            for i in 1..=40 {
                let mu = i as f64 * 0.02;
                let p = model.point(mu).unwrap();
                assert!(p.car < prev, "mu={mu}");
                assert!(p.car > 0.0);
                prev = p.car;
            }
        }
    }

    #[test]
    fn rate_monotone_increasing_in_mu() {
        for model in [single_model(), mux_model()] {
            let mut prev = 0.0;
            for i in 1..=40 {
                let mu = i as f64 * 0.02;
                let p = model.point(mu).unwrap();
                assert!(p.rate_hz > prev, "mu={mu}");
                prev = p.rate_hz;
            }
        }
    }

    #[test]
    fn dark_dominated_car_is_one() {
        let b = LossBudget { eta_heralding: 0.0, eta_heralded_common: 0.0, eta_pair_collection: 0.3 };
        let model = CarModel::new(&clock(), &b, 1e-4, 1e-4, None);
        let p = model.point(0.1).unwrap();
        assert!((p.car - 1.0).abs() < 1e-9, "car={}", p.car);
    }

    #[test]
    fn inversion_round_trip() {
        for model in [single_model(), mux_model()] {
            let rate = model.point(0.07).unwrap().rate_hz;
            let mu = infer_mu(rate, &model).unwrap();
            assert!((mu - 0.07).abs() < 1e-9, "mu={mu}");
        }
        assert_eq!(infer_mu(0.0, &single_model()).unwrap(), 0.0);
    }

    #[test]
    fn inversion_rejects_unreachable_rate() {
        let model = single_model();
        assert!(matches!(infer_mu(1e12, &model), Err(Error::NoSolution(_))));
    }

    #[test]
    fn small_mu_linear_asymptote() {
        // rate ~ clock * mu * eta_s * eta_i at mu << 1 (darks off).
        let b = budget();
        let model = CarModel::new(&clock(), &b, 0.0, 0.0, None);
        let mu = 0.001;
        let rate = model.point(mu).unwrap().rate_hz;
        let approx = 1e7 * mu * b.eta_heralding * b.eta_heralded_common;
        assert!((rate / approx - 1.0).abs() < 0.01, "{rate} vs {approx}");
    }

    #[test]
    fn identical_curves_give_unit_enhancement() {
        let pts: Vec<CurvePoint> = (1..=6)
            .map(|i| {
                let mu = i as f64 * 0.02;
                CurvePoint {
                    mu_frame: mu,
                    rate_hz: mu * 1e5,
                    car: 1.0 / mu,
                    car_err: 0.0,
                    p_out: mu * 0.01,
                    coincidences: 1000,
                    accidentals: 100,
                }
            })
            .collect();
        let a = CarCurve { label: CurveLabel::NoMux, points: pts.clone() };
        let b = CarCurve { label: CurveLabel::Mux, points: pts };
        for level in [12.0, 20.0, 40.0] {
            let f = enhancement_at_car(&a, &b, level).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
        assert!(enhancement_at_car(&a, &b, 1e9).is_err());
    }

    #[test]
    fn scaling_law_values() {
        assert_eq!(scaling_gain(1, 1.0).unwrap(), 2.0);
        assert_eq!(scaling_gain(0, 7.0).unwrap(), 0.0);
        assert!((scaling_gain(2, 1.4).unwrap() - 3.2).abs() < 1e-12);
        assert_eq!(scaling_gain(3, 3.0).unwrap(), 0.0);
        assert!(scaling_gain(1, -0.5).is_err());
    }

    #[test]
    fn design_table_break_even_and_monotone() {
        let rows = design_sweep(&[0, 1, 2, 3], &[0.0, 1.0, 3.0], 0.05, 0.3).unwrap();
        for r in &rows {
            assert_eq!(r.modes, 1u64 << r.k_switches);
            if (r.per_switch_loss_db - 3.0).abs() < 1e-12 {
                assert_eq!(r.net_gain_db, 0.0);
                assert!(r.break_even);
            }
            if r.per_switch_loss_db == 0.0 {
                assert_eq!(r.net_gain_db, 3.0 * r.k_switches as f64);
            }
        }
        // Gain (and p_out) monotone in k at 1 dB per switch.
        let at_1db: Vec<&DesignRow> =
            rows.iter().filter(|r| r.per_switch_loss_db == 1.0).collect();
        for w in at_1db.windows(2) {
            assert!(w[1].net_gain_db > w[0].net_gain_db);
            assert!(w[1].p_out >= w[0].p_out);
        }
        assert!(design_sweep(&[], &[1.0], 0.05, 0.3).is_err());
    }

    #[test]
    fn common_mode_efficiency_invariance() {
        // Scaling both detector efficiencies by one factor moves rates
        // but leaves the enhancement factor unchanged within 1%.
        let make_curves = |scale: f64| -> (CarCurve, CarCurve) {
            let b = LossBudget {
                eta_heralding: budget().eta_heralding * scale,
                eta_heralded_common: budget().eta_heralded_common * scale,
                eta_pair_collection: budget().eta_pair_collection,
            };
            let nm = CarModel::new(&clock(), &b, 1e-5, 1e-5, None);
            let mx = CarModel::new(&clock(), &b, 1e-5, 1e-5, Some(SwitchNetwork::default()));
            let grid = [0.02, 0.05, 0.1, 0.2, 0.35, 0.5];
            let build = |model: &CarModel, label: CurveLabel| -> CarCurve {
                let points = grid
                    .iter()
                    .map(|&mu| {
                        let p = model.point(mu).unwrap();
                        let (_, p_out) = output_probability(p.rate_hz, model, b.eta_pair_collection).unwrap();
                        CurvePoint {
                            mu_frame: mu,
                            rate_hz: p.rate_hz,
                            car: p.car,
                            car_err: 0.0,
                            p_out,
                            coincidences: 10_000,
                            accidentals: 1000,
                        }
                    })
                    .collect();
                CarCurve { label, points }
            };
            (build(&nm, CurveLabel::NoMux), build(&mx, CurveLabel::Mux))
        };
        let (nm1, mx1) = make_curves(1.0);
        let (nm2, mx2) = make_curves(1.25);
        for level in [12.0, 20.0, 35.0] {
            let f1 = enhancement_at_car(&nm1, &mx1, level).unwrap();
            let f2 = enhancement_at_car(&nm2, &mx2, level).unwrap();
            assert!((f1 / f2 - 1.0).abs() < 0.01, "level {level}: {f1} vs {f2}");
        }
    }

    #[test]
    fn mux_suppressed_peaks_below_visible() {
        let model = mux_model();
        let p = model.point(0.2).unwrap();
        let visible = p.p_acc / 4.0; // per visible peak
        let suppressed = model.suppressed_accidental(0.2).unwrap();
        assert!(visible > 5.0 * suppressed, "visible={visible} suppressed={suppressed}");
    }
}
