//! Detector click models and start/stop interval histogramming with the
//! coincidence/accidental accounting rules.
//!
//! Detectors are threshold devices: any number of photons in one time bin
//! yields at most one click. The interval analyzer accumulates, for each
//! start, every stop delay inside a 0-250 ns window at 1 ns resolution
//! (the stop stream carries a fixed electronic offset so the peaks land
//! in-window).

use crate::rng::Stream;
use crate::timeline::PS_PER_NS;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gating of a detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Free-running; dark counts accrue per pulse slot (25 ns).
    FreeRunning,
    /// Gated once per clock frame; dark counts accrue per gate.
    GatedFrame,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_prob_per_bin: f64,
    pub gate: GateMode,
}

impl DetectorConfig {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!("{name}: efficiency must be in [0,1]")));
        }
        if !(0.0..=1.0).contains(&self.dark_prob_per_bin) {
            return Err(Error::config(format!("{name}: dark probability must be in [0,1]")));
        }
        Ok(())
    }
}

/// One detector click with truth flags for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub detector: u8,
    pub t_ps: i64,
    /// True when at least one real photon caused the click.
    pub real: bool,
}

/// Threshold detection over photons grouped into time bins.
///
/// `photons` lists (bin time, photon count) pairs, time sorted; each bin
/// additionally fires a dark click with the configured probability.
/// Multiple photons in one bin produce at most one click.
pub fn detect(
    photons: &[(i64, u32)],
    cfg: &DetectorConfig,
    detector: u8,
    rng: &mut Stream,
) -> Result<Vec<DetectionRecord>> {
    cfg.validate("detector")?;
    let mut out = Vec::new();
    for &(t_ps, n) in photons {
        let mut detected = false;
        for _ in 0..n {
            if rng.bernoulli(cfg.efficiency) {
                detected = true;
                // Threshold detector: remaining photons cannot add clicks,
                // but consume no further randomness either.
                break;
            }
        }
        let dark = rng.bernoulli(cfg.dark_prob_per_bin);
        if detected || dark {
            out.push(DetectionRecord { detector, t_ps, real: detected });
        }
    }
    debug_assert!(out.windows(2).all(|w| w[0].t_ps <= w[1].t_ps));
    Ok(out)
}

/// Start/stop delay histogram: 1 ns bins over [0, 250) ns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub bin_width_ns: f64,
    pub window_ns: f64,
    pub counts: Vec<u64>,
    pub start_role: String,
    pub stop_role: String,
}

pub const HISTOGRAM_WINDOW_NS: f64 = 250.0;

impl DelayHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of counts within +/- half_width of a nominal center.
    pub fn peak_sum(&self, center_ns: f64, half_width_ns: f64) -> u64 {
        let lo = ((center_ns - half_width_ns).floor().max(0.0)) as usize;
        let hi = ((center_ns + half_width_ns).floor()).min(self.counts.len() as f64 - 1.0) as usize;
        self.counts[lo..=hi].iter().sum()
    }
}

/// Builds the histogram. Both streams must be time sorted; the caller
/// pre-applies the electronic stop offset so peaks fall in the window.
pub fn build_histogram(starts_ps: &[i64], stops_ps: &[i64], window_ns: f64) -> DelayHistogram {
    debug_assert!(starts_ps.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(stops_ps.windows(2).all(|w| w[0] <= w[1]));
    let bins = window_ns.round() as usize;
    let mut counts = vec![0u64; bins];
    let window_ps = (window_ns * PS_PER_NS as f64).round() as i64;
    let mut lo = 0usize;
    for &start in starts_ps {
        while lo < stops_ps.len() && stops_ps[lo] < start {
            lo += 1;
        }
        let mut i = lo;
        while i < stops_ps.len() {
            let delta = stops_ps[i] - start;
            if delta >= window_ps {
                break;
            }
            counts[(delta / PS_PER_NS) as usize] += 1;
            i += 1;
        }
    }
    DelayHistogram {
        bin_width_ns: 1.0,
        window_ns,
        counts,
        start_role: "heralded".to_string(),
        stop_role: "herald".to_string(),
    }
}

/// Declared peak positions for the CAR accounting. Peaks sit at known
/// geometric positions; no peak finding is attempted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeakStructure {
    pub coincidence_ns: Vec<f64>,
    /// The accidental peaks that remain visible (bar-route bins).
    pub visible_accidental_ns: Vec<f64>,
    /// The switched-away accidental peak positions, kept for diagnostics.
    pub suppressed_accidental_ns: Vec<f64>,
    pub half_width_ns: f64,
}

impl PeakStructure {
    pub fn integration_default() -> f64 {
        2.0
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CarResult {
    pub coincidences: u64,
    pub accidentals: u64,
    pub car: f64,
    /// Poisson propagation: sigma_CAR / CAR = sqrt(1/C + 1/A).
    pub car_err: f64,
    /// CAR is reported infinite when no accidentals were recorded.
    pub infinite: bool,
}

fn car_from_counts(c: u64, a: u64) -> CarResult {
    if a == 0 {
        return CarResult { coincidences: c, accidentals: 0, car: f64::INFINITY, car_err: f64::INFINITY, infinite: true };
    }
    let car = c as f64 / a as f64;
    let rel = (1.0 / c.max(1) as f64 + 1.0 / a as f64).sqrt();
    CarResult { coincidences: c, accidentals: a, car, car_err: car * rel, infinite: false }
}

/// Single-source accounting: the coincidence peak against the accidental
/// peak closest to it (the lower-delay neighbour on a tie).
pub fn car_no_mux(hist: &DelayHistogram, coincidence_ns: f64, accidental_ns: f64, half_width_ns: f64) -> CarResult {
    let c = hist.peak_sum(coincidence_ns, half_width_ns);
    let a = hist.peak_sum(accidental_ns, half_width_ns);
    car_from_counts(c, a)
}

/// Multiplexed accounting: sum the four coincidence peaks; accidentals
/// are twice the two visible accidental peaks (the switched-away pair is
/// represented by the visible pair).
pub fn car_mux(hist: &DelayHistogram, peaks: &PeakStructure) -> CarResult {
    let c: u64 = peaks.coincidence_ns.iter().map(|&p| hist.peak_sum(p, peaks.half_width_ns)).sum();
    let visible: u64 = peaks
        .visible_accidental_ns
        .iter()
        .map(|&p| hist.peak_sum(p, peaks.half_width_ns))
        .sum();
    car_from_counts(c, 2 * visible)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist_from(starts: &[i64], stops: &[i64]) -> DelayHistogram {
        build_histogram(starts, stops, HISTOGRAM_WINDOW_NS)
    }

    #[test]
    fn single_pair_lands_at_its_delay() {
        let h = hist_from(&[1_000_000], &[1_037_000]);
        assert_eq!(h.counts[37], 1);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn empty_stops_empty_histogram() {
        let h = hist_from(&[10, 20, 30], &[]);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn conservation_counts_every_in_window_pair() {
        let starts: Vec<i64> = (0..50).map(|i| i * 300_000).collect();
        let stops: Vec<i64> = (0..200).map(|i| i * 77_000).collect();
        let h = hist_from(&starts, &stops);
        let mut expected = 0u64;
        for &s in &starts {
            for &t in &stops {
                let d = t - s;
                if d >= 0 && d < 250_000 {
                    expected += 1;
                }
            }
        }
        assert_eq!(h.total(), expected);
    }

    #[test]
    fn detector_threshold_and_edges() {
        let mut rng = Stream::new(1);
        let perfect = DetectorConfig { efficiency: 1.0, dark_prob_per_bin: 0.0, gate: GateMode::GatedFrame };
        let recs = detect(&[(0, 1), (25_000, 3)], &perfect, 0, &mut rng).unwrap();
        assert_eq!(recs.len(), 2); // one click per occupied bin
        let blind = DetectorConfig { efficiency: 0.0, dark_prob_per_bin: 0.0, gate: GateMode::GatedFrame };
        let recs = detect(&[(0, 5)], &blind, 0, &mut rng).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn threshold_idempotent_in_multiplicity() {
        // Doubling the photon number in a bin never yields a second click.
        let mut rng = Stream::new(2);
        let cfg = DetectorConfig { efficiency: 0.7, dark_prob_per_bin: 0.0, gate: GateMode::GatedFrame };
        for n in [1u32, 2, 4, 8] {
            let recs = detect(&[(0, n)], &cfg, 0, &mut rng).unwrap();
            assert!(recs.len() <= 1);
        }
    }

    #[test]
    fn dark_count_rate() {
        let mut rng = Stream::new(9);
        let cfg = DetectorConfig { efficiency: 1.0, dark_prob_per_bin: 1e-5, gate: GateMode::GatedFrame };
        let gates: Vec<(i64, u32)> = (0..10_000_000i64).map(|i| (i * 100_000, 0u32)).collect();
        let recs = detect(&gates, &cfg, 0, &mut rng).unwrap();
        let expect = 100.0;
        let sigma = expect.sqrt();
        assert!((recs.len() as f64 - expect).abs() < 3.0 * sigma, "{}", recs.len());
        assert!(recs.iter().all(|r| !r.real));
    }

    #[test]
    fn car_arithmetic() {
        let mut h = hist_from(&[], &[]);
        h.counts[125] = 180;
        h.counts[25] = 10;
        let r = car_no_mux(&h, 125.0, 25.0, 2.0);
        assert_eq!(r.coincidences, 180);
        assert_eq!(r.accidentals, 10);
        assert!((r.car - 18.0).abs() < 1e-12);
        let rel = (1.0 / 180.0f64 + 1.0 / 10.0).sqrt();
        assert!((r.car_err - 18.0 * rel).abs() < 1e-12);

        h.counts[25] = 180;
        let r = car_no_mux(&h, 125.0, 25.0, 2.0);
        assert!((r.car - 1.0).abs() < 1e-12);
    }

    #[test]
    fn car_mux_accounting_rule() {
        let mut h = hist_from(&[], &[]);
        let peaks = PeakStructure {
            coincidence_ns: vec![150.0, 175.0, 200.0, 225.0],
            visible_accidental_ns: vec![75.0, 125.0],
            suppressed_accidental_ns: vec![50.0, 100.0],
            half_width_ns: 2.0,
        };
        for (pos, n) in [(150, 35u64), (175, 40), (200, 45), (225, 50)] {
            h.counts[pos] = n;
        }
        h.counts[75] = 3;
        h.counts[125] = 4;
        let r = car_mux(&h, &peaks);
        assert_eq!(r.coincidences, 170);
        assert_eq!(r.accidentals, 14);
        assert!((r.car - 170.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn zero_accidentals_flagged_infinite() {
        let mut h = hist_from(&[], &[]);
        h.counts[125] = 10;
        let r = car_no_mux(&h, 125.0, 25.0, 2.0);
        assert!(r.infinite);
        assert!(r.car.is_infinite());
    }

    #[test]
    fn histogram_merge_is_elementwise() {
        // Chunked accumulation must equal the single-pass histogram.
        let starts: Vec<i64> = (0..40).map(|i| i * 130_000).collect();
        let stops: Vec<i64> = (0..40).map(|i| i * 110_000 + 5_000).collect();
        let whole = hist_from(&starts, &stops);
        let (s1, s2) = starts.split_at(17);
        let mut merged = hist_from(s1, &stops);
        let part = hist_from(s2, &stops);
        for (a, b) in merged.counts.iter_mut().zip(part.counts.iter()) {
            *a += b;
        }
        assert_eq!(merged.counts, whole.counts);
    }
}
