//! Pump pulse train and raw pair-generation events in absolute time.
//!
//! A clock frame of 100 ns holds four pump pulses spaced 25 ns apart.
//! Time bins are labelled t1..t4 by the delay-line route they need: t1
//! needs no added delay and is the last pulse of the frame, t4 needs the
//! full 75 ns and is the first. All absolute times are integer
//! picoseconds so delay arithmetic is exact.

use crate::rng::{Domain, Stream};
use crate::thermal::sample_pair_count;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const PS_PER_NS: i64 = 1000;

/// Frame layout of the pump clock.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClockConfig {
    pub frame_period_ns: f64,
    pub bins_per_frame: u32,
    pub bin_spacing_ns: f64,
    pub frames: u64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig {
            frame_period_ns: 100.0,
            bins_per_frame: 4,
            bin_spacing_ns: 25.0,
            frames: 1_000_000,
        }
    }
}

impl ClockConfig {
    pub fn frame_period_ps(&self) -> i64 {
        (self.frame_period_ns * PS_PER_NS as f64).round() as i64
    }

    pub fn bin_spacing_ps(&self) -> i64 {
        (self.bin_spacing_ns * PS_PER_NS as f64).round() as i64
    }

    /// Frame repetition rate in Hz.
    pub fn frame_rate_hz(&self) -> f64 {
        1e9 / self.frame_period_ns
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_period_ns <= 0.0 || self.bin_spacing_ns <= 0.0 {
            return Err(Error::config("clock: periods must be positive"));
        }
        if self.bins_per_frame == 0 {
            return Err(Error::config("clock: bins_per_frame must be positive"));
        }
        if self.frames == 0 {
            return Err(Error::config("clock: frames must be positive"));
        }
        let spanned = self.bin_spacing_ns * self.bins_per_frame as f64;
        if (spanned - self.frame_period_ns).abs() > 1e-9 {
            return Err(Error::config(format!(
                "clock: bin_spacing_ns * bins_per_frame = {spanned} must equal frame_period_ns = {}",
                self.frame_period_ns
            )));
        }
        Ok(())
    }
}

/// Pump time bin, labelled by required network delay. `delay_index` of
/// t_k is k-1 (units of the bin spacing); its chronological slot inside a
/// frame is `bins_per_frame - 1 - delay_index`, so t1 is the last pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeBin {
    T1,
    T2,
    T3,
    T4,
}

impl TimeBin {
    pub const ALL: [TimeBin; 4] = [TimeBin::T1, TimeBin::T2, TimeBin::T3, TimeBin::T4];

    pub fn delay_index(self) -> u32 {
        match self {
            TimeBin::T1 => 0,
            TimeBin::T2 => 1,
            TimeBin::T3 => 2,
            TimeBin::T4 => 3,
        }
    }

    /// Chronological pulse slot within a frame (0 = earliest).
    pub fn slot(self, bins_per_frame: u32) -> u32 {
        bins_per_frame - 1 - self.delay_index()
    }

    pub fn from_slot(slot: u32, bins_per_frame: u32) -> Result<Self> {
        if slot >= bins_per_frame {
            return Err(Error::domain(format!("slot {slot} out of range")));
        }
        let idx = bins_per_frame - 1 - slot;
        TimeBin::from_delay_index(idx)
    }

    pub fn from_delay_index(idx: u32) -> Result<Self> {
        match idx {
            0 => Ok(TimeBin::T1),
            1 => Ok(TimeBin::T2),
            2 => Ok(TimeBin::T3),
            3 => Ok(TimeBin::T4),
            _ => Err(Error::domain(format!("no time bin with delay index {idx}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TimeBin::T1 => "t1",
            TimeBin::T2 => "t2",
            TimeBin::T3 => "t3",
            TimeBin::T4 => "t4",
        }
    }
}

/// A pair-generation event: `bin` is the chronological slot, so
/// `t_gen_ps = frame * frame_period + bin * bin_spacing` exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEvent {
    pub frame: u64,
    pub bin: u32,
    pub pairs: u32,
    pub t_gen_ps: i64,
}

/// Pump configuration: which bins are pumped and how hard.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Source {
    pub mu_per_pulse: f64,
    pub active_bins: Vec<TimeBin>,
    /// Optional per-bin pump scaling (asymmetry studies); indexed by
    /// delay_index. Default all ones.
    #[serde(default)]
    pub bin_mu_scale: Option<[f64; 4]>,
}

impl Source {
    pub fn new(mu_per_pulse: f64, active_bins: Vec<TimeBin>) -> Self {
        Source { mu_per_pulse, active_bins, bin_mu_scale: None }
    }

    pub fn mu_for(&self, bin: TimeBin) -> f64 {
        let scale = self
            .bin_mu_scale
            .map(|s| s[bin.delay_index() as usize])
            .unwrap_or(1.0);
        self.mu_per_pulse * scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_per_pulse >= 0.0) {
            return Err(Error::config("source: mu_per_pulse must be >= 0"));
        }
        if self.active_bins.is_empty() {
            return Err(Error::config("source: active_bins must be nonempty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.active_bins {
            if !seen.insert(*b) {
                return Err(Error::config(format!("source: duplicate active bin {}", b.label())));
            }
        }
        if let Some(s) = self.bin_mu_scale {
            if s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::config("source: bin_mu_scale entries must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Per-frame draw used by the Monte Carlo passes: pair counts per active
/// slot, in chronological slot order. Deterministic in (seed, frame).
pub fn sample_frame_pairs(
    cfg: &ClockConfig,
    source: &Source,
    run_seed: u64,
    frame: u64,
    out: &mut Vec<(TimeBin, u32)>,
) {
    out.clear();
    let mut rng = Stream::for_frame(run_seed, Domain::Frame, frame);
    // Draw in fixed slot order so the stream layout is stable.
    for slot in 0..cfg.bins_per_frame {
        let bin = TimeBin::from_slot(slot, cfg.bins_per_frame).expect("validated");
        let active = source.active_bins.contains(&bin);
        // Every slot consumes one uniform whether or not it is pumped, so
        // NO-MUX and MUX layouts with the same seed stay comparable.
        let n = sample_pair_count(if active { source.mu_for(bin) } else { 0.0 }, &mut rng);
        if n > 0 {
            out.push((bin, n));
        }
    }
}

/// Generates the full event sequence, nondecreasing in `t_gen_ps`.
/// Zero-pair pulses emit no event.
pub fn generate_events(cfg: &ClockConfig, source: &Source, run_seed: u64) -> Result<Vec<PairEvent>> {
    cfg.validate()?;
    source.validate()?;
    let period = cfg.frame_period_ps();
    let spacing = cfg.bin_spacing_ps();
    let mut events = Vec::new();
    let mut frame_buf = Vec::new();
    for frame in 0..cfg.frames {
        sample_frame_pairs(cfg, source, run_seed, frame, &mut frame_buf);
        for &(bin, pairs) in &frame_buf {
            let slot = bin.slot(cfg.bins_per_frame);
            events.push(PairEvent {
                frame,
                bin: slot,
                pairs,
                t_gen_ps: frame as i64 * period + slot as i64 * spacing,
            });
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock(frames: u64) -> ClockConfig {
        ClockConfig { frames, ..ClockConfig::default() }
    }

    #[test]
    fn clock_invariant_checked() {
        let mut c = clock(10);
        assert!(c.validate().is_ok());
        c.bin_spacing_ns = 30.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn bin_labels_and_slots() {
        assert_eq!(TimeBin::T1.slot(4), 3);
        assert_eq!(TimeBin::T4.slot(4), 0);
        assert_eq!(TimeBin::from_slot(3, 4).unwrap(), TimeBin::T1);
        assert_eq!(TimeBin::T2.delay_index(), 1);
    }

    #[test]
    fn zero_mu_gives_no_events() {
        let src = Source::new(0.0, vec![TimeBin::T1]);
        let ev = generate_events(&clock(1000), &src, 1).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn empty_active_bins_rejected() {
        let src = Source::new(0.1, vec![]);
        assert!(generate_events(&clock(10), &src, 1).is_err());
    }

    #[test]
    fn events_sorted_and_timestamps_exact() {
        let src = Source::new(0.3, TimeBin::ALL.to_vec());
        let ev = generate_events(&clock(2000), &src, 7).unwrap();
        assert!(!ev.is_empty());
        for w in ev.windows(2) {
            assert!(w[0].t_gen_ps <= w[1].t_gen_ps);
        }
        for e in &ev {
            assert_eq!(e.t_gen_ps, e.frame as i64 * 100_000 + e.bin as i64 * 25_000);
            assert!(e.pairs >= 1);
        }
    }

    #[test]
    fn determinism() {
        let src = Source::new(0.2, TimeBin::ALL.to_vec());
        let a = generate_events(&clock(500), &src, 99).unwrap();
        let b = generate_events(&clock(500), &src, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mux_vs_nomux_event_ratio_is_four() {
        let frames = 100_000;
        let mu = 0.05;
        let mux = Source::new(mu, TimeBin::ALL.to_vec());
        let nomux = Source::new(mu, vec![TimeBin::T1]);
        let n_mux = generate_events(&clock(frames), &mux, 11).unwrap().len() as f64;
        let n_nomux = generate_events(&clock(frames), &nomux, 12).unwrap().len() as f64;
        let p = 1.0 - 1.0 / (1.0 + mu);
        // Each source's count is binomial-ish; compare the ratio with a
        // 3 sigma band propagated from both counts.
        let sigma = (4.0 * frames as f64 * p).sqrt() / (frames as f64 * p) * 4.0_f64.sqrt();
        let ratio = n_mux / n_nomux;
        assert!((ratio - 4.0).abs() < 3.0 * sigma, "ratio={ratio}");
    }

    #[test]
    fn single_bin_click_count() {
        let frames = 1_000_000u64;
        let mu = 0.1;
        let src = Source::new(mu, vec![TimeBin::T1]);
        let n = generate_events(&clock(frames), &src, 5).unwrap().len() as f64;
        let p = 1.0 - 1.0 / (1.0 + mu);
        let expect = frames as f64 * p;
        let sigma = (frames as f64 * p * (1.0 - p)).sqrt();
        assert!((n - expect).abs() < 3.0 * sigma, "n={n} expect={expect}");
    }

    #[test]
    fn per_bin_rates_agree_and_uncorrelated() {
        let frames = 200_000u64;
        let mu = 0.1;
        let cfg = clock(frames);
        let src = Source::new(mu, TimeBin::ALL.to_vec());
        let ev = generate_events(&cfg, &src, 21).unwrap();
        let mut per_bin = [0f64; 4];
        // Occupancy indicators per frame for covariance between slots 0,1.
        let mut occ = vec![[false; 4]; frames as usize];
        for e in &ev {
            per_bin[e.bin as usize] += 1.0;
            occ[e.frame as usize][e.bin as usize] = true;
        }
        let p = 1.0 - 1.0 / (1.0 + mu);
        let sigma = (frames as f64 * p * (1.0 - p)).sqrt();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(
                    (per_bin[i] - per_bin[j]).abs() < 3.0 * (2.0f64).sqrt() * sigma,
                    "bins {i},{j}: {} vs {}",
                    per_bin[i],
                    per_bin[j]
                );
            }
        }
        // Sample covariance of the (slot0, slot1) indicators -> 0.
        let n = frames as f64;
        let (mut s0, mut s1, mut s01) = (0.0, 0.0, 0.0);
        for o in &occ {
            let a = o[0] as u8 as f64;
            let b = o[1] as u8 as f64;
            s0 += a;
            s1 += b;
            s01 += a * b;
        }
        let cov = s01 / n - (s0 / n) * (s1 / n);
        let sigma_cov = (p * (1.0 - p) / n).sqrt() * p.max(1e-9).sqrt().max(p);
        // Conservative 3 sigma bound on the indicator covariance.
        assert!(cov.abs() < 3.0 * (p * (1.0 - p) / n).sqrt() * 1.0, "cov={cov} sigma~{sigma_cov}");
    }
}
