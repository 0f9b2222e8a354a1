//! Event-level Monte Carlo passes.
//!
//! Runs split into two passes. Pass 1 draws everything frame-local
//! (thermal pair counts, herald clicks, gate darks) from per-frame
//! streams, so it parallelizes over fixed-size chunks with results
//! independent of worker count. Pass 2 is the sequential controller walk:
//! heralds latch codes in time order, buffered photons are routed with
//! the code in force at their switch arrival, and detector clicks feed
//! the interval analyzer.

use crate::detect::{build_histogram, car_mux, car_no_mux, CarResult, DelayHistogram, PeakStructure, HISTOGRAM_WINDOW_NS};
use crate::hom::{coincidence_click_prob, overlap, FoldCounts, OutputDetector};
use crate::network::{apply_network, ControllerState, RouteOutcome, RoutingTable, SwitchNetwork};
use crate::rng::{derive_seed, Domain, Stream};
use crate::thermal::sample_pair_count;
use crate::timeline::{ClockConfig, Source, TimeBin, PS_PER_NS};
use crate::{Error, Result};
use std::collections::VecDeque;

const CHUNK_FRAMES: u64 = 1 << 16;

/// Stop-side electronic delay that keeps the multiplexed peak family
/// inside the 0-250 ns window: coincidences at 150..225 ns, visible
/// accidentals at 75/125 ns, switched-away partners at 50/100 ns.
const MUX_STOP_DELAY_NS: f64 = 225.0;
/// Single-source stop delay: coincidence at 125 ns, accidentals at
/// 25 and 225 ns.
const NOMUX_STOP_DELAY_NS: f64 = 125.0;

pub fn effective_workers(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        requested
    }
}

/// Chunked deterministic map/fold: `gen` runs on frame ranges (possibly
/// in parallel), `fold` consumes results in chunk order.
fn run_chunked<T, G, F>(frames: u64, workers: usize, gen: G, mut fold: F)
where
    T: Send,
    G: Fn(std::ops::Range<u64>) -> T + Sync,
    F: FnMut(T),
{
    let workers = effective_workers(workers).max(1);
    let n_chunks = frames.div_ceil(CHUNK_FRAMES);
    let mut next = 0u64;
    while next < n_chunks {
        let batch = (n_chunks - next).min(workers as u64);
        let results: Vec<T> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..batch)
                .map(|i| {
                    let chunk = next + i;
                    let lo = chunk * CHUNK_FRAMES;
                    let hi = ((chunk + 1) * CHUNK_FRAMES).min(frames);
                    let gen = &gen;
                    scope.spawn(move || gen(lo..hi))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            fold(r);
        }
        next += batch;
    }
}

/// Per-slot outcome of the generation pass.
#[derive(Clone, Copy, Debug)]
struct SlotEvent {
    frame: u64,
    slot: u8,
    pairs: u16,
    herald_click: bool,
}

struct ChunkEvents {
    slots: Vec<SlotEvent>,
    /// Frames whose signal gate fired a dark count.
    gate_darks: Vec<u64>,
}

#[derive(Clone, Copy)]
struct DetectionChain {
    eta_herald: f64,
    dark_herald: f64,
    eta_signal: f64,
    dark_signal: f64,
}

/// Route-stream cache: one stream per generation frame, consumed in
/// arrival order so draws are independent of chunk boundaries.
fn frame_route_rng(cache: &mut Option<(u64, Stream)>, run_seed: u64, frame: u64) -> &mut Stream {
    let stale = !matches!(cache, Some((f, _)) if *f == frame);
    if stale {
        *cache = Some((frame, Stream::for_frame(run_seed, Domain::Route, frame)));
    }
    &mut cache.as_mut().expect("just filled").1
}

fn generate_chunk(
    range: std::ops::Range<u64>,
    clock: &ClockConfig,
    source: &Source,
    chain: &DetectionChain,
    run_seed: u64,
) -> ChunkEvents {
    let n = clock.bins_per_frame;
    let mut slots = Vec::new();
    let mut gate_darks = Vec::new();
    let mut pairs_buf: Vec<(TimeBin, u32)> = Vec::with_capacity(4);
    for frame in range {
        // Pair generation consumes the Frame stream exactly like the
        // event-trace path, so traces reproduce the run's events.
        crate::timeline::sample_frame_pairs(clock, source, run_seed, frame, &mut pairs_buf);
        let mut det = Stream::for_frame(run_seed, Domain::Detect, frame);
        for slot in 0..n {
            let bin = TimeBin::from_slot(slot, n).expect("validated");
            let pairs = pairs_buf
                .iter()
                .find(|(b, _)| *b == bin)
                .map(|(_, p)| (*p).min(u16::MAX as u32) as u16)
                .unwrap_or(0);
            let real = if pairs > 0 {
                let p = 1.0 - (1.0 - chain.eta_herald).powi(pairs as i32);
                det.bernoulli(p)
            } else {
                false
            };
            let dark = det.bernoulli(chain.dark_herald);
            if pairs > 0 || real || dark {
                slots.push(SlotEvent { frame, slot: slot as u8, pairs, herald_click: real || dark });
            }
        }
        if det.bernoulli(chain.dark_signal) {
            gate_darks.push(frame);
        }
    }
    ChunkEvents { slots, gate_darks }
}

/// One Monte Carlo interval-analyzer run.
#[derive(Clone, Debug)]
pub struct TiaRun {
    pub histogram: DelayHistogram,
    pub peaks: PeakStructure,
    pub car: CarResult,
    /// Coincidence rate from the peak accounting, in Hz.
    pub rate_hz: f64,
    pub frames: u64,
    pub start_count: u64,
    pub stop_count: u64,
    /// Labelled peak sums (coincidence and accidental families).
    pub peak_counts: Vec<(String, f64, u64)>,
}

pub struct TiaParams<'a> {
    pub clock: &'a ClockConfig,
    pub source: &'a Source,
    pub eta_herald: f64,
    pub dark_herald: f64,
    pub eta_signal: f64,
    pub dark_signal: f64,
    pub workers: usize,
    pub run_seed: u64,
}

/// Optional routed-photon trace row.
#[derive(Clone, Debug)]
pub struct RouteTraceRow {
    pub frame: u64,
    pub bin: TimeBin,
    pub code: String,
    pub pairs: u16,
    pub blocked: bool,
    pub t_out_ps: i64,
    pub survivors: u32,
}

struct MuxFold<'a> {
    clock: &'a ClockConfig,
    net: &'a SwitchNetwork,
    table: &'a RoutingTable,
    chain: DetectionChain,
    run_seed: u64,
    state: ControllerState,
    pending: VecDeque<SlotEvent>,
    starts: Vec<i64>,
    stops: Vec<i64>,
    stop_delay_ps: i64,
    gate_phase_ps: i64,
    route_rng: Option<(u64, Stream)>,
    trace: Option<Vec<RouteTraceRow>>,
}

impl<'a> MuxFold<'a> {
    fn new(
        clock: &'a ClockConfig,
        net: &'a SwitchNetwork,
        table: &'a RoutingTable,
        chain: DetectionChain,
        run_seed: u64,
        trace: bool,
    ) -> Self {
        let period = clock.frame_period_ps();
        let spacing = clock.bin_spacing_ps();
        let gate_abs = (clock.bins_per_frame as i64 - 1) * spacing + net.buffer_delay_ps();
        let phase_ps = (net.phase_offset_ns * PS_PER_NS as f64).round() as i64;
        MuxFold {
            clock,
            net,
            table,
            chain,
            run_seed,
            state: ControllerState::initial(phase_ps),
            pending: VecDeque::new(),
            starts: Vec::new(),
            stops: Vec::new(),
            stop_delay_ps: net.buffer_delay_ps()
                + (MUX_STOP_DELAY_NS * PS_PER_NS as f64).round() as i64,
            gate_phase_ps: gate_abs.rem_euclid(period),
            route_rng: None,
            trace: if trace { Some(Vec::new()) } else { None },
        }
    }

    fn t_gen(&self, ev: &SlotEvent) -> i64 {
        ev.frame as i64 * self.clock.frame_period_ps() + ev.slot as i64 * self.clock.bin_spacing_ps()
    }

    fn route_pending_before(&mut self, t_limit: Option<i64>) {
        let buffer = self.net.buffer_delay_ps();
        while let Some(front) = self.pending.front().copied() {
            let arrival = self.t_gen(&front) + buffer;
            // Latches at the same instant win: route strictly earlier
            // arrivals only.
            if let Some(limit) = t_limit {
                if arrival >= limit {
                    break;
                }
            }
            self.pending.pop_front();
            self.route_group(front);
        }
    }

    fn route_group(&mut self, ev: SlotEvent) {
        let t_gen = self.t_gen(&ev);
        let bin = TimeBin::from_slot(ev.slot as u32, self.clock.bins_per_frame).expect("validated");
        let outcome = apply_network(t_gen, &self.state, self.net);
        let mut survivors = 0u32;
        let mut blocked = true;
        let mut t_out = 0i64;
        if let RouteOutcome::Routed { t_out_ps, survival, .. } = outcome {
            blocked = false;
            t_out = t_out_ps;
            let period = self.clock.frame_period_ps();
            let on_gate = (t_out_ps - self.gate_phase_ps).rem_euclid(period) == 0;
            let p = survival * self.chain.eta_signal;
            {
                let rng = frame_route_rng(&mut self.route_rng, self.run_seed, ev.frame);
                for _ in 0..ev.pairs {
                    if rng.bernoulli(p) {
                        survivors += 1;
                    }
                }
            }
            if on_gate && survivors > 0 {
                self.starts.push(t_out_ps);
            }
        }
        if let Some(trace) = &mut self.trace {
            trace.push(RouteTraceRow {
                frame: ev.frame,
                bin,
                code: self.table.code(self.state.latched_bin).to_string(),
                pairs: ev.pairs,
                blocked,
                t_out_ps: t_out,
                survivors,
            });
        }
    }

    fn on_chunk(&mut self, chunk: ChunkEvents) {
        let period = self.clock.frame_period_ps();
        for ev in &chunk.slots {
            let t_gen = self.t_gen(ev);
            if ev.herald_click {
                self.route_pending_before(Some(t_gen));
                self.state.latched_bin =
                    TimeBin::from_slot(ev.slot as u32, self.clock.bins_per_frame).expect("validated");
                self.state.latched_at_ps = Some(t_gen);
                self.stops.push(t_gen + self.stop_delay_ps);
            }
            if ev.pairs > 0 {
                self.pending.push_back(*ev);
            }
        }
        for &frame in &chunk.gate_darks {
            self.starts.push(frame as i64 * period + self.gate_phase_ps);
        }
    }

    fn finish(mut self) -> (Vec<i64>, Vec<i64>, Option<Vec<RouteTraceRow>>) {
        self.route_pending_before(None);
        self.starts.sort_unstable();
        self.starts.dedup();
        (self.starts, self.stops, self.trace)
    }
}

fn mux_peaks(clock: &ClockConfig) -> PeakStructure {
    let spacing = clock.bin_spacing_ns;
    let coincidence: Vec<f64> =
        TimeBin::ALL.iter().map(|b| MUX_STOP_DELAY_NS - spacing * b.delay_index() as f64).collect();
    PeakStructure {
        coincidence_ns: coincidence,
        visible_accidental_ns: vec![
            MUX_STOP_DELAY_NS - clock.frame_period_ns, // t1
            MUX_STOP_DELAY_NS - clock.frame_period_ns - 2.0 * spacing, // t3
        ],
        suppressed_accidental_ns: vec![
            MUX_STOP_DELAY_NS - clock.frame_period_ns - spacing, // t2
            MUX_STOP_DELAY_NS - clock.frame_period_ns - 3.0 * spacing, // t4
        ],
        half_width_ns: PeakStructure::integration_default(),
    }
}

/// Full multiplexed interval-analyzer run.
pub fn run_mux_tia(
    p: &TiaParams,
    net: &SwitchNetwork,
    table: &RoutingTable,
    trace: bool,
) -> Result<(TiaRun, Option<Vec<RouteTraceRow>>)> {
    p.clock.validate()?;
    p.source.validate()?;
    net.validate()?;
    table.validate()?;
    if p.clock.bins_per_frame != 4 {
        return Err(Error::config("the switching network routes exactly 4 bins per frame"));
    }
    let chain = DetectionChain {
        eta_herald: p.eta_herald,
        dark_herald: p.dark_herald,
        eta_signal: p.eta_signal,
        dark_signal: p.dark_signal,
    };
    let mut fold = MuxFold::new(p.clock, net, table, chain, p.run_seed, trace);
    run_chunked(
        p.clock.frames,
        p.workers,
        |range| generate_chunk(range, p.clock, p.source, &chain, p.run_seed),
        |chunk| fold.on_chunk(chunk),
    );
    let (starts, stops, trace_rows) = fold.finish();
    let histogram = build_histogram(&starts, &stops, HISTOGRAM_WINDOW_NS);
    let peaks = mux_peaks(p.clock);
    let car = car_mux(&histogram, &peaks);
    let duration_s = p.clock.frames as f64 * p.clock.frame_period_ns * 1e-9;
    let mut peak_counts = Vec::new();
    for (i, &c) in peaks.coincidence_ns.iter().enumerate() {
        let label = format!("coincidence_{}", TimeBin::ALL[i].label());
        peak_counts.push((label, c, histogram.peak_sum(c, peaks.half_width_ns)));
    }
    for (label, pos) in [("t1", peaks.visible_accidental_ns[0]), ("t3", peaks.visible_accidental_ns[1])] {
        peak_counts.push((format!("accidental_{label}"), pos, histogram.peak_sum(pos, peaks.half_width_ns)));
    }
    for (label, pos) in [("t2", peaks.suppressed_accidental_ns[0]), ("t4", peaks.suppressed_accidental_ns[1])] {
        peak_counts.push((format!("accidental_{label}"), pos, histogram.peak_sum(pos, peaks.half_width_ns)));
    }
    let run = TiaRun {
        rate_hz: car.coincidences as f64 / duration_s,
        start_count: starts.len() as u64,
        stop_count: stops.len() as u64,
        frames: p.clock.frames,
        histogram,
        peaks,
        car,
        peak_counts,
    };
    Ok((run, trace_rows))
}

/// Single-source (no network) interval-analyzer run.
pub fn run_nomux_tia(p: &TiaParams) -> Result<TiaRun> {
    p.clock.validate()?;
    p.source.validate()?;
    if p.source.active_bins.len() != 1 {
        return Err(Error::config("single-source runs pump exactly one time bin"));
    }
    let chain = DetectionChain {
        eta_herald: p.eta_herald,
        dark_herald: p.dark_herald,
        eta_signal: p.eta_signal,
        dark_signal: p.dark_signal,
    };
    let active_slot = p.source.active_bins[0].slot(p.clock.bins_per_frame);
    let period = p.clock.frame_period_ps();
    let spacing = p.clock.bin_spacing_ps();
    let gate_phase = active_slot as i64 * spacing;
    let stop_delay = (NOMUX_STOP_DELAY_NS * PS_PER_NS as f64).round() as i64;

    let mut starts: Vec<i64> = Vec::new();
    let mut stops: Vec<i64> = Vec::new();
    let mut route_rng: Option<(u64, Stream)> = None;
    run_chunked(
        p.clock.frames,
        p.workers,
        |range| generate_chunk(range, p.clock, p.source, &chain, p.run_seed),
        |chunk| {
            for ev in &chunk.slots {
                let t_gen = ev.frame as i64 * period + ev.slot as i64 * spacing;
                if ev.herald_click {
                    stops.push(t_gen + stop_delay);
                }
                if ev.pairs > 0 && ev.slot as u32 == active_slot {
                    let rng = frame_route_rng(&mut route_rng, p.run_seed, ev.frame);
                    let mut detected = false;
                    for _ in 0..ev.pairs {
                        if rng.bernoulli(chain.eta_signal) {
                            detected = true;
                        }
                    }
                    if detected {
                        starts.push(t_gen);
                    }
                }
            }
            for &frame in &chunk.gate_darks {
                starts.push(frame as i64 * period + gate_phase);
            }
        },
    );
    starts.sort_unstable();
    starts.dedup();
    let histogram = build_histogram(&starts, &stops, HISTOGRAM_WINDOW_NS);
    let coincidence = NOMUX_STOP_DELAY_NS;
    let accidental = NOMUX_STOP_DELAY_NS - p.clock.frame_period_ns;
    let half = PeakStructure::integration_default();
    let car = car_no_mux(&histogram, coincidence, accidental, half);
    let duration_s = p.clock.frames as f64 * p.clock.frame_period_ns * 1e-9;
    let peaks = PeakStructure {
        coincidence_ns: vec![coincidence],
        visible_accidental_ns: vec![accidental, coincidence + p.clock.frame_period_ns],
        suppressed_accidental_ns: vec![],
        half_width_ns: half,
    };
    let peak_counts = vec![
        ("coincidence".to_string(), coincidence, histogram.peak_sum(coincidence, half)),
        ("accidental_prev".to_string(), accidental, histogram.peak_sum(accidental, half)),
        (
            "accidental_next".to_string(),
            coincidence + p.clock.frame_period_ns,
            histogram.peak_sum(coincidence + p.clock.frame_period_ns, half),
        ),
    ];
    Ok(TiaRun {
        rate_hz: car.coincidences as f64 / duration_s,
        start_count: starts.len() as u64,
        stop_count: stops.len() as u64,
        frames: p.clock.frames,
        histogram,
        peaks,
        car,
        peak_counts,
    })
}

/// Electronic-delay synchronization scan: coincidence counts versus the
/// stage-1 drive offset. The count is maximized at zero offset, where
/// the cross-routed bins rejoin the common slot.
pub fn scan_switch_delay(
    p: &TiaParams,
    net: &SwitchNetwork,
    table: &RoutingTable,
    offsets_ns: &[f64],
) -> Result<Vec<(f64, u64)>> {
    if offsets_ns.is_empty() {
        return Err(Error::config("delay scan range is empty"));
    }
    let mut out = Vec::with_capacity(offsets_ns.len());
    for &offset in offsets_ns {
        let mut shifted = net.clone();
        shifted.phase_offset_ns = offset;
        // Same seed at every offset: a paired comparison over one pair
        // stream sharpens the argmax.
        let (run, _) = run_mux_tia(p, &shifted, table, false)?;
        out.push((offset, run.car.coincidences));
    }
    Ok(out)
}

/// Offsets helper: inclusive range with a positive step.
pub fn scan_offsets(lo_ns: f64, hi_ns: f64, step_ns: f64) -> Result<Vec<f64>> {
    if !(step_ns > 0.0) {
        return Err(Error::config("delay scan step must be positive"));
    }
    if hi_ns < lo_ns {
        return Err(Error::config("delay scan range is empty"));
    }
    let mut v = Vec::new();
    let mut x = lo_ns;
    while x <= hi_ns + 1e-9 {
        v.push(x);
        x += step_ns;
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Four-fold interference runs
// ---------------------------------------------------------------------------

/// Parameters of a two-source interference run. Source 1 is the
/// multiplexed source feeding coupler port 1 through its network; source
/// 2 is the single-bin reference on port 2.
#[derive(Clone, Debug)]
pub struct HomParams {
    pub clock: ClockConfig,
    pub network: SwitchNetwork,
    pub table: RoutingTable,
    pub mu_source1: f64,
    pub mu_source2: f64,
    pub eta_herald1: f64,
    pub dark_herald1: f64,
    pub eta_herald2: f64,
    pub dark_herald2: f64,
    /// Common-slot output to coupler port 1 (excluding the network).
    pub arm1_transmission: f64,
    pub arm2_transmission: f64,
    pub output_detector: OutputDetector,
    pub overlap_sigma_ps: f64,
    pub intrinsic_overlap_max: f64,
    /// Diagnostic cap on sampled pair numbers (single-pair limit checks).
    pub pair_cap: Option<u32>,
    pub workers: usize,
}

impl HomParams {
    pub fn validate(&self) -> Result<()> {
        self.clock.validate()?;
        self.network.validate()?;
        self.table.validate()?;
        if !(self.overlap_sigma_ps > 0.0) {
            return Err(Error::config("hom: overlap sigma must be positive"));
        }
        if !(0.0..=1.0).contains(&self.intrinsic_overlap_max) {
            return Err(Error::config("hom: intrinsic overlap must be in [0,1]"));
        }
        for (name, v) in [
            ("mu_source1", self.mu_source1),
            ("mu_source2", self.mu_source2),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("hom: {name} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// One delay point: expected four-fold counts for the four acquisitions
/// plus the unconditioned two-fold counts from the raw acquisition.
#[derive(Clone, Copy, Debug)]
pub struct HomPoint {
    pub folds: FoldCounts,
    pub twofold_raw: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Acquisition {
    Raw,
    BlockSource1,
    BlockSource2,
    DarkOnly,
}

impl Acquisition {
    fn tag(self) -> u64 {
        match self {
            Acquisition::Raw => 1,
            Acquisition::BlockSource1 => 2,
            Acquisition::BlockSource2 => 3,
            Acquisition::DarkOnly => 4,
        }
    }
}

/// Sequential fold that turns source-1 slot events into per-frame
/// delivered photon counts at the coupler.
struct CouplerFold<'a> {
    clock: &'a ClockConfig,
    net: &'a SwitchNetwork,
    arm1: f64,
    run_seed: u64,
    state: ControllerState,
    pending: VecDeque<SlotEvent>,
    route_rng: Option<(u64, Stream)>,
    gate_phase_ps: i64,
    /// delivered[frame - base] for the frames of interest.
    delivered: Vec<u16>,
    herald1: Vec<bool>,
}

impl<'a> CouplerFold<'a> {
    fn new(clock: &'a ClockConfig, net: &'a SwitchNetwork, arm1: f64, run_seed: u64) -> Self {
        let spacing = clock.bin_spacing_ps();
        let gate_abs = (clock.bins_per_frame as i64 - 1) * spacing + net.buffer_delay_ps();
        CouplerFold {
            clock,
            net,
            arm1,
            run_seed,
            state: ControllerState::initial((net.phase_offset_ns * PS_PER_NS as f64).round() as i64),
            pending: VecDeque::new(),
            route_rng: None,
            gate_phase_ps: gate_abs.rem_euclid(clock.frame_period_ps()),
            delivered: vec![0; clock.frames as usize],
            herald1: vec![false; clock.frames as usize],
        }
    }

    fn t_gen(&self, ev: &SlotEvent) -> i64 {
        ev.frame as i64 * self.clock.frame_period_ps() + ev.slot as i64 * self.clock.bin_spacing_ps()
    }

    fn route_pending_before(&mut self, t_limit: Option<i64>) {
        let buffer = self.net.buffer_delay_ps();
        while let Some(front) = self.pending.front().copied() {
            let arrival = self.t_gen(&front) + buffer;
            if let Some(limit) = t_limit {
                if arrival >= limit {
                    break;
                }
            }
            self.pending.pop_front();
            let t_gen = self.t_gen(&front);
            if let RouteOutcome::Routed { t_out_ps, survival, .. } =
                apply_network(t_gen, &self.state, self.net)
            {
                let period = self.clock.frame_period_ps();
                if (t_out_ps - self.gate_phase_ps).rem_euclid(period) == 0 {
                    let p = survival * self.arm1;
                    let mut kept = 0u16;
                    {
                        let rng = frame_route_rng(&mut self.route_rng, self.run_seed, front.frame);
                        for _ in 0..front.pairs {
                            if rng.bernoulli(p) {
                                kept += 1;
                            }
                        }
                    }
                    let idx = front.frame as usize;
                    self.delivered[idx] = self.delivered[idx].saturating_add(kept);
                }
            }
        }
    }

    fn on_chunk(&mut self, chunk: ChunkEvents) {
        for ev in &chunk.slots {
            let t_gen = self.t_gen(ev);
            if ev.herald_click {
                self.route_pending_before(Some(t_gen));
                self.state.latched_bin =
                    TimeBin::from_slot(ev.slot as u32, self.clock.bins_per_frame).expect("validated");
                self.state.latched_at_ps = Some(t_gen);
                self.herald1[ev.frame as usize] = true;
            }
            if ev.pairs > 0 {
                self.pending.push_back(*ev);
            }
        }
    }

    fn finish(mut self) -> (Vec<u16>, Vec<bool>) {
        self.route_pending_before(None);
        (self.delivered, self.herald1)
    }
}

fn run_acquisition(p: &HomParams, m: f64, seed: u64, acq: Acquisition) -> Result<(f64, f64)> {
    let frames = p.clock.frames;
    let cap = p.pair_cap.unwrap_or(u32::MAX);
    let chain = DetectionChain {
        eta_herald: p.eta_herald1,
        dark_herald: p.dark_herald1,
        eta_signal: 1.0, // detection handled in the closed-form coupler term
        dark_signal: 0.0,
    };
    let source1 = Source::new(p.mu_source1, TimeBin::ALL.to_vec());

    // Source 1: full generation + routing unless blocked at the coupler.
    let (delivered, herald1) = if acq == Acquisition::BlockSource1 || acq == Acquisition::DarkOnly {
        // Heralds still fire; photons never reach the coupler.
        let mut herald1 = vec![false; frames as usize];
        run_chunked(
            frames,
            p.workers,
            |range| generate_chunk(range, &p.clock, &source1, &chain, seed),
            |chunk| {
                for ev in &chunk.slots {
                    if ev.herald_click {
                        herald1[ev.frame as usize] = true;
                    }
                }
            },
        );
        (vec![0u16; frames as usize], herald1)
    } else {
        let mut fold = CouplerFold::new(&p.clock, &p.network, p.arm1_transmission, seed);
        run_chunked(
            frames,
            p.workers,
            |range| generate_chunk(range, &p.clock, &source1, &chain, seed),
            |chunk| fold.on_chunk(chunk),
        );
        fold.finish()
    };

    let block2 = acq == Acquisition::BlockSource2 || acq == Acquisition::DarkOnly;
    let det = p.output_detector;
    let mut fourfold = 0.0;
    let mut twofold = 0.0;
    for frame in 0..frames {
        let mut rng2 = Stream::for_frame(seed, Domain::Reference, frame);
        let n2 = sample_pair_count(p.mu_source2, &mut rng2).min(cap);
        // Reference-source herald integrates in closed form.
        let p_h2 = 1.0
            - (1.0 - p.dark_herald2) * (1.0 - p.eta_herald2).powi(n2 as i32);
        let n2_coupler = if block2 {
            0
        } else {
            let mut kept = 0u32;
            for _ in 0..n2 {
                if rng2.bernoulli(p.arm2_transmission) {
                    kept += 1;
                }
            }
            kept
        };
        let n1 = (delivered[frame as usize] as u32).min(cap).min(3);
        let n2c = n2_coupler.min(3);
        let p_cc = coincidence_click_prob(n1, n2c, m, det, det)?;
        twofold += p_cc;
        if herald1[frame as usize] {
            fourfold += p_h2 * p_cc;
        }
    }
    Ok((fourfold, twofold))
}

/// Simulates one delay point of the four-fold scan: the raw acquisition
/// plus the three auxiliary acquisitions (source 1 blocked, source 2
/// blocked, both blocked), all of equal duration with independent
/// streams.
pub fn run_hom_point(p: &HomParams, run_seed: u64, delta_t_ps: f64) -> Result<HomPoint> {
    p.validate()?;
    let m = overlap(delta_t_ps, p.overlap_sigma_ps, p.intrinsic_overlap_max);
    let mut values = [0.0f64; 4];
    let mut twofold_raw = 0.0;
    for (i, acq) in [
        Acquisition::Raw,
        Acquisition::BlockSource1,
        Acquisition::BlockSource2,
        Acquisition::DarkOnly,
    ]
    .into_iter()
    .enumerate()
    {
        let seed = derive_seed(&[run_seed, acq.tag()]);
        let (four, two) = run_acquisition(p, m, seed, acq)?;
        values[i] = four;
        if acq == Acquisition::Raw {
            twofold_raw = two;
        }
    }
    Ok(HomPoint {
        folds: FoldCounts {
            delta_t_ps,
            c_raw: values[0],
            c_n1: values[1],
            c_n2: values[2],
            c_d: values[3],
        },
        twofold_raw,
    })
}
