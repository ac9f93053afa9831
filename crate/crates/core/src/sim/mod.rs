//! Pulse-level Monte-Carlo of the heralded source and its detectors.
//!
//! Pulses are simulated in fixed batches; batch b draws from a generator
//! seeded with `seed` on stream b, so output is independent of thread count.

mod timetag;

pub use timetag::{count_coincidences, read_timetags, write_timetags, Channel, TimeTag, TIMETAG_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::detector::{HeraldDetectorModel, IdlerArmConfig};
use crate::error::{Error, Result};
use crate::source::SourceConfig;
use crate::statistics::CountRecord;

pub const BATCH_SIZE: u64 = 1 << 16;

/// Largest pixel count the simulator's bit masks support.
pub const MAX_SIM_PIXELS: usize = 63;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub herald: HeraldDetectorModel,
    pub arm: IdlerArmConfig,
    pub repetition_rate_hz: f64,
    pub pulses: u64,
    pub coincidence_window_ps: f64,
    pub seed: u64,
    /// Gaussian timing jitter (standard deviation) per detection event.
    pub jitter_ps: f64,
    /// Per-pulse probability of a dark click on each pixel and idler detector.
    pub dark_count_probability: f64,
}

impl ExperimentConfig {
    pub fn new(source: SourceConfig, herald: HeraldDetectorModel, arm: IdlerArmConfig, pulses: u64, seed: u64) -> Self {
        Self {
            source,
            herald,
            arm,
            repetition_rate_hz: crate::presets::REPETITION_RATE_HZ,
            pulses,
            coincidence_window_ps: crate::presets::COINCIDENCE_WINDOW_PS,
            seed,
            jitter_ps: 0.0,
            dark_count_probability: 0.0,
        }
    }

    pub fn period_ps(&self) -> f64 {
        1e12 / self.repetition_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(Error::invalid("need at least one pulse"));
        }
        if !(self.repetition_rate_hz > 0.0 && self.repetition_rate_hz.is_finite()) {
            return Err(Error::invalid(format!("repetition rate must be > 0, got {}", self.repetition_rate_hz)));
        }
        if !(self.coincidence_window_ps > 0.0 && self.coincidence_window_ps < self.period_ps()) {
            return Err(Error::invalid(format!(
                "coincidence window {} ps must be positive and shorter than the pulse period {:.1} ps",
                self.coincidence_window_ps,
                self.period_ps()
            )));
        }
        if !(self.jitter_ps >= 0.0 && self.jitter_ps.is_finite()) {
            return Err(Error::invalid(format!("jitter must be >= 0, got {}", self.jitter_ps)));
        }
        if !(0.0..=1.0).contains(&self.dark_count_probability) {
            return Err(Error::invalid(format!("dark count probability must lie in [0, 1], got {}", self.dark_count_probability)));
        }
        if self.herald.pixel_count() > MAX_SIM_PIXELS {
            return Err(Error::invalid(format!("simulator supports at most {MAX_SIM_PIXELS} pixels")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub counts: CountRecord,
    pub tags: Option<Vec<TimeTag>>,
}

struct Sampler {
    /// ln(ν/(1+ν)) per Schmidt mode with ν > 0.
    log_ratios: Vec<f64>,
    /// Cumulative per-photon pixel probabilities η_h T_k η_k.
    pixel_cdf: Vec<f64>,
    a: f64,
    ab: f64,
    half_window: f64,
    period: f64,
    jitter: Option<Normal<f64>>,
    dark: f64,
    pixels: usize,
}

impl Sampler {
    fn new(config: &ExperimentConfig) -> Self {
        let log_ratios = config.source.mode_means().filter(|&nu| nu > 0.0).map(|nu| (nu / (1.0 + nu)).ln()).collect();
        let mut acc = 0.0;
        let pixel_cdf = config
            .herald
            .click_probabilities()
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        let a = config.arm.eta_a() / 2.0;
        Self {
            log_ratios,
            pixel_cdf,
            a,
            ab: a + config.arm.eta_b() / 2.0,
            half_window: config.coincidence_window_ps / 2.0,
            period: config.period_ps(),
            jitter: (config.jitter_ps > 0.0).then(|| Normal::new(0.0, config.jitter_ps).expect("validated jitter")),
            dark: config.dark_count_probability,
            pixels: config.herald.pixel_count(),
        }
    }

    /// Geometric draw by inverse CDF: n = ⌊ln U / ln r⌋.
    fn pairs<R: Rng>(&self, rng: &mut R) -> u64 {
        self.log_ratios
            .iter()
            .map(|lr| {
                let u: f64 = 1.0 - rng.gen::<f64>();
                (u.ln() / lr).floor() as u64
            })
            .sum()
    }

    /// Tag time of a detection at pulse `idx`, or None if it falls outside
    /// the window. Gating uses the rounded time, exactly as the counter does.
    fn detection_time<R: Rng>(&self, rng: &mut R, idx: u64) -> Option<i64> {
        let center = idx as f64 * self.period;
        let dt = self.jitter.as_ref().map_or(0.0, |n| n.sample(rng));
        let t = (center + dt).round() as i64;
        ((t as f64 - center).abs() <= self.half_window).then_some(t)
    }

    fn run_batch(&self, seed: u64, batch: u64, start: u64, len: u64, emit_tags: bool) -> (CountRecord, Vec<TimeTag>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch);
        let mut record = CountRecord::empty(self.pixels);
        record.pulses = len;
        let mut tags = Vec::new();
        for idx in start..start + len {
            let n = self.pairs(&mut rng);
            let mut mask = 0u64;
            let (mut a, mut b) = (false, false);
            for _ in 0..n {
                let u: f64 = rng.gen();
                if let Some(k) = self.pixel_cdf.iter().position(|&c| u < c) {
                    mask |= 1 << k;
                }
                let v: f64 = rng.gen();
                if v < self.a {
                    a = true;
                } else if v < self.ab {
                    b = true;
                }
            }
            if self.dark > 0.0 {
                for k in 0..self.pixels {
                    if rng.gen::<f64>() < self.dark {
                        mask |= 1 << k;
                    }
                }
                a |= rng.gen::<f64>() < self.dark;
                b |= rng.gen::<f64>() < self.dark;
            }
            if mask == 0 && !a && !b {
                continue;
            }
            let t_h = if mask != 0 { self.detection_time(&mut rng, idx) } else { None };
            let t_a = if a { self.detection_time(&mut rng, idx) } else { None };
            let t_b = if b { self.detection_time(&mut rng, idx) } else { None };
            let clicks = if t_h.is_some() { mask.count_ones() as usize } else { 0 };
            timetag::tally(&mut record, clicks, t_a.is_some(), t_b.is_some());
            if emit_tags {
                if let Some(time_ps) = t_h {
                    for level in 1..=clicks {
                        tags.push(TimeTag { channel: Channel::HeraldLevel(level as u8), time_ps, pulse_index: idx });
                    }
                }
                if let Some(time_ps) = t_a {
                    tags.push(TimeTag { channel: Channel::DetA, time_ps, pulse_index: idx });
                }
                if let Some(time_ps) = t_b {
                    tags.push(TimeTag { channel: Channel::DetB, time_ps, pulse_index: idx });
                }
            }
        }
        (record, tags)
    }
}

/// Simulates `config.pulses` pump pulses. Detections whose jittered time
/// falls outside the coincidence window are gated out and emit no tag.
pub fn simulate_run(config: &ExperimentConfig, emit_tags: bool) -> Result<SimulationOutput> {
    config.validate()?;
    let sampler = Sampler::new(config);
    let batches = config.pulses.div_ceil(BATCH_SIZE);
    let parts: Vec<(CountRecord, Vec<TimeTag>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH_SIZE;
            let len = BATCH_SIZE.min(config.pulses - start);
            sampler.run_batch(config.seed, b, start, len, emit_tags)
        })
        .collect();
    let mut counts = CountRecord::empty(config.herald.pixel_count());
    let mut tags = Vec::new();
    for (c, t) in parts {
        counts.merge(&c);
        tags.extend(t);
    }
    // jitter can reorder events across channels within a pulse
    tags.sort_by_key(|t| (t.time_ps, t.channel));
    Ok(SimulationOutput { counts, tags: emit_tags.then_some(tags) })
}
