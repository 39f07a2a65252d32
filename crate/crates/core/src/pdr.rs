//! Pedestrian dead reckoning front-end.
//!
//! IMU samples pass through a band-pass filter on the dynamic acceleration
//! magnitude, steps are detected as peak/valley pairs of the filtered signal, and
//! each step is turned into a horizontal displacement with the Weinberg step
//! length model `Δs = k·ΔA^¼`. Heading is an input channel, not estimated here.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::Heading;

/// Standard gravity (m/s²) removed from the acceleration magnitude.
pub const GRAVITY: f64 = 9.806_65;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdrError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid step event: peak-valley difference {0} must be positive")]
    InvalidEvent(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Body-frame specific force (m/s²).
    pub acc: [f64; 3],
    /// Externally estimated heading.
    pub heading: Heading,
}

impl ImuSample {
    pub fn dynamic_magnitude(&self) -> f64 {
        Vector3::from(self.acc).norm() - GRAVITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t_peak: f64,
    pub t_valley: f64,
    pub a_peak: f64,
    pub a_valley: f64,
    pub delta_a: f64,
}

impl StepEvent {
    pub fn new(t_peak: f64, t_valley: f64, a_peak: f64, a_valley: f64) -> Self {
        Self {
            t_peak,
            t_valley,
            a_peak,
            a_valley,
            delta_a: a_peak - a_valley,
        }
    }
}

/// Per-step displacement consumed by every back-end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepIncrement {
    pub t: f64,
    /// (east, north) meters.
    pub delta_p: [f64; 2],
    #[serde(default)]
    pub delta_z: f64,
    pub delta_psi: Heading,
    pub step_length: f64,
    pub psi: Heading,
}

impl StepIncrement {
    /// Resolves a step of `length` along heading `psi` into ENU.
    pub fn from_length(t: f64, length: f64, psi: Heading, psi_prev: Heading) -> Self {
        let (s, c) = psi.rad().sin_cos();
        Self {
            t,
            delta_p: [length * s, length * c],
            delta_z: 0.0,
            delta_psi: psi.diff(psi_prev),
            step_length: length,
            psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdrConfig {
    pub k_weinberg: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub min_step_interval: f64,
    pub peak_threshold: f64,
    pub max_step_length: f64,
}

impl Default for PdrConfig {
    fn default() -> Self {
        Self {
            k_weinberg: 0.5,
            band_low: 0.5,
            band_high: 3.0,
            min_step_interval: 0.3,
            peak_threshold: 0.5,
            max_step_length: 2.0,
        }
    }
}

impl PdrConfig {
    pub fn validate(&self, sample_rate: f64) -> Result<(), PdrError> {
        if !(self.k_weinberg > 0.0) {
            return Err(PdrError::Config(format!(
                "k_weinberg must be positive, got {}",
                self.k_weinberg
            )));
        }
        if !(self.band_low > 0.0 && self.band_low < self.band_high) {
            return Err(PdrError::Config(format!(
                "need 0 < band_low < band_high, got {}..{}",
                self.band_low, self.band_high
            )));
        }
        if !(sample_rate >= 2.0 * self.band_high) {
            return Err(PdrError::Config(format!(
                "sample rate {sample_rate} Hz below twice the upper band edge {} Hz",
                self.band_high
            )));
        }
        if !(self.max_step_length >= 0.0) || !(self.min_step_interval >= 0.0) {
            return Err(PdrError::Config("negative step limits".into()));
        }
        Ok(())
    }
}

/// Direct form II transposed biquad section.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl Biquad {
    fn lowpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sw, cw) = w0.sin_cos();
        let alpha = sw / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [
                (1.0 - cw) / 2.0 / a0,
                (1.0 - cw) / a0,
                (1.0 - cw) / 2.0 / a0,
            ],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
            z: [0.0; 2],
        }
    }

    fn highpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sw, cw) = w0.sin_cos();
        let alpha = sw / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [
                (1.0 + cw) / 2.0 / a0,
                -(1.0 + cw) / a0,
                (1.0 + cw) / 2.0 / a0,
            ],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
            z: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z[0];
        self.z[0] = self.b[1] * x - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// Causal band-pass on `‖acc‖ - g`: a 2nd-order Butterworth high-pass at
/// `band_low` cascaded with a 4th-order Butterworth low-pass at `band_high`.
#[derive(Debug, Clone)]
pub struct Bandpass {
    sections: [Biquad; 3],
}

impl Bandpass {
    pub fn new(cfg: &PdrConfig, sample_rate: f64) -> Result<Self, PdrError> {
        cfg.validate(sample_rate)?;
        Ok(Self {
            sections: [
                Biquad::highpass(cfg.band_low, sample_rate, std::f64::consts::FRAC_1_SQRT_2),
                Biquad::lowpass(cfg.band_high, sample_rate, 0.541_196_100_146_197),
                Biquad::lowpass(cfg.band_high, sample_rate, 1.306_562_964_876_376_6),
            ],
        })
    }

    pub fn step(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.step(acc))
    }
}

/// Median sample rate of a stream, from timestamp differences.
pub fn estimate_sample_rate(samples: &[ImuSample]) -> Result<f64, PdrError> {
    if samples.len() < 2 {
        return Err(PdrError::InvalidInput("need at least two samples".into()));
    }
    let mut dts = Vec::with_capacity(samples.len() - 1);
    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(PdrError::InvalidInput(format!(
                "timestamps not strictly increasing at t = {}",
                w[1].t
            )));
        }
        dts.push(dt);
    }
    dts.sort_by(f64::total_cmp);
    Ok(1.0 / dts[dts.len() / 2])
}

/// Band-passes a whole recorded stream, returning `(t, filtered)` pairs.
pub fn bandpass(samples: &[ImuSample], cfg: &PdrConfig) -> Result<Vec<(f64, f64)>, PdrError> {
    let fs = estimate_sample_rate(samples)?;
    let mut filter = Bandpass::new(cfg, fs)?;
    Ok(samples
        .iter()
        .map(|s| (s.t, filter.step(s.dynamic_magnitude())))
        .collect())
}

/// Streaming peak/valley step detector.
///
/// A step is a local maximum above `peak_threshold` followed by the next local
/// minimum. Peaks closer than `min_step_interval` to the previous step's peak
/// are ignored; a higher peak seen before the valley replaces the candidate.
#[derive(Debug, Clone)]
pub struct StepDetector {
    cfg: PdrConfig,
    history: [Option<(f64, f64)>; 2],
    candidate: Option<(f64, f64)>,
    last_peak_t: Option<f64>,
}

impl StepDetector {
    pub fn new(cfg: PdrConfig) -> Self {
        Self {
            cfg,
            history: [None, None],
            candidate: None,
            last_peak_t: None,
        }
    }

    /// Time of the current unconfirmed peak, if any.
    pub fn pending_peak(&self) -> Option<f64> {
        self.candidate.map(|c| c.0)
    }

    pub fn push(&mut self, t: f64, y: f64) -> Option<StepEvent> {
        let mut event = None;
        if let [Some((_, y2)), Some((t1, y1))] = self.history {
            if y2 < y1 && y1 >= y && y1 > self.cfg.peak_threshold {
                match self.candidate {
                    Some((_, yc)) if y1 > yc => self.candidate = Some((t1, y1)),
                    Some(_) => {}
                    None => {
                        let spaced = self
                            .last_peak_t
                            .is_none_or(|tp| t1 - tp >= self.cfg.min_step_interval);
                        if spaced {
                            self.candidate = Some((t1, y1));
                        }
                    }
                }
            } else if y2 > y1 && y1 <= y {
                if let Some((tc, yc)) = self.candidate {
                    if t1 > tc && yc > y1 {
                        event = Some(StepEvent::new(tc, t1, yc, y1));
                        self.last_peak_t = Some(tc);
                        self.candidate = None;
                    }
                }
            }
        }
        self.history = [self.history[1], Some((t, y))];
        event
    }
}

/// Runs the detector over a filtered stream.
pub fn detect_steps(filtered: &[(f64, f64)], cfg: &PdrConfig) -> Vec<StepEvent> {
    let mut det = StepDetector::new(*cfg);
    filtered
        .iter()
        .filter_map(|&(t, y)| det.push(t, y))
        .collect()
}

/// Weinberg step length `k·ΔA^¼`, clamped to `[0, max_step_length]`.
pub fn step_length(ev: &StepEvent, cfg: &PdrConfig) -> Result<f64, PdrError> {
    if !(ev.delta_a > 0.0) {
        return Err(PdrError::InvalidEvent(ev.delta_a));
    }
    Ok((cfg.k_weinberg * ev.delta_a.powf(0.25)).clamp(0.0, cfg.max_step_length))
}

pub fn make_increment(
    ev: &StepEvent,
    psi: Heading,
    psi_prev: Heading,
    cfg: &PdrConfig,
) -> Result<StepIncrement, PdrError> {
    let len = step_length(ev, cfg)?;
    Ok(StepIncrement::from_length(ev.t_peak, len, psi, psi_prev))
}

/// Solves for the Weinberg gain that makes `events` cover `known_distance`.
pub fn calibrate_k(known_distance: f64, events: &[StepEvent]) -> Result<f64, PdrError> {
    if events.is_empty() {
        return Err(PdrError::InvalidInput("no step events".into()));
    }
    if events.len() < 10 {
        return Err(PdrError::InvalidInput(format!(
            "calibration needs at least 10 steps, got {}",
            events.len()
        )));
    }
    if !(known_distance > 0.0) {
        return Err(PdrError::InvalidInput(format!(
            "known distance must be positive, got {known_distance}"
        )));
    }
    let mut sum = 0.0;
    for ev in events {
        if !(ev.delta_a > 0.0) {
            return Err(PdrError::InvalidEvent(ev.delta_a));
        }
        sum += ev.delta_a.powf(0.25);
    }
    Ok(known_distance / sum)
}

/// Stateful front-end: IMU samples in, step increments out.
#[derive(Debug, Clone)]
pub struct PdrFrontend {
    cfg: PdrConfig,
    filter: Bandpass,
    detector: StepDetector,
    last: Option<(f64, Heading)>,
    // Heading of the sample at the current candidate peak.
    peak_heading: Option<(f64, Heading)>,
    prev_psi: Option<Heading>,
}

impl PdrFrontend {
    pub fn new(cfg: PdrConfig, sample_rate: f64) -> Result<Self, PdrError> {
        Ok(Self {
            filter: Bandpass::new(&cfg, sample_rate)?,
            detector: StepDetector::new(cfg),
            cfg,
            last: None,
            peak_heading: None,
            prev_psi: None,
        })
    }

    pub fn push(&mut self, s: &ImuSample) -> Result<Option<StepIncrement>, PdrError> {
        if let Some((t0, _)) = self.last {
            if !(s.t > t0) {
                return Err(PdrError::InvalidInput(format!(
                    "timestamp {} does not advance past {}",
                    s.t, t0
                )));
            }
        }
        let prev_heading = self.last.map_or(s.heading, |l| l.1);
        self.last = Some((s.t, s.heading));

        let y = self.filter.step(s.dynamic_magnitude());
        let before = self.detector.pending_peak();
        let ev = self.detector.push(s.t, y);
        // Peaks are confirmed one sample late, so the peak sample is the previous one.
        let pending = self.detector.pending_peak();
        if pending.is_some() && pending != before {
            self.peak_heading = pending.map(|tp| (tp, prev_heading));
        }
        let Some(ev) = ev else { return Ok(None) };
        let psi = match self.peak_heading.take() {
            Some((tp, h)) if tp == ev.t_peak => h,
            _ => s.heading,
        };
        // The first step's heading change is measured from north.
        let prev = self.prev_psi.unwrap_or(Heading::NORTH);
        let inc = make_increment(&ev, psi, prev, &self.cfg)?;
        self.prev_psi = Some(psi);
        Ok(Some(inc))
    }

    pub fn process(&mut self, samples: &[ImuSample]) -> Result<Vec<StepIncrement>, PdrError> {
        let mut out = Vec::new();
        for s in samples {
            if let Some(inc) = self.push(s)? {
                out.push(inc);
            }
        }
        Ok(out)
    }
}

/// Synthesizes the acceleration magnitude of a gait cycle whose band-passed
/// peak-to-valley swing reproduces `step_len` under the Weinberg model.
pub fn weinberg_amplitude(step_len: f64, k: f64) -> f64 {
    // Peak-to-valley of a sinusoid is twice its amplitude.
    (step_len / k).powi(4) / 2.0
}
