//! Scenario simulator: constant-speed walks along waypoint polylines with
//! synthetic step increments, GNSS fixes and UWB range sets.
//!
//! Each sensor draws from its own ChaCha stream derived from the scenario
//! seed, so switching one sensor off does not perturb the others.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{EnuOrigin, EnuPoint, GeoPoint, Heading};
use crate::map::{BuildingPolygon, FeasibilityMap, MapError};
use crate::pdr::{weinberg_amplitude, ImuSample, StepIncrement, GRAVITY};
use crate::uwb::{AbsoluteFix, Anchor, FixSource, Range, RangeSet};

/// Ground-truth sampling rate (Hz).
pub const TRUTH_RATE: f64 = 50.0;
/// Smallest sigma written to observation logs.
pub const SIGMA_FLOOR: f64 = 1e-3;

const STREAM_STEPS: u64 = 1;
const STREAM_GNSS: u64 = 2;
const STREAM_UWB: u64 = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSpec {
    pub id: String,
    /// ENU ring `[e, n]`, meters.
    pub ring: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultipathSpec {
    /// Distance from a façade within which multipath can occur (m).
    pub facade_distance: f64,
    pub bias: f64,
    /// Fraction of epochs affected.
    pub prob: f64,
    /// Lag-one correlation of the multipath state between epochs; 0 draws
    /// every epoch independently, values near 1 give long bursts.
    pub persistence: f64,
}

impl MultipathSpec {
    /// Probability of being affected at the next epoch given the current state.
    fn transition(&self, affected: bool) -> f64 {
        if affected {
            self.prob + self.persistence * (1.0 - self.prob)
        } else {
            self.prob * (1.0 - self.persistence)
        }
    }
}

impl Default for MultipathSpec {
    fn default() -> Self {
        Self {
            facade_distance: 5.0,
            bias: 0.0,
            prob: 0.0,
            persistence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnssSpec {
    pub rate: f64,
    pub sigma: f64,
    /// Extra areas without GNSS reception besides building interiors.
    pub outages: Vec<Vec<[f64; 2]>>,
    pub multipath: MultipathSpec,
}

impl Default for GnssSpec {
    fn default() -> Self {
        Self {
            rate: 1.0,
            sigma: 1.5,
            outages: Vec::new(),
            multipath: MultipathSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UwbSpec {
    pub anchors: Vec<Anchor>,
    pub rate: f64,
    pub sigma: f64,
    pub nlos_bias: f64,
    pub nlos_prob: f64,
    /// Ranges are produced only while the walker is inside this ring.
    /// Empty means everywhere.
    pub coverage: Vec<[f64; 2]>,
    /// Anchors farther than this are not heard. `None` means unlimited.
    pub max_range: Option<f64>,
}

impl Default for UwbSpec {
    fn default() -> Self {
        Self {
            anchors: Vec::new(),
            rate: 2.0,
            sigma: 0.15,
            nlos_bias: 0.5,
            nlos_prob: 0.0,
            coverage: Vec::new(),
            max_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PdrNoiseSpec {
    /// Per-step relative step-length noise (std of the scale error).
    pub k_error: f64,
    /// Constant heading offset (rad).
    pub heading_bias: f64,
    /// White heading noise per step (rad).
    pub heading_noise: f64,
    /// Random-walk heading drift per step (rad/√step), as from gyro integration.
    pub heading_walk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuSynthSpec {
    pub rate: f64,
    /// Weinberg gain used to invert step length into acceleration swing.
    pub k: f64,
}

impl Default for ImuSynthSpec {
    fn default() -> Self {
        Self {
            rate: 100.0,
            k: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub name: String,
    pub origin: GeoPoint,
    /// ENU waypoints `[e, n]`; the walker visits them in order `laps` times.
    pub waypoints: Vec<[f64; 2]>,
    pub laps: usize,
    pub speed: f64,
    pub step_length_true: f64,
    pub buildings: Vec<BuildingSpec>,
    /// Buildings the walker may enter.
    pub allowed: Vec<String>,
    pub gnss: Option<GnssSpec>,
    pub uwb: Option<UwbSpec>,
    pub pdr: PdrNoiseSpec,
    pub imu: Option<ImuSynthSpec>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            origin: GeoPoint::new(60.4518, 22.2666, 0.0),
            waypoints: Vec::new(),
            laps: 1,
            speed: 1.4,
            step_length_true: 0.7,
            buildings: Vec::new(),
            allowed: Vec::new(),
            gnss: None,
            uwb: None,
            pdr: PdrNoiseSpec::default(),
            imu: None,
            seed: 0,
        }
    }
}

fn prob_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Spec(m));
        if self.waypoints.len() < 2 {
            return bad("at least two waypoints are required".into());
        }
        for (i, w) in self.waypoints.windows(2).enumerate() {
            if (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) < 1e-9 {
                return bad(format!("waypoints {i} and {} coincide", i + 1));
            }
        }
        if self.laps == 0 {
            return bad("laps must be at least 1".into());
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.step_length_true > 0.0 && self.step_length_true.is_finite()) {
            return bad("step_length_true must be positive".into());
        }
        if let Some(g) = &self.gnss {
            if !(g.rate > 0.0) || !(g.sigma >= 0.0) {
                return bad("gnss rate must be positive and sigma non-negative".into());
            }
            if !prob_ok(g.multipath.prob) {
                return bad("gnss multipath prob must lie in [0, 1]".into());
            }
            if !(0.0..1.0).contains(&g.multipath.persistence) {
                return bad("gnss multipath persistence must lie in [0, 1)".into());
            }
        }
        if let Some(u) = &self.uwb {
            if !(u.rate > 0.0) || !(u.sigma >= 0.0) {
                return bad("uwb rate must be positive and sigma non-negative".into());
            }
            if !prob_ok(u.nlos_prob) || u.nlos_bias < 0.0 {
                return bad(
                    "uwb nlos_prob must lie in [0, 1] and nlos_bias be non-negative".into(),
                );
            }
            if u.anchors.len() < 3 {
                return bad("uwb needs at least three anchors".into());
            }
        }
        if let Some(imu) = &self.imu {
            if !(imu.rate > 0.0 && imu.k > 0.0) {
                return bad("imu rate and k must be positive".into());
            }
        }
        Ok(())
    }

    pub fn enu_origin(&self) -> Result<EnuOrigin, SimError> {
        EnuOrigin::new(self.origin).map_err(|e| SimError::Spec(e.to_string()))
    }

    /// Feasibility map built from the scenario's buildings.
    pub fn map(&self) -> Result<FeasibilityMap, SimError> {
        let origin = self.enu_origin()?;
        let polys = self
            .buildings
            .iter()
            .map(|b| BuildingPolygon::from_enu(b.id.clone(), b.ring.clone(), &origin))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeasibilityMap::new(polys, self.allowed.iter().cloned())?)
    }

    fn polyline(&self) -> Vec<[f64; 2]> {
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for _ in 0..self.laps {
            for w in &self.waypoints {
                if pts
                    .last()
                    .is_none_or(|l| (l[0] - w[0]).hypot(l[1] - w[1]) > 1e-9)
                {
                    pts.push(*w);
                }
            }
        }
        pts
    }
}

/// Piecewise-linear constant-speed path.
#[derive(Debug, Clone)]
struct Path {
    pts: Vec<[f64; 2]>,
    cum: Vec<f64>,
    speed: f64,
}

impl Path {
    fn new(pts: Vec<[f64; 2]>, speed: f64) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cum.push(cum.last().unwrap() + l);
        }
        Self { pts, cum, speed }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn duration(&self) -> f64 {
        self.length() / self.speed
    }

    fn segment(&self, s: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= s);
        i.clamp(1, self.pts.len() - 1) - 1
    }

    fn at(&self, t: f64) -> (EnuPoint, Heading) {
        let s = (t * self.speed).clamp(0.0, self.length());
        let i = self.segment(s);
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        let len = self.cum[i + 1] - self.cum[i];
        let f = (s - self.cum[i]) / len;
        let p = EnuPoint::horizontal(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]));
        (p, Heading::new((b[0] - a[0]).atan2(b[1] - a[1])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub pos: EnuPoint,
    pub heading: Heading,
}

/// Truth samples in time order. Linear interpolation between samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub samples: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn new(samples: Vec<TruthSample>) -> Self {
        Self { samples }
    }

    pub fn start(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Position at `t`, or `None` outside the sampled span.
    pub fn position_at(&self, t: f64) -> Option<EnuPoint> {
        let (first, last) = (self.samples.first()?, self.samples.last()?);
        if t < first.t || t > last.t {
            return None;
        }
        let i = self.samples.partition_point(|s| s.t <= t);
        if i == 0 {
            return Some(first.pos);
        }
        if i == self.samples.len() {
            return Some(last.pos);
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let f = (t - a.t) / (b.t - a.t);
        Some(EnuPoint::new(
            a.pos.e + f * (b.pos.e - a.pos.e),
            a.pos.n + f * (b.pos.n - a.pos.n),
            a.pos.u + f * (b.pos.u - a.pos.u),
        ))
    }
}

/// Samples the walk at [`TRUTH_RATE`], plus every waypoint passage so that
/// linear interpolation reproduces the path exactly.
pub fn generate_truth(spec: &ScenarioSpec) -> Result<GroundTruth, SimError> {
    spec.validate()?;
    let path = Path::new(spec.polyline(), spec.speed);
    let dur = path.duration();
    let mut times: Vec<f64> = (0..=(dur * TRUTH_RATE).floor() as usize)
        .map(|i| i as f64 / TRUTH_RATE)
        .collect();
    times.extend(path.cum.iter().map(|c| c / spec.speed));
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let samples = times
        .into_iter()
        .map(|t| {
            let (pos, heading) = path.at(t);
            TruthSample { t, pos, heading }
        })
        .collect();
    Ok(GroundTruth { samples })
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Steps every `step_length_true / speed` seconds as chords of the truth,
/// plus a final partial step, with length and heading errors applied.
pub fn synth_steps(gt: &GroundTruth, spec: &ScenarioSpec) -> Vec<StepIncrement> {
    let (Some(t0), Some(t1)) = (gt.start(), gt.end()) else {
        return Vec::new();
    };
    let period = spec.step_length_true / spec.speed;
    let mut times: Vec<f64> = (1..)
        .map(|k| t0 + k as f64 * period)
        .take_while(|&t| t <= t1 + 1e-9)
        .collect();
    if times.last().is_none_or(|&t| t1 - t > 1e-9) {
        times.push(t1);
    }
    let mut rng = stream(spec.seed, STREAM_STEPS);
    let noise = spec.pdr;
    let mut walk = 0.0;
    let mut prev_t = t0;
    let mut prev_psi = Heading::NORTH;
    times
        .into_iter()
        .map(|t| {
            let a = gt.position_at(prev_t).expect("within truth");
            let b = gt.position_at(t.min(t1)).expect("within truth");
            let (de, dn) = (b.e - a.e, b.n - a.n);
            let len = de.hypot(dn);
            let true_psi = de.atan2(dn);
            let scale = 1.0 + gauss(&mut rng, noise.k_error);
            walk += gauss(&mut rng, noise.heading_walk);
            let white = gauss(&mut rng, noise.heading_noise);
            let psi = Heading::new(true_psi + noise.heading_bias + walk + white);
            let inc = StepIncrement::from_length(t, len * scale, psi, prev_psi);
            prev_t = t;
            prev_psi = psi;
            inc
        })
        .collect()
}

fn ring_contains(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    // even-odd ray cast; rings here are simple
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn epoch_times(gt: &GroundTruth, rate: f64) -> Vec<f64> {
    let (Some(t0), Some(t1)) = (gt.start(), gt.end()) else {
        return Vec::new();
    };
    (0..)
        .map(|j| t0 + j as f64 / rate)
        .take_while(|&t| t <= t1 + 1e-9)
        .collect()
}

/// GNSS fixes with white noise, indoor/outage suppression and façade
/// multipath. A multipath bias pushes the fix away from the nearest façade.
pub fn synth_gnss(gt: &GroundTruth, spec: &ScenarioSpec, map: &FeasibilityMap) -> Vec<AbsoluteFix> {
    let Some(g) = &spec.gnss else {
        return Vec::new();
    };
    let mut rng = stream(spec.seed, STREAM_GNSS);
    let reported = g.sigma.max(SIGMA_FLOOR);
    let mut out = Vec::new();
    let mut affected = false;
    for (i, t) in epoch_times(gt, g.rate).into_iter().enumerate() {
        let truth = gt
            .position_at(t.min(gt.end().unwrap()))
            .expect("within truth");
        // draw every epoch so outages do not shift later noise
        let noise = [
            gauss(&mut rng, g.sigma),
            gauss(&mut rng, g.sigma),
            gauss(&mut rng, g.sigma),
        ];
        let hit: f64 = rng.random();
        let p_hit = if i == 0 {
            g.multipath.prob
        } else {
            g.multipath.transition(affected)
        };
        affected = hit < p_hit;
        let p = [truth.e, truth.n];
        let indoors = map.polygons().iter().any(|b| b.contains(p));
        if indoors || g.outages.iter().any(|r| ring_contains(r, p)) {
            continue;
        }
        let mut pos = EnuPoint::new(truth.e + noise[0], truth.n + noise[1], truth.u + noise[2]);
        if affected {
            if let Some((_, bp)) = map.nearest_facade(&truth) {
                if bp.distance <= g.multipath.facade_distance {
                    pos.e += g.multipath.bias * bp.outward[0];
                    pos.n += g.multipath.bias * bp.outward[1];
                }
            }
        }
        out.push(AbsoluteFix::new(t, pos, [reported; 3], FixSource::Gnss));
    }
    out
}

/// UWB range sets while the walker is inside coverage. NLOS adds a positive
/// bias with probability `nlos_prob` per range.
pub fn synth_uwb(gt: &GroundTruth, spec: &ScenarioSpec) -> Vec<RangeSet> {
    let Some(u) = &spec.uwb else {
        return Vec::new();
    };
    let mut rng = stream(spec.seed, STREAM_UWB);
    let reported = u.sigma.max(SIGMA_FLOOR);
    let mut out = Vec::new();
    for t in epoch_times(gt, u.rate) {
        let truth = gt
            .position_at(t.min(gt.end().unwrap()))
            .expect("within truth");
        let draws: Vec<(f64, f64)> = u
            .anchors
            .iter()
            .map(|_| (gauss(&mut rng, u.sigma), rng.random::<f64>()))
            .collect();
        if !u.coverage.is_empty() && !ring_contains(&u.coverage, [truth.e, truth.n]) {
            continue;
        }
        let ranges: Vec<Range> = u
            .anchors
            .iter()
            .zip(draws)
            .filter_map(|(a, (noise, hit))| {
                let d = a.pos.distance(&truth);
                if u.max_range.is_some_and(|m| d > m) {
                    return None;
                }
                let nlos = if hit < u.nlos_prob { u.nlos_bias } else { 0.0 };
                Some(Range {
                    anchor_id: a.id.clone(),
                    range: (d + noise + nlos).max(0.0),
                    sigma: reported,
                })
            })
            .collect();
        if !ranges.is_empty() {
            out.push(RangeSet { t, ranges });
        }
    }
    out
}

/// Vertical acceleration whose gait cycles carry the given steps: one
/// sinusoid per step with peak-to-valley swing from the Weinberg relation.
pub fn synth_imu(steps: &[StepIncrement], t0: f64, imu: &ImuSynthSpec) -> Vec<ImuSample> {
    let Some(last) = steps.last() else {
        return Vec::new();
    };
    let n = ((last.t - t0) * imu.rate).floor() as usize;
    let mut k = 0;
    (0..=n)
        .map(|i| {
            let t = t0 + i as f64 / imu.rate;
            while k + 1 < steps.len() && t > steps[k].t {
                k += 1;
            }
            let start = if k == 0 { t0 } else { steps[k - 1].t };
            let period = steps[k].t - start;
            let phase = ((t - start) / period).clamp(0.0, 1.0);
            let amp = weinberg_amplitude(steps[k].step_length, imu.k);
            ImuSample {
                t,
                acc: [0.0, 0.0, GRAVITY + amp * (TAU * phase).sin()],
                heading: steps[k].psi,
            }
        })
        .collect()
}

/// Everything one simulated run produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: GroundTruth,
    pub steps: Vec<StepIncrement>,
    pub gnss: Vec<AbsoluteFix>,
    pub uwb: Vec<RangeSet>,
    pub anchors: Vec<Anchor>,
    pub map: FeasibilityMap,
    pub imu: Option<Vec<ImuSample>>,
}

pub fn simulate(spec: &ScenarioSpec) -> Result<Simulation, SimError> {
    let map = spec.map()?;
    let truth = generate_truth(spec)?;
    let steps = synth_steps(&truth, spec);
    let gnss = synth_gnss(&truth, spec, &map);
    let uwb = synth_uwb(&truth, spec);
    let imu = spec
        .imu
        .as_ref()
        .map(|imu| synth_imu(&steps, truth.start().unwrap_or(0.0), imu));
    Ok(Simulation {
        truth,
        steps,
        gnss,
        uwb,
        anchors: spec
            .uwb
            .as_ref()
            .map(|u| u.anchors.clone())
            .unwrap_or_default(),
        map,
        imu,
    })
}

/// Shared campus layout: an allowed lab building and two forbidden halls
/// separated by an 80 m long, 4 m wide street.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 4] = ["indoor", "outdoor", "seamless", "drift"];

    fn rect(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> BuildingSpec {
        BuildingSpec {
            id: id.into(),
            ring: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    fn campus() -> (Vec<BuildingSpec>, Vec<String>) {
        (
            vec![
                rect("lab", 0.0, 40.0, 20.0, 60.0),
                rect("hall_a", 30.0, 4.0, 110.0, 24.0),
                rect("hall_b", 30.0, -24.0, 110.0, 0.0),
            ],
            vec!["lab".into()],
        )
    }

    fn lab_uwb() -> UwbSpec {
        UwbSpec {
            anchors: vec![
                Anchor::new("A1", 1.0, 41.0, 0.0),
                Anchor::new("A2", 19.0, 41.0, 0.0),
                Anchor::new("A3", 19.0, 59.0, 0.0),
                Anchor::new("A4", 1.0, 59.0, 0.0),
            ],
            rate: 2.0,
            sigma: 0.15,
            nlos_bias: 0.5,
            nlos_prob: 0.1,
            coverage: vec![[0.0, 40.0], [20.0, 40.0], [20.0, 60.0], [0.0, 60.0]],
            max_range: None,
        }
    }

    fn gnss(prob: f64) -> GnssSpec {
        GnssSpec {
            rate: 1.0,
            sigma: 1.5,
            outages: Vec::new(),
            multipath: MultipathSpec {
                facade_distance: 5.0,
                bias: 5.0,
                prob,
                persistence: 0.8,
            },
        }
    }

    fn pdr() -> PdrNoiseSpec {
        PdrNoiseSpec {
            k_error: 0.03,
            heading_bias: 0.02,
            heading_noise: 0.02,
            heading_walk: 0.002,
        }
    }

    /// Three laps of a 12 m square inside the lab.
    pub fn indoor() -> ScenarioSpec {
        let (buildings, allowed) = campus();
        ScenarioSpec {
            name: "indoor".into(),
            waypoints: vec![
                [4.0, 44.0],
                [16.0, 44.0],
                [16.0, 56.0],
                [4.0, 56.0],
                [4.0, 44.0],
            ],
            laps: 3,
            buildings,
            allowed,
            gnss: Some(gnss(0.3)),
            uwb: Some(lab_uwb()),
            pdr: pdr(),
            ..ScenarioSpec::default()
        }
    }

    /// Loop whose south leg runs down the street between the two halls,
    /// where multipath pushes fixes into the opposite hall.
    pub fn outdoor() -> ScenarioSpec {
        let (buildings, allowed) = campus();
        ScenarioSpec {
            name: "outdoor".into(),
            waypoints: vec![
                [20.0, 2.0],
                [120.0, 2.0],
                [120.0, 30.0],
                [20.0, 30.0],
                [20.0, 2.0],
            ],
            laps: 1,
            buildings,
            allowed,
            gnss: Some(gnss(0.3)),
            pdr: pdr(),
            ..ScenarioSpec::default()
        }
    }

    /// 44 m outdoor approach through the lab door, then two indoor laps:
    /// 140 m, i.e. 200 steps of 0.7 m.
    pub fn seamless() -> ScenarioSpec {
        let (buildings, allowed) = campus();
        let lap = [
            [16.0, 44.0],
            [16.0, 56.0],
            [4.0, 56.0],
            [4.0, 44.0],
            [10.0, 44.0],
        ];
        let mut waypoints = vec![[10.0, 0.0], [10.0, 44.0]];
        waypoints.extend(lap);
        waypoints.extend(lap);
        ScenarioSpec {
            name: "seamless".into(),
            waypoints,
            laps: 1,
            buildings,
            allowed,
            gnss: Some(gnss(0.1)),
            uwb: Some(lab_uwb()),
            pdr: pdr(),
            ..ScenarioSpec::default()
        }
    }

    /// 400 m open walk with GNSS for drift comparisons.
    pub fn drift() -> ScenarioSpec {
        ScenarioSpec {
            name: "drift".into(),
            waypoints: vec![
                [100.0, -200.0],
                [100.0, -50.0],
                [200.0, -50.0],
                [200.0, 100.0],
            ],
            laps: 1,
            gnss: Some(GnssSpec {
                multipath: MultipathSpec::default(),
                ..gnss(0.0)
            }),
            pdr: PdrNoiseSpec {
                k_error: 0.02,
                heading_bias: 0.01,
                heading_noise: 0.0,
                heading_walk: 0.003,
            },
            ..ScenarioSpec::default()
        }
    }

    pub fn by_name(name: &str) -> Option<ScenarioSpec> {
        match name {
            "indoor" => Some(indoor()),
            "outdoor" => Some(outdoor()),
            "seamless" => Some(seamless()),
            "drift" => Some(drift()),
            _ => None,
        }
    }
}
