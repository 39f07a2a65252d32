//! Step-driven particle filter.
//!
//! Particles move only on confirmed steps, are reweighted by the Mahalanobis
//! likelihood of each absolute fix with infeasible particles scaled down by a
//! near-zero factor, and are resampled systematically when the effective
//! sample size falls below `τN`. The map enters through the likelihood only;
//! fixes are never gated.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{BackendKind, Estimator, EstimatorOutput};
use crate::geo::{EnuPoint, Heading};
use crate::map::FeasibilityMap;
use crate::pdr::StepIncrement;
use crate::uwb::AbsoluteFix;

/// Total weight below which the set is considered collapsed.
pub const WEIGHT_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("particle filter not initialized")]
    NotInitialized,
    #[error("invalid particle filter configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: Heading,
    pub w: f64,
}

impl Particle {
    pub fn position(&self) -> EnuPoint {
        EnuPoint::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    pub n: usize,
    pub sigma_prop_xy: f64,
    pub sigma_prop_psi: f64,
    pub tau: f64,
    pub infeasible_weight_factor: f64,
    /// Per-axis measurement std used when a fix carries no usable sigma.
    pub r_sigma: [f64; 3],
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n: 500,
            sigma_prop_xy: 0.1,
            sigma_prop_psi: 0.05,
            tau: 0.5,
            infeasible_weight_factor: 1e-6,
            r_sigma: [1.5, 1.5, 1.5],
        }
    }
}

impl PfConfig {
    pub fn validate(&self) -> Result<(), PfError> {
        let bad = |m: &str| Err(PfError::Config(m.to_string()));
        if self.n < 10 {
            return bad("particle count must be at least 10");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(0.0..=1e-3).contains(&self.infeasible_weight_factor) {
            return bad("infeasible_weight_factor must lie in [0, 1e-3]");
        }
        if !(self.sigma_prop_xy >= 0.0 && self.sigma_prop_psi >= 0.0) {
            return bad("propagation noise must be non-negative");
        }
        if self.r_sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("r_sigma must be positive");
        }
        Ok(())
    }
}

/// Effective sample size `1 / Σ wᵢ²` of normalized weights.
pub fn effective_sample_size(weights: impl IntoIterator<Item = f64>) -> f64 {
    1.0 / weights.into_iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one offset `u ∈ [0, 1/N)` and an evenly spaced
/// sweep over the cumulative weights. Returns the chosen source indices.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let target = u + i as f64 * step;
        while target >= cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    cfg: PfConfig,
    map: FeasibilityMap,
    rng: ChaCha8Rng,
    particles: Vec<Particle>,
    t: f64,
    resamples: usize,
    underflows: usize,
    rejected: usize,
}

impl ParticleFilter {
    pub fn new(cfg: PfConfig, map: FeasibilityMap, seed: u64) -> Result<Self, PfError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            map,
            rng: ChaCha8Rng::seed_from_u64(seed),
            particles: Vec::new(),
            t: 0.0,
            resamples: 0,
            underflows: 0,
            rejected: 0,
        })
    }

    pub fn config(&self) -> &PfConfig {
        &self.cfg
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn is_initialized(&self) -> bool {
        !self.particles.is_empty()
    }

    pub fn resample_count(&self) -> usize {
        self.resamples
    }

    pub fn underflow_count(&self) -> usize {
        self.underflows
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * sigma
    }

    /// Scatters N particles around the fix with the fix's per-axis sigma and
    /// uniform heading.
    pub fn init(&mut self, fix: &AbsoluteFix) {
        let r = self.cfg.r_sigma;
        let s: [f64; 3] = std::array::from_fn(|i| {
            if fix.sigma[i].is_finite() && fix.sigma[i] >= 0.0 {
                fix.sigma[i]
            } else {
                r[i]
            }
        });
        let w = 1.0 / self.cfg.n as f64;
        self.particles = (0..self.cfg.n)
            .map(|_| {
                let x = fix.pos.e + self.gauss(s[0]);
                let y = fix.pos.n + self.gauss(s[1]);
                let z = fix.pos.u + self.gauss(s[2]);
                let u: f64 = self.rng.random();
                let psi = Heading::new(std::f64::consts::PI - std::f64::consts::TAU * u);
                Particle { x, y, z, psi, w }
            })
            .collect();
        self.t = fix.t;
    }

    pub fn propagate(&mut self, inc: &StepIncrement) -> Result<(), PfError> {
        if !self.is_initialized() {
            return Err(PfError::NotInitialized);
        }
        let (sxy, spsi) = (self.cfg.sigma_prop_xy, self.cfg.sigma_prop_psi);
        let mut particles = std::mem::take(&mut self.particles);
        for p in &mut particles {
            p.x += inc.delta_p[0] + self.gauss(sxy);
            p.y += inc.delta_p[1] + self.gauss(sxy);
            p.z += inc.delta_z;
            p.psi = p.psi.advance(inc.delta_psi.rad() + self.gauss(spsi));
        }
        self.particles = particles;
        self.t = inc.t;
        Ok(())
    }

    /// Multiplies each weight by `exp(-½ d²_M)` and, for particles the map
    /// marks infeasible, by `infeasible_weight_factor`; then normalizes.
    pub fn reweight(&mut self, fix: &AbsoluteFix) -> Result<(), PfError> {
        if !self.is_initialized() {
            return Err(PfError::NotInitialized);
        }
        let s = fix.sigma_or(self.cfg.r_sigma[0]);
        let inv_var = [
            1.0 / (s[0] * s[0]),
            1.0 / (s[1] * s[1]),
            1.0 / (s[2] * s[2]),
        ];
        let mut total = 0.0;
        for p in &mut self.particles {
            let d = [p.x - fix.pos.e, p.y - fix.pos.n, p.z - fix.pos.u];
            let d2: f64 = (0..3).map(|i| d[i] * d[i] * inv_var[i]).sum();
            let mut lik = (-0.5 * d2).exp();
            if !self.map.is_feasible(&p.position()) {
                lik *= self.cfg.infeasible_weight_factor;
            }
            p.w *= lik;
            total += p.w;
        }
        if !(total >= WEIGHT_UNDERFLOW) {
            warn!(
                "particle weights collapsed at t={:.3}; resetting to uniform",
                fix.t
            );
            self.underflows += 1;
            let w = 1.0 / self.particles.len() as f64;
            self.particles.iter_mut().for_each(|p| p.w = w);
        } else {
            self.particles.iter_mut().for_each(|p| p.w /= total);
        }
        self.t = self.t.max(fix.t);
        Ok(())
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(self.particles.iter().map(|p| p.w))
    }

    /// Resamples when ESS < τN. Returns whether a resample happened.
    pub fn resample_if_needed(&mut self) -> bool {
        let n = self.particles.len();
        if n == 0 || self.ess() >= self.cfg.tau * n as f64 {
            return false;
        }
        let weights: Vec<f64> = self.particles.iter().map(|p| p.w).collect();
        let u: f64 = self.rng.random::<f64>() / n as f64;
        let w = 1.0 / n as f64;
        self.particles = systematic_indices(&weights, u)
            .into_iter()
            .map(|i| Particle {
                w,
                ..self.particles[i]
            })
            .collect();
        self.resamples += 1;
        true
    }

    /// Weighted mean position, circular-mean heading and weighted position
    /// covariance.
    pub fn estimate(&self) -> Result<EstimatorOutput, PfError> {
        if !self.is_initialized() {
            return Err(PfError::NotInitialized);
        }
        let mut mean = Vector3::zeros();
        let (mut s, mut c) = (0.0, 0.0);
        for p in &self.particles {
            mean += Vector3::new(p.x, p.y, p.z) * p.w;
            s += p.w * p.psi.rad().sin();
            c += p.w * p.psi.rad().cos();
        }
        let mut cov = Matrix3::zeros();
        for p in &self.particles {
            let d = Vector3::new(p.x, p.y, p.z) - mean;
            cov += d * d.transpose() * p.w;
        }
        Ok(EstimatorOutput {
            t: self.t,
            pos: EnuPoint::from_vector(&mean),
            yaw: Heading::new(s.atan2(c)),
            cov,
        })
    }

    /// One JSON line describing the particle cloud.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "t": self.t, "particles": self.particles })
    }
}

impl Estimator for ParticleFilter {
    fn kind(&self) -> BackendKind {
        BackendKind::Pf
    }

    fn on_step(&mut self, inc: &StepIncrement) -> Result<(), crate::Error> {
        if self.is_initialized() {
            self.propagate(inc)?;
        }
        Ok(())
    }

    fn on_fix(&mut self, fix: &AbsoluteFix) -> Result<(), crate::Error> {
        if self.is_initialized() {
            self.reweight(fix)?;
            self.resample_if_needed();
        } else if self.map.is_feasible(&fix.pos) {
            self.init(fix);
        } else {
            self.rejected += 1;
        }
        Ok(())
    }

    fn output(&mut self, t: f64) -> Result<Option<EstimatorOutput>, crate::Error> {
        if !self.is_initialized() {
            return Ok(None);
        }
        let mut out = self.estimate()?;
        out.t = t;
        Ok(Some(out))
    }

    /// The PF never gates; only initialization can skip a fix.
    fn rejected_fixes(&self) -> usize {
        self.rejected
    }
}
