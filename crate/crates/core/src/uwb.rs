//! UWB trilateration: range sets to surveyed anchors become absolute fixes.

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::EnuPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UwbError {
    #[error("degenerate anchor geometry: {0}")]
    Geometry(String),
    #[error("solver did not converge after {0} iterations")]
    Solver(usize),
    #[error("residual RMS {rms:.3} m exceeds gate {gate:.3} m")]
    Outlier { rms: f64, gate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub pos: EnuPoint,
}

impl Anchor {
    pub fn new(id: impl Into<String>, e: f64, n: f64, u: f64) -> Self {
        Self {
            id: id.into(),
            pos: EnuPoint::new(e, n, u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub anchor_id: String,
    pub range: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSet {
    pub t: f64,
    pub ranges: Vec<Range>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FixSource {
    Gnss,
    Uwb,
}

/// Absolute ENU position with per-axis standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteFix {
    pub t: f64,
    pub pos: EnuPoint,
    /// (east, north, up) standard deviation, meters.
    pub sigma: [f64; 3],
    pub source: FixSource,
}

impl AbsoluteFix {
    pub fn new(t: f64, pos: EnuPoint, sigma: [f64; 3], source: FixSource) -> Self {
        Self {
            t,
            pos,
            sigma,
            source,
        }
    }

    /// Per-axis sigma, substituting `fallback` for missing or non-positive entries.
    pub fn sigma_or(&self, fallback: f64) -> [f64; 3] {
        self.sigma.map(|s| {
            if s > 0.0 && s.is_finite() {
                s
            } else {
                fallback
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrilaterationConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    /// Largest accepted RMS of the range residuals (m).
    pub residual_gate: f64,
    /// Largest accepted condition number of the anchor geometry.
    pub max_condition: f64,
    /// Standard deviation reported for the fixed (unsolved) height.
    pub vertical_sigma: f64,
}

impl Default for TrilaterationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-8,
            residual_gate: 1.0,
            max_condition: 1e8,
            vertical_sigma: 1.0,
        }
    }
}

/// Drops non-positive ranges and ranges beyond `max_range`.
pub fn select_ranges(rs: &RangeSet, max_range: f64) -> RangeSet {
    RangeSet {
        t: rs.t,
        ranges: rs
            .ranges
            .iter()
            .filter(|r| r.range > 0.0 && r.range <= max_range)
            .cloned()
            .collect(),
    }
}

fn condition_2x2(m: &Matrix2<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

struct Problem {
    anchors: Vec<(f64, f64, f64)>,
    ranges: Vec<f64>,
    weights: Vec<f64>,
    height: f64,
}

impl Problem {
    fn residuals(&self, p: &Vector2<f64>) -> impl Iterator<Item = (f64, f64, Vector2<f64>)> + '_ {
        let p = *p;
        self.anchors
            .iter()
            .zip(&self.ranges)
            .zip(&self.weights)
            .map(move |((a, r), w)| {
                let d = Vector2::new(p.x - a.0, p.y - a.1);
                let dz = self.height - a.2;
                let dist = (d.norm_squared() + dz * dz).sqrt();
                let grad = if dist > 1e-12 {
                    d / dist
                } else {
                    Vector2::zeros()
                };
                ((dist - r) * w, dist - r, grad * *w)
            })
    }

    fn cost(&self, p: &Vector2<f64>) -> f64 {
        self.residuals(p).map(|(rw, _, _)| rw * rw).sum()
    }

    /// Gauss-Newton with Levenberg damping on cost increase. Returns the
    /// converged point and its cost.
    fn solve(
        &self,
        start: Vector2<f64>,
        cfg: &TrilaterationConfig,
    ) -> Result<(Vector2<f64>, f64), UwbError> {
        let mut p = start;
        let mut cost = self.cost(&p);
        let mut lambda = 0.0;
        for _ in 0..cfg.max_iterations {
            let (h, g) = self.normal_equations(&p);
            let damped = h + Matrix2::from_diagonal(&h.diagonal()) * lambda;
            let Some(step) = damped.try_inverse().map(|inv| -(inv * g)) else {
                lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
                continue;
            };
            if step.norm() < cfg.step_tolerance {
                p += step;
                return Ok((p, self.cost(&p)));
            }
            let candidate = p + step;
            let new_cost = self.cost(&candidate);
            if new_cost <= cost {
                p = candidate;
                cost = new_cost;
                lambda = if lambda < 1e-9 { 0.0 } else { lambda / 10.0 };
            } else {
                lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            }
        }
        Err(UwbError::Solver(cfg.max_iterations))
    }

    /// Closed-form solution of the range equations differenced against their
    /// mean, which removes the quadratic term in the unknown position.
    fn linearized(&self) -> Option<Vector2<f64>> {
        let m = self.anchors.len() as f64;
        let rows: Vec<(Vector2<f64>, f64)> = self
            .anchors
            .iter()
            .zip(&self.ranges)
            .map(|(a, r)| {
                let dz = self.height - a.2;
                let rh2 = r * r - dz * dz;
                (Vector2::new(a.0, a.1), a.0 * a.0 + a.1 * a.1 - rh2)
            })
            .collect();
        let mean_a = rows.iter().fold(Vector2::zeros(), |acc, r| acc + r.0) / m;
        let mean_b = rows.iter().map(|r| r.1).sum::<f64>() / m;
        let mut ata = Matrix2::zeros();
        let mut atb = Vector2::zeros();
        for (a, b) in &rows {
            let row = (a - mean_a) * 2.0;
            ata += row * row.transpose();
            atb += row * (b - mean_b);
        }
        ata.try_inverse().map(|inv| inv * atb)
    }

    fn normal_equations(&self, p: &Vector2<f64>) -> (Matrix2<f64>, Vector2<f64>) {
        let mut h = Matrix2::zeros();
        let mut g = Vector2::zeros();
        for (rw, _, j) in self.residuals(p) {
            h += j * j.transpose();
            g += j * rw;
        }
        (h, g)
    }
}

/// Weighted nonlinear least-squares position from ranges to surveyed anchors.
///
/// Solves for east/north at a fixed height (the mean anchor height) with
/// Gauss-Newton, falling back to Levenberg damping when a step increases the
/// cost. Ranges are processed in anchor-id order so the result does not depend
/// on the order of the input lists.
pub fn trilaterate(
    anchors: &[Anchor],
    rs: &RangeSet,
    guess: Option<EnuPoint>,
    cfg: &TrilaterationConfig,
) -> Result<AbsoluteFix, UwbError> {
    let by_id: HashMap<&str, &Anchor> = anchors.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut usable: Vec<(&Anchor, f64, f64)> = rs
        .ranges
        .iter()
        .filter_map(|r| {
            let a = by_id.get(r.anchor_id.as_str())?;
            (r.range.is_finite() && r.range >= 0.0 && r.sigma > 0.0)
                .then_some((*a, r.range, r.sigma))
        })
        .collect();
    usable.sort_by(|x, y| x.0.id.cmp(&y.0.id));
    usable.dedup_by(|x, y| x.0.id == y.0.id);
    if usable.len() < 3 {
        return Err(UwbError::Geometry(format!(
            "{} usable anchors, need at least 3",
            usable.len()
        )));
    }

    let m = usable.len() as f64;
    let height = usable.iter().map(|u| u.0.pos.u).sum::<f64>() / m;
    let centroid = Vector2::new(
        usable.iter().map(|u| u.0.pos.e).sum::<f64>() / m,
        usable.iter().map(|u| u.0.pos.n).sum::<f64>() / m,
    );
    let mut scatter = Matrix2::zeros();
    for (a, _, _) in &usable {
        let d = Vector2::new(a.pos.e, a.pos.n) - centroid;
        scatter += d * d.transpose();
    }
    let cond = condition_2x2(&scatter);
    if cond > cfg.max_condition {
        return Err(UwbError::Geometry(format!(
            "anchor layout condition number {cond:.3e}"
        )));
    }

    let problem = Problem {
        anchors: usable
            .iter()
            .map(|u| (u.0.pos.e, u.0.pos.n, u.0.pos.u))
            .collect(),
        ranges: usable.iter().map(|u| u.1).collect(),
        weights: usable.iter().map(|u| 1.0 / u.2).collect(),
        height,
    };

    // Local minima exist when the tag is outside the anchor hull, so the
    // solve is also started from the linearized closed-form solution and the
    // lower-cost result wins.
    let start = guess.map_or(centroid, |g| Vector2::new(g.e, g.n));
    let mut best = problem.solve(start, cfg);
    if let Some(linear) = problem.linearized() {
        let alt = problem.solve(linear, cfg);
        best = match (best, alt) {
            (Ok(a), Ok(b)) => Ok(if b.1 < a.1 { b } else { a }),
            (Err(_), Ok(b)) => Ok(b),
            (a, Err(_)) => a,
        };
    }
    let (p, _) = best?;

    let (h, _) = problem.normal_equations(&p);
    let cond = condition_2x2(&h);
    if cond > cfg.max_condition {
        return Err(UwbError::Geometry(format!(
            "normal matrix condition number {cond:.3e} at solution"
        )));
    }
    let (chi2, sq): (f64, f64) = problem
        .residuals(&p)
        .fold((0.0, 0.0), |(c, s), (rw, r, _)| (c + rw * rw, s + r * r));
    let rms = (sq / m).sqrt();
    if rms > cfg.residual_gate {
        return Err(UwbError::Outlier {
            rms,
            gate: cfg.residual_gate,
        });
    }
    // Residual variance scaling, never below the formal covariance.
    let variance_factor = if usable.len() > 2 {
        (chi2 / (m - 2.0)).max(1.0)
    } else {
        1.0
    };
    let cov = h
        .try_inverse()
        .ok_or_else(|| UwbError::Geometry("singular normal matrix".into()))?
        * variance_factor;
    Ok(AbsoluteFix {
        t: rs.t,
        pos: EnuPoint::new(p.x, p.y, height),
        sigma: [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt(), cfg.vertical_sigma],
        source: FixSource::Uwb,
    })
}
