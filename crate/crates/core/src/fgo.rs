//! Sliding-window factor graph over step-indexed poses `[x, y, z, ψ]`.
//!
//! Consecutive nodes are tied by PDR between-factors, absolute fixes become
//! unary position factors on the latest node, and when the window overflows
//! the oldest nodes are dropped and the new oldest node is pinned by a loose
//! weak-anchor factor. The window is solved densely with Gauss-Newton.
//!
//! `between(Tᵢ, Tⱼ)` is the world-frame difference `Tⱼ - Tᵢ` with a wrapped
//! heading component, matching the ENU-resolved PDR increments.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{BackendKind, Estimator, EstimatorOutput};
use crate::geo::{wrap_angle, EnuPoint, Heading};
use crate::map::{FeasibilityMap, GatePolicy, Verdict};
use crate::pdr::StepIncrement;
use crate::uwb::{AbsoluteFix, FixSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FgoError {
    #[error("factor graph not initialized")]
    NotInitialized,
    #[error("normal equations are singular (under-constrained window)")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FgoConfig {
    /// Window size in nodes.
    pub window: usize,
    pub sigma_pdr_xy: f64,
    pub sigma_pdr_z: f64,
    pub sigma_pdr_psi: f64,
    pub sigma_weak_pos: f64,
    pub sigma_weak_psi: f64,
    /// Heading prior on the first node, which starts at ψ = 0.
    pub sigma_prior_psi: f64,
    pub max_iterations: usize,
    pub sigma_gnss: f64,
    pub sigma_uwb: f64,
    pub policy: GatePolicy,
}

impl Default for FgoConfig {
    fn default() -> Self {
        Self {
            window: 50,
            sigma_pdr_xy: 0.15,
            sigma_pdr_z: 0.05,
            sigma_pdr_psi: 0.05,
            sigma_weak_pos: 0.5,
            sigma_weak_psi: 0.3,
            sigma_prior_psi: 1.0,
            max_iterations: 25,
            sigma_gnss: 1.5,
            sigma_uwb: 0.15,
            policy: GatePolicy::RejectOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNode {
    /// `[x, y, z, ψ]`.
    pub pose: [f64; 4],
    pub step_index: u64,
    pub t: f64,
}

impl PoseNode {
    fn vector(&self) -> Vector4<f64> {
        Vector4::from(self.pose)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    Prior,
    Between,
    Position,
    WeakAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    /// Step indices of the nodes this factor touches.
    pub nodes: Vec<u64>,
    pub measurement: Vec<f64>,
    /// Diagonal square-root information (1/σ per component).
    pub sqrt_info: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct FgoWindow {
    cfg: FgoConfig,
    map: FeasibilityMap,
    nodes: VecDeque<PoseNode>,
    factors: Vec<Factor>,
    rejected: usize,
    dirty: bool,
    last_report: Option<OptimizeReport>,
    last_output: Option<EstimatorOutput>,
}

/// Weighted residual of one factor and the node offsets it touches.
/// Jacobians are ±identity on the touched components.
fn factor_residual(f: &Factor, nodes: &[Vector4<f64>], idx: &[usize]) -> Vec<f64> {
    let dim = f.measurement.len();
    (0..dim)
        .map(|c| {
            let raw = match f.kind {
                FactorKind::Between => nodes[idx[1]][c] - nodes[idx[0]][c] - f.measurement[c],
                _ => nodes[idx[0]][c] - f.measurement[c],
            };
            let r = if c == 3 { wrap_angle(raw).rad() } else { raw };
            r * f.sqrt_info[c]
        })
        .collect()
}

impl FgoWindow {
    pub fn new(cfg: FgoConfig, map: FeasibilityMap) -> Self {
        Self {
            cfg,
            map,
            nodes: VecDeque::new(),
            factors: Vec::new(),
            rejected: 0,
            dirty: false,
            last_report: None,
            last_output: None,
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &PoseNode> {
        self.nodes.iter()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn is_initialized(&self) -> bool {
        !self.nodes.is_empty()
    }

    /// Overwrites a node's current value (the next optimization starts
    /// from it). Returns `false` if the node is not in the window.
    pub fn set_node_pose(&mut self, step_index: u64, pose: [f64; 4]) -> bool {
        match self.nodes.iter_mut().find(|n| n.step_index == step_index) {
            Some(n) => {
                n.pose = pose;
                self.dirty = true;
                true
            }
            None => false,
        }
    }

    pub fn last_report(&self) -> Option<OptimizeReport> {
        self.last_report
    }

    pub fn config(&self) -> &FgoConfig {
        &self.cfg
    }

    fn fix_sigma(&self, fix: &AbsoluteFix) -> [f64; 3] {
        fix.sigma_or(match fix.source {
            FixSource::Gnss => self.cfg.sigma_gnss,
            FixSource::Uwb => self.cfg.sigma_uwb,
        })
    }

    /// Starts a window at `fix` with heading 0 and a prior factor.
    pub fn init(&mut self, fix: &AbsoluteFix) {
        let s = self.fix_sigma(fix);
        let node = PoseNode {
            pose: [fix.pos.e, fix.pos.n, fix.pos.u, 0.0],
            step_index: 0,
            t: fix.t,
        };
        self.nodes = VecDeque::from([node]);
        self.factors = vec![Factor {
            kind: FactorKind::Prior,
            nodes: vec![0],
            measurement: node.pose.to_vec(),
            sqrt_info: vec![
                1.0 / s[0],
                1.0 / s[1],
                1.0 / s[2],
                1.0 / self.cfg.sigma_prior_psi,
            ],
        }];
        self.dirty = true;
    }

    /// Adds a node guessed at `T_{k-1} ⊕ Δu` and the between-factor.
    pub fn add_step(&mut self, inc: &StepIncrement) -> Result<(), FgoError> {
        let last = *self.nodes.back().ok_or(FgoError::NotInitialized)?;
        let du = [
            inc.delta_p[0],
            inc.delta_p[1],
            inc.delta_z,
            inc.delta_psi.rad(),
        ];
        let node = PoseNode {
            pose: [
                last.pose[0] + du[0],
                last.pose[1] + du[1],
                last.pose[2] + du[2],
                wrap_angle(last.pose[3] + du[3]).rad(),
            ],
            step_index: last.step_index + 1,
            t: inc.t,
        };
        self.nodes.push_back(node);
        let c = &self.cfg;
        self.factors.push(Factor {
            kind: FactorKind::Between,
            nodes: vec![last.step_index, node.step_index],
            measurement: du.to_vec(),
            sqrt_info: vec![
                1.0 / c.sigma_pdr_xy,
                1.0 / c.sigma_pdr_xy,
                1.0 / c.sigma_pdr_z,
                1.0 / c.sigma_pdr_psi,
            ],
        });
        self.dirty = true;
        Ok(())
    }

    /// Gates the fix and, if accepted, attaches a position factor to the
    /// latest node.
    pub fn add_fix(&mut self, fix: &AbsoluteFix) -> Result<Verdict, FgoError> {
        let last = self
            .nodes
            .back()
            .ok_or(FgoError::NotInitialized)?
            .step_index;
        let gate = self.map.gate_fix(fix, self.cfg.policy);
        if gate.verdict == Verdict::Reject {
            self.rejected += 1;
            return Ok(Verdict::Reject);
        }
        let s = self.fix_sigma(fix);
        self.factors.push(Factor {
            kind: FactorKind::Position,
            nodes: vec![last],
            measurement: vec![gate.adjusted.e, gate.adjusted.n, gate.adjusted.u],
            sqrt_info: s.iter().map(|x| 1.0 / x).collect(),
        });
        self.dirty = true;
        Ok(gate.verdict)
    }

    /// Drops nodes beyond the window with their factors and pins the new
    /// oldest node with a single weak anchor at its current value.
    pub fn prune(&mut self) {
        if self.nodes.len() <= self.cfg.window {
            return;
        }
        let excess = self.nodes.len() - self.cfg.window;
        self.nodes.drain(..excess);
        let oldest = self.nodes[0];
        let first = oldest.step_index;
        self.factors
            .retain(|f| f.kind != FactorKind::WeakAnchor && f.nodes.iter().all(|&n| n >= first));
        self.factors.push(Factor {
            kind: FactorKind::WeakAnchor,
            nodes: vec![first],
            measurement: oldest.pose.to_vec(),
            sqrt_info: vec![
                1.0 / self.cfg.sigma_weak_pos,
                1.0 / self.cfg.sigma_weak_pos,
                1.0 / self.cfg.sigma_weak_pos,
                1.0 / self.cfg.sigma_weak_psi,
            ],
        });
        self.dirty = true;
    }

    fn node_offsets(&self, f: &Factor) -> Vec<usize> {
        let first = self.nodes[0].step_index;
        f.nodes.iter().map(|&n| (n - first) as usize).collect()
    }

    /// Sum of squared weighted residuals at the given node values.
    pub fn cost_at(&self, values: &[Vector4<f64>]) -> f64 {
        self.factors
            .iter()
            .map(|f| {
                factor_residual(f, values, &self.node_offsets(f))
                    .iter()
                    .map(|r| r * r)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn cost(&self) -> f64 {
        let values: Vec<_> = self.nodes.iter().map(PoseNode::vector).collect();
        self.cost_at(&values)
    }

    fn normal_equations(&self, values: &[Vector4<f64>]) -> (DMatrix<f64>, DVector<f64>) {
        let dim = 4 * values.len();
        let mut h = DMatrix::zeros(dim, dim);
        let mut g = DVector::zeros(dim);
        for f in &self.factors {
            let idx = self.node_offsets(f);
            let r = factor_residual(f, values, &idx);
            // (node offset, jacobian sign) pairs
            let touched: Vec<(usize, f64)> = match f.kind {
                FactorKind::Between => vec![(idx[0], -1.0), (idx[1], 1.0)],
                _ => vec![(idx[0], 1.0)],
            };
            for (c, rc) in r.iter().enumerate() {
                let w = f.sqrt_info[c];
                for &(a, sa) in &touched {
                    let ia = 4 * a + c;
                    g[ia] += sa * w * rc;
                    for &(b, sb) in &touched {
                        h[(ia, 4 * b + c)] += sa * sb * w * w;
                    }
                }
            }
        }
        (h, g)
    }

    /// Gauss-Newton over the whole window with a backtracking line search, so
    /// the cost never increases. Returns the latest pose.
    pub fn optimize(&mut self) -> Result<EstimatorOutput, FgoError> {
        if self.nodes.is_empty() {
            return Err(FgoError::NotInitialized);
        }
        let mut values: Vec<Vector4<f64>> = self.nodes.iter().map(PoseNode::vector).collect();
        let mut cost = self.cost_at(&values);
        let initial_cost = cost;
        let mut iterations = 0;
        let mut chol = None;
        while iterations < self.cfg.max_iterations {
            iterations += 1;
            let (h, g) = self.normal_equations(&values);
            let factor = h.cholesky().ok_or(FgoError::Singular)?;
            let step = factor.solve(&(-g));
            chol = Some(factor);
            let step_norm = step.norm();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let trial: Vec<Vector4<f64>> = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let mut n = v + step.fixed_rows::<4>(4 * i) * alpha;
                        n[3] = wrap_angle(n[3]).rad();
                        n
                    })
                    .collect();
                let c = self.cost_at(&trial);
                if c <= cost {
                    accepted = Some((trial, c));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, new_cost)) = accepted else {
                break;
            };
            let decrease = cost - new_cost;
            values = trial;
            cost = new_cost;
            if step_norm * alpha < 1e-8 || decrease < 1e-9 {
                break;
            }
        }
        for (node, v) in self.nodes.iter_mut().zip(&values) {
            node.pose = [v[0], v[1], v[2], wrap_angle(v[3]).rad()];
        }
        self.dirty = false;
        self.last_report = Some(OptimizeReport {
            initial_cost,
            final_cost: cost,
            iterations,
        });

        let last = *self.nodes.back().expect("non-empty");
        let dim = 4 * self.nodes.len();
        let base = dim - 4;
        let cov = match chol {
            Some(c) => {
                let mut e = DMatrix::zeros(dim, 3);
                for k in 0..3 {
                    e[(base + k, k)] = 1.0;
                }
                let x = c.solve(&e);
                Matrix3::from_fn(|i, j| x[(base + i, j)])
            }
            None => Matrix3::zeros(),
        };
        let out = EstimatorOutput {
            t: last.t,
            pos: EnuPoint::new(last.pose[0], last.pose[1], last.pose[2]),
            yaw: Heading::new(last.pose[3]),
            cov,
        };
        self.last_output = Some(out);
        Ok(out)
    }

    /// Graph snapshot for debugging.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "window": self.cfg.window,
            "nodes": self.nodes,
            "factors": self.factors,
        })
    }
}

impl Estimator for FgoWindow {
    fn kind(&self) -> BackendKind {
        BackendKind::Fgo
    }

    fn on_step(&mut self, inc: &StepIncrement) -> Result<(), crate::Error> {
        if self.is_initialized() {
            self.add_step(inc)?;
            self.prune();
        }
        Ok(())
    }

    fn on_fix(&mut self, fix: &AbsoluteFix) -> Result<(), crate::Error> {
        if self.is_initialized() {
            self.add_fix(fix)?;
        } else if self.map.is_feasible(&fix.pos) {
            self.init(fix);
        } else {
            self.rejected += 1;
        }
        Ok(())
    }

    /// Optimizes lazily, once per batch of events sharing a timestamp.
    fn output(&mut self, t: f64) -> Result<Option<EstimatorOutput>, crate::Error> {
        if !self.is_initialized() {
            return Ok(None);
        }
        let mut out = match self.last_output {
            Some(o) if !self.dirty => o,
            _ => self.optimize()?,
        };
        out.t = t;
        Ok(Some(out))
    }

    fn rejected_fixes(&self) -> usize {
        self.rejected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{EnuOrigin, GeoPoint};
    use crate::map::BuildingPolygon;
    use std::f64::consts::PI;

    fn fix(e: f64, n: f64, sigma: f64) -> AbsoluteFix {
        AbsoluteFix::new(0.0, EnuPoint::horizontal(e, n), [sigma; 3], FixSource::Gnss)
    }

    fn inc(t: f64, de: f64, dn: f64, dpsi: f64) -> StepIncrement {
        StepIncrement {
            t,
            delta_p: [de, dn],
            delta_z: 0.0,
            delta_psi: Heading::new(dpsi),
            step_length: de.hypot(dn),
            psi: Heading::NORTH,
        }
    }

    fn window(w: usize) -> FgoWindow {
        FgoWindow::new(
            FgoConfig {
                window: w,
                ..FgoConfig::default()
            },
            FeasibilityMap::empty(),
        )
    }

    #[test]
    fn init_examples() {
        let mut g = window(50);
        g.init(&fix(0.0, 0.0, 0.5));
        assert_eq!(g.nodes().len(), 1);
        assert_eq!(g.factors().len(), 1);
        assert_eq!(g.factors()[0].kind, FactorKind::Prior);
        g.init(&fix(3.0, 4.0, 0.5));
        assert_eq!(g.nodes().next().unwrap().pose, [3.0, 4.0, 0.0, 0.0]);
        let out = g.optimize().unwrap();
        assert_eq!(out.pos, EnuPoint::new(3.0, 4.0, 0.0));
        assert_eq!(g.last_report().unwrap().final_cost, 0.0);
    }

    #[test]
    fn step_guesses() {
        let mut g = window(50);
        assert_eq!(
            g.add_step(&inc(0.5, 1.0, 0.0, 0.0)),
            Err(FgoError::NotInitialized)
        );
        g.init(&fix(0.0, 0.0, 0.5));
        g.add_step(&inc(0.5, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(g.nodes().last().unwrap().pose, [1.0, 0.0, 0.0, 0.0]);
        g.add_step(&inc(1.0, 0.0, 0.0, PI)).unwrap();
        assert!((g.nodes().last().unwrap().pose[3] - PI).abs() < 1e-12);
        g.add_step(&inc(1.5, 0.0, 0.0, PI)).unwrap();
        assert!(g.nodes().last().unwrap().pose[3].abs() < 1e-12);
        assert_eq!(g.nodes().len(), 4);
        let betweens: Vec<_> = g
            .factors()
            .iter()
            .filter(|f| f.kind == FactorKind::Between)
            .collect();
        assert_eq!(betweens.len(), 3);
        for f in betweens {
            assert_eq!(f.nodes[1], f.nodes[0] + 1);
        }
    }

    #[test]
    fn fix_factors_and_gating() {
        let origin = EnuOrigin::new(GeoPoint::new(60.45, 22.28, 0.0)).unwrap();
        let b = BuildingPolygon::from_enu(
            "b",
            vec![[5.0, 5.0], [9.0, 5.0], [9.0, 9.0], [5.0, 9.0]],
            &origin,
        )
        .unwrap();
        let map = FeasibilityMap::new(vec![b], Vec::<String>::new()).unwrap();
        let mut g = FgoWindow::new(FgoConfig::default(), map);
        g.init(&fix(0.0, 0.0, 0.5));
        assert_eq!(g.add_fix(&fix(1.0, 0.0, 0.1)).unwrap(), Verdict::Accept);
        assert_eq!(g.add_fix(&fix(1.0, 0.0, 1.0)).unwrap(), Verdict::Accept);
        let pos: Vec<_> = g
            .factors()
            .iter()
            .filter(|f| f.kind == FactorKind::Position)
            .collect();
        assert_eq!(pos.len(), 2);
        assert!((pos[0].sqrt_info[0] - 10.0).abs() < 1e-12);
        assert!((pos[1].sqrt_info[0] - 1.0).abs() < 1e-12);
        let before = g.factors().len();
        assert_eq!(g.add_fix(&fix(7.0, 7.0, 0.1)).unwrap(), Verdict::Reject);
        assert_eq!(g.factors().len(), before);
        assert_eq!(g.rejected_fixes(), 1);
    }

    #[test]
    fn recovers_exact_chain_from_perturbed_guesses() {
        let truth: Vec<[f64; 4]> = (0..6)
            .map(|k| {
                let k = k as f64;
                [0.7 * k, 0.3 * k * k / 5.0, 0.0, wrap_angle(0.2 * k).rad()]
            })
            .collect();
        let mut g = window(50);
        g.init(&AbsoluteFix::new(
            0.0,
            EnuPoint::ORIGIN,
            [0.1; 3],
            FixSource::Uwb,
        ));
        for k in 1..6 {
            let (a, b) = (truth[k - 1], truth[k]);
            g.add_step(&inc(k as f64 * 0.5, b[0] - a[0], b[1] - a[1], b[3] - a[3]))
                .unwrap();
        }
        // perturb every guess by 0.5 m
        for (i, n) in g.nodes.iter_mut().enumerate() {
            let ang = i as f64 * 1.3;
            n.pose[0] += 0.5 * ang.cos();
            n.pose[1] += 0.5 * ang.sin();
        }
        let before = g.cost();
        g.optimize().unwrap();
        let report = g.last_report().unwrap();
        assert!(report.final_cost <= before);
        assert!(report.final_cost < 1e-12, "cost {}", report.final_cost);
        for (n, t) in g.nodes().zip(&truth) {
            let d = (n.pose[0] - t[0]).hypot(n.pose[1] - t[1]);
            assert!(d < 1e-6, "node {} off by {d}", n.step_index);
            assert!((wrap_angle(n.pose[3] - t[3]).rad()).abs() < 1e-6);
        }
    }

    #[test]
    fn prior_only_returns_to_prior() {
        let mut g = window(50);
        g.init(&fix(2.0, -1.0, 0.3));
        g.nodes[0].pose[0] += 1.0;
        let out = g.optimize().unwrap();
        assert!((out.pos.e - 2.0).abs() < 1e-9 && (out.pos.n + 1.0).abs() < 1e-9);
    }

    #[test]
    fn conflicting_fixes_meet_in_the_middle() {
        let mut g = window(50);
        g.init(&fix(0.0, 0.0, 1e4));
        g.add_fix(&fix(0.0, 0.0, 1.0)).unwrap();
        g.add_fix(&fix(2.0, 0.0, 1.0)).unwrap();
        let out = g.optimize().unwrap();
        assert!((out.pos.e - 1.0).abs() < 1e-6, "{}", out.pos.e);
    }

    #[test]
    fn pruning_keeps_one_weak_anchor() {
        let mut g = window(50);
        g.init(&fix(0.0, 0.0, 0.5));
        for k in 1..=50 {
            g.add_step(&inc(k as f64 * 0.5, 0.7, 0.0, 0.0)).unwrap();
        }
        assert_eq!(g.nodes().len(), 51);
        g.prune();
        assert_eq!(g.nodes().len(), 50);
        let anchors: Vec<_> = g
            .factors()
            .iter()
            .filter(|f| f.kind == FactorKind::WeakAnchor)
            .collect();
        assert_eq!(anchors.len(), 1);
        assert_eq!(anchors[0].nodes, vec![1]);
        assert!(g.factors().iter().all(|f| f.kind != FactorKind::Prior));
        for k in 51..80 {
            g.add_step(&inc(k as f64 * 0.5, 0.7, 0.0, 0.0)).unwrap();
            g.prune();
            g.optimize().unwrap();
            assert!(g.nodes().len() <= 50);
            let first = g.nodes().next().unwrap().step_index;
            let anchors: Vec<_> = g
                .factors()
                .iter()
                .filter(|f| f.kind == FactorKind::WeakAnchor)
                .collect();
            assert_eq!(anchors.len(), 1);
            assert_eq!(anchors[0].nodes, vec![first]);
            assert!(g
                .factors()
                .iter()
                .all(|f| f.nodes.iter().all(|&n| n >= first)));
        }
    }

    #[test]
    fn pruning_barely_moves_a_well_constrained_estimate() {
        // identical measurements into a windowed and an unbounded graph
        let mut small = window(20);
        let mut full = window(usize::MAX);
        for g in [&mut small, &mut full] {
            g.init(&fix(0.0, 0.0, 0.5));
        }
        for k in 1..=60 {
            let step = inc(k as f64 * 0.5, 0.7, 0.05, 0.0);
            let noisy_fix = fix(
                0.7 * k as f64 + 0.3 * (k as f64).sin(),
                0.05 * k as f64,
                1.0,
            );
            for g in [&mut small, &mut full] {
                g.add_step(&step).unwrap();
                if k % 2 == 0 {
                    g.add_fix(&noisy_fix).unwrap();
                }
                g.prune();
            }
            small.optimize().unwrap();
        }
        let a = small.optimize().unwrap();
        let b = full.optimize().unwrap();
        assert!(a.pos.horizontal_distance(&b.pos) < 0.5);
    }

    #[test]
    fn graph_dump_is_json() {
        let mut g = window(50);
        g.init(&fix(0.0, 0.0, 0.5));
        g.add_step(&inc(0.5, 0.7, 0.0, 0.0)).unwrap();
        let v = g.to_json();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 2);
        assert_eq!(v["factors"][1]["kind"], "Between");
    }
}
