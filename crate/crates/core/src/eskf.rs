//! PDR-driven error-state Kalman filter.
//!
//! The nominal state is advanced by PDR displacements instead of integrated
//! accelerations, so the error-state transition is the identity and process
//! noise grows with distance walked. Absolute fixes are position observations
//! `H = [I₃ 0 0]`; the estimated error is injected into the nominal state and
//! the covariance is updated in Joseph form.

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{BackendKind, Estimator, EstimatorOutput};
use crate::geo::{EnuPoint, Heading};
use crate::map::{FeasibilityMap, GateDecision, GatePolicy, Verdict};
use crate::pdr::StepIncrement;
use crate::uwb::{AbsoluteFix, FixSource};

pub type Matrix9 = SMatrix<f64, 9, 9>;
type Matrix3x9 = SMatrix<f64, 3, 9>;
type Matrix9x3 = SMatrix<f64, 9, 3>;
type Vector9 = SVector<f64, 9>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EskfError {
    #[error("filter not initialized")]
    NotInitialized,
    #[error("innovation covariance is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EskfConfig {
    /// Horizontal position random walk per meter walked (m/√m).
    pub sigma_step_xy: f64,
    /// Heading noise per step (rad).
    pub sigma_theta: f64,
    /// Velocity random walk (m/s per √s).
    pub sigma_v: f64,
    /// Innovation chi-square gate (3 dof).
    pub gate_chi2: f64,
    pub sigma_gnss: f64,
    pub sigma_uwb: f64,
    pub prior_velocity_var: f64,
    pub prior_attitude_var: f64,
    pub policy: GatePolicy,
}

impl Default for EskfConfig {
    fn default() -> Self {
        Self {
            sigma_step_xy: 0.15,
            sigma_theta: 0.02,
            sigma_v: 0.1,
            gate_chi2: 13.8,
            sigma_gnss: 1.5,
            sigma_uwb: 0.15,
            prior_velocity_var: 1.0,
            prior_attitude_var: 0.1,
            policy: GatePolicy::ProjectToBoundary,
        }
    }
}

/// Heading as a rotation about the down axis, so that yaw equals heading.
pub fn heading_quaternion(psi: Heading) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&-Vector3::z_axis(), psi.rad())
}

pub fn quaternion_heading(q: &UnitQuaternion<f64>) -> Heading {
    Heading::new(-q.euler_angles().2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EskfState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    /// Covariance over the error state `[δp, δv, δθ]`.
    pub cov: Matrix9,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Applied {
        gate: GateDecision,
        chi2: f64,
    },
    /// Map gate rejected the fix.
    Rejected(GateDecision),
    /// Innovation failed the chi-square test.
    Outlier {
        gate: GateDecision,
        chi2: f64,
    },
}

impl UpdateOutcome {
    pub fn applied(&self) -> bool {
        matches!(self, UpdateOutcome::Applied { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Eskf {
    cfg: EskfConfig,
    map: FeasibilityMap,
    state: Option<EskfState>,
    rejected: usize,
}

fn symmetrize(m: &mut Matrix9) {
    *m = (*m + m.transpose()) * 0.5;
}

impl Eskf {
    pub fn new(cfg: EskfConfig, map: FeasibilityMap) -> Self {
        Self {
            cfg,
            map,
            state: None,
            rejected: 0,
        }
    }

    pub fn config(&self) -> &EskfConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&EskfState> {
        self.state.as_ref()
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    fn fix_sigma(&self, fix: &AbsoluteFix) -> [f64; 3] {
        fix.sigma_or(match fix.source {
            FixSource::Gnss => self.cfg.sigma_gnss,
            FixSource::Uwb => self.cfg.sigma_uwb,
        })
    }

    /// (Re)initializes at `fix`. Replaces any existing state.
    pub fn init(&mut self, fix: &AbsoluteFix) {
        let s = self.fix_sigma(fix);
        let mut cov = Matrix9::zeros();
        for i in 0..3 {
            cov[(i, i)] = s[i] * s[i];
            cov[(3 + i, 3 + i)] = self.cfg.prior_velocity_var;
            cov[(6 + i, 6 + i)] = self.cfg.prior_attitude_var;
        }
        self.state = Some(EskfState {
            p: fix.pos.to_vector(),
            v: Vector3::zeros(),
            q: UnitQuaternion::identity(),
            cov,
            t: fix.t,
        });
    }

    /// Advances the nominal position by the step displacement and adopts the
    /// PDR attitude. `F = I₉`; noise enters as `L Q Lᵀ`.
    pub fn predict(
        &mut self,
        inc: &StepIncrement,
        q_pdr: UnitQuaternion<f64>,
    ) -> Result<(), EskfError> {
        let cfg = self.cfg;
        let s = self.state.as_mut().ok_or(EskfError::NotInitialized)?;
        let dp = Vector3::new(inc.delta_p[0], inc.delta_p[1], inc.delta_z);
        let dt = (inc.t - s.t).max(0.0);
        s.p += dp;
        s.q = q_pdr;
        s.t = s.t.max(inc.t);

        let dist = dp.xy().norm();
        let mut lql = SVector::<f64, 9>::zeros();
        lql[0] = cfg.sigma_step_xy.powi(2) * dist;
        lql[1] = cfg.sigma_step_xy.powi(2) * dist;
        for i in 3..6 {
            lql[i] = cfg.sigma_v.powi(2) * dt;
        }
        lql[8] = cfg.sigma_theta.powi(2);
        s.cov += Matrix9::from_diagonal(&lql);
        symmetrize(&mut s.cov);
        Ok(())
    }

    /// Map-gated, chi-square-gated position update.
    pub fn update(&mut self, fix: &AbsoluteFix) -> Result<UpdateOutcome, EskfError> {
        if self.state.is_none() {
            return Err(EskfError::NotInitialized);
        }
        let gate = self.map.gate_fix(fix, self.cfg.policy);
        if gate.verdict == Verdict::Reject {
            self.rejected += 1;
            return Ok(UpdateOutcome::Rejected(gate));
        }
        let sigma = self.fix_sigma(fix);
        let r = Matrix3::from_diagonal(&Vector3::from(sigma.map(|x| x * x)));
        let s = self.state.as_mut().expect("checked above");

        let mut h = Matrix3x9::zeros();
        h.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&Matrix3::identity());
        let innovation = gate.adjusted.to_vector() - s.p;
        let s_cov = h * s.cov * h.transpose() + r;
        let s_inv = s_cov.try_inverse().ok_or(EskfError::Singular)?;
        let chi2 = (innovation.transpose() * s_inv * innovation)[(0, 0)];
        if chi2 > self.cfg.gate_chi2 {
            self.rejected += 1;
            return Ok(UpdateOutcome::Outlier { gate, chi2 });
        }
        let k: Matrix9x3 = s.cov * h.transpose() * s_inv;
        let dx: Vector9 = k * innovation;

        s.p += dx.fixed_rows::<3>(0);
        s.v += dx.fixed_rows::<3>(3);
        let dtheta: Vector3<f64> = dx.fixed_rows::<3>(6).into_owned();
        s.q = UnitQuaternion::from_scaled_axis(dtheta) * s.q;

        let ikh = Matrix9::identity() - k * h;
        s.cov = ikh * s.cov * ikh.transpose() + k * r * k.transpose();
        symmetrize(&mut s.cov);
        s.t = s.t.max(fix.t);
        Ok(UpdateOutcome::Applied { gate, chi2 })
    }

    pub fn estimate(&self) -> Result<EstimatorOutput, EskfError> {
        let s = self.state.as_ref().ok_or(EskfError::NotInitialized)?;
        Ok(EstimatorOutput {
            t: s.t,
            pos: EnuPoint::from_vector(&s.p),
            yaw: quaternion_heading(&s.q),
            cov: s.cov.fixed_view::<3, 3>(0, 0).into_owned(),
        })
    }
}

impl Estimator for Eskf {
    fn kind(&self) -> BackendKind {
        BackendKind::Eskf
    }

    fn on_step(&mut self, inc: &StepIncrement) -> Result<(), crate::Error> {
        if self.is_initialized() {
            self.predict(inc, heading_quaternion(inc.psi))?;
        }
        Ok(())
    }

    fn on_fix(&mut self, fix: &AbsoluteFix) -> Result<(), crate::Error> {
        if self.is_initialized() {
            self.update(fix)?;
            return Ok(());
        }
        // Every back-end starts from the first feasible fix.
        if self.map.is_feasible(&fix.pos) {
            self.init(fix);
        } else {
            self.rejected += 1;
        }
        Ok(())
    }

    fn output(&mut self, t: f64) -> Result<Option<EstimatorOutput>, crate::Error> {
        Ok(self.state.is_some().then(|| {
            let mut out = self.estimate().expect("initialized");
            out.t = t;
            out
        }))
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
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fix(e: f64, n: f64, sigma: f64) -> AbsoluteFix {
        AbsoluteFix::new(0.0, EnuPoint::horizontal(e, n), [sigma; 3], FixSource::Gnss)
    }

    fn step(t: f64, de: f64, dn: f64) -> StepIncrement {
        let len = de.hypot(dn);
        let psi = Heading::new(de.atan2(dn));
        StepIncrement::from_length(t, len, psi, psi)
    }

    fn pos_trace(f: &Eskf) -> f64 {
        f.state().unwrap().cov.fixed_view::<3, 3>(0, 0).trace()
    }

    fn min_eigen(m: &Matrix9) -> f64 {
        m.symmetric_eigenvalues().min()
    }

    #[test]
    fn init_examples() {
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(0.0, 0.0, 0.1));
        let s = f.state().unwrap();
        assert_eq!(s.p, Vector3::zeros());
        for i in 0..3 {
            assert!((s.cov[(i, i)] - 0.01).abs() < 1e-15);
            assert_eq!(s.cov[(3 + i, 3 + i)], 1.0);
            assert_eq!(s.cov[(6 + i, 6 + i)], 0.1);
        }
        f.init(&fix(5.0, 3.0, 0.1));
        assert_eq!(f.state().unwrap().p, Vector3::new(5.0, 3.0, 0.0));
        let out = f.estimate().unwrap();
        assert_eq!(out.yaw.rad(), 0.0);
        assert_eq!(
            out.cov,
            f.state().unwrap().cov.fixed_view::<3, 3>(0, 0).into_owned()
        );
    }

    #[test]
    fn requires_init() {
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        assert_eq!(
            f.predict(&step(1.0, 1.0, 0.0), UnitQuaternion::identity()),
            Err(EskfError::NotInitialized)
        );
        assert_eq!(
            f.update(&fix(0.0, 0.0, 1.0)),
            Err(EskfError::NotInitialized)
        );
        assert_eq!(f.estimate(), Err(EskfError::NotInitialized));
    }

    #[test]
    fn predict_examples() {
        let cfg = EskfConfig::default();
        let mut f = Eskf::new(cfg, FeasibilityMap::empty());
        f.init(&fix(0.0, 0.0, 0.1));
        let before = f.state().unwrap().cov.trace();
        f.predict(&step(0.5, 0.0, 0.0), UnitQuaternion::identity())
            .unwrap();
        let s = f.state().unwrap();
        assert_eq!(s.p, Vector3::zeros());
        let expected = cfg.sigma_theta.powi(2) + 3.0 * cfg.sigma_v.powi(2) * 0.5;
        assert!((s.cov.trace() - before - expected).abs() < 1e-12);

        f.predict(&step(1.0, 1.0, 0.0), UnitQuaternion::identity())
            .unwrap();
        assert!((f.state().unwrap().p - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);

        let mut last = pos_trace(&f);
        for k in 0..100 {
            f.predict(
                &step(2.0 + k as f64 * 0.5, 0.7, 0.0),
                UnitQuaternion::identity(),
            )
            .unwrap();
            let tr = pos_trace(&f);
            assert!(tr > last);
            last = tr;
        }
    }

    #[test]
    fn adopts_pdr_attitude() {
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(0.0, 0.0, 0.1));
        let psi = Heading::new(1.2);
        f.predict(&step(0.5, 0.5, 0.1), heading_quaternion(psi))
            .unwrap();
        assert!((f.estimate().unwrap().yaw.rad() - 1.2).abs() < 1e-12);
        assert!((f.state().unwrap().q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn update_examples() {
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(2.0, 1.0, 1.0));
        let before = f.state().unwrap().cov.trace();
        let out = f.update(&fix(2.0, 1.0, 1.0)).unwrap();
        assert!(out.applied());
        assert_eq!(f.state().unwrap().p, Vector3::new(2.0, 1.0, 0.0));
        assert!(f.state().unwrap().cov.trace() < before);

        // prior variance 1, measurement variance 1: gain 1/2
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(0.0, 0.0, 1.0));
        f.update(&fix(1.0, 0.0, 1.0)).unwrap();
        assert!((f.state().unwrap().p.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infinite_measurement_noise_is_a_no_op() {
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(1.0, 1.0, 0.5));
        f.predict(&step(0.5, 0.7, 0.0), UnitQuaternion::identity())
            .unwrap();
        let before = f.state().unwrap().clone();
        f.update(&fix(3.0, 4.0, 1e12)).unwrap();
        let after = f.state().unwrap();
        assert!((after.p - before.p).norm() < 1e-9);
        assert!((after.v - before.v).norm() < 1e-9);
        assert!((after.cov - before.cov).amax() < 1e-9);
    }

    #[test]
    fn converges_with_exact_measurements() {
        let cfg = EskfConfig {
            sigma_step_xy: 0.0,
            sigma_theta: 0.0,
            sigma_v: 0.0,
            ..EskfConfig::default()
        };
        let mut f = Eskf::new(cfg, FeasibilityMap::empty());
        f.init(&fix(3.0, -4.0, 2.0));
        let initial = 5.0;
        for _ in 0..10 {
            f.update(&fix(0.0, 0.0, 0.5)).unwrap();
        }
        assert!(f.state().unwrap().p.xy().norm() < 0.01 * initial);
    }

    #[test]
    fn chi_square_gate_skips_outliers() {
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(0.0, 0.0, 0.1));
        let out = f.update(&fix(50.0, 0.0, 0.1)).unwrap();
        assert!(matches!(out, UpdateOutcome::Outlier { .. }));
        assert_eq!(f.state().unwrap().p, Vector3::zeros());
        assert_eq!(f.rejected_fixes(), 1);
    }

    #[test]
    fn forbidden_fix_is_applied_at_the_facade() {
        let origin = EnuOrigin::new(GeoPoint::new(60.45, 22.28, 0.0)).unwrap();
        let bldg = BuildingPolygon::from_enu(
            "b",
            vec![[0.0, 2.0], [20.0, 2.0], [20.0, 12.0], [0.0, 12.0]],
            &origin,
        )
        .unwrap();
        let map = FeasibilityMap::new(vec![bldg], Vec::<String>::new()).unwrap();
        let mut f = Eskf::new(EskfConfig::default(), map.clone());
        f.init(&fix(10.0, 0.0, 1.0));
        let out = f.update(&fix(10.0, 3.0, 1.0)).unwrap();
        let UpdateOutcome::Applied { gate, .. } = out else {
            panic!("{out:?}")
        };
        assert_eq!(gate.verdict, Verdict::Project);
        assert!((gate.adjusted.n - (2.0 - 1e-3)).abs() < 1e-9);
        let p = f.state().unwrap().p;
        // gain 1/2 toward the projected point, never past it
        assert!((p.y - (2.0 - 1e-3) / 2.0).abs() < 1e-9);
        assert!(map.is_feasible(&EnuPoint::from_vector(&p)));
    }

    #[test]
    fn covariance_health_under_random_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
        f.init(&fix(0.0, 0.0, 1.0));
        let mut t = 0.0;
        for _ in 0..2_000 {
            t += 0.5;
            let before = pos_trace(&f);
            f.predict(
                &step(t, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                heading_quaternion(Heading::new(rng.random_range(-3.0..3.0))),
            )
            .unwrap();
            assert!(pos_trace(&f) >= before);
            if rng.random_bool(0.5) {
                let p = f.state().unwrap().p;
                let before = pos_trace(&f);
                let out = f
                    .update(&fix(
                        p.x + rng.random_range(-1.0..1.0),
                        p.y + rng.random_range(-1.0..1.0),
                        rng.random_range(0.05..3.0),
                    ))
                    .unwrap();
                if out.applied() {
                    assert!(pos_trace(&f) <= before + 1e-12);
                }
            }
            let cov = &f.state().unwrap().cov;
            assert!((cov - cov.transpose()).amax() < 1e-9);
            assert!(min_eigen(cov) > -1e-9);
        }
    }
}
