//! Output record and driver trait shared by the three back-ends.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geo::{EnuPoint, Heading};
use crate::pdr::StepIncrement;
use crate::uwb::AbsoluteFix;
use crate::Error;

/// Fused pose emitted by every back-end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutput {
    pub t: f64,
    pub pos: EnuPoint,
    pub yaw: Heading,
    /// Position covariance (m²).
    pub cov: Matrix3<f64>,
}

/// JSONL layout: `t, e, n, u, yaw, cov` with the covariance upper triangle
/// in row-major order `[ee, en, eu, nn, nu, uu]`.
#[derive(Serialize, Deserialize)]
struct OutputRecord {
    t: f64,
    e: f64,
    n: f64,
    u: f64,
    yaw: f64,
    cov: [f64; 6],
}

impl Serialize for EstimatorOutput {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let c = &self.cov;
        OutputRecord {
            t: self.t,
            e: self.pos.e,
            n: self.pos.n,
            u: self.pos.u,
            yaw: self.yaw.rad(),
            cov: [
                c[(0, 0)],
                c[(0, 1)],
                c[(0, 2)],
                c[(1, 1)],
                c[(1, 2)],
                c[(2, 2)],
            ],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EstimatorOutput {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = OutputRecord::deserialize(d)?;
        let [ee, en, eu, nn, nu, uu] = r.cov;
        Ok(Self {
            t: r.t,
            pos: EnuPoint::new(r.e, r.n, r.u),
            yaw: Heading::new(r.yaw),
            cov: Matrix3::new(ee, en, eu, en, nn, nu, eu, nu, uu),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Fgo,
    Pf,
    Eskf,
}

impl BackendKind {
    pub const ALL: [BackendKind; 3] = [BackendKind::Eskf, BackendKind::Fgo, BackendKind::Pf];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Eskf => "eskf",
            BackendKind::Fgo => "fgo",
            BackendKind::Pf => "pf",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Eskf => "ESKF",
            BackendKind::Fgo => "FGO",
            BackendKind::Pf => "Particle filter",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eskf" => Ok(BackendKind::Eskf),
            "fgo" => Ok(BackendKind::Fgo),
            "pf" | "particle" => Ok(BackendKind::Pf),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Event-driven interface the replay loop uses to drive a back-end.
pub trait Estimator: Send {
    fn kind(&self) -> BackendKind;

    /// Consumes a confirmed step. Ignored until the estimator is initialized.
    fn on_step(&mut self, inc: &StepIncrement) -> Result<(), Error>;

    /// Consumes an absolute fix; the first usable fix initializes.
    fn on_fix(&mut self, fix: &AbsoluteFix) -> Result<(), Error>;

    /// Current estimate stamped `t`, or `None` before initialization.
    fn output(&mut self, t: f64) -> Result<Option<EstimatorOutput>, Error>;

    /// Number of absolute fixes rejected by gating so far.
    fn rejected_fixes(&self) -> usize;
}
