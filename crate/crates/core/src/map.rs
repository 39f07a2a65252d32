//! Building-footprint feasibility map.
//!
//! Every building interior is forbidden except the whitelisted ones (the
//! UWB-instrumented building). Absolute fixes that land in a forbidden
//! interior are either rejected or projected onto the nearest façade.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{enu_to_geodetic, geodetic_to_enu, EnuOrigin, EnuPoint, GeoError, GeoPoint};
use crate::uwb::AbsoluteFix;

/// Outward offset applied after projecting onto a façade (m).
pub const PROJECTION_NUDGE: f64 = 1e-3;
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("malformed map document: {0}")]
    Malformed(String),
    #[error("polygon {id}: {reason}")]
    InvalidPolygon { id: String, reason: String },
    #[error("allowed building id {0:?} not present in map")]
    UnknownAllowedId(String),
    #[error("point ({0:.3}, {1:.3}) is already feasible")]
    AlreadyFeasible(f64, f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingPolygon {
    pub id: String,
    pub ring: Vec<GeoPoint>,
    ring_enu: Vec<[f64; 2]>,
    min: [f64; 2],
    max: [f64; 2],
    // +1 for counter-clockwise storage, -1 for clockwise.
    orientation: f64,
}

/// Closest point on a polygon boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub point: [f64; 2],
    pub edge: usize,
    pub distance: f64,
    /// Unit normal of `edge` pointing out of the polygon.
    pub outward: [f64; 2],
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    if cross(a, b, p).abs() > BOUNDARY_TOL * len.max(1.0) {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    dot >= -BOUNDARY_TOL && dot <= len * len + BOUNDARY_TOL
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    [a[0] + t * dx, a[1] + t * dy]
}

impl BuildingPolygon {
    pub fn from_geodetic(
        id: impl Into<String>,
        mut ring: Vec<GeoPoint>,
        origin: &EnuOrigin,
    ) -> Result<Self, MapError> {
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        let ring_enu = ring
            .iter()
            .map(|g| geodetic_to_enu(g, origin).map(|p| [p.e, p.n]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::build(id.into(), ring, ring_enu)
    }

    pub fn from_enu(
        id: impl Into<String>,
        mut ring_enu: Vec<[f64; 2]>,
        origin: &EnuOrigin,
    ) -> Result<Self, MapError> {
        if ring_enu.len() > 1 && ring_enu.first() == ring_enu.last() {
            ring_enu.pop();
        }
        let ring = ring_enu
            .iter()
            .map(|v| enu_to_geodetic(&EnuPoint::horizontal(v[0], v[1]), origin))
            .collect();
        Self::build(id.into(), ring, ring_enu)
    }

    fn build(id: String, ring: Vec<GeoPoint>, ring_enu: Vec<[f64; 2]>) -> Result<Self, MapError> {
        let invalid = |reason: &str| MapError::InvalidPolygon {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if ring_enu.len() < 3 {
            return Err(invalid("fewer than 3 vertices"));
        }
        if ring_enu
            .iter()
            .any(|v| !(v[0].is_finite() && v[1].is_finite()))
        {
            return Err(invalid("non-finite vertex"));
        }
        let n = ring_enu.len();
        let area2: f64 = (0..n)
            .map(|i| {
                let (a, b) = (ring_enu[i], ring_enu[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        if area2.abs() < 1e-12 {
            return Err(invalid("zero area"));
        }
        for i in 0..n {
            let (a, b) = (ring_enu[i], ring_enu[(i + 1) % n]);
            if a == b {
                return Err(invalid("repeated vertex"));
            }
            for j in i + 1..n {
                // skip the edge itself and its two neighbours
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (ring_enu[j], ring_enu[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(invalid("self-intersecting ring"));
                }
            }
        }
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for v in &ring_enu {
            for k in 0..2 {
                min[k] = min[k].min(v[k]);
                max[k] = max[k].max(v[k]);
            }
        }
        Ok(Self {
            id,
            ring,
            ring_enu,
            min,
            max,
            orientation: area2.signum(),
        })
    }

    pub fn ring_enu(&self) -> &[[f64; 2]] {
        &self.ring_enu
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.ring_enu.len();
        (0..n).map(move |i| (self.ring_enu[i], self.ring_enu[(i + 1) % n]))
    }

    /// Winding-number containment; boundary points count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let tol = BOUNDARY_TOL;
        if p[0] < self.min[0] - tol
            || p[0] > self.max[0] + tol
            || p[1] < self.min[1] - tol
            || p[1] > self.max[1] + tol
        {
            return false;
        }
        let mut winding = 0i32;
        for (a, b) in self.edges() {
            if on_segment(p, a, b) {
                return true;
            }
            if a[1] <= p[1] {
                if b[1] > p[1] && cross(a, b, p) > 0.0 {
                    winding += 1;
                }
            } else if b[1] <= p[1] && cross(a, b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// Closest boundary point over all edges; ties go to the lowest edge index.
    pub fn closest_boundary_point(&self, p: [f64; 2]) -> BoundaryPoint {
        let mut best: Option<BoundaryPoint> = None;
        for (i, (a, b)) in self.edges().enumerate() {
            let q = closest_on_segment(p, a, b);
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if best.is_none_or(|bp| d < bp.distance) {
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dy);
                let s = self.orientation / len;
                best = Some(BoundaryPoint {
                    point: q,
                    edge: i,
                    distance: d,
                    outward: [dy * s, -dx * s],
                });
            }
        }
        best.expect("polygon has at least three edges")
    }

    fn to_geojson(&self) -> Value {
        let mut coords: Vec<Value> = self.ring.iter().map(|g| json!([g.lon, g.lat])).collect();
        coords.push(coords[0].clone());
        json!({
            "type": "Feature",
            "properties": { "id": self.id },
            "geometry": { "type": "Polygon", "coordinates": [coords] },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Project,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatePolicy {
    RejectOnly,
    ProjectToBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub verdict: Verdict,
    pub adjusted: EnuPoint,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityMap {
    polygons: Vec<BuildingPolygon>,
    allowed_ids: BTreeSet<String>,
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_geojson(doc: &Value, origin: &EnuOrigin) -> Result<Vec<BuildingPolygon>, MapError> {
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| MapError::Malformed("FeatureCollection without features".into()))?;
    let mut out = Vec::new();
    for (k, f) in features.iter().enumerate() {
        let geom = f
            .get("geometry")
            .ok_or_else(|| MapError::Malformed(format!("feature {k} has no geometry")))?;
        if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
            log::debug!("skipping non-polygon feature {k}");
            continue;
        }
        let id = f
            .get("properties")
            .and_then(|p| p.get("id"))
            .and_then(id_string)
            .or_else(|| f.get("id").and_then(id_string))
            .ok_or_else(|| MapError::Malformed(format!("feature {k} has no id")))?;
        let outer = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .and_then(|rings| rings.first())
            .and_then(Value::as_array)
            .ok_or_else(|| MapError::Malformed(format!("feature {id}: missing outer ring")))?;
        let ring = outer
            .iter()
            .map(|c| match c.as_array().map(Vec::as_slice) {
                Some([lon, lat, ..]) => match (lon.as_f64(), lat.as_f64()) {
                    (Some(lon), Some(lat)) => Ok(GeoPoint::new(lat, lon, 0.0)),
                    _ => Err(MapError::Malformed(format!("feature {id}: bad coordinate"))),
                },
                _ => Err(MapError::Malformed(format!("feature {id}: bad coordinate"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(BuildingPolygon::from_geodetic(id, ring, origin)?);
    }
    Ok(out)
}

fn parse_overpass(doc: &Value, origin: &EnuOrigin) -> Result<Vec<BuildingPolygon>, MapError> {
    let elements = doc
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| MapError::Malformed("Overpass export without elements".into()))?;
    let mut out = Vec::new();
    for el in elements {
        if el.get("type").and_then(Value::as_str) != Some("way") {
            continue;
        }
        let id = el
            .get("id")
            .and_then(id_string)
            .ok_or_else(|| MapError::Malformed("way without id".into()))?;
        let geometry = el
            .get("geometry")
            .and_then(Value::as_array)
            .ok_or_else(|| MapError::Malformed(format!("way {id} has no geometry")))?;
        let ring = geometry
            .iter()
            .map(|node| {
                match (
                    node.get("lat").and_then(Value::as_f64),
                    node.get("lon").and_then(Value::as_f64),
                ) {
                    (Some(lat), Some(lon)) => Ok(GeoPoint::new(lat, lon, 0.0)),
                    _ => Err(MapError::Malformed(format!("way {id}: bad node"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(BuildingPolygon::from_geodetic(id, ring, origin)?);
    }
    Ok(out)
}

impl FeasibilityMap {
    /// A map with no buildings: every point is feasible.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new<I, S>(polygons: Vec<BuildingPolygon>, allowed_ids: I) -> Result<Self, MapError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let allowed_ids: BTreeSet<String> = allowed_ids.into_iter().map(Into::into).collect();
        if let Some(missing) = allowed_ids
            .iter()
            .find(|id| !polygons.iter().any(|p| &p.id == *id))
        {
            return Err(MapError::UnknownAllowedId(missing.clone()));
        }
        Ok(Self {
            polygons,
            allowed_ids,
        })
    }

    /// Loads a GeoJSON FeatureCollection or an Overpass JSON export.
    pub fn load<I, S>(doc: &Value, allowed_ids: I, origin: &EnuOrigin) -> Result<Self, MapError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let polygons = if doc.get("elements").is_some() {
            parse_overpass(doc, origin)?
        } else if doc.get("type").and_then(Value::as_str) == Some("FeatureCollection") {
            parse_geojson(doc, origin)?
        } else {
            return Err(MapError::Malformed(
                "expected a GeoJSON FeatureCollection or an Overpass export".into(),
            ));
        };
        Self::new(polygons, allowed_ids)
    }

    pub fn from_json_str<I, S>(
        text: &str,
        allowed_ids: I,
        origin: &EnuOrigin,
    ) -> Result<Self, MapError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| MapError::Malformed(e.to_string()))?;
        Self::load(&doc, allowed_ids, origin)
    }

    pub fn polygons(&self) -> &[BuildingPolygon] {
        &self.polygons
    }

    pub fn allowed_ids(&self) -> &BTreeSet<String> {
        &self.allowed_ids
    }

    pub fn is_allowed(&self, id: &str) -> bool {
        self.allowed_ids.contains(id)
    }

    /// Id of the building containing `p`, boundary inclusive.
    pub fn locate(&self, p: &EnuPoint) -> Option<&str> {
        self.polygons
            .iter()
            .find(|poly| poly.contains([p.e, p.n]))
            .map(|poly| poly.id.as_str())
    }

    fn forbidden_containing(&self, p: [f64; 2]) -> Option<&BuildingPolygon> {
        self.polygons
            .iter()
            .find(|poly| !self.allowed_ids.contains(&poly.id) && poly.contains(p))
    }

    pub fn is_feasible(&self, p: &EnuPoint) -> bool {
        self.forbidden_containing([p.e, p.n]).is_none()
    }

    /// Distance to and location of the nearest façade of any building.
    pub fn nearest_facade(&self, p: &EnuPoint) -> Option<(usize, BoundaryPoint)> {
        self.polygons
            .iter()
            .enumerate()
            .map(|(i, poly)| (i, poly.closest_boundary_point([p.e, p.n])))
            .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance))
    }

    /// Moves an infeasible point to just outside the nearest façade of the
    /// forbidden building containing it.
    pub fn project_to_boundary(&self, p: &EnuPoint) -> Result<EnuPoint, MapError> {
        let mut cur = [p.e, p.n];
        let Some(mut poly) = self.forbidden_containing(cur) else {
            return Err(MapError::AlreadyFeasible(p.e, p.n));
        };
        // Concave corners and shared walls can leave the first candidate inside
        // a forbidden region; re-project from there a few times.
        for _ in 0..8 {
            let bp = poly.closest_boundary_point(cur);
            let q = bp.point;
            let along_normal = [
                q[0] + PROJECTION_NUDGE * bp.outward[0],
                q[1] + PROJECTION_NUDGE * bp.outward[1],
            ];
            let mut candidates = vec![along_normal];
            if bp.distance > 0.0 {
                let s = PROJECTION_NUDGE / bp.distance;
                candidates.push([q[0] + s * (q[0] - cur[0]), q[1] + s * (q[1] - cur[1])]);
            }
            if let Some(c) = candidates
                .iter()
                .find(|c| self.forbidden_containing(**c).is_none())
            {
                return Ok(EnuPoint::new(c[0], c[1], p.u));
            }
            cur = along_normal;
            match self.forbidden_containing(cur) {
                Some(next) => poly = next,
                None => return Ok(EnuPoint::new(cur[0], cur[1], p.u)),
            }
        }
        log::warn!(
            "projection of ({:.3}, {:.3}) did not reach a feasible point",
            p.e,
            p.n
        );
        Ok(EnuPoint::new(cur[0], cur[1], p.u))
    }

    pub fn gate_fix(&self, fix: &AbsoluteFix, policy: GatePolicy) -> GateDecision {
        if self.is_feasible(&fix.pos) {
            return GateDecision {
                verdict: Verdict::Accept,
                adjusted: fix.pos,
            };
        }
        match policy {
            GatePolicy::RejectOnly => GateDecision {
                verdict: Verdict::Reject,
                adjusted: fix.pos,
            },
            GatePolicy::ProjectToBoundary => GateDecision {
                verdict: Verdict::Project,
                adjusted: self
                    .project_to_boundary(&fix.pos)
                    .expect("infeasible point has a containing polygon"),
            },
        }
    }

    pub fn to_geojson(&self) -> Value {
        json!({
            "type": "FeatureCollection",
            "features": self.polygons.iter().map(BuildingPolygon::to_geojson).collect::<Vec<_>>(),
        })
    }
}
