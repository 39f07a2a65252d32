//! Coordinate frames and angle arithmetic.
//!
//! Geodetic coordinates are WGS-84 latitude/longitude in degrees with altitude
//! above the ellipsoid. Local coordinates are East-North-Up meters relative to a
//! fixed [`EnuOrigin`]. Conversions go through ECEF so there is no
//! latitude-dependent flat-earth error.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS-84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// WGS-84 geodetic position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Degrees.
    pub lat: f64,
    /// Degrees.
    pub lon: f64,
    /// Meters above the ellipsoid.
    #[serde(default)]
    pub alt: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Self {
        Self { lat, lon, alt }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.lat.is_finite() && self.lon.is_finite() && self.alt.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(GeoError::Latitude(self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeoError::Longitude(self.lon));
        }
        Ok(())
    }

    /// Earth-centred Earth-fixed coordinates (m).
    pub fn to_ecef(&self) -> Vector3<f64> {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        let (slat, clat) = lat.sin_cos();
        let (slon, clon) = lon.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
        Vector3::new(
            (n + self.alt) * clat * clon,
            (n + self.alt) * clat * slon,
            (n * (1.0 - WGS84_E2) + self.alt) * slat,
        )
    }

    /// Inverse of [`GeoPoint::to_ecef`], iterating latitude to machine precision.
    pub fn from_ecef(ecef: &Vector3<f64>) -> Self {
        let (x, y, z) = (ecef.x, ecef.y, ecef.z);
        let lon = y.atan2(x);
        let rho = x.hypot(y);
        let mut lat = z.atan2(rho * (1.0 - WGS84_E2));
        let mut alt = 0.0;
        for _ in 0..10 {
            let slat = lat.sin();
            let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
            alt = if lat.cos().abs() > 1e-10 {
                rho / lat.cos() - n
            } else {
                z.abs() / slat.abs() - n * (1.0 - WGS84_E2)
            };
            let next = z.atan2(rho * (1.0 - WGS84_E2 * n / (n + alt)));
            let done = (next - lat).abs() < 1e-15;
            lat = next;
            if done {
                break;
            }
        }
        Self {
            lat: lat.to_degrees(),
            lon: lon.to_degrees(),
            alt,
        }
    }
}

/// Local East-North-Up position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuPoint {
    pub e: f64,
    pub n: f64,
    #[serde(default)]
    pub u: f64,
}

impl EnuPoint {
    pub const ORIGIN: EnuPoint = EnuPoint {
        e: 0.0,
        n: 0.0,
        u: 0.0,
    };

    pub fn new(e: f64, n: f64, u: f64) -> Self {
        Self { e, n, u }
    }

    pub fn horizontal(e: f64, n: f64) -> Self {
        Self { e, n, u: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.n.is_finite() && self.u.is_finite()
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.e, self.n, self.u)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            e: v.x,
            n: v.y,
            u: v.z,
        }
    }

    pub fn horizontal_distance(&self, other: &EnuPoint) -> f64 {
        (self.e - other.e).hypot(self.n - other.n)
    }

    pub fn distance(&self, other: &EnuPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Anchor of the local ENU frame. Caches the ECEF origin and rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnuOrigin {
    origin: GeoPoint,
    ecef: Vector3<f64>,
    // Rows are the east, north and up unit vectors expressed in ECEF.
    rot: Matrix3<f64>,
}

impl EnuOrigin {
    pub fn new(origin: GeoPoint) -> Result<Self, GeoError> {
        origin.validate()?;
        let (slat, clat) = origin.lat.to_radians().sin_cos();
        let (slon, clon) = origin.lon.to_radians().sin_cos();
        #[rustfmt::skip]
        let rot = Matrix3::new(
            -slon,         clon,        0.0,
            -slat * clon, -slat * slon, clat,
             clat * clon,  clat * slon, slat,
        );
        Ok(Self {
            origin,
            ecef: origin.to_ecef(),
            rot,
        })
    }

    pub fn geo(&self) -> GeoPoint {
        self.origin
    }
}

impl Serialize for EnuOrigin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.origin.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EnuOrigin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let geo = GeoPoint::deserialize(d)?;
        EnuOrigin::new(geo).map_err(serde::de::Error::custom)
    }
}

pub fn geodetic_to_enu(p: &GeoPoint, origin: &EnuOrigin) -> Result<EnuPoint, GeoError> {
    p.validate()?;
    let d = p.to_ecef() - origin.ecef;
    Ok(EnuPoint::from_vector(&(origin.rot * d)))
}

pub fn enu_to_geodetic(p: &EnuPoint, origin: &EnuOrigin) -> GeoPoint {
    let ecef = origin.ecef + origin.rot.transpose() * p.to_vector();
    GeoPoint::from_ecef(&ecef)
}

/// A heading angle in radians, always in (-π, π].
///
/// Heading is measured clockwise from north: 0 points north, π/2 points east.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Heading(f64);

impl Heading {
    pub const NORTH: Heading = Heading(0.0);

    pub fn new(rad: f64) -> Self {
        wrap_angle(rad)
    }

    pub fn rad(self) -> f64 {
        self.0
    }

    /// Wrapped difference `self - other`.
    pub fn diff(self, other: Heading) -> Heading {
        wrap_angle(self.0 - other.0)
    }

    pub fn advance(self, delta: f64) -> Heading {
        wrap_angle(self.0 + delta)
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} rad", self.0)
    }
}

impl From<f64> for Heading {
    fn from(rad: f64) -> Heading {
        wrap_angle(rad)
    }
}

impl From<Heading> for f64 {
    fn from(h: Heading) -> f64 {
        h.0
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> Heading {
    if a > -PI && a <= PI {
        return Heading(a);
    }
    let r = a.rem_euclid(2.0 * PI);
    Heading(if r > PI { r - 2.0 * PI } else { r })
}

/// Smallest absolute angular separation between two angles.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).rad().abs()
}
