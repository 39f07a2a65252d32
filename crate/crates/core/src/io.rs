//! Observation and result logs.
//!
//! | file          | format | record                                   |
//! |---------------|--------|------------------------------------------|
//! | `steps.jsonl` | JSONL  | [`StepIncrement`]                        |
//! | `gnss.jsonl`  | JSONL  | `{t, lat, lon, alt, sigma: [e, n, u]}`   |
//! | `uwb.jsonl`   | JSONL  | `{t, anchor_id, range, sigma}` per range |
//! | `truth.csv`   | CSV    | `t,e,n,u,heading`                        |
//! | `anchors.csv` | CSV    | `id,e,n,u`                               |
//! | `imu.csv`     | CSV    | `t,ax,ay,az,heading`                     |
//! | `<backend>.jsonl` | JSONL | [`EstimatorOutput`]                   |
//!
//! Readers reject timestamps that go backwards, naming the offending line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::EstimatorOutput;
use crate::geo::{
    enu_to_geodetic, geodetic_to_enu, EnuOrigin, EnuPoint, GeoError, GeoPoint, Heading,
};
use crate::pdr::{ImuSample, StepIncrement};
use crate::sim::{GroundTruth, TruthSample};
use crate::uwb::{AbsoluteFix, Anchor, FixSource, Range, RangeSet};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}:{line}: timestamp {t} goes back from {prev}", path.display())]
    TimestampRegression {
        path: PathBuf,
        line: usize,
        t: f64,
        prev: f64,
    },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, msg: impl ToString) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, IoError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IoError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| IoError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| IoError::parse(path, 0, e))?;
        writeln!(w, "{line}").map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Parses every non-blank line, returning `(line number, record)`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, IoError> {
    let f = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IoError::parse(path, i + 1, e))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn check_order(path: &Path, times: impl IntoIterator<Item = (usize, f64)>) -> Result<(), IoError> {
    let mut prev = f64::NEG_INFINITY;
    for (line, t) in times {
        if !t.is_finite() {
            return Err(IoError::parse(
                path,
                line,
                format!("non-finite timestamp {t}"),
            ));
        }
        if t < prev {
            return Err(IoError::TimestampRegression {
                path: path.to_path_buf(),
                line,
                t,
                prev,
            });
        }
        prev = t;
    }
    Ok(())
}

fn read_timed<T: DeserializeOwned>(path: &Path, t: impl Fn(&T) -> f64) -> Result<Vec<T>, IoError> {
    let recs: Vec<(usize, T)> = read_jsonl(path)?;
    check_order(path, recs.iter().map(|(l, r)| (*l, t(r))))?;
    Ok(recs.into_iter().map(|(_, r)| r).collect())
}

pub fn write_steps(path: &Path, steps: &[StepIncrement]) -> Result<(), IoError> {
    write_jsonl(path, steps)
}

pub fn read_steps(path: &Path) -> Result<Vec<StepIncrement>, IoError> {
    read_timed(path, |s: &StepIncrement| s.t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssRecord {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    pub sigma: [f64; 3],
}

impl GnssRecord {
    pub fn from_fix(fix: &AbsoluteFix, origin: &EnuOrigin) -> Self {
        let g = enu_to_geodetic(&fix.pos, origin);
        Self {
            t: fix.t,
            lat: g.lat,
            lon: g.lon,
            alt: g.alt,
            sigma: fix.sigma,
        }
    }

    pub fn to_fix(&self, origin: &EnuOrigin) -> Result<AbsoluteFix, GeoError> {
        let pos = geodetic_to_enu(&GeoPoint::new(self.lat, self.lon, self.alt), origin)?;
        Ok(AbsoluteFix::new(self.t, pos, self.sigma, FixSource::Gnss))
    }
}

pub fn write_gnss(path: &Path, fixes: &[AbsoluteFix], origin: &EnuOrigin) -> Result<(), IoError> {
    write_jsonl(path, fixes.iter().map(|f| GnssRecord::from_fix(f, origin)))
}

pub fn read_gnss(path: &Path, origin: &EnuOrigin) -> Result<Vec<AbsoluteFix>, IoError> {
    let recs: Vec<(usize, GnssRecord)> = read_jsonl(path)?;
    check_order(path, recs.iter().map(|(l, r)| (*l, r.t)))?;
    recs.iter()
        .map(|(line, r)| r.to_fix(origin).map_err(|e| IoError::parse(path, *line, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RangeRecord {
    t: f64,
    anchor_id: String,
    range: f64,
    sigma: f64,
}

pub fn write_uwb(path: &Path, sets: &[RangeSet]) -> Result<(), IoError> {
    write_jsonl(
        path,
        sets.iter().flat_map(|s| {
            s.ranges.iter().map(|r| RangeRecord {
                t: s.t,
                anchor_id: r.anchor_id.clone(),
                range: r.range,
                sigma: r.sigma,
            })
        }),
    )
}

/// Groups consecutive ranges sharing a timestamp into one set.
pub fn read_uwb(path: &Path) -> Result<Vec<RangeSet>, IoError> {
    let recs: Vec<RangeRecord> = read_timed(path, |r: &RangeRecord| r.t)?;
    let mut out: Vec<RangeSet> = Vec::new();
    for r in recs {
        let range = Range {
            anchor_id: r.anchor_id,
            range: r.range,
            sigma: r.sigma,
        };
        match out.last_mut() {
            Some(set) if set.t == r.t => set.ranges.push(range),
            _ => out.push(RangeSet {
                t: r.t,
                ranges: vec![range],
            }),
        }
    }
    Ok(out)
}

pub fn write_outputs(path: &Path, outputs: &[EstimatorOutput]) -> Result<(), IoError> {
    write_jsonl(path, outputs)
}

pub fn read_outputs(path: &Path) -> Result<Vec<EstimatorOutput>, IoError> {
    read_timed(path, |o: &EstimatorOutput| o.t)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    IoError::parse(path, line, e)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, IoError> {
    let f = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(f));
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: T = rec.map_err(|e| csv_err(path, e))?;
        out.push((out.len() + 2, rec));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    e: f64,
    n: f64,
    u: f64,
    heading: f64,
}

pub fn write_truth(path: &Path, gt: &GroundTruth) -> Result<(), IoError> {
    write_csv(
        path,
        gt.samples.iter().map(|s| TruthRow {
            t: s.t,
            e: s.pos.e,
            n: s.pos.n,
            u: s.pos.u,
            heading: s.heading.rad(),
        }),
    )
}

pub fn read_truth(path: &Path) -> Result<GroundTruth, IoError> {
    let rows: Vec<(usize, TruthRow)> = read_csv(path)?;
    check_order(path, rows.iter().map(|(l, r)| (*l, r.t)))?;
    Ok(GroundTruth::new(
        rows.into_iter()
            .map(|(_, r)| TruthSample {
                t: r.t,
                pos: EnuPoint::new(r.e, r.n, r.u),
                heading: Heading::new(r.heading),
            })
            .collect(),
    ))
}

#[derive(Serialize, Deserialize)]
struct AnchorRow {
    id: String,
    e: f64,
    n: f64,
    u: f64,
}

pub fn write_anchors(path: &Path, anchors: &[Anchor]) -> Result<(), IoError> {
    write_csv(
        path,
        anchors.iter().map(|a| AnchorRow {
            id: a.id.clone(),
            e: a.pos.e,
            n: a.pos.n,
            u: a.pos.u,
        }),
    )
}

pub fn read_anchors(path: &Path) -> Result<Vec<Anchor>, IoError> {
    let rows: Vec<(usize, AnchorRow)> = read_csv(path)?;
    Ok(rows
        .into_iter()
        .map(|(_, r)| Anchor::new(r.id, r.e, r.n, r.u))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    ax: f64,
    ay: f64,
    az: f64,
    heading: f64,
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<(), IoError> {
    write_csv(
        path,
        samples.iter().map(|s| ImuRow {
            t: s.t,
            ax: s.acc[0],
            ay: s.acc[1],
            az: s.acc[2],
            heading: s.heading.rad(),
        }),
    )
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    let rows: Vec<(usize, ImuRow)> = read_csv(path)?;
    check_order(path, rows.iter().map(|(l, r)| (*l, r.t)))?;
    Ok(rows
        .into_iter()
        .map(|(_, r)| ImuSample {
            t: r.t,
            acc: [r.ax, r.ay, r.az],
            heading: Heading::new(r.heading),
        })
        .collect())
}
