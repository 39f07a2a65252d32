//! Reproducible runs: simulate observation logs, replay them through the
//! selected back-ends, evaluate against truth and compare scenarios.
//!
//! Steps and fixes are merged into one timestamp-ordered stream (steps
//! before fixes at equal time, GNSS before UWB) that every back-end consumes
//! identically. An output is emitted after each batch of events sharing a
//! timestamp that contains a step.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eskf::{Eskf, EskfConfig};
use crate::estimator::{BackendKind, Estimator, EstimatorOutput};
use crate::eval::{self, CompareTable, MetricSummary, Results};
use crate::fgo::{FgoConfig, FgoWindow};
use crate::geo::{EnuOrigin, GeoPoint};
use crate::io;
use crate::map::FeasibilityMap;
use crate::pdr::StepIncrement;
use crate::pf::{ParticleFilter, PfConfig};
use crate::sim::{self, ScenarioSpec, Simulation};
use crate::uwb::{trilaterate, AbsoluteFix, Anchor, RangeSet, TrilaterationConfig};
use crate::{Error, Result};

pub const STEPS_FILE: &str = "steps.jsonl";
pub const GNSS_FILE: &str = "gnss.jsonl";
pub const UWB_FILE: &str = "uwb.jsonl";
pub const TRUTH_FILE: &str = "truth.csv";
pub const ANCHORS_FILE: &str = "anchors.csv";
pub const IMU_FILE: &str = "imu.csv";
pub const MAP_FILE: &str = "map.geojson";
pub const META_FILE: &str = "meta.json";
pub const RUN_FILE: &str = "run.json";

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_backends() -> Vec<BackendKind> {
    BackendKind::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_cdf_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario spec consumed by `simulate`.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    /// Directory holding observation logs; defaults to `out`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_backends")]
    pub backends: Vec<BackendKind>,
    /// Overrides the scenario seed and seeds the particle filter.
    #[serde(default)]
    pub seed: Option<u64>,
    /// GeoJSON or Overpass building footprints; defaults to the data
    /// directory's map.
    #[serde(default)]
    pub map: Option<PathBuf>,
    #[serde(default)]
    pub allowed: Option<Vec<String>>,
    #[serde(default)]
    pub anchors: Option<PathBuf>,
    #[serde(default)]
    pub origin: Option<GeoPoint>,
    /// `false` runs every back-end against an empty map.
    #[serde(default = "default_true")]
    pub constraints: bool,
    #[serde(default)]
    pub eskf: EskfConfig,
    #[serde(default)]
    pub fgo: FgoConfig,
    #[serde(default)]
    pub pf: PfConfig,
    #[serde(default)]
    pub trilateration: TrilaterationConfig,
    #[serde(default = "default_cdf_points")]
    pub cdf_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a JSON config; relative paths inside it are taken relative to
    /// the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.scenario);
        resolve(base, &mut cfg.data);
        resolve(base, &mut cfg.map);
        resolve(base, &mut cfg.anchors);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.backends.is_empty() {
            return Err(Error::Config(
                "at least one backend must be selected".into(),
            ));
        }
        self.pf
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.fgo.window == 0 {
            return Err(Error::Config("fgo window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> &Path {
        self.data.as_deref().unwrap_or(&self.out)
    }
}

/// Run metadata written next to simulated logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub scenario: String,
    pub origin: GeoPoint,
    pub allowed: Vec<String>,
    pub seed: u64,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    let spec: ScenarioSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid scenario {}: {e}", path.display())))?;
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(spec)
}

/// Simulates `spec` and writes every log into `dir`.
pub fn simulate_to_dir(spec: &ScenarioSpec, dir: &Path) -> Result<Simulation> {
    let sim = sim::simulate(spec)?;
    let origin = spec.enu_origin()?;
    io::write_steps(&dir.join(STEPS_FILE), &sim.steps)?;
    io::write_gnss(&dir.join(GNSS_FILE), &sim.gnss, &origin)?;
    io::write_uwb(&dir.join(UWB_FILE), &sim.uwb)?;
    io::write_truth(&dir.join(TRUTH_FILE), &sim.truth)?;
    io::write_anchors(&dir.join(ANCHORS_FILE), &sim.anchors)?;
    if let Some(imu) = &sim.imu {
        io::write_imu(&dir.join(IMU_FILE), imu)?;
    }
    let geojson = serde_json::to_string_pretty(&sim.map.to_geojson()).expect("serializable");
    io::write_text(&dir.join(MAP_FILE), &(geojson + "\n"))?;
    let meta = Meta {
        scenario: spec.name.clone(),
        origin: spec.origin,
        allowed: spec.allowed.clone(),
        seed: spec.seed,
    };
    io::write_text(
        &dir.join(META_FILE),
        &(serde_json::to_string_pretty(&meta).expect("serializable") + "\n"),
    )?;
    Ok(sim)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Simulation> {
    let path = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a scenario path".into()))?;
    let mut spec = load_scenario(path)?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let sim = simulate_to_dir(&spec, &cfg.out)?;
    info!(
        "simulated {}: {} steps, {} GNSS fixes, {} UWB range sets",
        spec.name,
        sim.steps.len(),
        sim.gnss.len(),
        sim.uwb.len()
    );
    Ok(sim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Event {
    Step(StepIncrement),
    Fix(AbsoluteFix),
}

impl Event {
    pub fn t(&self) -> f64 {
        match self {
            Event::Step(s) => s.t,
            Event::Fix(f) => f.t,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Event::Step(_) => 0,
            Event::Fix(_) => 1,
        }
    }
}

/// Timestamp-ordered merge; ties keep steps first, then input order.
pub fn merge_events(steps: &[StepIncrement], fixes: &[AbsoluteFix]) -> Vec<Event> {
    let mut events: Vec<Event> = steps
        .iter()
        .map(|s| Event::Step(*s))
        .chain(fixes.iter().map(|f| Event::Fix(*f)))
        .collect();
    events.sort_by(|a, b| a.t().total_cmp(&b.t()).then(a.rank().cmp(&b.rank())));
    events
}

/// Trilaterates each range set; sets that fail are logged and skipped.
pub fn uwb_fixes(
    anchors: &[Anchor],
    sets: &[RangeSet],
    cfg: &TrilaterationConfig,
) -> (Vec<AbsoluteFix>, usize) {
    let mut fixes = Vec::with_capacity(sets.len());
    let mut failed = 0;
    for rs in sets {
        match trilaterate(anchors, rs, None, cfg) {
            Ok(f) => fixes.push(f),
            Err(e) => {
                warn!("skipping UWB range set at t={:.3}: {e}", rs.t);
                failed += 1;
            }
        }
    }
    (fixes, failed)
}

/// Everything a replay needs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub origin: EnuOrigin,
    pub map: FeasibilityMap,
    pub events: Vec<Event>,
    pub uwb_failures: usize,
    pub scenario: String,
}

fn read_meta(dir: &Path) -> Result<Option<Meta>> {
    let path = dir.join(META_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Config(format!("invalid {}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::Config(format!(
            "cannot read {}: {e}",
            path.display()
        ))),
    }
}

fn optional<T>(r: std::result::Result<T, io::IoError>, empty: T) -> Result<T> {
    match r {
        Err(e) if e.is_not_found() => Ok(empty),
        other => Ok(other?),
    }
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let dir = cfg.data_dir();
    let meta = read_meta(dir)?;
    let origin_geo = cfg
        .origin
        .or(meta.as_ref().map(|m| m.origin))
        .ok_or_else(|| {
            Error::Config(format!(
                "no origin in config and no {META_FILE} in {}",
                dir.display()
            ))
        })?;
    let origin = EnuOrigin::new(origin_geo).map_err(|e| Error::Config(e.to_string()))?;
    let allowed = cfg
        .allowed
        .clone()
        .or(meta.as_ref().map(|m| m.allowed.clone()))
        .unwrap_or_default();

    let map = if !cfg.constraints {
        FeasibilityMap::empty()
    } else {
        let path = cfg.map.clone().unwrap_or_else(|| dir.join(MAP_FILE));
        match std::fs::read_to_string(&path) {
            Ok(text) => FeasibilityMap::from_json_str(&text, allowed, &origin)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && cfg.map.is_none() => {
                FeasibilityMap::empty()
            }
            Err(e) => {
                return Err(Error::Config(format!(
                    "cannot read map {}: {e}",
                    path.display()
                )))
            }
        }
    };

    let steps = io::read_steps(&dir.join(STEPS_FILE))?;
    let gnss = optional(io::read_gnss(&dir.join(GNSS_FILE), &origin), Vec::new())?;
    let sets = optional(io::read_uwb(&dir.join(UWB_FILE)), Vec::new())?;
    let anchors_path = cfg
        .anchors
        .clone()
        .unwrap_or_else(|| dir.join(ANCHORS_FILE));
    let anchors = optional(io::read_anchors(&anchors_path), Vec::new())?;
    if !sets.is_empty() && anchors.is_empty() {
        return Err(Error::Config(format!(
            "UWB ranges present but no anchors in {}",
            anchors_path.display()
        )));
    }
    let (uwb, uwb_failures) = uwb_fixes(&anchors, &sets, &cfg.trilateration);
    let mut fixes = gnss;
    fixes.extend(uwb);
    Ok(Inputs {
        origin,
        map,
        events: merge_events(&steps, &fixes),
        uwb_failures,
        scenario: meta
            .map(|m| m.scenario)
            .unwrap_or_else(|| "scenario".into()),
    })
}

pub fn make_estimator(
    kind: BackendKind,
    map: FeasibilityMap,
    cfg: &RunConfig,
) -> Result<Box<dyn Estimator>> {
    Ok(match kind {
        BackendKind::Eskf => Box::new(Eskf::new(cfg.eskf, map)),
        BackendKind::Fgo => Box::new(FgoWindow::new(cfg.fgo, map)),
        BackendKind::Pf => Box::new(ParticleFilter::new(cfg.pf, map, cfg.seed.unwrap_or(0))?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendRun {
    pub kind: BackendKind,
    #[serde(skip)]
    pub outputs: Vec<EstimatorOutput>,
    /// SHA-256 of the consumed event stream.
    pub digest: String,
    pub events: usize,
    pub rejected_fixes: usize,
}

/// Feeds the event stream to one estimator and collects its outputs.
pub fn replay(est: &mut dyn Estimator, events: &[Event]) -> Result<BackendRun> {
    let mut hasher = Sha256::new();
    let mut outputs = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].t();
        let mut had_step = false;
        while i < events.len() && events[i].t() == t {
            let ev = &events[i];
            hasher.update(serde_json::to_vec(ev).expect("serializable"));
            hasher.update(b"\n");
            match ev {
                Event::Step(s) => {
                    had_step = true;
                    est.on_step(s)?;
                }
                Event::Fix(f) => est.on_fix(f)?,
            }
            i += 1;
        }
        if had_step {
            if let Some(out) = est.output(t)? {
                outputs.push(out);
            }
        }
    }
    let digest = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(BackendRun {
        kind: est.kind(),
        outputs,
        digest,
        events: events.len(),
        rejected_fixes: est.rejected_fixes(),
    })
}

/// Runs each selected back-end on its own thread over the shared stream.
pub fn run_backends(
    kinds: &[BackendKind],
    events: &[Event],
    map: &FeasibilityMap,
    cfg: &RunConfig,
) -> Result<Vec<BackendRun>> {
    let estimators = kinds
        .iter()
        .map(|&k| make_estimator(k, map.clone(), cfg))
        .collect::<Result<Vec<_>>>()?;
    std::thread::scope(|s| {
        let handles: Vec<_> = estimators
            .into_iter()
            .map(|mut est| s.spawn(move || replay(est.as_mut(), events)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("back-end thread panicked"))
            .collect()
    })
}

pub fn output_file(kind: BackendKind) -> String {
    format!("{}.jsonl", kind.name())
}

pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<BackendRun>> {
    let inputs = load_inputs(cfg)?;
    let runs = run_backends(&cfg.backends, &inputs.events, &inputs.map, cfg)?;
    for r in &runs {
        io::write_outputs(&cfg.out.join(output_file(r.kind)), &r.outputs)?;
        info!(
            "{}: {} outputs, {} rejected fixes, events {}",
            r.kind,
            r.outputs.len(),
            r.rejected_fixes,
            &r.digest[..12]
        );
    }
    let summary = serde_json::json!({
        "scenario": inputs.scenario,
        "uwb_failures": inputs.uwb_failures,
        "backends": runs,
    });
    io::write_text(
        &cfg.out.join(RUN_FILE),
        &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"),
    )?;
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub scenario: String,
    pub summaries: BTreeMap<BackendKind, MetricSummary>,
    pub table: CompareTable,
}

/// Scores the selected back-ends' outputs in `cfg.out` against the truth in
/// the data directory and writes metric, CDF and table files.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let dir = cfg.data_dir();
    let truth = io::read_truth(&dir.join(TRUTH_FILE))?;
    let scenario = read_meta(dir)?
        .map(|m| m.scenario)
        .unwrap_or_else(|| "scenario".into());
    let mut summaries = BTreeMap::new();
    for &kind in &cfg.backends {
        let outputs = io::read_outputs(&cfg.out.join(output_file(kind)))?;
        let errs = eval::horizontal_error(&outputs, &truth)?;
        let summary = eval::summarize_series(&errs)?;
        let name = kind.name();
        io::write_text(
            &cfg.out.join(format!("metrics_{name}.csv")),
            &format!("{}\n{}\n", MetricSummary::CSV_HEADER, summary.to_csv_row()),
        )?;
        io::write_text(
            &cfg.out.join(format!("cdf_{name}.csv")),
            &eval::cdf_csv(&eval::cdf(&errs, cfg.cdf_points)?),
        )?;
        summaries.insert(kind, summary);
    }
    let mut results = Results::new();
    results.insert(scenario.clone(), summaries.clone());
    let table = eval::compare_table(&results);
    io::write_text(&cfg.out.join("table.csv"), &table.to_csv())?;
    io::write_text(&cfg.out.join("table.txt"), &table.to_text())?;
    Ok(Evaluation {
        scenario,
        summaries,
        table,
    })
}

/// Evaluates several runs and tabulates them side by side.
pub fn cmd_compare(cfgs: &[RunConfig], out: &Path) -> Result<CompareTable> {
    if cfgs.is_empty() {
        return Err(Error::Config("compare needs at least one config".into()));
    }
    let mut results = Results::new();
    for cfg in cfgs {
        let ev = cmd_evaluate(cfg)?;
        results.entry(ev.scenario).or_default().extend(ev.summaries);
    }
    let table = eval::compare_table(&results);
    io::write_text(&out.join("compare.csv"), &table.to_csv())?;
    io::write_text(&out.join("compare.txt"), &table.to_text())?;
    Ok(table)
}

/// Process exit status for an error: 2 for usage and configuration
/// problems, 1 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}
