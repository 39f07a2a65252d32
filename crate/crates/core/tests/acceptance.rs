//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seamloc::eskf::{heading_quaternion, Eskf, EskfConfig};
use seamloc::eval::{cdf, horizontal_error, summarize, summarize_series, ErrorSeries};
use seamloc::fgo::{FgoConfig, FgoWindow};
use seamloc::map::FeasibilityMap;
use seamloc::pf::{systematic_indices, ParticleFilter, PfConfig};
use seamloc::pipeline::{self, merge_events, run_backends, uwb_fixes, BackendRun, RunConfig};
use seamloc::sim::{presets, simulate, GroundTruth, ScenarioSpec, Simulation};
use seamloc::uwb::{trilaterate, Anchor, Range, RangeSet, TrilaterationConfig, UwbError};
use seamloc::{AbsoluteFix, BackendKind, EnuPoint, FixSource, Heading, StepIncrement};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn noiseless(mut spec: ScenarioSpec) -> ScenarioSpec {
    if let Some(g) = spec.gnss.as_mut() {
        g.sigma = 0.0;
        g.multipath.prob = 0.0;
    }
    if let Some(u) = spec.uwb.as_mut() {
        u.sigma = 0.0;
        u.nlos_prob = 0.0;
    }
    spec.pdr = Default::default();
    spec
}

/// Runs every back-end over a simulation held in memory.
fn run_sim(sim: &Simulation, cfg: &RunConfig, constraints: bool) -> Vec<BackendRun> {
    let (uwb, _) = uwb_fixes(&sim.anchors, &sim.uwb, &cfg.trilateration);
    let mut fixes = sim.gnss.clone();
    fixes.extend(uwb);
    let events = merge_events(&sim.steps, &fixes);
    let map = if constraints {
        sim.map.clone()
    } else {
        FeasibilityMap::empty()
    };
    run_backends(&cfg.backends, &events, &map, cfg).unwrap()
}

fn rmse(run: &BackendRun, gt: &GroundTruth) -> f64 {
    summarize_series(&horizontal_error(&run.outputs, gt).unwrap())
        .unwrap()
        .rmse
}

fn max_err(run: &BackendRun, gt: &GroundTruth) -> f64 {
    summarize_series(&horizontal_error(&run.outputs, gt).unwrap())
        .unwrap()
        .max
}

fn c1_noiseless_pipeline() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = noiseless(presets::seamless());
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let mut cfg = RunConfig {
        scenario: Some(spec_path),
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    // matched noise: the particle filter is told its increments are exact
    cfg.pf.sigma_prop_xy = 0.0;
    cfg.pf.sigma_prop_psi = 0.0;
    let sim = pipeline::cmd_simulate(&cfg).unwrap();
    pipeline::cmd_run(&cfg).unwrap();
    let ev = pipeline::cmd_evaluate(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rm: Vec<(BackendKind, f64)> = ev.summaries.iter().map(|(k, s)| (*k, s.rmse)).collect();
    let ok = sim.steps.len() == 200 && rm.len() == 3 && rm.iter().all(|r| r.1 < 1e-3) && secs < 5.0;
    check(
        ok,
        format!("{} steps, RMSE {rm:?}, {secs:.2} s", sim.steps.len()),
    )
}

fn grid_search(anchors: &[Anchor], rs: &RangeSet) -> [f64; 2] {
    let cost = |e: f64, n: f64| {
        rs.ranges
            .iter()
            .map(|r| {
                let a = anchors.iter().find(|a| a.id == r.anchor_id).unwrap();
                let d = (e - a.pos.e).hypot(n - a.pos.n);
                ((d - r.range) / r.sigma).powi(2)
            })
            .sum::<f64>()
    };
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for a in anchors {
        lo = [lo[0].min(a.pos.e) - 5.0, lo[1].min(a.pos.n) - 5.0];
        hi = [hi[0].max(a.pos.e) + 5.0, hi[1].max(a.pos.n) + 5.0];
    }
    let mut best = [0.0, 0.0];
    let mut best_cost = f64::MAX;
    let mut step = 0.25;
    let mut pass = 0;
    while step > 2e-5 {
        let nx = ((hi[0] - lo[0]) / step).ceil() as usize;
        let ny = ((hi[1] - lo[1]) / step).ceil() as usize;
        for i in 0..=nx {
            for j in 0..=ny {
                let (e, n) = (lo[0] + i as f64 * step, lo[1] + j as f64 * step);
                let c = cost(e, n);
                if c < best_cost {
                    best_cost = c;
                    best = [e, n];
                }
            }
        }
        let half = if pass == 0 { 2.0 * step } else { 10.0 * step };
        lo = [best[0] - half, best[1] - half];
        hi = [best[0] + half, best[1] + half];
        step /= 10.0;
        pass += 1;
    }
    best
}

fn c2_trilateration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = TrilaterationConfig::default();
    let (mut evaluated, mut gated, mut worst) = (0, 0, 0.0f64);
    let mut geometries = Vec::new();
    for _ in 0..1000 {
        let anchors: Vec<Anchor> = (0..4)
            .map(|i| {
                Anchor::new(
                    format!("a{i}"),
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.0..30.0),
                    0.0,
                )
            })
            .collect();
        let truth = EnuPoint::horizontal(rng.random_range(3.0..27.0), rng.random_range(3.0..27.0));
        let rs = RangeSet {
            t: 0.0,
            ranges: anchors
                .iter()
                .map(|a| Range {
                    anchor_id: a.id.clone(),
                    range: a.pos.distance(&truth),
                    sigma: 0.1,
                })
                .collect(),
        };
        match trilaterate(&anchors, &rs, None, &cfg) {
            Ok(fix) => {
                evaluated += 1;
                worst = worst.max(fix.pos.horizontal_distance(&truth));
                geometries.push((anchors, truth));
            }
            Err(UwbError::Geometry(_)) => gated += 1,
            Err(e) => return Err(format!("unexpected failure: {e}")),
        }
    }
    let mut worst_grid = 0.0f64;
    for (anchors, truth) in geometries.iter().take(100) {
        let rs = RangeSet {
            t: 0.0,
            ranges: anchors
                .iter()
                .map(|a| {
                    let z: f64 = rng.sample(StandardNormal);
                    Range {
                        anchor_id: a.id.clone(),
                        range: a.pos.distance(truth) + 0.1 * z,
                        sigma: 0.1,
                    }
                })
                .collect(),
        };
        let fix = trilaterate(anchors, &rs, None, &cfg).map_err(|e| e.to_string())?;
        let g = grid_search(anchors, &rs);
        worst_grid = worst_grid.max((fix.pos.e - g[0]).hypot(fix.pos.n - g[1]));
    }
    check(
        worst < 1e-6 && worst_grid < 1e-3 && evaluated >= 900,
        format!("{evaluated} solved ({gated} condition-gated), worst noiseless error {worst:.2e} m, worst grid-search gap {worst_grid:.2e} m"),
    )
}

fn c3_eskf_health() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut f = Eskf::new(EskfConfig::default(), FeasibilityMap::empty());
    f.init(&AbsoluteFix::new(
        0.0,
        EnuPoint::ORIGIN,
        [1.0; 3],
        FixSource::Gnss,
    ));
    let (mut worst_asym, mut min_eig) = (0.0f64, f64::MAX);
    let mut violations = 0;
    let pos_trace = |f: &Eskf| f.state().unwrap().cov.fixed_view::<3, 3>(0, 0).trace();
    for k in 0..10_000 {
        let before = pos_trace(&f);
        let t = k as f64 * 0.5;
        if rng.random_bool(0.6) {
            let psi = Heading::new(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            let inc =
                StepIncrement::from_length(t, rng.random_range(0.0..1.2), psi, Heading::NORTH);
            f.predict(&inc, heading_quaternion(psi)).unwrap();
            if pos_trace(&f) < before - 1e-12 {
                violations += 1;
            }
        } else {
            let p = f.state().unwrap().p;
            let fix = AbsoluteFix::new(
                t,
                EnuPoint::new(
                    p.x + rng.random_range(-2.0..2.0),
                    p.y + rng.random_range(-2.0..2.0),
                    p.z,
                ),
                [rng.random_range(0.05..3.0); 3],
                FixSource::Gnss,
            );
            if f.update(&fix).unwrap().applied() && pos_trace(&f) > before + 1e-12 {
                violations += 1;
            }
        }
        let c = f.state().unwrap().cov;
        worst_asym = worst_asym.max((c - c.transpose()).abs().max());
        min_eig = min_eig.min(c.symmetric_eigenvalues().min());
    }
    check(
        worst_asym < 1e-9 && min_eig > -1e-9 && violations == 0,
        format!("max asymmetry {worst_asym:.1e}, min eigenvalue {min_eig:.2e}, trace monotonicity violations {violations}"),
    )
}

fn c4_fgo() -> Outcome {
    // exact chain from perturbed guesses
    let truth: Vec<[f64; 4]> = (0..30)
        .map(|k| {
            let k = k as f64;
            [
                0.7 * k,
                2.0 * (0.2 * k).sin(),
                0.0,
                Heading::new(0.1 * k).rad(),
            ]
        })
        .collect();
    let mut g = FgoWindow::new(FgoConfig::default(), FeasibilityMap::empty());
    g.init(&AbsoluteFix::new(
        0.0,
        EnuPoint::ORIGIN,
        [0.2; 3],
        FixSource::Uwb,
    ));
    for k in 1..truth.len() {
        let (a, b) = (truth[k - 1], truth[k]);
        g.add_step(&StepIncrement {
            t: k as f64 * 0.5,
            delta_p: [b[0] - a[0], b[1] - a[1]],
            delta_z: 0.0,
            delta_psi: Heading::new(b[3] - a[3]),
            step_length: 0.7,
            psi: Heading::new(b[3]),
        })
        .unwrap();
    }
    for (k, t) in truth.iter().enumerate() {
        let ang = k as f64 * 2.1;
        g.set_node_pose(
            k as u64,
            [t[0] + 0.5 * ang.cos(), t[1] + 0.5 * ang.sin(), 0.0, t[3]],
        );
    }
    g.optimize().unwrap();
    let recovered = g
        .nodes()
        .zip(&truth)
        .map(|(n, t)| (Vector4::from(n.pose) - Vector4::from(*t)).xy().norm())
        .fold(0.0, f64::max);

    // cost and window size over a noisy simulated walk
    let sim = simulate(&ScenarioSpec {
        seed: 4,
        ..presets::seamless()
    })
    .unwrap();
    let (uwb, _) = uwb_fixes(&sim.anchors, &sim.uwb, &TrilaterationConfig::default());
    let mut fixes = sim.gnss.clone();
    fixes.extend(uwb);
    let cfg = FgoConfig {
        window: 30,
        ..FgoConfig::default()
    };
    let mut w = FgoWindow::new(cfg, sim.map.clone());
    let (mut increases, mut max_nodes, mut solves) = (0, 0, 0);
    for ev in merge_events(&sim.steps, &fixes) {
        match ev {
            pipeline::Event::Step(s) => {
                if w.is_initialized() {
                    w.add_step(&s).unwrap();
                    w.prune();
                    max_nodes = max_nodes.max(w.nodes().len());
                    w.optimize().unwrap();
                    let r = w.last_report().unwrap();
                    solves += 1;
                    if r.final_cost > r.initial_cost * (1.0 + 1e-12) + 1e-12 {
                        increases += 1;
                    }
                }
            }
            pipeline::Event::Fix(f) => {
                if w.is_initialized() {
                    w.add_fix(&f).unwrap();
                } else {
                    w.init(&f);
                }
            }
        }
    }
    check(
        recovered < 1e-6 && increases == 0 && max_nodes <= 30 && solves > 150,
        format!("recovery error {recovered:.1e} m, {increases} cost increases over {solves} solves, max window {max_nodes}/30"),
    )
}

fn c5_pf() -> Outcome {
    let sim = simulate(&ScenarioSpec {
        seed: 5,
        ..presets::seamless()
    })
    .unwrap();
    let (uwb, _) = uwb_fixes(&sim.anchors, &sim.uwb, &TrilaterationConfig::default());
    let mut fixes = sim.gnss.clone();
    fixes.extend(uwb);
    let events = merge_events(&sim.steps, &fixes);
    let mut pf = ParticleFilter::new(PfConfig::default(), sim.map.clone(), 5).unwrap();
    let (mut worst_norm, mut worst_ess, mut resamples) = (0.0f64, 0.0f64, 0);
    for ev in &events {
        match ev {
            pipeline::Event::Step(s) => {
                if pf.is_initialized() {
                    pf.propagate(s).unwrap();
                }
            }
            pipeline::Event::Fix(f) => {
                if !pf.is_initialized() {
                    pf.init(f);
                    continue;
                }
                pf.reweight(f).unwrap();
                let sum: f64 = pf.particles().iter().map(|p| p.w).sum();
                worst_norm = worst_norm.max((sum - 1.0).abs());
                if pf.resample_if_needed() {
                    resamples += 1;
                    worst_ess = worst_ess.max((pf.ess() - 500.0).abs());
                    let sum: f64 = pf.particles().iter().map(|p| p.w).sum();
                    worst_norm = worst_norm.max((sum - 1.0).abs());
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst_mult = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(10..300);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(4)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mut counts = vec![0usize; n];
        for i in systematic_indices(&w, rng.random::<f64>() / n as f64) {
            counts[i] += 1;
        }
        for i in 0..n {
            worst_mult = worst_mult.max((counts[i] as f64 - n as f64 * w[i]).abs());
        }
    }
    let cfg = RunConfig {
        backends: vec![BackendKind::Pf],
        seed: Some(77),
        ..RunConfig::default()
    };
    let dump = |runs: Vec<BackendRun>| {
        runs[0]
            .outputs
            .iter()
            .map(|o| serde_json::to_string(o).unwrap() + "\n")
            .collect::<String>()
    };
    let a = dump(run_backends(&cfg.backends, &events, &sim.map, &cfg).unwrap());
    let b = dump(run_backends(&cfg.backends, &events, &sim.map, &cfg).unwrap());
    let identical = a == b && !a.is_empty();
    check(
        worst_norm < 1e-9 && worst_ess < 1e-9 && resamples > 0 && worst_mult <= 1.0 + 1e-9 && identical,
        format!(
            "max |Σw-1| {worst_norm:.1e}, max |ESS-N| after {resamples} resamples {worst_ess:.1e}, max |count-Nw| {worst_mult:.3}, seeded rerun identical: {identical}"
        ),
    )
}

fn c6_map_constraint() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let mut on = [0.0; 3];
    let mut off = [0.0; 3];
    let seeds = 10;
    for seed in 0..seeds {
        let spec = ScenarioSpec {
            seed,
            ..presets::outdoor()
        };
        let mp = spec.gnss.as_ref().unwrap().multipath;
        assert_eq!((mp.bias, mp.prob), (5.0, 0.3));
        let sim = simulate(&spec).unwrap();
        let cfg = RunConfig {
            seed: Some(seed),
            ..cfg.clone()
        };
        for (i, r) in run_sim(&sim, &cfg, true).iter().enumerate() {
            on[i] += max_err(r, &sim.truth) / seeds as f64;
        }
        for (i, r) in run_sim(&sim, &cfg, false).iter().enumerate() {
            off[i] += max_err(r, &sim.truth) / seeds as f64;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail: Vec<String> = cfg
        .backends
        .iter()
        .enumerate()
        .map(|(i, k)| {
            format!(
                "{k} {:.2}→{:.2} m ({:.0}%)",
                off[i],
                on[i],
                100.0 * (1.0 - on[i] / off[i])
            )
        })
        .collect();
    let ok = (0..3).all(|i| on[i] <= 0.8 * off[i]) && secs < 60.0;
    check(
        ok,
        format!(
            "mean max error off→on over {seeds} seeds: {}; {secs:.1} s",
            detail.join(", ")
        ),
    )
}

/// Dead-reckoned positions from the truth start, at each step time.
fn pdr_only(sim: &Simulation) -> Vec<(f64, EnuPoint)> {
    let mut p = sim.truth.samples[0].pos;
    sim.steps
        .iter()
        .map(|s| {
            p = EnuPoint::new(p.e + s.delta_p[0], p.n + s.delta_p[1], p.u);
            (s.t, p)
        })
        .collect()
}

fn c7_drift() -> Outcome {
    let spec = presets::drift();
    let speed = spec.speed;
    let checkpoints = [100.0, 200.0, 300.0, 400.0];
    let mut mean_err = [0.0; 4];
    let mut worst_ratio = 0.0f64;
    let seeds = 10;
    for seed in 0..seeds {
        let sim = simulate(&ScenarioSpec {
            seed,
            ..spec.clone()
        })
        .unwrap();
        let dr = pdr_only(&sim);
        for (c, d) in checkpoints.iter().enumerate() {
            let t = d / speed;
            let (_, p) = dr
                .iter()
                .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
                .unwrap();
            let (tt, _) = dr
                .iter()
                .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
                .unwrap();
            mean_err[c] +=
                sim.truth.position_at(*tt).unwrap().horizontal_distance(p) / seeds as f64;
        }
        let errs: Vec<f64> = dr
            .iter()
            .map(|(t, p)| sim.truth.position_at(*t).unwrap().horizontal_distance(p))
            .collect();
        let pdr_rmse = summarize(&errs).unwrap().rmse;
        let cfg = RunConfig {
            seed: Some(seed),
            ..RunConfig::default()
        };
        for r in run_sim(&sim, &cfg, true) {
            worst_ratio = worst_ratio.max(rmse(&r, &sim.truth) / pdr_rmse);
        }
    }
    // least-squares slope of log error against log distance
    let xs: Vec<f64> = checkpoints.iter().map(|d: &f64| d.ln()).collect();
    let ys: Vec<f64> = mean_err.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    check(
        slope > 1.0 && worst_ratio < 0.5,
        format!(
            "PDR-only mean error at {checkpoints:?} m: {:?} (log-log slope {slope:.2}); worst fused/PDR RMSE ratio {worst_ratio:.3}",
            mean_err.map(|e| (e * 100.0).round() / 100.0)
        ),
    )
}

fn c8_error_band() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let kinds = [BackendKind::Eskf, BackendKind::Pf];
    let cfg = RunConfig {
        backends: kinds.to_vec(),
        ..RunConfig::default()
    };
    for (spec, band) in [
        (presets::indoor(), (0.05, 1.0)),
        (presets::outdoor(), (0.3, 3.5)),
    ] {
        let mut worst = (f64::MAX, f64::MIN);
        for seed in 0..5 {
            let sim = simulate(&ScenarioSpec {
                seed,
                ..spec.clone()
            })
            .unwrap();
            for r in run_sim(
                &sim,
                &RunConfig {
                    seed: Some(seed),
                    ..cfg.clone()
                },
                true,
            ) {
                let e = rmse(&r, &sim.truth);
                worst = (worst.0.min(e), worst.1.max(e));
            }
        }
        ok &= worst.0 > band.0 && worst.1 < band.1;
        lines.push(format!(
            "{} RMSE range [{:.3}, {:.3}] in {band:?}",
            spec.name, worst.0, worst.1
        ));
    }
    check(
        ok,
        format!("ESKF and PF over 5 seeds: {}", lines.join("; ")),
    )
}

fn c9_continuity() -> Outcome {
    let mut worst = Vec::new();
    let mut ok = true;
    let cfg = RunConfig::default();
    for seed in 0..5 {
        let sim = simulate(&ScenarioSpec {
            seed,
            ..presets::seamless()
        })
        .unwrap();
        let door = sim.uwb.first().unwrap().t;
        let mut lengths: Vec<f64> = sim.steps.iter().map(|s| s.step_length).collect();
        lengths.sort_by(f64::total_cmp);
        let median = lengths[(lengths.len() - 1) / 2];
        for r in run_sim(
            &sim,
            &RunConfig {
                seed: Some(seed),
                ..cfg.clone()
            },
            true,
        ) {
            let jump = r
                .outputs
                .windows(2)
                .filter(|w| (w[1].t - door).abs() <= 5.0)
                .map(|w| w[0].pos.horizontal_distance(&w[1].pos))
                .fold(0.0, f64::max);
            ok &= jump < 5.0 * median;
            worst.push((r.kind, jump / median));
        }
    }
    let mut per: Vec<String> = BackendKind::ALL
        .iter()
        .map(|k| {
            let m = worst
                .iter()
                .filter(|w| w.0 == *k)
                .map(|w| w.1)
                .fold(0.0, f64::max);
            format!("{k} {m:.2}×")
        })
        .collect();
    per.sort();
    check(
        ok,
        format!(
            "largest jump within 5 s of the doorway, in median steps, over 5 seeds: {}",
            per.join(", ")
        ),
    )
}

fn c10_metrics() -> Outcome {
    let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
    let hand = s.mean == 2.0
        && s.median == 2.0
        && (s.rmse - (14.0f64 / 3.0).sqrt()).abs() < 1e-15
        && (s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15
        && s.max == 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_identity, mut cdf_ok) = (0.0f64, true);
    for _ in 0..1000 {
        let n = rng.random_range(1..500);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let s = summarize(&v).unwrap();
        let lhs = s.rmse * s.rmse;
        worst_identity = worst_identity.max((lhs - s.mean * s.mean - s.std * s.std).abs() / lhs);
        let series = ErrorSeries {
            samples: v.iter().map(|&e| (0.0, e)).collect(),
        };
        let c = cdf(&series, rng.random_range(1..200)).unwrap();
        cdf_ok &= c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        cdf_ok &= c.last().unwrap().1 == 1.0 && c.iter().all(|p| p.1 > 0.0 && p.1 <= 1.0);
    }
    check(
        hand && worst_identity < 1e-9 && cdf_ok,
        format!("[1,2,3] exact: {hand}; max relative |rmse²-mean²-std²| {worst_identity:.1e}; CDFs monotone ending at 1: {cdf_ok}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "pipeline exactness (noiseless oracle)",
            c1_noiseless_pipeline,
        ),
        ("trilateration oracle", c2_trilateration),
        ("ESKF numerical health", c3_eskf_health),
        ("FGO correctness", c4_fgo),
        ("PF statistical contracts", c5_pf),
        ("map constraint efficacy", c6_map_constraint),
        ("drift bounding", c7_drift),
        ("error-band sanity", c8_error_band),
        ("seamless continuity", c9_continuity),
        ("metrics self-consistency", c10_metrics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS #{:<2} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL #{:<2} {name}: {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
