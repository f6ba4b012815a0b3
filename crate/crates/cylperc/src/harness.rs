// Configuration, seeded parallel replica execution, experiment recipes, and
// CSV/JSON outputs behind the `cylperc` binary.
//
// Everything here is a pure function of (config, master seed): replicas get
// seeds derived from (master, index) via `replica_seed` and results are
// collected by index, so the outputs (minus wall times) do not depend on the
// thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::extreal::Ext;
use crate::geom::{dist_point_line, Cylinder, Line3, P2, P3};
use crate::lemma::{self, Polyline, TubeInstance};
use crate::lines::{covariance_estimate, point_vacant, sample_poisson, Window};
use crate::renorm::{self, CoveringSet, EstimateWithCI, ScaleSequence};
use crate::surface::{self, Surface};
use crate::{replica_seed, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXPERIMENTS: [&str; 16] = [
    "vacancy",
    "cov",
    "crossing_H",
    "crossing_plane",
    "circuit",
    "pn",
    "qn",
    "recursion",
    "induction",
    "tail",
    "lemma_tube",
    "lemma_core",
    "lemma_horizon",
    "lemma_blocking",
    "covering",
    "contrast",
];

// ---------------------------------------------------------------------------
// Configuration.

/// Run parameters, parsed from `key = value` lines with `#` comments.
/// Unknown keys are rejected. Every experiment reads only the fields it
/// needs; the rest keep their defaults.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub u: f64,
    pub a0: f64,
    pub n: u32,
    /// Raster cell size for crossing/circuit grids.
    pub h: f64,
    pub reps: usize,
    pub seed: u64,
    /// Outer annulus radius for crossing experiments (inner = r_in).
    pub window_radius: f64,
    pub pair_family: String,
    /// Probe points "x,y;x,y;..."; default: center + 6 points at radius 500.
    pub x_points: Option<Vec<(f64, f64)>>,
    pub out_dir: Option<PathBuf>,
    pub threads: usize,
    pub desk_mode: bool,
    pub c_p: f64,
    pub c_q: f64,
    /// Override for the absorbed scale floor; default 288^6 v (8(c_p v c_q))^168.
    pub a0_hat: Option<f64>,
    pub k0: u32,
    pub n_max: u32,
    pub r_in: f64,
    /// Point separations for the covariance experiment.
    pub distances: Vec<f64>,
    pub covering_index: u32,
    /// Optional tube-instance corpus file; otherwise instances are generated.
    pub corpus: Option<PathBuf>,
    pub padding: f64,
    pub directions: usize,
    pub offsets: usize,
    pub jitter: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            u: 0.2,
            a0: 8000.0,
            n: 0,
            h: 0.5,
            reps: 1000,
            seed: 1,
            window_radius: 100.0,
            pair_family: "edge_hugging".into(),
            x_points: None,
            out_dir: None,
            threads: 1,
            desk_mode: true,
            c_p: 1.0,
            c_q: 1.0,
            a0_hat: None,
            k0: 1,
            n_max: 20,
            r_in: 50.0,
            distances: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            covering_index: 1,
            corpus: None,
            padding: 20.0,
            directions: 720,
            offsets: 400,
            jitter: 1.0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got '{line}'", k + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| Error::Config(format!("{key} = '{v}': {e}")))
        }
        match key {
            "u" => self.u = num(key, value)?,
            "a0" => self.a0 = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "h" => self.h = num(key, value)?,
            "reps" => self.reps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "window_radius" => self.window_radius = num(key, value)?,
            "pair_family" => self.pair_family = value.to_string(),
            "x_points" => self.x_points = Some(parse_points(value)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "threads" => self.threads = num(key, value)?,
            "desk_mode" => self.desk_mode = num(key, value)?,
            "c_p" => self.c_p = num(key, value)?,
            "c_q" => self.c_q = num(key, value)?,
            "a0_hat" => self.a0_hat = Some(num(key, value)?),
            "k0" => self.k0 = num(key, value)?,
            "n_max" => self.n_max = num(key, value)?,
            "r_in" => self.r_in = num(key, value)?,
            "distances" => {
                self.distances = value
                    .split(',')
                    .map(|t| num("distances", t.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            "covering_index" => self.covering_index = num(key, value)?,
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "padding" => self.padding = num(key, value)?,
            "directions" => self.directions = num(key, value)?,
            "offsets" => self.offsets = num(key, value)?,
            "jitter" => self.jitter = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 7] = [
            ("a0", self.a0),
            ("h", self.h),
            ("window_radius", self.window_radius),
            ("r_in", self.r_in),
            ("padding", self.padding),
            ("c_p", self.c_p),
            ("c_q", self.c_q),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.u < 0.0 || !self.u.is_finite() {
            return Err(Error::Config(format!("u must be >= 0, got {}", self.u)));
        }
        if self.reps == 0 || self.threads == 0 {
            return Err(Error::Config("reps and threads must be >= 1".into()));
        }
        if self.k0 == 0 {
            return Err(Error::Config("k0 must be >= 1".into()));
        }
        if self.jitter < 0.0 {
            return Err(Error::Config(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        if self.distances.is_empty() || self.distances.iter().any(|&d| d <= 0.0) {
            return Err(Error::Config("distances must be a non-empty positive list".into()));
        }
        if let Some(v) = self.a0_hat {
            if !(v > 1.0 && v.is_finite()) {
                return Err(Error::Config(format!("a0_hat must exceed 1, got {v}")));
            }
        }
        if let Some(pts) = &self.x_points {
            if pts.is_empty() {
                return Err(Error::Config("x_points must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn probe_points(&self) -> Vec<P2> {
        match &self.x_points {
            Some(v) => v.iter().map(|&(x, y)| P2::new(x, y)).collect(),
            None => renorm::default_x_points(),
        }
    }

    pub fn scale_sequence(&self) -> Result<ScaleSequence> {
        ScaleSequence::new(self.a0, self.desk_mode)
    }

    pub fn a0_hat_ext(&self) -> Ext {
        match self.a0_hat {
            Some(v) => Ext::from_f64(v),
            None => renorm::a0_hat_for(self.c_p, self.c_q),
        }
    }
}

fn parse_points(v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(';')
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("x_points entry '{pair}': expected x,y")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("x_points entry '{pair}': {e}")))
            };
            Ok((parse(x)?, parse(y)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Records and output.

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    /// JSON object with the experiment-specific parameters of this row.
    pub param_json: String,
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
    pub wall_time: f64,
    pub schema_version: u32,
}

fn record(
    experiment: &str,
    params: serde_json::Value,
    estimate: f64,
    stderr: f64,
    replicas: usize,
    seed: u64,
    t0: Instant,
) -> ResultRecord {
    ResultRecord {
        experiment: experiment.to_string(),
        param_json: params.to_string(),
        estimate,
        stderr,
        replicas,
        seed,
        wall_time: t0.elapsed().as_secs_f64(),
        schema_version: SCHEMA_VERSION,
    }
}

pub const CSV_COLUMNS: [&str; 8] = [
    "experiment",
    "param_json",
    "estimate",
    "stderr",
    "replicas",
    "seed",
    "wall_time",
    "schema_version",
];

pub fn build_id() -> String {
    option_env!("CYLPERC_BUILD_ID")
        .map(str::to_string)
        .unwrap_or_else(|| format!("cylperc-v{}", env!("CARGO_PKG_VERSION")))
}

pub fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    name: &str,
    records: &[ResultRecord],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    w.write_record(CSV_COLUMNS).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in records {
        w.write_record([
            r.experiment.as_str(),
            r.param_json.as_str(),
            &format!("{}", r.estimate),
            &format!("{}", r.stderr),
            &format!("{}", r.replicas),
            &format!("{}", r.seed),
            &format!("{}", r.wall_time),
            &format!("{}", r.schema_version),
        ])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "records": records,
        "build_id": build_id(),
    });
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(std::io::Error::other(e)))?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Replica fan-out.

/// Runs `f(0..reps)` on a pool of `cfg.threads` workers and collects the
/// results by index, so the outcome is independent of scheduling.
fn parallel_replicas<T: Send>(
    cfg: &RunConfig,
    reps: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..reps).into_par_iter().map(&f).collect())
}

fn binomial_record(
    experiment: &str,
    params: serde_json::Value,
    outcomes: &[bool],
    seed: u64,
    t0: Instant,
) -> ResultRecord {
    let succ = outcomes.iter().filter(|&&b| b).count();
    let e = EstimateWithCI::binomial(succ, outcomes.len(), seed);
    record(experiment, params, e.mean, e.stderr, e.replicas, seed, t0)
}

// ---------------------------------------------------------------------------
// Experiments.

pub fn run_experiment(cfg: &RunConfig, name: &str) -> Result<Vec<ResultRecord>> {
    let records = match name {
        "vacancy" => vacancy_experiment(cfg),
        "cov" => cov_experiment(cfg),
        "crossing_H" | "crossing_plane" | "circuit" => ring_experiment(cfg, name),
        "pn" => pn_experiment(cfg, false),
        "qn" => pn_experiment(cfg, true),
        "recursion" => recursion_experiment(cfg),
        "induction" => induction_experiment(cfg),
        "tail" => tail_experiment(cfg),
        "lemma_tube" => lemma_tube_experiment(cfg),
        "lemma_core" => lemma_core_experiment(cfg),
        "lemma_horizon" => lemma_horizon_experiment(cfg),
        "lemma_blocking" => lemma_blocking_experiment(cfg),
        "covering" => covering_experiment(cfg),
        "contrast" => contrast_experiment(cfg),
        other => Err(Error::UnknownExperiment(other.to_string())),
    }?;
    if let Some(dir) = cfg.out_dir.clone() {
        write_outputs(&dir, cfg, name, &records)?;
    }
    Ok(records)
}

fn vacancy_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let p = P3::zeros();
    let w = Window::point(p);
    let outcomes = parallel_replicas(cfg, cfg.reps, |i| {
        let s = sample_poisson(cfg.u, &w, replica_seed(cfg.seed, i as u64))?;
        point_vacant(&s, p)
    })?;
    Ok(vec![binomial_record("vacancy", json!({ "u": cfg.u }), &outcomes, cfg.seed, t0)])
}

fn cov_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (k, &d) in cfg.distances.iter().enumerate() {
        let t0 = Instant::now();
        let est = covariance_estimate(
            P3::zeros(),
            P3::new(d, 0.0, 0.0),
            cfg.u,
            cfg.reps,
            replica_seed(cfg.seed, k as u64),
        )?;
        out.push(record(
            "cov",
            json!({ "d": d, "kind": "mc", "u": cfg.u }),
            est.mc,
            est.mc_stderr,
            est.replicas,
            cfg.seed,
            t0,
        ));
        out.push(record(
            "cov",
            json!({ "d": d, "kind": "semi", "u": cfg.u }),
            est.semi_analytic,
            est.semi_analytic_stderr,
            est.replicas,
            cfg.seed,
            t0,
        ));
    }
    Ok(out)
}

fn ring_experiment(cfg: &RunConfig, name: &str) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let x0 = P2::zeros();
    let (r_in, r_out, h) = (cfg.r_in, cfg.window_radius, cfg.h);
    let w = Window::disk_slab(x0, r_out);
    let outcomes = parallel_replicas(cfg, cfg.reps, |i| {
        let s = sample_poisson(cfg.u, &w, replica_seed(cfg.seed, i as u64))?;
        match name {
            "crossing_H" => surface::vacant_crossing(&s, x0, r_in, r_out, h),
            "crossing_plane" => surface::plane_vacant_crossing(&s, x0, r_in, r_out, h),
            // The circuit is detected by the winding scan, independently of
            // the crossing search; complementarity is asserted per replica.
            _ => {
                let mask = surface::rasterize_dense(&s, &Surface::h_default(), x0, r_out, h)?;
                let circuit = surface::obstacle_circuit_mask(&mask, x0, r_in, r_out);
                let crossing = surface::vacant_crossing_mask(&mask, x0, r_in, r_out);
                if circuit == crossing {
                    return Err(Error::Geometry(format!(
                        "duality violated on replica {i}: circuit = crossing = {circuit}"
                    )));
                }
                Ok(circuit)
            }
        }
    })?;
    let params = json!({ "u": cfg.u, "r_in": r_in, "r_out": r_out, "h": h });
    Ok(vec![binomial_record(name, params, &outcomes, cfg.seed, t0)])
}

fn pn_experiment(cfg: &RunConfig, with_pairs: bool) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let seq = cfg.scale_sequence()?;
    let pts = cfg.probe_points();
    let (name, est) = if with_pairs {
        let e = renorm::estimate_qn(&seq, cfg.n, cfg.u, &cfg.pair_family, &pts, cfg.reps, cfg.seed)?;
        ("qn", e)
    } else {
        ("pn", renorm::estimate_pn(&seq, cfg.n, cfg.u, &pts, cfg.reps, cfg.seed)?)
    };
    let mut params = json!({ "u": cfg.u, "a0": cfg.a0, "n": cfg.n, "x_points": pts.len() });
    if with_pairs {
        params["pair_family"] = json!(cfg.pair_family);
    }
    Ok(vec![record(name, params, est.mean, est.stderr, est.replicas, cfg.seed, t0)])
}

fn recursion_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let a0 = cfg.a0_hat_ext();
    let (mut p, mut q) = renorm::induction_thresholds(&a0, 0);
    let mut out = Vec::new();
    for n in 1..=cfg.n_max {
        let t0 = Instant::now();
        let (pb, qb) = renorm::recursion_rhs(&p, &q, &a0, n, cfg.c_p, cfg.c_q)?;
        let (tp, tq) = renorm::induction_thresholds(&a0, n);
        let p_ratio = pb.div(&tp).to_f64();
        let q_ratio = qb.div(&tq).to_f64();
        let contracts = pb <= tp && qb <= tq;
        out.push(record(
            "recursion",
            json!({ "n": n, "p_ratio": p_ratio, "q_ratio": q_ratio, "contracts": contracts,
                    "c_p": cfg.c_p, "c_q": cfg.c_q }),
            p_ratio.max(q_ratio),
            0.0,
            1,
            cfg.seed,
            t0,
        ));
        p = pb;
        q = qb;
    }
    Ok(out)
}

fn induction_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let a0_hat = cfg.a0_hat_ext();
    let ok = renorm::check_induction_step(&a0_hat, cfg.c_p, cfg.c_q);
    Ok(vec![record(
        "induction",
        json!({ "c_p": cfg.c_p, "c_q": cfg.c_q, "log10_a0_hat": a0_hat.log10().to_f64() }),
        ok as u8 as f64,
        0.0,
        1,
        cfg.seed,
        t0,
    )])
}

fn tail_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let a0_hat = cfg.a0_hat_ext();
    let value = renorm::tail_bound(&a0_hat, cfg.k0)?;
    Ok(vec![record(
        "tail",
        json!({ "k0": cfg.k0, "log10_a0_hat": a0_hat.log10().to_f64() }),
        value,
        0.0,
        1,
        cfg.seed,
        t0,
    )])
}

/// Exact max distance of eta([t1,t2]) to the axis: the distance along each
/// straight piece is convex, so it peaks at the cut parameters or at interior
/// vertices (checkpoints are a superset of the vertex parameters).
fn max_dist_to_axis(eta: &Polyline, t1: f64, t2: f64, axis: &Line3) -> f64 {
    let mut m = dist_point_line(eta.at(t1), axis).max(dist_point_line(eta.at(t2), axis));
    for t in eta.checkpoints() {
        if t > t1 && t < t2 {
            m = m.max(dist_point_line(eta.at(t), axis));
        }
    }
    m
}

fn lemma_tube_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let instances: Vec<TubeInstance> = match &cfg.corpus {
        Some(path) => lemma::parse_corpus(&std::fs::read_to_string(path)?)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..cfg.reps).map(|_| lemma::random_tube_instance(cfg.a0, &mut rng)).collect()
        }
    };
    let count = instances.len();
    let ok = parallel_replicas(cfg, count, |i| {
        let inst = &instances[i];
        let (axis, t1, t2) = lemma::tube_from_two_cylinders(&inst.c1, &inst.c2, &inst.eta, cfg.a0)?;
        let sep = (inst.eta.at(t2) - inst.eta.at(t1)).norm();
        Ok(sep >= cfg.a0 / 100.0 && max_dist_to_axis(&inst.eta, t1, t2, &axis) <= 4.0 + 1e-6)
    })?;
    Ok(vec![binomial_record(
        "lemma_tube",
        json!({ "a0": cfg.a0, "source": cfg.corpus.as_ref().map_or("random", |_| "corpus") }),
        &ok,
        cfg.seed,
        t0,
    )])
}

fn lemma_core_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(Cylinder, Cylinder)> =
        (0..cfg.reps).map(|_| lemma::random_intersecting_pair(&mut rng)).collect();
    let ok = parallel_replicas(cfg, pairs.len(), |i| {
        let (c1, c2) = &pairs[i];
        let core = lemma::core_segment(c1, c2)?;
        let hs = lemma::hausdorff_segments((core.x1, core.y1), (core.x2, core.y2));
        let he = lemma::hausdorff_points(&[core.x1, core.y1], &[core.x2, core.y2]);
        Ok(hs <= 2.0 + 1e-6 && he <= 2.0 * std::f64::consts::SQRT_2 + 1e-6)
    })?;
    Ok(vec![binomial_record("lemma_core", json!({}), &ok, cfg.seed, t0)])
}

fn lemma_horizon_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let scan = lemma::horizon_scan(cfg.padding, cfg.directions, cfg.offsets)?;
    Ok(vec![record(
        "lemma_horizon",
        json!({ "padding": cfg.padding, "directions": cfg.directions, "offsets": cfg.offsets,
                "unbounded": scan.unbounded, "argmax_angle": scan.argmax.0,
                "argmax_x": scan.argmax.1.x, "argmax_y": scan.argmax.1.y }),
        scan.max_len,
        0.0,
        cfg.directions * cfg.offsets,
        cfg.seed,
        t0,
    )])
}

fn lemma_blocking_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let seq = cfg.scale_sequence()?;
    let x0 = P2::zeros();
    let pairs = renorm::adversarial_pairs(&seq, cfg.n, x0, cfg.reps, cfg.jitter, cfg.seed)?;
    let ok = parallel_replicas(cfg, pairs.len(), |i| {
        let (l1, l2) = pairs[i];
        lemma::blocking_check(&Cylinder::unit(l1), &Cylinder::unit(l2), x0, cfg.a0, cfg.h)
    })?;
    Ok(vec![binomial_record(
        "lemma_blocking",
        json!({ "a0": cfg.a0, "n": cfg.n, "jitter": cfg.jitter, "h": cfg.h }),
        &ok,
        cfg.seed,
        t0,
    )])
}

/// Uniform point of the swept-circle set: a uniform point y of the central
/// hexagon pushed out by the sweep radius in a uniform direction.
fn random_sweep_point(hull: &[P2; 6], radius: f64, rng: &mut impl Rng) -> P2 {
    let k = rng.gen_range(0..6usize);
    let (a, b) = (hull[k], hull[(k + 1) % 6]);
    // Uniform in the triangle (origin, a, b); the six triangles tile the face.
    let (r1, r2): (f64, f64) = (rng.gen::<f64>().sqrt(), rng.gen());
    let y = a * (r1 * (1.0 - r2)) + b * (r1 * r2);
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    y + P2::new(radius * th.cos(), radius * th.sin())
}

/// Some covering ball of radius `spacing` contains x; only the 3x3 lattice
/// neighborhood of the rounding cell can qualify.
fn covered_by(cov: &CoveringSet, x: P2) -> bool {
    let (i0, j0) = cov.nearest_lattice(x);
    for di in -1..=1i64 {
        for dj in -1..=1i64 {
            let ij = (i0 + di, j0 + dj);
            if cov.contains_lattice(ij) {
                let p = P2::new(ij.0 as f64 * cov.spacing, ij.1 as f64 * cov.spacing);
                if (x - p).norm() <= cov.spacing + 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}

fn covering_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let t0 = Instant::now();
    let seq = cfg.scale_sequence()?;
    let n = cfg.n.max(1);
    let i = cfg.covering_index;
    let cov = renorm::build_covering(&seq, n, i)?;
    let hull = renorm::central_hexagon();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut covered = 0usize;
    for _ in 0..cfg.reps {
        if covered_by(&cov, random_sweep_point(&hull, cov.radius, &mut rng)) {
            covered += 1;
        }
    }
    let e = EstimateWithCI::binomial(covered, cfg.reps, cfg.seed);
    let normalized = cov.points.len() as f64 * seq.scale(n - 1)? / seq.scale(n)?;
    Ok(vec![
        record(
            "covering",
            json!({ "a0": cfg.a0, "n": n, "i": i, "kind": "soundness" }),
            e.mean,
            e.stderr,
            e.replicas,
            cfg.seed,
            t0,
        ),
        record(
            "covering",
            json!({ "a0": cfg.a0, "n": n, "i": i, "kind": "cardinality",
                    "points": cov.points.len() }),
            normalized,
            0.0,
            1,
            cfg.seed,
            t0,
        ),
    ])
}

/// Paired-seed vacant crossing probabilities on the plane z = 0 and on H at
/// radii {r, 2r, 4r}: per radius, records the two estimates and the paired
/// difference (H minus plane) with its empirical standard error.
pub fn contrast_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    if cfg.window_radius > 500.0 {
        return Err(Error::Config(format!(
            "window_radius must be <= 500, got {}",
            cfg.window_radius
        )));
    }
    let x0 = P2::zeros();
    let r_in = cfg.r_in;
    let mut out = Vec::new();
    for (k, mult) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let t0 = Instant::now();
        let radius = mult * cfg.window_radius;
        let w = Window::disk_slab(x0, radius);
        let pairs: Vec<(bool, bool)> = parallel_replicas(cfg, cfg.reps, |i| {
            // One realization shared by both surfaces: the comparison is paired.
            let s = sample_poisson(cfg.u, &w, replica_seed(cfg.seed, (k * cfg.reps + i) as u64))?;
            let on_h = surface::vacant_crossing(&s, x0, r_in, radius, cfg.h)?;
            let on_plane = surface::plane_vacant_crossing(&s, x0, r_in, radius, cfg.h)?;
            Ok((on_h, on_plane))
        })?;
        let n = pairs.len() as f64;
        let h_hits = pairs.iter().filter(|p| p.0).count();
        let p_hits = pairs.iter().filter(|p| p.1).count();
        let eh = EstimateWithCI::binomial(h_hits, pairs.len(), cfg.seed);
        let ep = EstimateWithCI::binomial(p_hits, pairs.len(), cfg.seed);
        let diffs: Vec<f64> =
            pairs.iter().map(|&(a, b)| a as u8 as f64 - b as u8 as f64).collect();
        let dm = diffs.iter().sum::<f64>() / n;
        let dv = diffs.iter().map(|d| (d - dm) * (d - dm)).sum::<f64>() / n;
        let dse = (dv / n).sqrt();
        let base = json!({ "u": cfg.u, "radius": radius, "r_in": r_in, "h": cfg.h });
        let with_kind = |kind: &str| {
            let mut p = base.clone();
            p["surface"] = json!(kind);
            p
        };
        out.push(record("contrast", with_kind("H"), eh.mean, eh.stderr, eh.replicas, cfg.seed, t0));
        out.push(record(
            "contrast",
            with_kind("plane"),
            ep.mean,
            ep.stderr,
            ep.replicas,
            cfg.seed,
            t0,
        ));
        out.push(record("contrast", with_kind("diff"), dm, dse, pairs.len(), cfg.seed, t0));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CLI.

fn usage() -> String {
    format!(
        "usage: cylperc <experiment> [--config FILE] [--seed N] [--out DIR] [--threads K]\n\
         experiments: {}",
        EXPERIMENTS.join(", ")
    )
}

fn run_cli(args: &[String]) -> Result<()> {
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        return Err(Error::Config(usage()));
    }
    let name = args[0].clone();
    if !EXPERIMENTS.contains(&name.as_str()) {
        return Err(Error::UnknownExperiment(name));
    }
    let mut config_path: Option<PathBuf> = None;
    let mut seed_override: Option<u64> = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut threads: Option<usize> = None;
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = || {
            it.next().ok_or_else(|| Error::Config(format!("{flag} needs a value\n{}", usage())))
        };
        match flag.as_str() {
            "--config" => config_path = Some(PathBuf::from(value()?)),
            "--seed" => {
                let v = value()?;
                seed_override =
                    Some(v.parse().map_err(|e| Error::Config(format!("--seed {v}: {e}")))?)
            }
            "--out" => out_dir = Some(PathBuf::from(value()?)),
            "--threads" => {
                let v = value()?;
                threads =
                    Some(v.parse().map_err(|e| Error::Config(format!("--threads {v}: {e}")))?)
            }
            other => return Err(Error::Config(format!("unknown flag '{other}'\n{}", usage()))),
        }
    }
    let mut cfg = match config_path {
        Some(p) => RunConfig::parse(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    // Seed precedence: config < CYLPERC_SEED < --seed.
    if let Ok(v) = std::env::var("CYLPERC_SEED") {
        cfg.seed = v.parse().map_err(|e| Error::Config(format!("CYLPERC_SEED = '{v}': {e}")))?;
    }
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    if let Some(o) = out_dir {
        cfg.out_dir = Some(o);
    }
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        cfg.threads = t;
    }
    let records = run_experiment(&cfg, &name)?;
    if let Some(dir) = cfg.out_dir.clone() {
        write_outputs(&dir, &cfg, &name, &records)?;
    }
    for r in &records {
        println!(
            "{} {} estimate={:.6e} stderr={:.6e} replicas={} seed={}",
            r.experiment, r.param_json, r.estimate, r.stderr, r.replicas, r.seed
        );
    }
    Ok(())
}

/// Binary entry point; returns the process exit code
/// (0 success, 2 config error, 3 resource limit).
pub fn cli_main() -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run_cli(&args) {
        Ok(()) => 0,
        Err(Error::Resource(m)) => {
            eprintln!("resource limit: {m}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
