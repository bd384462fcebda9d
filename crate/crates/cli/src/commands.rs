use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use esg_core::diagnostics::{
    energy_report, eps_gap_study, joint_convergence_study, tau_rate_study, RateFit, ScheduleRow,
};
use esg_core::dynamics::theory_bounds;
use esg_core::io::config::{load_config, render_config};
use esg_core::io::trajectory::{read_trajectory, write_trajectory};
use esg_core::{simulate, Error, MeasureSource, SimulationConfig, TheoryBounds};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, Common};

/// Where a measure came from, without its atoms.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceEcho {
    Ball { radius: f64, count: usize, seed: u64 },
    File { path: String, atoms: usize },
    Points { atoms: usize },
}

impl From<&MeasureSource> for SourceEcho {
    fn from(s: &MeasureSource) -> Self {
        match s {
            MeasureSource::Ball { spec, count, seed } => SourceEcho::Ball {
                radius: spec.radius,
                count: *count,
                seed: *seed,
            },
            MeasureSource::File { path, measure } => SourceEcho::File {
                path: path.clone(),
                atoms: measure.len(),
            },
            MeasureSource::Points(m) => SourceEcho::Points { atoms: m.len() },
        }
    }
}

/// Every resolved parameter of a run.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub dimension: usize,
    pub drift: Vec<f64>,
    pub epsilon: f64,
    pub tau: f64,
    pub horizon: f64,
    pub steps: usize,
    pub alpha0: SourceEcho,
    pub mu0: SourceEcho,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    pub warm_start: bool,
    pub snapshot_stride: usize,
}

impl ConfigEcho {
    pub fn new(c: &SimulationConfig) -> Result<Self> {
        Ok(Self {
            dimension: c.dim,
            drift: c.drift.entries().to_vec(),
            epsilon: c.epsilon,
            tau: c.tau,
            horizon: c.horizon,
            steps: c.steps()?,
            alpha0: (&c.alpha0).into(),
            mu0: (&c.mu0).into(),
            sinkhorn_tol: c.sinkhorn.tol,
            sinkhorn_max_iter: c.sinkhorn.max_iter,
            warm_start: c.warm_start,
            snapshot_stride: c.snapshot_stride,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub config: ConfigEcho,
    /// The effective configuration in `.cfg` syntax.
    pub config_text: String,
    pub theory_bounds: TheoryBounds,
    pub threads: usize,
    pub parallel_backend: bool,
    pub wall_clock_seconds: BTreeMap<&'static str, f64>,
    pub outputs: Vec<String>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = OsString::from(out.as_os_str());
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn reseed(src: &mut MeasureSource, seed: u64) {
    if let MeasureSource::Ball { seed: s, .. } = src {
        *s = seed;
    }
}

fn load(common: &Common) -> Result<SimulationConfig> {
    let mut cfg = load_config(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        reseed(&mut cfg.alpha0, seed);
        reseed(&mut cfg.mu0, seed.wrapping_add(1));
    }
    Ok(cfg)
}

fn write_records(path: &Path, records: &[Value]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn header(kind: &str, cfg: &SimulationConfig) -> Result<Value> {
    Ok(json!({
        "record": "header",
        "study": kind,
        "version": esg_core::VERSION,
        "config": ConfigEcho::new(cfg)?,
    }))
}

fn fit_summary(fit: &RateFit) -> Value {
    json!({
        "record": "fit",
        "slope": fit.slope,
        "half_width": fit.half_width,
        "degenerate_zero": fit.degenerate_zero,
    })
}

fn print_fit(fit: &RateFit) {
    match (fit.slope, fit.half_width) {
        _ if fit.degenerate_zero => println!("all errors are zero; no slope"),
        (Some(s), Some(h)) => println!("fitted slope {s:.4} +- {h:.4}"),
        (Some(s), None) => println!("fitted slope {s:.4}"),
        (None, _) => println!("too few positive errors to fit a slope"),
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Run(common) => run(common),
        Command::StudyTau { common, tau_grid } => study_tau(common, tau_grid),
        Command::StudyEps { common, eps_grid } => study_eps(common, eps_grid),
        Command::StudyJoint { common, schedule } => study_joint(common, schedule),
        Command::ReportEnergy { common, traj } => report_energy(common, traj.as_deref()),
    }
}

fn run(common: &Common) -> Result<()> {
    let mut clock = BTreeMap::new();
    let t = Instant::now();
    let cfg = load(common)?;
    let bounds = theory_bounds(&cfg)?;
    clock.insert("load", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let traj = simulate(&cfg)?;
    clock.insert("simulate", t.elapsed().as_secs_f64());
    log::info!("{} snapshots simulated", traj.snapshots.len());

    let t = Instant::now();
    write_trajectory(&traj, &common.out)?;
    clock.insert("write", t.elapsed().as_secs_f64());

    let mpath = manifest_path(&common.out);
    let manifest = RunManifest {
        version: esg_core::VERSION,
        config: ConfigEcho::new(&cfg)?,
        config_text: render_config(&cfg),
        theory_bounds: bounds,
        threads: common.threads,
        parallel_backend: esg_core::par::is_parallel(),
        wall_clock_seconds: clock,
        outputs: vec![common.out.display().to_string(), mpath.display().to_string()],
    };
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(Error::from)?;
    println!(
        "wrote {} ({} snapshots) and {}",
        common.out.display(),
        traj.snapshots.len(),
        mpath.display()
    );
    Ok(())
}

fn study_tau(common: &Common, grid: &[f64]) -> Result<()> {
    let cfg = load(common)?;
    let fit = tau_rate_study(&cfg, grid)?;
    let mut records = vec![header("tau", &cfg)?];
    println!("{:>12}  {:>22}", "tau", "sup_t W2 to reference");
    for (tau, err) in fit.grid.iter().zip(&fit.errors) {
        println!("{tau:>12.6e}  {err:>22.6e}");
        records.push(json!({ "record": "point", "tau": tau, "error": err }));
    }
    println!("reference tau {:.6e}", grid.last().copied().unwrap_or(f64::NAN));
    print_fit(&fit);
    records.push(fit_summary(&fit));
    write_records(&common.out, &records)
}

fn study_eps(common: &Common, grid: &[f64]) -> Result<()> {
    let cfg = load(common)?;
    let alpha = cfg.alpha0.resolve()?;
    let mu = cfg.mu0.resolve()?;
    let rep = eps_gap_study(&alpha, &mu, grid, cfg.sinkhorn)?;
    let mut records = vec![header("eps", &cfg)?];
    println!("W2^2 = {:.12e}", rep.w2_squared);
    println!("{:>12}  {:>18}  {:>18}", "eps", "transport gap", "OT_eps - W2^2/2");
    for ((eps, tg), vg) in rep.epsilons.iter().zip(&rep.transport_gap).zip(&rep.value_gap) {
        println!("{eps:>12.6e}  {tg:>18.6e}  {vg:>18.6e}");
        records.push(json!({
            "record": "point", "epsilon": eps, "transport_gap": tg, "value_gap": vg,
        }));
    }
    println!(
        "transport gap positive: {}, strictly decreasing: {}",
        rep.positive, rep.strictly_decreasing
    );
    if let Some(fit) = &rep.fit {
        print!("value gap vs eps|log eps|: ");
        print_fit(fit);
    }
    records.push(json!({
        "record": "summary",
        "w2_squared": rep.w2_squared,
        "positive": rep.positive,
        "strictly_decreasing": rep.strictly_decreasing,
        "value_gap_fit": rep.fit.as_ref().map(fit_summary),
    }));
    write_records(&common.out, &records)
}

/// Parses `epsilon tau count seed` rows; `#` starts a comment.
pub fn parse_schedule(text: &str) -> esg_core::Result<Vec<ScheduleRow>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad(format!("expected `epsilon tau count seed`, got {} fields", f.len())));
        }
        rows.push(ScheduleRow {
            epsilon: f[0].parse().map_err(|_| bad(format!("bad epsilon `{}`", f[0])))?,
            tau: f[1].parse().map_err(|_| bad(format!("bad tau `{}`", f[1])))?,
            count: f[2].parse().map_err(|_| bad(format!("bad count `{}`", f[2])))?,
            seed: f[3].parse().map_err(|_| bad(format!("bad seed `{}`", f[3])))?,
        });
    }
    Ok(rows)
}

fn study_joint(common: &Common, schedule: &Path) -> Result<()> {
    let cfg = load(common)?;
    let text = std::fs::read_to_string(schedule)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", schedule.display()))?;
    let mut rows = parse_schedule(&text)?;
    if let Some(seed) = common.seed {
        rows.iter_mut().for_each(|r| r.seed = seed);
    }
    let rep = joint_convergence_study(&cfg, &rows)?;
    let mut records = vec![header("joint", &cfg)?];
    println!("{:>4}  {:>10}  {:>10}  {:>6}  {:>6}  {:>14}", "i", "eps", "tau", "M", "seed", "d_i");
    for (i, row) in rep.schedule.iter().enumerate() {
        let d = rep.distances.get(i);
        let shown = d.map_or(String::from("-"), |d| format!("{d:.6e}"));
        println!(
            "{i:>4}  {:>10.4e}  {:>10.4e}  {:>6}  {:>6}  {shown:>14}",
            row.epsilon, row.tau, row.count, row.seed
        );
        records.push(json!({ "record": "row", "index": i, "row": row, "distance_to_next": d }));
    }
    if rep.approximate {
        println!("note: some distances use the debiased entropic surrogate (exact OT too large)");
    }
    println!("distances strictly decreasing: {}", rep.strictly_decreasing);
    records.push(json!({
        "record": "summary",
        "distances": rep.distances,
        "strictly_decreasing": rep.strictly_decreasing,
        "approximate": rep.approximate,
    }));
    write_records(&common.out, &records)
}

fn report_energy(common: &Common, traj_path: Option<&Path>) -> Result<()> {
    let cfg = load(common)?;
    let traj = match traj_path {
        Some(p) => read_trajectory(p).with_context(|| format!("reading {}", p.display()))?,
        None => simulate(&cfg)?,
    };
    let mu0 = cfg.mu0.resolve()?;
    let rep = energy_report(&traj, &mu0, cfg.epsilon, cfg.sinkhorn)?;
    let mut records = vec![header("energy", &cfg)?];
    println!("{:>12}  {:>20}  {:>20}  {:>20}", "t", "E_eps", "OT_eps", "potential");
    for i in 0..rep.times.len() {
        println!(
            "{:>12.6e}  {:>20.12e}  {:>20.12e}  {:>20.12e}",
            rep.times[i], rep.total[i], rep.kinetic[i], rep.potential[i]
        );
        records.push(json!({
            "record": "point",
            "time": rep.times[i],
            "total": rep.total[i],
            "kinetic": rep.kinetic[i],
            "potential": rep.potential[i],
        }));
    }
    println!("max |E(t) - E(0)| = {:.6e}", rep.max_drift);
    records.push(json!({ "record": "summary", "max_drift": rep.max_drift }));
    write_records(&common.out, &records)
}
