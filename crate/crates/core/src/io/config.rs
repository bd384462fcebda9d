//! `.cfg` parsing: flat `key = value` lines, `#` starts a comment.
//!
//! ```text
//! dimension = 3
//! drift = J                 # or a row-major comma list of d*d numbers
//! epsilon = 0.5
//! tau = 0.01
//! horizon = 1
//! alpha0.ball_radius = 1
//! alpha0.count = 50
//! alpha0.seed = 7
//! mu0.file = mu0.txt        # d coordinates then a weight per line
//! sinkhorn.tol = 1e-9
//! sinkhorn.max_iter = 50000
//! warm_start = true
//! snapshot_stride = 1
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::dynamics::{make_j, DriftMatrix, MeasureSource, SimulationConfig};
use crate::entropic_ot::SinkhornOptions;
use crate::error::{Error, Result};
use crate::measures::{BallSpec, DiscreteMeasure};

const MEASURE_KEYS: [&str; 4] = ["file", "ball_radius", "count", "seed"];
const TOP_KEYS: [&str; 9] = [
    "dimension",
    "drift",
    "epsilon",
    "tau",
    "horizon",
    "sinkhorn.tol",
    "sinkhorn.max_iter",
    "warm_start",
    "snapshot_stride",
];

/// Default seeds when a ball spec omits `seed`.
pub const DEFAULT_ALPHA_SEED: u64 = 0;
pub const DEFAULT_MU_SEED: u64 = 1;

fn is_known(key: &str) -> bool {
    if TOP_KEYS.contains(&key) {
        return true;
    }
    match key.split_once('.') {
        Some((prefix, rest)) => {
            (prefix == "alpha0" || prefix == "mu0") && MEASURE_KEYS.contains(&rest)
        }
        None => false,
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn validation(field: &str, constraint: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        constraint: constraint.into(),
    }
}

fn parse_num<T: std::str::FromStr>(entries: &BTreeMap<String, Entry>, key: &str) -> Result<Option<T>> {
    match entries.get(key) {
        None => Ok(None),
        Some(e) => e.value.parse::<T>().map(Some).map_err(|_| Error::Parse {
            line: e.line,
            message: format!("`{key}`: cannot parse `{}`", e.value),
        }),
    }
}

fn require<T: std::str::FromStr>(entries: &BTreeMap<String, Entry>, key: &str) -> Result<T> {
    parse_num(entries, key)?.ok_or_else(|| validation(key, "required key is missing"))
}

/// Parses a measure file: one atom per line, `d` coordinates followed by a
/// weight, separated by whitespace or commas.
pub fn parse_measure(text: &str, dim: usize) -> Result<DiscreteMeasure> {
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("bad number: {e}"),
            })?;
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        coords.extend_from_slice(&fields[..dim]);
        weights.push(fields[dim]);
    }
    DiscreteMeasure::from_flat(dim, coords, weights)
}

fn parse_drift(value: &str, dim: usize, line: usize) -> Result<DriftMatrix> {
    if value == "J" {
        if dim != 3 {
            return Err(validation("drift", "\"J\" requires dimension = 3"));
        }
        return Ok(make_j());
    }
    let entries: Vec<f64> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line,
            message: format!("drift: {e}"),
        })?;
    if entries.len() != dim * dim {
        return Err(validation(
            "drift",
            format!("expected {} entries, found {}", dim * dim, entries.len()),
        ));
    }
    DriftMatrix::new(dim, entries).map_err(|e| validation("drift", e.to_string()))
}

fn measure_source(
    entries: &BTreeMap<String, Entry>,
    prefix: &str,
    dim: usize,
    base_dir: &Path,
    default_seed: u64,
) -> Result<MeasureSource> {
    let key = |k: &str| format!("{prefix}.{k}");
    let has_ball = ["ball_radius", "count", "seed"]
        .iter()
        .any(|k| entries.contains_key(&key(k)));
    match entries.get(&key("file")) {
        Some(_) if has_ball => Err(validation(
            prefix,
            "give either `file` or `ball_radius`/`count`/`seed`, not both",
        )),
        Some(e) => {
            let path = base_dir.join(&e.value);
            let text = std::fs::read_to_string(&path)?;
            let measure = parse_measure(&text, dim)
                .map_err(|err| validation(&key("file"), format!("{}: {err}", path.display())))?;
            Ok(MeasureSource::File {
                path: e.value.clone(),
                measure,
            })
        }
        None => {
            let radius: f64 = require(entries, &key("ball_radius"))?;
            let count: usize = require(entries, &key("count"))?;
            let seed: u64 = parse_num(entries, &key("seed"))?.unwrap_or(default_seed);
            if count == 0 {
                return Err(validation(&key("count"), "must be >= 1"));
            }
            let spec = BallSpec::new(radius, dim)
                .map_err(|_| validation(&key("ball_radius"), "must be positive"))?;
            Ok(MeasureSource::Ball { spec, count, seed })
        }
    }
}

/// Parses config text. Relative measure-file paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<SimulationConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !is_known(k) {
            return Err(Error::UnknownKey(k.to_string()));
        }
        if entries.contains_key(k) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{k}`"),
            });
        }
        entries.insert(
            k.to_string(),
            Entry {
                line: line_no,
                value: v.to_string(),
            },
        );
    }

    let dim: usize = require(&entries, "dimension")?;
    if dim == 0 {
        return Err(validation("dimension", "must be >= 1"));
    }
    let drift_entry = entries
        .get("drift")
        .ok_or_else(|| validation("drift", "required key is missing"))?;
    let drift = parse_drift(&drift_entry.value, dim, drift_entry.line)?;
    let defaults = SinkhornOptions::default();
    let warm_start = match entries.get("warm_start") {
        None => true,
        Some(e) => match e.value.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    line: e.line,
                    message: format!("warm_start: expected true/false, got `{other}`"),
                })
            }
        },
    };
    let config = SimulationConfig {
        dim,
        drift,
        epsilon: require(&entries, "epsilon")?,
        tau: require(&entries, "tau")?,
        horizon: require(&entries, "horizon")?,
        alpha0: measure_source(&entries, "alpha0", dim, base_dir, DEFAULT_ALPHA_SEED)?,
        mu0: measure_source(&entries, "mu0", dim, base_dir, DEFAULT_MU_SEED)?,
        sinkhorn: SinkhornOptions {
            tol: parse_num(&entries, "sinkhorn.tol")?.unwrap_or(defaults.tol),
            max_iter: parse_num(&entries, "sinkhorn.max_iter")?.unwrap_or(defaults.max_iter),
        },
        warm_start,
        snapshot_stride: parse_num(&entries, "snapshot_stride")?.unwrap_or(1),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Serializes a config back to `.cfg` text. Explicit point sets are written
/// only by reference (`file` sources); in-memory point sets have no key.
pub fn render_config(c: &SimulationConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("dimension = {}\n", c.dim));
    let drift: Vec<String> = c.drift.entries().iter().map(|a| format!("{a:?}")).collect();
    out.push_str(&format!("drift = {}\n", drift.join(",")));
    out.push_str(&format!("epsilon = {:?}\n", c.epsilon));
    out.push_str(&format!("tau = {:?}\n", c.tau));
    out.push_str(&format!("horizon = {:?}\n", c.horizon));
    for (name, src) in [("alpha0", &c.alpha0), ("mu0", &c.mu0)] {
        match src {
            MeasureSource::Ball { spec, count, seed } => {
                out.push_str(&format!("{name}.ball_radius = {:?}\n", spec.radius));
                out.push_str(&format!("{name}.count = {count}\n"));
                out.push_str(&format!("{name}.seed = {seed}\n"));
            }
            MeasureSource::File { path, .. } => out.push_str(&format!("{name}.file = {path}\n")),
            MeasureSource::Points(_) => {}
        }
    }
    out.push_str(&format!("sinkhorn.tol = {:?}\n", c.sinkhorn.tol));
    out.push_str(&format!("sinkhorn.max_iter = {}\n", c.sinkhorn.max_iter));
    out.push_str(&format!("warm_start = {}\n", c.warm_start));
    out.push_str(&format!("snapshot_stride = {}\n", c.snapshot_stride));
    out
}
