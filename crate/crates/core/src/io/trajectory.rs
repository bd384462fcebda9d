//! `.sgt` trajectory files.
//!
//! ```text
//! SGT1 dim=<d> snapshots=<S> atoms=<n> tau=<tau> stride=<k>
//! snapshot step=<k> time=<t>
//! <x_1> ... <x_d> <w>                       (n lines)
//! diag <ot_eps> <potential> <support> <sinkhorn iterations>
//! ...                                       (S snapshot records)
//! crc32 <8 hex digits>
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips binary64
//! exactly. The checksum is the CRC-32 of every byte before the `crc32` line.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{Snapshot, StepDiagnostics, Trajectory};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

pub const MAGIC: &str = "SGT";
pub const FORMAT_VERSION: u32 = 1;

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn encode_trajectory(traj: &Trajectory) -> String {
    let n = traj.snapshots.first().map_or(0, |s| s.measure.len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC}{FORMAT_VERSION} dim={} snapshots={} atoms={n} tau={} stride={}",
        traj.dim(),
        traj.snapshots.len(),
        real(traj.tau),
        traj.snapshot_stride
    );
    for s in &traj.snapshots {
        let _ = writeln!(out, "snapshot step={} time={}", s.step, real(s.time));
        for (p, w) in s.measure.points().zip(s.measure.weights()) {
            for c in p {
                out.push_str(&real(*c));
                out.push(' ');
            }
            out.push_str(&real(*w));
            out.push('\n');
        }
        let d = &s.diagnostics;
        let _ = writeln!(
            out,
            "diag {} {} {} {}",
            real(d.ot_eps),
            real(d.potential_energy),
            real(d.support_radius),
            d.sinkhorn_iterations
        );
    }
    let crc = crc32fast::hash(out.as_bytes());
    let _ = writeln!(out, "crc32 {crc:08x}");
    out
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, encode_trajectory(traj))?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    decode_trajectory(&std::fs::read_to_string(path)?)
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn header_field<'a>(tokens: &[&'a str], key: &str) -> Result<&'a str> {
    tokens
        .iter()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| fmt_err(format!("header is missing `{key}`")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| fmt_err(format!("cannot parse {what} from `{s}`")))
}

pub fn decode_trajectory(text: &str) -> Result<Trajectory> {
    let first = text.lines().next().unwrap_or("");
    let tag = first.split_whitespace().next().unwrap_or("");
    match tag.strip_prefix(MAGIC).map(str::parse::<u32>) {
        Some(Ok(FORMAT_VERSION)) => {}
        Some(Ok(_)) => return Err(Error::FormatVersionMismatch(tag.to_string())),
        _ => return Err(fmt_err("missing SGT magic")),
    }

    // checksum line must be the final line
    let body = text.strip_suffix('\n').ok_or(Error::ChecksumMismatch)?;
    let split = body.rfind('\n').ok_or(Error::ChecksumMismatch)?;
    let (payload, crc_line) = (&text[..split + 1], &body[split + 1..]);
    let stored = crc_line
        .strip_prefix("crc32 ")
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or(Error::ChecksumMismatch)?;
    if crc32fast::hash(payload.as_bytes()) != stored {
        return Err(Error::ChecksumMismatch);
    }

    let mut lines = payload.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let dim: usize = num(header_field(&header, "dim")?, "dim")?;
    let count: usize = num(header_field(&header, "snapshots")?, "snapshots")?;
    let atoms: usize = num(header_field(&header, "atoms")?, "atoms")?;
    let tau: f64 = num(header_field(&header, "tau")?, "tau")?;
    let stride: usize = num(header_field(&header, "stride")?, "stride")?;

    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        let head: Vec<&str> = lines
            .next()
            .ok_or_else(|| fmt_err("missing snapshot record"))?
            .split_whitespace()
            .collect();
        if head.first() != Some(&"snapshot") {
            return Err(fmt_err("expected `snapshot` line"));
        }
        let step: usize = num(header_field(&head, "step")?, "step")?;
        let time: f64 = num(header_field(&head, "time")?, "time")?;
        let mut coords = Vec::with_capacity(atoms * dim);
        let mut weights = Vec::with_capacity(atoms);
        for _ in 0..atoms {
            let fields: Vec<f64> = lines
                .next()
                .ok_or_else(|| fmt_err("missing atom line"))?
                .split_whitespace()
                .map(|s| num::<f64>(s, "coordinate"))
                .collect::<Result<_>>()?;
            if fields.len() != dim + 1 {
                return Err(fmt_err("atom line has the wrong number of fields"));
            }
            coords.extend_from_slice(&fields[..dim]);
            weights.push(fields[dim]);
        }
        let diag: Vec<&str> = lines
            .next()
            .ok_or_else(|| fmt_err("missing diag line"))?
            .split_whitespace()
            .collect();
        if diag.len() != 5 || diag[0] != "diag" {
            return Err(fmt_err("malformed diag line"));
        }
        snapshots.push(Snapshot {
            step,
            time,
            measure: DiscreteMeasure::from_flat(dim, coords, weights)?,
            diagnostics: StepDiagnostics {
                ot_eps: num(diag[1], "ot_eps")?,
                potential_energy: num(diag[2], "potential")?,
                support_radius: num(diag[3], "support")?,
                sinkhorn_iterations: num(diag[4], "iterations")?,
            },
        });
    }
    if lines.next().is_some() {
        return Err(fmt_err("trailing data after last snapshot"));
    }
    Ok(Trajectory {
        tau,
        snapshot_stride: stride,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_j, simulate, MeasureSource, SimulationConfig};
    use crate::measures::BallSpec;

    fn sample() -> Trajectory {
        let ball = |count, seed| MeasureSource::Ball {
            spec: BallSpec::new(1.0, 3).unwrap(),
            count,
            seed,
        };
        simulate(&SimulationConfig::new(make_j(), 0.5, 0.1, 0.3, ball(7, 1), ball(5, 2))).unwrap()
    }

    fn bits(t: &Trajectory) -> Vec<u64> {
        t.snapshots
            .iter()
            .flat_map(|s| {
                s.measure
                    .coords()
                    .iter()
                    .chain(s.measure.weights())
                    .chain([s.time, s.diagnostics.ot_eps, s.diagnostics.potential_energy].iter())
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let t = sample();
        let back = decode_trajectory(&encode_trajectory(&t)).unwrap();
        assert_eq!(back, t);
        assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sgt");
        let t = sample();
        write_trajectory(&t, &path).unwrap();
        assert_eq!(read_trajectory(&path).unwrap(), t);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let text = encode_trajectory(&sample());
        let cut = &text[..text.len() * 2 / 3];
        assert!(matches!(decode_trajectory(cut), Err(Error::ChecksumMismatch)));
        let no_crc = &text[..text.rfind("crc32").unwrap()];
        assert!(matches!(decode_trajectory(no_crc), Err(Error::ChecksumMismatch)));
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let text = encode_trajectory(&sample()).replacen("diag", "diaf", 1);
        assert!(matches!(decode_trajectory(&text), Err(Error::ChecksumMismatch)));
    }

    #[test]
    fn future_version_is_rejected() {
        let text = encode_trajectory(&sample()).replacen("SGT1", "SGT2", 1);
        assert!(matches!(
            decode_trajectory(&text),
            Err(Error::FormatVersionMismatch(v)) if v == "SGT2"
        ));
    }
}
