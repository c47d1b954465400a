// SPDX-License-Identifier: Apache-2.0

//! CSV encodings of trajectories, control traces and FID series.
//!
//! Floats are written with 17 significant digits so that reading a file
//! back reproduces every value exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::algebra::BasisLabel;
use crate::dynamics::{ControlTrace, TraceRow, Trajectory};
use crate::error::{Error, Result};
use crate::state::StokesTensor;

pub(crate) fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(origin: &str, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    }
}

fn parse_f64(origin: &str, row: usize, col: &str, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| {
        csv_err(
            origin,
            format!("row {row}, column {col}: cannot parse {s:?}"),
        )
    })
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Columns: `t`, `u_1..u_m`, then `V` and the desired components if
/// present, with state components `rho_<label>` in flat-index order.
pub fn trajectory_header(n: usize, channels: usize, with_desired: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=channels).map(|m| format!("u_{m}")));
    if with_desired {
        h.push("V".into());
    }
    h.extend(BasisLabel::all(n).map(|l| format!("rho_{l}")));
    if with_desired {
        h.extend(BasisLabel::all(n).map(|l| format!("rhod_{l}")));
    }
    h
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.states[0].n();
    let m = traj.controls.len();
    let desired = traj.desired.as_ref();
    let mut w = writer(out);
    let io = |e: csv::Error| Error::Internal(format!("csv write failed: {e}"));
    w.write_record(trajectory_header(n, m, desired.is_some()))
        .map_err(io)?;
    for i in 0..traj.len() {
        let mut rec = vec![num(traj.times[i])];
        rec.extend(traj.controls.iter().map(|c| num(c[i])));
        if let Some(d) = desired {
            rec.push(num(traj.lyapunov[i]));
            rec.extend(traj.states[i].as_slice().iter().map(|&x| num(x)));
            rec.extend(d[i].as_slice().iter().map(|&x| num(x)));
        } else {
            rec.extend(traj.states[i].as_slice().iter().map(|&x| num(x)));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Internal(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory(traj, std::io::BufWriter::new(f))
}

/// Columns of a trajectory file read back as numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    pub states: Vec<StokesTensor>,
    pub desired: Option<Vec<StokesTensor>>,
}

pub fn read_trajectory<R: Read>(input: R, origin: &str) -> Result<TrajectoryTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(origin, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let m = header.iter().filter(|h| h.starts_with("u_")).count();
    let has_v = header.iter().any(|h| h == "V");
    let n_rho = header.iter().filter(|h| h.starts_with("rho_")).count();
    let n = (0..=crate::algebra::MAX_SPINS)
        .find(|&k| 1usize << (2 * k) == n_rho)
        .filter(|&k| k > 0)
        .ok_or_else(|| csv_err(origin, format!("{n_rho} state columns is not a power of 4")))?;
    let want = trajectory_header(n, m, has_v);
    if header != want {
        return Err(csv_err(
            origin,
            "header does not match the trajectory schema",
        ));
    }
    let mut t = TrajectoryTable {
        times: Vec::new(),
        controls: vec![Vec::new(); m],
        lyapunov: Vec::new(),
        states: Vec::new(),
        desired: has_v.then(Vec::new),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        let vals = rec
            .iter()
            .zip(&header)
            .map(|(s, h)| parse_f64(origin, row + 1, h, s))
            .collect::<Result<Vec<_>>>()?;
        let mut it = vals.into_iter();
        t.times.push(it.next().expect("t column"));
        for c in t.controls.iter_mut() {
            c.push(it.next().expect("u column"));
        }
        if has_v {
            t.lyapunov.push(it.next().expect("V column"));
        }
        let rest: Vec<f64> = it.collect();
        t.states
            .push(StokesTensor::from_vec(n, rest[..n_rho].to_vec())?);
        if let Some(d) = t.desired.as_mut() {
            d.push(StokesTensor::from_vec(n, rest[n_rho..].to_vec())?);
        }
    }
    Ok(t)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryTable> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectory(f, &path.display().to_string())
}

/// Columns: `t`, `stage`, `u_1..u_m`.
pub fn write_trace<W: Write>(trace: &ControlTrace, out: W) -> Result<()> {
    let mut w = writer(out);
    let io = |e: csv::Error| Error::Internal(format!("csv write failed: {e}"));
    let mut header = vec!["t".to_string(), "stage".to_string()];
    header.extend((1..=trace.channels()).map(|m| format!("u_{m}")));
    w.write_record(&header).map_err(io)?;
    for r in trace.rows() {
        let mut rec = vec![num(r.t), r.stage.to_string()];
        rec.extend(r.u.iter().map(|&u| num(u)));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Internal(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub fn save_trace(trace: &ControlTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(trace, std::io::BufWriter::new(f))
}

/// Reads a trace; a missing `stage` column means plain samples.
pub fn read_trace<R: Read>(input: R, origin: &str) -> Result<ControlTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(origin, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(csv_err(origin, "first column must be t"));
    }
    let has_stage = header.get(1).map(String::as_str) == Some("stage");
    let first_u = if has_stage { 2 } else { 1 };
    let channels = header.len() - first_u;
    if channels == 0 || !header[first_u..].iter().all(|h| h.starts_with("u_")) {
        return Err(csv_err(origin, "expected control columns u_1..u_m"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        if rec.len() != header.len() {
            return Err(csv_err(
                origin,
                format!("row {} has {} fields", i + 1, rec.len()),
            ));
        }
        let t = parse_f64(origin, i + 1, "t", &rec[0])?;
        let stage = if has_stage {
            rec[1]
                .trim()
                .parse::<u8>()
                .map_err(|_| csv_err(origin, format!("row {}: bad stage {:?}", i + 1, &rec[1])))?
        } else {
            0
        };
        let u = (first_u..header.len())
            .map(|c| parse_f64(origin, i + 1, &header[c], &rec[c]))
            .collect::<Result<Vec<_>>>()?;
        rows.push(TraceRow { t, stage, u });
    }
    ControlTrace::new(channels, rows).map_err(|e| csv_err(origin, e))
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<ControlTrace> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(f, &path.display().to_string())
}

/// Columns: `t`, `fid`, and `fid_desired` when given.
pub fn write_fid<W: Write>(
    times: &[f64],
    fid: &[f64],
    desired: Option<&[f64]>,
    out: W,
) -> Result<()> {
    let mut w = writer(out);
    let io = |e: csv::Error| Error::Internal(format!("csv write failed: {e}"));
    let mut header = vec!["t", "fid"];
    if desired.is_some() {
        header.push("fid_desired");
    }
    w.write_record(&header).map_err(io)?;
    for (i, (&t, &f)) in times.iter().zip(fid).enumerate() {
        let mut rec = vec![num(t), num(f)];
        if let Some(d) = desired {
            rec.push(num(d[i]));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Internal(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Matplotlib script that plots every column of a trajectory file against
/// `t`. Nothing is rendered by this crate.
pub fn plot_script(csv_name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
# Plots a trajectory CSV written by spinfb.
import sys
import pandas as pd
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
df = pd.read_csv(path)
fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
for c in [c for c in df.columns if c.startswith("u_")]:
    axes[0].plot(df.t, df[c], label=c)
axes[0].set_ylabel("u")
axes[0].legend()
if "V" in df.columns:
    axes[1].semilogy(df.t, df.V.clip(lower=1e-16))
axes[1].set_ylabel("V")
for c in [c for c in df.columns if c.startswith("rho_")][1:]:
    line, = axes[2].plot(df.t, df[c])
    d = "rhod_" + c[4:]
    if d in df.columns:
        axes[2].plot(df.t, df[d], ":", color=line.get_color())
axes[2].set_xlabel("t")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
"#
    )
}
