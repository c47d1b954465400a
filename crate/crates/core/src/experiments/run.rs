// SPDX-License-Identifier: Apache-2.0

//! Scenario execution, summaries, FID extraction and diagnostics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::io;
use crate::algebra::{bracket_span, generator, BasisLabel, SpanReport};
use crate::dynamics::{
    replay_open_loop, simulate_closed_loop, simulate_reference, ControlTrace, Trajectory,
};
use crate::error::{Error, Result};
use crate::feedback::{singularity_diagnostic, FeedbackKind, SingularityReport};
use crate::hamiltonian::{strong_regularity, RegularityReport};
use crate::state::StokesTensor;

/// Default bracket depth for span analyses.
pub const DEFAULT_SPAN_DEPTH: usize = 20;

/// Sum of the single-spin `λ_1` components.
pub fn fid_of(state: &StokesTensor) -> f64 {
    let n = state.n();
    (0..n)
        .map(|slot| state.component(&BasisLabel::local(n, slot, 1).expect("slot in range")))
        .sum()
}

pub fn fid(traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(fid_of).collect()
}

pub fn fid_desired(traj: &Trajectory) -> Option<Vec<f64>> {
    traj.desired
        .as_ref()
        .map(|d| d.iter().map(fid_of).collect())
}

pub fn rms_difference(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// `‖ϱ_d(t_i) − ϱ(t_i)‖` at every sample.
pub fn tracking_errors(traj: &Trajectory) -> Option<Vec<f64>> {
    let d = traj.desired.as_ref()?;
    Some(
        traj.states
            .iter()
            .zip(d)
            .map(|(s, d)| s.error_from(d).norm())
            .collect(),
    )
}

/// Trapezoidal time average.
pub fn time_average(times: &[f64], values: &[f64]) -> f64 {
    if times.len() < 2 {
        return values.first().copied().unwrap_or(0.0);
    }
    let span = times[times.len() - 1] - times[0];
    let area: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    area / span
}

/// Largest value at or after `from`.
pub fn sup_after(times: &[f64], values: &[f64], from: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRegularity {
    pub channel: String,
    pub report: RegularityReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub n_spins: usize,
    pub feedback: Option<FeedbackKind>,
    pub samples: usize,
    pub t_final: f64,
    pub v0: f64,
    pub vt: f64,
    pub v_ratio: f64,
    pub min_u: Vec<f64>,
    pub max_u: Vec<f64>,
    pub norm_drift: f64,
    pub mean_tracking_error: f64,
    pub fid_rms_error: f64,
    pub uncontrolled_fid_rms_error: f64,
    pub singularity: SingularityReport,
    pub regularity: Vec<ChannelRegularity>,
    pub renormalized: bool,
    pub resampled: bool,
    pub stability_product: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    /// Drift-only evolution of the true system from the same start.
    pub uncontrolled: Trajectory,
    pub summary: Summary,
}

fn regularity_reports(sc: &Scenario) -> Result<Vec<ChannelRegularity>> {
    sc.model
        .channels()
        .iter()
        .map(|c| {
            Ok(ChannelRegularity {
                channel: c.name().to_string(),
                report: strong_regularity(sc.model.drift(), c)?,
            })
        })
        .collect()
}

fn regularity_warnings(reports: &[ChannelRegularity]) -> Vec<String> {
    let mut out = Vec::new();
    for r in reports {
        let mut why = Vec::new();
        if r.report.degenerate_levels {
            why.push("degenerate energy levels");
        }
        if r.report.degenerate_transitions {
            why.push("repeated transition frequencies");
        }
        if !r.report.connected {
            why.push("disconnected transition graph");
        }
        if !why.is_empty() {
            out.push(format!(
                "drift is not strongly regular for channel {}: {}",
                r.channel,
                why.join(", ")
            ));
        }
    }
    out
}

fn summarize(
    sc: &Scenario,
    traj: &Trajectory,
    uncontrolled: &Trajectory,
    feedback: Option<FeedbackKind>,
) -> Result<Summary> {
    let singularity = singularity_diagnostic(&sc.rho0, &sc.desired0)?;
    let regularity = regularity_reports(sc)?;
    let mut warnings = traj.metadata.warnings.clone();
    warnings.extend(regularity_warnings(&regularity));
    if singularity.any_singular() {
        warnings.push("initial data lies on the singular set of the tracking law".into());
    } else if singularity.near_singular {
        warnings.push(format!(
            "initial data is near the singular set (margin {:.3e}); convergence may be slow",
            singularity.near_singular_margin
        ));
    }
    if singularity.non_product {
        warnings
            .push("initial state is correlated; singularity flags refer to its reductions".into());
    }
    let fid_now = fid(traj);
    let fid_want = fid_desired(traj).unwrap_or_else(|| fid_now.clone());
    let fid_free = fid(uncontrolled);
    let errors = tracking_errors(traj).unwrap_or_default();
    let v0 = traj.lyapunov.first().copied().unwrap_or(f64::NAN);
    let vt = traj.lyapunov.last().copied().unwrap_or(f64::NAN);
    Ok(Summary {
        name: sc.name.clone(),
        n_spins: sc.model.n(),
        feedback,
        samples: traj.len(),
        t_final: *traj.times.last().expect("trajectory has samples"),
        v0,
        vt,
        v_ratio: if v0 > 0.0 { vt / v0 } else { 0.0 },
        min_u: traj
            .controls
            .iter()
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect(),
        max_u: traj
            .controls
            .iter()
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        norm_drift: traj.norm_drift(),
        mean_tracking_error: if errors.is_empty() {
            f64::NAN
        } else {
            time_average(&traj.times, &errors)
        },
        fid_rms_error: rms_difference(&fid_now, &fid_want),
        uncontrolled_fid_rms_error: rms_difference(&fid_free, &fid_want),
        singularity,
        regularity,
        renormalized: traj.metadata.renormalized,
        resampled: traj.metadata.resampled,
        stability_product: traj.metadata.stability_product,
        warnings,
    })
}

/// Closed-loop run plus the uncontrolled reference for comparison.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    let trajectory = simulate_closed_loop(
        &sc.model,
        &sc.law,
        &sc.rho0,
        &sc.desired0,
        &sc.desired_drift,
        &sc.integrator,
    )?;
    let uncontrolled = simulate_reference(&sc.rho0, sc.model.drift(), &sc.integrator)?;
    let summary = summarize(sc, &trajectory, &uncontrolled, Some(sc.law.kind()))?;
    Ok(RunOutput {
        trajectory,
        uncontrolled,
        summary,
    })
}

/// Drives the scenario's true model with a recorded trace and compares it
/// with the desired orbit.
pub fn replay_scenario(sc: &Scenario, trace: &ControlTrace) -> Result<RunOutput> {
    let replay = replay_open_loop(&sc.model, &sc.rho0, trace, &sc.integrator)?;
    let reference = simulate_reference(&sc.desired0, &sc.desired_drift, &sc.integrator)?;
    let trajectory = replay.with_desired(reference.states)?;
    let uncontrolled = simulate_reference(&sc.rho0, sc.model.drift(), &sc.integrator)?;
    let summary = summarize(sc, &trajectory, &uncontrolled, None)?;
    Ok(RunOutput {
        trajectory,
        uncontrolled,
        summary,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelSpan {
    pub channel: String,
    pub span: SpanReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub regularity: Vec<ChannelRegularity>,
    pub span: Vec<ChannelSpan>,
    pub warnings: Vec<String>,
}

pub fn span_reports(sc: &Scenario, depth: usize) -> Result<Vec<ChannelSpan>> {
    let gf = generator(sc.model.drift())?;
    sc.model
        .channels()
        .iter()
        .zip(sc.model.channel_generators())
        .map(|(c, gc)| {
            Ok(ChannelSpan {
                channel: c.name().to_string(),
                span: bracket_span(&gf, gc, depth)?,
            })
        })
        .collect()
}

/// Strong regularity and bracket span for every channel.
pub fn check(sc: &Scenario, depth: usize) -> Result<CheckReport> {
    let regularity = regularity_reports(sc)?;
    let warnings = regularity_warnings(&regularity);
    Ok(CheckReport {
        name: sc.name.clone(),
        regularity,
        span: span_reports(sc, depth)?,
        warnings,
    })
}

/// File names derived from the scenario, overridable in its config.
pub struct OutputPaths {
    pub trajectory: PathBuf,
    pub trace: PathBuf,
    pub fid: PathBuf,
    pub summary: PathBuf,
    pub plot: Option<PathBuf>,
}

impl OutputPaths {
    /// Configured names apply to the primary run only; `suffix` marks
    /// derived runs such as replays.
    pub fn new(sc: &Scenario, dir: &Path, suffix: &str) -> OutputPaths {
        let o = &sc.outputs;
        let base = format!("{}{suffix}", sc.name);
        let named = |v: &Option<String>, default: String| match v {
            Some(v) if suffix.is_empty() => dir.join(v),
            _ => dir.join(default),
        };
        OutputPaths {
            trajectory: named(&o.trajectory, format!("{base}.csv")),
            trace: named(&o.trace, format!("{base}_trace.csv")),
            fid: named(&o.fid, format!("{base}_fid.csv")),
            summary: named(&o.summary, format!("{base}_summary.json")),
            plot: o.plot_script.then(|| dir.join(format!("{base}_plot.py"))),
        }
    }
}

/// Writes trajectory, FID, summary, optional plot script, and the control
/// trace when the run produced one.
pub fn write_outputs(out: &RunOutput, paths: &OutputPaths) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for p in [&paths.trajectory, &paths.fid, &paths.summary] {
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    io::save_trajectory(&out.trajectory, &paths.trajectory)?;
    written.push(paths.trajectory.clone());
    if let Some(trace) = &out.trajectory.trace {
        io::save_trace(trace, &paths.trace)?;
        written.push(paths.trace.clone());
    }
    let f = std::fs::File::create(&paths.fid).map_err(|e| Error::io(&paths.fid, e))?;
    let want = fid_desired(&out.trajectory);
    io::write_fid(
        &out.trajectory.times,
        &fid(&out.trajectory),
        want.as_deref(),
        std::io::BufWriter::new(f),
    )?;
    written.push(paths.fid.clone());
    let json = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    std::fs::write(&paths.summary, json + "\n").map_err(|e| Error::io(&paths.summary, e))?;
    written.push(paths.summary.clone());
    if let Some(plot) = &paths.plot {
        let name = paths
            .trajectory
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        std::fs::write(plot, io::plot_script(&name)).map_err(|e| Error::io(plot, e))?;
        written.push(plot.clone());
    }
    Ok(written)
}
