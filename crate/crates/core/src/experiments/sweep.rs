// SPDX-License-Identifier: Apache-2.0

//! One-parameter sweeps over a scenario, run in parallel.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, TermConfig};
use super::io::num;
use super::run::{
    fid, fid_desired, rms_difference, run_scenario, sup_after, time_average, tracking_errors,
};
use crate::algebra::BasisLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// `V(T)`.
    FinalV,
    /// Time average of `‖ϱ_d − ϱ‖`.
    MeanTrackingError,
    /// Largest `‖ϱ_d − ϱ‖` after the transient.
    SupTrackingError,
    /// RMS difference between the FID and the desired FID.
    FidRmsError,
}

impl SweepMetric {
    pub const ALL: [SweepMetric; 4] = [
        SweepMetric::FinalV,
        SweepMetric::MeanTrackingError,
        SweepMetric::SupTrackingError,
        SweepMetric::FidRmsError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMetric::FinalV => "final_v",
            SweepMetric::MeanTrackingError => "mean_tracking_error",
            SweepMetric::SupTrackingError => "sup_tracking_error",
            SweepMetric::FidRmsError => "fid_rms_error",
        }
    }
}

fn all_metrics() -> Vec<SweepMetric> {
    SweepMetric::ALL.to_vec()
}

/// Parameter paths:
/// `feedback.gain`, `feedback.gains.<i>`, `drift.<label>`,
/// `drift.dipole.<i>.<j>`, and the same two forms under `desired_drift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<SweepMetric>,
    /// Start of the window for the post-transient supremum; defaults to half
    /// the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
}

impl SweepSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub parameter: String,
    pub metrics: Vec<SweepMetric>,
    /// `(value, metric values in `metrics` order)`.
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl SweepTable {
    pub fn column(&self, metric: SweepMetric) -> Option<Vec<f64>> {
        let j = self.metrics.iter().position(|&m| m == metric)?;
        Some(self.rows.iter().map(|(_, r)| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Internal(format!("sweep write failed: {e}"));
        let names: Vec<&str> = self.metrics.iter().map(|m| m.name()).collect();
        writeln!(out, "value,{}", names.join(",")).map_err(io)?;
        for (v, row) in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
            writeln!(out, "{},{}", num(*v), cells.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

fn not_found(path: &str) -> Error {
    Error::Config(format!("sweep parameter path not found: {path}"))
}

fn set_term(
    terms: &mut Vec<TermConfig>,
    n: usize,
    key: &[&str],
    value: f64,
    path: &str,
) -> Result<()> {
    match key {
        ["dipole", i, j] => {
            let (i, j): (usize, usize) = (
                i.parse().map_err(|_| not_found(path))?,
                j.parse().map_err(|_| not_found(path))?,
            );
            let hit = terms.iter_mut().find_map(|t| match t {
                TermConfig::Dipole { dipole, omega } if *dipole == [i, j] || *dipole == [j, i] => {
                    Some(omega)
                }
                _ => None,
            });
            match hit {
                Some(omega) => *omega = value,
                None => terms.push(TermConfig::Dipole {
                    dipole: [i, j],
                    omega: value,
                }),
            }
            Ok(())
        }
        [label] => {
            let label: BasisLabel = label.parse().map_err(|_| not_found(path))?;
            if label.n() != n {
                return Err(not_found(path));
            }
            let indices = label.indices().to_vec();
            let hit = terms.iter_mut().find_map(|t| match t {
                TermConfig::Term { indices: ix, coeff } if *ix == indices => Some(coeff),
                _ => None,
            });
            match hit {
                Some(c) => *c = value,
                None => terms.push(TermConfig::Term {
                    indices,
                    coeff: value,
                }),
            }
            Ok(())
        }
        _ => Err(not_found(path)),
    }
}

/// Applies one parameter value to a copy-on-write config.
pub fn apply_parameter(cfg: &mut ScenarioConfig, path: &str, value: f64) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let n = cfg.n_spins;
    match parts.as_slice() {
        ["feedback", "gain"] => {
            let count = cfg.channels.len();
            cfg.feedback.gain = None;
            cfg.feedback.gains = Some(vec![value; count]);
            Ok(())
        }
        ["feedback", "gains", i] => {
            let i: usize = i.parse().map_err(|_| not_found(path))?;
            let count = cfg.channels.len();
            let mut gains = match (&cfg.feedback.gains, cfg.feedback.gain) {
                (Some(g), _) => g.clone(),
                (None, Some(k)) => vec![k; count],
                (None, None) => return Err(not_found(path)),
            };
            *gains.get_mut(i).ok_or_else(|| not_found(path))? = value;
            cfg.feedback.gain = None;
            cfg.feedback.gains = Some(gains);
            Ok(())
        }
        ["drift", rest @ ..] => {
            // A shared desired drift must stay equal to the old drift.
            if cfg.desired_drift.is_none() {
                cfg.desired_drift = Some(cfg.drift.clone());
            }
            set_term(&mut cfg.drift, n, rest, value, path)
        }
        ["desired_drift", rest @ ..] => {
            let terms = cfg.desired_drift.get_or_insert_with(|| cfg.drift.clone());
            set_term(terms, n, rest, value, path)
        }
        _ => Err(not_found(path)),
    }
}

/// Runs every grid point; rows keep the order of `spec.values`.
pub fn run_sweep(base: &ScenarioConfig, spec: &SweepSpec) -> Result<SweepTable> {
    if spec.values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let configs = spec
        .values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            apply_parameter(&mut cfg, &spec.parameter, v)?;
            Ok((v, cfg.build()?))
        })
        .collect::<Result<Vec<_>>>()?;
    let transient = spec.transient.unwrap_or(0.5 * base.integrator.t_final);
    let rows = configs
        .par_iter()
        .map(|(v, sc)| {
            let out = run_scenario(sc)?;
            let traj = &out.trajectory;
            let errors = tracking_errors(traj).expect("closed loop records the desired orbit");
            let want = fid_desired(traj).expect("closed loop records the desired orbit");
            let row = spec
                .metrics
                .iter()
                .map(|m| match m {
                    SweepMetric::FinalV => *traj.lyapunov.last().expect("samples"),
                    SweepMetric::MeanTrackingError => time_average(&traj.times, &errors),
                    SweepMetric::SupTrackingError => sup_after(&traj.times, &errors, transient),
                    SweepMetric::FidRmsError => rms_difference(&fid(traj), &want),
                })
                .collect();
            Ok((*v, row))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        parameter: spec.parameter.clone(),
        metrics: spec.metrics.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
            "name": "s", "n_spins": 2,
            "drift": [{"indices": [0, 3], "coeff": 1.0}, {"dipole": [0, 1], "omega": 0.2}],
            "channels": [{"nonselective": 1}],
            "feedback": {"kind": "orbit_tracking", "gain": 1.0},
            "initial": {"pure": [[0, 0, 1], [1, 0, 0]]},
            "desired": {"pure": [[1, 0, 0], [0, 0, 1]]},
            "integrator": {"dt": 0.002, "t_final": 0.1}
        }"#,
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn parameter_paths() {
        let mut c = base();
        apply_parameter(&mut c, "feedback.gain", 3.0).unwrap();
        assert_eq!(c.feedback.gains, Some(vec![3.0]));
        apply_parameter(&mut c, "feedback.gains.0", 4.0).unwrap();
        assert_eq!(c.feedback.gains, Some(vec![4.0]));
        assert!(apply_parameter(&mut c, "feedback.gains.3", 4.0).is_err());

        apply_parameter(&mut c, "drift.03", 5.0).unwrap();
        assert_eq!(
            c.drift[0],
            TermConfig::Term {
                indices: vec![0, 3],
                coeff: 5.0
            }
        );
        assert_eq!(
            c.desired_drift.as_ref().unwrap()[0],
            TermConfig::Term {
                indices: vec![0, 3],
                coeff: 1.0
            }
        );
        apply_parameter(&mut c, "drift.dipole.1.0", 0.0).unwrap();
        assert_eq!(
            c.drift[1],
            TermConfig::Dipole {
                dipole: [0, 1],
                omega: 0.0
            }
        );
        apply_parameter(&mut c, "desired_drift.30", 2.0).unwrap();
        assert_eq!(c.desired_drift.as_ref().unwrap().len(), 3);

        for bad in [
            "feedback.k",
            "drift.3",
            "drift.dipole.x.1",
            "integrator.dt",
            "nothing",
        ] {
            assert!(
                matches!(apply_parameter(&mut c, bad, 1.0), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let spec = SweepSpec {
            parameter: "feedback.gain".into(),
            values: vec![4.0, 1.0, 2.0],
            metrics: all_metrics(),
            transient: None,
        };
        let a = run_sweep(&base(), &spec).unwrap();
        let b = run_sweep(&base(), &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.rows.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![4.0, 1.0, 2.0]
        );
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .starts_with("value,final_v,mean_tracking_error,sup_tracking_error,fid_rms_error\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let spec = SweepSpec {
            parameter: "feedback.gain".into(),
            values: vec![],
            metrics: all_metrics(),
            transient: None,
        };
        assert!(run_sweep(&base(), &spec).is_err());
    }
}
