// SPDX-License-Identifier: Apache-2.0

//! JSON scenario files.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::BasisLabel;
use crate::dynamics::{drift_propagator, IntegratorConfig, SpinModel};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackKind, FeedbackLaw};
use crate::hamiltonian::{dipole_pair, nonselective_channel, ControlChannel, HamiltonianSpec};
use crate::state::{product_state, SingleSpinBloch, StokesTensor};

/// One Hamiltonian entry: an explicit basis term or a dipole pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermConfig {
    Term { indices: Vec<u8>, coeff: f64 },
    Dipole { dipole: [usize; 2], omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelConfig {
    Nonselective {
        nonselective: u8,
    },
    Local {
        spin: usize,
        axis: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Explicit {
        name: String,
        terms: Vec<TermConfig>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub kind: FeedbackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
}

/// Initial or desired state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    /// Per-spin Stokes 4-vectors.
    Bloch(Vec<[f64; 4]>),
    /// Per-spin pure-state directions.
    Pure(Vec<[f64; 3]>),
    /// Per-spin Bloch vectors of length at most 1.
    Mixed(Vec<[f64; 3]>),
    /// Full tensor by flat index.
    Tensor(Vec<f64>),
    /// Seeded random product state.
    Random {
        #[serde(default = "yes")]
        pure: bool,
    },
}

fn yes() -> bool {
    true
}

/// Rotation of every spin of the initial state about a local axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub axis: u8,
    pub angle: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default)]
    pub plot_script: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub n_spins: usize,
    pub drift: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_drift: Option<Vec<TermConfig>>,
    pub channels: Vec<ChannelConfig>,
    pub feedback: FeedbackConfig,
    pub initial: StateConfig,
    pub desired: StateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbConfig>,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves everything into runnable objects.
    pub fn build(&self) -> Result<Scenario> {
        let n = self.n_spins;
        let drift = build_terms(n, &self.drift).map_err(|e| field("drift", e))?;
        let desired_drift = match &self.desired_drift {
            Some(t) => build_terms(n, t).map_err(|e| field("desired_drift", e))?,
            None => drift.clone(),
        };
        if self.channels.is_empty() {
            return Err(Error::Config(
                "channels: at least one channel is required".into(),
            ));
        }
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(i, c)| build_channel(n, i, c))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| field("channels", e))?;
        let gains = match (&self.feedback.gain, &self.feedback.gains) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "feedback: give either gain or gains, not both".into(),
                ))
            }
            (Some(k), None) => vec![*k; channels.len()],
            (None, Some(g)) => g.clone(),
            (None, None) => return Err(Error::Config("feedback: missing gain".into())),
        };
        let law = FeedbackLaw::new(self.feedback.kind, gains, channels.clone())
            .map_err(|e| field("feedback", e))?;
        let model = SpinModel::new(drift, channels).map_err(|e| field("channels", e))?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut rho0 = build_state(n, &self.initial, &mut rng).map_err(|e| field("initial", e))?;
        let desired0 = build_state(n, &self.desired, &mut rng).map_err(|e| field("desired", e))?;
        if let Some(p) = &self.perturb {
            rho0 = rotate_all(&rho0, p.axis, p.angle).map_err(|e| field("perturb", e))?;
        }
        self.integrator
            .validate()
            .map_err(|e| field("integrator", e))?;
        Ok(Scenario {
            name: self.name.clone(),
            model,
            law,
            desired_drift,
            rho0,
            desired0,
            integrator: self.integrator.clone(),
            outputs: self.outputs.clone(),
        })
    }
}

fn field(name: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        other => Error::Config(format!("{name}: {other}")),
    }
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub model: SpinModel,
    pub law: FeedbackLaw,
    pub desired_drift: HamiltonianSpec,
    pub rho0: StokesTensor,
    pub desired0: StokesTensor,
    pub integrator: IntegratorConfig,
    pub outputs: OutputConfig,
}

pub(crate) fn build_terms(n: usize, terms: &[TermConfig]) -> Result<HamiltonianSpec> {
    let mut spec = HamiltonianSpec::new(n)?;
    for t in terms {
        match t {
            TermConfig::Term { indices, coeff } => {
                let label = BasisLabel::new(indices.clone())?;
                spec.add_term(label, *coeff)?;
            }
            TermConfig::Dipole { dipole, omega } => {
                spec = spec.sum(&dipole_pair(dipole[0], dipole[1], *omega, n)?)?;
            }
        }
    }
    Ok(spec)
}

fn build_channel(n: usize, index: usize, c: &ChannelConfig) -> Result<ControlChannel> {
    match c {
        ChannelConfig::Nonselective { nonselective } => {
            let ch = nonselective_channel(n, *nonselective)?;
            if index == 0 {
                Ok(ch)
            } else {
                ControlChannel::new(format!("u_{}", index + 1), ch.spec().clone())
            }
        }
        ChannelConfig::Local { spin, axis, name } => {
            let label = BasisLabel::local(n, *spin, *axis)?;
            let name = name.clone().unwrap_or_else(|| format!("u_{label}"));
            ControlChannel::new(name, HamiltonianSpec::new(n)?.with_term(label, 1.0)?)
        }
        ChannelConfig::Explicit { name, terms } => {
            ControlChannel::new(name.clone(), build_terms(n, terms)?)
        }
    }
}

fn per_spin<T>(n: usize, items: &[T]) -> Result<()> {
    if items.len() != n {
        return Err(Error::Config(format!(
            "expected {n} per-spin entries, got {}",
            items.len()
        )));
    }
    Ok(())
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

pub(crate) fn build_state(n: usize, s: &StateConfig, rng: &mut ChaCha8Rng) -> Result<StokesTensor> {
    match s {
        StateConfig::Bloch(v) => {
            per_spin(n, v)?;
            product_state(
                &v.iter()
                    .map(|c| SingleSpinBloch::new(*c))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        StateConfig::Pure(v) => {
            per_spin(n, v)?;
            product_state(
                &v.iter()
                    .map(|c| SingleSpinBloch::pure(*c))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        StateConfig::Mixed(v) => {
            per_spin(n, v)?;
            product_state(
                &v.iter()
                    .map(|c| SingleSpinBloch::mixed(*c))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        StateConfig::Tensor(v) => StokesTensor::from_vec(n, v.clone()),
        StateConfig::Random { pure } => {
            let factors = (0..n)
                .map(|_| {
                    let dir = random_direction(rng);
                    let r = if *pure {
                        1.0
                    } else {
                        rng.random::<f64>().cbrt()
                    };
                    SingleSpinBloch::mixed(dir.map(|c| c * r))
                })
                .collect::<Result<Vec<_>>>()?;
            product_state(&factors)
        }
    }
}

/// Rotates every spin by `angle` about local axis `axis`.
pub fn rotate_all(rho: &StokesTensor, axis: u8, angle: f64) -> Result<StokesTensor> {
    if !(1..=3).contains(&axis) {
        return Err(Error::Config(format!(
            "rotation axis must be 1, 2 or 3, got {axis}"
        )));
    }
    let n = rho.n();
    let mut h = HamiltonianSpec::new(n)?;
    for slot in 0..n {
        h.add_term(BasisLabel::local(n, slot, axis)?, 1.0)?;
    }
    let p = drift_propagator(&h, angle / SQRT_2)?;
    StokesTensor::new(n, p * rho.components())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "name": "demo",
        "n_spins": 2,
        "drift": [{"indices": [0, 3], "coeff": 1.0}, {"indices": [3, 0], "coeff": 2.0},
                  {"dipole": [0, 1], "omega": 0.5}],
        "channels": [{"nonselective": 1}],
        "feedback": {"kind": "orbit_tracking", "gain": 1.5},
        "initial": {"pure": [[0, 0, 1], [1, 0, 0]]},
        "desired": {"random": {"pure": true}},
        "integrator": {"dt": 0.01, "t_final": 1.0},
        "seed": 3
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ScenarioConfig::from_json(SAMPLE, "inline").unwrap();
        let sc = cfg.build().unwrap();
        assert_eq!(sc.model.drift().terms().len(), 5);
        assert_eq!(sc.law.gains(), &[1.5]);
        assert_eq!(sc.desired_drift, *sc.model.drift());
        let again = ScenarioConfig::from_json(&cfg.to_json(), "roundtrip").unwrap();
        assert_eq!(again, cfg);
        let sc2 = again.build().unwrap();
        assert_eq!(sc.desired0, sc2.desired0);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ScenarioConfig::from_json("{\n  \"name\": 3\n}", "bad.json").unwrap_err();
        match err {
            Error::Parse { path, message } => {
                assert_eq!(path, "bad.json");
                assert!(message.contains("line 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_labels_are_config_errors() {
        let text = SAMPLE.replace("[0, 3]", "[0, 7]");
        let err = ScenarioConfig::from_json(&text, "x")
            .unwrap()
            .build()
            .unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.starts_with("drift")),
            "{err}"
        );
    }

    #[test]
    fn rotation_moves_by_angle() {
        let z = product_state(&[SingleSpinBloch::pure([1.0, 0.0, 0.0]).unwrap()]).unwrap();
        let r = rotate_all(&z, 3, 0.25).unwrap();
        let t = r.as_slice();
        assert!((t[1] - 0.25f64.cos() / SQRT_2).abs() < 1e-14);
        assert!((t[2] - 0.25f64.sin() / SQRT_2).abs() < 1e-14);
    }
}
