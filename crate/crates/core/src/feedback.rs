// SPDX-License-Identifier: Apache-2.0

//! Lyapunov feedback laws, the rate decomposition of the distance function,
//! and diagnostics for initial data on the singular set.

use serde::{Deserialize, Serialize};

use crate::algebra::{generator, Generator};
use crate::error::{Error, Result};
use crate::hamiltonian::{ControlChannel, HamiltonianSpec};
use crate::state::{product_state, reduced_state, SingleSpinBloch, StokesTensor};

/// Relative threshold for exact singular-set membership.
pub const SINGULAR_TOLERANCE: f64 = 1e-9;

/// Relative margin below which a start is reported as near-singular.
pub const NEAR_SINGULAR_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    /// `u_m = k_m ϱ_dᵀ G_m ϱ` on every channel.
    OrbitTracking,
    /// Single spin only: `u = k ϱ² (ϱ³_d − ϱ³)`.
    ScalarZ,
    /// Orbit tracking evaluated on the product of the single-spin reductions.
    ProductApprox,
}

#[derive(Clone, Debug)]
pub struct FeedbackLaw {
    kind: FeedbackKind,
    gains: Vec<f64>,
    channels: Vec<ControlChannel>,
    generators: Vec<Generator>,
}

impl FeedbackLaw {
    /// One positive gain per channel.
    pub fn new(kind: FeedbackKind, gains: Vec<f64>, channels: Vec<ControlChannel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument(
                "feedback needs at least one channel".into(),
            ));
        }
        if gains.len() != channels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gains for {} channels",
                gains.len(),
                channels.len()
            )));
        }
        if let Some(k) = gains.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "gain {k} is not a positive real"
            )));
        }
        let n = channels[0].n();
        if let Some(c) = channels.iter().find(|c| c.n() != n) {
            return Err(Error::SpinMismatch {
                expected: n,
                found: c.n(),
            });
        }
        if kind == FeedbackKind::ScalarZ && (n != 1 || channels.len() != 1) {
            return Err(Error::InvalidArgument(
                "the scalar law is defined for one spin and one channel".into(),
            ));
        }
        let generators = channels
            .iter()
            .map(|c| generator(c.spec()))
            .collect::<Result<_>>()?;
        Ok(FeedbackLaw {
            kind,
            gains,
            channels,
            generators,
        })
    }

    /// Same gain on every channel.
    pub fn uniform(kind: FeedbackKind, gain: f64, channels: Vec<ControlChannel>) -> Result<Self> {
        let gains = vec![gain; channels.len()];
        Self::new(kind, gains, channels)
    }

    pub fn kind(&self) -> FeedbackKind {
        self.kind
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn channels(&self) -> &[ControlChannel] {
        &self.channels
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn n(&self) -> usize {
        self.channels[0].n()
    }

    fn check(&self, t: &StokesTensor) -> Result<()> {
        if t.n() != self.n() {
            return Err(Error::SpinMismatch {
                expected: self.n(),
                found: t.n(),
            });
        }
        Ok(())
    }

    /// Control value on every channel.
    pub fn control_value(&self, desired: &StokesTensor, rho: &StokesTensor) -> Result<Vec<f64>> {
        self.check(desired)?;
        self.check(rho)?;
        let mut out = vec![0.0; self.channels.len()];
        self.control_into(desired.as_slice(), rho.as_slice(), &mut out);
        Ok(out)
    }

    /// Orbit-tracking value with `ϱ` given as single-spin factors.
    pub fn control_from_factors(
        &self,
        desired: &StokesTensor,
        factors: &[SingleSpinBloch],
    ) -> Result<Vec<f64>> {
        self.check(desired)?;
        let rho = product_state(factors)?;
        self.check(&rho)?;
        Ok(self.orbit(desired.as_slice(), rho.as_slice()))
    }

    /// Slice form of [`control_value`](Self::control_value); lengths are
    /// assumed to match.
    pub fn control_into(&self, desired: &[f64], rho: &[f64], out: &mut [f64]) {
        match self.kind {
            FeedbackKind::OrbitTracking => {
                for ((o, g), k) in out.iter_mut().zip(&self.generators).zip(&self.gains) {
                    *o = k * g.pairing(desired, rho);
                }
            }
            FeedbackKind::ScalarZ => {
                out[0] = self.gains[0] * rho[2] * (desired[3] - rho[3]);
            }
            FeedbackKind::ProductApprox => {
                let n = self.n();
                let t = StokesTensor::from_vec(n, rho.to_vec()).expect("length checked by caller");
                let factors: Vec<SingleSpinBloch> = (0..n)
                    .map(|s| reduced_state(&t, s).expect("slot in range"))
                    .collect();
                let prod = product_state(&factors).expect("same spin count");
                for ((o, g), k) in out.iter_mut().zip(&self.generators).zip(&self.gains) {
                    *o = k * g.pairing(desired, prod.as_slice());
                }
            }
        }
    }

    fn orbit(&self, desired: &[f64], rho: &[f64]) -> Vec<f64> {
        self.generators
            .iter()
            .zip(&self.gains)
            .map(|(g, k)| k * g.pairing(desired, rho))
            .collect()
    }

    /// A priori bound on `|u_m|` given traceless norms of both arguments.
    pub fn control_bound(&self, desired_norm: f64, rho_norm: f64) -> Vec<f64> {
        match self.kind {
            FeedbackKind::ScalarZ => vec![self.gains[0] * rho_norm * (desired_norm + rho_norm)],
            _ => self
                .generators
                .iter()
                .zip(&self.gains)
                .map(|(g, k)| k * desired_norm * g.inf_norm() * rho_norm)
                .collect(),
        }
    }
}

/// The two addends of `dV/dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateComponents {
    /// `ϱ_dᵀ G_δ ϱ`, sign indefinite.
    pub disturbance: f64,
    /// `−Σ_m u_m ϱ_dᵀ G_m ϱ`.
    pub damping: f64,
}

impl RateComponents {
    pub fn total(&self) -> f64 {
        self.disturbance + self.damping
    }
}

/// Generator of `H_δ = H_fd − H_f`.
pub fn disturbance(hfd: &HamiltonianSpec, hf: &HamiltonianSpec) -> Result<Generator> {
    generator(&hfd.difference(hf)?)
}

pub fn lyapunov_rate_components(
    desired: &StokesTensor,
    rho: &StokesTensor,
    h_delta: &Generator,
    law: &FeedbackLaw,
) -> Result<RateComponents> {
    if h_delta.n() != law.n() {
        return Err(Error::SpinMismatch {
            expected: law.n(),
            found: h_delta.n(),
        });
    }
    let u = law.control_value(desired, rho)?;
    let (d, r) = (desired.as_slice(), rho.as_slice());
    let damping = -u
        .iter()
        .zip(law.generators())
        .map(|(u, g)| u * g.pairing(d, r))
        .sum::<f64>();
    Ok(RateComponents {
        disturbance: h_delta.pairing(d, r),
        damping,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    /// Every reduced traceless part is the negative of the desired one.
    pub antipodal_product: bool,
    /// Per spin: `ϱ³` and `ϱ³_d` both vanish.
    pub equatorial_pair: Vec<bool>,
    pub near_singular_margin: f64,
    pub near_singular: bool,
    /// The start is correlated, so the flags describe its reductions only.
    pub non_product: bool,
}

impl SingularityReport {
    pub fn any_singular(&self) -> bool {
        self.antipodal_product || self.equatorial_pair.iter().any(|&e| e)
    }
}

/// Tests reduced initial data against the singular set of the tracking law.
///
/// Per spin, the antipodal distance is `|ϱ̃ + ϱ̃_d|` and the equatorial
/// distance `max(|ϱ³|, |ϱ³_d|)`. The margin is the smaller of the largest
/// antipodal distance and the smallest equatorial distance. Thresholds are
/// relative to `‖ϱ̃_d‖`.
pub fn singularity_diagnostic(
    rho0: &StokesTensor,
    desired0: &StokesTensor,
) -> Result<SingularityReport> {
    if rho0.n() != desired0.n() {
        return Err(Error::SpinMismatch {
            expected: desired0.n(),
            found: rho0.n(),
        });
    }
    let scale = desired0.traceless_norm();
    let tol = SINGULAR_TOLERANCE * scale;
    let actual = rho0.reductions();
    let wanted = desired0.reductions();
    let mut antipodal = Vec::new();
    let mut equatorial = Vec::new();
    for (a, d) in actual.iter().zip(&wanted) {
        let (ta, td) = (a.traceless(), d.traceless());
        antipodal.push(
            ta.iter()
                .zip(&td)
                .map(|(x, y)| (x + y).powi(2))
                .sum::<f64>()
                .sqrt(),
        );
        equatorial.push(ta[2].abs().max(td[2].abs()));
    }
    let max_anti = antipodal.iter().copied().fold(0.0, f64::max);
    let min_eq = equatorial.iter().copied().fold(f64::INFINITY, f64::min);
    let margin = max_anti.min(min_eq);
    Ok(SingularityReport {
        antipodal_product: scale > 0.0 && max_anti <= tol,
        equatorial_pair: equatorial.iter().map(|&e| e <= tol).collect(),
        near_singular_margin: margin,
        near_singular: margin < NEAR_SINGULAR_MARGIN * scale,
        non_product: rho0.correlation() > tol.max(f64::EPSILON),
    })
}
