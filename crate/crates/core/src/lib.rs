// SPDX-License-Identifier: Apache-2.0

//! Lyapunov feedback tracking for coupled spin-1/2 systems, simulated in the
//! real Stokes-tensor representation.
//!
//! Modules follow the data flow: [`algebra`] builds the product-operator
//! basis and generators, [`state`] holds Stokes tensors, [`hamiltonian`]
//! assembles drift and control terms, [`feedback`] evaluates control laws,
//! [`dynamics`] integrates them, and [`experiments`] wires everything to
//! JSON scenarios and CSV output.

pub mod algebra;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod feedback;
pub mod hamiltonian;
pub mod state;

pub use algebra::{generator, BasisLabel, Generator, OperatorMatrix};
pub use dynamics::{IntegratorConfig, SpinModel, Trajectory};
pub use error::{Error, Result};
pub use feedback::{FeedbackKind, FeedbackLaw};
pub use hamiltonian::{ControlChannel, HamiltonianSpec};
pub use state::{SingleSpinBloch, StokesTensor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/algebra.md")]
    pub struct Algebra;
    #[doc = include_str!("../../../book/src/states.md")]
    pub struct States;
    #[doc = include_str!("../../../book/src/hamiltonians.md")]
    pub struct Hamiltonians;
    #[doc = include_str!("../../../book/src/feedback.md")]
    pub struct Feedback;
    #[doc = include_str!("../../../book/src/dynamics.md")]
    pub struct Dynamics;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
