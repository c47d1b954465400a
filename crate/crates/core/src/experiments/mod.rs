// SPDX-License-Identifier: Apache-2.0

//! Scenario files, runs, sweeps and their CSV/JSON artifacts.

pub mod config;
pub mod io;
pub mod run;
pub mod sweep;

pub use config::{Scenario, ScenarioConfig};
pub use run::{check, fid, replay_scenario, run_scenario, CheckReport, RunOutput, Summary};
pub use sweep::{run_sweep, SweepSpec, SweepTable};
