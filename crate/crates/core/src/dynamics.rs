// SPDX-License-Identifier: Apache-2.0

//! Exact drift propagation, fixed-step RK4 closed loops, and open-loop
//! replay of recorded control traces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{generator, Generator};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::hamiltonian::{ControlChannel, HamiltonianSpec};
use crate::state::{hs_distance, StokesTensor};

/// `dt · radius` above this is rejected.
pub const STABILITY_LIMIT: f64 = 0.1;

/// `dt · radius` above this is accepted with a warning.
pub const STABILITY_WARNING: f64 = 0.05;

/// Relative tolerance used when matching trace times to the step grid.
const GRID_TOLERANCE: f64 = 1e-9;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub renormalize: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let cfg = IntegratorConfig {
            dt,
            t_final,
            record_every: 1,
            renormalize: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    /// `t_final` must be a whole number of steps.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::Config(format!(
                "t_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > GRID_TOLERANCE * self.t_final.max(self.dt) {
            return Err(Error::Config(format!(
                "t_final {} is not a multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn is_sample(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == self.steps()
    }

    /// Step indices at which trajectories are recorded.
    pub fn sample_steps(&self) -> Vec<usize> {
        (0..=self.steps()).filter(|&s| self.is_sample(s)).collect()
    }
}

/// Drift plus control channels, with their generators.
#[derive(Clone, Debug)]
pub struct SpinModel {
    drift: HamiltonianSpec,
    channels: Vec<ControlChannel>,
    drift_generator: Generator,
    channel_generators: Vec<Generator>,
}

impl SpinModel {
    pub fn new(drift: HamiltonianSpec, channels: Vec<ControlChannel>) -> Result<Self> {
        if let Some(c) = channels.iter().find(|c| c.n() != drift.n()) {
            return Err(Error::SpinMismatch {
                expected: drift.n(),
                found: c.n(),
            });
        }
        let drift_generator = generator(&drift)?;
        let channel_generators = channels
            .iter()
            .map(|c| generator(c.spec()))
            .collect::<Result<_>>()?;
        Ok(SpinModel {
            drift,
            channels,
            drift_generator,
            channel_generators,
        })
    }

    pub fn n(&self) -> usize {
        self.drift.n()
    }

    pub fn drift(&self) -> &HamiltonianSpec {
        &self.drift
    }

    pub fn channels(&self) -> &[ControlChannel] {
        &self.channels
    }

    pub fn drift_generator(&self) -> &Generator {
        &self.drift_generator
    }

    pub fn channel_generators(&self) -> &[Generator] {
        &self.channel_generators
    }

    /// Same channels, different drift.
    pub fn with_drift(&self, drift: HamiltonianSpec) -> Result<SpinModel> {
        SpinModel::new(drift, self.channels.clone())
    }

    /// `out = (G_f + Σ u_m G_m) x`.
    fn field(&self, u: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.drift_generator.accumulate(1.0, x, out);
        for (g, &um) in self.channel_generators.iter().zip(u) {
            if um != 0.0 {
                g.accumulate(um, x, out);
            }
        }
    }

    /// Upper bound on the spectral radius of the total generator.
    pub fn radius(&self, max_controls: &[f64]) -> f64 {
        self.drift_generator.inf_norm()
            + self
                .channel_generators
                .iter()
                .zip(max_controls)
                .map(|(g, u)| g.inf_norm() * u.abs())
                .sum::<f64>()
    }
}

/// `exp(t G_H)`, computed by a dense matrix exponential.
pub fn drift_propagator(hf: &HamiltonianSpec, t: f64) -> Result<DMatrix<f64>> {
    let g = generator(hf)?;
    Ok((g.matrix() * t).exp())
}

/// Product of per-term exponentials; only valid for pairwise commuting terms.
pub fn factorized_drift_propagator(hf: &HamiltonianSpec, t: f64) -> Result<DMatrix<f64>> {
    let gens: Vec<Generator> = hf
        .terms()
        .iter()
        .map(|(label, &c)| generator(&HamiltonianSpec::new(hf.n())?.with_term(label.clone(), c)?))
        .collect::<Result<_>>()?;
    for (i, a) in gens.iter().enumerate() {
        for b in &gens[i + 1..] {
            let scale = a.inf_norm().max(b.inf_norm()).max(1.0);
            if a.commutator(b).amax() > 1e-12 * scale * scale {
                return Err(Error::InvalidArgument(
                    "drift terms do not commute; use drift_propagator".into(),
                ));
            }
        }
    }
    let dim = 1 << (2 * hf.n());
    Ok(gens.iter().fold(DMatrix::identity(dim, dim), |acc, g| {
        acc * (g.matrix() * t).exp()
    }))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dt: f64,
    pub steps: usize,
    pub renormalized: bool,
    pub resampled: bool,
    pub stability_product: f64,
    pub warnings: Vec<String>,
}

/// One row of a control trace. Stages 1 to 4 are the RK4 stage values of
/// the step starting at `t`; stage 0 is a plain sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub stage: u8,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrace {
    channels: usize,
    rows: Vec<TraceRow>,
}

impl ControlTrace {
    pub fn new(channels: usize, rows: Vec<TraceRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.u.len() != channels {
                return Err(Error::InvalidArgument(format!(
                    "trace row {i} has {} values, expected {channels}",
                    r.u.len()
                )));
            }
            if r.stage > 4 {
                return Err(Error::InvalidArgument(format!(
                    "trace row {i} has stage {}",
                    r.stage
                )));
            }
            if !r.t.is_finite() || r.u.iter().any(|u| !u.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "trace row {i} is not finite"
                )));
            }
        }
        Ok(ControlTrace { channels, rows })
    }

    /// Zero control sampled once per step.
    pub fn zeros(cfg: &IntegratorConfig, channels: usize) -> ControlTrace {
        let rows = (0..=cfg.steps())
            .map(|k| TraceRow {
                t: k as f64 * cfg.dt,
                stage: 0,
                u: vec![0.0; channels],
            })
            .collect();
        ControlTrace { channels, rows }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn max_abs(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.channels];
        for r in &self.rows {
            for (a, u) in m.iter_mut().zip(&r.u) {
                *a = a.max(u.abs());
            }
        }
        m
    }

    fn stage_rows(&self) -> Vec<&TraceRow> {
        self.rows.iter().filter(|r| r.stage > 0).collect()
    }

    /// True if the trace holds all four stage values of every step of `cfg`.
    pub fn is_stage_complete(&self, cfg: &IntegratorConfig) -> bool {
        let rows = self.stage_rows();
        let steps = cfg.steps();
        if rows.len() != 4 * steps {
            return false;
        }
        let tol = GRID_TOLERANCE * cfg.dt;
        rows.chunks(4).enumerate().all(|(k, chunk)| {
            let t = k as f64 * cfg.dt;
            let want = [t, t + 0.5 * cfg.dt, t + 0.5 * cfg.dt, t + cfg.dt];
            chunk
                .iter()
                .zip(want)
                .enumerate()
                .all(|(s, (r, w))| r.stage as usize == s + 1 && (r.t - w).abs() <= tol)
        })
    }

    fn hold_points(&self) -> Vec<&TraceRow> {
        let mut pts: Vec<&TraceRow> = self.rows.iter().filter(|r| r.stage <= 1).collect();
        if pts.is_empty() {
            pts = self.rows.iter().collect();
        }
        pts.sort_by(|a, b| a.t.total_cmp(&b.t));
        pts
    }

    fn on_grid(&self, dt: f64) -> bool {
        self.hold_points().iter().all(|r| {
            let k = (r.t / dt).round();
            (r.t - k * dt).abs() <= GRID_TOLERANCE * dt
        })
    }
}

/// Zero-order hold over sorted sample points.
struct Hold<'a> {
    points: Vec<&'a TraceRow>,
    tol: f64,
}

impl Hold<'_> {
    fn at(&self, t: f64) -> &[f64] {
        let idx = self.points.partition_point(|r| r.t <= t + self.tol);
        &self.points[idx.saturating_sub(1)].u
    }

    /// Left limit, so a step ending on a switch still sees the old value.
    fn before(&self, t: f64) -> &[f64] {
        let idx = self.points.partition_point(|r| r.t < t - self.tol);
        &self.points[idx.saturating_sub(1)].u
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StokesTensor>,
    pub desired: Option<Vec<StokesTensor>>,
    /// `controls[m][i]` is channel `m` at sample `i`.
    pub controls: Vec<Vec<f64>>,
    /// Empty when `desired` is absent.
    pub lyapunov: Vec<f64>,
    pub metadata: RunMetadata,
    /// Every control value the integrator used, for open-loop replay.
    pub trace: Option<ControlTrace>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `e = ϱ_d − ϱ` at sample `i`.
    pub fn error(&self, i: usize) -> Option<DVector<f64>> {
        self.desired
            .as_ref()
            .map(|d| self.states[i].error_from(&d[i]))
    }

    /// Attaches a desired trajectory sampled on the same grid.
    pub fn with_desired(mut self, desired: Vec<StokesTensor>) -> Result<Trajectory> {
        if desired.len() != self.states.len() {
            return Err(Error::InvalidArgument(format!(
                "desired has {} samples, trajectory {}",
                desired.len(),
                self.states.len()
            )));
        }
        self.lyapunov = desired
            .iter()
            .zip(&self.states)
            .map(|(d, s)| hs_distance(d, s))
            .collect();
        self.desired = Some(desired);
        Ok(self)
    }

    pub fn final_state(&self) -> &StokesTensor {
        self.states.last().expect("trajectory has samples")
    }

    /// `max_t |‖ϱ̃(t)‖ − ‖ϱ̃(0)‖|`.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.states[0].traceless_norm();
        self.states
            .iter()
            .map(|s| (s.traceless_norm() - n0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_control(&self) -> f64 {
        self.controls
            .iter()
            .flatten()
            .fold(0.0f64, |m, u| m.max(u.abs()))
    }

    /// Largest componentwise difference from another trajectory's states.
    pub fn max_state_difference(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a.components() - b.components()).amax())
            .fold(0.0, f64::max)
    }
}

fn stability_check(product: f64, warnings: &mut Vec<String>) -> Result<()> {
    if product > STABILITY_LIMIT {
        return Err(Error::Stability {
            product,
            limit: STABILITY_LIMIT,
        });
    }
    if product > STABILITY_WARNING {
        warnings.push(format!(
            "dt * radius = {product:.4} exceeds the advisory bound {STABILITY_WARNING}"
        ));
    }
    Ok(())
}

fn rescale_traceless(x: &mut [f64], target: f64) {
    let current = x[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
    if current > 0.0 {
        let s = target / current;
        x[1..].iter_mut().for_each(|c| *c *= s);
    }
}

fn tensor(n: usize, x: &[f64]) -> StokesTensor {
    StokesTensor::from_vec(n, x.to_vec()).expect("integrator keeps length and finiteness")
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    Ok(())
}

/// Desired orbit `ϱ_d(t) = exp(t G_fd) ϱ_d(0)` on the sample grid.
pub fn simulate_reference(
    desired0: &StokesTensor,
    hfd: &HamiltonianSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if desired0.n() != hfd.n() {
        return Err(Error::SpinMismatch {
            expected: hfd.n(),
            found: desired0.n(),
        });
    }
    let g = generator(hfd)?;
    let samples = cfg.sample_steps();
    let mut cache: Vec<(usize, DMatrix<f64>)> = Vec::new();
    let mut x = desired0.components().clone();
    let mut states = vec![desired0.clone()];
    for w in samples.windows(2) {
        let gap = w[1] - w[0];
        if !cache.iter().any(|(k, _)| *k == gap) {
            cache.push((gap, (g.matrix() * (gap as f64 * cfg.dt)).exp()));
        }
        let p = &cache.iter().find(|(k, _)| *k == gap).expect("cached").1;
        x = p * x;
        states.push(StokesTensor::new(desired0.n(), x.clone())?);
    }
    Ok(Trajectory {
        times: samples.iter().map(|&s| s as f64 * cfg.dt).collect(),
        states,
        desired: None,
        controls: Vec::new(),
        lyapunov: Vec::new(),
        metadata: RunMetadata {
            dt: cfg.dt,
            steps: cfg.steps(),
            ..RunMetadata::default()
        },
        trace: None,
    })
}

/// RK4 on the coupled pair `(ϱ, ϱ_d)`, with the feedback re-evaluated at
/// every stage.
pub fn simulate_closed_loop(
    model: &SpinModel,
    law: &FeedbackLaw,
    rho0: &StokesTensor,
    desired0: &StokesTensor,
    hfd: &HamiltonianSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = model.n();
    for found in [rho0.n(), desired0.n(), hfd.n(), law.n()] {
        if found != n {
            return Err(Error::SpinMismatch { expected: n, found });
        }
    }
    if law.channels() != model.channels() {
        return Err(Error::InvalidArgument(
            "feedback law and model use different control channels".into(),
        ));
    }
    let gfd = generator(hfd)?;
    let m = model.channels().len();
    let mut warnings = Vec::new();

    let (nr, nd) = (rho0.traceless_norm(), desired0.traceless_norm());
    if (nr - nd).abs() > 1e-9 * nr.max(nd) {
        warnings.push(format!(
            "traceless norms differ: |rho| = {nr:.6e}, |rho_d| = {nd:.6e}"
        ));
    }
    let bounds = law.control_bound(nd, nr);
    let radius = model.radius(&bounds).max(gfd.inf_norm());
    let product = cfg.dt * radius;
    stability_check(product, &mut warnings)?;

    let dim = rho0.as_slice().len();
    let h = cfg.dt;
    let mut x = rho0.as_slice().to_vec();
    let mut y = desired0.as_slice().to_vec();
    let mut kx = vec![vec![0.0; dim]; 4];
    let mut ky = vec![vec![0.0; dim]; 4];
    let mut xs = vec![0.0; dim];
    let mut ys = vec![0.0; dim];
    let mut u = vec![vec![0.0; m]; 4];

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut desired = Vec::new();
    let mut controls = vec![Vec::new(); m];
    let mut rows = Vec::with_capacity(4 * cfg.steps() + 1);
    let steps = cfg.steps();

    for step in 0..steps {
        let t = step as f64 * h;
        law.control_into(&y, &x, &mut u[0]);
        if cfg.is_sample(step) {
            times.push(t);
            states.push(tensor(n, &x));
            desired.push(tensor(n, &y));
            for (c, v) in controls.iter_mut().zip(&u[0]) {
                c.push(*v);
            }
        }
        model.field(&u[0], &x, &mut kx[0]);
        ky[0].fill(0.0);
        gfd.accumulate(1.0, &y, &mut ky[0]);
        for s in 1..4 {
            let a = if s == 3 { h } else { 0.5 * h };
            for i in 0..dim {
                xs[i] = x[i] + a * kx[s - 1][i];
                ys[i] = y[i] + a * ky[s - 1][i];
            }
            law.control_into(&ys, &xs, &mut u[s]);
            model.field(&u[s], &xs, &mut kx[s]);
            ky[s].fill(0.0);
            gfd.accumulate(1.0, &ys, &mut ky[s]);
        }
        advance(&mut x, &kx, h);
        advance(&mut y, &ky, h);
        if cfg.renormalize {
            rescale_traceless(&mut x, nr);
            rescale_traceless(&mut y, nd);
        }
        check_finite(&x, step)?;
        for (s, us) in u.iter().enumerate() {
            let ts = match s {
                0 => t,
                3 => t + h,
                _ => t + 0.5 * h,
            };
            rows.push(TraceRow {
                t: ts,
                stage: s as u8 + 1,
                u: us.clone(),
            });
        }
    }
    let t_end = steps as f64 * h;
    law.control_into(&y, &x, &mut u[0]);
    times.push(t_end);
    states.push(tensor(n, &x));
    desired.push(tensor(n, &y));
    for (c, v) in controls.iter_mut().zip(&u[0]) {
        c.push(*v);
    }
    rows.push(TraceRow {
        t: t_end,
        stage: 0,
        u: u[0].clone(),
    });

    let traj = Trajectory {
        times,
        states,
        desired: None,
        controls,
        lyapunov: Vec::new(),
        metadata: RunMetadata {
            dt: h,
            steps,
            renormalized: cfg.renormalize,
            resampled: false,
            stability_product: product,
            warnings,
        },
        trace: Some(ControlTrace { channels: m, rows }),
    };
    traj.with_desired(desired)
}

fn advance(x: &mut [f64], k: &[Vec<f64>], h: f64) {
    let w = h / 6.0;
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += w * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// Drives `model` with recorded controls and no feedback. A stage-complete
/// trace on the same grid reproduces the closed loop exactly; anything else
/// is held piecewise constant and flagged as resampled when off-grid.
pub fn replay_open_loop(
    model: &SpinModel,
    rho0: &StokesTensor,
    trace: &ControlTrace,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = model.n();
    if rho0.n() != n {
        return Err(Error::SpinMismatch {
            expected: n,
            found: rho0.n(),
        });
    }
    let m = model.channels().len();
    if trace.channels() != m {
        return Err(Error::InvalidArgument(format!(
            "trace has {} channels, model {m}",
            trace.channels()
        )));
    }
    if trace.rows().is_empty() {
        return Err(Error::InvalidArgument("control trace is empty".into()));
    }
    let mut warnings = Vec::new();
    let product = cfg.dt * model.radius(&trace.max_abs());
    stability_check(product, &mut warnings)?;

    let exact = trace.is_stage_complete(cfg);
    let stage_rows = trace.stage_rows();
    let hold = Hold {
        points: trace.hold_points(),
        tol: GRID_TOLERANCE * cfg.dt,
    };
    let resampled = !exact && !trace.on_grid(cfg.dt);
    if resampled {
        warnings.push("control trace is off the integrator grid; zero-order hold applied".into());
    }

    let dim = rho0.as_slice().len();
    let h = cfg.dt;
    let n0 = rho0.traceless_norm();
    let mut x = rho0.as_slice().to_vec();
    let mut kx = vec![vec![0.0; dim]; 4];
    let mut xs = vec![0.0; dim];
    let steps = cfg.steps();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut controls = vec![Vec::new(); m];

    for step in 0..steps {
        let t = step as f64 * h;
        let stage_u = |s: usize| -> &[f64] {
            if exact {
                &stage_rows[4 * step + s].u
            } else {
                match s {
                    0 => hold.at(t),
                    3 => hold.before(t + h),
                    _ => hold.at(t + 0.5 * h),
                }
            }
        };
        if cfg.is_sample(step) {
            times.push(t);
            states.push(tensor(n, &x));
            for (c, v) in controls.iter_mut().zip(stage_u(0)) {
                c.push(*v);
            }
        }
        model.field(stage_u(0), &x, &mut kx[0]);
        for s in 1..4 {
            let a = if s == 3 { h } else { 0.5 * h };
            for i in 0..dim {
                xs[i] = x[i] + a * kx[s - 1][i];
            }
            model.field(stage_u(s), &xs, &mut kx[s]);
        }
        advance(&mut x, &kx, h);
        if cfg.renormalize {
            rescale_traceless(&mut x, n0);
        }
        check_finite(&x, step)?;
    }
    let t_end = steps as f64 * h;
    times.push(t_end);
    states.push(tensor(n, &x));
    let last = hold.at(t_end);
    for (c, v) in controls.iter_mut().zip(last) {
        c.push(*v);
    }

    Ok(Trajectory {
        times,
        states,
        desired: None,
        controls,
        lyapunov: Vec::new(),
        metadata: RunMetadata {
            dt: h,
            steps,
            renormalized: cfg.renormalize,
            resampled,
            stability_product: product,
            warnings,
        },
        trace: None,
    })
}

/// Uncontrolled RK4 propagation, `replay_open_loop` with zero input.
pub fn simulate_drift_rk4(
    model: &SpinModel,
    rho0: &StokesTensor,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    replay_open_loop(
        model,
        rho0,
        &ControlTrace::zeros(cfg, model.channels().len()),
        cfg,
    )
}
