//! Closed-loop simulation: plant integration on a fine grid, delayed and
//! optionally noisy measurements, delay compensation, and the controller
//! running once per sampling period.

mod commands;
mod filter;
mod metrics;
mod reference;
mod trace;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use commands::{reconstruct_commands, rotor_speed_to_pwm, Setpoint};
pub use filter::{Butterworth2, Butterworth2x3};
pub use metrics::{compute_metrics, step_response, Metrics};
pub use reference::{
    gen_helix, gen_smooth_step, HelixConfig, Reference, ReferenceTable, SmoothStepConfig,
};
pub use trace::{read_trace_csv, write_diagnostics_csv, write_trace_csv, TraceRecord};

use crate::delay::{predict, DelayConfig, InputBuffer};
use crate::dynamics::{integrate_erk4, QuadrotorParams, Quaternion, RotorInput, State};
use crate::error::{Error, Result};
use crate::lqr::{LqrConfig, LqrDesign};
use crate::ocp::OcpConfig;
use crate::rti::{CycleDiagnostics, RtiController, RtiSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Nmpc,
    Lqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Hold position at `start`.
    Hover,
    /// Reference jumps from `start` to `target` at `t = 0`.
    Step,
    /// Feasible transfer from `start` to `target`.
    SmoothStep,
    Helix,
    /// Reference read from `reference_file`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Position standard deviation, m.
    pub sigma_p: f64,
    /// Attitude standard deviation per axis, degrees.
    pub sigma_att_deg: f64,
    /// Body-rate standard deviation, rad/s.
    pub sigma_w: f64,
    /// Body-velocity standard deviation, m/s.
    pub sigma_v: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma_p: 1e-3,
            sigma_att_deg: 0.2,
            sigma_w: 0.01,
            sigma_v: 0.0,
        }
    }
}

/// Velocity estimation from measured positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub enabled: bool,
    pub cutoff_hz: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            cutoff_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Simulated time, s; the scenario default when absent.
    pub duration: Option<f64>,
    /// Plant integration step, s.
    pub h_sim: f64,
    /// Controller sampling period, s.
    pub sampling_time: f64,
    pub controller: ControllerKind,
    pub scenario: ScenarioKind,
    pub start: [f64; 3],
    pub target: [f64; 3],
    pub reference_file: Option<String>,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub filter: FilterConfig,
    /// The run stops as diverged once any position coordinate is this far
    /// from the reference, m.
    pub divergence_limit: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: None,
            h_sim: 0.001,
            sampling_time: 0.015,
            controller: ControllerKind::Nmpc,
            scenario: ScenarioKind::Step,
            start: [0.0, 0.0, 0.4],
            target: [1.0, -1.0, 1.0],
            reference_file: None,
            seed: 0,
            noise: NoiseConfig::default(),
            filter: FilterConfig::default(),
            divergence_limit: 5.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_sim > 0.0 && self.sampling_time > 0.0 && self.h_sim <= self.sampling_time) {
            return Err(Error::InvalidConfig(
                "sim.h_sim must be positive and no larger than sim.sampling_time".into(),
            ));
        }
        let ratio = self.sampling_time / self.h_sim;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "sim.h_sim = {} does not divide sim.sampling_time = {}",
                self.h_sim, self.sampling_time
            )));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidConfig(format!("sim.duration must be positive, got {d}")));
            }
        }
        if !(self.divergence_limit > 0.0) {
            return Err(Error::InvalidConfig("sim.divergence_limit must be positive".into()));
        }
        if self.scenario == ScenarioKind::File && self.reference_file.is_none() {
            return Err(Error::InvalidConfig("sim.scenario = \"file\" needs sim.reference_file".into()));
        }
        Ok(())
    }

    pub fn start_position(&self) -> Vector3<f64> {
        Vector3::from(self.start)
    }

    pub fn target_position(&self) -> Vector3<f64> {
        Vector3::from(self.target)
    }
}

/// Everything a closed-loop run needs apart from the reference.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSetup {
    pub model: QuadrotorParams,
    pub nmpc: OcpConfig,
    pub rti: RtiSettings,
    pub lqr: LqrConfig,
    pub delay: DelayConfig,
    pub sim: SimConfig,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.nmpc.validate()?;
        self.lqr.validate()?;
        self.delay.validate()?;
        self.sim.validate()
    }

    /// Scenario default duration unless one is configured.
    pub fn duration(&self, reference: &Reference) -> f64 {
        self.sim.duration.unwrap_or(match (&self.sim.scenario, reference) {
            (ScenarioKind::Hover, _) => 2.0,
            (ScenarioKind::Step, _) => 5.0,
            (_, Reference::Table(t)) => t.duration() + 1.0,
            _ => 5.0,
        })
    }
}

/// Builds the reference and the initial state for the configured scenario.
/// File references must be loaded by the caller.
pub fn scenario_reference(setup: &SimSetup) -> Result<(Reference, State)> {
    let p = &setup.model;
    let start = setup.sim.start_position();
    let target = setup.sim.target_position();
    match setup.sim.scenario {
        ScenarioKind::Hover => Ok((Reference::Hover(start), State::hover_at(start))),
        ScenarioKind::Step => Ok((Reference::Hover(target), State::hover_at(start))),
        ScenarioKind::SmoothStep => {
            let cfg = SmoothStepConfig {
                start: setup.sim.start,
                target: setup.sim.target,
                ..Default::default()
            };
            let (table, _) = gen_smooth_step(&cfg, &setup.nmpc, &setup.rti, p)?;
            Ok((Reference::Table(table), State::hover_at(start)))
        }
        ScenarioKind::Helix => {
            let table = gen_helix(&HelixConfig::default(), p)?;
            let x0 = State::hover_at(table.states[0].position());
            Ok((Reference::Table(table), x0))
        }
        ScenarioKind::File => Err(Error::InvalidConfig(
            "file references are loaded by the caller".into(),
        )),
    }
}

/// One logged control cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Ground truth at `t`.
    pub state: State,
    /// What the controller received.
    pub measured: State,
    /// State handed to the controller after delay compensation.
    pub estimate: State,
    /// Controller's prediction of the state one stage ahead.
    pub predicted: Option<State>,
    /// Command computed this cycle.
    pub command: RotorInput,
    /// Input acting on the plant at `t`.
    pub applied: RotorInput,
    pub reference: Vector3<f64>,
    pub diagnostics: CycleDiagnostics,
    pub predictor_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub sampling_time: f64,
    /// Set when the run stopped early.
    pub failure: Option<String>,
    /// The failure was the vehicle leaving the divergence limit.
    pub diverged: bool,
    /// Largest `|‖q‖ − 1|` seen after any plant step, before renormalizing.
    pub max_quat_drift: f64,
    /// Largest `|‖q‖ − 1|` of any stored ground-truth state.
    pub max_quat_error: f64,
}

impl SimTrace {
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.rows.iter().map(|r| r.state.position()).collect()
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

enum Controller {
    Nmpc(Box<RtiController>),
    Lqr(LqrDesign),
}

/// Delays in plant steps. The split between measurement and actuation is
/// rounded so that their sum is preserved.
fn delay_ticks(setup: &SimSetup) -> (usize, usize, usize) {
    let h = setup.sim.h_sim;
    let d = setup.delay.resolve(setup.sim.sampling_time);
    let to_ticks = |v: f64| {
        let r = v / h;
        if (r - r.round()).abs() > 1e-6 {
            log::warn!("delay {v} s is not a multiple of the plant step {h} s; rounding");
        }
        r
    };
    let d1 = (to_ticks(d.tau1) - 1e-6).round().max(0.0) as usize;
    let d12 = to_ticks(d.tau1 + d.tau2).round() as usize;
    let dc = to_ticks(d.tauc).round() as usize;
    (d1, d12.saturating_sub(d1), dc)
}

fn add_noise(x: &State, cfg: &NoiseConfig, rng: &mut ChaCha8Rng) -> Result<State> {
    let gauss = |s: f64, rng: &mut ChaCha8Rng| -> Result<Vector3<f64>> {
        if s <= 0.0 {
            return Ok(Vector3::zeros());
        }
        let n = Normal::new(0.0, s).map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
        Ok(Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
    };
    let mut y = *x;
    y.set_position(x.position() + gauss(cfg.sigma_p, rng)?);
    let rot = gauss(cfg.sigma_att_deg.to_radians(), rng)?;
    let dq = Quaternion::from_axis_angle(&rot, rot.norm());
    y.set_attitude((x.attitude() * dq).normalize()?);
    y.set_velocity_body(x.velocity_body() + gauss(cfg.sigma_v, rng)?);
    y.set_angular_rate(x.angular_rate() + gauss(cfg.sigma_w, rng)?);
    Ok(y)
}

/// Runs the configured controller against `reference` from `x0`.
pub fn run_closed_loop(setup: &SimSetup, reference: &Reference, x0: &State) -> Result<SimTrace> {
    setup.validate()?;
    let p = &setup.model;
    let h = setup.sim.h_sim;
    let ts = setup.sim.sampling_time;
    let tpc = (ts / h).round() as usize;
    let (d1, d2, dc) = delay_ticks(setup);
    let cycles = (setup.duration(reference) / ts + 1e-9).floor() as usize;
    let compensate = setup.delay.compensate && d1 + d2 + dc > 0;

    let mut controller = match setup.sim.controller {
        ControllerKind::Nmpc => {
            let mut c = RtiController::new(setup.nmpc.clone(), *p, setup.rti, x0.position())?;
            let mut guess = c.guess().clone();
            guess.states.iter_mut().for_each(|s| *s = *x0);
            c.set_guess(guess)?;
            Controller::Nmpc(Box::new(c))
        }
        ControllerKind::Lqr => Controller::Lqr(LqrDesign::new(
            p,
            &setup.lqr,
            ts,
            setup.nmpc.u_lower(),
            setup.nmpc.u_upper(),
        )?),
    };
    let (lo, hi) = (setup.nmpc.u_lower(), setup.nmpc.u_upper());

    let mut rng = ChaCha8Rng::seed_from_u64(setup.sim.seed);
    let mut vel_filter = if setup.sim.filter.enabled {
        Some(Butterworth2x3::new(setup.sim.filter.cutoff_hz, 1.0 / ts)?)
    } else {
        None
    };
    let mut last_meas_pos: Option<Vector3<f64>> = None;

    let mut x = *x0;
    let mut history = vec![*x0];
    // Inputs keyed by the time they start acting on the plant.
    let mut buffer = InputBuffer::new();
    buffer.push(-1.0, RotorInput::hover(p))?;

    let mut trace = SimTrace {
        sampling_time: ts,
        ..Default::default()
    };
    for k in 0..cycles {
        let j = k * tpc;
        let t = j as f64 * h;
        let meas_tick = j.saturating_sub(d1);
        let mut measured = history[meas_tick];
        if setup.sim.noise.enabled {
            measured = add_noise(&measured, &setup.sim.noise, &mut rng)?;
        }
        if let Some(f) = vel_filter.as_mut() {
            let pos = measured.position();
            let raw = match last_meas_pos {
                Some(prev) => (pos - prev) / ts,
                None => {
                    f.reset(Vector3::zeros());
                    Vector3::zeros()
                }
            };
            last_meas_pos = Some(pos);
            let v_inertial = f.process(raw);
            let rot = measured.attitude().to_rotation_matrix();
            measured.set_velocity_body(rot.transpose() * v_inertial);
        }

        let effect_tick = j + dc + d2;
        let (estimate, fallback) = if compensate {
            let pr = predict(
                &measured,
                meas_tick as f64 * h,
                &buffer,
                0.0,
                (effect_tick - meas_tick) as f64 * h,
                setup.delay.predictor_steps,
                setup.delay.inputs,
                p,
            )?;
            (pr.state, pr.used_fallback)
        } else {
            (measured, false)
        };
        let ref_t0 = if compensate { effect_tick as f64 * h } else { t };

        let (command, predicted, diagnostics) = match &mut controller {
            Controller::Nmpc(c) => {
                let refs = reference.horizon(ref_t0, setup.nmpc.dt, setup.nmpc.horizon, p);
                match c.step(&refs, &estimate) {
                    Ok(out) => (out.u, Some(out.predicted), out.diagnostics),
                    Err(e) => {
                        trace.failure = Some(format!("controller failed at t = {t:.3} s: {e}"));
                        break;
                    }
                }
            }
            Controller::Lqr(d) => {
                let t0 = std::time::Instant::now();
                let u = d.control(&estimate, &reference.position(ref_t0, p));
                let diag = CycleDiagnostics {
                    fb_us: t0.elapsed().as_secs_f64() * 1e6,
                    ..Default::default()
                };
                (u, None, diag)
            }
        };
        let command = command.clamped(&lo, &hi);
        let applied = buffer.input_at(t).unwrap_or_else(|| RotorInput::hover(p));
        trace.rows.push(TraceRow {
            t,
            state: x,
            measured,
            estimate,
            predicted,
            command,
            applied,
            reference: reference.position(t, p),
            diagnostics,
            predictor_fallback: fallback,
        });
        buffer.push(effect_tick as f64 * h, command)?;

        for tick in j..j + tpc {
            let u = buffer.input_at(tick as f64 * h).unwrap_or_else(|| RotorInput::hover(p));
            let next = integrate_erk4(&x, &u, p, h);
            trace.max_quat_drift = trace.max_quat_drift.max((next.attitude().norm() - 1.0).abs());
            x = match next.normalized() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    trace.failure = Some(format!("plant state diverged at t = {:.3} s", tick as f64 * h));
                    trace.diverged = true;
                    return Ok(trace);
                }
            };
            trace.max_quat_error = trace.max_quat_error.max((x.attitude().norm() - 1.0).abs());
            history.push(x);
        }
        let t_end = (j + tpc) as f64 * h;
        if (x.position() - reference.position(t_end, p)).amax() > setup.sim.divergence_limit {
            trace.failure = Some(format!("diverged at t = {t_end:.3} s"));
            trace.diverged = true;
            break;
        }
        let next_meas = (j + tpc).saturating_sub(d1);
        buffer.prune_before(next_meas as f64 * h - h);
    }
    Ok(trace)
}
