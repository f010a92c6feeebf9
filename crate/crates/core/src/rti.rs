//! Real-time iteration controller and a run-to-convergence SQP built on the
//! same linearization and QP pipeline.

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadrotorParams, RotorInput, State};
use crate::error::{Error, Result};
use crate::ocp::{build_qp, discrete_dynamics, objective, OcpConfig, ReferenceTrajectory, TrajectoryGuess};
use crate::qp::{kkt_residuals, IpmSettings, OcpQp, PreparedQp, QpSolution, QpStatus, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RtiSettings {
    pub solver: SolverKind,
    /// Partial condensing block size for the Riccati pipeline.
    pub block_size: usize,
    pub ipm: IpmSettings,
    /// Run linearization in a separate preparation phase.
    pub split: bool,
    /// Rescale the planned quaternions to unit norm after the shift.
    pub normalize_guess: bool,
}

impl Default for RtiSettings {
    fn default() -> Self {
        Self {
            solver: SolverKind::Riccati,
            block_size: 5,
            ipm: IpmSettings::default(),
            split: true,
            normalize_guess: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CycleDiagnostics {
    pub prep_us: f64,
    pub fb_us: f64,
    pub qp_iters: usize,
    /// Stationarity residual reported by the QP solve.
    pub kkt_stat: f64,
    /// Infinity norm of the primal step.
    pub step_norm: f64,
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    /// First input of the updated plan, clamped to the bounds.
    pub u: RotorInput,
    /// Second state of the updated plan.
    pub predicted: State,
    /// Updated plan before the warm-start shift.
    pub states: Vec<State>,
    pub inputs: Vec<RotorInput>,
    pub diagnostics: CycleDiagnostics,
}

/// One Gauss-Newton SQP iteration per sampling instant.
#[derive(Debug, Clone)]
pub struct RtiController {
    cfg: OcpConfig,
    params: QuadrotorParams,
    settings: RtiSettings,
    guess: TrajectoryGuess,
    prepared: Option<PreparedQp>,
    prep_us: f64,
    qp_solves: usize,
}

impl RtiController {
    /// Cold start with every node at hover above `position`.
    pub fn new(
        cfg: OcpConfig,
        params: QuadrotorParams,
        settings: RtiSettings,
        position: Vector3<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        if settings.block_size == 0 || settings.block_size > cfg.horizon {
            return Err(Error::InvalidConfig(format!(
                "qp.block_size {} outside 1..={}",
                settings.block_size, cfg.horizon
            )));
        }
        let guess = TrajectoryGuess::hover(&params, position, cfg.horizon);
        Ok(Self {
            cfg,
            params,
            settings,
            guess,
            prepared: None,
            prep_us: 0.0,
            qp_solves: 0,
        })
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    pub fn settings(&self) -> &RtiSettings {
        &self.settings
    }

    pub fn guess(&self) -> &TrajectoryGuess {
        &self.guess
    }

    pub fn set_guess(&mut self, guess: TrajectoryGuess) -> Result<()> {
        if guess.horizon() != self.cfg.horizon || guess.states.len() != self.cfg.horizon + 1 {
            return Err(Error::DimensionMismatch("guess does not match the horizon".into()));
        }
        self.guess = guess;
        self.prepared = None;
        Ok(())
    }

    /// Total number of QP solves performed so far.
    pub fn qp_solves(&self) -> usize {
        self.qp_solves
    }

    /// The QP built by the last [`prepare`](Self::prepare), if any.
    pub fn prepared_qp(&self) -> Option<&OcpQp> {
        self.prepared.as_ref().map(|p| p.original())
    }

    /// Linearizes around the current guess and condenses, leaving only the
    /// initial state to be filled in.
    pub fn prepare(&mut self, refs: &ReferenceTrajectory) -> Result<()> {
        let t0 = Instant::now();
        let lin = build_qp(&self.guess, refs, &self.guess.states[0], &self.cfg, &self.params)?;
        self.prepared = Some(PreparedQp::new(
            lin.qp,
            self.settings.solver,
            self.settings.block_size,
            self.settings.ipm,
        )?);
        self.prep_us = t0.elapsed().as_secs_f64() * 1e6;
        Ok(())
    }

    /// Solves the prepared QP for the estimate `x_hat`, applies the full
    /// step and shifts the plan for the next cycle.
    pub fn feedback(&mut self, x_hat: &State) -> Result<ControlOutput> {
        let t0 = Instant::now();
        let prepared = self
            .prepared
            .as_mut()
            .ok_or_else(|| Error::InvalidConfig("feedback called before prepare".into()))?;
        let dx0 = DVector::from_column_slice((x_hat.0 - self.guess.states[0].0).as_slice());
        prepared.set_initial_state(&dx0);
        self.qp_solves += 1;
        let result = prepared.solve();
        self.prepared = None;

        let lo = self.cfg.u_lower();
        let hi = self.cfg.u_upper();
        let mut diag = CycleDiagnostics {
            prep_us: self.prep_us,
            ..Default::default()
        };
        let usable = result.ok().filter(|s| s.is_finite());
        let (u, predicted, states, inputs) = match usable {
            Some(sol) => {
                apply_step(&mut self.guess, &sol);
                diag.qp_iters = sol.iterations;
                diag.kkt_stat = sol.residuals.stationarity;
                diag.step_norm = sol.primal_norm();
                (
                    self.guess.inputs[0].clamped(&lo, &hi),
                    self.guess.states[1],
                    self.guess.states.clone(),
                    self.guess.inputs.clone(),
                )
            }
            None => {
                log::warn!("QP solve failed, reusing the shifted plan");
                diag.degraded = true;
                (
                    self.guess.inputs[0].clamped(&lo, &hi),
                    self.guess.states[1],
                    self.guess.states.clone(),
                    self.guess.inputs.clone(),
                )
            }
        };
        shift(&mut self.guess);
        if self.settings.normalize_guess {
            for st in self.guess.states.iter_mut() {
                if let Ok(unit) = st.normalized() {
                    *st = unit;
                }
            }
        }
        diag.fb_us = t0.elapsed().as_secs_f64() * 1e6;
        Ok(ControlOutput {
            u,
            predicted,
            states,
            inputs,
            diagnostics: diag,
        })
    }

    /// One full control cycle. Without `split`, the whole cycle is timed as
    /// feedback.
    pub fn step(&mut self, refs: &ReferenceTrajectory, x_hat: &State) -> Result<ControlOutput> {
        let t0 = Instant::now();
        self.prepare(refs)?;
        let mut out = self.feedback(x_hat)?;
        if !self.settings.split {
            out.diagnostics.fb_us = t0.elapsed().as_secs_f64() * 1e6;
            out.diagnostics.prep_us = 0.0;
        }
        Ok(out)
    }
}

fn apply_step(guess: &mut TrajectoryGuess, sol: &QpSolution) {
    for (s, dx) in guess.states.iter_mut().zip(&sol.x) {
        s.0 += nalgebra::SVector::<f64, 13>::from_column_slice(dx.as_slice());
    }
    for (u, du) in guess.inputs.iter_mut().zip(&sol.u) {
        u.0 += nalgebra::Vector4::from_column_slice(du.as_slice());
    }
}

/// Moves every node one stage earlier and duplicates the last one.
fn shift(guess: &mut TrajectoryGuess) {
    guess.states.rotate_left(1);
    let n = guess.states.len();
    guess.states[n - 1] = guess.states[n - 2];
    guess.inputs.rotate_left(1);
    let m = guess.inputs.len();
    if m >= 2 {
        guess.inputs[m - 1] = guess.inputs[m - 2];
    }
}

/// Result of [`solve_to_convergence`].
#[derive(Debug, Clone)]
pub struct SqpSolution {
    pub states: Vec<State>,
    pub inputs: Vec<RotorInput>,
    /// Number of QP solves.
    pub iterations: usize,
    /// NLP KKT residual before each linearization after the first.
    pub kkt_history: Vec<f64>,
}

impl SqpSolution {
    /// Largest shooting gap `‖ξ_{i+1} − F(ξ_i, u_i)‖_∞`.
    pub fn max_defect(&self, params: &QuadrotorParams, dt: f64) -> f64 {
        self.inputs
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let next = discrete_dynamics(&self.states[i], u, params, dt);
                (next.0 - self.states[i + 1].0).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Gauss-Newton SQP from a hover guess at `x0` until the NLP KKT residual
/// drops to `kkt_tol`.
///
/// Steps are full whenever that decreases the ℓ1 merit function
/// `J + ν Σ‖gap‖₁`; otherwise they are halved until it does. Multipliers are
/// blended with the same step length.
///
/// The KKT residual is that of the linearized problem at a zero step with the
/// current multipliers, which equals the NLP residual under the Gauss-Newton
/// Hessian. At least one QP is always solved.
pub fn solve_to_convergence(
    cfg: &OcpConfig,
    params: &QuadrotorParams,
    settings: &RtiSettings,
    refs: &ReferenceTrajectory,
    x0: &State,
    max_sqp_iters: usize,
    kkt_tol: f64,
) -> Result<SqpSolution> {
    let n = cfg.horizon;
    let guess = TrajectoryGuess {
        states: vec![*x0; n + 1],
        inputs: vec![RotorInput::hover(params); n],
    };
    solve_to_convergence_from(cfg, params, settings, refs, x0, guess, max_sqp_iters, kkt_tol)
}

/// [`solve_to_convergence`] starting from `guess`.
#[allow(clippy::too_many_arguments)]
pub fn solve_to_convergence_from(
    cfg: &OcpConfig,
    params: &QuadrotorParams,
    settings: &RtiSettings,
    refs: &ReferenceTrajectory,
    x0: &State,
    mut guess: TrajectoryGuess,
    max_sqp_iters: usize,
    kkt_tol: f64,
) -> Result<SqpSolution> {
    cfg.validate()?;
    let n = cfg.horizon;
    if guess.horizon() != n || guess.states.len() != n + 1 {
        return Err(Error::DimensionMismatch(format!(
            "guess has {} inputs and {} states for horizon {n}",
            guess.horizon(),
            guess.states.len()
        )));
    }
    let mut history = Vec::new();
    let mut duals: Option<QpSolution> = None;
    let mut iterations = 0;
    let mut penalty = 0.0_f64;
    loop {
        let lin = build_qp(&guess, refs, x0, cfg, params)?;
        if let Some(prev) = &duals {
            let mut at_zero = QpSolution::zeros(&lin.qp);
            at_zero.x[0] = lin.qp.x0.clone();
            at_zero.pi = prev.pi.clone();
            at_zero.lam_lower = prev.lam_lower.clone();
            at_zero.lam_upper = prev.lam_upper.clone();
            let r = kkt_residuals(&lin.qp, &at_zero).max();
            if !r.is_finite() {
                return Err(Error::NumericalFailure {
                    stage: 0,
                    detail: format!("SQP iterate became non-finite after {iterations} iterations"),
                });
            }
            history.push(r);
            if r <= kkt_tol {
                return Ok(SqpSolution {
                    states: guess.states,
                    inputs: guess.inputs,
                    iterations,
                    kkt_history: history,
                });
            }
        }
        if iterations >= max_sqp_iters {
            return Err(Error::NotConverged {
                iterations,
                last: history.last().copied().unwrap_or(f64::INFINITY),
                history,
            });
        }
        let qp = lin.qp;
        let mut prepared = PreparedQp::new(qp.clone(), settings.solver, settings.block_size.min(n), settings.ipm)?;
        let sol = prepared.solve()?;
        if sol.status != QpStatus::Converged {
            log::warn!("SQP iteration {iterations}: QP stopped at {:?}", sol.residuals);
        }

        let pi_max = sol.pi.iter().map(|v| v.amax()).fold(0.0, f64::max);
        penalty = penalty.max(1.1 * pi_max + 1e-3);
        let infeas = infeasibility(&guess, x0, cfg, params);
        let merit0 = objective(&guess, refs, cfg) + penalty * infeas;
        let slope = gradient_dot(&qp, &sol) - penalty * infeas;
        let mut alpha = 1.0;
        let trial = loop {
            let mut trial = guess.clone();
            apply_scaled_step(&mut trial, &sol, alpha);
            let merit = objective(&trial, refs, cfg) + penalty * infeasibility(&trial, x0, cfg, params);
            if merit.is_finite() && merit <= merit0 + 1e-4 * alpha * slope.min(0.0) {
                break trial;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                break trial;
            }
        };
        guess = trial;
        iterations += 1;
        duals = Some(match duals {
            Some(prev) if alpha < 1.0 => blend_duals(prev, sol, alpha),
            _ => sol,
        });
    }
}

fn apply_scaled_step(guess: &mut TrajectoryGuess, sol: &QpSolution, alpha: f64) {
    for (s, dx) in guess.states.iter_mut().zip(&sol.x) {
        s.0 += nalgebra::SVector::<f64, 13>::from_column_slice(dx.as_slice()) * alpha;
    }
    for (u, du) in guess.inputs.iter_mut().zip(&sol.u) {
        u.0 += nalgebra::Vector4::from_column_slice(du.as_slice()) * alpha;
    }
}

/// `Σ‖F(ξ_i, u_i) − ξ_{i+1}‖₁ + ‖ξ_0 − x0‖₁`
fn infeasibility(guess: &TrajectoryGuess, x0: &State, cfg: &OcpConfig, params: &QuadrotorParams) -> f64 {
    let gaps: f64 = guess
        .inputs
        .iter()
        .enumerate()
        .map(|(i, u)| (discrete_dynamics(&guess.states[i], u, params, cfg.dt).0 - guess.states[i + 1].0).lp_norm(1))
        .sum();
    gaps + (guess.states[0].0 - x0.0).lp_norm(1)
}

/// Directional derivative of the objective along the QP step.
fn gradient_dot(qp: &OcpQp, sol: &QpSolution) -> f64 {
    let stages: f64 = qp
        .stages
        .iter()
        .enumerate()
        .map(|(i, st)| st.gx.dot(&sol.x[i]) + st.gu.dot(&sol.u[i]))
        .sum();
    stages + qp.gx_terminal.dot(&sol.x[qp.horizon()])
}

fn blend_duals(mut prev: QpSolution, new: QpSolution, alpha: f64) -> QpSolution {
    let mix = |a: &mut Vec<DVector<f64>>, b: &[DVector<f64>]| {
        for (x, y) in a.iter_mut().zip(b) {
            *x = &*x * (1.0 - alpha) + y * alpha;
        }
    };
    mix(&mut prev.pi, &new.pi);
    mix(&mut prev.lam_lower, &new.lam_lower);
    mix(&mut prev.lam_upper, &new.lam_upper);
    prev
}
