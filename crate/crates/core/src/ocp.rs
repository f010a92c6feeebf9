//! Multiple-shooting optimal control problem and its Gauss-Newton
//! linearization into a stage-banded QP.
//!
//! The least-squares residual is the stacked state and input, so the
//! Gauss-Newton Hessian blocks are the weight matrices themselves.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    eval_f, eval_f_jacobian, integrate_erk4, InputJacobian, QuadrotorParams, RotorInput, State,
    StateJacobian, StateVector, NU, NX,
};
use crate::error::{Error, Result};
use crate::qp::{OcpQp, QpStage};

/// Length of a stage reference: state then input.
pub const NY: usize = NX + NU;

pub type StageReference = SVector<f64, NY>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcpConfig {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal of the stage weight.
    #[serde(rename = "W")]
    pub w: [f64; NY],
    /// Diagonal of the terminal weight.
    #[serde(rename = "WN")]
    pub w_terminal: [f64; NX],
    pub u_min: [f64; NU],
    pub u_max: [f64; NU],
}

const STATE_WEIGHTS: [f64; NX] = [
    120.0, 100.0, 100.0, 1e-3, 1e-3, 1e-3, 1e-3, 0.7, 1.0, 4.0, 1e-5, 1e-5, 10.0,
];
const INPUT_WEIGHT: f64 = 0.06;
const TERMINAL_FACTOR: f64 = 50.0;

impl Default for OcpConfig {
    fn default() -> Self {
        let mut w = [INPUT_WEIGHT; NY];
        w[..NX].copy_from_slice(&STATE_WEIGHTS);
        Self {
            horizon: 50,
            dt: 0.015,
            w,
            w_terminal: STATE_WEIGHTS.map(|v| TERMINAL_FACTOR * v),
            u_min: [0.0; NU],
            u_max: [22.0; NU],
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("nmpc.N must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("nmpc.dt must be positive, got {}", self.dt)));
        }
        if let Some(v) = self.w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidConfig(format!("nmpc.W entries must be positive, got {v}")));
        }
        if let Some(v) = self.w_terminal.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidConfig(format!("nmpc.WN entries must be positive, got {v}")));
        }
        for i in 0..NU {
            if !(self.u_min[i] < self.u_max[i]) {
                return Err(Error::InvalidConfig(format!(
                    "nmpc.u_min[{i}] = {} is not below nmpc.u_max[{i}] = {}",
                    self.u_min[i], self.u_max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn u_lower(&self) -> Vector4<f64> {
        Vector4::from(self.u_min)
    }

    pub fn u_upper(&self) -> Vector4<f64> {
        Vector4::from(self.u_max)
    }

    pub fn state_weight(&self) -> SMatrix<f64, NX, NX> {
        SMatrix::from_diagonal(&SVector::<f64, NX>::from_column_slice(&self.w[..NX]))
    }

    pub fn input_weight(&self) -> SMatrix<f64, NU, NU> {
        SMatrix::from_diagonal(&SVector::<f64, NU>::from_column_slice(&self.w[NX..]))
    }

    pub fn terminal_weight(&self) -> SMatrix<f64, NX, NX> {
        SMatrix::from_diagonal(&SVector::<f64, NX>::from(self.w_terminal))
    }
}

/// References over one horizon: `N` stage points and a terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub stages: Vec<StageReference>,
    pub terminal: StateVector,
}

impl ReferenceTrajectory {
    /// Stacks a state and an input into a stage reference.
    pub fn stage_point(state: &State, input: &RotorInput) -> StageReference {
        let mut y = StageReference::zeros();
        y.fixed_rows_mut::<NX>(0).copy_from(&state.0);
        y.fixed_rows_mut::<NU>(NX).copy_from(&input.0);
        y
    }

    /// Samples `point(i)` for stages `0..=n`; the input part of the last
    /// sample is dropped.
    pub fn from_fn(n: usize, mut point: impl FnMut(usize) -> StageReference) -> Self {
        let stages: Vec<_> = (0..n).map(&mut point).collect();
        let terminal = point(n).fixed_rows::<NX>(0).into_owned();
        Self { stages, terminal }
    }

    /// Hover at `position` for every stage.
    pub fn hover(params: &QuadrotorParams, position: Vector3<f64>, n: usize) -> Self {
        let y = Self::stage_point(&State::hover_at(position), &RotorInput::hover(params));
        Self::from_fn(n, |_| y)
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
}

/// One RK4 step of the dynamics over `dt`.
pub fn discrete_dynamics(x: &State, u: &RotorInput, params: &QuadrotorParams, dt: f64) -> State {
    integrate_erk4(x, u, params, dt)
}

/// Value and Jacobians of [`discrete_dynamics`], propagated forward through
/// the four RK4 stages. The value is bitwise equal to `discrete_dynamics`.
pub fn discrete_dynamics_sensitivities(
    x: &State,
    u: &RotorInput,
    params: &QuadrotorParams,
    dt: f64,
) -> (State, StateJacobian, InputJacobian) {
    if dt == 0.0 {
        return (*x, StateJacobian::identity(), InputJacobian::zeros());
    }
    let h = dt;
    let f = |v: &StateVector| eval_f(&State(*v), u, params);
    let jac = |v: &StateVector| eval_f_jacobian(&State(*v), u, params);
    let eye = StateJacobian::identity();

    let x1 = x.0;
    let k1 = f(&x1);
    let (fx1, fu1) = jac(&x1);
    let (k1x, k1u) = (fx1, fu1);

    let x2 = x1 + k1 * (0.5 * h);
    let k2 = f(&x2);
    let (fx2, fu2) = jac(&x2);
    let k2x = fx2 * (eye + k1x * (0.5 * h));
    let k2u = fx2 * (k1u * (0.5 * h)) + fu2;

    let x3 = x1 + k2 * (0.5 * h);
    let k3 = f(&x3);
    let (fx3, fu3) = jac(&x3);
    let k3x = fx3 * (eye + k2x * (0.5 * h));
    let k3u = fx3 * (k2u * (0.5 * h)) + fu3;

    let x4 = x1 + k3 * h;
    let k4 = f(&x4);
    let (fx4, fu4) = jac(&x4);
    let k4x = fx4 * (eye + k3x * h);
    let k4u = fx4 * (k3u * h) + fu4;

    let value = x1 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let a = eye + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
    let b = (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
    (State(value), a, b)
}

/// Gauss-Newton model of one stage around `(ξⁿ, uⁿ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLinearization {
    pub a: StateJacobian,
    pub b: InputJacobian,
    /// `F(ξⁿ, uⁿ)`.
    pub f: StateVector,
    /// `F(ξⁿ, uⁿ) − A ξⁿ − B uⁿ`.
    pub d: StateVector,
    pub q: SMatrix<f64, NX, NX>,
    pub r: SMatrix<f64, NU, NU>,
    pub gq: StateVector,
    pub gr: Vector4<f64>,
    /// Bounds on the input step.
    pub g_lower: Vector4<f64>,
    pub g_upper: Vector4<f64>,
}

pub fn linearize_stage(
    x: &State,
    u: &RotorInput,
    reference: &StageReference,
    cfg: &OcpConfig,
    params: &QuadrotorParams,
) -> StageLinearization {
    let (f, a, b) = discrete_dynamics_sensitivities(x, u, params, cfg.dt);
    let q = cfg.state_weight();
    let r = cfg.input_weight();
    let x_ref = reference.fixed_rows::<NX>(0);
    let u_ref = reference.fixed_rows::<NU>(NX);
    StageLinearization {
        d: f.0 - a * x.0 - b * u.0,
        f: f.0,
        a,
        b,
        gq: q * (x.0 - x_ref),
        gr: r * (u.0 - u_ref),
        q,
        r,
        g_lower: cfg.u_lower() - u.0,
        g_upper: cfg.u_upper() - u.0,
    }
}

/// Primal iterate of the multiple-shooting NLP.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGuess {
    pub states: Vec<State>,
    pub inputs: Vec<RotorInput>,
}

impl TrajectoryGuess {
    /// Every node at hover above `position`.
    pub fn hover(params: &QuadrotorParams, position: Vector3<f64>, n: usize) -> Self {
        Self {
            states: vec![State::hover_at(position); n + 1],
            inputs: vec![RotorInput::hover(params); n],
        }
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.inputs.len() != n || self.states.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "guess has {} states and {} inputs, horizon {n} needs {} and {n}",
                self.states.len(),
                self.inputs.len(),
                n + 1
            )));
        }
        Ok(())
    }
}

/// The QP in the step `Δw = w − wⁿ` around `guess`, plus the stage models it
/// was built from. The QP's dynamics offset is the shooting gap
/// `F(ξⁿ_i, uⁿ_i) − ξⁿ_{i+1}`.
#[derive(Debug, Clone)]
pub struct LinearizedOcp {
    pub stages: Vec<StageLinearization>,
    pub qp: OcpQp,
}

pub fn build_qp(
    guess: &TrajectoryGuess,
    refs: &ReferenceTrajectory,
    x_hat: &State,
    cfg: &OcpConfig,
    params: &QuadrotorParams,
) -> Result<LinearizedOcp> {
    let n = cfg.horizon;
    guess.check(n)?;
    if refs.horizon() != n {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} stages, horizon is {n}",
            refs.horizon()
        )));
    }
    let stages: Vec<StageLinearization> = (0..n)
        .map(|i| linearize_stage(&guess.states[i], &guess.inputs[i], &refs.stages[i], cfg, params))
        .collect();
    let qp_stages = stages
        .iter()
        .enumerate()
        .map(|(i, s)| QpStage {
            a: DMatrix::from_column_slice(NX, NX, s.a.as_slice()),
            b: DMatrix::from_column_slice(NX, NU, s.b.as_slice()),
            c: DVector::from_column_slice((s.f - guess.states[i + 1].0).as_slice()),
            q: DMatrix::from_column_slice(NX, NX, s.q.as_slice()),
            s: DMatrix::zeros(NU, NX),
            r: DMatrix::from_column_slice(NU, NU, s.r.as_slice()),
            gx: DVector::from_column_slice(s.gq.as_slice()),
            gu: DVector::from_column_slice(s.gr.as_slice()),
            lb: DVector::from_column_slice(s.g_lower.as_slice()),
            ub: DVector::from_column_slice(s.g_upper.as_slice()),
        })
        .collect();
    let wn = cfg.terminal_weight();
    let gx_terminal = wn * (guess.states[n].0 - refs.terminal);
    Ok(LinearizedOcp {
        stages,
        qp: OcpQp {
            stages: qp_stages,
            q_terminal: DMatrix::from_column_slice(NX, NX, wn.as_slice()),
            gx_terminal: DVector::from_column_slice(gx_terminal.as_slice()),
            x0: DVector::from_column_slice((x_hat.0 - guess.states[0].0).as_slice()),
        },
    })
}

/// Value of the least-squares objective at `guess`.
pub fn objective(guess: &TrajectoryGuess, refs: &ReferenceTrajectory, cfg: &OcpConfig) -> f64 {
    let mut total = 0.0;
    for i in 0..guess.horizon() {
        let y = ReferenceTrajectory::stage_point(&guess.states[i], &guess.inputs[i]) - refs.stages[i];
        total += 0.5 * y.iter().zip(&cfg.w).map(|(e, w)| w * e * e).sum::<f64>();
    }
    let e = guess.states[guess.horizon()].0 - refs.terminal;
    total + 0.5 * e.iter().zip(&cfg.w_terminal).map(|(e, w)| w * e * e).sum::<f64>()
}
