//! Continuous-time rigid-body model of a quadrotor driven by rotor speeds.
//!
//! State layout (13 entries): position `p` in the inertial frame, attitude
//! quaternion `q = (w, x, y, z)`, linear velocity `v_b` in the body frame and
//! body angular rate `ω`. The input is the four rotor speeds in krpm.

mod integrator;
mod params;
pub mod quaternion;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector4};

pub use integrator::{erk4_step, erk4_step_t};
pub use params::QuadrotorParams;
pub use quaternion::{
    quat_multiply, quat_normalize, quat_to_euler, quat_to_rotmat, Quaternion,
};

use crate::error::Result;

pub const NX: usize = 13;
pub const NU: usize = 4;

pub const IDX_P: usize = 0;
pub const IDX_Q: usize = 3;
pub const IDX_V: usize = 7;
pub const IDX_W: usize = 10;

pub type StateVector = SVector<f64, NX>;
pub type StateDerivative = SVector<f64, NX>;
/// `∂f/∂ξ`
pub type StateJacobian = SMatrix<f64, NX, NX>;
/// `∂f/∂u`
pub type InputJacobian = SMatrix<f64, NX, NU>;

const MX_SIGNS: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
const MY_SIGNS: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const MZ_SIGNS: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State(pub StateVector);

impl Default for State {
    fn default() -> Self {
        Self::hover_at(Vector3::zeros())
    }
}

impl State {
    pub fn from_parts(
        position: Vector3<f64>,
        attitude: Quaternion,
        velocity_body: Vector3<f64>,
        angular_rate: Vector3<f64>,
    ) -> Self {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(IDX_P).copy_from(&position);
        v.fixed_rows_mut::<4>(IDX_Q)
            .copy_from(&Vector4::from(attitude.as_array()));
        v.fixed_rows_mut::<3>(IDX_V).copy_from(&velocity_body);
        v.fixed_rows_mut::<3>(IDX_W).copy_from(&angular_rate);
        Self(v)
    }

    /// At rest, level, at `position`.
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self::from_parts(
            position,
            Quaternion::identity(),
            Vector3::zeros(),
            Vector3::zeros(),
        )
    }

    pub fn position(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(IDX_P).into_owned()
    }

    pub fn attitude(&self) -> Quaternion {
        Quaternion::new(self.0[IDX_Q], self.0[IDX_Q + 1], self.0[IDX_Q + 2], self.0[IDX_Q + 3])
    }

    pub fn velocity_body(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(IDX_V).into_owned()
    }

    pub fn angular_rate(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(IDX_W).into_owned()
    }

    /// Velocity expressed in the inertial frame.
    pub fn velocity_inertial(&self) -> Vector3<f64> {
        quat_to_rotmat(&self.attitude()) * self.velocity_body()
    }

    pub fn set_position(&mut self, p: Vector3<f64>) {
        self.0.fixed_rows_mut::<3>(IDX_P).copy_from(&p);
    }

    pub fn set_attitude(&mut self, q: Quaternion) {
        self.0
            .fixed_rows_mut::<4>(IDX_Q)
            .copy_from(&Vector4::from(q.as_array()));
    }

    pub fn set_velocity_body(&mut self, v: Vector3<f64>) {
        self.0.fixed_rows_mut::<3>(IDX_V).copy_from(&v);
    }

    pub fn set_angular_rate(&mut self, w: Vector3<f64>) {
        self.0.fixed_rows_mut::<3>(IDX_W).copy_from(&w);
    }

    /// Copy with a unit attitude quaternion.
    pub fn normalized(&self) -> Result<Self> {
        let mut s = *self;
        s.set_attitude(quat_normalize(&self.attitude())?);
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Rotor speeds `(Ω₁, Ω₂, Ω₃, Ω₄)` in krpm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorInput(pub Vector4<f64>);

impl Default for RotorInput {
    fn default() -> Self {
        Self(Vector4::zeros())
    }
}

impl RotorInput {
    pub fn new(o1: f64, o2: f64, o3: f64, o4: f64) -> Self {
        Self(Vector4::new(o1, o2, o3, o4))
    }

    pub fn uniform(omega: f64) -> Self {
        Self(Vector4::repeat(omega))
    }

    pub fn hover(params: &QuadrotorParams) -> Self {
        Self::uniform(params.hover_speed())
    }

    pub fn clamped(&self, lower: &Vector4<f64>, upper: &Vector4<f64>) -> Self {
        Self(self.0.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u)))
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }
}

/// Body-frame total thrust (along body z, N) and moment `(Mx, My, Mz)` (N·m).
pub fn forces_moments(u: &RotorInput, params: &QuadrotorParams) -> (f64, Vector3<f64>) {
    let sq = u.0.map(|o| o * o);
    let signed = |s: &[f64; 4]| (0..4).map(|i| s[i] * sq[i]).sum::<f64>();
    let ctl = params.thrust_coeff * params.arm_length;
    let thrust = params.thrust_coeff * sq.sum();
    let moment = Vector3::new(
        ctl * signed(&MX_SIGNS),
        ctl * signed(&MY_SIGNS),
        params.drag_coeff * signed(&MZ_SIGNS),
    );
    (thrust, moment)
}

fn inertia(params: &QuadrotorParams) -> Vector3<f64> {
    Vector3::new(params.jxx, params.jyy, params.jzz)
}

/// Right-hand side of the equations of motion.
///
/// The quaternion is used as given; callers that need a unit attitude
/// renormalize after integrating.
pub fn eval_f(x: &State, u: &RotorInput, params: &QuadrotorParams) -> StateDerivative {
    let q = x.attitude();
    let v = x.velocity_body();
    let w = x.angular_rate();
    let s = quat_to_rotmat(&q);
    let (thrust, moment) = forces_moments(u, params);
    let j = inertia(params);

    let p_dot = s * v;
    let q_dot = quat_multiply(&q, &Quaternion::pure(&w));
    let v_dot = Vector3::new(0.0, 0.0, thrust / params.mass)
        - s.transpose() * Vector3::new(0.0, 0.0, params.model_gravity())
        - w.cross(&v);
    let jw = j.component_mul(&w);
    let w_dot = (moment - w.cross(&jw)).component_div(&j);

    let mut out = StateDerivative::zeros();
    out.fixed_rows_mut::<3>(IDX_P).copy_from(&p_dot);
    out[IDX_Q] = 0.5 * q_dot.w;
    out[IDX_Q + 1] = 0.5 * q_dot.x;
    out[IDX_Q + 2] = 0.5 * q_dot.y;
    out[IDX_Q + 3] = 0.5 * q_dot.z;
    out.fixed_rows_mut::<3>(IDX_V).copy_from(&v_dot);
    out.fixed_rows_mut::<3>(IDX_W).copy_from(&w_dot);
    out
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Analytic Jacobians `(∂f/∂ξ, ∂f/∂u)` of [`eval_f`].
pub fn eval_f_jacobian(
    x: &State,
    u: &RotorInput,
    params: &QuadrotorParams,
) -> (StateJacobian, InputJacobian) {
    let q = x.attitude();
    let v = x.velocity_body();
    let w = x.angular_rate();
    let s = quat_to_rotmat(&q);
    let ds = quaternion::rotmat_partials(&q);
    let j = inertia(params);
    let g = params.model_gravity();

    let mut jx = StateJacobian::zeros();
    let mut ju = InputJacobian::zeros();

    // ṗ = S v
    jx.fixed_view_mut::<3, 3>(IDX_P, IDX_V).copy_from(&s);
    for k in 0..4 {
        jx.fixed_view_mut::<3, 1>(IDX_P, IDX_Q + k)
            .copy_from(&(ds[k] * v));
    }

    // q̇ = ½ Ω(ω) q = ½ Ξ(q) ω
    #[rustfmt::skip]
    let omega_mat = nalgebra::Matrix4::new(
        0.0, -w.x, -w.y, -w.z,
        w.x, 0.0, w.z, -w.y,
        w.y, -w.z, 0.0, w.x,
        w.z, w.y, -w.x, 0.0,
    );
    #[rustfmt::skip]
    let xi_mat = SMatrix::<f64, 4, 3>::new(
        -q.x, -q.y, -q.z,
        q.w, -q.z, q.y,
        q.z, q.w, -q.x,
        -q.y, q.x, q.w,
    );
    jx.fixed_view_mut::<4, 4>(IDX_Q, IDX_Q)
        .copy_from(&(omega_mat * 0.5));
    jx.fixed_view_mut::<4, 3>(IDX_Q, IDX_W)
        .copy_from(&(xi_mat * 0.5));

    // v̇ = T/m e_z - g Sᵀ e_z - ω × v
    for k in 0..4 {
        let col = -g * ds[k].row(2).transpose();
        jx.fixed_view_mut::<3, 1>(IDX_V, IDX_Q + k).copy_from(&col);
    }
    jx.fixed_view_mut::<3, 3>(IDX_V, IDX_V)
        .copy_from(&(-skew(&w)));
    jx.fixed_view_mut::<3, 3>(IDX_V, IDX_W)
        .copy_from(&skew(&v));

    // ω̇ = J⁻¹ (M - ω × Jω)
    let (jxx, jyy, jzz) = (j.x, j.y, j.z);
    jx[(IDX_W, IDX_W + 1)] = -(jzz - jyy) * w.z / jxx;
    jx[(IDX_W, IDX_W + 2)] = -(jzz - jyy) * w.y / jxx;
    jx[(IDX_W + 1, IDX_W)] = -(jxx - jzz) * w.z / jyy;
    jx[(IDX_W + 1, IDX_W + 2)] = -(jxx - jzz) * w.x / jyy;
    jx[(IDX_W + 2, IDX_W)] = -(jyy - jxx) * w.y / jzz;
    jx[(IDX_W + 2, IDX_W + 1)] = -(jyy - jxx) * w.x / jzz;

    let ctl = params.thrust_coeff * params.arm_length;
    for i in 0..4 {
        let two_o = 2.0 * u.0[i];
        ju[(IDX_V + 2, i)] = params.thrust_coeff * two_o / params.mass;
        ju[(IDX_W, i)] = ctl * MX_SIGNS[i] * two_o / jxx;
        ju[(IDX_W + 1, i)] = ctl * MY_SIGNS[i] * two_o / jyy;
        ju[(IDX_W + 2, i)] = params.drag_coeff * MZ_SIGNS[i] * two_o / jzz;
    }

    (jx, ju)
}

/// One RK4 step of the equations of motion with the input held constant.
pub fn integrate_erk4(x: &State, u: &RotorInput, params: &QuadrotorParams, h: f64) -> State {
    State(erk4_step(|v| eval_f(&State(*v), u, params), &x.0, h))
}
