//! Discrete LQR baseline designed on the hover linearization with the scalar
//! quaternion part removed.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadrotorParams, RotorInput, State, IDX_Q, NU, NX};
use crate::error::{Error, Result};
use crate::ocp::discrete_dynamics_sensitivities;

/// Size of the reduced state.
pub const NR: usize = NX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrConfig {
    /// Diagonal state weight in reduced order
    /// `(x, y, z, qx, qy, qz, vx, vy, vz, ωx, ωy, ωz)`.
    #[serde(rename = "Q")]
    pub q: [f64; NR],
    #[serde(rename = "R")]
    pub r: [f64; NU],
    pub dare_tol: f64,
    pub dare_max_iters: usize,
    pub dare_method: DareMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DareMethod {
    /// Plain iteration of the Riccati map.
    FixedPoint,
    /// Structured doubling: each step squares the horizon covered.
    Doubling,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            q: [
                12.24e3, 10.2e3, 9e5, 0.102, 0.102, 0.102, 71.4, 102.0, 408.0, 1.02e-3, 1.02e-3, 1.02e3,
            ],
            r: [0.12; NU],
            dare_tol: 1e-10,
            dare_max_iters: 10_000,
            dare_method: DareMethod::Doubling,
        }
    }
}

impl LqrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("lqr.Q entries must be non-negative".into()));
        }
        if self.r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("lqr.R entries must be positive".into()));
        }
        if !(self.dare_tol > 0.0) || self.dare_max_iters == 0 {
            return Err(Error::InvalidConfig("lqr.dare_tol and lqr.dare_max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Drops the scalar quaternion part, flipping the quaternion first if its
/// scalar part is negative.
pub fn reduce_state(x: &State) -> DVector<f64> {
    let sign = if x.0[IDX_Q] < 0.0 { -1.0 } else { 1.0 };
    DVector::from_iterator(
        NR,
        (0..NX).filter(|&i| i != IDX_Q).map(|i| {
            if (IDX_Q + 1..IDX_Q + 4).contains(&i) {
                sign * x.0[i]
            } else {
                x.0[i]
            }
        }),
    )
}

fn reduction() -> DMatrix<f64> {
    DMatrix::from_fn(NR, NX, |r, c| {
        let src = if r < IDX_Q { r } else { r + 1 };
        if src == c { 1.0 } else { 0.0 }
    })
}

/// Full discrete Jacobians at hover, before reduction.
pub fn hover_jacobians(params: &QuadrotorParams, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (_, a, b) =
        discrete_dynamics_sensitivities(&State::hover_at(Vector3::zeros()), &RotorInput::hover(params), params, dt);
    (
        DMatrix::from_column_slice(NX, NX, a.as_slice()),
        DMatrix::from_column_slice(NX, NU, b.as_slice()),
    )
}

/// Reduced `(A, B)` of the hover linearization. Fails if the pair is not
/// controllable.
pub fn linearize_and_reduce(params: &QuadrotorParams, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (a, b) = hover_jacobians(params, dt);
    let t = reduction();
    let ar = &t * a * t.transpose();
    let br = &t * b;
    let rank = controllability_rank(&ar, &br);
    if rank < NR {
        return Err(Error::Uncontrollable { rank, expected: NR });
    }
    Ok((ar, br))
}

/// Rank of `[B, AB, …, Aⁿ⁻¹B]`, with each block column normalized before
/// the singular value test.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut c = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        for j in 0..m {
            let col = blk.column(j);
            let norm = col.norm();
            let scaled = if norm > 0.0 { col / norm } else { col.into_owned() };
            c.column_mut(k * m + j).copy_from(&scaled);
        }
        blk = a * blk;
    }
    // Row scaling too: states live on very different scales.
    for i in 0..n {
        let norm = c.row(i).norm();
        if norm > 0.0 {
            c.row_mut(i).scale_mut(1.0 / norm);
        }
    }
    let sv = c.singular_values();
    let smax = sv.max();
    sv.iter().filter(|s| **s > smax * 1e-10).count()
}

/// Right-hand side of the Riccati map.
fn riccati_map(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let pb = p * b;
    let h = r + b.tr_mul(&pb);
    let chol = h.cholesky().ok_or_else(|| Error::NumericalFailure {
        stage: 0,
        detail: "BᵀPB + R is not positive definite".into(),
    })?;
    let k = chol.solve(&b.tr_mul(&pa));
    let next = a.tr_mul(&pa) - a.tr_mul(&pb) * k + q;
    Ok((&next + next.transpose()) * 0.5)
}

/// `‖AᵀPA − P − AᵀPB(BᵀPB+R)⁻¹BᵀPA + Q‖∞ / max(1, ‖P‖∞)`
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Ok(next) => (next - p).amax() / p.amax().max(1.0),
        Err(_) => f64::INFINITY,
    }
}

/// Solves the DARE with `method`. Both stop when the update is below `tol`
/// relative to `max(1, ‖P‖∞)`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
    method: DareMethod,
) -> Result<DMatrix<f64>> {
    match method {
        DareMethod::FixedPoint => solve_dare_fixed_point(a, b, q, r, tol, max_iters),
        DareMethod::Doubling => solve_dare_doubling(a, b, q, r, tol, max_iters),
    }
}

/// Fixed-point iteration of the Riccati map from `P₀ = Q`.
pub fn solve_dare_fixed_point(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    let mut history = Vec::new();
    for _ in 0..max_iters {
        let next = riccati_map(a, b, q, r, &p)?;
        let change = (&next - &p).amax() / next.amax().max(1.0);
        p = next;
        history.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(p);
        }
    }
    Err(Error::NotConverged {
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::INFINITY),
        history,
    })
}

/// Structured doubling from `(A₀, G₀, H₀) = (A, BR⁻¹Bᵀ, Q)`:
///
/// ```text
/// A⁺ = A (I + GH)⁻¹ A
/// G⁺ = G + A (I + GH)⁻¹ G Aᵀ
/// H⁺ = H + Aᵀ H (I + GH)⁻¹ A
/// ```
///
/// `H` converges quadratically to the stabilizing solution.
pub fn solve_dare_doubling(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_chol = r.clone().cholesky().ok_or_else(|| Error::NumericalFailure {
        stage: 0,
        detail: "R is not positive definite".into(),
    })?;
    let mut ak = a.clone();
    let mut gk = b * r_chol.solve(&b.transpose());
    let mut hk = q.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut history = Vec::new();
    for _ in 0..max_iters {
        let w = (&eye + &gk * &hk).lu();
        let (Some(w_a), Some(w_g)) = (w.solve(&ak), w.solve(&gk)) else {
            break;
        };
        let h_next = &hk + ak.tr_mul(&(&hk * &w_a));
        let h_next = (&h_next + h_next.transpose()) * 0.5;
        let g_next = &gk + &ak * w_g * ak.transpose();
        let g_next = (&g_next + g_next.transpose()) * 0.5;
        let change = (&h_next - &hk).amax() / h_next.amax().max(1.0);
        ak = &ak * w_a;
        gk = g_next;
        hk = h_next;
        history.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(hk);
        }
    }
    Err(Error::NotConverged {
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::INFINITY),
        history,
    })
}

/// `K = (BᵀPB + R)⁻¹ BᵀPA`
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let h = r + b.tr_mul(&(p * b));
    let chol = h.cholesky().ok_or_else(|| Error::NumericalFailure {
        stage: 0,
        detail: "BᵀPB + R is not positive definite".into(),
    })?;
    Ok(chol.solve(&b.tr_mul(&(p * a))))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct LqrDesign {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub hover_input: RotorInput,
    pub u_min: Vector4<f64>,
    pub u_max: Vector4<f64>,
}

impl LqrDesign {
    pub fn new(
        params: &QuadrotorParams,
        cfg: &LqrConfig,
        dt: f64,
        u_min: Vector4<f64>,
        u_max: Vector4<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let (a, b) = linearize_and_reduce(params, dt)?;
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.q));
        let r = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.r));
        let p = solve_dare(&a, &b, &q, &r, cfg.dare_tol, cfg.dare_max_iters, cfg.dare_method)?;
        let k = lqr_gain(&a, &b, &r, &p)?;
        Ok(Self {
            a,
            b,
            q,
            r,
            p,
            k,
            hover_input: RotorInput::hover(params),
            u_min,
            u_max,
        })
    }

    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.a - &self.b * &self.k
    }

    pub fn dare_residual(&self) -> f64 {
        dare_residual(&self.a, &self.b, &self.q, &self.r, &self.p)
    }

    /// `clamp(ū − K δξ)` where `δξ` is the reduced deviation from hover at
    /// `target`.
    pub fn control(&self, x: &State, target: &Vector3<f64>) -> RotorInput {
        let dx = reduce_state(x) - reduce_state(&State::hover_at(*target));
        let du = &self.k * dx;
        let u = self.hover_input.0 - Vector4::from_column_slice(du.as_slice());
        RotorInput(u).clamped(&self.u_min, &self.u_max)
    }
}
