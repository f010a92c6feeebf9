//! Stage-banded optimal-control QPs and their solvers.
//!
//! The problem class is
//!
//! ```text
//! min  Σ_{i<N} ½ x_iᵀQ_i x_i + u_iᵀS_i x_i + ½ u_iᵀR_i u_i + gx_iᵀx_i + gu_iᵀu_i
//!      + ½ x_Nᵀ Q_N x_N + gx_Nᵀ x_N
//! s.t. x_0 = x̂_0
//!      x_{i+1} = A_i x_i + B_i u_i + c_i
//!      lb_i ≤ u_i ≤ ub_i
//! ```
//!
//! Bounds may be infinite. Multipliers follow the Lagrangian
//! `L = cost + Σ π_iᵀ(A_i x_i + B_i u_i + c_i − x_{i+1}) − λˡᵀ(u − lb) − λᵘᵀ(ub − u)`.

mod condensing;
mod dense;
mod riccati;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub use condensing::{partial_condense, CondensingMap, PartiallyCondensedQp};
pub use dense::{solve_dense_box_qp, solve_dense_ipm, DenseBoxQp, DenseBoxSolution};
pub use riccati::{solve_riccati_ipm, RiccatiIpm};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpStage {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Affine term of the dynamics.
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
    /// Input-state cross weight, `nu × nx`.
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub gx: DVector<f64>,
    pub gu: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpStage {
    pub fn nx(&self) -> usize {
        self.a.ncols()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nx_next(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpQp {
    pub stages: Vec<QpStage>,
    pub q_terminal: DMatrix<f64>,
    pub gx_terminal: DVector<f64>,
    pub x0: DVector<f64>,
}

impl OcpQp {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn nx(&self, i: usize) -> usize {
        if i < self.stages.len() {
            self.stages[i].nx()
        } else {
            self.q_terminal.nrows()
        }
    }

    pub fn nu(&self, i: usize) -> usize {
        self.stages[i].nu()
    }

    pub fn num_bounds(&self) -> usize {
        self.stages
            .iter()
            .map(|s| {
                s.lb.iter().filter(|v| v.is_finite()).count()
                    + s.ub.iter().filter(|v| v.is_finite()).count()
            })
            .sum()
    }

    /// Checks that every block has a consistent shape.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::DimensionMismatch("QP has no stages".into()));
        }
        if self.x0.len() != self.stages[0].nx() {
            return Err(Error::DimensionMismatch(format!(
                "x0 has length {}, stage 0 expects {}",
                self.x0.len(),
                self.stages[0].nx()
            )));
        }
        for (i, st) in self.stages.iter().enumerate() {
            let (nx, nu, nxn) = (st.nx(), st.nu(), st.nx_next());
            let next = self.nx(i + 1);
            let ok = st.b.nrows() == nxn
                && st.c.len() == nxn
                && nxn == next
                && st.q.shape() == (nx, nx)
                && st.s.shape() == (nu, nx)
                && st.r.shape() == (nu, nu)
                && st.gx.len() == nx
                && st.gu.len() == nu
                && st.lb.len() == nu
                && st.ub.len() == nu;
            if !ok {
                return Err(Error::DimensionMismatch(format!(
                    "stage {i} blocks are inconsistent (nx {nx}, nu {nu}, next {next})"
                )));
            }
            if st.lb.iter().zip(st.ub.iter()).any(|(l, u)| !(l < u)) {
                return Err(Error::DimensionMismatch(format!(
                    "stage {i} has empty bound interval"
                )));
            }
        }
        if self.q_terminal.shape() != (self.gx_terminal.len(), self.gx_terminal.len()) {
            return Err(Error::DimensionMismatch("terminal blocks".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Converged,
    /// Iteration limit hit; the solution holds the last iterate.
    MaxIterations,
}

/// Norms (∞) of the KKT conditions at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub equality: f64,
    pub inequality: f64,
    /// Largest `|λ·slack|`, or the largest negative multiplier if bigger.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.equality)
            .max(self.inequality)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Multipliers of the dynamics constraints, one per stage.
    pub pi: Vec<DVector<f64>>,
    pub lam_lower: Vec<DVector<f64>>,
    pub lam_upper: Vec<DVector<f64>>,
    pub iterations: usize,
    pub status: QpStatus,
    pub residuals: KktResiduals,
}

impl QpSolution {
    /// All-zero primal and dual point shaped like `qp`.
    pub fn zeros(qp: &OcpQp) -> Self {
        let n = qp.horizon();
        Self {
            x: (0..=n).map(|i| DVector::zeros(qp.nx(i))).collect(),
            u: (0..n).map(|i| DVector::zeros(qp.nu(i))).collect(),
            pi: (0..n).map(|i| DVector::zeros(qp.nx(i + 1))).collect(),
            lam_lower: (0..n).map(|i| DVector::zeros(qp.nu(i))).collect(),
            lam_upper: (0..n).map(|i| DVector::zeros(qp.nu(i))).collect(),
            iterations: 0,
            status: QpStatus::Converged,
            residuals: KktResiduals::default(),
        }
    }

    /// `max_i ‖(x_i, u_i)‖∞`
    pub fn primal_norm(&self) -> f64 {
        self.x
            .iter()
            .chain(self.u.iter())
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.u)
            .chain(&self.pi)
            .chain(&self.lam_lower)
            .chain(&self.lam_upper)
            .all(|v| v.iter().all(|e| e.is_finite()))
    }

    pub fn check_shape(&self, qp: &OcpQp) -> Result<()> {
        let n = qp.horizon();
        let ok = self.x.len() == n + 1
            && self.u.len() == n
            && self.pi.len() == n
            && self.lam_lower.len() == n
            && self.lam_upper.len() == n
            && (0..=n).all(|i| self.x[i].len() == qp.nx(i))
            && (0..n).all(|i| {
                self.u[i].len() == qp.nu(i)
                    && self.pi[i].len() == qp.nx(i + 1)
                    && self.lam_lower[i].len() == qp.nu(i)
                    && self.lam_upper[i].len() == qp.nu(i)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "solution does not match QP dimensions".into(),
            ))
        }
    }
}

/// Recomputes the KKT residual norms of `sol` for `qp` from scratch.
/// Non-finite entries in the solution make every residual infinite.
pub fn kkt_residuals(qp: &OcpQp, sol: &QpSolution) -> KktResiduals {
    let n = qp.horizon();
    if !sol.is_finite() {
        return KktResiduals {
            stationarity: f64::INFINITY,
            equality: f64::INFINITY,
            inequality: f64::INFINITY,
            complementarity: f64::INFINITY,
        };
    }
    let mut res = KktResiduals {
        equality: (&sol.x[0] - &qp.x0).amax(),
        ..Default::default()
    };
    for (i, st) in qp.stages.iter().enumerate() {
        let (x, u, pi) = (&sol.x[i], &sol.u[i], &sol.pi[i]);
        let (ll, lu) = (&sol.lam_lower[i], &sol.lam_upper[i]);
        let grad_u = &st.s * x + &st.r * u + &st.gu + st.b.tr_mul(pi) - ll + lu;
        res.stationarity = res.stationarity.max(grad_u.amax());
        if i > 0 {
            let grad_x =
                &st.q * x + st.s.tr_mul(u) + &st.gx + st.a.tr_mul(pi) - &sol.pi[i - 1];
            res.stationarity = res.stationarity.max(grad_x.amax());
        }
        let defect = &st.a * x + &st.b * u + &st.c - &sol.x[i + 1];
        res.equality = res.equality.max(defect.amax());
        for k in 0..st.nu() {
            let (lo, hi) = (st.lb[k], st.ub[k]);
            res.inequality = res.inequality.max(lo - u[k]).max(u[k] - hi);
            res.complementarity = res
                .complementarity
                .max(-ll[k])
                .max(-lu[k]);
            if lo.is_finite() {
                res.complementarity = res.complementarity.max((ll[k] * (u[k] - lo)).abs());
            } else {
                res.complementarity = res.complementarity.max(ll[k].abs());
            }
            if hi.is_finite() {
                res.complementarity = res.complementarity.max((lu[k] * (hi - u[k])).abs());
            } else {
                res.complementarity = res.complementarity.max(lu[k].abs());
            }
        }
    }
    let grad_n = &qp.q_terminal * &sol.x[n] + &qp.gx_terminal - &sol.pi[n - 1];
    res.stationarity = res.stationarity.max(grad_n.amax());
    res.inequality = res.inequality.max(0.0);
    res
}

/// Interior-point settings shared by the Riccati and dense solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IpmSettings {
    /// Stationarity and equality tolerance.
    pub tol: f64,
    pub comp_tol: f64,
    pub max_iters: usize,
    pub fraction_to_boundary: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            comp_tol: 1e-8,
            max_iters: 50,
            fraction_to_boundary: 0.995,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Partial condensing followed by the Riccati interior-point solver.
    Riccati,
    /// Full condensing followed by the dense interior-point solver.
    Dense,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Riccati => "riccati",
            SolverKind::Dense => "dense",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "riccati" => Ok(Self::Riccati),
            "dense" => Ok(Self::Dense),
            other => Err(Error::InvalidConfig(format!(
                "unknown QP solver '{other}' (expected riccati|dense)"
            ))),
        }
    }
}

/// A QP that has been condensed (and, for the dense pipeline, had its Hessian
/// factor-ready form built) ahead of knowing the initial state.
#[derive(Debug, Clone)]
pub struct PreparedQp {
    kind: SolverKind,
    condensed: PartiallyCondensedQp,
    dense: Option<DenseBoxQp>,
    riccati: RiccatiIpm,
    pub settings: IpmSettings,
}

impl PreparedQp {
    pub fn new(qp: OcpQp, kind: SolverKind, block_size: usize, settings: IpmSettings) -> Result<Self> {
        qp.validate()?;
        let m = match kind {
            SolverKind::Riccati => block_size,
            SolverKind::Dense => qp.horizon(),
        };
        let condensed = partial_condense(&qp, m)?;
        let dense = match kind {
            SolverKind::Dense => Some(DenseBoxQp::from_single_stage(condensed.qp())?),
            SolverKind::Riccati => None,
        };
        Ok(Self {
            kind,
            condensed,
            dense,
            riccati: RiccatiIpm::new(settings),
            settings,
        })
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn original(&self) -> &OcpQp {
        self.condensed.original()
    }

    pub fn condensed(&self) -> &PartiallyCondensedQp {
        &self.condensed
    }

    pub fn set_initial_state(&mut self, x0: &DVector<f64>) {
        self.condensed.set_initial_state(x0);
    }

    /// Solves and expands back to the original stage structure.
    pub fn solve(&mut self) -> Result<QpSolution> {
        let reduced = match self.kind {
            SolverKind::Riccati => {
                self.riccati.settings = self.settings;
                self.riccati.solve(self.condensed.qp())?
            }
            SolverKind::Dense => {
                let dense = self.dense.as_ref().expect("dense pipeline keeps its QP");
                dense::solve_single_stage(self.condensed.qp(), dense, &self.settings)?
            }
        };
        self.condensed.expand(&reduced)
    }
}

/// Wall-clock split of one prepared solve, microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveTiming {
    pub prep_us: f64,
    pub solve_us: f64,
}

/// Condenses, solves and expands, recording the time spent in each phase.
pub fn timed_solve(
    qp: OcpQp,
    kind: SolverKind,
    block_size: usize,
    settings: IpmSettings,
) -> Result<(QpSolution, SolveTiming)> {
    let t0 = Instant::now();
    let mut prepared = PreparedQp::new(qp, kind, block_size, settings)?;
    let t1 = Instant::now();
    let sol = prepared.solve()?;
    let t2 = Instant::now();
    Ok((
        sol,
        SolveTiming {
            prep_us: (t1 - t0).as_secs_f64() * 1e6,
            solve_us: (t2 - t1).as_secs_f64() * 1e6,
        },
    ))
}

/// Largest `α` keeping `v + α·dv ≥ 0` elementwise (`∞` if unbounded).
pub(crate) fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}
