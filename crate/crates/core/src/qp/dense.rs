//! Dense baseline: full condensing, then a dense box-constrained QP solved by
//! a Mehrotra interior-point method with a Cholesky factorization per
//! iteration (cubic in the number of inputs).

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{kkt_residuals, max_step, IpmSettings, OcpQp, PreparedQp, QpSolution, QpStatus, SolverKind};
use crate::error::{Error, Result};

/// `min ½ uᵀHu + gᵀu  s.t.  lb ≤ u ≤ ub`
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBoxQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseBoxSolution {
    pub u: DVector<f64>,
    pub lam_lower: DVector<f64>,
    pub lam_upper: DVector<f64>,
    pub iterations: usize,
    pub status: QpStatus,
}

impl DenseBoxQp {
    /// Eliminates the final state of a one-stage QP, leaving a problem in
    /// the inputs only. The gradient is for the QP's current `x0`.
    pub fn from_single_stage(qp: &OcpQp) -> Result<Self> {
        if qp.horizon() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "dense pipeline expects a fully condensed QP, got {} stages",
                qp.horizon()
            )));
        }
        let st = &qp.stages[0];
        let qb = &qp.q_terminal * &st.b;
        let h = &st.r + st.b.tr_mul(&qb);
        let h = (&h + h.transpose()) * 0.5;
        Ok(Self {
            g: Self::gradient(qp),
            h,
            lb: st.lb.clone(),
            ub: st.ub.clone(),
        })
    }

    fn gradient(qp: &OcpQp) -> DVector<f64> {
        let st = &qp.stages[0];
        let x1_free = &st.a * &qp.x0 + &st.c;
        &st.s * &qp.x0 + &st.gu + st.b.tr_mul(&(&qp.q_terminal * x1_free + &qp.gx_terminal))
    }
}

/// Mehrotra predictor-corrector on a dense box-constrained QP.
pub fn solve_dense_box_qp(qp: &DenseBoxQp, settings: &IpmSettings) -> Result<DenseBoxSolution> {
    let n = qp.g.len();
    let has_l: Vec<bool> = qp.lb.iter().map(|v| v.is_finite()).collect();
    let has_u: Vec<bool> = qp.ub.iter().map(|v| v.is_finite()).collect();
    let num_bounds = has_l.iter().chain(&has_u).filter(|b| **b).count();

    let mut u = DVector::from_fn(n, |k, _| match (has_l[k], has_u[k]) {
        (true, true) => 0.5 * (qp.lb[k] + qp.ub[k]),
        (true, false) => qp.lb[k] + 1.0,
        (false, true) => qp.ub[k] - 1.0,
        (false, false) => 0.0,
    });
    let mut ll = DVector::from_fn(n, |k, _| if has_l[k] { 1.0 } else { 0.0 });
    let mut lu = DVector::from_fn(n, |k, _| if has_u[k] { 1.0 } else { 0.0 });
    let mut iterations = 0;
    let mut status = QpStatus::MaxIterations;

    loop {
        let sl = DVector::from_fn(n, |k, _| if has_l[k] { u[k] - qp.lb[k] } else { 0.0 });
        let su = DVector::from_fn(n, |k, _| if has_u[k] { qp.ub[k] - u[k] } else { 0.0 });
        let r = &qp.h * &u + &qp.g - &ll + &lu;
        let comp_l = ll.component_mul(&sl);
        let comp_u = lu.component_mul(&su);
        let comp_max = comp_l.amax().max(comp_u.amax());
        if r.amax() <= settings.tol && comp_max <= settings.comp_tol {
            status = QpStatus::Converged;
            break;
        }
        if iterations >= settings.max_iters {
            break;
        }
        iterations += 1;

        let mut m = qp.h.clone();
        for k in 0..n {
            if has_l[k] {
                m[(k, k)] += ll[k] / sl[k];
            }
            if has_u[k] {
                m[(k, k)] += lu[k] / su[k];
            }
        }
        let chol = Cholesky::new(m).ok_or_else(|| Error::NumericalFailure {
            stage: 0,
            detail: "dense Hessian is not positive definite".into(),
        })?;

        // Direction for complementarity residuals (cl, cu).
        let direction = |cl: &DVector<f64>, cu: &DVector<f64>| {
            let rhs = DVector::from_fn(n, |k, _| {
                let mut v = -r[k];
                if has_l[k] {
                    v -= cl[k] / sl[k];
                }
                if has_u[k] {
                    v += cu[k] / su[k];
                }
                v
            });
            let du = chol.solve(&rhs);
            let dll = DVector::from_fn(n, |k, _| {
                if has_l[k] { (-cl[k] - ll[k] * du[k]) / sl[k] } else { 0.0 }
            });
            let dlu = DVector::from_fn(n, |k, _| {
                if has_u[k] { (-cu[k] + lu[k] * du[k]) / su[k] } else { 0.0 }
            });
            (du, dll, dlu)
        };
        let step = |du: &DVector<f64>, dll: &DVector<f64>, dlu: &DVector<f64>| {
            let mut a = f64::INFINITY;
            for k in 0..n {
                if has_l[k] {
                    a = a.min(max_step(&[sl[k]], &[du[k]])).min(max_step(&[ll[k]], &[dll[k]]));
                }
                if has_u[k] {
                    a = a.min(max_step(&[su[k]], &[-du[k]])).min(max_step(&[lu[k]], &[dlu[k]]));
                }
            }
            a
        };

        if num_bounds == 0 {
            let (du, _, _) = direction(&comp_l, &comp_u);
            u += du;
            continue;
        }

        let mu = (comp_l.sum() + comp_u.sum()) / num_bounds as f64;
        let (du_a, dll_a, dlu_a) = direction(&comp_l, &comp_u);
        let a_aff = step(&du_a, &dll_a, &dlu_a).min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..n {
            if has_l[k] {
                mu_aff += (ll[k] + a_aff * dll_a[k]) * (sl[k] + a_aff * du_a[k]);
            }
            if has_u[k] {
                mu_aff += (lu[k] + a_aff * dlu_a[k]) * (su[k] - a_aff * du_a[k]);
            }
        }
        mu_aff /= num_bounds as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let target = sigma * mu;
        let cl = DVector::from_fn(n, |k, _| {
            if has_l[k] { comp_l[k] + dll_a[k] * du_a[k] - target } else { 0.0 }
        });
        let cu = DVector::from_fn(n, |k, _| {
            if has_u[k] { comp_u[k] - dlu_a[k] * du_a[k] - target } else { 0.0 }
        });
        let (du, dll, dlu) = direction(&cl, &cu);
        let alpha = (settings.fraction_to_boundary * step(&du, &dll, &dlu)).min(1.0);
        u.axpy(alpha, &du, 1.0);
        ll.axpy(alpha, &dll, 1.0);
        lu.axpy(alpha, &dlu, 1.0);
    }

    Ok(DenseBoxSolution {
        u,
        lam_lower: ll,
        lam_upper: lu,
        iterations,
        status,
    })
}

/// Solves a fully condensed (one-stage) QP through its dense form, returning
/// a solution of that one-stage QP. `dense.h` must come from the same QP.
pub(crate) fn solve_single_stage(
    qp: &OcpQp,
    dense: &DenseBoxQp,
    settings: &IpmSettings,
) -> Result<QpSolution> {
    let box_qp = DenseBoxQp {
        g: DenseBoxQp::gradient(qp),
        h: dense.h.clone(),
        lb: dense.lb.clone(),
        ub: dense.ub.clone(),
    };
    let ds = solve_dense_box_qp(&box_qp, settings)?;
    let st = &qp.stages[0];
    let x1 = &st.a * &qp.x0 + &st.b * &ds.u + &st.c;
    let pi = &qp.q_terminal * &x1 + &qp.gx_terminal;
    let mut sol = QpSolution {
        x: vec![qp.x0.clone(), x1],
        u: vec![ds.u],
        pi: vec![pi],
        lam_lower: vec![ds.lam_lower],
        lam_upper: vec![ds.lam_upper],
        iterations: ds.iterations,
        status: ds.status,
        residuals: Default::default(),
    };
    sol.residuals = kkt_residuals(qp, &sol);
    Ok(sol)
}

/// Full condensing, dense interior-point solve, expansion.
pub fn solve_dense_ipm(qp: &OcpQp, settings: &IpmSettings) -> Result<QpSolution> {
    PreparedQp::new(qp.clone(), SolverKind::Dense, qp.horizon(), *settings)?.solve()
}
