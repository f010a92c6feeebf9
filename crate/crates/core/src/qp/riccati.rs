//! Primal-dual interior-point method whose Newton systems are solved by a
//! backward Riccati recursion and a forward rollout.
//!
//! Mehrotra predictor-corrector with a single primal/dual step length and
//! fraction-to-boundary `τ` (default 0.995). Inputs start at the bound
//! midpoints, states by forward simulation, bound multipliers at 1.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{kkt_residuals, max_step, IpmSettings, OcpQp, QpSolution, QpStatus};
use crate::error::{Error, Result};

const REGULARIZATION: f64 = 1e-10;

struct StageFactor {
    chol: Cholesky<f64, Dyn>,
    /// Feedback gain `K = −H_uu⁻¹ H_ux`.
    gain: DMatrix<f64>,
}

/// Riccati interior-point solver with its factorization workspace.
///
/// Not meant to be shared across threads mid-solve; it can be moved freely.
pub struct RiccatiIpm {
    pub settings: IpmSettings,
    factors: Vec<StageFactor>,
    /// Cost-to-go Hessians `P_0..P_N`.
    p: Vec<DMatrix<f64>>,
}

impl std::fmt::Debug for RiccatiIpm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RiccatiIpm")
            .field("settings", &self.settings)
            .field("stages", &self.factors.len())
            .finish()
    }
}

impl Clone for RiccatiIpm {
    fn clone(&self) -> Self {
        Self::new(self.settings)
    }
}

struct Iterate {
    x: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    pi: Vec<DVector<f64>>,
    lam_l: Vec<DVector<f64>>,
    lam_u: Vec<DVector<f64>>,
}

struct Direction {
    dx: Vec<DVector<f64>>,
    du: Vec<DVector<f64>>,
    dpi: Vec<DVector<f64>>,
    dlam_l: Vec<DVector<f64>>,
    dlam_u: Vec<DVector<f64>>,
}

/// Bound slacks; zero where the bound is absent.
fn slacks(qp: &OcpQp, u: &[DVector<f64>]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut sl = Vec::with_capacity(u.len());
    let mut su = Vec::with_capacity(u.len());
    for (st, ui) in qp.stages.iter().zip(u) {
        sl.push(DVector::from_fn(ui.len(), |k, _| {
            if st.lb[k].is_finite() { ui[k] - st.lb[k] } else { 0.0 }
        }));
        su.push(DVector::from_fn(ui.len(), |k, _| {
            if st.ub[k].is_finite() { st.ub[k] - ui[k] } else { 0.0 }
        }));
    }
    (sl, su)
}

/// Lower/upper masks of finite bounds for one stage.
fn masks(qp: &OcpQp, i: usize) -> (Vec<bool>, Vec<bool>) {
    let st = &qp.stages[i];
    (
        st.lb.iter().map(|v| v.is_finite()).collect(),
        st.ub.iter().map(|v| v.is_finite()).collect(),
    )
}

impl RiccatiIpm {
    pub fn new(settings: IpmSettings) -> Self {
        Self {
            settings,
            factors: Vec::new(),
            p: Vec::new(),
        }
    }

    /// Backward Riccati factorization with the barrier diagonal `d` added to
    /// the input Hessians.
    fn factorize(&mut self, qp: &OcpQp, d: &[DVector<f64>]) -> Result<()> {
        let n = qp.horizon();
        self.factors.clear();
        self.p.clear();
        self.p.resize(n + 1, DMatrix::zeros(0, 0));
        self.p[n] = qp.q_terminal.clone();
        let mut rev = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let st = &qp.stages[i];
            let pn = &self.p[i + 1];
            let pa = pn * &st.a;
            let pb = pn * &st.b;
            let mut huu = &st.r + st.b.tr_mul(&pb);
            for k in 0..huu.nrows() {
                huu[(k, k)] += d[i][k];
            }
            let hux = &st.s + st.b.tr_mul(&pa);
            let hxx = &st.q + st.a.tr_mul(&pa);
            let chol = match Cholesky::new(huu.clone()) {
                Some(c) => c,
                None => {
                    let nu = huu.nrows();
                    Cholesky::new(huu + DMatrix::identity(nu, nu) * REGULARIZATION).ok_or_else(
                        || Error::NumericalFailure {
                            stage: i,
                            detail: "Riccati input Hessian is not positive definite".into(),
                        },
                    )?
                }
            };
            let gain = -chol.solve(&hux);
            let mut p = hxx + hux.tr_mul(&gain);
            p = (&p + p.transpose()) * 0.5;
            self.p[i] = p;
            rev.push(StageFactor { chol, gain });
        }
        rev.reverse();
        self.factors = rev;
        Ok(())
    }

    /// Solves the Newton (LQ) system with linear terms `rq`, `rr`, dynamics
    /// residual `rb` and initial step `dx0` using the current factorization.
    fn solve_lq(
        &self,
        qp: &OcpQp,
        rq: &[DVector<f64>],
        rr: &[DVector<f64>],
        rb: &[DVector<f64>],
        dx0: DVector<f64>,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let n = qp.horizon();
        let mut ps: Vec<DVector<f64>> = vec![DVector::zeros(0); n + 1];
        let mut ks: Vec<DVector<f64>> = vec![DVector::zeros(0); n];
        ps[n] = rq[n].clone();
        for i in (0..n).rev() {
            let st = &qp.stages[i];
            let t = &self.p[i + 1] * &rb[i] + &ps[i + 1];
            let hu = &rr[i] + st.b.tr_mul(&t);
            let k = -self.factors[i].chol.solve(&hu);
            if i > 0 {
                let hx = &rq[i] + st.a.tr_mul(&t);
                ps[i] = hx + self.factors[i].gain.tr_mul(&hu);
            }
            ks[i] = k;
        }
        let mut dx = Vec::with_capacity(n + 1);
        let mut du = Vec::with_capacity(n);
        let mut dpi = Vec::with_capacity(n);
        dx.push(dx0);
        for i in 0..n {
            let st = &qp.stages[i];
            let ui = &self.factors[i].gain * &dx[i] + &ks[i];
            let xn = &st.a * &dx[i] + &st.b * &ui + &rb[i];
            dpi.push(&self.p[i + 1] * &xn + &ps[i + 1]);
            du.push(ui);
            dx.push(xn);
        }
        (dx, du, dpi)
    }

    pub fn solve(&mut self, qp: &OcpQp) -> Result<QpSolution> {
        qp.validate()?;
        let n = qp.horizon();
        let s = self.settings;

        let mut it = initial_point(qp);
        let num_bounds = qp.num_bounds();
        let mut status = QpStatus::MaxIterations;
        let mut iterations = 0;

        loop {
            let (sl, su) = slacks(qp, &it.u);
            let res = residuals(qp, &it);
            let mut comp_max = 0.0f64;
            let mut comp_sum = 0.0;
            for i in 0..n {
                let (ml, mu) = masks(qp, i);
                for k in 0..it.u[i].len() {
                    if ml[k] {
                        let c = it.lam_l[i][k] * sl[i][k];
                        comp_max = comp_max.max(c.abs());
                        comp_sum += c;
                    }
                    if mu[k] {
                        let c = it.lam_u[i][k] * su[i][k];
                        comp_max = comp_max.max(c.abs());
                        comp_sum += c;
                    }
                }
            }
            if res.stat <= s.tol && res.eq <= s.tol && comp_max <= s.comp_tol {
                status = QpStatus::Converged;
                break;
            }
            if iterations >= s.max_iters {
                break;
            }
            iterations += 1;

            let d: Vec<DVector<f64>> = (0..n)
                .map(|i| {
                    let (ml, mu) = masks(qp, i);
                    DVector::from_fn(it.u[i].len(), |k, _| {
                        let mut v = 0.0;
                        if ml[k] {
                            v += it.lam_l[i][k] / sl[i][k];
                        }
                        if mu[k] {
                            v += it.lam_u[i][k] / su[i][k];
                        }
                        v
                    })
                })
                .collect();
            self.factorize(qp, &d)?;
            let dx0 = &qp.x0 - &it.x[0];

            if num_bounds == 0 {
                let (dx, du, dpi) = self.solve_lq(qp, &res.rx, &res.ru, &res.rdyn, dx0);
                let dir = Direction {
                    dlam_l: du.iter().map(|v| DVector::zeros(v.len())).collect(),
                    dlam_u: du.iter().map(|v| DVector::zeros(v.len())).collect(),
                    dx,
                    du,
                    dpi,
                };
                it.step(&dir, 1.0);
                continue;
            }

            let mu = comp_sum / num_bounds as f64;
            let zeros: Vec<DVector<f64>> =
                it.u.iter().map(|v| DVector::zeros(v.len())).collect();

            // Predictor (affine scaling).
            let aff = self.direction(qp, &it, &res, &sl, &su, &zeros, &zeros, 0.0, dx0.clone());
            let alpha_aff = step_length(qp, &it, &aff, &sl, &su).min(1.0);
            let mut mu_aff = 0.0;
            for i in 0..n {
                let (ml, mu_mask) = masks(qp, i);
                for k in 0..it.u[i].len() {
                    let du = aff.du[i][k];
                    if ml[k] {
                        mu_aff += (it.lam_l[i][k] + alpha_aff * aff.dlam_l[i][k])
                            * (sl[i][k] + alpha_aff * du);
                    }
                    if mu_mask[k] {
                        mu_aff += (it.lam_u[i][k] + alpha_aff * aff.dlam_u[i][k])
                            * (su[i][k] - alpha_aff * du);
                    }
                }
            }
            mu_aff /= num_bounds as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector with the second-order complementarity term.
            let corr_l: Vec<DVector<f64>> = (0..n)
                .map(|i| aff.dlam_l[i].component_mul(&aff.du[i]))
                .collect();
            let corr_u: Vec<DVector<f64>> = (0..n)
                .map(|i| -aff.dlam_u[i].component_mul(&aff.du[i]))
                .collect();
            let dir = self.direction(qp, &it, &res, &sl, &su, &corr_l, &corr_u, sigma * mu, dx0);
            let alpha = (s.fraction_to_boundary * step_length(qp, &it, &dir, &sl, &su)).min(1.0);
            it.step(&dir, alpha);
        }

        let mut sol = QpSolution {
            x: it.x,
            u: it.u,
            pi: it.pi,
            lam_lower: it.lam_l,
            lam_upper: it.lam_u,
            iterations,
            status,
            residuals: Default::default(),
        };
        sol.residuals = kkt_residuals(qp, &sol);
        Ok(sol)
    }

    /// Newton direction for complementarity targets
    /// `λ s + corr − target = 0` on every finite bound.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        qp: &OcpQp,
        it: &Iterate,
        res: &Residuals,
        sl: &[DVector<f64>],
        su: &[DVector<f64>],
        corr_l: &[DVector<f64>],
        corr_u: &[DVector<f64>],
        target: f64,
        dx0: DVector<f64>,
    ) -> Direction {
        let n = qp.horizon();
        let mut rc_l = Vec::with_capacity(n);
        let mut rc_u = Vec::with_capacity(n);
        let mut rhat = Vec::with_capacity(n);
        for i in 0..n {
            let (ml, mu) = masks(qp, i);
            let nu = it.u[i].len();
            let cl = DVector::from_fn(nu, |k, _| {
                if ml[k] { it.lam_l[i][k] * sl[i][k] + corr_l[i][k] - target } else { 0.0 }
            });
            let cu = DVector::from_fn(nu, |k, _| {
                if mu[k] { it.lam_u[i][k] * su[i][k] + corr_u[i][k] - target } else { 0.0 }
            });
            let r = DVector::from_fn(nu, |k, _| {
                let mut v = res.ru[i][k];
                if ml[k] {
                    v += cl[k] / sl[i][k];
                }
                if mu[k] {
                    v -= cu[k] / su[i][k];
                }
                v
            });
            rc_l.push(cl);
            rc_u.push(cu);
            rhat.push(r);
        }
        let (dx, du, dpi) = self.solve_lq(qp, &res.rx, &rhat, &res.rdyn, dx0);
        let mut dlam_l = Vec::with_capacity(n);
        let mut dlam_u = Vec::with_capacity(n);
        for i in 0..n {
            let (ml, mu) = masks(qp, i);
            let nu = it.u[i].len();
            dlam_l.push(DVector::from_fn(nu, |k, _| {
                if ml[k] { (-rc_l[i][k] - it.lam_l[i][k] * du[i][k]) / sl[i][k] } else { 0.0 }
            }));
            dlam_u.push(DVector::from_fn(nu, |k, _| {
                if mu[k] { (-rc_u[i][k] + it.lam_u[i][k] * du[i][k]) / su[i][k] } else { 0.0 }
            }));
        }
        Direction { dx, du, dpi, dlam_l, dlam_u }
    }
}

/// Largest step keeping slacks and multipliers nonnegative.
fn step_length(qp: &OcpQp, it: &Iterate, dir: &Direction, sl: &[DVector<f64>], su: &[DVector<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..qp.horizon() {
        let (ml, mu) = masks(qp, i);
        for k in 0..it.u[i].len() {
            let du = dir.du[i][k];
            if ml[k] {
                alpha = alpha.min(max_step(&[sl[i][k]], &[du]));
                alpha = alpha.min(max_step(&[it.lam_l[i][k]], &[dir.dlam_l[i][k]]));
            }
            if mu[k] {
                alpha = alpha.min(max_step(&[su[i][k]], &[-du]));
                alpha = alpha.min(max_step(&[it.lam_u[i][k]], &[dir.dlam_u[i][k]]));
            }
        }
    }
    alpha
}

impl Iterate {
    fn step(&mut self, d: &Direction, alpha: f64) {
        for (v, dv) in self.x.iter_mut().zip(&d.dx) {
            v.axpy(alpha, dv, 1.0);
        }
        for (v, dv) in self.u.iter_mut().zip(&d.du) {
            v.axpy(alpha, dv, 1.0);
        }
        for (v, dv) in self.pi.iter_mut().zip(&d.dpi) {
            v.axpy(alpha, dv, 1.0);
        }
        for (v, dv) in self.lam_l.iter_mut().zip(&d.dlam_l) {
            v.axpy(alpha, dv, 1.0);
        }
        for (v, dv) in self.lam_u.iter_mut().zip(&d.dlam_u) {
            v.axpy(alpha, dv, 1.0);
        }
    }
}

fn initial_point(qp: &OcpQp) -> Iterate {
    let n = qp.horizon();
    let mut x = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    let mut lam_l = Vec::with_capacity(n);
    let mut lam_u = Vec::with_capacity(n);
    x.push(qp.x0.clone());
    for st in &qp.stages {
        let ui = DVector::from_fn(st.nu(), |k, _| {
            let (lo, hi) = (st.lb[k], st.ub[k]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            }
        });
        let xn = &st.a * x.last().unwrap() + &st.b * &ui + &st.c;
        lam_l.push(st.lb.map(|v| if v.is_finite() { 1.0 } else { 0.0 }));
        lam_u.push(st.ub.map(|v| if v.is_finite() { 1.0 } else { 0.0 }));
        u.push(ui);
        x.push(xn);
    }
    let pi = (0..n).map(|i| DVector::zeros(qp.nx(i + 1))).collect();
    Iterate { x, u, pi, lam_l, lam_u }
}

struct Residuals {
    /// State stationarity, indices `0..=N` (index 0 unused).
    rx: Vec<DVector<f64>>,
    ru: Vec<DVector<f64>>,
    /// `A x + B u + c − x⁺`
    rdyn: Vec<DVector<f64>>,
    stat: f64,
    eq: f64,
}

fn residuals(qp: &OcpQp, it: &Iterate) -> Residuals {
    let n = qp.horizon();
    let mut rx = Vec::with_capacity(n + 1);
    let mut ru = Vec::with_capacity(n);
    let mut rdyn = Vec::with_capacity(n);
    let mut stat = 0.0f64;
    let mut eq = (&it.x[0] - &qp.x0).amax();
    rx.push(DVector::zeros(qp.nx(0)));
    for (i, st) in qp.stages.iter().enumerate() {
        let (x, u, pi) = (&it.x[i], &it.u[i], &it.pi[i]);
        let gu = &st.s * x + &st.r * u + &st.gu + st.b.tr_mul(pi) - &it.lam_l[i] + &it.lam_u[i];
        stat = stat.max(gu.amax());
        if i > 0 {
            let gx = &st.q * x + st.s.tr_mul(u) + &st.gx + st.a.tr_mul(pi) - &it.pi[i - 1];
            stat = stat.max(gx.amax());
            rx.push(gx);
        }
        let dyn_res = &st.a * x + &st.b * u + &st.c - &it.x[i + 1];
        eq = eq.max(dyn_res.amax());
        ru.push(gu);
        rdyn.push(dyn_res);
    }
    let gn = &qp.q_terminal * &it.x[n] + &qp.gx_terminal - &it.pi[n - 1];
    stat = stat.max(gn.amax());
    rx.push(gn);
    Residuals { rx, ru, rdyn, stat, eq }
}

/// Solves `qp` with a fresh [`RiccatiIpm`].
pub fn solve_riccati_ipm(qp: &OcpQp, settings: &IpmSettings) -> Result<QpSolution> {
    RiccatiIpm::new(*settings).solve(qp)
}
