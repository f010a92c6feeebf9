//! Partial condensing: groups of `M` consecutive stages are merged into one
//! stage by eliminating the intermediate states through the dynamics.
//!
//! Each condensed stage keeps the state at the start of its block and takes
//! the stacked inputs of the block as its input vector. The Hessian is built
//! by a backward recursion over the block, so the work per block is quadratic
//! in `M` rather than cubic.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{kkt_residuals, OcpQp, QpSolution, QpStage};
use crate::error::{Error, Result};

/// What is needed to map a condensed solution back to the original stages.
#[derive(Debug, Clone)]
pub struct CondensingMap {
    blocks: Vec<Range<usize>>,
    original: OcpQp,
}

impl CondensingMap {
    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.len())
    }
}

#[derive(Debug, Clone)]
pub struct PartiallyCondensedQp {
    qp: OcpQp,
    map: CondensingMap,
}

impl PartiallyCondensedQp {
    pub fn qp(&self) -> &OcpQp {
        &self.qp
    }

    pub fn map(&self) -> &CondensingMap {
        &self.map
    }

    pub fn original(&self) -> &OcpQp {
        &self.map.original
    }

    /// Updates the initial state of both the condensed and the original QP.
    /// None of the condensed data depends on it.
    pub fn set_initial_state(&mut self, x0: &DVector<f64>) {
        self.qp.x0.copy_from(x0);
        self.map.original.x0.copy_from(x0);
    }

    /// Recovers the full-horizon primal-dual point from a solution of the
    /// condensed QP. Residuals are recomputed on the original QP.
    pub fn expand(&self, sol: &QpSolution) -> Result<QpSolution> {
        sol.check_shape(&self.qp)?;
        let orig = &self.map.original;
        let n = orig.horizon();
        let mut out = QpSolution::zeros(orig);
        out.iterations = sol.iterations;
        out.status = sol.status;
        for (j, block) in self.map.blocks.iter().enumerate() {
            out.x[block.start] = sol.x[j].clone();
            let mut offset = 0;
            for i in block.clone() {
                let st = &orig.stages[i];
                let nu = st.nu();
                out.u[i] = sol.u[j].rows(offset, nu).into_owned();
                out.lam_lower[i] = sol.lam_lower[j].rows(offset, nu).into_owned();
                out.lam_upper[i] = sol.lam_upper[j].rows(offset, nu).into_owned();
                offset += nu;
                if i + 1 < block.end {
                    out.x[i + 1] = &st.a * &out.x[i] + &st.b * &out.u[i] + &st.c;
                }
            }
            out.pi[block.end - 1] = sol.pi[j].clone();
            for k in (block.start + 1..block.end).rev() {
                let st = &orig.stages[k];
                out.pi[k - 1] = &st.q * &out.x[k]
                    + st.s.tr_mul(&out.u[k])
                    + &st.gx
                    + st.a.tr_mul(&out.pi[k]);
            }
        }
        out.x[n] = sol.x[self.map.blocks.len()].clone();
        out.residuals = kkt_residuals(orig, &out);
        Ok(out)
    }
}

/// Condenses `qp` with block size `block_size` (`1 ≤ M ≤ N`).
///
/// `M = 1` returns the QP unchanged; `M = N` leaves a single stage whose
/// input is the whole input trajectory.
pub fn partial_condense(qp: &OcpQp, block_size: usize) -> Result<PartiallyCondensedQp> {
    qp.validate()?;
    let n = qp.horizon();
    if block_size == 0 || block_size > n {
        return Err(Error::InvalidConfig(format!(
            "block size {block_size} outside 1..={n}"
        )));
    }
    let blocks: Vec<Range<usize>> = (0..n)
        .step_by(block_size)
        .map(|s| s..(s + block_size).min(n))
        .collect();
    let condensed = if block_size == 1 {
        qp.clone()
    } else {
        OcpQp {
            stages: blocks.iter().map(|b| condense_block(&qp.stages[b.clone()])).collect(),
            q_terminal: qp.q_terminal.clone(),
            gx_terminal: qp.gx_terminal.clone(),
            x0: qp.x0.clone(),
        }
    };
    Ok(PartiallyCondensedQp {
        qp: condensed,
        map: CondensingMap {
            blocks,
            original: qp.clone(),
        },
    })
}

/// Merges a run of stages into one. The cost of the block's final state is
/// not included; it belongs to the next block or to the terminal cost.
fn condense_block(stages: &[QpStage]) -> QpStage {
    let nx_end = stages.last().unwrap().nx_next();
    let nu_total: usize = stages.iter().map(|s| s.nu()).sum();

    // Cost-to-go of the inputs after stage k as a quadratic in
    // (x_{k+1}, U_{k+1}): [P Gᵀ; G H], linear terms (p, h).
    let mut p = DMatrix::<f64>::zeros(nx_end, nx_end);
    let mut pv = DVector::<f64>::zeros(nx_end);
    let mut g = DMatrix::<f64>::zeros(0, nx_end);
    let mut h = DMatrix::<f64>::zeros(0, 0);
    let mut hv = DVector::<f64>::zeros(0);

    // Transition from x_{k+1} to the block end.
    let mut t = DMatrix::<f64>::identity(nx_end, nx_end);
    let mut b_bar = DMatrix::<f64>::zeros(nx_end, nu_total);
    let mut c_bar = DVector::<f64>::zeros(nx_end);
    let mut col = nu_total;

    for st in stages.iter().rev() {
        let nu = st.nu();
        let nk = st.nx();
        let m_tail = h.nrows();

        let pa = &p * &st.a;
        let pb = &p * &st.b;
        let pc_p = &p * &st.c + &pv;
        let ga = &g * &st.a;
        let gb = &g * &st.b;

        let mut h_new = DMatrix::<f64>::zeros(nu + m_tail, nu + m_tail);
        h_new
            .view_mut((0, 0), (nu, nu))
            .copy_from(&(&st.r + st.b.tr_mul(&pb)));
        h_new.view_mut((nu, 0), (m_tail, nu)).copy_from(&gb);
        h_new.view_mut((0, nu), (nu, m_tail)).copy_from(&gb.transpose());
        h_new.view_mut((nu, nu), (m_tail, m_tail)).copy_from(&h);

        let mut g_new = DMatrix::<f64>::zeros(nu + m_tail, nk);
        g_new
            .view_mut((0, 0), (nu, nk))
            .copy_from(&(&st.s + st.b.tr_mul(&pa)));
        g_new.view_mut((nu, 0), (m_tail, nk)).copy_from(&ga);

        let mut hv_new = DVector::<f64>::zeros(nu + m_tail);
        hv_new
            .rows_mut(0, nu)
            .copy_from(&(&st.gu + st.b.tr_mul(&pc_p)));
        hv_new
            .rows_mut(nu, m_tail)
            .copy_from(&(&hv + &g * &st.c));

        let p_new = &st.q + st.a.tr_mul(&pa);
        pv = &st.gx + st.a.tr_mul(&pc_p);
        p = (&p_new + p_new.transpose()) * 0.5;
        g = g_new;
        h = (&h_new + h_new.transpose()) * 0.5;
        hv = hv_new;

        col -= nu;
        b_bar.view_mut((0, col), (nx_end, nu)).copy_from(&(&t * &st.b));
        c_bar += &t * &st.c;
        t = &t * &st.a;
    }

    let lb = DVector::from_iterator(nu_total, stages.iter().flat_map(|s| s.lb.iter().copied()));
    let ub = DVector::from_iterator(nu_total, stages.iter().flat_map(|s| s.ub.iter().copied()));
    QpStage {
        a: t,
        b: b_bar,
        c: c_bar,
        q: p,
        s: g,
        r: h,
        gx: pv,
        gu: hv,
        lb,
        ub,
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::random_qp;
    use super::super::{solve_riccati_ipm, IpmSettings, QpStatus};
    use super::*;

    #[test]
    fn block_size_one_is_identity() {
        let qp = random_qp(1, 6, 3, 2);
        let pc = partial_condense(&qp, 1).unwrap();
        assert_eq!(pc.qp(), &qp);
        let sol = solve_riccati_ipm(pc.qp(), &IpmSettings::default()).unwrap();
        let expanded = pc.expand(&sol).unwrap();
        assert_eq!(expanded.u, sol.u);
        assert_eq!(expanded.x, sol.x);
        assert_eq!(expanded.pi, sol.pi);
    }

    #[test]
    fn stage_count_is_ceiling() {
        let qp = random_qp(2, 50, 2, 1);
        assert_eq!(partial_condense(&qp, 5).unwrap().qp().horizon(), 10);
        assert_eq!(partial_condense(&qp, 7).unwrap().qp().horizon(), 8);
        assert_eq!(partial_condense(&qp, 50).unwrap().qp().horizon(), 1);
        let pc = partial_condense(&qp, 7).unwrap();
        assert_eq!(pc.qp().stages[7].nu(), 1);
    }

    #[test]
    fn rejects_out_of_range_block_size() {
        let qp = random_qp(3, 4, 2, 1);
        assert!(partial_condense(&qp, 0).is_err());
        assert!(partial_condense(&qp, 5).is_err());
    }

    #[test]
    fn expanded_point_is_dynamically_feasible() {
        let qp = random_qp(4, 4, 3, 2);
        let pc = partial_condense(&qp, 2).unwrap();
        let sol = solve_riccati_ipm(pc.qp(), &IpmSettings::default()).unwrap();
        let full = pc.expand(&sol).unwrap();
        assert!(full.residuals.equality <= 1e-10, "{:?}", full.residuals);
    }

    #[test]
    fn optimum_is_invariant_to_block_size() {
        for seed in 0..10 {
            let qp = random_qp(40 + seed, 10, 3, 2);
            let reference = solve_riccati_ipm(&qp, &IpmSettings::default()).unwrap();
            for m in [2, 3, 5, 10] {
                let pc = partial_condense(&qp, m).unwrap();
                let sol = solve_riccati_ipm(pc.qp(), &IpmSettings::default()).unwrap();
                assert_eq!(sol.status, QpStatus::Converged);
                let full = pc.expand(&sol).unwrap();
                for i in 0..10 {
                    assert!((&full.u[i] - &reference.u[i]).amax() < 1e-6, "seed {seed} M {m}");
                }
                assert!(full.residuals.stationarity <= 1e-7, "seed {seed} M {m}: {:?}", full.residuals);
            }
        }
    }

    #[test]
    fn expand_rejects_foreign_solution() {
        let qp = random_qp(5, 6, 2, 1);
        let pc = partial_condense(&qp, 3).unwrap();
        let wrong = QpSolution::zeros(&qp);
        assert!(matches!(pc.expand(&wrong), Err(Error::DimensionMismatch(_))));
    }
}
