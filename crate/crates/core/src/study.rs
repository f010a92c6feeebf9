//! Multi-run studies with pass/fail verdicts on their expected trends.
//!
//! A run that diverges scores worse than any run that completes: its
//! overshoot, RMS error and settling time all count as infinite when runs are
//! compared.

use std::io::Write;
use std::thread;

use nalgebra::DVector;
use serde::Serialize;

use crate::delay::DelayConfig;
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::ocp::{build_qp, ReferenceTrajectory, TrajectoryGuess};
use crate::qp::{PreparedQp, SolverKind};
use crate::sim::{compute_metrics, run_closed_loop, scenario_reference, ControllerKind, Metrics, SimSetup, SimTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// One closed-loop run of a study.
#[derive(Debug, Clone)]
pub struct StudyRun {
    pub label: String,
    pub setup: SimSetup,
    pub trace: SimTrace,
    pub metrics: Metrics,
}

impl StudyRun {
    pub fn completed(&self) -> bool {
        self.trace.completed()
    }

    pub fn rms_score(&self) -> f64 {
        self.score(self.metrics.rms_norm)
    }

    pub fn overshoot_score(&self, axis: usize) -> f64 {
        self.score(self.metrics.overshoot_pct[axis])
    }

    /// Slowest-axis settling time; infinite if unsettled or diverged.
    pub fn settling_score(&self) -> f64 {
        self.score(self.metrics.settling_time_max().unwrap_or(f64::INFINITY))
    }

    fn score(&self, v: f64) -> f64 {
        if self.completed() {
            v
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub name: String,
    pub runs: Vec<StudyRun>,
    pub verdicts: Vec<Verdict>,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// One row per run with its configuration and metrics.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            label: &'a str,
            controller: &'a str,
            n: usize,
            lambda: u32,
            compensate: bool,
            completed: bool,
            rms_x: f64,
            rms_y: f64,
            rms_z: f64,
            rms_norm: f64,
            max_error: f64,
            overshoot_x: f64,
            overshoot_y: f64,
            overshoot_z: f64,
            settling_s: Option<f64>,
            saturation_pct: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for r in &self.runs {
            let m = &r.metrics;
            w.serialize(Row {
                label: &r.label,
                controller: match r.setup.sim.controller {
                    ControllerKind::Nmpc => "nmpc",
                    ControllerKind::Lqr => "lqr",
                },
                n: r.setup.nmpc.horizon,
                lambda: r.setup.delay.lambda.unwrap_or(0),
                compensate: r.setup.delay.compensate,
                completed: r.completed(),
                rms_x: m.rms[0],
                rms_y: m.rms[1],
                rms_z: m.rms[2],
                rms_norm: m.rms_norm,
                max_error: m.max_error,
                overshoot_x: m.overshoot_pct[0],
                overshoot_y: m.overshoot_pct[1],
                overshoot_z: m.overshoot_pct[2],
                settling_s: m.settling_time_max(),
                saturation_pct: m.saturation_pct,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Traces of every run, stacked with a leading `label` column.
    pub fn write_traces_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "t", "x", "y", "z", "ref_x", "ref_y", "ref_z"])?;
        for r in &self.runs {
            for row in &r.trace.rows {
                let p = row.state.position();
                let rec = [row.t, p.x, p.y, p.z, row.reference.x, row.reference.y, row.reference.z];
                let mut fields = vec![r.label.clone()];
                fields.extend(rec.iter().map(|v| v.to_string()));
                w.write_record(&fields)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `better <= worse`, where a diverged run never counts as the better one.
fn no_worse(better: f64, worse: f64) -> bool {
    better.is_finite() && better <= worse
}

fn describe(run: &StudyRun, value: f64) -> String {
    if run.completed() {
        format!("{}={value:.4}", run.label)
    } else {
        format!("{}=diverged", run.label)
    }
}

/// Runs every setup from its scenario's initial state, in parallel.
pub fn run_all(setups: Vec<(String, SimSetup)>) -> Result<Vec<StudyRun>> {
    let results: Vec<Result<StudyRun>> = thread::scope(|scope| {
        let handles: Vec<_> = setups
            .into_iter()
            .map(|(label, setup)| {
                scope.spawn(move || -> Result<StudyRun> {
                    let (reference, x0) = scenario_reference(&setup)?;
                    let trace = run_closed_loop(&setup, &reference, &x0)?;
                    let metrics = compute_metrics(&trace, setup.nmpc.u_min[0], setup.nmpc.u_max[0])?;
                    Ok(StudyRun {
                        label,
                        setup,
                        trace,
                        metrics,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::NumericalFailure { stage: 0, detail: "study run panicked".into() }))
            })
            .collect()
    });
    results.into_iter().collect()
}

/// RMS tracking error over the horizons, expected non-increasing.
pub fn horizon_study(base: &SimSetup, horizons: &[usize]) -> Result<StudyReport> {
    let setups = horizons
        .iter()
        .map(|&n| {
            let mut s = base.clone();
            s.sim.controller = ControllerKind::Nmpc;
            s.nmpc.horizon = n;
            s.rti.block_size = s.rti.block_size.min(n);
            (format!("N={n}"), s)
        })
        .collect();
    let runs = run_all(setups)?;
    let scores: Vec<f64> = runs.iter().map(StudyRun::rms_score).collect();
    let ok = scores.windows(2).all(|w| no_worse(w[1], w[0]));
    let detail = runs
        .iter()
        .map(|r| describe(r, r.metrics.rms_norm))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(StudyReport {
        name: "horizon".into(),
        runs,
        verdicts: vec![Verdict::new("RMS error non-increasing in N", ok, format!("rms [m]: {detail}"))],
    })
}

/// z overshoot against round-trip delay without compensation, plus the
/// compensated run at the largest delay.
pub fn delay_study(base: &SimSetup, lambdas: &[u32]) -> Result<StudyReport> {
    let lmax = *lambdas
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidConfig("delay study needs at least one lambda".into()))?;
    let mut setups: Vec<(String, SimSetup)> = lambdas
        .iter()
        .map(|&l| {
            let mut s = base.clone();
            s.sim.controller = ControllerKind::Nmpc;
            s.delay = DelayConfig {
                compensate: false,
                ..with_lambda(&base.delay, l)
            };
            (format!("lambda={l}"), s)
        })
        .collect();
    let mut comp = base.clone();
    comp.sim.controller = ControllerKind::Nmpc;
    comp.delay = DelayConfig {
        compensate: true,
        ..with_lambda(&base.delay, lmax)
    };
    setups.push((format!("lambda={lmax},compensated"), comp));
    let runs = run_all(setups)?;

    let k = lambdas.len();
    let unc: Vec<f64> = runs[..k].iter().map(|r| r.overshoot_score(2)).collect();
    let monotone = unc.windows(2).all(|w| no_worse(w[0], w[1]));
    let detail = runs
        .iter()
        .map(|r| describe(r, r.metrics.overshoot_pct[2]))
        .collect::<Vec<_>>()
        .join(", ");
    let base_os = runs[lambdas.iter().position(|&l| l == 0).unwrap_or(0)].overshoot_score(2);
    let comp_os = runs[k].overshoot_score(2);
    let unc_max = runs[lambdas.iter().position(|&l| l == lmax).unwrap_or(k - 1)].overshoot_score(2);
    let within = no_worse(comp_os, 2.0 * base_os);
    let below = comp_os.is_finite() && comp_os < unc_max;
    let improves = no_worse(comp_os, 0.8 * unc_max);
    Ok(StudyReport {
        name: "delay".into(),
        runs,
        verdicts: vec![
            Verdict::new(
                "uncompensated z overshoot non-decreasing in delay",
                monotone,
                format!("z overshoot [%]: {detail}"),
            ),
            Verdict::new(
                "compensated overshoot within 2x the undelayed run",
                within,
                format!("{comp_os:.4} vs 2 x {base_os:.4}"),
            ),
            Verdict::new(
                "compensation beats no compensation at the largest delay",
                below,
                format!("{comp_os:.4} < {unc_max:.4}"),
            ),
            Verdict::new(
                "compensation removes at least 20% of the overshoot",
                improves,
                format!("{comp_os:.4} <= 0.8 x {unc_max:.4}"),
            ),
        ],
    })
}

fn with_lambda(d: &DelayConfig, lambda: u32) -> DelayConfig {
    DelayConfig {
        tau1: 0.0,
        tau2: 0.0,
        tauc: 0.0,
        lambda: Some(lambda),
        ..*d
    }
}

/// NMPC against LQR on the same scenario.
pub fn compare_study(base: &SimSetup) -> Result<StudyReport> {
    let setups = [ControllerKind::Nmpc, ControllerKind::Lqr]
        .into_iter()
        .map(|c| {
            let mut s = base.clone();
            s.sim.controller = c;
            (if c == ControllerKind::Nmpc { "nmpc" } else { "lqr" }.to_string(), s)
        })
        .collect();
    let runs = run_all(setups)?;
    let (nmpc, lqr) = (&runs[0], &runs[1]);
    let os = (nmpc.overshoot_score(2), lqr.overshoot_score(2));
    let st = (nmpc.settling_score(), lqr.settling_score());
    let status = |r: &StudyRun| if r.completed() { "" } else { " (diverged)" };
    let verdicts = vec![
        Verdict::new(
            "NMPC z overshoot below LQR",
            os.0.is_finite() && os.0 < os.1,
            format!(
                "nmpc {:.4}%{} vs lqr {:.4}%{}",
                nmpc.metrics.overshoot_pct[2],
                status(nmpc),
                lqr.metrics.overshoot_pct[2],
                status(lqr)
            ),
        ),
        Verdict::new(
            "NMPC settles no later than LQR",
            no_worse(st.0, st.1),
            format!("nmpc {:?} s vs lqr {:?} s", finite(st.0), finite(st.1)),
        ),
    ];
    Ok(StudyReport {
        name: "compare".into(),
        runs,
        verdicts,
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Optimal inputs of one NMPC QP for each condensing block size.
#[derive(Debug, Clone)]
pub struct CondensingReport {
    pub block_sizes: Vec<usize>,
    pub inputs: Vec<Vec<DVector<f64>>>,
    pub iterations: Vec<usize>,
    /// Largest deviation from the `M = 1` inputs, per block size.
    pub max_deviation: Vec<f64>,
    pub verdict: Verdict,
}

/// Solves the first QP of the configured step scenario with every block size.
pub fn condensing_study(base: &SimSetup, block_sizes: &[usize], tol: f64) -> Result<CondensingReport> {
    let p = &base.model;
    let cfg = &base.nmpc;
    let n = cfg.horizon;
    let x0 = State::hover_at(base.sim.start_position());
    let refs = ReferenceTrajectory::hover(p, base.sim.target_position(), n);
    let guess = TrajectoryGuess::hover(p, x0.position(), n);
    let lin = build_qp(&guess, &refs, &x0, cfg, p)?;
    let mut inputs = Vec::new();
    let mut iterations = Vec::new();
    for &m in block_sizes {
        let mut prepared = PreparedQp::new(lin.qp.clone(), SolverKind::Riccati, m, base.rti.ipm)?;
        let sol = prepared.solve()?;
        iterations.push(sol.iterations);
        inputs.push(sol.u);
    }
    let reference = inputs
        .first()
        .cloned()
        .ok_or_else(|| Error::InvalidConfig("condensing study needs block sizes".into()))?;
    let max_deviation: Vec<f64> = inputs
        .iter()
        .map(|u| {
            u.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max)
        })
        .collect();
    let worst = max_deviation.iter().copied().fold(0.0, f64::max);
    let verdict = Verdict::new(
        "optimal inputs invariant to the block size",
        worst <= tol,
        format!("max |u_M - u_1| = {worst:.3e} over M = {block_sizes:?} (tol {tol:.0e})"),
    );
    Ok(CondensingReport {
        block_sizes: block_sizes.to_vec(),
        inputs,
        iterations,
        max_deviation,
        verdict,
    })
}
