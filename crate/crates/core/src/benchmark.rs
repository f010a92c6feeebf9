//! Closed-loop timing of the two QP pipelines across horizon lengths.

use std::io::{Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadrotorParams, State};
use crate::error::{Error, Result};
use crate::ocp::{discrete_dynamics, OcpConfig, ReferenceTrajectory};
use crate::qp::SolverKind;
use crate::rti::{RtiController, RtiSettings};
use crate::study::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub horizons: Vec<usize>,
    pub solvers: Vec<SolverKind>,
    /// Block size of the Riccati pipeline; clipped to the horizon.
    pub block_size: usize,
    pub warmup: usize,
    pub cycles: usize,
    pub start: [f64; 3],
    pub target: [f64; 3],
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            horizons: vec![10, 20, 30, 40, 50],
            solvers: vec![SolverKind::Riccati, SolverKind::Dense],
            block_size: 5,
            warmup: 20,
            cycles: 100,
            start: [0.0, 0.0, 0.4],
            target: [0.3, -0.3, 0.6],
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.solvers.is_empty() {
            return Err(Error::InvalidConfig("benchmark needs horizons and solvers".into()));
        }
        if self.horizons.contains(&0) || self.block_size == 0 {
            return Err(Error::InvalidConfig("horizons and block_size must be positive".into()));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidConfig("benchmark.cycles must be positive".into()));
        }
        Ok(())
    }
}

/// One timed RTI cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub solver: SolverKind,
    pub block_size: usize,
    pub ip_iters: usize,
    pub time_prep_us: f64,
    pub time_solve_us: f64,
}

impl BenchmarkRow {
    /// Solve time per interior-point iteration, us.
    pub fn per_iteration_us(&self) -> f64 {
        self.time_solve_us / self.ip_iters.max(1) as f64
    }

    pub fn cycle_us(&self) -> f64 {
        self.time_prep_us + self.time_solve_us
    }
}

/// Aggregate of all trials for one `(N, solver)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub solver: SolverKind,
    pub block_size: usize,
    pub trials: usize,
    pub mean_ip_iters: f64,
    pub mean_iter_us: f64,
    pub median_iter_us: f64,
    pub max_iter_us: f64,
    /// Mean and worst whole cycle (preparation plus feedback), us.
    pub t_avg_us: f64,
    pub t_max_us: f64,
}

/// Times `cfg.cycles` closed-loop RTI cycles per horizon and solver after
/// `cfg.warmup` untimed ones. The plant is the controller's own discrete model.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    ocp: &OcpConfig,
    params: &QuadrotorParams,
    rti: &RtiSettings,
) -> Result<Vec<BenchmarkRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.horizons {
        for &solver in &cfg.solvers {
            rows.extend(run_case(cfg, n, solver, ocp, params, rti)?);
        }
    }
    Ok(rows)
}

fn run_case(
    cfg: &BenchmarkConfig,
    n: usize,
    solver: SolverKind,
    ocp: &OcpConfig,
    params: &QuadrotorParams,
    rti: &RtiSettings,
) -> Result<Vec<BenchmarkRow>> {
    let ocp = OcpConfig {
        horizon: n,
        ..ocp.clone()
    };
    let block_size = match solver {
        SolverKind::Riccati => cfg.block_size.min(n),
        SolverKind::Dense => n,
    };
    let settings = RtiSettings {
        solver,
        block_size,
        split: true,
        ..*rti
    };
    let start = Vector3::from(cfg.start);
    let mut ctrl = RtiController::new(ocp.clone(), *params, settings, start)?;
    let refs = ReferenceTrajectory::hover(params, Vector3::from(cfg.target), n);
    let mut x = State::hover_at(start);
    let mut rows = Vec::with_capacity(cfg.cycles);
    for k in 0..cfg.warmup + cfg.cycles {
        let out = ctrl.step(&refs, &x)?;
        x = discrete_dynamics(&x, &out.u, params, ocp.dt).normalized()?;
        if k >= cfg.warmup {
            let d = out.diagnostics;
            rows.push(BenchmarkRow {
                n,
                solver,
                block_size,
                ip_iters: d.qp_iters,
                time_prep_us: d.prep_us,
                time_solve_us: d.fb_us,
            });
        }
    }
    Ok(rows)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// One summary per `(N, solver)` pair, in first-seen order.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<BenchmarkSummary> {
    let mut keys: Vec<(usize, SolverKind)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.n, r.solver)) {
            keys.push((r.n, r.solver));
        }
    }
    keys.into_iter()
        .map(|(n, solver)| {
            let group: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.n == n && r.solver == solver).collect();
            let m = group.len() as f64;
            let mut per_iter: Vec<f64> = group.iter().map(|r| r.per_iteration_us()).collect();
            let cycle: Vec<f64> = group.iter().map(|r| r.cycle_us()).collect();
            BenchmarkSummary {
                n,
                solver,
                block_size: group[0].block_size,
                trials: group.len(),
                mean_ip_iters: group.iter().map(|r| r.ip_iters as f64).sum::<f64>() / m,
                mean_iter_us: per_iter.iter().sum::<f64>() / m,
                max_iter_us: per_iter.iter().copied().fold(0.0, f64::max),
                median_iter_us: median(&mut per_iter),
                t_avg_us: cycle.iter().sum::<f64>() / m,
                t_max_us: cycle.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DimensionMismatch("fit needs at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Median per-iteration time of one solver, by increasing horizon.
pub fn per_iteration_series(summaries: &[BenchmarkSummary], solver: SolverKind) -> (Vec<f64>, Vec<f64>) {
    let mut s: Vec<&BenchmarkSummary> = summaries.iter().filter(|s| s.solver == solver).collect();
    s.sort_by_key(|s| s.n);
    (
        s.iter().map(|s| s.n as f64).collect(),
        s.iter().map(|s| s.median_iter_us).collect(),
    )
}

/// Horizon-scaling verdicts: the dense exponent is at least `dense_min`, the
/// Riccati exponent at most `riccati_max`, and the dense/Riccati ratio grows
/// strictly with `N`.
pub fn scaling_verdicts(summaries: &[BenchmarkSummary], dense_min: f64, riccati_max: f64) -> Result<Vec<Verdict>> {
    let (nd, td) = per_iteration_series(summaries, SolverKind::Dense);
    let (nr, tr) = per_iteration_series(summaries, SolverKind::Riccati);
    if nd != nr {
        return Err(Error::DimensionMismatch("solvers were run on different horizons".into()));
    }
    let ed = fit_exponent(&nd, &td)?;
    let er = fit_exponent(&nr, &tr)?;
    let ratio: Vec<f64> = td.iter().zip(&tr).map(|(d, r)| d / r).collect();
    let increasing = ratio.windows(2).all(|w| w[1] > w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ");
    Ok(vec![
        Verdict {
            name: "dense per-iteration exponent".into(),
            passed: ed >= dense_min,
            detail: format!("{ed:.2} >= {dense_min}"),
        },
        Verdict {
            name: "riccati per-iteration exponent".into(),
            passed: er <= riccati_max,
            detail: format!("{er:.2} <= {riccati_max}"),
        },
        Verdict {
            name: "dense/riccati ratio strictly increasing".into(),
            passed: increasing,
            detail: format!("ratios [{}] at N = {:?}", fmt(&ratio), nd),
        },
    ])
}

pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_benchmark_csv<R: Read>(input: R) -> Result<Vec<BenchmarkRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(summaries: &[BenchmarkSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
