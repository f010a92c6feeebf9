use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use quadnmpc::benchmark::{run_benchmark, scaling_verdicts, summarize, write_benchmark_csv, write_summary_csv};
use quadnmpc::qp::SolverKind;
use quadnmpc::sim::{
    compute_metrics, gen_helix, gen_smooth_step, run_closed_loop, scenario_reference, write_diagnostics_csv,
    write_trace_csv, Metrics, Reference, ReferenceTable, ScenarioKind, SimTrace,
};
use quadnmpc::study::{compare_study, condensing_study, delay_study, horizon_study, StudyReport, Verdict};
use quadnmpc::{Error, State};

use crate::config::Config;
use crate::{plots, CliError, StudyName, TrajKind};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct RunSummary<'a> {
    completed: bool,
    diverged: bool,
    failure: Option<&'a str>,
    cycles: usize,
    degraded_cycles: usize,
    max_quat_error: f64,
    t_avg_us: f64,
    t_max_us: f64,
    metrics: &'a Metrics,
}

fn summary<'a>(trace: &'a SimTrace, metrics: &'a Metrics) -> RunSummary<'a> {
    let cycle: Vec<f64> = trace
        .rows
        .iter()
        .map(|r| r.diagnostics.prep_us + r.diagnostics.fb_us)
        .collect();
    RunSummary {
        completed: trace.completed(),
        diverged: trace.diverged,
        failure: trace.failure.as_deref(),
        cycles: trace.rows.len(),
        degraded_cycles: trace.rows.iter().filter(|r| r.diagnostics.degraded).count(),
        max_quat_error: trace.max_quat_error,
        t_avg_us: cycle.iter().sum::<f64>() / cycle.len().max(1) as f64,
        t_max_us: cycle.iter().copied().fold(0.0, f64::max),
        metrics,
    }
}

fn human_summary(s: &RunSummary) -> String {
    let m = s.metrics;
    let settle = |v: Option<f64>| v.map_or("unsettled".to_string(), |t| format!("{t:.3} s"));
    let mut out = String::new();
    out.push_str(&format!(
        "status            {}\n",
        if s.completed { "completed" } else if s.diverged { "diverged" } else { "failed" }
    ));
    if let Some(f) = s.failure {
        out.push_str(&format!("failure           {f}\n"));
    }
    out.push_str(&format!("cycles            {} ({} degraded)\n", s.cycles, s.degraded_cycles));
    out.push_str(&format!(
        "rms error [m]     x {:.4}  y {:.4}  z {:.4}  norm {:.4}\n",
        m.rms[0], m.rms[1], m.rms[2], m.rms_norm
    ));
    out.push_str(&format!("max error [m]     {:.4}\n", m.max_error));
    out.push_str(&format!(
        "overshoot [%]     x {:.3}  y {:.3}  z {:.3}\n",
        m.overshoot_pct[0], m.overshoot_pct[1], m.overshoot_pct[2]
    ));
    out.push_str(&format!(
        "settling          x {}  y {}  z {}\n",
        settle(m.settling_time[0]),
        settle(m.settling_time[1]),
        settle(m.settling_time[2])
    ));
    out.push_str(&format!("saturated cycles  {:.1} %\n", m.saturation_pct));
    out.push_str(&format!("cycle time [us]   mean {:.0}  max {:.0}\n", s.t_avg_us, s.t_max_us));
    out
}

fn load_reference(cfg: &Config) -> Result<(Reference, State), CliError> {
    let setup = cfg.setup();
    if setup.sim.scenario != ScenarioKind::File {
        return scenario_reference(&setup).map_err(runtime);
    }
    let path = setup
        .sim
        .reference_file
        .as_ref()
        .ok_or_else(|| CliError::Config("sim.reference_file is required for scenario = \"file\"".into()))?;
    let file = File::open(path).map_err(|e| CliError::Runtime(format!("cannot open {path}: {e}")))?;
    let table = ReferenceTable::read_csv(file, &cfg.model).map_err(runtime)?;
    if table.is_empty() {
        return Err(CliError::Runtime(format!("{path} has no rows")));
    }
    let x0 = State::hover_at(table.states[0].position());
    Ok((Reference::Table(table), x0))
}

pub fn simulate(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let (reference, x0) = load_reference(cfg)?;
    let setup = cfg.setup();
    let trace = run_closed_loop(&setup, &reference, &x0).map_err(runtime)?;
    let metrics = compute_metrics(&trace, cfg.nmpc.u_min[0], cfg.nmpc.u_max[0]).map_err(runtime)?;

    prepare_dir(out)?;
    write_trace_csv(&trace, create(&out.join("trace.csv"))?).map_err(runtime)?;
    write_diagnostics_csv(&trace, create(&out.join("diagnostics.csv"))?).map_err(runtime)?;
    let s = summary(&trace, &metrics);
    let json = serde_json::to_string_pretty(&s).map_err(runtime)?;
    write_text(&out.join("metrics.json"), &json)?;
    let text = human_summary(&s);
    write_text(&out.join("metrics.txt"), &text)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    write_text(&out.join("plot_trace.py"), plots::TRACE)?;
    print!("{text}");
    println!("outputs written to {}", out.display());
    match &trace.failure {
        Some(f) => Err(CliError::Runtime(format!("simulation stopped early: {f}"))),
        None => Ok(()),
    }
}

pub fn benchmark(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let rows = run_benchmark(&cfg.benchmark, &cfg.nmpc, &cfg.model, &cfg.rti_settings()).map_err(runtime)?;
    let summaries = summarize(&rows);
    prepare_dir(out)?;
    write_benchmark_csv(&rows, create(&out.join("benchmark.csv"))?).map_err(runtime)?;
    write_summary_csv(&summaries, create(&out.join("benchmark_summary.csv"))?).map_err(runtime)?;
    write_text(&out.join("plot_benchmark.py"), plots::BENCHMARK)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;

    println!(
        "{:>4} {:>8} {:>3} {:>7} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "N", "solver", "M", "iters", "mean it[us]", "med it[us]", "max it[us]", "t_AVG[us]", "t_MAX[us]"
    );
    for s in &summaries {
        println!(
            "{:>4} {:>8} {:>3} {:>7.2} {:>12.1} {:>12.1} {:>12.1} {:>10.0} {:>10.0}",
            s.n,
            s.solver.as_str(),
            s.block_size,
            s.mean_ip_iters,
            s.mean_iter_us,
            s.median_iter_us,
            s.max_iter_us,
            s.t_avg_us,
            s.t_max_us
        );
    }
    let both = [SolverKind::Riccati, SolverKind::Dense]
        .iter()
        .all(|k| cfg.benchmark.solvers.contains(k));
    if both && cfg.benchmark.horizons.len() >= 2 {
        for v in scaling_verdicts(&summaries, 2.0, 1.3).map_err(runtime)? {
            println!("{v}");
        }
    }
    println!("outputs written to {}", out.display());
    Ok(())
}

pub fn trajgen(cfg: &Config, kind: TrajKind, path: &Path) -> Result<(), CliError> {
    let table = match kind {
        TrajKind::Helix => gen_helix(&cfg.traj.helix, &cfg.model).map_err(|e| CliError::Config(e.to_string()))?,
        TrajKind::SmoothStep => {
            let (table, sol) = match gen_smooth_step(&cfg.traj.smooth_step, &cfg.nmpc, &cfg.rti_settings(), &cfg.model) {
                Ok(r) => r,
                Err(Error::NotConverged {
                    iterations,
                    last,
                    history,
                }) => {
                    let tail: Vec<String> = history.iter().rev().take(5).rev().map(|v| format!("{v:.3e}")).collect();
                    return Err(CliError::Runtime(format!(
                        "smooth step did not converge after {iterations} SQP iterations \
                         (last KKT residual {last:.3e}; recent [{}])",
                        tail.join(", ")
                    )));
                }
                Err(e) => return Err(runtime(e)),
            };
            println!(
                "smooth step: {} SQP iterations, KKT {:.3e}, max defect {:.3e}",
                sol.iterations,
                sol.kkt_history.last().copied().unwrap_or(0.0),
                sol.max_defect(&cfg.model, table.dt)
            );
            table
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_dir(parent)?;
    }
    table.write_csv(create(path)?).map_err(runtime)?;
    println!("{} rows written to {}", table.len(), path.display());
    Ok(())
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        println!("{v}");
    }
}

fn write_report(report: &StudyReport, out: &Path) -> Result<(), CliError> {
    let name = &report.name;
    report
        .write_csv(create(&out.join(format!("study_{name}.csv")))?)
        .map_err(runtime)?;
    report
        .write_traces_csv(create(&out.join(format!("study_{name}_traces.csv")))?)
        .map_err(runtime)?;
    write_text(&out.join(format!("plot_study_{name}.py")), &plots::study(name))?;
    Ok(())
}

fn verdict_text(verdicts: &[Verdict]) -> String {
    verdicts.iter().map(|v| format!("{v}\n")).collect()
}

pub fn study(cfg: &Config, name: StudyName, out: &Path) -> Result<(), CliError> {
    let setup = cfg.setup();
    let sc = &cfg.study;
    prepare_dir(out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let (verdicts, failed_runs) = match name {
        StudyName::Condensing => {
            let r = condensing_study(&setup, &sc.block_sizes, sc.condensing_tol).map_err(runtime)?;
            let mut w = csv_writer(&out.join("study_condensing.csv"))?;
            w.write_record(["block_size", "ip_iters", "max_deviation"]).map_err(runtime)?;
            for ((m, it), d) in r.block_sizes.iter().zip(&r.iterations).zip(&r.max_deviation) {
                w.write_record([m.to_string(), it.to_string(), format!("{d:e}")]).map_err(runtime)?;
            }
            w.flush().map_err(runtime)?;
            write_text(&out.join("plot_study_condensing.py"), plots::CONDENSING)?;
            (vec![r.verdict], Vec::new())
        }
        other => {
            let report = match other {
                StudyName::Horizon => horizon_study(&setup, &sc.horizons),
                StudyName::Delay => delay_study(&setup, &sc.lambdas),
                _ => compare_study(&setup),
            }
            .map_err(runtime)?;
            write_report(&report, out)?;
            for r in &report.runs {
                let m = &r.metrics;
                println!(
                    "{:<28} {:<9} rms {:.4} m  z overshoot {:.3} %  settling {}",
                    r.label,
                    if r.completed() { "completed" } else { "diverged" },
                    m.rms_norm,
                    m.overshoot_pct[2],
                    m.settling_time_max().map_or("unsettled".into(), |t| format!("{t:.3} s"))
                );
            }
            let failed: Vec<String> = report.runs.iter().filter(|r| !r.completed()).map(|r| r.label.clone()).collect();
            (report.verdicts, failed)
        }
    };
    write_text(&out.join("verdicts.txt"), &verdict_text(&verdicts))?;
    print_verdicts(&verdicts);
    println!("outputs written to {}", out.display());
    if !failed_runs.is_empty() {
        return Err(CliError::Runtime(format!("runs did not complete: {}", failed_runs.join(", "))));
    }
    if verdicts.iter().any(|v| !v.passed) {
        return Err(CliError::Runtime("study verdicts failed".into()));
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

/// `--out`, else `$QUADNMPC_OUT`, else `./out`, joined with `sub`.
pub fn output_dir(explicit: Option<&Path>, sub: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(crate::OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(sub),
    }
}
