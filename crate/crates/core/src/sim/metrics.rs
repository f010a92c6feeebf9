//! Tracking metrics computed from a closed-loop trace.

use nalgebra::Vector3;
use serde::Serialize;

use super::SimTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// RMS position error per axis, m.
    pub rms: [f64; 3],
    /// RMS of the position error norm, m.
    pub rms_norm: f64,
    /// Largest position error norm, m.
    pub max_error: f64,
    /// Peak overshoot per axis relative to the step size, %.
    pub overshoot_pct: [f64; 3],
    /// 2 % settling time per axis, s; `None` if the axis never settles.
    pub settling_time: [Option<f64>; 3],
    /// Cycles with any input at a bound, %.
    pub saturation_pct: f64,
}

impl Metrics {
    /// Slowest axis; `None` if any axis is unsettled.
    pub fn settling_time_max(&self) -> Option<f64> {
        self.settling_time
            .iter()
            .try_fold(0.0_f64, |acc, s| s.map(|v| acc.max(v)))
    }
}

/// Step-response figures of one signal sampled at `times`.
///
/// Overshoot is measured past `target` in the direction of the step from
/// `start`; settling is the first sample after the last one outside the
/// `±2 %` band. Steps smaller than `1e-9` report zero for both.
pub fn step_response(times: &[f64], values: &[f64], start: f64, target: f64) -> (f64, Option<f64>) {
    let step = target - start;
    if step.abs() < 1e-9 || times.is_empty() {
        return (0.0, Some(0.0));
    }
    let dir = step.signum();
    let peak = values
        .iter()
        .map(|v| dir * (v - target))
        .fold(0.0_f64, f64::max);
    let overshoot = 100.0 * peak / step.abs();
    let band = 0.02 * step.abs();
    let last_out = values.iter().rposition(|v| (v - target).abs() > band);
    let settling = match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < times.len() => Some(times[i + 1] - times[0]),
        Some(_) => None,
    };
    (overshoot, settling)
}

/// Metrics of `trace` against the references it logged. The step start is
/// the first logged position and the target the last logged reference.
pub fn compute_metrics(trace: &SimTrace, u_min: f64, u_max: f64) -> Result<Metrics> {
    let rows = &trace.rows;
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = rows.len() as f64;
    let mut sq = Vector3::zeros();
    let mut sq_norm = 0.0;
    let mut max_error: f64 = 0.0;
    for r in rows {
        let e = r.state.position() - r.reference;
        sq += e.component_mul(&e);
        sq_norm += e.norm_squared();
        max_error = max_error.max(e.norm());
    }
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let start = rows[0].state.position();
    let target = rows[rows.len() - 1].reference;
    let mut overshoot_pct = [0.0; 3];
    let mut settling_time = [None; 3];
    for k in 0..3 {
        let vals: Vec<f64> = rows.iter().map(|r| r.state.position()[k]).collect();
        let (o, s) = step_response(&times, &vals, start[k], target[k]);
        overshoot_pct[k] = o;
        settling_time[k] = s;
    }
    let tol = 1e-6;
    let saturated = rows
        .iter()
        .filter(|r| r.command.0.iter().any(|u| *u <= u_min + tol || *u >= u_max - tol))
        .count();
    Ok(Metrics {
        rms: [(sq.x / n).sqrt(), (sq.y / n).sqrt(), (sq.z / n).sqrt()],
        rms_norm: (sq_norm / n).sqrt(),
        max_error,
        overshoot_pct,
        settling_time,
        saturation_pct: 100.0 * saturated as f64 / n,
    })
}
