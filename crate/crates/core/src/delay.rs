//! Round-trip delay model and the forward state predictor that compensates
//! for it.
//!
//! A measurement taken at `t − τ₁` reaches the controller at `t`; the command
//! computed then leaves after `τ_c` and acts on the plant `τ₂` later. The
//! predictor integrates the model from the measured state across the whole
//! round trip `τ_r = τ₁ + τ_c + τ₂`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_erk4, QuadrotorParams, RotorInput, State};
use crate::error::{Error, Result};

/// Slack used when comparing timestamps that are sums of floating steps.
const TIME_EPS: f64 = 1e-9;

/// Which input the predictor assumes over the delay window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputAssumption {
    /// The inputs actually sent, looked up by time.
    Replay,
    /// The most recent input for the whole window.
    HoldLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub tauc: f64,
    /// Round trip as a multiple of the sampling time; excludes the explicit
    /// delays.
    pub lambda: Option<u32>,
    pub compensate: bool,
    /// Number of equal RK4 steps spanning the round trip.
    pub predictor_steps: usize,
    pub inputs: InputAssumption,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self {
            tau1: 0.0,
            tau2: 0.0,
            tauc: 0.0,
            lambda: None,
            compensate: true,
            predictor_steps: 1,
            inputs: InputAssumption::Replay,
        }
    }
}

/// Resolved delays in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Delays {
    pub tau1: f64,
    pub tau2: f64,
    pub tauc: f64,
}

impl Delays {
    pub fn round_trip(&self) -> f64 {
        self.tau1 + self.tau2 + self.tauc
    }
}

impl DelayConfig {
    /// Delay of `lambda` sampling periods, split evenly between measurement
    /// and actuation.
    pub fn from_lambda(lambda: u32, compensate: bool) -> Self {
        Self {
            lambda: Some(lambda),
            compensate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2), ("tauc", self.tauc)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("delay.{name} must be non-negative, got {v}")));
            }
        }
        if self.lambda.is_some() && (self.tau1 != 0.0 || self.tau2 != 0.0 || self.tauc != 0.0) {
            return Err(Error::InvalidConfig(
                "delay.lambda cannot be combined with delay.tau1/tau2/tauc".into(),
            ));
        }
        if self.predictor_steps == 0 {
            return Err(Error::InvalidConfig("delay.predictor_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, sampling_time: f64) -> Delays {
        match self.lambda {
            Some(l) => {
                let half = 0.5 * l as f64 * sampling_time;
                Delays {
                    tau1: half,
                    tau2: half,
                    tauc: 0.0,
                }
            }
            None => Delays {
                tau1: self.tau1,
                tau2: self.tau2,
                tauc: self.tauc,
            },
        }
    }
}

/// Time-stamped inputs with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputBuffer {
    entries: VecDeque<(f64, RotorInput)>,
}

impl InputBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, u: RotorInput) -> Result<()> {
        if let Some((last, _)) = self.entries.back() {
            if !(t > *last) {
                return Err(Error::Domain(format!(
                    "input timestamp {t} does not follow {last}"
                )));
            }
        }
        self.entries.push_back((t, u));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn last(&self) -> Option<RotorInput> {
        self.entries.back().map(|(_, u)| *u)
    }

    /// Input held at time `t`: the latest entry stamped at or before `t`.
    pub fn input_at(&self, t: f64) -> Option<RotorInput> {
        let idx = self.entries.partition_point(|(s, _)| *s <= t + TIME_EPS);
        idx.checked_sub(1).map(|i| self.entries[i].1)
    }

    /// Drops entries that can no longer be the held value at or after `t`.
    pub fn prune_before(&mut self, t: f64) {
        while self.entries.len() >= 2 && self.entries[1].0 <= t + TIME_EPS {
            self.entries.pop_front();
        }
    }
}

/// Sample-and-hold lookup of the input sent `tau2` before `t`.
pub fn delayed_actuation(buffer: &InputBuffer, t: f64, tau2: f64) -> Option<RotorInput> {
    buffer.input_at(t - tau2)
}

/// Time-stamped state samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    samples: Vec<(f64, State)>,
}

impl StateHistory {
    pub fn new(t0: f64, initial: State) -> Self {
        Self {
            samples: vec![(t0, initial)],
        }
    }

    pub fn push(&mut self, t: f64, x: State) {
        self.samples.push((t, x));
    }

    pub fn latest(&self) -> &State {
        &self.samples.last().expect("history is never empty").1
    }
}

/// State held at `t − tau1`; before the first sample, the first sample.
pub fn delayed_measurement(history: &StateHistory, t: f64, tau1: f64) -> State {
    let target = t - tau1;
    let idx = history.samples.partition_point(|(s, _)| *s <= target + TIME_EPS);
    history.samples[idx.saturating_sub(1)].1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub state: State,
    /// No buffered input was available and hover was assumed.
    pub used_fallback: bool,
}

/// Integrates the model from `x_meas` (measured at `t_meas`) over `tau_r`.
///
/// The plant input at time `s` is the one sent at `s − tau2`. Each RK4 step
/// holds the input found at its midpoint. The attitude is renormalized at
/// the end.
#[allow(clippy::too_many_arguments)]
pub fn predict(
    x_meas: &State,
    t_meas: f64,
    buffer: &InputBuffer,
    tau2: f64,
    tau_r: f64,
    steps: usize,
    inputs: InputAssumption,
    params: &QuadrotorParams,
) -> Result<Prediction> {
    if !(tau_r.is_finite() && tau_r >= 0.0) {
        return Err(Error::Domain(format!("round-trip time must be non-negative, got {tau_r}")));
    }
    if tau_r == 0.0 {
        return Ok(Prediction {
            state: *x_meas,
            used_fallback: false,
        });
    }
    let steps = steps.max(1);
    let h = tau_r / steps as f64;
    let used_fallback = buffer.is_empty();
    let hover = RotorInput::hover(params);
    let last = buffer.last().unwrap_or(hover);
    let mut x = *x_meas;
    for j in 0..steps {
        let u = match inputs {
            InputAssumption::HoldLast => last,
            InputAssumption::Replay => {
                let mid = t_meas + (j as f64 + 0.5) * h;
                buffer.input_at(mid - tau2).unwrap_or(last)
            }
        };
        x = integrate_erk4(&x, &u, params, h);
    }
    Ok(Prediction {
        state: x.normalized()?,
        used_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn params() -> QuadrotorParams {
        QuadrotorParams::default()
    }

    #[test]
    fn lambda_splits_round_trip() {
        let d = DelayConfig::from_lambda(4, true).resolve(0.015);
        assert!((d.round_trip() - 0.06).abs() < 1e-15);
        assert_eq!(d.tau1, d.tau2);
    }

    #[test]
    fn lambda_and_explicit_delays_are_exclusive() {
        let cfg = DelayConfig {
            tau1: 0.01,
            lambda: Some(2),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(DelayConfig { tau2: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_round_trip_returns_measurement() {
        let x = State::hover_at(Vector3::new(1.0, 2.0, 3.0));
        let p = predict(&x, 0.0, &InputBuffer::new(), 0.0, 0.0, 1, InputAssumption::Replay, &params()).unwrap();
        assert_eq!(p.state, x);
    }

    #[test]
    fn hover_stays_hover() {
        let p = params();
        let x = State::hover_at(Vector3::new(0.0, 0.0, 1.0));
        let mut buf = InputBuffer::new();
        for k in 0..10 {
            buf.push(k as f64 * 0.015, RotorInput::hover(&p)).unwrap();
        }
        for tau_r in [0.015, 0.03, 0.06, 0.5] {
            for steps in [1, 4] {
                let out = predict(&x, 0.1, &buf, 0.0, tau_r, steps, InputAssumption::Replay, &p).unwrap();
                assert!((out.state.0 - x.0).amax() <= 1e-12);
                assert!(!out.used_fallback);
            }
        }
    }

    #[test]
    fn empty_buffer_falls_back_to_hover() {
        let p = params();
        let x = State::hover_at(Vector3::zeros());
        let out = predict(&x, 0.0, &InputBuffer::new(), 0.0, 0.06, 1, InputAssumption::Replay, &p).unwrap();
        assert!(out.used_fallback);
        assert!((out.state.0 - x.0).amax() <= 1e-12);
    }

    #[test]
    fn prediction_is_deterministic() {
        let p = params();
        let mut x = State::hover_at(Vector3::zeros());
        x.set_angular_rate(Vector3::new(0.3, -0.2, 0.1));
        let mut buf = InputBuffer::new();
        buf.push(0.0, RotorInput::new(15.0, 16.0, 17.0, 14.0)).unwrap();
        buf.push(0.03, RotorInput::new(18.0, 12.0, 16.0, 15.0)).unwrap();
        let a = predict(&x, 0.0, &buf, 0.0, 0.06, 3, InputAssumption::Replay, &p).unwrap();
        let b = predict(&x, 0.0, &buf, 0.0, 0.06, 3, InputAssumption::Replay, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replay_and_hold_last_agree_for_constant_inputs() {
        let p = params();
        let mut x = State::hover_at(Vector3::zeros());
        x.set_velocity_body(Vector3::new(0.2, 0.0, -0.1));
        let mut buf = InputBuffer::new();
        for k in 0..5 {
            buf.push(k as f64 * 0.015, RotorInput::uniform(16.0)).unwrap();
        }
        let a = predict(&x, 0.0, &buf, 0.0, 0.06, 4, InputAssumption::Replay, &p).unwrap();
        let b = predict(&x, 0.0, &buf, 0.0, 0.06, 4, InputAssumption::HoldLast, &p).unwrap();
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn buffer_rejects_non_increasing_timestamps() {
        let mut buf = InputBuffer::new();
        buf.push(1.0, RotorInput::uniform(1.0)).unwrap();
        assert!(buf.push(1.0, RotorInput::uniform(2.0)).is_err());
        assert!(buf.push(0.5, RotorInput::uniform(2.0)).is_err());
    }

    #[test]
    fn buffer_lookup_and_pruning() {
        let mut buf = InputBuffer::new();
        for k in 0..5 {
            buf.push(k as f64, RotorInput::uniform(k as f64)).unwrap();
        }
        assert_eq!(buf.input_at(-0.5), None);
        assert_eq!(buf.input_at(2.5), Some(RotorInput::uniform(2.0)));
        assert_eq!(delayed_actuation(&buf, 3.2, 1.0), Some(RotorInput::uniform(2.0)));
        buf.prune_before(2.5);
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.input_at(2.5), Some(RotorInput::uniform(2.0)));
    }

    #[test]
    fn measurement_lookup_on_a_ramp() {
        let ramp = |t: f64| State::hover_at(Vector3::new(t, 0.0, 0.0));
        let mut hist = StateHistory::new(0.0, ramp(0.0));
        for k in 1..=100 {
            let t = k as f64 * 0.001;
            hist.push(t, ramp(t));
        }
        for k in 30..=100 {
            let t = k as f64 * 0.001;
            let x = delayed_measurement(&hist, t, 0.03);
            assert!((x.position().x - (t - 0.03)).abs() < 1e-12);
        }
        assert_eq!(delayed_measurement(&hist, 0.01, 0.03), ramp(0.0));
        assert_eq!(delayed_measurement(&hist, 0.05, 0.0), ramp(0.05));
    }
}
