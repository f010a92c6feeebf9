//! Reference generators and the time-indexed reference source used by the
//! closed loop.

use std::io::{Read, Write};

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadrotorParams, Quaternion, RotorInput, State, StateVector, NU, NX};
use crate::error::{Error, Result};
use crate::ocp::{OcpConfig, ReferenceTrajectory, StageReference};
use crate::rti::{solve_to_convergence, RtiSettings, SqpSolution};

/// State and input reference sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub dt: f64,
    pub states: Vec<State>,
    pub inputs: Vec<RotorInput>,
}

impl ReferenceTable {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.len().saturating_sub(1)) as f64
    }

    /// Linear interpolation between samples, holding the end points.
    pub fn point(&self, t: f64) -> StageReference {
        let n = self.len();
        let s = (t / self.dt).max(0.0);
        let i = (s + 1e-9).floor() as usize;
        if i + 1 >= n {
            return ReferenceTrajectory::stage_point(&self.states[n - 1], &self.inputs[n - 1]);
        }
        let w = (s - i as f64).clamp(0.0, 1.0);
        let a = ReferenceTrajectory::stage_point(&self.states[i], &self.inputs[i]);
        if w < 1e-9 {
            return a;
        }
        let b = ReferenceTrajectory::stage_point(&self.states[i + 1], &self.inputs[i + 1]);
        a * (1.0 - w) + b * w
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (i, (x, u)) in self.states.iter().zip(&self.inputs).enumerate() {
            w.serialize(ReferenceRow::new(i as f64 * self.dt, x, u))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads either the full `t,x,y,z,qw..,vx..,wx..,u1..` layout or only
    /// `t,x,y,z`, in which case the rest is filled with hover values.
    pub fn read_csv<R: Read>(input: R, params: &QuadrotorParams) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let full = headers.len() == 18;
        if !(full || headers.len() == 4) {
            return Err(Error::InvalidConfig(format!(
                "reference CSV needs 4 or 18 columns, found {}",
                headers.len()
            )));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidConfig(format!("reference CSV: {e}")))?;
            times.push(vals[0]);
            if full {
                states.push(State(StateVector::from_column_slice(&vals[1..1 + NX])));
                inputs.push(RotorInput(Vector4::from_column_slice(&vals[1 + NX..1 + NX + NU])));
            } else {
                states.push(State::hover_at(Vector3::new(vals[1], vals[2], vals[3])));
                inputs.push(RotorInput::hover(params));
            }
        }
        if times.len() < 2 {
            return Err(Error::InvalidConfig("reference CSV needs at least two rows".into()));
        }
        let dt = times[1] - times[0];
        let uniform = times
            .iter()
            .enumerate()
            .all(|(i, t)| (t - times[0] - i as f64 * dt).abs() <= 1e-9 * (1.0 + t.abs()));
        if !(dt > 0.0) || !uniform || times[0].abs() > 1e-12 {
            return Err(Error::InvalidConfig("reference CSV times must start at 0 and be uniform".into()));
        }
        Ok(Self { dt, states, inputs })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    u1: f64,
    u2: f64,
    u3: f64,
    u4: f64,
}

impl ReferenceRow {
    fn new(t: f64, x: &State, u: &RotorInput) -> Self {
        let s = &x.0;
        Self {
            t,
            x: s[0],
            y: s[1],
            z: s[2],
            qw: s[3],
            qx: s[4],
            qy: s[5],
            qz: s[6],
            vx: s[7],
            vy: s[8],
            vz: s[9],
            wx: s[10],
            wy: s[11],
            wz: s[12],
            u1: u.0[0],
            u2: u.0[1],
            u3: u.0[2],
            u4: u.0[3],
        }
    }
}

/// Source of references for the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Hover at a fixed position for all time.
    Hover(Vector3<f64>),
    Table(ReferenceTable),
}

impl Reference {
    pub fn point(&self, t: f64, params: &QuadrotorParams) -> StageReference {
        match self {
            Reference::Hover(p) => {
                ReferenceTrajectory::stage_point(&State::hover_at(*p), &RotorInput::hover(params))
            }
            Reference::Table(tab) => tab.point(t),
        }
    }

    pub fn position(&self, t: f64, params: &QuadrotorParams) -> Vector3<f64> {
        self.point(t, params).fixed_rows::<3>(0).into_owned()
    }

    /// Horizon references starting at `t0`, one stage every `dt`.
    pub fn horizon(&self, t0: f64, dt: f64, n: usize, params: &QuadrotorParams) -> ReferenceTrajectory {
        ReferenceTrajectory::from_fn(n, |i| self.point(t0 + i as f64 * dt, params))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HelixConfig {
    pub radius: f64,
    pub h0: f64,
    /// Height gained per sample.
    pub dh: f64,
    pub t_final: f64,
    pub samples: usize,
    /// Angular rate about the vertical axis, rad/s.
    pub omega: f64,
}

impl Default for HelixConfig {
    fn default() -> Self {
        Self {
            radius: 0.3,
            h0: 0.38,
            dh: 0.002,
            t_final: 15.0,
            samples: 1000,
            omega: 2.0 * std::f64::consts::PI * 2.0 / 15.0,
        }
    }
}

/// Helix sampled at `t_j = j · t_final / samples`, `j = 0..=samples`, with
/// analytic velocities, level attitude and hover inputs.
pub fn gen_helix(cfg: &HelixConfig, params: &QuadrotorParams) -> Result<ReferenceTable> {
    if !(cfg.radius >= 0.0 && cfg.t_final > 0.0 && cfg.samples > 0 && cfg.dh.is_finite() && cfg.omega.is_finite()) {
        return Err(Error::InvalidConfig("helix parameters must be positive".into()));
    }
    let dt = cfg.t_final / cfg.samples as f64;
    let climb = cfg.dh / dt;
    let (r, w) = (cfg.radius, cfg.omega);
    let states = (0..=cfg.samples)
        .map(|j| {
            let t = j as f64 * dt;
            State::from_parts(
                Vector3::new(r * (w * t).cos(), r * (w * t).sin(), cfg.h0 + j as f64 * cfg.dh),
                Quaternion::identity(),
                Vector3::new(-r * w * (w * t).sin(), r * w * (w * t).cos(), climb),
                Vector3::zeros(),
            )
        })
        .collect();
    Ok(ReferenceTable {
        dt,
        states,
        inputs: vec![RotorInput::hover(params); cfg.samples + 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothStepConfig {
    pub start: [f64; 3],
    pub target: [f64; 3],
    pub duration: f64,
    pub nodes: usize,
    pub max_sqp_iters: usize,
    pub kkt_tol: f64,
}

impl Default for SmoothStepConfig {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0, 0.4],
            target: [1.0, -1.0, 1.0],
            duration: 6.0,
            nodes: 400,
            max_sqp_iters: 1000,
            kkt_tol: 1e-6,
        }
    }
}

/// Dynamically feasible transfer from hover at `start` to hover at `target`,
/// obtained by solving the tracking OCP against a step to convergence.
pub fn gen_smooth_step(
    cfg: &SmoothStepConfig,
    weights: &OcpConfig,
    settings: &RtiSettings,
    params: &QuadrotorParams,
) -> Result<(ReferenceTable, SqpSolution)> {
    if cfg.nodes == 0 || !(cfg.duration > 0.0) {
        return Err(Error::InvalidConfig("smooth step needs positive duration and nodes".into()));
    }
    let ocp = OcpConfig {
        horizon: cfg.nodes,
        dt: cfg.duration / cfg.nodes as f64,
        ..weights.clone()
    };
    let target = Vector3::from(cfg.target);
    let refs = ReferenceTrajectory::hover(params, target, cfg.nodes);
    let x0 = State::hover_at(Vector3::from(cfg.start));
    let sol = solve_to_convergence(&ocp, params, settings, &refs, &x0, cfg.max_sqp_iters, cfg.kkt_tol)?;
    let mut inputs = sol.inputs.clone();
    inputs.push(*sol.inputs.last().unwrap());
    Ok((
        ReferenceTable {
            dt: ocp.dt,
            states: sol.states.clone(),
            inputs,
        },
        sol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QuadrotorParams {
        QuadrotorParams::default()
    }

    #[test]
    fn helix_end_points() {
        let tab = gen_helix(&HelixConfig::default(), &params()).unwrap();
        assert_eq!(tab.len(), 1001);
        let first = tab.states[0].position();
        assert!((first - Vector3::new(0.3, 0.0, 0.38)).amax() < 1e-15);
        assert!((tab.states[1000].position().z - 2.38).abs() < 1e-12);
        assert!((tab.dt - 0.015).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_helix_is_a_vertical_ramp() {
        let cfg = HelixConfig { radius: 0.0, ..Default::default() };
        let tab = gen_helix(&cfg, &params()).unwrap();
        for (j, s) in tab.states.iter().enumerate() {
            let p = s.position();
            assert_eq!((p.x, p.y), (0.0, 0.0));
            assert!((p.z - (0.38 + 0.002 * j as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn helix_velocity_matches_position_differences() {
        let tab = gen_helix(&HelixConfig::default(), &params()).unwrap();
        for j in 1..tab.len() - 1 {
            let fd = (tab.states[j + 1].position() - tab.states[j - 1].position()) / (2.0 * tab.dt);
            assert!((fd - tab.states[j].velocity_body()).amax() < 1e-3);
        }
    }

    #[test]
    fn table_interpolates_and_holds() {
        let tab = gen_helix(&HelixConfig::default(), &params()).unwrap();
        let mid = tab.point(0.0075);
        let expect = (tab.point(0.0) + tab.point(0.015)) * 0.5;
        assert!((mid - expect).amax() < 1e-12);
        assert_eq!(tab.point(100.0), tab.point(15.0));
        assert_eq!(tab.point(-1.0), tab.point(0.0));
    }

    #[test]
    fn csv_round_trip() {
        let tab = gen_helix(&HelixConfig { samples: 20, t_final: 0.3, ..Default::default() }, &params()).unwrap();
        let mut buf = Vec::new();
        tab.write_csv(&mut buf).unwrap();
        let back = ReferenceTable::read_csv(buf.as_slice(), &params()).unwrap();
        assert!((back.dt - tab.dt).abs() < 1e-12);
        for (a, b) in back.states.iter().zip(&tab.states) {
            assert!((a.0 - b.0).amax() < 1e-12);
        }
        assert_eq!(back.inputs, tab.inputs);
    }

    #[test]
    fn position_only_csv_is_accepted() {
        let text = "t,x,y,z\n0,0,0,1\n0.5,1,0,1\n1.0,2,0,1\n";
        let tab = ReferenceTable::read_csv(text.as_bytes(), &params()).unwrap();
        assert_eq!(tab.len(), 3);
        assert_eq!(tab.inputs[0], RotorInput::hover(&params()));
        assert!((tab.point(0.25)[0] - 0.5).abs() < 1e-12);
        assert!(ReferenceTable::read_csv("t,x\n0,1\n".as_bytes(), &params()).is_err());
    }

    #[test]
    fn smooth_step_to_start_is_hover() {
        let cfg = SmoothStepConfig {
            target: [0.0, 0.0, 0.4],
            nodes: 40,
            duration: 0.6,
            ..Default::default()
        };
        let (tab, sol) = gen_smooth_step(&cfg, &OcpConfig::default(), &RtiSettings::default(), &params()).unwrap();
        assert_eq!(sol.iterations, 1);
        let hover = State::hover_at(Vector3::new(0.0, 0.0, 0.4));
        for s in &tab.states {
            assert!((s.0 - hover.0).amax() < 1e-9);
        }
    }
}
