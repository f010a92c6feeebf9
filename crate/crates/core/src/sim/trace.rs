use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimTrace;
use crate::error::Result;

/// One row of the trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub ref_z: f64,
    pub prep_us: f64,
    pub fb_us: f64,
    pub degraded: u8,
}

#[derive(Debug, Serialize)]
struct DiagnosticsRecord {
    k: usize,
    prep_us: f64,
    fb_us: f64,
    qp_iters: usize,
    kkt_stat: f64,
    step_norm: f64,
    degraded: u8,
}

pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &trace.rows {
        let s = &r.state.0;
        let u = &r.command.0;
        w.serialize(TraceRecord {
            t: r.t,
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
            u1: u[0],
            u2: u[1],
            u3: u[2],
            u4: u[3],
            ref_x: r.reference.x,
            ref_y: r.reference.y,
            ref_z: r.reference.z,
            prep_us: r.diagnostics.prep_us,
            fb_us: r.diagnostics.fb_us,
            degraded: r.diagnostics.degraded as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_diagnostics_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, r) in trace.rows.iter().enumerate() {
        let d = &r.diagnostics;
        w.serialize(DiagnosticsRecord {
            k,
            prep_us: d.prep_us,
            fb_us: d.fb_us,
            qp_iters: d.qp_iters,
            kkt_stat: d.kkt_stat,
            step_norm: d.step_norm,
            degraded: d.degraded as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_closed_loop, scenario_reference, SimSetup};

    #[test]
    fn trace_round_trip() {
        let mut s = SimSetup::default();
        s.sim.duration = Some(0.3);
        s.nmpc.horizon = 10;
        let (r, x0) = scenario_reference(&s).unwrap();
        let trace = run_closed_loop(&s, &r, &x0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "t,x,y,z,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,u1,u2,u3,u4,ref_x,ref_y,ref_z,prep_us,fb_us,degraded\n"
        ));
        let rows = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), trace.rows.len());
        for (a, b) in rows.iter().zip(&trace.rows) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.z, b.state.0[2]);
            assert_eq!(a.u3, b.command.0[2]);
            assert_eq!(a.ref_y, b.reference.y);
        }

        let mut d = Vec::new();
        write_diagnostics_csv(&trace, &mut d).unwrap();
        let text = String::from_utf8(d).unwrap();
        assert!(text.starts_with("k,prep_us,fb_us,qp_iters,kkt_stat,step_norm,degraded\n"));
        assert_eq!(text.lines().count(), trace.rows.len() + 1);
    }
}
