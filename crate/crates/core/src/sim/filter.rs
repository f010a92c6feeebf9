//! Second-order Butterworth low-pass filter (bilinear transform).

use nalgebra::{Complex, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Butterworth2 {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
    primed: bool,
}

impl Butterworth2 {
    pub fn new(cutoff_hz: f64, sample_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && sample_hz > 0.0 && cutoff_hz < 0.5 * sample_hz) {
            return Err(Error::InvalidConfig(format!(
                "filter cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                0.5 * sample_hz
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / sample_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - std::f64::consts::SQRT_2 * k + k2) * norm],
            x: [0.0; 2],
            y: [0.0; 2],
            primed: false,
        })
    }

    /// Starts the filter in steady state at `value`.
    pub fn reset(&mut self, value: f64) {
        self.x = [value; 2];
        self.y = [value; 2];
        self.primed = true;
    }

    pub fn process(&mut self, input: f64) -> f64 {
        if !self.primed {
            self.reset(0.0);
        }
        let out = self.b[0] * input + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [input, self.x[0]];
        self.y = [out, self.y[0]];
        out
    }

    /// Magnitude of the frequency response at `f` Hz.
    pub fn gain(&self, f: f64, sample_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / sample_hz;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = z1 * self.b[1] + z2 * self.b[2] + self.b[0];
        let den = z1 * self.a[0] + z2 * self.a[1] + 1.0;
        (num / den).norm()
    }
}

/// Butterworth filter over three channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Butterworth2x3(pub [Butterworth2; 3]);

impl Butterworth2x3 {
    pub fn new(cutoff_hz: f64, sample_hz: f64) -> Result<Self> {
        let f = Butterworth2::new(cutoff_hz, sample_hz)?;
        Ok(Self([f; 3]))
    }

    pub fn process(&mut self, v: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.0[0].process(v.x), self.0[1].process(v.y), self.0[2].process(v.z))
    }

    pub fn reset(&mut self, v: Vector3<f64>) {
        for (f, x) in self.0.iter_mut().zip(v.iter()) {
            f.reset(*x);
        }
    }
}
