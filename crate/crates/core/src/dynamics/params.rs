use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of a Crazyflie-class quadrotor.
///
/// Units follow the rotor-speed convention of the model: rotor speeds in
/// krpm, so `thrust_coeff` is N/krpm² and `drag_coeff` is N·m/krpm².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// m/s²
    pub gravity: f64,
    /// Half the distance between motors, m.
    pub arm_length: f64,
    pub jxx: f64,
    pub jyy: f64,
    pub jzz: f64,
    pub thrust_coeff: f64,
    pub drag_coeff: f64,
}

impl Default for QuadrotorParams {
    /// Crazyflie 2.1 values with a 33 g mass.
    fn default() -> Self {
        Self {
            mass: 0.033,
            ..Self::heavy()
        }
    }
}

impl QuadrotorParams {
    /// Same constants with a 0.33 kg mass. The vehicle cannot hover below
    /// 22 krpm with it; kept as an override only.
    pub fn heavy() -> Self {
        Self {
            mass: 0.33,
            gravity: 9.8066,
            arm_length: 0.0325,
            jxx: 1.395e-5,
            jyy: 1.395e-5,
            jzz: 2.173e-5,
            thrust_coeff: 3.25e-4,
            drag_coeff: 7.9379e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("arm_length", self.arm_length),
            ("jxx", self.jxx),
            ("jyy", self.jyy),
            ("jzz", self.jzz),
            ("thrust_coeff", self.thrust_coeff),
            ("drag_coeff", self.drag_coeff),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "model.{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Rotor speed at which four rotors balance the weight, krpm.
    pub fn hover_speed(&self) -> f64 {
        (self.mass * self.gravity / (4.0 * self.thrust_coeff)).sqrt()
    }

    /// Gravity as seen by the equations of motion: the specific thrust of
    /// four rotors at [`hover_speed`](Self::hover_speed). It equals `gravity`
    /// up to rounding and makes hover an exact equilibrium.
    pub fn model_gravity(&self) -> f64 {
        let (thrust, _) = super::forces_moments(&super::RotorInput::uniform(self.hover_speed()), self);
        thrust / self.mass
    }
}
