//! Conversion of the controller output to attitude, yaw-rate and thrust
//! commands in the units of a typical flight-controller setpoint interface.

use crate::dynamics::{quat_to_euler, RotorInput, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_rate_deg: f64,
    /// Base PWM value shared by all motors.
    pub thrust_pwm: u16,
}

/// `round((1000 Ω − 4070.3) / 0.2685)` clamped to `u16`, with `Ω` in krpm.
pub fn rotor_speed_to_pwm(omega_krpm: f64) -> u16 {
    let raw = ((1000.0 * omega_krpm - 4070.3) / 0.2685).round();
    raw.clamp(0.0, u16::MAX as f64) as u16
}

/// Setpoint from the first planned input and the next planned state.
pub fn reconstruct_commands(u: &RotorInput, predicted: &State) -> Setpoint {
    let (roll, pitch, _) = quat_to_euler(&predicted.attitude());
    Setpoint {
        roll_deg: roll.to_degrees(),
        pitch_deg: pitch.to_degrees(),
        yaw_rate_deg: predicted.angular_rate().z.to_degrees(),
        thrust_pwm: rotor_speed_to_pwm(u.mean()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Quaternion;
    use nalgebra::Vector3;

    #[test]
    fn pwm_mapping() {
        assert_eq!(rotor_speed_to_pwm(16.0), 44431);
        assert_eq!(rotor_speed_to_pwm(4.0703), 0);
        assert_eq!(rotor_speed_to_pwm(22.0), 65535);
        assert_eq!(rotor_speed_to_pwm(0.0), 0);
    }

    #[test]
    fn setpoint_angles_are_in_degrees() {
        let mut x = State::hover_at(Vector3::zeros());
        x.set_attitude(Quaternion::from_euler(0.1, -0.2, 0.3));
        x.set_angular_rate(Vector3::new(0.0, 0.0, 1.0));
        let sp = reconstruct_commands(&RotorInput::uniform(16.0), &x);
        assert!((sp.roll_deg - 0.1f64.to_degrees()).abs() < 1e-9);
        assert!((sp.pitch_deg + 0.2f64.to_degrees()).abs() < 1e-9);
        assert!((sp.yaw_rate_deg - 1f64.to_degrees()).abs() < 1e-12);
        assert_eq!(sp.thrust_pwm, 44431);
    }
}
