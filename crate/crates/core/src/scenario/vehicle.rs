use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// Kinematic state of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleState {
    /// Longitudinal position along the road, meters.
    pub s: f64,
    /// Lateral position, meters. Zero is the right-lane centre.
    pub y: f64,
    /// Heading relative to the road axis, radians. Positive turns left.
    pub heading: f64,
    /// Meters per second.
    pub speed: f64,
    /// Steering-wheel angle currently applied, degrees. Positive is leftward.
    pub swa: f64,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            s: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 27.78,
            swa: 0.0,
        }
    }
}

impl VehicleState {
    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        let fields = [
            ("s", self.s),
            ("y", self.y),
            ("heading", self.heading),
            ("speed", self.speed),
            ("swa", self.swa),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                errors.push(format!("initial_state.{name} must be finite"));
            }
        }
        if self.speed < 0.0 {
            errors.push(format!(
                "initial_state.speed must be >= 0 (got {})",
                self.speed
            ));
        }
        if self.heading.abs() >= FRAC_PI_2 {
            errors.push("initial_state.heading must satisfy |heading| < pi/2".to_string());
        }
    }
}

/// Vehicle geometry used by [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub steering_ratio: f64,
}

/// Advances the kinematic bicycle model by one timestep.
///
/// The road-wheel angle is `swa_command / steering_ratio`. Steering and
/// acceleration are held constant over the step and the resulting constant
/// curvature arc is integrated in closed form, so the update is exact for
/// piecewise-constant inputs at constant speed.
pub fn step(
    state: &VehicleState,
    swa_command: f64,
    accel_command: f64,
    dt: f64,
    params: VehicleParams,
) -> Result<VehicleState, ScenarioError> {
    let inputs = [
        state.s,
        state.y,
        state.heading,
        state.speed,
        swa_command,
        accel_command,
        dt,
    ];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(ScenarioError::NonFinite);
    }
    if dt <= 0.0 {
        return Err(ScenarioError::EpisodeInvalid(format!(
            "dt must be > 0 (got {dt})"
        )));
    }

    let speed_end = state.speed + accel_command * dt;
    let distance = if speed_end >= 0.0 {
        (state.speed + 0.5 * accel_command * dt) * dt
    } else {
        // Comes to rest inside the step.
        state.speed * state.speed / (2.0 * -accel_command)
    };

    let wheel_angle = (swa_command / params.steering_ratio).to_radians();
    let curvature = wheel_angle.tan() / params.wheelbase;
    let dh = curvature * distance;
    let heading = state.heading + dh;

    let (ds, dy) = if dh.abs() < 1e-12 {
        (
            distance * state.heading.cos(),
            distance * state.heading.sin(),
        )
    } else {
        (
            (heading.sin() - state.heading.sin()) / curvature,
            (state.heading.cos() - heading.cos()) / curvature,
        )
    };

    if !heading.is_finite() || heading.abs() >= FRAC_PI_2 {
        return Err(ScenarioError::EpisodeInvalid(format!(
            "heading {heading:.6} rad left the valid range |heading| < pi/2"
        )));
    }

    Ok(VehicleState {
        s: state.s + ds,
        y: state.y + dy,
        heading,
        speed: speed_end.max(0.0),
        swa: swa_command,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARAMS: VehicleParams = VehicleParams {
        wheelbase: 2.7,
        steering_ratio: 15.0,
    };

    fn cruising() -> VehicleState {
        VehicleState {
            s: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 27.78,
            swa: 0.0,
        }
    }

    #[test]
    fn straight_step_preserves_lateral_state() {
        let next = step(&cruising(), 0.0, 0.0, 0.01, PARAMS).unwrap();
        assert_eq!(next.y, 0.0);
        assert_eq!(next.heading, 0.0);
        assert!((next.s - 0.2778).abs() < 1e-12);
    }

    #[test]
    fn standing_vehicle_is_a_fixed_point() {
        let state = VehicleState {
            speed: 0.0,
            ..cruising()
        };
        for swa in [-300.0, 0.0, 45.0] {
            let next = step(&state, swa, 0.0, 0.01, PARAMS).unwrap();
            assert_eq!(next.s, state.s);
            assert_eq!(next.y, state.y);
            assert_eq!(next.heading, state.heading);
            assert_eq!(next.speed, 0.0);
        }
    }

    #[test]
    fn braking_clamps_speed_at_zero() {
        let state = VehicleState {
            speed: 0.01,
            ..cruising()
        };
        let next = step(&state, 0.0, -2.0, 0.01, PARAMS).unwrap();
        assert_eq!(next.speed, 0.0);
        assert!((next.s - 0.01 * 0.01 / 4.0).abs() < 1e-15);
    }

    /// Forward-Euler reference with a very fine step, written independently
    /// of the closed-form arc update.
    fn euler_reference(swa: f64, duration: f64, substeps: usize) -> (f64, f64) {
        let h = duration / substeps as f64;
        let v = 27.78;
        let omega = v / 2.7 * (swa / 15.0_f64).to_radians().tan();
        let (mut y, mut heading) = (0.0_f64, 0.0_f64);
        for _ in 0..substeps {
            y += v * heading.sin() * h;
            heading += omega * h;
        }
        (y, heading)
    }

    #[test]
    fn matches_refined_timestep_integration() {
        let mut coarse = cruising();
        for _ in 0..100 {
            coarse = step(&coarse, 15.0, 0.0, 0.01, PARAMS).unwrap();
        }
        let mut fine = cruising();
        for _ in 0..1000 {
            fine = step(&fine, 15.0, 0.0, 0.001, PARAMS).unwrap();
        }
        assert!((coarse.y - fine.y).abs() < 1e-3);
        assert!((coarse.heading - fine.heading).abs() < 1e-4);

        let (y_ref, h_ref) = euler_reference(15.0, 1.0, 2_000_000);
        assert!((coarse.y - y_ref).abs() < 1e-3, "{} vs {}", coarse.y, y_ref);
        assert!((coarse.heading - h_ref).abs() < 1e-4);
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let a = step(&cruising(), 7.3, -0.4, 0.01, PARAMS).unwrap();
        let b = step(&cruising(), 7.3, -0.4, 0.01, PARAMS).unwrap();
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        assert_eq!(a.heading.to_bits(), b.heading.to_bits());
        assert_eq!(a.s.to_bits(), b.s.to_bits());
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(matches!(
            step(&cruising(), f64::NAN, 0.0, 0.01, PARAMS),
            Err(ScenarioError::NonFinite)
        ));
    }

    #[test]
    fn rejects_heading_beyond_quarter_turn() {
        let state = VehicleState {
            heading: 1.57,
            ..cruising()
        };
        assert!(matches!(
            step(&state, 90.0, 0.0, 0.01, PARAMS),
            Err(ScenarioError::EpisodeInvalid(_))
        ));
    }
}
