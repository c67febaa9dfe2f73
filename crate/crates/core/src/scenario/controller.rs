use super::config::{ScenarioTimeline, SimConfig, LANE_CHANGE_DURATION};
use super::mode::AdsMode;
use super::road::RoadSpec;
use super::vehicle::VehicleState;

/// Steering-wheel limit of the ADS actuator, degrees.
pub const ADS_SWA_LIMIT: f64 = 90.0;

/// Lane-centering and speed law of the ADS.
///
/// Returns `(swa_command, accel_command)` in degrees and m/s².
pub fn ads_controller(
    state: &VehicleState,
    target_lane_center: f64,
    mode: AdsMode,
    config: &SimConfig,
) -> (f64, f64) {
    let g = &config.gains;
    let wheel = -g.kp * (state.y - target_lane_center)
        - g.kd * state.speed * state.heading.sin()
        - g.kh * state.heading;
    let swa = (config.steering_ratio * wheel.to_degrees()).clamp(-ADS_SWA_LIMIT, ADS_SWA_LIMIT);
    let accel = if mode == AdsMode::ReducedFunctionalityMrm {
        -config.mrm_decel
    } else {
        0.0
    };
    (swa, accel)
}

/// Lateral target of the lane change at time `t`.
///
/// Quintic blend with zero velocity and acceleration at both ends, from the
/// right-lane centre to the left-lane centre.
pub fn lane_change_target(t: f64, timeline: &ScenarioTimeline, road: &RoadSpec) -> f64 {
    let tau = (t - timeline.lane_change_start) / LANE_CHANGE_DURATION;
    if tau <= 0.0 {
        return road.right_lane_center();
    }
    if tau >= 1.0 {
        return road.left_lane_center();
    }
    let blend = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
    road.right_lane_center() + (road.left_lane_center() - road.right_lane_center()) * blend
}

/// Steering-wheel angle that centres the vehicle in the left lane, i.e. what
/// the lane-centering law would command right now.
pub fn ideal_swa(state: &VehicleState, config: &SimConfig) -> f64 {
    ads_controller(
        state,
        config.road.left_lane_center(),
        AdsMode::DriverControl,
        config,
    )
    .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(y: f64, heading: f64) -> VehicleState {
        VehicleState {
            y,
            heading,
            ..VehicleState::default()
        }
    }

    #[test]
    fn centred_vehicle_needs_no_steering() {
        let cfg = SimConfig::default();
        let (swa, accel) = ads_controller(&at(3.5, 0.0), 3.5, AdsMode::Automated, &cfg);
        assert_eq!(swa, 0.0);
        assert_eq!(accel, 0.0);
    }

    #[test]
    fn offset_matches_hand_computation() {
        let cfg = SimConfig::default();
        let (swa, _) = ads_controller(&at(4.0, 0.0), 3.5, AdsMode::Automated, &cfg);
        // wheel = -0.1 * 0.5 = -0.05 rad; 15 * -0.05 * 180/pi
        let expected = 15.0 * -0.05 * 180.0 / std::f64::consts::PI;
        assert!((swa - expected).abs() < 1e-12, "{swa} vs {expected}");
        assert!((swa - -42.971_835_0).abs() < 1e-6);
    }

    #[test]
    fn heading_terms_match_hand_computation() {
        let cfg = SimConfig::default();
        let (swa, _) = ads_controller(&at(3.5, 0.02), 3.5, AdsMode::Automated, &cfg);
        let wheel = -0.05 * 27.78 * 0.02_f64.sin() - 0.02;
        assert!((swa - 15.0 * wheel * 180.0 / std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn mrm_decelerates() {
        let cfg = SimConfig::default();
        let (_, accel) = ads_controller(&at(3.5, 0.0), 3.5, AdsMode::ReducedFunctionalityMrm, &cfg);
        assert_eq!(accel, -2.0);
    }

    #[test]
    fn command_is_clamped() {
        let cfg = SimConfig::default();
        let (swa, _) = ads_controller(&at(-20.0, 0.0), 3.5, AdsMode::Automated, &cfg);
        assert_eq!(swa, ADS_SWA_LIMIT);
    }

    #[test]
    fn lane_change_profile_endpoints_and_midpoint() {
        let tl = ScenarioTimeline::default();
        let road = RoadSpec::default();
        assert_eq!(lane_change_target(0.0, &tl, &road), 0.0);
        assert_eq!(lane_change_target(3.99, &tl, &road), 0.0);
        assert_eq!(lane_change_target(8.0, &tl, &road), 3.5);
        assert_eq!(lane_change_target(25.0, &tl, &road), 3.5);
        assert!((lane_change_target(6.0, &tl, &road) - 1.75).abs() < 1e-9);
    }

    #[test]
    fn ideal_swa_delegates_to_the_controller() {
        let cfg = SimConfig::default();
        let state = at(3.0, 0.0);
        let (expected, _) = ads_controller(&state, 3.5, AdsMode::Automated, &cfg);
        assert_eq!(ideal_swa(&state, &cfg), expected);
        assert_eq!(ideal_swa(&at(3.5, 0.0), &cfg), 0.0);
    }

    proptest! {
        #[test]
        fn lane_change_is_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let tl = ScenarioTimeline::default();
            let road = RoadSpec::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lane_change_target(lo, &tl, &road) <= lane_change_target(hi, &tl, &road));
        }

        #[test]
        fn ideal_swa_steers_towards_the_left_lane(y in -1.0f64..3.49) {
            let cfg = SimConfig::default();
            prop_assert!(ideal_swa(&at(y, 0.0), &cfg) > 0.0);
        }
    }
}
