use serde::{Deserialize, Serialize};

/// Number of lanes on the modelled one-way highway.
pub const LANE_COUNT: u32 = 2;

/// Straight two-lane one-way road with a stretch of missing lane markings.
///
/// The lateral axis points towards the left (west) road edge. The right lane
/// is centred on `y = 0` and the left lane on `y = lane_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadSpec {
    pub lane_width: f64,
    /// Longitudinal position where the lane markings disappear.
    pub marking_gap_start: f64,
    /// Longitudinal position where the lane markings resume.
    pub marking_gap_end: f64,
}

impl Default for RoadSpec {
    fn default() -> Self {
        // Placeholder positions; `SimConfig::prepared` re-places the gap so
        // the vehicle reaches it at the warning time.
        let start = 27.78 * 6.04;
        Self {
            lane_width: 3.5,
            marking_gap_start: start,
            marking_gap_end: start + 300.0,
        }
    }
}

impl RoadSpec {
    pub fn right_lane_center(&self) -> f64 {
        0.0
    }

    pub fn left_lane_center(&self) -> f64 {
        self.lane_width
    }

    /// Lateral position of the left (west) road edge.
    pub fn west_edge_y(&self) -> f64 {
        self.lane_width + self.lane_width / 2.0
    }

    /// Lateral position of the right (east) road edge.
    pub fn east_edge_y(&self) -> f64 {
        -self.lane_width / 2.0
    }

    /// Boundary between the two lanes.
    pub fn lane_divider_y(&self) -> f64 {
        self.lane_width / 2.0
    }

    pub fn in_marking_gap(&self, s: f64) -> bool {
        s >= self.marking_gap_start && s < self.marking_gap_end
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        if !(self.lane_width.is_finite() && self.lane_width > 0.0) {
            errors.push(format!(
                "road.lane_width must be > 0 (got {})",
                self.lane_width
            ));
        }
        if !(self.marking_gap_start.is_finite() && self.marking_gap_end.is_finite()) {
            errors.push("road.marking_gap_start/end must be finite".to_string());
        } else if self.marking_gap_start >= self.marking_gap_end {
            errors.push(format!(
                "road.marking_gap_start ({}) must be < road.marking_gap_end ({})",
                self.marking_gap_start, self.marking_gap_end
            ));
        }
    }
}

/// Result of the left-lane departure check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Hazard {
    None,
    /// Departure over the west (left) road edge.
    HazardWest,
    /// Departure back over the lane divider towards the east.
    HazardEast,
}

/// Checks whether a vehicle of the given width centred at `y` has left the
/// left lane.
pub fn detect_hazard(y: f64, road: &RoadSpec, vehicle_width: f64) -> Hazard {
    let half = vehicle_width / 2.0;
    if y + half > road.lane_width + road.lane_width / 2.0 {
        Hazard::HazardWest
    } else if y - half < road.lane_width / 2.0 {
        Hazard::HazardEast
    } else {
        Hazard::None
    }
}
