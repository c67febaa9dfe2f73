use std::fmt;

use serde::{Deserialize, Serialize};

/// Operating mode of the automated driving system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdsMode {
    Automated,
    WarningIssued,
    TorIssued,
    DriverControl,
    ReducedFunctionalityMrm,
    Stopped,
}

impl AdsMode {
    pub const ALL: [AdsMode; 6] = [
        AdsMode::Automated,
        AdsMode::WarningIssued,
        AdsMode::TorIssued,
        AdsMode::DriverControl,
        AdsMode::ReducedFunctionalityMrm,
        AdsMode::Stopped,
    ];

    /// Whether `self -> next` is a single legal transition.
    pub fn can_transition_to(self, next: AdsMode) -> bool {
        use AdsMode::*;
        matches!(
            (self, next),
            (Automated, WarningIssued)
                | (WarningIssued, TorIssued)
                | (TorIssued, DriverControl)
                | (TorIssued, ReducedFunctionalityMrm)
                | (ReducedFunctionalityMrm, DriverControl)
                | (ReducedFunctionalityMrm, Stopped)
        )
    }

    /// The ADS lateral/longitudinal controller drives the vehicle.
    pub fn ads_in_control(self) -> bool {
        matches!(
            self,
            AdsMode::Automated
                | AdsMode::WarningIssued
                | AdsMode::TorIssued
                | AdsMode::ReducedFunctionalityMrm
        )
    }

    /// Modes in which a driver take-over is accepted.
    pub fn accepts_takeover(self) -> bool {
        matches!(self, AdsMode::TorIssued | AdsMode::ReducedFunctionalityMrm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdsMode::Automated => "AUTOMATED",
            AdsMode::WarningIssued => "WARNING_ISSUED",
            AdsMode::TorIssued => "TOR_ISSUED",
            AdsMode::DriverControl => "DRIVER_CONTROL",
            AdsMode::ReducedFunctionalityMrm => "REDUCED_FUNCTIONALITY_MRM",
            AdsMode::Stopped => "STOPPED",
        }
    }

    pub fn parse(s: &str) -> Option<AdsMode> {
        AdsMode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for AdsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
