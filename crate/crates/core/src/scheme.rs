use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::metrics::Directions;

/// How the UE-side beamformers are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UeVariant {
    /// Lagrangian closed form driven by the dual variables.
    Optimal,
    /// Fixed-weight receiver built from the second DL pilot phase only.
    Heuristic,
}

/// Beamforming designs compared by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    JointOpt,
    JointHeur,
    SeparateOpt,
    SeparateHeur,
    DlOpt,
    UlOpt,
    UlHeur,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::JointOpt,
        Scheme::JointHeur,
        Scheme::SeparateOpt,
        Scheme::SeparateHeur,
        Scheme::DlOpt,
        Scheme::UlOpt,
        Scheme::UlHeur,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::JointOpt => "dl-ul-opt",
            Scheme::JointHeur => "dl-ul-heur",
            Scheme::SeparateOpt => "separate-opt",
            Scheme::SeparateHeur => "separate-heur",
            Scheme::DlOpt => "dl-opt",
            Scheme::UlOpt => "ul-opt",
            Scheme::UlHeur => "ul-heur",
        }
    }

    /// `(DL design, UL design)` for the two-phase schemes.
    pub fn components(self) -> Option<(Scheme, Scheme)> {
        match self {
            Scheme::SeparateOpt => Some((Scheme::DlOpt, Scheme::UlOpt)),
            Scheme::SeparateHeur => Some((Scheme::DlOpt, Scheme::UlHeur)),
            _ => None,
        }
    }

    pub fn is_separate(self) -> bool {
        self.components().is_some()
    }

    /// Direction set of a single-phase scheme. Separate schemes report
    /// `Both`; their phases carry their own.
    pub fn directions(self) -> Directions {
        match self {
            Scheme::DlOpt => Directions::DlOnly,
            Scheme::UlOpt | Scheme::UlHeur => Directions::UlOnly,
            _ => Directions::Both,
        }
    }

    pub fn ue_variant(self) -> UeVariant {
        match self {
            Scheme::JointHeur | Scheme::UlHeur | Scheme::SeparateHeur => UeVariant::Heuristic,
            _ => UeVariant::Optimal,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.label() == s.trim())
            .ok_or_else(|| {
                let known: Vec<_> = Scheme::ALL.iter().map(|s| s.label()).collect();
                Error::Config(format!("unknown scheme '{s}' (known: {})", known.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
        }
        assert!("dl-ul".parse::<Scheme>().is_err());
    }
}
