use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn opposite(self) -> Sex {
        match self {
            Sex::Female => Sex::Male,
            Sex::Male => Sex::Female,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            other => Err(format!("unknown sex '{other}'")),
        }
    }
}

/// Numeric individual identifier, unique within a pedigree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(pub u32);

impl fmt::Display for IndividualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for IndividualId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(IndividualId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    Yes,
    No,
    #[default]
    Unknown,
}

impl TriState {
    pub fn as_str(self) -> &'static str {
        match self {
            TriState::Yes => "yes",
            TriState::No => "no",
            TriState::Unknown => "",
        }
    }

    pub fn parse(s: &str) -> Option<TriState> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "1" | "true" => Some(TriState::Yes),
            "no" | "0" | "false" => Some(TriState::No),
            "" | "unknown" | "na" => Some(TriState::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeryKind {
    BilateralMastectomy,
    Hysterectomy,
    BilateralOophorectomy,
}

impl SurgeryKind {
    pub const ALL: [SurgeryKind; 3] = [
        SurgeryKind::BilateralMastectomy,
        SurgeryKind::Hysterectomy,
        SurgeryKind::BilateralOophorectomy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SurgeryKind::BilateralMastectomy => "bilateral_mastectomy",
            SurgeryKind::Hysterectomy => "hysterectomy",
            SurgeryKind::BilateralOophorectomy => "bilateral_oophorectomy",
        }
    }

    /// Hysterectomy and oophorectomy are female-only procedures.
    pub fn allowed_for(self, sex: Sex) -> bool {
        match self {
            SurgeryKind::BilateralMastectomy => true,
            _ => sex == Sex::Female,
        }
    }
}

impl FromStr for SurgeryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SurgeryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("unknown surgery kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerStatus {
    Positive,
    Negative,
    #[default]
    Untested,
}

impl MarkerStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MarkerStatus::Positive => "positive",
            MarkerStatus::Negative => "negative",
            MarkerStatus::Untested => "untested",
        }
    }
}

impl FromStr for MarkerStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "1" => Ok(MarkerStatus::Positive),
            "negative" | "neg" | "0" => Ok(MarkerStatus::Negative),
            "untested" | "" => Ok(MarkerStatus::Untested),
            other => Err(format!("unknown marker status '{other}'")),
        }
    }
}
