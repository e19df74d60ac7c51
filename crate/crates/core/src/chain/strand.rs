use std::fmt;

use serde::{Deserialize, Serialize};

/// Identity of a strand by its valence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrandId {
    Positive,
    Negative,
}

impl StrandId {
    pub const ALL: [StrandId; 2] = [StrandId::Positive, StrandId::Negative];

    /// The strand that ascends at the very first epoch.
    pub const FIRST_ASCENDING: StrandId = StrandId::Negative;

    pub fn other(self) -> StrandId {
        match self {
            StrandId::Positive => StrandId::Negative,
            StrandId::Negative => StrandId::Positive,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            StrandId::Positive => 1,
            StrandId::Negative => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            StrandId::Positive => "+",
            StrandId::Negative => "-",
        }
    }

    pub fn from_symbol(s: &str) -> Option<StrandId> {
        match s {
            "+" | "positive" => Some(StrandId::Positive),
            "-" | "negative" => Some(StrandId::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for StrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
