use std::fmt;

use serde::{Deserialize, Serialize};

/// Lifecycle of one strand across an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrandPhase {
    Diverged,
    EpochConverging,
    Reshuffling,
    DominantFullKeyspace,
    GenesisPending,
}

impl StrandPhase {
    pub fn can_become(self, next: StrandPhase) -> bool {
        use StrandPhase::*;
        matches!(
            (self, next),
            (Diverged, EpochConverging)
                | (EpochConverging, Reshuffling)
                | (EpochConverging, DominantFullKeyspace)
                | (Reshuffling, GenesisPending)
                | (DominantFullKeyspace, GenesisPending)
                | (GenesisPending, Diverged)
        )
    }
}

impl fmt::Display for StrandPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StrandPhase::Diverged => "diverged",
            StrandPhase::EpochConverging => "epoch_converging",
            StrandPhase::Reshuffling => "reshuffling",
            StrandPhase::DominantFullKeyspace => "dominant_full_keyspace",
            StrandPhase::GenesisPending => "genesis_pending",
        };
        f.write_str(s)
    }
}
