//! The per-node protocol state machine.
//!
//! A [`NodeEngine`] reacts to two timers per cycle and to incoming messages.
//! At the cycle tick each leader proposes a cycle block for its strand; at
//! mid-cycle epoch, and later genesis, proposals are made when due. All
//! messages are broadcast, so every node aggregates signatures itself and
//! accepts a block as soon as the required majorities have signed.

mod membership;
mod message;
mod node;
mod phase;
mod sigbook;

pub use membership::{plan_membership, MembershipPlan};
pub use message::{BlockKind, BlockRef, Outgoing, ProtocolMessage, Recipient, Transaction};
pub use node::{Behavior, EngineCtx, EngineEvent, NodeEngine, NodeSetup, NodeStatus};
pub use phase::StrandPhase;
