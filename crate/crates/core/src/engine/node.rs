use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::membership::plan_membership;
use super::message::{BlockKind, BlockRef, Outgoing, ProtocolMessage, Recipient, Transaction};
use super::phase::StrandPhase;
use super::sigbook::SigBook;
use crate::chain::{
    expected_configuration, validate_cycle_block_at, validate_epoch_block, validate_epoch_genesis, BlockHash,
    CycleBlock, CycleHeader, EpochBlock, EpochGenesisBlock, EpochHeader, GenesisHeader, OriginBlock, ProtocolParams,
    StrandId, StrandTip,
};
use crate::crypto::{
    combine_vrf_seed, sign_with_share, DealingCommitment, DkgRitual, GroupElement, GroupParams, OracleRegistry,
    RitualId, RitualScope, SecretShare, VrfSeed,
};
use crate::digest::{sha256, Digest32};
use crate::topology::{
    majority_threshold, resolve_leadership_conflict, shuffle_members, GroupKeyRef, KeyPredicate, KeyRangePartition,
    NetworkConfiguration, NodeId,
};

/// How a node departs from the protocol. Crashes are applied by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Honest,
    /// Receives everything, never signs, proposes or deals.
    Silent,
    /// As leader, sends conflicting proposals to the two halves of the membership.
    Equivocate,
    /// Honest, but counted as part of a coalition by the metrics.
    Colluder(u32),
}

impl Behavior {
    fn speaks(self) -> bool {
        !matches!(self, Behavior::Silent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Member,
    /// Follows the chain without holding keys; may ask to join.
    Observer,
    Departed,
}

/// Something the simulator should record.
#[derive(Clone, Debug)]
pub enum EngineEvent {
    CycleAccepted(Arc<CycleBlock>),
    EpochAccepted(Arc<EpochBlock>),
    GenesisAccepted(Arc<EpochGenesisBlock>),
    PhaseChanged { strand: StrandId, from: StrandPhase, to: StrandPhase },
    DkgCompleted { ritual: RitualId, qualified: Vec<NodeId>, threshold: usize, public_key: GroupElement },
    DkgFailed { ritual: RitualId, surviving: usize, threshold: usize },
    Violation(String),
}

pub struct EngineCtx<'a> {
    pub registry: &'a mut OracleRegistry,
}

/// Initial state handed to every node.
#[derive(Clone, Debug)]
pub struct NodeSetup {
    pub id: NodeId,
    pub group: GroupParams,
    pub origin: Arc<OriginBlock>,
    pub configurations: BTreeMap<StrandId, NetworkConfiguration>,
    /// Shares this node holds, by ritual.
    pub keys: BTreeMap<RitualId, SecretShare>,
    pub behavior: Behavior,
    pub rng_seed: [u8; 32],
}

#[derive(Clone, Debug)]
enum Proposal {
    Cycle(CycleHeader),
    Epoch(EpochHeader),
    Genesis(GenesisHeader),
}

impl Proposal {
    fn cycle(&self) -> u64 {
        match self {
            Proposal::Cycle(h) => h.cycle,
            Proposal::Epoch(h) => h.cycle,
            Proposal::Genesis(h) => h.cycle,
        }
    }
}

#[derive(Clone, Debug)]
struct RitualOutcome {
    ritual: RitualId,
    public_key: GroupElement,
    threshold: usize,
    share: Option<SecretShare>,
}

struct RitualRun {
    ritual: DkgRitual,
    commitments: BTreeMap<NodeId, DealingCommitment>,
    received: BTreeMap<NodeId, SecretShare>,
    complaints: BTreeSet<NodeId>,
    outcome: Option<RitualOutcome>,
}

impl RitualRun {
    fn new(ritual: DkgRitual) -> Self {
        RitualRun {
            ritual,
            commitments: BTreeMap::new(),
            received: BTreeMap::new(),
            complaints: BTreeSet::new(),
            outcome: None,
        }
    }
}

struct Reshuffle {
    epoch: Arc<EpochBlock>,
    epoch_hash: BlockHash,
    rituals: BTreeMap<StrandId, RitualRun>,
    deadline: u64,
    /// Cycle at which every ritual had finished.
    ready: Option<u64>,
}

enum Progress {
    Idle,
    Converging,
    Reshuffling(Box<Reshuffle>),
}

type SignKey = (BlockKind, Option<StrandId>, u64, u64, RitualId);

pub struct NodeEngine {
    id: NodeId,
    group: GroupParams,
    behavior: Behavior,
    status: NodeStatus,
    rng_seed: [u8; 32],
    origin: Arc<OriginBlock>,
    params: ProtocolParams,
    cycle: u64,

    tips: BTreeMap<StrandId, StrandTip>,
    chains: BTreeMap<StrandId, Vec<Arc<CycleBlock>>>,
    epochs: Vec<Arc<EpochBlock>>,
    /// Hash of the last epoch block, or of the origin.
    anchor: BlockHash,
    geneses: Vec<Arc<EpochGenesisBlock>>,
    partition: KeyRangePartition,
    phases: BTreeMap<StrandId, StrandPhase>,
    members: BTreeSet<NodeId>,
    keys: BTreeMap<RitualId, SecretShare>,
    since_genesis: BTreeMap<StrandId, u64>,
    /// Cycle of each strand's tip block; leadership moves on while it ages.
    tip_cycles: BTreeMap<StrandId, u64>,
    last_epoch_cycle: u64,
    progress: Progress,

    mempool: BTreeMap<Digest32, Transaction>,
    finalized: BTreeSet<Digest32>,
    pending_joins: BTreeSet<NodeId>,
    pending_leaves: BTreeSet<NodeId>,

    leaders: BTreeMap<StrandId, NodeId>,
    proposals: BTreeMap<BlockHash, Proposal>,
    done: BTreeSet<BlockHash>,
    signed: BTreeSet<SignKey>,
    book: SigBook,
    buffered: Vec<(NodeId, ProtocolMessage)>,
    rejections: BTreeMap<&'static str, u64>,

    outbox: Vec<Outgoing>,
    events: Vec<EngineEvent>,
}

impl NodeEngine {
    pub fn new(setup: NodeSetup) -> Self {
        let params = setup.origin.params.clone();
        let members: BTreeSet<NodeId> = setup.origin.members.iter().copied().collect();
        let status = if members.contains(&setup.id) { NodeStatus::Member } else { NodeStatus::Observer };
        let origin_hash = setup.origin.hash();
        let tips = setup
            .configurations
            .iter()
            .map(|(s, c)| (*s, StrandTip { hash: origin_hash, height: 0, signing: c.clone(), handover: None }))
            .collect();
        let strands: Vec<StrandId> = setup.configurations.keys().copied().collect();
        NodeEngine {
            id: setup.id,
            group: setup.group,
            behavior: setup.behavior,
            status,
            rng_seed: setup.rng_seed,
            origin: setup.origin,
            partition: params.diverged_partition.clone(),
            params,
            cycle: 0,
            tips,
            chains: strands.iter().map(|s| (*s, Vec::new())).collect(),
            epochs: Vec::new(),
            anchor: origin_hash,
            geneses: Vec::new(),
            phases: strands.iter().map(|s| (*s, StrandPhase::Diverged)).collect(),
            members,
            keys: setup.keys,
            since_genesis: strands.iter().map(|s| (*s, 0)).collect(),
            tip_cycles: strands.iter().map(|s| (*s, 0)).collect(),
            last_epoch_cycle: 0,
            progress: Progress::Idle,
            mempool: BTreeMap::new(),
            finalized: BTreeSet::new(),
            pending_joins: BTreeSet::new(),
            pending_leaves: BTreeSet::new(),
            leaders: BTreeMap::new(),
            proposals: BTreeMap::new(),
            done: BTreeSet::new(),
            signed: BTreeSet::new(),
            book: SigBook::default(),
            buffered: Vec::new(),
            rejections: BTreeMap::new(),
            outbox: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn set_behavior(&mut self, behavior: Behavior) {
        self.behavior = behavior;
    }

    pub fn status(&self) -> NodeStatus {
        self.status
    }

    pub fn tips(&self) -> &BTreeMap<StrandId, StrandTip> {
        &self.tips
    }

    pub fn chain(&self, strand: StrandId) -> &[Arc<CycleBlock>] {
        self.chains.get(&strand).map_or(&[], |c| c.as_slice())
    }

    pub fn epochs(&self) -> &[Arc<EpochBlock>] {
        &self.epochs
    }

    pub fn geneses(&self) -> &[Arc<EpochGenesisBlock>] {
        &self.geneses
    }

    pub fn origin(&self) -> &OriginBlock {
        &self.origin
    }

    pub fn partition(&self) -> &KeyRangePartition {
        &self.partition
    }

    pub fn phases(&self) -> &BTreeMap<StrandId, StrandPhase> {
        &self.phases
    }

    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn leaders(&self) -> &BTreeMap<StrandId, NodeId> {
        &self.leaders
    }

    pub fn pending_transactions(&self) -> usize {
        self.mempool.len()
    }

    pub fn rejections(&self) -> &BTreeMap<&'static str, u64> {
        &self.rejections
    }

    pub fn drain_outbox(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    pub fn drain_events(&mut self) -> Vec<EngineEvent> {
        std::mem::take(&mut self.events)
    }

    /// Adds client transactions to the mempool.
    pub fn submit(&mut self, txs: &[Transaction]) {
        for tx in txs {
            if !self.finalized.contains(&tx.digest) {
                self.mempool.entry(tx.digest).or_insert(*tx);
            }
        }
    }

    pub fn request_join(&mut self) {
        if self.status == NodeStatus::Observer && self.behavior.speaks() {
            self.broadcast(ProtocolMessage::JoinRequest);
        }
    }

    pub fn request_leave(&mut self) {
        if self.status == NodeStatus::Member && self.behavior.speaks() {
            self.broadcast(ProtocolMessage::LeaveNotice);
        }
    }

    // ---- timers ----

    pub fn on_cycle_tick(&mut self, cycle: u64, ctx: &mut EngineCtx) {
        if self.status == NodeStatus::Departed {
            return;
        }
        self.cycle = cycle;
        self.proposals.retain(|_, p| p.cycle() >= cycle);
        self.done.retain(|h| self.proposals.contains_key(h));
        self.signed.retain(|k| k.3 >= cycle);
        self.book.prune(cycle);
        self.compute_leaders();
        if self.status == NodeStatus::Member && self.behavior.speaks() {
            let mine: Vec<StrandId> = self.leaders.iter().filter(|(_, l)| **l == self.id).map(|(s, _)| *s).collect();
            for s in mine {
                self.propose_cycle_block(s);
            }
        }
        self.replay_buffered(ctx);
    }

    pub fn on_mid_cycle(&mut self, cycle: u64, ctx: &mut EngineCtx) {
        if self.status == NodeStatus::Departed {
            return;
        }
        self.cycle = cycle;
        let speaks = self.status == NodeStatus::Member && self.behavior.speaks();
        match &self.progress {
            Progress::Idle | Progress::Converging => {
                if let Some(h) = self.expected_epoch_header(cycle) {
                    if h.proposer == self.id && speaks {
                        self.broadcast(ProtocolMessage::EpochProposal(h));
                    }
                }
            }
            Progress::Reshuffling(r) => {
                if r.ready.is_none() && cycle >= r.deadline {
                    self.close_rituals(cycle, ctx);
                }
                if let Some(g) = self.expected_genesis(cycle) {
                    if g.proposer == self.id && self.behavior.speaks() {
                        self.broadcast(ProtocolMessage::GenesisProposal(g));
                    }
                }
            }
        }
        self.replay_buffered(ctx);
    }

    // ---- messages ----

    pub fn handle_message(&mut self, from: NodeId, msg: &ProtocolMessage, ctx: &mut EngineCtx) {
        if self.status == NodeStatus::Departed {
            return;
        }
        match msg {
            ProtocolMessage::CycleProposal(h) => self.on_cycle_proposal(from, h, ctx),
            ProtocolMessage::EpochProposal(h) => self.on_epoch_proposal(from, h, ctx),
            ProtocolMessage::GenesisProposal(h) => self.on_genesis_proposal(from, h, ctx),
            ProtocolMessage::Share { block, ritual, share } => {
                if share.signer != from {
                    self.reject("share_from_other_signer");
                    return;
                }
                if self.book.add(block.hash, *ritual, *share, self.cycle) {
                    self.try_finalize(block.kind, block.hash, ctx);
                }
            }
            ProtocolMessage::Dealing(d) => self.on_dealing(from, d, msg),
            ProtocolMessage::Complaint { ritual, dealer } => {
                if let Some(run) = self.ritual_run_mut(*ritual) {
                    if run.ritual.index_of(&from).is_some() {
                        run.complaints.insert(*dealer);
                    }
                } else if self.is_future_ritual(*ritual) {
                    self.buffered.push((from, msg.clone()));
                }
            }
            ProtocolMessage::JoinRequest => {
                if !self.members.contains(&from) {
                    self.pending_joins.insert(from);
                }
            }
            ProtocolMessage::LeaveNotice => {
                if self.members.contains(&from) {
                    self.pending_leaves.insert(from);
                }
            }
        }
    }

    fn try_finalize(&mut self, kind: BlockKind, hash: BlockHash, ctx: &mut EngineCtx) {
        match kind {
            BlockKind::Cycle => self.try_finalize_cycle(hash, ctx),
            BlockKind::Epoch => self.try_finalize_epoch(hash, ctx),
            BlockKind::Genesis => self.try_finalize_genesis(hash, ctx),
        }
    }

    fn replay_buffered(&mut self, ctx: &mut EngineCtx) {
        if self.buffered.is_empty() {
            return;
        }
        let pending = std::mem::take(&mut self.buffered);
        for (from, msg) in pending {
            self.handle_message(from, &msg, ctx);
        }
    }

    // ---- cycle blocks ----

    fn compute_leaders(&mut self) {
        let mut configs: Vec<NetworkConfiguration> = self
            .partition
            .responsible_strands()
            .iter()
            .filter_map(|s| self.tips.get(s).map(|t| t.signing.clone()))
            .collect();
        for c in &mut configs {
            let since = self.tip_cycles.get(&c.strand).map_or(0, |t| self.cycle.saturating_sub(t + 1));
            let n = c.ordered_members.len().max(1);
            c.ordered_members.rotate_left((since % n as u64) as usize);
        }
        resolve_leadership_conflict(&mut configs);
        self.leaders = configs.iter().filter_map(|c| c.ordered_members.first().map(|l| (c.strand, *l))).collect();
    }

    fn propose_cycle_block(&mut self, strand: StrandId) {
        let Some(tip) = self.tips.get(&strand) else { return };
        let mut txs: Vec<&Transaction> =
            self.mempool.values().filter(|t| self.partition.claims(strand, t.key)).collect();
        txs.sort_by_key(|t| (t.submitted_at, t.digest));
        let header = CycleHeader {
            strand,
            height: tip.height + 1,
            cycle: self.cycle,
            proposer: self.id,
            parent_hash: tip.hash,
            tx_summary: txs.iter().map(|t| t.digest).collect(),
        };
        if self.behavior == Behavior::Equivocate && !header.tx_summary.is_empty() {
            let mut other = header.clone();
            other.tx_summary.pop();
            let everyone: Vec<NodeId> = self.members.iter().copied().collect();
            let (a, b) = everyone.split_at(everyone.len() / 2);
            self.outbox
                .push(Outgoing { to: Recipient::Nodes(a.to_vec()), msg: ProtocolMessage::CycleProposal(header) });
            self.outbox.push(Outgoing { to: Recipient::Nodes(b.to_vec()), msg: ProtocolMessage::CycleProposal(other) });
        } else {
            self.broadcast(ProtocolMessage::CycleProposal(header));
        }
    }

    fn check_cycle_proposal(&self, from: NodeId, h: &CycleHeader) -> Result<(), &'static str> {
        if h.proposer != from {
            return Err("proposer_is_not_sender");
        }
        if self.leaders.get(&h.strand) != Some(&h.proposer) {
            return Err("proposer_is_not_leader");
        }
        let tip = self.tips.get(&h.strand).ok_or("unknown_strand")?;
        if h.parent_hash != tip.hash {
            return Err("bad_parent");
        }
        if h.height != tip.height + 1 {
            return Err("bad_height");
        }
        let mut seen = BTreeSet::new();
        for d in &h.tx_summary {
            let tx = self.mempool.get(d).ok_or("unknown_transaction")?;
            if !self.partition.claims(h.strand, tx.key) {
                return Err("misrouted_transaction");
            }
            if !seen.insert(*d) {
                return Err("duplicate_transaction");
            }
        }
        Ok(())
    }

    fn on_cycle_proposal(&mut self, from: NodeId, h: &CycleHeader, ctx: &mut EngineCtx) {
        if h.cycle < self.cycle {
            self.reject("stale_proposal");
            return;
        }
        if h.cycle > self.cycle {
            self.buffered.push((from, ProtocolMessage::CycleProposal(h.clone())));
            return;
        }
        let hash = h.hash();
        if self.proposals.contains_key(&hash) {
            return;
        }
        if let Err(reason) = self.check_cycle_proposal(from, h) {
            self.reject(reason);
            return;
        }
        self.proposals.insert(hash, Proposal::Cycle(h.clone()));
        let tip = &self.tips[&h.strand];
        let first = tip.handover.as_ref().unwrap_or(&tip.signing);
        if first.contains(&self.id) {
            let ritual = first.group_key.ritual;
            self.sign(BlockRef { kind: BlockKind::Cycle, strand: Some(h.strand), height: h.height, hash }, ritual);
        }
        self.try_finalize_cycle(hash, ctx);
    }

    fn try_finalize_cycle(&mut self, hash: BlockHash, ctx: &mut EngineCtx) {
        if self.done.contains(&hash) {
            return;
        }
        let Some(Proposal::Cycle(h)) = self.proposals.get(&hash) else { return };
        let (strand, height) = (h.strand, h.height);
        let Some(tip) = self.tips.get(&strand) else { return };
        if tip.hash != h.parent_hash {
            return;
        }
        let mut handover_signature = None;
        if let Some(old) = &tip.handover {
            match self.book.aggregate(hash, old, &self.group, &*ctx.registry) {
                Some(sig) => handover_signature = Some(sig),
                None => return,
            }
        }
        let signature = self.book.aggregate(hash, &tip.signing, &self.group, &*ctx.registry);
        if handover_signature.is_some() && signature.is_none() && tip.signing.contains(&self.id) {
            let ritual = tip.signing.group_key.ritual;
            self.sign(BlockRef { kind: BlockKind::Cycle, strand: Some(strand), height, hash }, ritual);
            return;
        }
        let Some(signature) = signature else { return };
        let tip = &self.tips[&strand];
        let configuration =
            expected_configuration(tip, &signature, handover_signature.as_ref(), self.params.topology_shuffle);
        let Some(Proposal::Cycle(header)) = self.proposals.get(&hash) else { return };
        let block = CycleBlock { header: header.clone(), configuration, signature, handover_signature };
        if let Err(e) = validate_cycle_block_at(&block, tip, self.params.topology_shuffle, &*ctx.registry) {
            self.violation(format!("own cycle block {strand}/{height} fails validation: {e}"));
            return;
        }
        self.accept_cycle(block);
    }

    fn accept_cycle(&mut self, block: CycleBlock) {
        let strand = block.header.strand;
        for d in &block.header.tx_summary {
            self.mempool.remove(d);
            self.finalized.insert(*d);
        }
        self.done.insert(block.hash());
        self.tips.insert(strand, StrandTip::of(&block));
        self.tip_cycles.insert(strand, block.header.cycle);
        *self.since_genesis.entry(strand).or_default() += 1;
        let block = Arc::new(block);
        self.chains.entry(strand).or_default().push(block.clone());
        self.prune_keys();
        self.events.push(EngineEvent::CycleAccepted(block));
    }

    // ---- epoch blocks ----

    /// The epoch block this node would accept at `cycle`, if one is due.
    pub fn expected_epoch_header(&self, cycle: u64) -> Option<EpochHeader> {
        if !matches!(self.progress, Progress::Idle | Progress::Converging) {
            return None;
        }
        if cycle < self.last_epoch_cycle + self.params.cycles_per_epoch
            || self.partition != self.params.diverged_partition
            || self.since_genesis.values().any(|n| *n == 0)
        {
            return None;
        }
        let ascending = self.epochs.last().map_or(StrandId::FIRST_ASCENDING, |e| e.header.ascending.other());
        let proposer = *self.leaders.get(&ascending)?;
        let plan =
            plan_membership(&self.members, &self.pending_joins, &self.pending_leaves, self.params.join_threshold);
        Some(EpochHeader {
            height: self.epochs.len() as u64 + 1,
            cycle,
            proposer,
            ascending,
            descending: ascending.other(),
            responsibilities: KeyRangePartition::full(ascending),
            next_members: plan.next,
            parent_hashes: self.tips.iter().map(|(s, t)| (*s, t.hash)).collect(),
            previous: self.anchor,
        })
    }

    fn on_epoch_proposal(&mut self, from: NodeId, h: &EpochHeader, ctx: &mut EngineCtx) {
        if h.cycle < self.cycle {
            self.reject("stale_proposal");
            return;
        }
        if h.cycle > self.cycle {
            self.buffered.push((from, ProtocolMessage::EpochProposal(h.clone())));
            return;
        }
        let hash = h.hash();
        if self.proposals.contains_key(&hash) {
            return;
        }
        if from != h.proposer || self.expected_epoch_header(h.cycle).as_ref() != Some(h) {
            self.reject("unexpected_epoch_proposal");
            return;
        }
        self.proposals.insert(hash, Proposal::Epoch(h.clone()));
        self.progress = Progress::Converging;
        for s in self.tips.keys().copied().collect::<Vec<_>>() {
            self.set_phase(s, StrandPhase::EpochConverging);
        }
        let asc = &self.tips[&h.ascending].signing;
        if asc.contains(&self.id) {
            let ritual = asc.group_key.ritual;
            self.sign(BlockRef { kind: BlockKind::Epoch, strand: None, height: h.height, hash }, ritual);
        }
        self.try_finalize_epoch(hash, ctx);
    }

    fn try_finalize_epoch(&mut self, hash: BlockHash, ctx: &mut EngineCtx) {
        if self.done.contains(&hash) {
            return;
        }
        let Some(Proposal::Epoch(h)) = self.proposals.get(&hash) else { return };
        let (asc, desc, height) = (h.ascending, h.descending, h.height);
        let Some(ascending_signature) =
            self.book.aggregate(hash, &self.tips[&asc].signing, &self.group, &*ctx.registry)
        else {
            return;
        };
        let desc_cfg = &self.tips[&desc].signing;
        let Some(descending_signature) = self.book.aggregate(hash, desc_cfg, &self.group, &*ctx.registry) else {
            if desc_cfg.contains(&self.id) {
                let ritual = desc_cfg.group_key.ritual;
                self.sign(BlockRef { kind: BlockKind::Epoch, strand: None, height, hash }, ritual);
            }
            return;
        };
        let Some(Proposal::Epoch(header)) = self.proposals.get(&hash) else { return };
        let block = EpochBlock { header: header.clone(), ascending_signature, descending_signature };
        if let Err(e) = validate_epoch_block(&block, &self.tips, self.epochs.last().map(|e| &**e), &*ctx.registry) {
            self.violation(format!("own epoch block {height} fails validation: {e}"));
            return;
        }
        self.accept_epoch(block, ctx);
    }

    fn accept_epoch(&mut self, block: EpochBlock, ctx: &mut EngineCtx) {
        let h = &block.header;
        let hash = block.hash();
        self.done.insert(hash);
        self.last_epoch_cycle = h.cycle;
        self.partition = h.responsibilities.clone();
        let (asc, desc) = (h.ascending, h.descending);
        let next: BTreeSet<NodeId> = h.next_members.iter().copied().collect();
        self.pending_joins.retain(|j| !next.contains(j));
        self.pending_leaves.retain(|l| next.contains(l));
        let threshold = majority_threshold(h.next_members.len()).unwrap_or(usize::MAX);
        let mut rituals = BTreeMap::new();
        for s in self.tips.keys() {
            let id = RitualId::strand(h.height, *s, 0);
            match DkgRitual::new(self.group, id, &h.next_members, threshold) {
                Ok(r) => {
                    rituals.insert(*s, RitualRun::new(r));
                }
                Err(e) => self.events.push(EngineEvent::Violation(format!("cannot start ritual {id}: {e}"))),
            }
        }
        let deadline = h.cycle + self.params.reshuffle_duration.max(1);
        let block = Arc::new(block);
        self.epochs.push(block.clone());
        self.anchor = hash;
        self.progress = Progress::Reshuffling(Box::new(Reshuffle {
            epoch: block.clone(),
            epoch_hash: hash,
            rituals,
            deadline,
            ready: None,
        }));
        self.set_phase(asc, StrandPhase::DominantFullKeyspace);
        self.set_phase(desc, StrandPhase::Reshuffling);
        self.events.push(EngineEvent::EpochAccepted(block));
        for s in self.tips.keys().copied().collect::<Vec<_>>() {
            self.deal(s, ctx);
        }
        self.replay_buffered(ctx);
    }

    // ---- reshuffling ----

    fn ritual_run_mut(&mut self, id: RitualId) -> Option<&mut RitualRun> {
        let Progress::Reshuffling(r) = &mut self.progress else { return None };
        let RitualScope::Strand(s) = id.scope else { return None };
        r.rituals.get_mut(&s).filter(|run| run.ritual.id() == id)
    }

    /// True for rituals of an epoch or attempt this node has not reached yet.
    fn is_future_ritual(&self, id: RitualId) -> bool {
        let accepted = self.epochs.len() as u64;
        if id.epoch > accepted {
            return true;
        }
        match (&self.progress, id.scope) {
            (Progress::Reshuffling(r), RitualScope::Strand(s)) if id.epoch == accepted => {
                r.rituals.get(&s).is_some_and(|run| id.attempt > run.ritual.id().attempt)
            }
            _ => false,
        }
    }

    fn deal(&mut self, strand: StrandId, ctx: &mut EngineCtx) {
        if !self.behavior.speaks() {
            return;
        }
        let Progress::Reshuffling(r) = &self.progress else { return };
        let Some(run) = r.rituals.get(&strand) else { return };
        if run.ritual.index_of(&self.id).is_none() {
            return;
        }
        let id = run.ritual.id();
        let mut rng = ChaCha20Rng::from_seed(sha256(&[b"unitychain/deal", &self.rng_seed, &id.encode(), &self.id.id]));
        let (dealing, secret) = run.ritual.deal(self.id, &mut rng);
        ctx.registry.record_contribution(id, self.id, secret);
        self.broadcast(ProtocolMessage::Dealing(dealing));
    }

    fn on_dealing(&mut self, from: NodeId, d: &crate::crypto::Dealing, msg: &ProtocolMessage) {
        let me = self.id;
        let speaks = self.behavior.speaks();
        let future = self.is_future_ritual(d.ritual);
        let Some(run) = self.ritual_run_mut(d.ritual) else {
            if future {
                self.buffered.push((from, msg.clone()));
            }
            return;
        };
        let dealer = d.commitment.dealer;
        if dealer != from || run.ritual.index_of(&dealer).is_none() || run.commitments.contains_key(&dealer) {
            return;
        }
        let mut complain = false;
        if run.ritual.index_of(&me).is_some() {
            if run.ritual.share_is_valid(d, &me) {
                run.received.insert(dealer, d.shares[&me]);
            } else {
                complain = true;
            }
        }
        run.commitments.insert(dealer, d.commitment.clone());
        if complain && speaks {
            self.broadcast(ProtocolMessage::Complaint { ritual: d.ritual, dealer });
        }
    }

    /// Computes the qualified set of every open ritual; restarts failed ones.
    fn close_rituals(&mut self, cycle: u64, ctx: &mut EngineCtx) {
        let me = self.id;
        let group = self.group;
        let Progress::Reshuffling(r) = &mut self.progress else { return };
        let mut redeal = Vec::new();
        for (s, run) in r.rituals.iter_mut() {
            if run.outcome.is_some() {
                continue;
            }
            let id = run.ritual.id();
            let threshold = run.ritual.threshold();
            let qualified = run.ritual.qualified(run.commitments.keys().copied(), &run.complaints);
            if qualified.len() < threshold {
                self.events.push(EngineEvent::DkgFailed { ritual: id, surviving: qualified.len(), threshold });
                let retry = RitualId { attempt: id.attempt + 1, ..id };
                let participants = run.ritual.participants().to_vec();
                match DkgRitual::new(group, retry, &participants, threshold) {
                    Ok(next) => *run = RitualRun::new(next),
                    Err(e) => self.events.push(EngineEvent::Violation(format!("cannot restart {id}: {e}"))),
                }
                redeal.push(*s);
                continue;
            }
            let public_key = run.ritual.group_public_key(qualified.iter().map(|d| &run.commitments[d]));
            let mine: Vec<&SecretShare> = qualified.iter().filter_map(|d| run.received.get(d)).collect();
            let share = if mine.len() == qualified.len() { run.ritual.combine_shares(&me, mine) } else { None };
            if ctx.registry.register_qualified(id, &qualified) != Some(public_key) {
                self.events.push(EngineEvent::Violation(format!("ritual {id} key disagrees with its dealers")));
            }
            self.events.push(EngineEvent::DkgCompleted { ritual: id, qualified, threshold, public_key });
            run.outcome = Some(RitualOutcome { ritual: id, public_key, threshold, share });
        }
        if !redeal.is_empty() {
            r.deadline = cycle + 1;
            for s in redeal {
                self.deal(s, ctx);
            }
            return;
        }
        r.ready = Some(cycle);
        for s in self.tips.keys().copied().collect::<Vec<_>>() {
            self.set_phase(s, StrandPhase::GenesisPending);
        }
    }

    // ---- epoch genesis ----

    /// The genesis block this node would accept at `cycle`, once keys are ready.
    pub fn expected_genesis(&self, cycle: u64) -> Option<GenesisHeader> {
        let Progress::Reshuffling(r) = &self.progress else { return None };
        let ready = r.ready.filter(|c| *c <= cycle)?;
        let eb = &r.epoch.header;
        let permute = self.params.topology_shuffle.permutes_genesis(eb.height);
        let base = combine_vrf_seed(&r.epoch.ascending_signature, &r.epoch.descending_signature);
        let mut new_configurations = BTreeMap::new();
        for (s, tip) in &self.tips {
            let out = r.rituals.get(s)?.outcome.as_ref()?;
            let ordered_members = if permute {
                shuffle_members(&eb.next_members, &VrfSeed(sha256(&[b"unitychain/genesis", &base.0, &[s.tag()]])))
            } else {
                carry_order(&tip.signing.ordered_members, &eb.next_members)
            };
            let responsibility =
                self.params.diverged_partition.assignments.get(s).cloned().unwrap_or(KeyPredicate::Ranges(Vec::new()));
            let group_key = GroupKeyRef { ritual: out.ritual, public_key: out.public_key, threshold: out.threshold };
            new_configurations
                .insert(*s, NetworkConfiguration { strand: *s, ordered_members, group_key, responsibility });
        }
        let rotation = &new_configurations.get(&eb.descending)?.ordered_members;
        let proposer = *rotation.get((cycle - ready) as usize % rotation.len().max(1))?;
        Some(GenesisHeader {
            epoch: eb.height,
            cycle,
            proposer,
            parent: r.epoch_hash,
            new_configurations,
            partition: self.params.diverged_partition.clone(),
        })
    }

    fn on_genesis_proposal(&mut self, from: NodeId, h: &GenesisHeader, ctx: &mut EngineCtx) {
        if h.cycle < self.cycle {
            self.reject("stale_proposal");
            return;
        }
        if h.cycle > self.cycle {
            self.buffered.push((from, ProtocolMessage::GenesisProposal(h.clone())));
            return;
        }
        let hash = h.hash();
        if self.proposals.contains_key(&hash) {
            return;
        }
        if from != h.proposer || self.expected_genesis(h.cycle).as_ref() != Some(h) {
            self.reject("unexpected_genesis_proposal");
            return;
        }
        self.proposals.insert(hash, Proposal::Genesis(h.clone()));
        let Progress::Reshuffling(r) = &self.progress else { return };
        let submissive = &self.tips[&r.epoch.header.descending].signing;
        if submissive.contains(&self.id) {
            let ritual = submissive.group_key.ritual;
            self.sign(BlockRef { kind: BlockKind::Genesis, strand: None, height: h.epoch, hash }, ritual);
        }
        self.try_finalize_genesis(hash, ctx);
    }

    fn try_finalize_genesis(&mut self, hash: BlockHash, ctx: &mut EngineCtx) {
        if self.done.contains(&hash) {
            return;
        }
        let Some(Proposal::Genesis(h)) = self.proposals.get(&hash) else { return };
        let Progress::Reshuffling(r) = &self.progress else { return };
        let epoch = h.epoch;
        let (dom, sub) = (r.epoch.header.ascending, r.epoch.header.descending);
        let Some(submissive_signature) =
            self.book.aggregate(hash, &self.tips[&sub].signing, &self.group, &*ctx.registry)
        else {
            return;
        };
        let dom_cfg = &self.tips[&dom].signing;
        let Some(dominant_signature) = self.book.aggregate(hash, dom_cfg, &self.group, &*ctx.registry) else {
            if dom_cfg.contains(&self.id) {
                let ritual = dom_cfg.group_key.ritual;
                self.sign(BlockRef { kind: BlockKind::Genesis, strand: None, height: epoch, hash }, ritual);
            }
            return;
        };
        let block = EpochGenesisBlock { header: h.clone(), submissive_signature, dominant_signature };
        if let Err(e) = validate_epoch_genesis(&block, &r.epoch, &self.tips, &*ctx.registry) {
            self.violation(format!("own genesis block {epoch} fails validation: {e}"));
            return;
        }
        self.accept_genesis(block);
    }

    fn accept_genesis(&mut self, block: EpochGenesisBlock) {
        let Progress::Reshuffling(r) = std::mem::replace(&mut self.progress, Progress::Idle) else { return };
        let dominant = r.epoch.header.ascending;
        self.done.insert(block.hash());
        for (s, cfg) in &block.header.new_configurations {
            let Some(tip) = self.tips.get_mut(s) else { continue };
            let old = std::mem::replace(&mut tip.signing, cfg.clone());
            tip.handover = (*s == dominant).then_some(old);
            self.since_genesis.insert(*s, 0);
            self.tip_cycles.insert(*s, block.header.cycle);
        }
        for run in r.rituals.values() {
            if let Some(RitualOutcome { ritual, share: Some(share), .. }) = &run.outcome {
                self.keys.insert(*ritual, *share);
            }
        }
        self.partition = block.header.partition.clone();
        self.members = r.epoch.header.next_members.iter().copied().collect();
        for s in self.tips.keys().copied().collect::<Vec<_>>() {
            self.set_phase(s, StrandPhase::Diverged);
        }
        self.status = if self.members.contains(&self.id) {
            NodeStatus::Member
        } else if self.status == NodeStatus::Member {
            NodeStatus::Departed
        } else {
            NodeStatus::Observer
        };
        self.prune_keys();
        let block = Arc::new(block);
        self.geneses.push(block.clone());
        self.events.push(EngineEvent::GenesisAccepted(block));
    }

    // ---- helpers ----

    fn sign(&mut self, block: BlockRef, ritual: RitualId) {
        if !self.behavior.speaks() {
            return;
        }
        let key = (block.kind, block.strand, block.height, self.cycle, ritual);
        if self.signed.contains(&key) {
            return;
        }
        let Some(share) = self.keys.get(&ritual) else { return };
        let share = sign_with_share(&self.group, self.id, share, &block.hash.0);
        self.signed.insert(key);
        self.broadcast(ProtocolMessage::Share { block, ritual, share });
    }

    fn broadcast(&mut self, msg: ProtocolMessage) {
        self.outbox.push(Outgoing { to: Recipient::All, msg });
    }

    fn set_phase(&mut self, strand: StrandId, to: StrandPhase) {
        let from = self.phases.get(&strand).copied().unwrap_or(StrandPhase::Diverged);
        if from == to {
            return;
        }
        if !from.can_become(to) {
            self.violation(format!("illegal phase change {from} -> {to} on strand {strand}"));
        }
        self.phases.insert(strand, to);
        self.events.push(EngineEvent::PhaseChanged { strand, from, to });
    }

    fn prune_keys(&mut self) {
        let live: BTreeSet<RitualId> = self
            .tips
            .values()
            .flat_map(|t| std::iter::once(&t.signing).chain(t.handover.as_ref()))
            .map(|c| c.group_key.ritual)
            .collect();
        self.keys.retain(|r, _| live.contains(r));
    }

    fn reject(&mut self, reason: &'static str) {
        *self.rejections.entry(reason).or_default() += 1;
    }

    fn violation(&mut self, what: String) {
        self.events.push(EngineEvent::Violation(format!("{}: {what}", self.id.short())));
    }
}

/// Keeps the relative order of retained members and appends newcomers.
fn carry_order(previous: &[NodeId], next: &[NodeId]) -> Vec<NodeId> {
    let next_set: BTreeSet<&NodeId> = next.iter().collect();
    let prev_set: BTreeSet<&NodeId> = previous.iter().collect();
    previous
        .iter()
        .filter(|n| next_set.contains(n))
        .chain(next.iter().filter(|n| !prev_set.contains(n)))
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carry_order_keeps_positions() {
        let ids: Vec<NodeId> = (0..6).map(|i| NodeId::derive(i, &GroupParams::default())).collect();
        let prev = vec![ids[3], ids[0], ids[2], ids[1]];
        let mut next = vec![ids[0], ids[1], ids[3], ids[5], ids[4]];
        next.sort();
        let out = carry_order(&prev, &next);
        assert_eq!(&out[..3], &[ids[3], ids[0], ids[1]]);
        assert_eq!(out.len(), 5);
    }
}
