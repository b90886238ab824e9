//! Stop-and-wait HARQ processes with chase combining.
//!
//! A process tracks one transport block toward a set of target UEs. Every
//! transmission round adds the round's link SINR to each still-missing UE's
//! soft buffer (linear-domain sum, i.e. chase combining) and then draws a
//! Bernoulli decode against the BLER curve at the accumulated SINR. Decode
//! draws come from a caller-supplied closure so schedulers that only differ
//! in *when* they retransmit observe byte-identical ACK/NACK histories.

use crate::error::{Error, Result};
use crate::geometry::UeId;
use crate::link::{bler, BlerCurve, McsTable};
use std::collections::{BTreeMap, BTreeSet};

/// Payload bytes carried by one HARQ process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportBlock {
    pub id: u64,
    pub group: u32,
    pub payload: Vec<u8>,
}

/// Lifecycle of a HARQ process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarqStatus {
    /// May still transmit.
    Active,
    /// Every target decoded the block.
    Done,
    /// Retransmission budget exhausted with targets missing.
    Failed,
}

/// Immutable inputs for starting a process.
#[derive(Debug, Clone)]
pub struct ProcessSetup {
    pub id: u64,
    /// Global arrival order, used for oldest-first scheduling.
    pub seq: u64,
    pub group: u32,
    pub packet: u64,
    pub tb: TransportBlock,
    pub mcs: usize,
    pub prbs: u32,
    pub targets: BTreeSet<UeId>,
    pub created_sf: u64,
}

/// One stop-and-wait HARQ process.
#[derive(Debug, Clone)]
pub struct HarqProcess {
    pub id: u64,
    pub seq: u64,
    pub group: u32,
    pub packet: u64,
    pub tb: TransportBlock,
    pub mcs: usize,
    pub prbs: u32,
    pub created_sf: u64,
    targets: BTreeSet<UeId>,
    nack: BTreeSet<UeId>,
    acc_sinr_linear: BTreeMap<UeId, f64>,
    rounds_received: u32,
    budget_used: u32,
    status: HarqStatus,
}

/// Result of one transmission round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Zero-based index of the round just sent.
    pub round: u32,
    /// Targets still missing the block after this round.
    pub nacks: BTreeSet<UeId>,
    pub status: HarqStatus,
}

impl HarqProcess {
    /// Starts a process; the initial transmission is the first
    /// [`transmit_round`](Self::transmit_round) call.
    pub fn start(setup: ProcessSetup, table: &McsTable) -> Result<Self> {
        if setup.targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        if setup.tb.payload.is_empty() {
            return Err(Error::invalid("transport block payload must not be empty"));
        }
        if setup.prbs == 0 {
            return Err(Error::invalid("process must occupy at least one PRB"));
        }
        table.entry(setup.mcs)?;
        if setup.tb.group != setup.group {
            return Err(Error::MixedGroups(setup.group as u64, setup.tb.group as u64));
        }
        Ok(HarqProcess {
            id: setup.id,
            seq: setup.seq,
            group: setup.group,
            packet: setup.packet,
            nack: setup.targets.clone(),
            targets: setup.targets,
            tb: setup.tb,
            mcs: setup.mcs,
            prbs: setup.prbs,
            created_sf: setup.created_sf,
            acc_sinr_linear: BTreeMap::new(),
            rounds_received: 0,
            budget_used: 0,
            status: HarqStatus::Active,
        })
    }

    pub fn status(&self) -> HarqStatus {
        self.status
    }

    /// Rounds physically sent so far (drives draw indices and combining).
    pub fn rounds_received(&self) -> u32 {
        self.rounds_received
    }

    /// Rounds charged against the retransmission budget.
    ///
    /// Equal to [`rounds_received`](Self::rounds_received) unless a
    /// scheduler sends uncharged rounds (see `transmit_round`'s
    /// `charge_budget`).
    pub fn budget_used(&self) -> u32 {
        self.budget_used
    }

    pub fn targets(&self) -> &BTreeSet<UeId> {
        &self.targets
    }

    /// Targets currently missing the block.
    pub fn nack_set(&self) -> &BTreeSet<UeId> {
        &self.nack
    }

    /// Accumulated soft-buffer SINR for a UE, in dB.
    pub fn accumulated_sinr_db(&self, ue: UeId) -> Option<f64> {
        self.acc_sinr_linear.get(&ue).map(|l| 10.0 * l.log10())
    }

    /// Accumulated soft-buffer SINR for a UE, linear.
    pub fn accumulated_sinr_linear(&self, ue: UeId) -> Option<f64> {
        self.acc_sinr_linear.get(&ue).copied()
    }

    /// True when the process has been sent at least once and someone is
    /// still missing it.
    pub fn needs_retransmission(&self) -> bool {
        self.status == HarqStatus::Active && self.rounds_received >= 1 && !self.nack.is_empty()
    }

    /// Sends one round to the still-missing targets.
    ///
    /// `link_linear` gives each UE's received SINR for this round (linear);
    /// `draw(ue, round)` returns a uniform [0,1) variate — a decode succeeds
    /// when the variate is at or above the BLER at the accumulated SINR.
    /// `charge_budget` controls whether the round counts against the
    /// retransmission budget (schedulers may send free piggy-backed rounds);
    /// after `1 + max_retx` charged rounds an undelivered process fails.
    pub fn transmit_round(
        &mut self,
        link_linear: &BTreeMap<UeId, f64>,
        max_retx: u32,
        table: &McsTable,
        curve: &BlerCurve,
        charge_budget: bool,
        mut draw: impl FnMut(UeId, u32) -> f64,
    ) -> Result<RoundOutcome> {
        if self.status != HarqStatus::Active {
            return Err(Error::ProcessTerminal(self.id));
        }
        let round = self.rounds_received;
        let missing: Vec<UeId> = self.nack.iter().copied().collect();
        for ue in missing {
            let add = *link_linear.get(&ue).ok_or_else(|| {
                Error::invalid(format!("no link SINR supplied for target UE {ue}"))
            })?;
            if !(add.is_finite() && add > 0.0) {
                return Err(Error::invalid(format!(
                    "link SINR for UE {ue} must be positive and finite"
                )));
            }
            let acc = self.acc_sinr_linear.entry(ue).or_insert(0.0);
            *acc += add;
            let eff_db = 10.0 * acc.log10();
            let p = bler(table, self.mcs, eff_db, curve)?;
            if draw(ue, round) >= p {
                self.nack.remove(&ue);
            }
        }
        self.rounds_received += 1;
        if charge_budget {
            self.budget_used += 1;
        }
        if self.nack.is_empty() {
            self.status = HarqStatus::Done;
        } else if self.budget_used > max_retx {
            self.status = HarqStatus::Failed;
        }
        Ok(RoundOutcome {
            round,
            nacks: self.nack.clone(),
            status: self.status,
        })
    }
}

/// One row of a reception matrix: a pending block and who misses it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub process: u64,
    pub seq: u64,
    pub tb: u64,
    pub payload_len: usize,
    pub nacks: BTreeSet<UeId>,
}

/// Snapshot of a group's pending retransmissions, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceptionMatrix {
    pub group: u32,
    pub rows: Vec<MatrixRow>,
}

/// Builds the reception matrix over processes awaiting retransmission.
///
/// All processes must belong to one group, be active, and have been sent
/// at least once. Rows are ordered oldest first by `(seq, id)`.
pub fn build_reception_matrix(processes: &[&HarqProcess]) -> Result<ReceptionMatrix> {
    let first = processes
        .first()
        .ok_or_else(|| Error::invalid("reception matrix needs at least one process"))?;
    let group = first.group;
    let mut rows = Vec::with_capacity(processes.len());
    for p in processes {
        if p.group != group {
            return Err(Error::MixedGroups(group as u64, p.group as u64));
        }
        if p.status != HarqStatus::Active {
            return Err(Error::ProcessTerminal(p.id));
        }
        if p.rounds_received == 0 {
            return Err(Error::invalid(format!(
                "process {} has not yet been transmitted",
                p.id
            )));
        }
        if p.nack.is_empty() {
            return Err(Error::EmptyNackRow(p.id));
        }
        rows.push(MatrixRow {
            process: p.id,
            seq: p.seq,
            tb: p.tb.id,
            payload_len: p.tb.payload.len(),
            nacks: p.nack.clone(),
        });
    }
    rows.sort_by_key(|r| (r.seq, r.process));
    Ok(ReceptionMatrix { group, rows })
}
