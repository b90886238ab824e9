//! Discrete-time scheduler driving one simulation run.
//!
//! Each subframe runs four phases: HARQ feedback that is due arrives at the
//! scheduler, new packets arrive and become HARQ processes, pending
//! retransmissions are dispatched (combined ones first under index coding),
//! and finally queued initial transmissions go out in strict arrival order.
//! The run continues past the traffic horizon until every queue drains, so
//! every process ends terminal.
//!
//! Decode outcomes are stateless functions of `(seed, block, UE, round)` and
//! each round adds the same static link SINR to the soft buffer, so a block's
//! ACK/NACK history does not depend on *when* rounds are scheduled. Plain and
//! index-coded SC-PTM therefore deliver identically and differ only in the
//! resources they spend. A combined grant is sized for its largest component
//! at an MCS never more robust than the components' own, which keeps it no
//! larger than the single retransmission it replaces.

use crate::error::{Error, Result};
use crate::frame::{
    prbs_needed, tbs_bits, ChannelKind, DciTb, FrameConfig, ResourceLedger, Rnti,
    SUBFRAMES_PER_FRAME,
};
use crate::geometry::{drop_ues, CellGrid, UeId};
use crate::harq::{build_reception_matrix, HarqProcess, HarqStatus, ProcessSetup, TransportBlock};
use crate::index_coding::{plan_combinations, xor_decode, xor_encode};
use crate::link::{
    noise_floor_dbm, select_mcs, sinr, BlerCurve, LinkQuality, RadioParams, SinrMode,
};
use crate::rng::{self, DOMAIN_DECODE};
use crate::sim::config::SimConfig;
use crate::sim::trace::{TraceEvent, PRB_UNIT};
use crate::strategy::{assign_groups, gen_voice_traffic, GroupPacket, GroupSession, StrategyKind};
use std::collections::{BTreeMap, BTreeSet};

/// Everything a run produces: the trace plus ledger-side counters that the
/// metrics layer cross-checks against the trace.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<TraceEvent>,
    pub alloc_count: u64,
    pub dci_count: u64,
    pub total_allocated_prbs: u64,
}

/// Downlink channel a strategy transmits on.
pub fn channel_kind(strategy: StrategyKind) -> ChannelKind {
    match strategy {
        StrategyKind::UnicastPdsch => ChannelKind::PdschUnicast,
        StrategyKind::Pmch => ChannelKind::Pmch,
        StrategyKind::ScPtm | StrategyKind::ScPtmIc => ChannelKind::ScPtm,
    }
}

/// MBSFN positions actually reserved in this run's frame.
///
/// An exclusive frame hands the whole frame to the active strategy's channel;
/// otherwise the configured reservation applies to every strategy alike.
pub fn effective_mbsfn(cfg: &SimConfig) -> BTreeSet<u64> {
    if cfg.exclusive_frame {
        if cfg.strategy == StrategyKind::Pmch {
            (0..SUBFRAMES_PER_FRAME).collect()
        } else {
            BTreeSet::new()
        }
    } else {
        cfg.mbsfn_subframes.clone()
    }
}

/// Frame layout for a run, honouring the exclusive-frame switch.
pub fn build_frame(cfg: &SimConfig) -> Result<FrameConfig> {
    let mbsfn = effective_mbsfn(cfg);
    if cfg.exclusive_frame {
        FrameConfig::with_unrestricted_pmch(cfg.bandwidth_mhz, cfg.pdcch_symbols, &mbsfn)
    } else {
        FrameConfig::new(cfg.bandwidth_mhz, cfg.pdcch_symbols, &mbsfn)
    }
}

struct ProcState {
    proc: HarqProcess,
    rnti: Rnti,
    /// Unicast destination, recorded on the grant.
    ue: Option<UeId>,
    /// Earliest subframe the initial transmission may use (the next
    /// control-period boundary for PMCH, the arrival subframe otherwise).
    earliest_sf: u64,
    /// Whether MCS selection met the BLER target without falling back.
    feasible: bool,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    kind: ChannelKind,
    max_retx: u32,
    curve: BlerCurve,
    ledger: ResourceLedger,
    sessions: Vec<GroupSession>,
    /// Per group: members' link SINR (linear) on the run's channel.
    group_links: BTreeMap<u32, BTreeMap<UeId, f64>>,
    /// Per group: the MCS every packet of the group uses (None for unicast,
    /// which selects per member).
    group_mcs: BTreeMap<u32, (usize, bool)>,
    ue_mcs: BTreeMap<UeId, (usize, bool)>,
    arrivals_by_sf: BTreeMap<u64, Vec<GroupPacket>>,
    procs: BTreeMap<u64, ProcState>,
    /// Initial transmissions awaiting resources, strict arrival order.
    pending_initial: BTreeMap<u64, u64>,
    /// Per group: blocks awaiting retransmission, keyed `(seq, process)`,
    /// valued by the subframe they entered the pool.
    pools: BTreeMap<u32, BTreeMap<(u64, u64), u64>>,
    /// Processes whose feedback arrives at the keyed subframe.
    feedback_due: BTreeMap<u64, Vec<u64>>,
    /// Blocks each member still needs per packet, for delivery tracking.
    remaining_tbs: BTreeMap<(u32, u64, UeId), u32>,
    events: Vec<TraceEvent>,
    next_pid: u64,
    next_seq: u64,
    next_tb: u64,
}

/// Runs one simulation to completion and returns its trace.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let frame = build_frame(cfg)?;
    if cfg.groups == 0 {
        return Ok(RunOutput {
            events: Vec::new(),
            alloc_count: 0,
            dci_count: 0,
            total_allocated_prbs: 0,
        });
    }

    let grid = CellGrid::build(cfg.isd_m, cfg.rings)?;
    let per_cell = cfg.groups * cfg.group_size;
    let drop = drop_ues(&grid, per_cell, cfg.shadowing_sigma_db, cfg.seed)?;
    let sessions = assign_groups(&drop, 0, cfg.groups, cfg.group_size)?;

    let params = RadioParams {
        tx_dbm: cfg.tx_dbm,
        antenna_gain_dbi: cfg.antenna_gain_dbi,
        carrier_ghz: cfg.carrier_ghz,
        min_distance_m: cfg.min_distance_m,
        noise_dbm: noise_floor_dbm(frame.total_prb, cfg.noise_figure_db),
        diversity_gain_db: cfg.diversity_gain_db,
    };
    let mode = match cfg.strategy {
        StrategyKind::Pmch => SinrMode::Mbsfn,
        _ => SinrMode::Unicast,
    };
    let all_cells: Vec<usize> = (0..grid.cells().len()).collect();
    let link_of = |ue: UeId| -> Result<LinkQuality> {
        if let Some(db) = cfg.frozen_sinr_db {
            return Ok(LinkQuality::from_db(ue, db, mode));
        }
        match mode {
            SinrMode::Unicast => sinr(ue, &[drop.serving_cell(ue)], &grid, &drop, &params, mode),
            SinrMode::Mbsfn => sinr(ue, &all_cells, &grid, &drop, &params, mode),
        }
    };

    let curve = curve_of(cfg)?;
    let mut group_links = BTreeMap::new();
    let mut group_mcs = BTreeMap::new();
    let mut ue_mcs = BTreeMap::new();
    for s in &sessions {
        let mut links = Vec::with_capacity(s.members.len());
        for &ue in &s.members {
            links.push(link_of(ue)?);
        }
        group_links.insert(
            s.id,
            links
                .iter()
                .map(|l| (l.ue, l.sinr_linear))
                .collect::<BTreeMap<_, _>>(),
        );
        match cfg.strategy {
            StrategyKind::UnicastPdsch => {
                for l in &links {
                    let sel = select_mcs(
                        std::slice::from_ref(l),
                        &cfg.mcs_table,
                        &curve,
                        cfg.target_bler,
                        0.0,
                    )?;
                    ue_mcs.insert(l.ue, (sel.index, sel.feasible));
                }
            }
            StrategyKind::Pmch => {
                group_mcs.insert(s.id, (cfg.pmch_mcs_index, true));
            }
            StrategyKind::ScPtm | StrategyKind::ScPtmIc => {
                let sel = select_mcs(
                    &links,
                    &cfg.mcs_table,
                    &curve,
                    cfg.target_bler,
                    cfg.ignore_worst_fraction,
                )?;
                group_mcs.insert(s.id, (sel.index, sel.feasible));
            }
        }
    }

    let horizon = cfg.warmup_sf + cfg.measured_sf;
    let mut arrivals_by_sf: BTreeMap<u64, Vec<GroupPacket>> = BTreeMap::new();
    for s in &sessions {
        for pkt in gen_voice_traffic(cfg.seed, s, horizon, cfg.period_sf, cfg.payload_bytes)? {
            arrivals_by_sf.entry(pkt.arrival_sf).or_default().push(pkt);
        }
    }

    let mut engine = Engine {
        cfg,
        kind: channel_kind(cfg.strategy),
        max_retx: if cfg.strategy == StrategyKind::Pmch {
            0
        } else {
            cfg.max_retx
        },
        curve,
        ledger: ResourceLedger::new(frame),
        sessions,
        group_links,
        group_mcs,
        ue_mcs,
        arrivals_by_sf,
        procs: BTreeMap::new(),
        pending_initial: BTreeMap::new(),
        pools: BTreeMap::new(),
        feedback_due: BTreeMap::new(),
        remaining_tbs: BTreeMap::new(),
        events: Vec::new(),
        next_pid: 0,
        next_seq: 0,
        next_tb: 0,
    };
    engine.main_loop(horizon)?;
    engine.finish()
}

fn curve_of(cfg: &SimConfig) -> Result<BlerCurve> {
    BlerCurve::new(cfg.anchor_drop_db)
}

impl Engine<'_> {
    fn main_loop(&mut self, horizon: u64) -> Result<()> {
        let mut sf = 0u64;
        loop {
            self.deliver_feedback(sf);
            self.admit_arrivals(sf)?;
            self.dispatch_retransmissions(sf)?;
            self.dispatch_initials(sf)?;
            if self.arrivals_by_sf.is_empty()
                && self.pending_initial.is_empty()
                && self.pools.values().all(|p| p.is_empty())
                && self.feedback_due.is_empty()
            {
                return Ok(());
            }
            sf += 1;
            if sf > horizon + 1_000_000 {
                return Err(Error::invalid(
                    "scheduler failed to drain within one million subframes past the horizon",
                ));
            }
        }
    }

    fn finish(self) -> Result<RunOutput> {
        for st in self.procs.values() {
            if st.proc.status() == HarqStatus::Active {
                return Err(Error::invalid(format!(
                    "process {} still active after drain",
                    st.proc.id
                )));
            }
        }
        let mut alloc_units = 0u64;
        let mut tx_units = 0u64;
        for ev in &self.events {
            match ev {
                TraceEvent::Alloc { units, .. } => alloc_units += units,
                TraceEvent::TxRound { units, .. } => tx_units += units,
                _ => {}
            }
        }
        if alloc_units != tx_units
            || alloc_units != self.ledger.total_allocated_prbs() * PRB_UNIT
        {
            return Err(Error::invalid(format!(
                "resource closure violated: granted {alloc_units} units, \
                 transmitted {tx_units}, ledger {}",
                self.ledger.total_allocated_prbs() * PRB_UNIT
            )));
        }
        let (alloc_count, dci_count) = self.ledger.control_counts();
        Ok(RunOutput {
            events: self.events,
            alloc_count,
            dci_count,
            total_allocated_prbs: self.ledger.total_allocated_prbs(),
        })
    }

    /// Phase 1: feedback sent `feedback_delay_sf` ago reaches the scheduler.
    fn deliver_feedback(&mut self, sf: u64) {
        for pid in self.feedback_due.remove(&sf).unwrap_or_default() {
            let st = &self.procs[&pid];
            if st.proc.needs_retransmission() {
                self.pools
                    .entry(st.proc.group)
                    .or_default()
                    .insert((st.proc.seq, pid), sf);
            }
        }
    }

    /// Phase 2: packets arriving now become queued HARQ processes.
    fn admit_arrivals(&mut self, sf: u64) -> Result<()> {
        for pkt in self.arrivals_by_sf.remove(&sf).unwrap_or_default() {
            let session = &self.sessions[pkt.group as usize];
            let member_set = session.members.clone();
            let members: Vec<UeId> = member_set.iter().copied().collect();
            let rnti = session.rnti;
            let mut tbs = 0u32;
            match self.cfg.strategy {
                StrategyKind::UnicastPdsch => {
                    for &ue in &members {
                        let (mcs, feasible) = self.ue_mcs[&ue];
                        let segs = self.segment(&pkt.payload, mcs)?;
                        self.remaining_tbs
                            .insert((pkt.group, pkt.packet, ue), segs.len() as u32);
                        tbs += segs.len() as u32;
                        for seg in segs {
                            self.create_process(
                                &pkt,
                                seg,
                                mcs,
                                feasible,
                                BTreeSet::from([ue]),
                                Rnti::Cell(ue as u32 + 1),
                                Some(ue),
                                sf,
                            )?;
                        }
                    }
                }
                StrategyKind::Pmch | StrategyKind::ScPtm | StrategyKind::ScPtmIc => {
                    let (mcs, feasible) = self.group_mcs[&pkt.group];
                    let segs = self.segment(&pkt.payload, mcs)?;
                    for &ue in &members {
                        self.remaining_tbs
                            .insert((pkt.group, pkt.packet, ue), segs.len() as u32);
                    }
                    tbs = segs.len() as u32;
                    let rnti = if self.cfg.strategy == StrategyKind::Pmch {
                        Rnti::Mbms(pkt.group)
                    } else {
                        Rnti::Group(rnti)
                    };
                    let earliest = if self.cfg.strategy == StrategyKind::Pmch {
                        (sf / self.cfg.mcch_period_sf + 1) * self.cfg.mcch_period_sf
                    } else {
                        sf
                    };
                    for seg in segs {
                        let pid = self.create_process(
                            &pkt,
                            seg,
                            mcs,
                            feasible,
                            member_set.clone(),
                            rnti,
                            None,
                            sf,
                        )?;
                        self.procs.get_mut(&pid).expect("just created").earliest_sf = earliest;
                    }
                }
            }
            self.events.push(TraceEvent::Arrival {
                sf,
                group: pkt.group,
                packet: pkt.packet,
                tbs,
            });
        }
        Ok(())
    }

    /// Splits a payload into chunks that each fit one transport block.
    fn segment(&self, payload: &[u8], mcs: usize) -> Result<Vec<Vec<u8>>> {
        let frame = self.ledger.frame();
        let max_bits = tbs_bits(mcs, frame.total_prb, frame, &self.cfg.mcs_table, self.kind)?;
        let max_bytes = (max_bits / 8) as usize;
        if max_bytes == 0 {
            return Err(Error::invalid(format!(
                "MCS {mcs} cannot carry a single byte at {} PRBs",
                frame.total_prb
            )));
        }
        Ok(payload.chunks(max_bytes).map(<[u8]>::to_vec).collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn create_process(
        &mut self,
        pkt: &GroupPacket,
        seg: Vec<u8>,
        mcs: usize,
        feasible: bool,
        targets: BTreeSet<UeId>,
        rnti: Rnti,
        ue: Option<UeId>,
        sf: u64,
    ) -> Result<u64> {
        let frame = self.ledger.frame();
        let prbs = prbs_needed(
            seg.len() as u64 * 8,
            mcs,
            frame,
            &self.cfg.mcs_table,
            self.kind,
        )?;
        let pid = self.next_pid;
        self.next_pid += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        let tb = TransportBlock {
            id: self.next_tb,
            group: pkt.group,
            payload: seg,
        };
        self.next_tb += 1;
        let proc = HarqProcess::start(
            ProcessSetup {
                id: pid,
                seq,
                group: pkt.group,
                packet: pkt.packet,
                tb,
                mcs,
                prbs,
                targets,
                created_sf: sf,
            },
            &self.cfg.mcs_table,
        )?;
        self.procs.insert(
            pid,
            ProcState {
                proc,
                rnti,
                ue,
                earliest_sf: sf,
                feasible,
            },
        );
        self.pending_initial.insert(seq, pid);
        Ok(pid)
    }

    /// Phase 3: pending retransmissions, oldest first, combined when coding
    /// is on. Stops at the first resource shortage and retries next subframe.
    fn dispatch_retransmissions(&mut self, sf: u64) -> Result<()> {
        if !self.ledger.frame().allows(self.kind, sf) {
            return Ok(());
        }
        let groups: Vec<u32> = self.pools.keys().copied().collect();
        for group in groups {
            let full = if self.cfg.strategy == StrategyKind::ScPtmIc {
                !self.dispatch_group_coded(group, sf)?
            } else {
                !self.dispatch_group_plain(group, sf)?
            };
            if full {
                break;
            }
        }
        Ok(())
    }

    /// Uncombined retransmissions for one group; false when the subframe
    /// ran out of PRBs.
    fn dispatch_group_plain(&mut self, group: u32, sf: u64) -> Result<bool> {
        while let Some((&key, _)) = self.pools.get(&group).and_then(|p| p.first_key_value()) {
            if !self.dispatch_retx_single(key.1, sf)? {
                return Ok(false);
            }
            self.pools.get_mut(&group).expect("pool exists").remove(&key);
        }
        Ok(true)
    }

    /// One uncombined retransmission at the block's original MCS and size;
    /// false on PRB shortage.
    fn dispatch_retx_single(&mut self, pid: u64, sf: u64) -> Result<bool> {
        let (prbs, rnti, ue, group, tb_id) = {
            let st = &self.procs[&pid];
            (st.proc.prbs, st.rnti, st.ue, st.proc.group, st.proc.tb.id)
        };
        let alloc = match self.ledger.allocate(sf, prbs, self.kind, rnti, 1) {
            Ok(a) => a,
            Err(Error::PrbShortage { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        self.ledger.emit_dci(
            &alloc,
            vec![DciTb {
                process: pid,
                tb: tb_id,
                new_data: false,
            }],
        )?;
        self.events.push(TraceEvent::Alloc {
            sf,
            group,
            alloc: alloc.id,
            kind: self.kind,
            m: 1,
            prbs,
            units: prbs as u64 * PRB_UNIT,
            ue,
        });
        self.send_round(pid, alloc.id, prbs as u64 * PRB_UNIT, true, sf)?;
        Ok(true)
    }

    /// Index-coded retransmissions for one group: combined plans dispatch
    /// immediately, singletons once they have waited out the collection
    /// window. False when the subframe ran out of PRBs.
    fn dispatch_group_coded(&mut self, group: u32, sf: u64) -> Result<bool> {
        let pool = match self.pools.get(&group) {
            Some(p) if !p.is_empty() => p.clone(),
            _ => return Ok(true),
        };
        let matrix = {
            let refs: Vec<&HarqProcess> = pool
                .keys()
                .map(|&(_, pid)| &self.procs[&pid].proc)
                .collect();
            build_reception_matrix(&refs)?
        };
        let plans = plan_combinations(&matrix, self.cfg.ic_max_m)?;
        for plan in plans {
            let pids: Vec<u64> = plan.rows.iter().map(|&r| matrix.rows[r].process).collect();
            if plan.m() == 1 {
                let pid = pids[0];
                let seq = matrix.rows[plan.rows[0]].seq;
                let entered = pool[&(seq, pid)];
                if sf - entered < self.cfg.ic_collect_window_sf {
                    continue;
                }
                if !self.dispatch_retx_single(pid, sf)? {
                    return Ok(false);
                }
                self.pools
                    .get_mut(&group)
                    .expect("pool exists")
                    .remove(&(seq, pid));
            } else {
                let oldest = plan
                    .rows
                    .iter()
                    .map(|&r| pool[&(matrix.rows[r].seq, matrix.rows[r].process)])
                    .min()
                    .expect("plan nonempty");
                let full = plan.m() >= self.cfg.ic_max_m as usize;
                if !full && sf - oldest < self.cfg.ic_collect_window_sf {
                    continue;
                }
                if !self.dispatch_coded_plan(group, &pids, &plan.union_nacks, sf)? {
                    return Ok(false);
                }
                let live_pool = self.pools.get_mut(&group).expect("pool exists");
                for (&pid, &row) in pids.iter().zip(&plan.rows) {
                    live_pool.remove(&(matrix.rows[row].seq, pid));
                }
            }
        }
        Ok(true)
    }

    /// One combined grant carrying every component's block XOR-ed together;
    /// false on PRB shortage.
    fn dispatch_coded_plan(
        &mut self,
        group: u32,
        pids: &[u64],
        union: &BTreeSet<UeId>,
        sf: u64,
    ) -> Result<bool> {
        let m = pids.len() as u32;
        let links = &self.group_links[&group];
        // The grant's MCS targets the union's predicted post-combining SINR
        // but never goes below any component's own robustness, so the grant
        // stays within the largest component's uncombined size.
        let mut floor_mcs = usize::MAX;
        let mut max_len = 0usize;
        let mut rnti = None;
        let mut union_links = Vec::with_capacity(union.len());
        for &pid in pids {
            let st = &self.procs[&pid];
            floor_mcs = floor_mcs.min(st.proc.mcs);
            max_len = max_len.max(st.proc.tb.payload.len());
            rnti = Some(st.rnti);
            for &ue in st.proc.nack_set() {
                let acc = st.proc.accumulated_sinr_linear(ue).unwrap_or(0.0);
                let predicted = acc + links[&ue];
                union_links.push(LinkQuality::from_db(
                    ue,
                    10.0 * predicted.log10(),
                    SinrMode::Unicast,
                ));
            }
        }
        if union_links.len() != union.len() {
            return Err(Error::invalid(
                "combination union inconsistent with component misses",
            ));
        }
        let sel = select_mcs(
            &union_links,
            &self.cfg.mcs_table,
            &self.curve,
            self.cfg.target_bler,
            0.0,
        )?;
        let mcs = sel.index.max(floor_mcs);
        let frame = self.ledger.frame();
        let prbs = prbs_needed(
            max_len as u64 * 8,
            mcs,
            frame,
            &self.cfg.mcs_table,
            self.kind,
        )?;
        let alloc = match self
            .ledger
            .allocate(sf, prbs, self.kind, rnti.expect("non-empty plan"), m)
        {
            Ok(a) => a,
            Err(Error::PrbShortage { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        let dci_tbs: Vec<DciTb> = pids
            .iter()
            .map(|&pid| DciTb {
                process: pid,
                tb: self.procs[&pid].proc.tb.id,
                new_data: false,
            })
            .collect();
        self.ledger.emit_dci(&alloc, dci_tbs)?;
        self.verify_combination(pids)?;
        self.events.push(TraceEvent::Alloc {
            sf,
            group,
            alloc: alloc.id,
            kind: self.kind,
            m,
            prbs,
            units: prbs as u64 * PRB_UNIT,
            ue: None,
        });
        let share = prbs as u64 * PRB_UNIT / m as u64;
        for (idx, &pid) in pids.iter().enumerate() {
            let charge = idx == 0 || self.cfg.ic_count_all_components;
            self.send_round(pid, alloc.id, share, charge, sf)?;
        }
        Ok(true)
    }

    /// Confirms the XOR of the plan is decodable: every component comes back
    /// byte-exact from the coded block plus the other components.
    fn verify_combination(&self, pids: &[u64]) -> Result<()> {
        let blocks: Vec<TransportBlock> = pids
            .iter()
            .map(|pid| self.procs[pid].proc.tb.clone())
            .collect();
        let coded = xor_encode(&blocks.iter().collect::<Vec<_>>())?;
        for (i, want) in blocks.iter().enumerate() {
            let side: Vec<&TransportBlock> = blocks
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| b)
                .collect();
            let got = xor_decode(&coded, &side)?;
            if got != *want {
                return Err(Error::invalid(format!(
                    "combined block failed to decode component {}",
                    want.id
                )));
            }
        }
        Ok(())
    }

    /// Phase 4: strict-FIFO initial transmissions.
    fn dispatch_initials(&mut self, sf: u64) -> Result<()> {
        while let Some((&seq, &pid)) = self.pending_initial.first_key_value() {
            let (prbs, rnti, ue, group, tb_id, earliest) = {
                let st = &self.procs[&pid];
                (
                    st.proc.prbs,
                    st.rnti,
                    st.ue,
                    st.proc.group,
                    st.proc.tb.id,
                    st.earliest_sf,
                )
            };
            if earliest > sf || !self.ledger.frame().allows(self.kind, sf) {
                return Ok(());
            }
            let alloc = match self.ledger.allocate(sf, prbs, self.kind, rnti, 1) {
                Ok(a) => a,
                Err(Error::PrbShortage { .. }) => return Ok(()),
                Err(e) => return Err(e),
            };
            if self.kind != ChannelKind::Pmch {
                self.ledger.emit_dci(
                    &alloc,
                    vec![DciTb {
                        process: pid,
                        tb: tb_id,
                        new_data: true,
                    }],
                )?;
            }
            self.events.push(TraceEvent::Alloc {
                sf,
                group,
                alloc: alloc.id,
                kind: self.kind,
                m: 1,
                prbs,
                units: prbs as u64 * PRB_UNIT,
                ue,
            });
            self.send_round(pid, alloc.id, prbs as u64 * PRB_UNIT, true, sf)?;
            self.pending_initial.remove(&seq);
        }
        Ok(())
    }

    /// Transmits one round of a process, records the trace row, tracks
    /// per-member packet completion, and schedules feedback.
    fn send_round(
        &mut self,
        pid: u64,
        alloc: u64,
        units: u64,
        charge: bool,
        sf: u64,
    ) -> Result<()> {
        let seed = self.cfg.seed;
        let (group, packet, tb_id, mcs, feasible, before) = {
            let st = &self.procs[&pid];
            (
                st.proc.group,
                st.proc.packet,
                st.proc.tb.id,
                st.proc.mcs,
                st.feasible,
                st.proc.nack_set().clone(),
            )
        };
        let outcome = {
            let links = &self.group_links[&group];
            let st = self.procs.get_mut(&pid).expect("known process");
            st.proc.transmit_round(
                links,
                self.max_retx,
                &self.cfg.mcs_table,
                &self.curve,
                charge,
                |ue, round| {
                    rng::unit_draw(
                        seed,
                        &[DOMAIN_DECODE, group as u64, tb_id, ue as u64, round as u64],
                    )
                },
            )?
        };
        let newly: Vec<UeId> = before.difference(&outcome.nacks).copied().collect();
        self.events.push(TraceEvent::TxRound {
            sf,
            group,
            packet,
            process: pid,
            alloc,
            round: outcome.round,
            mcs,
            feasible,
            units,
            nacks: outcome.nacks.len() as u32,
            newly: newly.len() as u32,
        });
        for ue in newly {
            let key = (group, packet, ue);
            let left = self
                .remaining_tbs
                .get_mut(&key)
                .expect("decoding member was registered at arrival");
            *left -= 1;
            if *left == 0 {
                self.remaining_tbs.remove(&key);
                self.events.push(TraceEvent::UeDone {
                    sf,
                    group,
                    packet,
                    ue,
                });
            }
        }
        if self.kind != ChannelKind::Pmch {
            self.feedback_due
                .entry(sf + self.cfg.feedback_delay_sf)
                .or_default()
                .push(pid);
        }
        Ok(())
    }
}
