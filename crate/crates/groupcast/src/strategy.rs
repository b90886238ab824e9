//! Dissemination strategies, group sessions, and voice-like traffic.

use crate::error::{Error, Result};
use crate::geometry::{UeDrop, UeId};
use crate::rng::{self, DOMAIN_PAYLOAD};
use rand::RngCore;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

/// How group packets reach the members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StrategyKind {
    /// One PDSCH transmission per member, per-UE HARQ.
    UnicastPdsch,
    /// Single MBSFN transmission, fixed robust MCS, no feedback.
    Pmch,
    /// Single PDSCH transmission on a group identity, group HARQ.
    ScPtm,
    /// SC-PTM with XOR-combined retransmissions.
    ScPtmIc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::UnicastPdsch,
        StrategyKind::Pmch,
        StrategyKind::ScPtm,
        StrategyKind::ScPtmIc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::UnicastPdsch => "unicast-pdsch",
            StrategyKind::Pmch => "pmch",
            StrategyKind::ScPtm => "sc-ptm",
            StrategyKind::ScPtmIc => "sc-ptm-ic",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unicast-pdsch" => Ok(StrategyKind::UnicastPdsch),
            "pmch" => Ok(StrategyKind::Pmch),
            "sc-ptm" => Ok(StrategyKind::ScPtm),
            "sc-ptm-ic" => Ok(StrategyKind::ScPtmIc),
            other => Err(Error::UnknownStrategy(other.to_string())),
        }
    }
}

/// First group RNTI value; group `g` uses `GROUP_RNTI_BASE + g`.
pub const GROUP_RNTI_BASE: u32 = 0x100;

/// One communication group and its members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSession {
    pub id: u32,
    /// Shared identity the group decodes in SC-PTM modes; unique per cell.
    pub rnti: u32,
    pub serving_cell: usize,
    pub members: BTreeSet<UeId>,
}

/// Partitions a cell's UEs into equal-size groups, lowest UE ids first.
pub fn assign_groups(
    drop: &UeDrop,
    cell: usize,
    groups: u32,
    group_size: u32,
) -> Result<Vec<GroupSession>> {
    if group_size == 0 {
        return Err(Error::invalid("groups need at least one UE"));
    }
    let ues = drop.ues_in_cell(cell);
    let needed = groups as usize * group_size as usize;
    if ues.len() < needed {
        return Err(Error::invalid(format!(
            "cell {cell} has {} UEs but {groups} groups of {group_size} need {needed}",
            ues.len()
        )));
    }
    Ok((0..groups)
        .map(|g| GroupSession {
            id: g,
            rnti: GROUP_RNTI_BASE + g,
            serving_cell: cell,
            members: ues
                .iter()
                .skip(g as usize * group_size as usize)
                .take(group_size as usize)
                .copied()
                .collect(),
        })
        .collect())
}

/// One application packet addressed to a whole group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPacket {
    pub group: u32,
    /// Per-group packet index, starting at 0.
    pub packet: u64,
    pub arrival_sf: u64,
    pub payload: Vec<u8>,
}

/// Generates the periodic fixed-size traffic of one group session.
///
/// Packet `k` arrives at `group % period + k * period`; arrivals stop at
/// the horizon. Payload bytes come from a per-packet substream so content
/// is reproducible yet distinct.
pub fn gen_voice_traffic(
    seed: u64,
    session: &GroupSession,
    horizon_sf: u64,
    period_sf: u64,
    payload_bytes: usize,
) -> Result<Vec<GroupPacket>> {
    if period_sf == 0 {
        return Err(Error::invalid("traffic period must be positive"));
    }
    if payload_bytes == 0 {
        return Err(Error::invalid("traffic payload must not be empty"));
    }
    let group = session.id;
    let phase = group as u64 % period_sf;
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let arrival = phase + k * period_sf;
        if arrival >= horizon_sf {
            break;
        }
        let mut payload = vec![0u8; payload_bytes];
        rng::substream(seed, &[DOMAIN_PAYLOAD, group as u64, k]).fill_bytes(&mut payload);
        out.push(GroupPacket {
            group,
            packet: k,
            arrival_sf: arrival,
            payload,
        });
        k += 1;
    }
    Ok(out)
}
