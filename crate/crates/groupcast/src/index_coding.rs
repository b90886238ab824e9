//! Index-coded retransmission planning.
//!
//! Given a reception matrix (pending blocks x missing UEs), blocks whose
//! missing-UE sets are pairwise disjoint can be retransmitted as a single
//! XOR combination: every targeted UE misses at most one component, holds
//! the rest as side information, and peels its missing block out of the
//! combination. This module is self-contained — it consumes a matrix and
//! produces combination plans, XOR payloads, and an exact minimum-plan
//! oracle for validating the greedy planner.

use crate::error::{Error, Result};
use crate::geometry::UeId;
use crate::harq::{ReceptionMatrix, TransportBlock};
use std::collections::{BTreeMap, BTreeSet};

/// Most distinct UEs a matrix may reference (rows become u128 bitmasks).
pub const MAX_DISTINCT_UES: usize = 128;
/// Largest row count the exact oracle accepts.
pub const ORACLE_MAX_ROWS: usize = 12;

/// Bitmask form of a matrix: one UE-set mask per row.
fn row_masks(matrix: &ReceptionMatrix) -> Result<Vec<u128>> {
    let mut ue_bits: BTreeMap<UeId, u32> = BTreeMap::new();
    for row in &matrix.rows {
        if row.nacks.is_empty() {
            return Err(Error::EmptyNackRow(row.process));
        }
        for &ue in &row.nacks {
            let next = ue_bits.len() as u32;
            ue_bits.entry(ue).or_insert(next);
        }
    }
    if ue_bits.len() > MAX_DISTINCT_UES {
        return Err(Error::invalid(format!(
            "matrix references {} distinct UEs, more than the supported {MAX_DISTINCT_UES}",
            ue_bits.len()
        )));
    }
    let mut seen = BTreeSet::new();
    let mut masks = Vec::with_capacity(matrix.rows.len());
    for row in &matrix.rows {
        if !seen.insert(row.process) {
            return Err(Error::DuplicateComponent(row.process));
        }
        let mut m = 0u128;
        for &ue in &row.nacks {
            m |= 1u128 << ue_bits[&ue];
        }
        masks.push(m);
    }
    Ok(masks)
}

/// Pairwise conflicts between matrix rows.
///
/// Two rows conflict when some UE misses both blocks; conflicting rows can
/// never share a combination.
#[derive(Debug, Clone)]
pub struct ConflictGraph {
    adj: Vec<u128>,
}

impl ConflictGraph {
    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// True when rows `i` and `j` share a missing UE.
    pub fn conflicts(&self, i: usize, j: usize) -> bool {
        self.adj[i] >> j & 1 == 1
    }

    /// Number of conflicts row `i` participates in.
    pub fn degree(&self, i: usize) -> u32 {
        self.adj[i].count_ones()
    }
}

/// Builds the conflict graph of a reception matrix.
pub fn build_conflict_graph(matrix: &ReceptionMatrix) -> Result<ConflictGraph> {
    let masks = row_masks(matrix)?;
    let n = masks.len();
    if n > MAX_DISTINCT_UES {
        return Err(Error::invalid(format!(
            "matrix has {n} rows, more than the supported {MAX_DISTINCT_UES}"
        )));
    }
    let mut adj = vec![0u128; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if masks[i] & masks[j] != 0 {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
    }
    Ok(ConflictGraph { adj })
}

/// One planned retransmission: a set of combinable rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinePlan {
    /// Indices into the matrix rows, ascending (oldest component first).
    pub rows: Vec<usize>,
    /// Union of the components' missing UEs.
    pub union_nacks: BTreeSet<UeId>,
}

impl CombinePlan {
    /// Number of combined blocks.
    pub fn m(&self) -> usize {
        self.rows.len()
    }
}

/// Plans retransmission combinations by first-fit over rows, oldest first.
///
/// Every row lands in exactly one plan; each plan's rows have pairwise
/// disjoint missing-UE sets and at most `max_m` components. First-fit keeps
/// older blocks at the front of the schedule, so head-of-line blocks are
/// never starved by newer combination opportunities.
pub fn plan_combinations(matrix: &ReceptionMatrix, max_m: u32) -> Result<Vec<CombinePlan>> {
    if max_m == 0 {
        return Err(Error::invalid("a plan must admit at least one component"));
    }
    let masks = row_masks(matrix)?;
    let mut plans: Vec<CombinePlan> = Vec::new();
    let mut plan_masks: Vec<u128> = Vec::new();
    for (idx, &mask) in masks.iter().enumerate() {
        let slot = plans
            .iter()
            .zip(&plan_masks)
            .position(|(p, &pm)| p.rows.len() < max_m as usize && pm & mask == 0);
        match slot {
            Some(s) => {
                plans[s].rows.push(idx);
                plan_masks[s] |= mask;
                plans[s]
                    .union_nacks
                    .extend(matrix.rows[idx].nacks.iter().copied());
            }
            None => {
                plans.push(CombinePlan {
                    rows: vec![idx],
                    union_nacks: matrix.rows[idx].nacks.clone(),
                });
                plan_masks.push(mask);
            }
        }
    }
    Ok(plans)
}

/// Exact minimum number of plans covering the matrix, for testing planners.
///
/// Subset dynamic program over row sets: O(3^n), so rows are capped at
/// [`ORACLE_MAX_ROWS`].
pub fn oracle_min_partition(matrix: &ReceptionMatrix, max_m: u32) -> Result<usize> {
    if max_m == 0 {
        return Err(Error::invalid("a plan must admit at least one component"));
    }
    let n = matrix.rows.len();
    if n > ORACLE_MAX_ROWS {
        return Err(Error::OracleTooLarge {
            limit: ORACLE_MAX_ROWS,
            got: n,
        });
    }
    let masks = row_masks(matrix)?;
    if n == 0 {
        return Ok(0);
    }
    let full = (1usize << n) - 1;
    // union[s]: UEs covered by rows in s; disjoint[s]: rows pairwise disjoint.
    let mut union = vec![0u128; full + 1];
    let mut disjoint = vec![true; full + 1];
    for s in 1..=full {
        let b = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        union[s] = union[rest] | masks[b];
        disjoint[s] = disjoint[rest] && union[rest] & masks[b] == 0;
    }
    let valid =
        |s: usize| disjoint[s] && (s.count_ones() as usize) <= max_m as usize;
    let mut dp = vec![usize::MAX; full + 1];
    dp[0] = 0;
    for s in 1..=full {
        let low = 1usize << s.trailing_zeros();
        // Enumerate submasks of s that contain the lowest row, so each
        // partition is built in one canonical order.
        let mut t = s;
        while t > 0 {
            if t & low != 0 && valid(t) && dp[s ^ t] != usize::MAX {
                dp[s] = dp[s].min(dp[s ^ t] + 1);
            }
            t = (t - 1) & s;
        }
    }
    Ok(dp[full])
}

/// XOR combination of transport blocks plus the metadata to peel it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedTb {
    pub group: u32,
    /// `(block id, payload length)` per component, in plan order.
    pub components: Vec<(u64, usize)>,
    /// XOR of the payloads, zero-padded to the longest component.
    pub bytes: Vec<u8>,
}

impl CodedTb {
    /// Bytes on the air: the longest component's length.
    pub fn payload_len(&self) -> usize {
        self.bytes.len()
    }
}

/// XORs blocks together, zero-padding shorter payloads.
pub fn xor_encode(blocks: &[&TransportBlock]) -> Result<CodedTb> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::invalid("cannot encode an empty combination"))?;
    let mut seen = BTreeSet::new();
    let mut len = 0usize;
    for b in blocks {
        if b.group != first.group {
            return Err(Error::MixedGroups(first.group as u64, b.group as u64));
        }
        if b.payload.is_empty() {
            return Err(Error::invalid(format!("block {} has an empty payload", b.id)));
        }
        if !seen.insert(b.id) {
            return Err(Error::DuplicateComponent(b.id));
        }
        len = len.max(b.payload.len());
    }
    let mut bytes = vec![0u8; len];
    for b in blocks {
        for (dst, src) in bytes.iter_mut().zip(&b.payload) {
            *dst ^= src;
        }
    }
    Ok(CodedTb {
        group: first.group,
        components: blocks.iter().map(|b| (b.id, b.payload.len())).collect(),
        bytes,
    })
}

/// Recovers the one component missing from `side`.
///
/// `side` must hold every component except exactly one, with matching ids,
/// lengths, and group; the missing block is the XOR of the coded bytes with
/// all side payloads, truncated to its recorded length.
pub fn xor_decode(coded: &CodedTb, side: &[&TransportBlock]) -> Result<TransportBlock> {
    let mut want: BTreeMap<u64, usize> = BTreeMap::new();
    for &(id, len) in &coded.components {
        if want.insert(id, len).is_some() {
            return Err(Error::DuplicateComponent(id));
        }
    }
    let mut have = BTreeSet::new();
    for b in side {
        let len = *want.get(&b.id).ok_or_else(|| {
            Error::SideInfoMismatch(format!("block {} is not a component", b.id))
        })?;
        if !have.insert(b.id) {
            return Err(Error::SideInfoMismatch(format!(
                "block {} supplied twice",
                b.id
            )));
        }
        if b.payload.len() != len {
            return Err(Error::SideInfoMismatch(format!(
                "block {} is {} bytes, expected {len}",
                b.id,
                b.payload.len()
            )));
        }
        if b.group != coded.group {
            return Err(Error::MixedGroups(coded.group as u64, b.group as u64));
        }
    }
    if have.len() + 1 != coded.components.len() {
        return Err(Error::SideInfoMismatch(format!(
            "side information covers {} of {} components, expected all but one",
            have.len(),
            coded.components.len()
        )));
    }
    let (missing_id, missing_len) = coded
        .components
        .iter()
        .copied()
        .find(|(id, _)| !have.contains(id))
        .expect("exactly one component is missing");
    let mut bytes = coded.bytes.clone();
    for b in side {
        for (dst, src) in bytes.iter_mut().zip(&b.payload) {
            *dst ^= src;
        }
    }
    // Beyond the recovered block, every component cancels out.
    if bytes[missing_len..].iter().any(|&b| b != 0) {
        return Err(Error::SideInfoMismatch(
            "side payloads are inconsistent with the combination".into(),
        ));
    }
    bytes.truncate(missing_len);
    Ok(TransportBlock {
        id: missing_id,
        group: coded.group,
        payload: bytes,
    })
}
