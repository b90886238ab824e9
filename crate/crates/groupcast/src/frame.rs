//! Subframe resource accounting: PRB budget, TB sizing, allocations, DCIs.
//!
//! A radio frame is 10 subframes of 1 ms. Subframe positions listed in
//! `mbsfn_subframes` carry PMCH only; every other position carries the
//! PDSCH family (unicast and SC-PTM). PMCH symbols are all data, PDSCH
//! loses the leading PDCCH symbols. TB sizes use exact rational code rates
//! so resource counts round-trip without float error.

use crate::error::{Error, Result};
use crate::link::McsTable;
use std::collections::BTreeSet;

/// Physical channel carried by an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChannelKind {
    /// Per-UE PDSCH addressed by C-RNTI.
    PdschUnicast,
    /// Shared PDSCH addressed by a group RNTI.
    ScPtm,
    /// Multicast channel in MBSFN subframes, no feedback.
    Pmch,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::PdschUnicast => "pdsch",
            ChannelKind::ScPtm => "sc-ptm",
            ChannelKind::Pmch => "pmch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pdsch" => Ok(ChannelKind::PdschUnicast),
            "sc-ptm" => Ok(ChannelKind::ScPtm),
            "pmch" => Ok(ChannelKind::Pmch),
            other => Err(Error::invalid(format!("unknown channel kind {other}"))),
        }
    }

    fn is_pmch(&self) -> bool {
        matches!(self, ChannelKind::Pmch)
    }
}

/// Identity an allocation is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rnti {
    /// Per-UE identity for unicast PDSCH.
    Cell(u32),
    /// Shared group identity for SC-PTM.
    Group(u32),
    /// MBMS identity for PMCH.
    Mbms(u32),
}

impl Rnti {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Rnti::Cell(_) => "c",
            Rnti::Group(_) => "g",
            Rnti::Mbms(_) => "m",
        }
    }

    pub fn value(&self) -> u32 {
        match *self {
            Rnti::Cell(v) | Rnti::Group(v) | Rnti::Mbms(v) => v,
        }
    }
}

/// Subframe positions PMCH may legally occupy in an FDD frame.
pub const FDD_MBSFN_POSITIONS: [u64; 6] = [1, 2, 3, 6, 7, 8];
/// Subframes per radio frame.
pub const SUBFRAMES_PER_FRAME: u64 = 10;

/// Maps a standard bandwidth to its PRB count.
pub fn derive_total_prb(bandwidth_mhz: f64) -> Result<u32> {
    // Tenths of a MHz distinguish 1.4 from rounding noise.
    let tenths = (bandwidth_mhz * 10.0).round();
    if !bandwidth_mhz.is_finite() || (tenths - bandwidth_mhz * 10.0).abs() > 1e-6 {
        return Err(Error::UnsupportedBandwidth(bandwidth_mhz));
    }
    match tenths as i64 {
        14 => Ok(6),
        30 => Ok(15),
        50 => Ok(25),
        100 => Ok(50),
        150 => Ok(75),
        200 => Ok(100),
        _ => Err(Error::UnsupportedBandwidth(bandwidth_mhz)),
    }
}

/// Static frame-level dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub total_prb: u32,
    pub pdcch_symbols: u32,
    pub symbols_per_subframe: u32,
    mbsfn_subframes: BTreeSet<u64>,
}

impl FrameConfig {
    /// Standard-constrained constructor: PMCH only in FDD-legal positions.
    pub fn new(
        bandwidth_mhz: f64,
        pdcch_symbols: u32,
        mbsfn_subframes: &BTreeSet<u64>,
    ) -> Result<Self> {
        for &sf in mbsfn_subframes {
            if !FDD_MBSFN_POSITIONS.contains(&sf) {
                return Err(Error::invalid(format!(
                    "subframe position {sf} cannot carry PMCH in an FDD frame \
                     (legal positions: 1,2,3,6,7,8)"
                )));
            }
        }
        Self::unchecked(bandwidth_mhz, pdcch_symbols, mbsfn_subframes.clone())
    }

    /// Unrestricted constructor for the all-subframes PMCH configuration
    /// used by the capacity comparison; positions may be any of 0..9.
    pub fn with_unrestricted_pmch(
        bandwidth_mhz: f64,
        pdcch_symbols: u32,
        mbsfn_subframes: &BTreeSet<u64>,
    ) -> Result<Self> {
        for &sf in mbsfn_subframes {
            if sf >= SUBFRAMES_PER_FRAME {
                return Err(Error::invalid(format!(
                    "subframe position {sf} outside the 10-subframe frame"
                )));
            }
        }
        Self::unchecked(bandwidth_mhz, pdcch_symbols, mbsfn_subframes.clone())
    }

    fn unchecked(
        bandwidth_mhz: f64,
        pdcch_symbols: u32,
        mbsfn_subframes: BTreeSet<u64>,
    ) -> Result<Self> {
        if !(1..=3).contains(&pdcch_symbols) {
            return Err(Error::invalid(format!(
                "PDCCH symbols must be 1..=3, got {pdcch_symbols}"
            )));
        }
        Ok(FrameConfig {
            total_prb: derive_total_prb(bandwidth_mhz)?,
            pdcch_symbols,
            symbols_per_subframe: 14,
            mbsfn_subframes,
        })
    }

    /// True when the absolute subframe index is an MBSFN position.
    pub fn is_mbsfn_subframe(&self, subframe: u64) -> bool {
        self.mbsfn_subframes
            .contains(&(subframe % SUBFRAMES_PER_FRAME))
    }

    /// True when `kind` may be scheduled in the subframe.
    pub fn allows(&self, kind: ChannelKind, subframe: u64) -> bool {
        kind.is_pmch() == self.is_mbsfn_subframe(subframe)
    }

    pub fn mbsfn_positions(&self) -> &BTreeSet<u64> {
        &self.mbsfn_subframes
    }

    /// Subframes per frame a channel kind may use.
    pub fn eligible_subframes_per_frame(&self, kind: ChannelKind) -> u64 {
        let pmch = self.mbsfn_subframes.len() as u64;
        if kind.is_pmch() {
            pmch
        } else {
            SUBFRAMES_PER_FRAME - pmch
        }
    }

    /// Data resource elements per PRB for a channel kind.
    pub fn data_re_per_prb(&self, kind: ChannelKind) -> u32 {
        let symbols = if kind.is_pmch() {
            self.symbols_per_subframe
        } else {
            self.symbols_per_subframe - self.pdcch_symbols
        };
        12 * symbols
    }
}

/// Transport block size in bits for `n_prb` PRBs at the given MCS.
///
/// `floor(n_prb * data_re * mod_order * rate)`, computed on integers.
pub fn tbs_bits(
    mcs: usize,
    n_prb: u32,
    cfg: &FrameConfig,
    table: &McsTable,
    kind: ChannelKind,
) -> Result<u64> {
    if n_prb == 0 || n_prb > cfg.total_prb {
        return Err(Error::invalid(format!(
            "PRB count {n_prb} outside 1..={}",
            cfg.total_prb
        )));
    }
    let e = table.entry(mcs)?;
    let re = cfg.data_re_per_prb(kind) as u64;
    Ok(n_prb as u64 * re * e.modulation_order as u64 * e.rate_num as u64 / e.rate_den as u64)
}

/// Smallest PRB count whose TB holds `payload_bits`.
///
/// Errors with [`Error::PayloadExceedsBandwidth`] when even the full carrier
/// cannot hold the payload in one TB; the caller then segments the payload.
pub fn prbs_needed(
    payload_bits: u64,
    mcs: usize,
    cfg: &FrameConfig,
    table: &McsTable,
    kind: ChannelKind,
) -> Result<u32> {
    if payload_bits == 0 {
        return Err(Error::invalid("payload must not be empty"));
    }
    let e = table.entry(mcs)?;
    let re = cfg.data_re_per_prb(kind) as u64;
    let per_prb_scaled = re * e.modulation_order as u64 * e.rate_num as u64;
    // floor(n * per_prb_scaled / den) >= payload  <=>
    // n * per_prb_scaled >= payload * den, both sides exact integers.
    let target = payload_bits * e.rate_den as u64;
    let n = target.div_ceil(per_prb_scaled);
    if n > cfg.total_prb as u64 {
        return Err(Error::PayloadExceedsBandwidth {
            payload_bits,
            max_bits: tbs_bits(mcs, cfg.total_prb, cfg, table, kind)?,
            mcs,
        });
    }
    Ok(n as u32)
}

/// One scheduled grant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub id: u64,
    pub subframe: u64,
    pub prbs: u32,
    pub kind: ChannelKind,
    pub rnti: Rnti,
    /// Number of transport blocks combined into this grant; 1 for plain
    /// transmissions, 2..=max_m for index-coded retransmissions.
    pub coded_components: u32,
}

/// Transport-block entry inside a DCI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DciTb {
    pub process: u64,
    pub tb: u64,
    pub new_data: bool,
}

/// Downlink control message describing one allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DciRecord {
    pub allocation: u64,
    pub rnti: Rnti,
    pub tbs: Vec<DciTb>,
}

/// Per-subframe PRB bookkeeping for one cell.
#[derive(Debug, Clone)]
pub struct ResourceLedger {
    cfg: FrameConfig,
    used: std::collections::BTreeMap<u64, u32>,
    next_alloc: u64,
    allocations: u64,
    dcis: u64,
    total_allocated_prbs: u64,
}

impl ResourceLedger {
    pub fn new(cfg: FrameConfig) -> Self {
        ResourceLedger {
            cfg,
            used: Default::default(),
            next_alloc: 0,
            allocations: 0,
            dcis: 0,
            total_allocated_prbs: 0,
        }
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.cfg
    }

    /// PRBs still free in the subframe.
    pub fn remaining(&self, subframe: u64) -> u32 {
        self.cfg.total_prb - self.used.get(&subframe).copied().unwrap_or(0)
    }

    /// Reserves PRBs in a subframe for a channel kind.
    pub fn allocate(
        &mut self,
        subframe: u64,
        prbs: u32,
        kind: ChannelKind,
        rnti: Rnti,
        coded_components: u32,
    ) -> Result<Allocation> {
        if prbs == 0 {
            return Err(Error::invalid("allocation must cover at least one PRB"));
        }
        if !self.cfg.allows(kind, subframe) {
            return Err(Error::ChannelSubframeMismatch {
                kind: kind.as_str(),
                subframe,
                position: subframe % SUBFRAMES_PER_FRAME,
            });
        }
        let available = self.remaining(subframe);
        if prbs > available {
            return Err(Error::PrbShortage {
                subframe,
                needed: prbs,
                available,
            });
        }
        let entry = self.used.entry(subframe).or_insert(0);
        *entry += prbs;
        debug_assert!(*entry <= self.cfg.total_prb);
        let id = self.next_alloc;
        self.next_alloc += 1;
        self.allocations += 1;
        self.total_allocated_prbs += prbs as u64;
        Ok(Allocation {
            id,
            subframe,
            prbs,
            kind,
            rnti,
            coded_components,
        })
    }

    /// Emits the control message for an allocation.
    ///
    /// Multi-TB DCIs are reserved for index-coded grants, and every TB id
    /// may appear once.
    pub fn emit_dci(&mut self, alloc: &Allocation, tbs: Vec<DciTb>) -> Result<DciRecord> {
        if tbs.is_empty() {
            return Err(Error::invalid("DCI must reference at least one TB"));
        }
        if tbs.len() >= 2 && alloc.coded_components < 2 {
            return Err(Error::MultiTbNotCoded { m: tbs.len() });
        }
        if tbs.len() != alloc.coded_components as usize {
            return Err(Error::invalid(format!(
                "DCI lists {} TBs but the allocation combines {}",
                tbs.len(),
                alloc.coded_components
            )));
        }
        let mut seen = BTreeSet::new();
        for t in &tbs {
            if !seen.insert(t.tb) {
                return Err(Error::DuplicateTbInDci(t.tb));
            }
        }
        self.dcis += 1;
        Ok(DciRecord {
            allocation: alloc.id,
            rnti: alloc.rnti,
            tbs,
        })
    }

    /// (allocations, DCIs) issued so far; equal when every grant carries a
    /// control message (PMCH grants are announced on the MCCH instead).
    pub fn control_counts(&self) -> (u64, u64) {
        (self.allocations, self.dcis)
    }

    /// Sum of PRBs ever allocated.
    pub fn total_allocated_prbs(&self) -> u64 {
        self.total_allocated_prbs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::McsTable;

    fn cfg_10mhz() -> FrameConfig {
        FrameConfig::new(10.0, 2, &BTreeSet::from([1, 2])).unwrap()
    }

    #[test]
    fn bandwidth_mapping_is_the_standard_one() {
        for (mhz, prb) in [(1.4, 6), (3.0, 15), (5.0, 25), (10.0, 50), (15.0, 75), (20.0, 100)] {
            assert_eq!(derive_total_prb(mhz).unwrap(), prb, "{mhz} MHz");
        }
        assert!(matches!(
            derive_total_prb(7.0),
            Err(Error::UnsupportedBandwidth(_))
        ));
        assert!(derive_total_prb(f64::NAN).is_err());
    }

    #[test]
    fn frame_config_enforces_fdd_pmch_positions() {
        assert!(FrameConfig::new(10.0, 2, &BTreeSet::from([0])).is_err());
        assert!(FrameConfig::new(10.0, 2, &BTreeSet::from([5])).is_err());
        assert!(FrameConfig::new(10.0, 2, &BTreeSet::from([9])).is_err());
        assert!(FrameConfig::new(10.0, 2, &BTreeSet::from([1, 2, 3, 6, 7, 8])).is_ok());
        // The unrestricted constructor admits the all-PMCH frame.
        let all: BTreeSet<u64> = (0..10).collect();
        assert!(FrameConfig::new(10.0, 2, &all).is_err());
        let cfg = FrameConfig::with_unrestricted_pmch(10.0, 2, &all).unwrap();
        assert_eq!(cfg.eligible_subframes_per_frame(ChannelKind::Pmch), 10);
        assert!(FrameConfig::with_unrestricted_pmch(10.0, 2, &BTreeSet::from([10])).is_err());
        assert!(FrameConfig::new(10.0, 0, &BTreeSet::new()).is_err());
        assert!(FrameConfig::new(10.0, 4, &BTreeSet::new()).is_err());
    }

    #[test]
    fn tbs_matches_worked_example() {
        // QPSK rate 1/2 over 12 data symbols and 1 PRB: 12*12*2/2 = 144.
        let cfg = cfg_10mhz();
        let t = McsTable::lte_default();
        assert_eq!(tbs_bits(2, 1, &cfg, &t, ChannelKind::ScPtm).unwrap(), 144);
        // PMCH keeps all 14 symbols: 12*14*2/2 = 168.
        assert_eq!(tbs_bits(2, 1, &cfg, &t, ChannelKind::Pmch).unwrap(), 168);
        assert!(tbs_bits(2, 0, &cfg, &t, ChannelKind::ScPtm).is_err());
        assert!(tbs_bits(2, 51, &cfg, &t, ChannelKind::ScPtm).is_err());
        assert!(tbs_bits(99, 1, &cfg, &t, ChannelKind::ScPtm).is_err());
    }

    #[test]
    fn tbs_is_exact_for_thirds() {
        // 64QAM 2/3 over one PMCH PRB: 168 * 6 * 2 / 3 = 672 exactly.
        let cfg = cfg_10mhz();
        let t = McsTable::lte_default();
        assert_eq!(tbs_bits(6, 1, &cfg, &t, ChannelKind::Pmch).unwrap(), 672);
    }

    /// Linear scan reference for the closed-form PRB count.
    fn prbs_needed_scan(
        payload_bits: u64,
        mcs: usize,
        cfg: &FrameConfig,
        table: &McsTable,
        kind: ChannelKind,
    ) -> Option<u32> {
        (1..=cfg.total_prb).find(|&n| tbs_bits(mcs, n, cfg, table, kind).unwrap() >= payload_bits)
    }

    #[test]
    fn prbs_needed_matches_linear_scan() {
        let cfg = cfg_10mhz();
        let t = McsTable::lte_default();
        for kind in [ChannelKind::ScPtm, ChannelKind::Pmch, ChannelKind::PdschUnicast] {
            for mcs in 0..t.len() {
                for payload in [1u64, 36, 144, 145, 320, 1000, 5000, 10000] {
                    let want = prbs_needed_scan(payload, mcs, &cfg, &t, kind);
                    let got = prbs_needed(payload, mcs, &cfg, &t, kind).ok();
                    assert_eq!(got, want, "mcs={mcs} payload={payload} kind={kind:?}");
                }
            }
        }
    }

    #[test]
    fn prbs_needed_round_trips_with_tbs() {
        let cfg = cfg_10mhz();
        let t = McsTable::lte_default();
        for mcs in 0..t.len() {
            for n in 1..=cfg.total_prb {
                let bits = tbs_bits(mcs, n, &cfg, &t, ChannelKind::ScPtm).unwrap();
                if bits == 0 {
                    continue;
                }
                let back = prbs_needed(bits, mcs, &cfg, &t, ChannelKind::ScPtm).unwrap();
                assert_eq!(back, n, "mcs={mcs} n={n}");
            }
        }
    }

    #[test]
    fn prbs_needed_flags_oversized_payload() {
        let cfg = cfg_10mhz();
        let t = McsTable::lte_default();
        let max = tbs_bits(0, 50, &cfg, &t, ChannelKind::ScPtm).unwrap();
        assert!(prbs_needed(max, 0, &cfg, &t, ChannelKind::ScPtm).is_ok());
        assert!(matches!(
            prbs_needed(max + 1, 0, &cfg, &t, ChannelKind::ScPtm),
            Err(Error::PayloadExceedsBandwidth { .. })
        ));
        assert!(prbs_needed(0, 0, &cfg, &t, ChannelKind::ScPtm).is_err());
    }

    #[test]
    fn ledger_conserves_prbs_and_reports_shortage() {
        let mut ledger = ResourceLedger::new(cfg_10mhz());
        assert_eq!(ledger.remaining(0), 50);
        ledger
            .allocate(0, 30, ChannelKind::ScPtm, Rnti::Group(1), 1)
            .unwrap();
        assert_eq!(ledger.remaining(0), 20);
        ledger
            .allocate(0, 20, ChannelKind::PdschUnicast, Rnti::Cell(7), 1)
            .unwrap();
        assert_eq!(ledger.remaining(0), 0);
        let err = ledger
            .allocate(0, 1, ChannelKind::ScPtm, Rnti::Group(1), 1)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::PrbShortage { subframe: 0, needed: 1, available: 0 }
        ));
        // Other subframes are untouched.
        assert_eq!(ledger.remaining(3), 50);
        assert_eq!(ledger.total_allocated_prbs(), 50);
        assert!(ledger
            .allocate(4, 0, ChannelKind::ScPtm, Rnti::Group(1), 1)
            .is_err());
    }

    #[test]
    fn ledger_enforces_channel_subframe_discipline() {
        let mut ledger = ResourceLedger::new(cfg_10mhz());
        // Subframe 11 is position 1, an MBSFN position under the 2/8 split.
        assert!(ledger
            .allocate(11, 5, ChannelKind::Pmch, Rnti::Mbms(0), 1)
            .is_ok());
        let err = ledger
            .allocate(10, 5, ChannelKind::Pmch, Rnti::Mbms(0), 1)
            .unwrap_err();
        assert!(matches!(err, Error::ChannelSubframeMismatch { position: 0, .. }));
        let err = ledger
            .allocate(12, 5, ChannelKind::ScPtm, Rnti::Group(1), 1)
            .unwrap_err();
        assert!(matches!(err, Error::ChannelSubframeMismatch { position: 2, .. }));
    }

    #[test]
    fn dci_rules_match_allocation_shape() {
        let mut ledger = ResourceLedger::new(cfg_10mhz());
        let plain = ledger
            .allocate(0, 5, ChannelKind::ScPtm, Rnti::Group(1), 1)
            .unwrap();
        let coded = ledger
            .allocate(0, 5, ChannelKind::ScPtm, Rnti::Group(1), 2)
            .unwrap();
        let tb = |process, tb| DciTb { process, tb, new_data: false };
        assert!(ledger.emit_dci(&plain, vec![tb(1, 10)]).is_ok());
        // Duplicate TB ids rejected.
        assert!(matches!(
            ledger.emit_dci(&coded, vec![tb(1, 10), tb(4, 10)]),
            Err(Error::DuplicateTbInDci(10))
        ));
        // Component count must match the grant.
        assert!(ledger.emit_dci(&coded, vec![tb(1, 10)]).is_err());
        assert!(ledger.emit_dci(&plain, vec![]).is_err());
        // Two TBs behind a plain grant is the reserved multi-TB misuse.
        assert!(matches!(
            ledger.emit_dci(&plain, vec![tb(1, 10), tb(4, 11)]),
            Err(Error::MultiTbNotCoded { m: 2 })
        ));
        let ok = ledger.emit_dci(&coded, vec![tb(1, 10), tb(4, 11)]).unwrap();
        assert_eq!(ok.tbs.len(), 2);
        let (allocs, dcis) = ledger.control_counts();
        assert_eq!(allocs, 2);
        assert_eq!(dcis, 2);
    }
}
