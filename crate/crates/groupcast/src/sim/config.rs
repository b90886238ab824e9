//! Simulation configuration: flat dotted keys, file parsing, validation.
//!
//! Every tunable is addressable as `section.key = value` in a plain text
//! file (`#` starts a comment) and through CLI overrides. [`SimConfig::dump`]
//! prints the effective configuration in a form that parses back to an
//! identical config.

use crate::error::{Error, Result};
use crate::frame::{derive_total_prb, FDD_MBSFN_POSITIONS, SUBFRAMES_PER_FRAME};
use crate::link::{McsEntry, McsTable};
use crate::strategy::StrategyKind;
use std::collections::BTreeSet;
use std::path::Path;

/// All tunables of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub strategy: StrategyKind,
    pub group_size: u32,
    pub groups: u32,
    /// Subframes simulated before measurement starts.
    pub warmup_sf: u64,
    /// Measurement window in subframes; packets arriving inside it count.
    pub measured_sf: u64,
    pub isd_m: f64,
    pub rings: u32,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub shadowing_sigma_db: f64,
    pub min_distance_m: f64,
    pub diversity_gain_db: f64,
    pub noise_figure_db: f64,
    /// When set, every link (unicast and MBSFN) is pinned to this SINR.
    pub frozen_sinr_db: Option<f64>,
    /// Fraction of weakest members ignored by group MCS selection.
    pub ignore_worst_fraction: f64,
    pub tx_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub pdcch_symbols: u32,
    pub mbsfn_subframes: BTreeSet<u64>,
    /// Give the active strategy's channel the whole frame (capacity
    /// comparisons): PMCH runs become all-PMCH, PDSCH runs all-PDSCH.
    pub exclusive_frame: bool,
    pub mcs_table: McsTable,
    pub target_bler: f64,
    pub anchor_drop_db: f64,
    pub max_retx: u32,
    pub feedback_delay_sf: u64,
    pub ic_max_m: u32,
    /// How long a lone pending retransmission may wait for a combining
    /// partner before being sent uncoded.
    pub ic_collect_window_sf: u64,
    /// Whether a coded round charges every component's retransmission
    /// budget (true) or only the oldest component's (false).
    pub ic_count_all_components: bool,
    pub payload_bytes: usize,
    pub period_sf: u64,
    pub pmch_mcs_index: usize,
    pub mcch_period_sf: u64,
    pub sweep_group_sizes: Vec<u32>,
    pub sweep_strategies: Vec<StrategyKind>,
    pub sweep_seeds: Vec<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            strategy: StrategyKind::ScPtm,
            group_size: 12,
            groups: 1,
            warmup_sf: 2000,
            measured_sf: 20000,
            isd_m: 1732.0,
            rings: 2,
            carrier_ghz: 0.8,
            bandwidth_mhz: 10.0,
            shadowing_sigma_db: 8.0,
            min_distance_m: 35.0,
            diversity_gain_db: 3.0,
            noise_figure_db: 7.0,
            frozen_sinr_db: None,
            ignore_worst_fraction: 0.0,
            tx_dbm: 46.0,
            antenna_gain_dbi: 15.0,
            pdcch_symbols: 2,
            mbsfn_subframes: BTreeSet::from([1, 2]),
            exclusive_frame: false,
            mcs_table: McsTable::lte_default(),
            target_bler: 0.01,
            anchor_drop_db: 6.0,
            max_retx: 3,
            feedback_delay_sf: 4,
            ic_max_m: 4,
            ic_collect_window_sf: 120,
            ic_count_all_components: true,
            payload_bytes: 40,
            period_sf: 20,
            pmch_mcs_index: 0,
            mcch_period_sf: 512,
            sweep_group_sizes: vec![2, 4, 8, 12, 16],
            sweep_strategies: StrategyKind::ALL.to_vec(),
            sweep_seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

// ---- value parsing helpers -------------------------------------------------

fn bad(key: &str, expected: &str, got: &str) -> Error {
    Error::invalid(format!("{key}: expected {expected}, got '{got}'"))
}

fn p_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| bad(key, "an unsigned integer", v))
}

fn p_u32(key: &str, v: &str) -> Result<u32> {
    v.parse().map_err(|_| bad(key, "an unsigned integer", v))
}

fn p_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, "an unsigned integer", v))
}

fn p_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| bad(key, "a number", v))
}

fn p_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, "true or false", v)),
    }
}

fn p_list<T>(key: &str, v: &str, one: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|item| one(key, item.trim())).collect()
}

fn p_mcs_table(key: &str, v: &str) -> Result<McsTable> {
    let mut entries = Vec::new();
    for item in v.split(',') {
        let item = item.trim();
        let parts: Vec<&str> = item.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(key, "entries of the form mod:num/den:threshold", item));
        }
        let (num, den) = parts[1]
            .split_once('/')
            .ok_or_else(|| bad(key, "a rate of the form num/den", parts[1]))?;
        entries.push(McsEntry {
            modulation_order: p_u32(key, parts[0])?,
            rate_num: p_u32(key, num)?,
            rate_den: p_u32(key, den)?,
            sinr_threshold_db: p_f64(key, parts[2])?,
        });
    }
    McsTable::new(entries)
}

fn mcs_table_string(table: &McsTable) -> String {
    table
        .entries()
        .iter()
        .map(|e| {
            format!(
                "{}:{}/{}:{}",
                e.modulation_order, e.rate_num, e.rate_den, e.sinr_threshold_db
            )
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Splits config text into `(line number, key, value)` triples.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or(Error::ConfigParse {
            line,
            msg: format!("expected 'key = value', got '{stripped}'"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::ConfigParse {
                line,
                msg: "empty key".into(),
            });
        }
        out.push((line, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl SimConfig {
    /// Sets one field by its dotted key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = p_u64(key, v)?,
            "strategy" => self.strategy = v.parse()?,
            "group_size" => self.group_size = p_u32(key, v)?,
            "groups" => self.groups = p_u32(key, v)?,
            "sim.warmup_sf" => self.warmup_sf = p_u64(key, v)?,
            "sim.measured_sf" => self.measured_sf = p_u64(key, v)?,
            "grid.isd_m" => self.isd_m = p_f64(key, v)?,
            "grid.rings" => self.rings = p_u32(key, v)?,
            "channel.carrier_ghz" => self.carrier_ghz = p_f64(key, v)?,
            "channel.bandwidth_mhz" => self.bandwidth_mhz = p_f64(key, v)?,
            "channel.shadowing_sigma_db" => self.shadowing_sigma_db = p_f64(key, v)?,
            "channel.min_distance_m" => self.min_distance_m = p_f64(key, v)?,
            "channel.diversity_gain_db" => self.diversity_gain_db = p_f64(key, v)?,
            "channel.noise_figure_db" => self.noise_figure_db = p_f64(key, v)?,
            "channel.frozen_sinr_db" => {
                self.frozen_sinr_db = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(p_f64(key, v)?)
                }
            }
            "channel.ignore_worst_fraction" => self.ignore_worst_fraction = p_f64(key, v)?,
            "power.tx_dbm" => self.tx_dbm = p_f64(key, v)?,
            "power.antenna_gain_dbi" => self.antenna_gain_dbi = p_f64(key, v)?,
            "frame.pdcch_symbols" => self.pdcch_symbols = p_u32(key, v)?,
            "frame.mbsfn_subframes" => {
                self.mbsfn_subframes = p_list(key, v, p_u64)?.into_iter().collect()
            }
            "frame.exclusive" => self.exclusive_frame = p_bool(key, v)?,
            "mcs.table" => self.mcs_table = p_mcs_table(key, v)?,
            "mcs.target_bler" => self.target_bler = p_f64(key, v)?,
            "bler.anchor_drop_db" => self.anchor_drop_db = p_f64(key, v)?,
            "harq.max_retx" => self.max_retx = p_u32(key, v)?,
            "harq.feedback_delay_sf" => self.feedback_delay_sf = p_u64(key, v)?,
            "ic.max_m" => self.ic_max_m = p_u32(key, v)?,
            "ic.collect_window_sf" => self.ic_collect_window_sf = p_u64(key, v)?,
            "ic.count_all_components" => self.ic_count_all_components = p_bool(key, v)?,
            "traffic.payload_bytes" => self.payload_bytes = p_usize(key, v)?,
            "traffic.period_sf" => self.period_sf = p_u64(key, v)?,
            "pmch.mcs_index" => self.pmch_mcs_index = p_usize(key, v)?,
            "pmch.mcch_period_sf" => self.mcch_period_sf = p_u64(key, v)?,
            "sweep.group_sizes" => self.sweep_group_sizes = p_list(key, v, p_u32)?,
            "sweep.strategies" => {
                self.sweep_strategies = p_list(key, v, |_, s| s.parse::<StrategyKind>())?
            }
            "sweep.seeds" => self.sweep_seeds = p_list(key, v, p_u64)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file's text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, key, value) in parse_kv_lines(text)? {
            self.apply(&key, &value).map_err(|e| match e {
                Error::UnknownKey(k) => Error::ConfigParse {
                    line,
                    msg: format!("unknown config key: {k}"),
                },
                other => Error::ConfigParse {
                    line,
                    msg: other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    /// Defaults overridden by the given file.
    pub fn load(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = SimConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// The effective configuration, one `key = value` per line, sorted.
    pub fn dump(&self) -> String {
        let frozen = match self.frozen_sinr_db {
            Some(v) => v.to_string(),
            None => "none".to_string(),
        };
        let mut rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("strategy", self.strategy.to_string()),
            ("group_size", self.group_size.to_string()),
            ("groups", self.groups.to_string()),
            ("sim.warmup_sf", self.warmup_sf.to_string()),
            ("sim.measured_sf", self.measured_sf.to_string()),
            ("grid.isd_m", self.isd_m.to_string()),
            ("grid.rings", self.rings.to_string()),
            ("channel.carrier_ghz", self.carrier_ghz.to_string()),
            ("channel.bandwidth_mhz", self.bandwidth_mhz.to_string()),
            ("channel.shadowing_sigma_db", self.shadowing_sigma_db.to_string()),
            ("channel.min_distance_m", self.min_distance_m.to_string()),
            ("channel.diversity_gain_db", self.diversity_gain_db.to_string()),
            ("channel.noise_figure_db", self.noise_figure_db.to_string()),
            ("channel.frozen_sinr_db", frozen),
            ("channel.ignore_worst_fraction", self.ignore_worst_fraction.to_string()),
            ("power.tx_dbm", self.tx_dbm.to_string()),
            ("power.antenna_gain_dbi", self.antenna_gain_dbi.to_string()),
            ("frame.pdcch_symbols", self.pdcch_symbols.to_string()),
            ("frame.mbsfn_subframes", join(self.mbsfn_subframes.iter())),
            ("frame.exclusive", self.exclusive_frame.to_string()),
            ("mcs.table", mcs_table_string(&self.mcs_table)),
            ("mcs.target_bler", self.target_bler.to_string()),
            ("bler.anchor_drop_db", self.anchor_drop_db.to_string()),
            ("harq.max_retx", self.max_retx.to_string()),
            ("harq.feedback_delay_sf", self.feedback_delay_sf.to_string()),
            ("ic.max_m", self.ic_max_m.to_string()),
            ("ic.collect_window_sf", self.ic_collect_window_sf.to_string()),
            ("ic.count_all_components", self.ic_count_all_components.to_string()),
            ("traffic.payload_bytes", self.payload_bytes.to_string()),
            ("traffic.period_sf", self.period_sf.to_string()),
            ("pmch.mcs_index", self.pmch_mcs_index.to_string()),
            ("pmch.mcch_period_sf", self.mcch_period_sf.to_string()),
            ("sweep.group_sizes", join(self.sweep_group_sizes.iter())),
            ("sweep.strategies", join(self.sweep_strategies.iter())),
            ("sweep.seeds", join(self.sweep_seeds.iter())),
        ];
        rows.sort_by_key(|(k, _)| *k);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Checks every invariant, collecting all offending keys.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let mut fail = |key: &str, why: &str| bad.push(format!("{key} ({why})"));

        if self.group_size == 0 {
            fail("group_size", "must be at least 1");
        }
        if self.measured_sf == 0 {
            fail("sim.measured_sf", "must be at least 1");
        }
        if !(self.isd_m.is_finite() && self.isd_m > 0.0) {
            fail("grid.isd_m", "must be positive and finite");
        }
        if self.rings > 8 {
            fail("grid.rings", "must be at most 8");
        }
        if !(self.carrier_ghz.is_finite() && self.carrier_ghz > 0.0) {
            fail("channel.carrier_ghz", "must be positive and finite");
        }
        if derive_total_prb(self.bandwidth_mhz).is_err() {
            fail(
                "channel.bandwidth_mhz",
                "must be one of 1.4, 3, 5, 10, 15, 20",
            );
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            fail("channel.shadowing_sigma_db", "must be non-negative and finite");
        }
        if !(self.min_distance_m.is_finite() && self.min_distance_m > 0.0) {
            fail("channel.min_distance_m", "must be positive and finite");
        }
        if !self.diversity_gain_db.is_finite() {
            fail("channel.diversity_gain_db", "must be finite");
        }
        if !self.noise_figure_db.is_finite() {
            fail("channel.noise_figure_db", "must be finite");
        }
        if matches!(self.frozen_sinr_db, Some(v) if !v.is_finite()) {
            fail("channel.frozen_sinr_db", "must be finite");
        }
        if !(self.ignore_worst_fraction.is_finite()
            && (0.0..1.0).contains(&self.ignore_worst_fraction))
        {
            fail("channel.ignore_worst_fraction", "must be in [0, 1)");
        }
        if !self.tx_dbm.is_finite() {
            fail("power.tx_dbm", "must be finite");
        }
        if !self.antenna_gain_dbi.is_finite() {
            fail("power.antenna_gain_dbi", "must be finite");
        }
        if !(1..=3).contains(&self.pdcch_symbols) {
            fail("frame.pdcch_symbols", "must be 1, 2, or 3");
        }
        if self.mbsfn_subframes.iter().any(|&sf| sf >= SUBFRAMES_PER_FRAME) {
            fail("frame.mbsfn_subframes", "positions must be 0..=9");
        } else if !self.exclusive_frame
            && self
                .mbsfn_subframes
                .iter()
                .any(|sf| !FDD_MBSFN_POSITIONS.contains(sf))
        {
            fail(
                "frame.mbsfn_subframes",
                "positions must be within 1,2,3,6,7,8 unless frame.exclusive",
            );
        }
        if !(self.target_bler.is_finite() && self.target_bler > 0.0 && self.target_bler < 1.0) {
            fail("mcs.target_bler", "must be in (0, 1)");
        }
        if !(self.anchor_drop_db.is_finite() && self.anchor_drop_db > 0.0) {
            fail("bler.anchor_drop_db", "must be positive and finite");
        }
        if self.max_retx > 16 {
            fail("harq.max_retx", "must be at most 16");
        }
        if self.feedback_delay_sf == 0 || self.feedback_delay_sf > 1000 {
            fail("harq.feedback_delay_sf", "must be in 1..=1000");
        }
        if !(1..=8).contains(&self.ic_max_m) {
            fail("ic.max_m", "must be in 1..=8");
        }
        if self.ic_collect_window_sf > 100_000 {
            fail("ic.collect_window_sf", "must be at most 100000");
        }
        if self.payload_bytes == 0 {
            fail("traffic.payload_bytes", "must be at least 1");
        }
        if self.period_sf == 0 {
            fail("traffic.period_sf", "must be at least 1");
        }
        if self.pmch_mcs_index >= self.mcs_table.len() {
            fail("pmch.mcs_index", "must index an MCS table entry");
        }
        if self.mcch_period_sf == 0 {
            fail("pmch.mcch_period_sf", "must be at least 1");
        }
        if self.strategy == StrategyKind::Pmch
            && !self.exclusive_frame
            && self.mbsfn_subframes.is_empty()
        {
            fail(
                "frame.mbsfn_subframes",
                "pmch strategy needs at least one MBSFN position (or frame.exclusive = true)",
            );
        }
        if self.sweep_group_sizes.is_empty() || self.sweep_group_sizes.contains(&0) {
            fail("sweep.group_sizes", "must be a non-empty list of sizes >= 1");
        }
        if self.sweep_strategies.is_empty() {
            fail("sweep.strategies", "must be a non-empty list");
        }
        if self.sweep_seeds.is_empty() {
            fail("sweep.seeds", "must be a non-empty list");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigValidation(bad))
        }
    }
}
