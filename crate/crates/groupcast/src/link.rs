//! Link budget: path loss, SINR, block error rate, and MCS selection.
//!
//! Propagation follows a rural-macro line-of-sight dual-slope power law with
//! an 880 m breakpoint at 800 MHz; distances clamp to a 35 m minimum. The
//! interference model is full load: in unicast mode every cell except the
//! serving one transmits at full power on every PRB, while in MBSFN mode all
//! cells transmit the same waveform and their powers add as signal with no
//! interference term. A fixed diversity offset models the 2x2 transmit
//! diversity entry of the system parameters.

use crate::error::{Error, Result};
use crate::geometry::{CellGrid, CellId, UeDrop, UeId};

/// Thermal noise density at room temperature.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
/// One PRB spans 12 subcarriers of 15 kHz.
pub const PRB_BANDWIDTH_HZ: f64 = 180e3;

/// Average rooftop height used by the propagation constants, in m.
const BUILDING_HEIGHT_M: f64 = 5.0;
/// Base-station antenna height, in m.
const BS_HEIGHT_M: f64 = 35.0;
/// UE antenna height, in m.
const UE_HEIGHT_M: f64 = 1.5;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distance floor below which path loss stops shrinking, in m.
pub const DEFAULT_MIN_DISTANCE_M: f64 = 35.0;

/// Rural-macro LOS path loss in dB at `distance_m` for `carrier_ghz`.
///
/// Below the breakpoint the loss grows with slope ~20 dB/decade plus small
/// height-dependent terms; beyond it the slope steepens to 40 dB/decade:
///
/// ```text
/// pl1(d) = 20 log10(40 pi d f / 3) + a log10(d) - b + c d
/// pl(d)  = d <= d_bp ? pl1(d) : pl1(d_bp) + 40 log10(d / d_bp)
/// ```
///
/// with `a = min(0.03 h^1.72, 10)`, `b = min(0.044 h^1.72, 14.77)`,
/// `c = 0.002 log10(h)`, `h = 5 m`, and `d_bp = 2 pi h_bs h_ue f / c0`.
pub fn path_loss_db(distance_m: f64, carrier_ghz: f64, min_distance_m: f64) -> Result<f64> {
    if !(carrier_ghz.is_finite() && carrier_ghz > 0.0) {
        return Err(Error::invalid(format!(
            "carrier frequency must be positive, got {carrier_ghz} GHz"
        )));
    }
    if !(distance_m.is_finite() && distance_m >= 0.0) {
        return Err(Error::invalid(format!(
            "distance must be non-negative, got {distance_m}"
        )));
    }
    if !(min_distance_m.is_finite() && min_distance_m > 0.0) {
        return Err(Error::invalid(format!(
            "minimum distance must be positive, got {min_distance_m}"
        )));
    }
    let d = distance_m.max(min_distance_m);
    let a = (0.03 * BUILDING_HEIGHT_M.powf(1.72)).min(10.0);
    let b = (0.044 * BUILDING_HEIGHT_M.powf(1.72)).min(14.77);
    let c = 0.002 * BUILDING_HEIGHT_M.log10();
    let d_bp = 2.0 * std::f64::consts::PI * BS_HEIGHT_M * UE_HEIGHT_M * (carrier_ghz * 1e9)
        / SPEED_OF_LIGHT;
    let pl1 = |x: f64| {
        20.0 * (40.0 * std::f64::consts::PI * x * carrier_ghz / 3.0).log10() + a * x.log10() - b
            + c * x
    };
    Ok(if d <= d_bp {
        pl1(d)
    } else {
        pl1(d_bp) + 40.0 * (d / d_bp).log10()
    })
}

/// Received power in dBm from transmit power, antenna gain, loss, shadowing.
pub fn rx_power_dbm(tx_dbm: f64, antenna_gain_dbi: f64, path_loss_db: f64, shadow_db: f64) -> f64 {
    tx_dbm + antenna_gain_dbi - path_loss_db + shadow_db
}

/// How the serving set combines at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinrMode {
    /// One serving cell, every other cell interferes at full load.
    Unicast,
    /// All serving cells add coherently, nothing interferes.
    Mbsfn,
}

/// Static per-UE link state for one mode.
#[derive(Debug, Clone, Copy)]
pub struct LinkQuality {
    pub ue: UeId,
    pub sinr_db: f64,
    pub sinr_linear: f64,
    pub mode: SinrMode,
}

impl LinkQuality {
    /// Builds a link from its dB value, keeping both scales consistent.
    pub fn from_db(ue: UeId, sinr_db: f64, mode: SinrMode) -> Self {
        LinkQuality {
            ue,
            sinr_db,
            sinr_linear: 10f64.powf(sinr_db / 10.0),
            mode,
        }
    }
}

/// Radio constants needed to evaluate a link.
#[derive(Debug, Clone, Copy)]
pub struct RadioParams {
    pub tx_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub carrier_ghz: f64,
    pub min_distance_m: f64,
    /// Noise power over the occupied bandwidth, in dBm.
    pub noise_dbm: f64,
    /// Offset credited to 2x2 transmit diversity, in dB.
    pub diversity_gain_db: f64,
}

/// Noise power in dBm over `n_prb` PRBs with the given receiver noise figure.
pub fn noise_floor_dbm(n_prb: u32, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * (n_prb as f64 * PRB_BANDWIDTH_HZ).log10() + noise_figure_db
}

/// Wideband SINR of a UE against a serving set.
///
/// Unicast requires exactly one serving cell; MBSFN accepts any non-empty
/// set and usually gets the whole grid. The diversity offset is added to the
/// resulting SINR in dB, and the linear field is recomputed from the final
/// dB value so the two scales always agree.
pub fn sinr(
    ue: UeId,
    serving: &[CellId],
    grid: &CellGrid,
    drop: &UeDrop,
    params: &RadioParams,
    mode: SinrMode,
) -> Result<LinkQuality> {
    if serving.is_empty() {
        return Err(Error::invalid("serving set is empty"));
    }
    if mode == SinrMode::Unicast && serving.len() != 1 {
        return Err(Error::invalid(format!(
            "unicast needs exactly one serving cell, got {}",
            serving.len()
        )));
    }
    let n_cells = grid.cells().len();
    for &c in serving {
        if c >= n_cells {
            return Err(Error::invalid(format!("serving cell {c} out of range")));
        }
    }
    let (x, y) = drop.position(ue);
    let rx_mw = |cell: CellId| -> Result<f64> {
        let d = grid.distance_m(cell, x, y);
        let pl = path_loss_db(d, params.carrier_ghz, params.min_distance_m)?;
        let p = rx_power_dbm(
            params.tx_dbm,
            params.antenna_gain_dbi,
            pl,
            drop.shadow_db(ue, cell),
        );
        Ok(10f64.powf(p / 10.0))
    };
    let noise_mw = 10f64.powf(params.noise_dbm / 10.0);
    let (signal_mw, denom_mw) = match mode {
        SinrMode::Unicast => {
            let s = rx_mw(serving[0])?;
            let mut interf = 0.0;
            for cell in grid.cells() {
                if cell.id != serving[0] {
                    interf += rx_mw(cell.id)?;
                }
            }
            (s, interf + noise_mw)
        }
        SinrMode::Mbsfn => {
            let mut s = 0.0;
            for &c in serving {
                s += rx_mw(c)?;
            }
            (s, noise_mw)
        }
    };
    let sinr_db = 10.0 * (signal_mw / denom_mw).log10() + params.diversity_gain_db;
    Ok(LinkQuality::from_db(ue, sinr_db, mode))
}

// ============================================================================
// MCS table and block error rate
// ============================================================================

/// One modulation-and-coding option.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    /// Bits per modulation symbol: 2 (QPSK), 4 (16QAM), or 6 (64QAM).
    pub modulation_order: u32,
    /// Code rate numerator; the rate is kept rational so TB sizes are exact.
    pub rate_num: u32,
    /// Code rate denominator.
    pub rate_den: u32,
    /// SINR at which a single transmission hits 10% BLER, in dB.
    pub sinr_threshold_db: f64,
}

impl McsEntry {
    /// Information bits carried per resource element, times `rate_den`.
    fn bits_per_re_scaled(&self) -> u64 {
        self.modulation_order as u64 * self.rate_num as u64
    }
}

/// Ordered list of MCS options, most robust first.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    /// Validates and wraps a table: rates in (0, 1], known modulations, and
    /// strictly increasing spectral efficiency and threshold.
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("MCS table must not be empty"));
        }
        for (i, e) in entries.iter().enumerate() {
            if ![2, 4, 6].contains(&e.modulation_order) {
                return Err(Error::invalid(format!(
                    "MCS {i}: modulation order {} not in {{2, 4, 6}}",
                    e.modulation_order
                )));
            }
            if e.rate_den == 0 || e.rate_num == 0 || e.rate_num > e.rate_den {
                return Err(Error::invalid(format!(
                    "MCS {i}: code rate {}/{} not in (0, 1]",
                    e.rate_num, e.rate_den
                )));
            }
            if !e.sinr_threshold_db.is_finite() {
                return Err(Error::invalid(format!("MCS {i}: threshold must be finite")));
            }
        }
        for w in entries.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            // Compare a_mod*a_num/a_den < b_mod*b_num/b_den exactly.
            let lhs = a.bits_per_re_scaled() * b.rate_den as u64;
            let rhs = b.bits_per_re_scaled() * a.rate_den as u64;
            if lhs >= rhs {
                return Err(Error::invalid(
                    "MCS spectral efficiency must increase strictly with the index",
                ));
            }
            if a.sinr_threshold_db >= b.sinr_threshold_db {
                return Err(Error::invalid(
                    "MCS SINR threshold must increase strictly with the index",
                ));
            }
        }
        Ok(McsTable { entries })
    }

    /// Eight-entry default spanning QPSK 1/8 to 64QAM 3/4.
    pub fn lte_default() -> Self {
        let e = |m, n, d, t| McsEntry {
            modulation_order: m,
            rate_num: n,
            rate_den: d,
            sinr_threshold_db: t,
        };
        McsTable::new(vec![
            e(2, 1, 8, -6.5),
            e(2, 1, 4, -3.5),
            e(2, 1, 2, -0.5),
            e(2, 3, 4, 2.5),
            e(4, 1, 2, 5.5),
            e(4, 3, 4, 9.5),
            e(6, 2, 3, 14.0),
            e(6, 3, 4, 18.0),
        ])
        .expect("default table is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, mcs: usize) -> Result<&McsEntry> {
        self.entries.get(mcs).ok_or(Error::UnknownMcs(mcs))
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }
}

/// Shifted-logistic error model anchored to the table thresholds.
#[derive(Debug, Clone, Copy)]
pub struct BlerCurve {
    /// dB above the threshold at which BLER falls from 10% to 1%.
    pub anchor_drop_db: f64,
}

impl Default for BlerCurve {
    fn default() -> Self {
        BlerCurve {
            anchor_drop_db: 2.0,
        }
    }
}

impl BlerCurve {
    pub fn new(anchor_drop_db: f64) -> Result<Self> {
        if !(anchor_drop_db.is_finite() && anchor_drop_db > 0.0) {
            return Err(Error::invalid(format!(
                "anchor drop must be positive, got {anchor_drop_db}"
            )));
        }
        Ok(BlerCurve { anchor_drop_db })
    }
}

/// Single-transmission BLER of an MCS at the given effective SINR.
///
/// `bler = 1 / (1 + 9 * 11^((sinr - threshold) / drop))`, which equals 0.10
/// exactly at the threshold and 0.01 at `threshold + drop`, and decays
/// monotonically below 1e-6 well before +30 dB.
pub fn bler(table: &McsTable, mcs: usize, eff_sinr_db: f64, curve: &BlerCurve) -> Result<f64> {
    let entry = table.entry(mcs)?;
    let x = (eff_sinr_db - entry.sinr_threshold_db) / curve.anchor_drop_db;
    Ok(1.0 / (1.0 + 9.0 * 11f64.powf(x)))
}

/// Outcome of MCS selection for a link set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McsSelection {
    pub index: usize,
    /// False when even the most robust entry misses the BLER target; the
    /// caller keeps index 0 and counts the event instead of failing.
    pub feasible: bool,
}

/// Highest-rate MCS whose single-transmission BLER at the worst link stays
/// within `target_bler`.
///
/// `ignore_worst_fraction` optionally excludes that share of the weakest
/// links before taking the minimum (at least one link is always kept).
pub fn select_mcs(
    links: &[LinkQuality],
    table: &McsTable,
    curve: &BlerCurve,
    target_bler: f64,
    ignore_worst_fraction: f64,
) -> Result<McsSelection> {
    if links.is_empty() {
        return Err(Error::EmptyLinkSet);
    }
    if !(0.0..1.0).contains(&target_bler) || target_bler <= 0.0 {
        return Err(Error::invalid(format!(
            "target BLER must be in (0, 1), got {target_bler}"
        )));
    }
    if !(0.0..1.0).contains(&ignore_worst_fraction) {
        return Err(Error::invalid(format!(
            "ignore_worst_fraction must be in [0, 1), got {ignore_worst_fraction}"
        )));
    }
    let mut sinrs: Vec<f64> = links.iter().map(|l| l.sinr_db).collect();
    sinrs.sort_by(|a, b| a.partial_cmp(b).expect("finite SINR"));
    let skip = ((ignore_worst_fraction * sinrs.len() as f64).floor() as usize)
        .min(sinrs.len().saturating_sub(1));
    let governing = sinrs[skip];
    for idx in (0..table.len()).rev() {
        if bler(table, idx, governing, curve)? <= target_bler {
            return Ok(McsSelection {
                index: idx,
                feasible: true,
            });
        }
    }
    Ok(McsSelection {
        index: 0,
        feasible: false,
    })
}
