//! Error type shared across the simulator.

use thiserror::Error;

/// Unified error for construction, scheduling, and I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid constructor argument or configuration value.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Config validation failed; every offending key is listed.
    #[error("invalid configuration keys: {}", .0.join(", "))]
    ConfigValidation(Vec<String>),

    /// Config file syntax error.
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    /// Key not recognized by the flat config schema.
    #[error("unknown config key: {0}")]
    UnknownKey(String),

    /// Bandwidth without a standard PRB mapping.
    #[error("unsupported bandwidth: {0} MHz")]
    UnsupportedBandwidth(f64),

    /// MCS index outside the configured table.
    #[error("unknown MCS index {0}")]
    UnknownMcs(usize),

    /// MCS selection over an empty link set.
    #[error("empty link set")]
    EmptyLinkSet,

    /// Payload cannot fit a single transport block at full bandwidth.
    #[error("payload of {payload_bits} bits exceeds the {max_bits}-bit full-bandwidth TB at MCS {mcs}")]
    PayloadExceedsBandwidth {
        payload_bits: u64,
        max_bits: u64,
        mcs: usize,
    },

    /// Not enough PRBs left in the requested subframe.
    #[error("PRB shortage in subframe {subframe}: need {needed}, have {available}")]
    PrbShortage {
        subframe: u64,
        needed: u32,
        available: u32,
    },

    /// Channel kind not allowed in the requested subframe.
    #[error("{kind} not allowed in subframe {subframe} (position {position} in frame)")]
    ChannelSubframeMismatch {
        kind: &'static str,
        subframe: u64,
        position: u64,
    },

    /// DCI carries the same transport block twice.
    #[error("duplicate TB id {0} in DCI")]
    DuplicateTbInDci(u64),

    /// Multi-TB DCI is reserved for index-coded allocations.
    #[error("multi-TB DCI ({m} TBs) on a non-coded allocation")]
    MultiTbNotCoded { m: usize },

    /// HARQ process started without targets.
    #[error("HARQ process needs at least one target UE")]
    EmptyTargets,

    /// Transmission attempted on a done or failed process.
    #[error("HARQ process {0} is terminal")]
    ProcessTerminal(u64),

    /// Reception matrix may only hold one group's processes.
    #[error("reception matrix mixes groups {0} and {1}")]
    MixedGroups(u64, u64),

    /// Index coding rejects rows with nothing to retransmit.
    #[error("reception matrix row for process {0} has an empty NACK set")]
    EmptyNackRow(u64),

    /// XOR combination of a TB with itself.
    #[error("duplicate component TB id {0}")]
    DuplicateComponent(u64),

    /// Side information does not line up with the coded TB.
    #[error("side information mismatch: {0}")]
    SideInfoMismatch(String),

    /// Exact partition search is limited to small instances.
    #[error("oracle limited to {limit} rows, got {got}")]
    OracleTooLarge { limit: usize, got: usize },

    /// Delivery report requested before every process finished.
    #[error("packet {0} still has active HARQ processes")]
    PacketNotTerminal(u64),

    /// Trace accounting does not balance.
    #[error("resource closure mismatch: {0}")]
    ClosureMismatch(String),

    /// Strategy name not one of the supported four.
    #[error("unknown strategy: {0} (expected unicast-pdsch|pmch|sc-ptm|sc-ptm-ic)")]
    UnknownStrategy(String),

    /// A sweep run failed; the key identifies which one.
    #[error("sweep run failed for strategy={strategy} group_size={group_size} seed={seed}: {source}")]
    SweepRunFailed {
        strategy: String,
        group_size: u32,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    /// Trace file cannot be interpreted.
    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    /// Underlying filesystem failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Shorthand for [`Error::InvalidInput`] with formatted text.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
