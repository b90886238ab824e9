//! Event trace: the complete, replayable record of one simulation run.
//!
//! Every metric is a pure function of the trace plus the configuration, so
//! a persisted trace can be re-read and the reports reproduced byte for
//! byte. Resource units are PRBs scaled by [`PRB_UNIT`] so that the share
//! of a grant carried by each coded component stays an exact integer.

use crate::error::{Error, Result};
use crate::frame::ChannelKind;
use crate::geometry::UeId;
use std::path::Path;

/// Scale factor turning PRBs into exactly divisible resource units
/// (divisible by every component count 1..=8).
pub const PRB_UNIT: u64 = 840;

/// One timestamped simulation event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    /// A packet entered the group's send queue; `tbs` is the number of
    /// transport blocks (HARQ processes) it will occupy.
    Arrival {
        sf: u64,
        group: u32,
        packet: u64,
        tbs: u32,
    },
    /// The scheduler granted PRBs on a channel. `m` counts the transport
    /// blocks sharing the grant; `ue` is set for unicast grants.
    Alloc {
        sf: u64,
        group: u32,
        alloc: u64,
        kind: ChannelKind,
        m: u32,
        prbs: u32,
        units: u64,
        ue: Option<UeId>,
    },
    /// One HARQ round of one process inside an allocation. `units` is the
    /// process's exact share of the grant, `nacks` the members still
    /// missing the block afterwards, `newly` how many decoded this round.
    TxRound {
        sf: u64,
        group: u32,
        packet: u64,
        process: u64,
        alloc: u64,
        round: u32,
        mcs: usize,
        feasible: bool,
        units: u64,
        nacks: u32,
        newly: u32,
    },
    /// A member finished decoding every transport block of a packet.
    UeDone { sf: u64, group: u32, packet: u64, ue: UeId },
}

impl TraceEvent {
    /// Subframe at which the event occurred.
    pub fn sf(&self) -> u64 {
        match *self {
            TraceEvent::Arrival { sf, .. }
            | TraceEvent::Alloc { sf, .. }
            | TraceEvent::TxRound { sf, .. }
            | TraceEvent::UeDone { sf, .. } => sf,
        }
    }

    /// Group the event belongs to.
    pub fn group(&self) -> u32 {
        match *self {
            TraceEvent::Arrival { group, .. }
            | TraceEvent::Alloc { group, .. }
            | TraceEvent::TxRound { group, .. }
            | TraceEvent::UeDone { group, .. } => group,
        }
    }
}

const HEADER: [&str; 17] = [
    "seq", "sf", "event", "group", "packet", "process", "alloc", "kind", "m", "round", "prbs",
    "units", "mcs", "feasible", "nacks", "newly", "ue",
];

fn event_record(seq: usize, ev: &TraceEvent) -> [String; 17] {
    let mut f: [String; 17] = Default::default();
    f[0] = seq.to_string();
    f[1] = ev.sf().to_string();
    f[3] = ev.group().to_string();
    match ev {
        TraceEvent::Arrival { packet, tbs, .. } => {
            f[2] = "arrival".into();
            f[4] = packet.to_string();
            f[8] = tbs.to_string();
        }
        TraceEvent::Alloc {
            alloc,
            kind,
            m,
            prbs,
            units,
            ue,
            ..
        } => {
            f[2] = "alloc".into();
            f[6] = alloc.to_string();
            f[7] = kind.as_str().into();
            f[8] = m.to_string();
            f[10] = prbs.to_string();
            f[11] = units.to_string();
            if let Some(ue) = ue {
                f[16] = ue.to_string();
            }
        }
        TraceEvent::TxRound {
            packet,
            process,
            alloc,
            round,
            mcs,
            feasible,
            units,
            nacks,
            newly,
            ..
        } => {
            f[2] = "tx".into();
            f[4] = packet.to_string();
            f[5] = process.to_string();
            f[6] = alloc.to_string();
            f[9] = round.to_string();
            f[11] = units.to_string();
            f[12] = mcs.to_string();
            f[13] = feasible.to_string();
            f[14] = nacks.to_string();
            f[15] = newly.to_string();
        }
        TraceEvent::UeDone { packet, ue, .. } => {
            f[2] = "done".into();
            f[4] = packet.to_string();
            f[16] = ue.to_string();
        }
    }
    f
}

/// Renders the trace as CSV text.
pub fn trace_to_csv_string(events: &[TraceEvent]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for (seq, ev) in events.iter().enumerate() {
        w.write_record(event_record(seq, ev)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Writes the trace as CSV to a file.
pub fn write_trace_csv(path: &Path, events: &[TraceEvent]) -> Result<()> {
    std::fs::write(path, trace_to_csv_string(events)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Row<'a> {
    line: usize,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::TraceParse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn cell(&self, idx: usize) -> &str {
        self.rec.get(idx).unwrap_or("")
    }

    fn num<T: std::str::FromStr>(&self, idx: usize) -> Result<T> {
        let v = self.cell(idx);
        v.parse().map_err(|_| {
            self.err(format!("column '{}': invalid value '{v}'", HEADER[idx]))
        })
    }

    fn boolean(&self, idx: usize) -> Result<bool> {
        match self.cell(idx) {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(self.err(format!("column '{}': invalid bool '{v}'", HEADER[idx]))),
        }
    }

    /// Asserts that exactly the listed columns (plus seq/sf/event/group)
    /// are populated for this event kind.
    fn check_shape(&self, used: &[usize]) -> Result<()> {
        for (idx, name) in HEADER.iter().enumerate().skip(4) {
            let filled = !self.cell(idx).is_empty();
            if filled != used.contains(&idx) {
                return Err(self.err(format!(
                    "column '{name}' must be {} for event '{}'",
                    if filled { "empty" } else { "set" },
                    self.cell(2)
                )));
            }
        }
        Ok(())
    }
}

/// Parses CSV text produced by [`trace_to_csv_string`].
pub fn trace_from_csv_str(text: &str) -> Result<Vec<TraceEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    {
        let header = reader.headers().map_err(|e| Error::TraceParse {
            line: 1,
            msg: e.to_string(),
        })?;
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::TraceParse {
                line: 1,
                msg: format!("unexpected header: {}", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }
    let mut events = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::TraceParse {
            line,
            msg: e.to_string(),
        })?;
        let row = Row { line, rec: &rec };
        let seq: usize = row.num(0)?;
        if seq != events.len() {
            return Err(row.err(format!(
                "sequence gap: expected {}, found {seq}",
                events.len()
            )));
        }
        let sf: u64 = row.num(1)?;
        let group: u32 = row.num(3)?;
        let ev = match row.cell(2) {
            "arrival" => {
                row.check_shape(&[4, 8])?;
                TraceEvent::Arrival {
                    sf,
                    group,
                    packet: row.num(4)?,
                    tbs: row.num(8)?,
                }
            }
            "alloc" => {
                let has_ue = !row.cell(16).is_empty();
                row.check_shape(if has_ue {
                    &[6, 7, 8, 10, 11, 16]
                } else {
                    &[6, 7, 8, 10, 11]
                })?;
                TraceEvent::Alloc {
                    sf,
                    group,
                    alloc: row.num(6)?,
                    kind: ChannelKind::parse(row.cell(7))
                        .map_err(|e| row.err(e.to_string()))?,
                    m: row.num(8)?,
                    prbs: row.num(10)?,
                    units: row.num(11)?,
                    ue: if has_ue { Some(row.num(16)?) } else { None },
                }
            }
            "tx" => {
                row.check_shape(&[4, 5, 6, 9, 11, 12, 13, 14, 15])?;
                TraceEvent::TxRound {
                    sf,
                    group,
                    packet: row.num(4)?,
                    process: row.num(5)?,
                    alloc: row.num(6)?,
                    round: row.num(9)?,
                    mcs: row.num(12)?,
                    feasible: row.boolean(13)?,
                    units: row.num(11)?,
                    nacks: row.num(14)?,
                    newly: row.num(15)?,
                }
            }
            "done" => {
                row.check_shape(&[4, 16])?;
                TraceEvent::UeDone {
                    sf,
                    group,
                    packet: row.num(4)?,
                    ue: row.num(16)?,
                }
            }
            other => return Err(row.err(format!("unknown event kind '{other}'"))),
        };
        events.push(ev);
    }
    Ok(events)
}

/// Reads a trace CSV file.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceEvent>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    trace_from_csv_str(&text)
}
