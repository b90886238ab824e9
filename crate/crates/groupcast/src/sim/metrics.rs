//! Run reports computed purely from a trace plus its configuration.
//!
//! Nothing here looks at simulator internals: every number is derived by
//! replaying the event trace, so a persisted `trace.csv` reproduces the
//! exact same `report.csv` and `delivery.csv`. The replay also audits the
//! trace — resource shares must balance every grant exactly and every
//! packet must have reached a terminal state — and fails loudly otherwise.

use crate::error::{Error, Result};
use crate::frame::ChannelKind;
use crate::sim::config::SimConfig;
use crate::sim::engine::{build_frame, channel_kind, effective_mbsfn};
use crate::sim::trace::{TraceEvent, PRB_UNIT};
use crate::strategy::StrategyKind;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Terminal accounting for one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketOutcome {
    pub group: u32,
    pub packet: u64,
    pub arrival_sf: u64,
    /// Transport blocks (HARQ processes) the packet occupied.
    pub tbs: u32,
    /// Group members, i.e. the delivery target count.
    pub members: u32,
    /// Members that decoded every block of the packet.
    pub delivered: u32,
    /// Subframe the last member finished; `None` unless fully delivered.
    pub done_sf: Option<u64>,
    /// Resource units charged to the packet (each grant split exactly
    /// among the blocks sharing it).
    pub units: u64,
    /// Transmission rounds across the packet's processes.
    pub tx_rounds: u64,
    /// Rounds beyond each process's first.
    pub retx_rounds: u64,
    /// True when any round was sent under an infeasible MCS selection.
    pub infeasible: bool,
}

/// Aggregate report over the measured window of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Packets that arrived inside the measured window.
    pub measured_packets: u64,
    /// Resource units the strategy's channel offers per traffic period.
    pub usable_units_per_period: u64,
    /// Mean resource units per measured packet.
    pub mean_units_per_packet: Option<f64>,
    /// Groups-per-cell capacity: budget over per-packet cost, floored.
    pub group_capacity: Option<u64>,
    /// Same ratio before flooring.
    pub group_capacity_exact: Option<f64>,
    /// Payload bits of fully delivered measured packets per second.
    pub unique_goodput_bps: f64,
    /// Payload bits summed over every delivered (packet, member) pair.
    pub aggregate_goodput_bps: f64,
    /// Fraction of (packet, member) pairs never delivered.
    pub residual_undelivered: f64,
    /// Arrival-to-last-member delay over fully delivered packets.
    pub mean_delay_sf: Option<f64>,
    pub p95_delay_sf: Option<u64>,
    pub max_delay_sf: Option<u64>,
    /// ACK/NACK messages the uplink would carry (zero for PMCH).
    pub feedback_messages: u64,
    /// Grants inside the window.
    pub allocations: u64,
    /// Grants carrying two or more combined blocks.
    pub coded_allocs: u64,
    /// Members spared a duplicate reception by combined grants.
    pub redundant_receptions_avoided: u64,
    /// Measured packets that saw an infeasible MCS selection.
    pub infeasible_packets: u64,
    /// Resource units granted inside the window.
    pub total_units: u64,
    /// Units reserved for the multicast channel inside the window.
    pub mbsfn_reserved_units: u64,
    /// Units actually granted on the multicast channel inside the window.
    pub pmch_used_units: u64,
}

struct ProcReplay {
    packet: u64,
    rounds: u64,
    charged: u64,
    last_nacks: u32,
}

struct PacketReplay {
    group: u32,
    arrival_sf: u64,
    tbs: u32,
    procs: BTreeSet<u64>,
    done_ues: BTreeSet<u64>,
    last_done_sf: u64,
    units: u64,
    tx_rounds: u64,
    retx_rounds: u64,
    infeasible: bool,
}

/// Replays a trace into per-packet outcomes, auditing grant-share closure
/// and terminality along the way. Covers every packet in the trace.
fn replay(cfg: &SimConfig, events: &[TraceEvent]) -> Result<BTreeMap<(u32, u64), PacketOutcome>> {
    let eff_max_retx = match cfg.strategy {
        StrategyKind::Pmch => 0,
        _ => cfg.max_retx,
    };
    let mut packets: BTreeMap<(u32, u64), PacketReplay> = BTreeMap::new();
    let mut procs: BTreeMap<u64, ProcReplay> = BTreeMap::new();
    // Per grant: (own units, sum of shares, component process ids).
    let mut allocs: BTreeMap<u64, (u64, u64, Vec<u64>)> = BTreeMap::new();
    for ev in events {
        match *ev {
            TraceEvent::Arrival {
                sf,
                group,
                packet,
                tbs,
            } => {
                packets.insert(
                    (group, packet),
                    PacketReplay {
                        group,
                        arrival_sf: sf,
                        tbs,
                        procs: BTreeSet::new(),
                        done_ues: BTreeSet::new(),
                        last_done_sf: 0,
                        units: 0,
                        tx_rounds: 0,
                        retx_rounds: 0,
                        infeasible: false,
                    },
                );
            }
            TraceEvent::Alloc { alloc, units, .. } => {
                if allocs.insert(alloc, (units, 0, Vec::new())).is_some() {
                    return Err(Error::ClosureMismatch(format!(
                        "grant {alloc} recorded twice"
                    )));
                }
            }
            TraceEvent::TxRound {
                group,
                packet,
                process,
                alloc,
                mcs: _,
                feasible,
                units,
                nacks,
                ..
            } => {
                let slot = allocs.get_mut(&alloc).ok_or_else(|| {
                    Error::ClosureMismatch(format!(
                        "round of process {process} references unknown grant {alloc}"
                    ))
                })?;
                slot.1 += units;
                slot.2.push(process);
                let pk = packets.get_mut(&(group, packet)).ok_or_else(|| {
                    Error::ClosureMismatch(format!("round for unknown packet {packet}"))
                })?;
                pk.procs.insert(process);
                pk.units += units;
                pk.tx_rounds += 1;
                if !feasible {
                    pk.infeasible = true;
                }
                let pr = procs.entry(process).or_insert(ProcReplay {
                    packet,
                    rounds: 0,
                    charged: 0,
                    last_nacks: 0,
                });
                if pr.packet != packet {
                    return Err(Error::ClosureMismatch(format!(
                        "process {process} spans packets {} and {packet}",
                        pr.packet
                    )));
                }
                if pr.rounds > 0 {
                    pk.retx_rounds += 1;
                }
                pr.rounds += 1;
                pr.last_nacks = nacks;
            }
            TraceEvent::UeDone {
                sf,
                group,
                packet,
                ue,
            } => {
                let pk = packets.get_mut(&(group, packet)).ok_or_else(|| {
                    Error::ClosureMismatch(format!("delivery for unknown packet {packet}"))
                })?;
                if !pk.done_ues.insert(ue as u64) {
                    return Err(Error::ClosureMismatch(format!(
                        "member {ue} delivered twice for packet {packet}"
                    )));
                }
                pk.last_done_sf = pk.last_done_sf.max(sf);
            }
        }
    }
    // Post-pass: budget charging. A combined grant charges its first
    // (oldest) component always and the rest only when configured to.
    for (alloc, (own, shares, members)) in &allocs {
        if members.is_empty() {
            return Err(Error::ClosureMismatch(format!(
                "grant {alloc} carried no transmission"
            )));
        }
        if shares != own {
            return Err(Error::ClosureMismatch(format!(
                "grant {alloc} holds {own} units but its rounds share {shares}"
            )));
        }
        let first = *members.iter().min().expect("nonempty");
        for &pid in members {
            if pid == first || cfg.ic_count_all_components {
                procs.get_mut(&pid).expect("seen above").charged += 1;
            }
        }
    }
    for (pid, pr) in &procs {
        let done = pr.last_nacks == 0;
        let failed = !done && pr.charged > eff_max_retx as u64;
        if !done && !failed {
            return Err(Error::PacketNotTerminal(pr.packet));
        }
        let _ = pid;
    }
    let mut out = BTreeMap::new();
    for ((group, packet), pk) in packets {
        if pk.procs.len() != pk.tbs as usize {
            return Err(Error::PacketNotTerminal(packet));
        }
        let members = cfg.group_size;
        let delivered = pk.done_ues.len() as u32;
        if delivered > members {
            return Err(Error::ClosureMismatch(format!(
                "packet {packet} delivered to {delivered} of {members} members"
            )));
        }
        out.insert(
            (group, packet),
            PacketOutcome {
                group: pk.group,
                packet,
                arrival_sf: pk.arrival_sf,
                tbs: pk.tbs,
                members,
                delivered,
                done_sf: (delivered == members && members > 0).then_some(pk.last_done_sf),
                units: pk.units,
                tx_rounds: pk.tx_rounds,
                retx_rounds: pk.retx_rounds,
                infeasible: pk.infeasible,
            },
        );
    }
    Ok(out)
}

/// Per-packet outcomes for packets arriving in the measured window,
/// ordered by (group, packet).
pub fn delivery_rows(cfg: &SimConfig, events: &[TraceEvent]) -> Result<Vec<PacketOutcome>> {
    let lo = cfg.warmup_sf;
    let hi = cfg.warmup_sf + cfg.measured_sf;
    Ok(replay(cfg, events)?
        .into_values()
        .filter(|p| p.arrival_sf >= lo && p.arrival_sf < hi)
        .collect())
}

/// Computes the aggregate report for one run.
pub fn compute_metrics(cfg: &SimConfig, events: &[TraceEvent]) -> Result<MetricsReport> {
    let outcomes = replay(cfg, events)?;
    let kind = channel_kind(cfg.strategy);
    let frame = build_frame(cfg)?;
    let lo = cfg.warmup_sf;
    let hi = cfg.warmup_sf + cfg.measured_sf;
    let in_window = |sf: u64| sf >= lo && sf < hi;

    let usable_units_per_period = u64::from(frame.total_prb)
        * PRB_UNIT
        * frame.eligible_subframes_per_frame(kind)
        * cfg.period_sf
        / 10;

    let measured: Vec<&PacketOutcome> = outcomes
        .values()
        .filter(|p| in_window(p.arrival_sf))
        .collect();
    let measured_packets = measured.len() as u64;
    let packet_units: u64 = measured.iter().map(|p| p.units).sum();
    let mean_units_per_packet =
        (measured_packets > 0).then(|| packet_units as f64 / measured_packets as f64);
    let group_capacity_exact = mean_units_per_packet.map(|m| usable_units_per_period as f64 / m);
    let group_capacity = group_capacity_exact.map(|g| g.floor() as u64);

    let payload_bits = cfg.payload_bytes as f64 * 8.0;
    let seconds = cfg.measured_sf as f64 / 1000.0;
    let full: Vec<&&PacketOutcome> = measured.iter().filter(|p| p.done_sf.is_some()).collect();
    let delivered_pairs: u64 = measured.iter().map(|p| p.delivered as u64).sum();
    let target_pairs: u64 = measured.iter().map(|p| p.members as u64).sum();
    let unique_goodput_bps = if seconds > 0.0 {
        full.len() as f64 * payload_bits / seconds
    } else {
        0.0
    };
    let aggregate_goodput_bps = if seconds > 0.0 {
        delivered_pairs as f64 * payload_bits / seconds
    } else {
        0.0
    };
    let residual_undelivered = if target_pairs > 0 {
        1.0 - delivered_pairs as f64 / target_pairs as f64
    } else {
        0.0
    };

    let mut delays: Vec<u64> = full
        .iter()
        .map(|p| p.done_sf.expect("full") - p.arrival_sf)
        .collect();
    delays.sort_unstable();
    let mean_delay_sf =
        (!delays.is_empty()).then(|| delays.iter().sum::<u64>() as f64 / delays.len() as f64);
    let p95_delay_sf = (!delays.is_empty()).then(|| delays[(delays.len() - 1) * 95 / 100]);
    let max_delay_sf = delays.last().copied();

    let mut feedback_messages = 0u64;
    let mut allocations = 0u64;
    let mut coded_allocs = 0u64;
    let mut redundant_receptions_avoided = 0u64;
    let mut total_units = 0u64;
    let mut pmch_used_units = 0u64;
    // Union of still-missing members per grant, from its rounds' responder
    // counts (components of one grant have disjoint responder sets).
    let mut responders_by_alloc: BTreeMap<u64, u64> = BTreeMap::new();
    let mut coded_in_window: BTreeMap<u64, u64> = BTreeMap::new();
    for ev in events {
        match *ev {
            TraceEvent::Alloc {
                sf,
                kind,
                m,
                units,
                ..
            } if in_window(sf) => {
                allocations += 1;
                total_units += units;
                if kind == ChannelKind::Pmch {
                    pmch_used_units += units;
                }
                if m >= 2 {
                    coded_allocs += 1;
                    if let TraceEvent::Alloc { alloc, .. } = *ev {
                        coded_in_window.insert(alloc, 0);
                    }
                }
            }
            TraceEvent::TxRound {
                sf,
                alloc,
                nacks,
                newly,
                ..
            } => {
                if in_window(sf) && cfg.strategy != StrategyKind::Pmch {
                    feedback_messages += u64::from(nacks) + u64::from(newly);
                }
                *responders_by_alloc.entry(alloc).or_insert(0) +=
                    u64::from(nacks) + u64::from(newly);
            }
            _ => {}
        }
    }
    for (alloc, zero) in &coded_in_window {
        let _ = zero;
        let union = responders_by_alloc.get(alloc).copied().unwrap_or(0);
        redundant_receptions_avoided += u64::from(cfg.group_size).saturating_sub(union);
    }

    let reserved = effective_mbsfn(cfg);
    let mbsfn_reserved_sf = (lo..hi).filter(|sf| reserved.contains(&(sf % 10))).count() as u64;
    let mbsfn_reserved_units = mbsfn_reserved_sf * u64::from(frame.total_prb) * PRB_UNIT;

    let infeasible_packets = measured.iter().filter(|p| p.infeasible).count() as u64;

    Ok(MetricsReport {
        measured_packets,
        usable_units_per_period,
        mean_units_per_packet,
        group_capacity,
        group_capacity_exact,
        unique_goodput_bps,
        aggregate_goodput_bps,
        residual_undelivered,
        mean_delay_sf,
        p95_delay_sf,
        max_delay_sf,
        feedback_messages,
        allocations,
        coded_allocs,
        redundant_receptions_avoided,
        infeasible_packets,
        total_units,
        mbsfn_reserved_units,
        pmch_used_units,
    })
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "na".into(), |x| x.to_string())
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map_or_else(|| "na".into(), |x| x.to_string())
}

/// Renders the report as `metric,value` lines sorted by metric name.
pub fn report_to_csv_string(r: &MetricsReport) -> String {
    let rows: Vec<(&str, String)> = vec![
        ("aggregate_goodput_bps", r.aggregate_goodput_bps.to_string()),
        ("allocations", r.allocations.to_string()),
        ("coded_allocs", r.coded_allocs.to_string()),
        ("feedback_messages", r.feedback_messages.to_string()),
        ("group_capacity", fmt_opt_u64(r.group_capacity)),
        ("group_capacity_exact", fmt_opt_f64(r.group_capacity_exact)),
        ("infeasible_packets", r.infeasible_packets.to_string()),
        ("max_delay_sf", fmt_opt_u64(r.max_delay_sf)),
        ("mbsfn_reserved_units", r.mbsfn_reserved_units.to_string()),
        ("mean_delay_sf", fmt_opt_f64(r.mean_delay_sf)),
        (
            "mean_units_per_packet",
            fmt_opt_f64(r.mean_units_per_packet),
        ),
        ("measured_packets", r.measured_packets.to_string()),
        ("p95_delay_sf", fmt_opt_u64(r.p95_delay_sf)),
        ("pmch_used_units", r.pmch_used_units.to_string()),
        (
            "redundant_receptions_avoided",
            r.redundant_receptions_avoided.to_string(),
        ),
        (
            "residual_undelivered",
            r.residual_undelivered.to_string(),
        ),
        ("total_units", r.total_units.to_string()),
        ("unique_goodput_bps", r.unique_goodput_bps.to_string()),
        (
            "usable_units_per_period",
            r.usable_units_per_period.to_string(),
        ),
    ];
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        s.push_str(k);
        s.push(',');
        s.push_str(&v);
        s.push('\n');
    }
    s
}

/// Renders per-packet outcomes as CSV, one row per measured packet.
pub fn delivery_to_csv_string(rows: &[PacketOutcome]) -> String {
    let mut s = String::from(
        "group,packet,arrival_sf,tbs,members,delivered,done_sf,units,tx_rounds,retx_rounds,infeasible\n",
    );
    for p in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            p.group,
            p.packet,
            p.arrival_sf,
            p.tbs,
            p.members,
            p.delivered,
            p.done_sf.map_or_else(|| "na".into(), |v| v.to_string()),
            p.units,
            p.tx_rounds,
            p.retx_rounds,
            p.infeasible,
        ));
    }
    s
}

/// Writes `report.csv`.
pub fn write_report_csv(path: &Path, r: &MetricsReport) -> Result<()> {
    std::fs::write(path, report_to_csv_string(r)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `delivery.csv`.
pub fn write_delivery_csv(path: &Path, rows: &[PacketOutcome]) -> Result<()> {
    std::fs::write(path, delivery_to_csv_string(rows)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::engine::run;
    use crate::sim::trace::{trace_to_csv_string, trace_from_csv_str};

    fn frozen_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        for (k, v) in [
            ("sim.warmup_sf", "40"),
            ("sim.measured_sf", "400"),
            ("channel.frozen_sinr_db", "30"),
            ("group_size", "3"),
        ] {
            cfg.apply(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn frozen_run_reports_full_delivery_and_a_capacity() {
        let cfg = frozen_cfg();
        let out = run(&cfg).unwrap();
        let report = compute_metrics(&cfg, &out.events).unwrap();
        assert_eq!(report.measured_packets, 20);
        assert_eq!(report.residual_undelivered, 0.0);
        assert_eq!(report.infeasible_packets, 0);
        assert!(report.group_capacity.unwrap() >= 1);
        assert!(report.mean_delay_sf.unwrap() >= 0.0);
        assert!(report.max_delay_sf.unwrap() < 20);
        // 20 ms of a 10 MHz carrier with two reserved subframes per frame.
        assert_eq!(report.usable_units_per_period, 50 * 840 * 8 * 2);
        // Every member answers the single round of each in-window packet.
        assert_eq!(report.feedback_messages, 3 * 20);
    }

    #[test]
    fn reports_are_pure_functions_of_the_persisted_trace() {
        let cfg = frozen_cfg();
        let out = run(&cfg).unwrap();
        let direct = compute_metrics(&cfg, &out.events).unwrap();
        let csv = trace_to_csv_string(&out.events);
        let reread = trace_from_csv_str(&csv).unwrap();
        let replayed = compute_metrics(&cfg, &reread).unwrap();
        assert_eq!(direct, replayed);
        assert_eq!(
            delivery_rows(&cfg, &out.events).unwrap(),
            delivery_rows(&cfg, &reread).unwrap()
        );
    }

    #[test]
    fn delivery_rows_cover_only_the_measured_window() {
        let cfg = frozen_cfg();
        let out = run(&cfg).unwrap();
        let rows = delivery_rows(&cfg, &out.events).unwrap();
        assert_eq!(rows.len(), 20);
        assert!(rows
            .iter()
            .all(|p| p.arrival_sf >= 40 && p.arrival_sf < 440));
        assert!(rows.windows(2).all(|w| w[0].packet < w[1].packet));
        assert!(rows.iter().all(|p| p.done_sf.is_some() && p.delivered == 3));
    }

    #[test]
    fn broken_share_sums_are_rejected() {
        let cfg = frozen_cfg();
        let mut events = run(&cfg).unwrap().events;
        for ev in &mut events {
            if let TraceEvent::TxRound { units, .. } = ev {
                *units += 1;
                break;
            }
        }
        match compute_metrics(&cfg, &events) {
            Err(Error::ClosureMismatch(msg)) => assert!(msg.contains("units")),
            other => panic!("expected closure mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_traces_are_not_terminal() {
        let cfg = frozen_cfg();
        let mut events = run(&cfg).unwrap().events;
        // Drop the final round of the last packet: its process never ends.
        let last_tx = events
            .iter()
            .rposition(|e| matches!(e, TraceEvent::TxRound { .. }))
            .unwrap();
        let (dropped_group, dropped_packet, dropped_alloc) = match events[last_tx] {
            TraceEvent::TxRound {
                group,
                packet,
                alloc,
                ..
            } => (group, packet, alloc),
            _ => unreachable!(),
        };
        events.remove(last_tx);
        // Also drop the grant and delivery events of that round.
        events.retain(|e| {
            !matches!(e, TraceEvent::Alloc { alloc, .. } if *alloc == dropped_alloc)
                && !matches!(e, TraceEvent::UeDone { group, packet, .. }
                    if *group == dropped_group && *packet == dropped_packet)
        });
        match compute_metrics(&cfg, &events) {
            Err(Error::PacketNotTerminal(p)) => assert_eq!(p, dropped_packet),
            other => panic!("expected non-terminal packet, got {other:?}"),
        }
    }

    #[test]
    fn pmch_single_shot_runs_are_terminal_without_feedback() {
        let mut cfg = SimConfig::default();
        for (k, v) in [
            ("sim.warmup_sf", "0"),
            ("sim.measured_sf", "600"),
            ("strategy", "pmch"),
            ("group_size", "4"),
        ] {
            cfg.apply(k, v).unwrap();
        }
        let out = run(&cfg).unwrap();
        let report = compute_metrics(&cfg, &out.events).unwrap();
        assert_eq!(report.feedback_messages, 0);
        assert_eq!(report.coded_allocs, 0);
        assert!(report.measured_packets > 0);
        assert!(report.pmch_used_units > 0);
        assert!(report.mbsfn_reserved_units >= report.pmch_used_units);
    }

    #[test]
    fn report_csv_lists_sorted_metrics_and_na_for_undefined() {
        let mut cfg = frozen_cfg();
        cfg.apply("sim.warmup_sf", "45").unwrap();
        cfg.apply("sim.measured_sf", "1").unwrap();
        let out = run(&cfg).unwrap();
        let report = compute_metrics(&cfg, &out.events).unwrap();
        assert_eq!(report.measured_packets, 0);
        let csv = report_to_csv_string(&report);
        let names: Vec<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
        assert!(csv.contains("group_capacity,na"));
        assert!(csv.contains("mean_delay_sf,na"));
    }
}
