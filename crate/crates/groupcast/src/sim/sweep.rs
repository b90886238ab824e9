//! Multi-run sweeps over (strategy, group size, seed) with per-cell
//! summaries.
//!
//! Runs share nothing but the immutable base configuration and may execute
//! in parallel; results are assembled in the deterministic cartesian order
//! of the configured lists, so sweep output is byte-identical regardless
//! of worker count.

use crate::error::{Error, Result};
use crate::sim::config::SimConfig;
use crate::sim::engine::run;
use crate::sim::metrics::{compute_metrics, MetricsReport};
use crate::strategy::StrategyKind;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

/// One run's identity and report.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub strategy: StrategyKind,
    pub group_size: u32,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Seed-aggregated view of one (strategy, group size) cell.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub strategy: StrategyKind,
    pub group_size: u32,
    /// Mean of the exact (unfloored) group capacity over seeds.
    pub gc_mean: Option<f64>,
    /// Half-width of the two-sided 95% confidence interval (Student t).
    pub gc_ci95: Option<f64>,
    /// This cell's mean capacity relative to plain SC-PTM's at the same
    /// group size.
    pub gc_ratio_vs_scptm: Option<f64>,
}

/// All rows and summaries of one sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SweepSummary>,
}

/// Two-sided 95% Student-t quantile for `df` degrees of freedom.
fn t_quantile(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::NAN
    } else if df <= TABLE.len() {
        TABLE[df - 1]
    } else {
        1.96
    }
}

fn mean_ci(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = t_quantile(values.len() - 1) * (var / n).sqrt();
    (Some(mean), Some(half))
}

/// Runs the configured sweep: every strategy × group size × seed.
pub fn run_sweep(base: &SimConfig) -> Result<SweepResult> {
    let mut cells = Vec::new();
    for &strategy in &base.sweep_strategies {
        for &group_size in &base.sweep_group_sizes {
            for &seed in &base.sweep_seeds {
                cells.push((strategy, group_size, seed));
            }
        }
    }
    let rows: Vec<SweepRow> = cells
        .into_par_iter()
        .map(|(strategy, group_size, seed)| {
            let mut cfg = base.clone();
            cfg.strategy = strategy;
            cfg.group_size = group_size;
            cfg.seed = seed;
            let wrap = |source: Error| Error::SweepRunFailed {
                strategy: strategy.to_string(),
                group_size,
                seed,
                source: Box::new(source),
            };
            let out = run(&cfg).map_err(wrap)?;
            let report = compute_metrics(&cfg, &out.events).map_err(wrap)?;
            Ok(SweepRow {
                strategy,
                group_size,
                seed,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut by_cell: BTreeMap<(&'static str, u32), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        if let Some(gc) = row.report.group_capacity_exact {
            by_cell
                .entry((row.strategy.as_str(), row.group_size))
                .or_default()
                .push(gc);
        }
    }
    let mut summaries = Vec::new();
    for &strategy in &base.sweep_strategies {
        for &group_size in &base.sweep_group_sizes {
            let values = by_cell
                .get(&(strategy.as_str(), group_size))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let (gc_mean, gc_ci95) = mean_ci(values);
            summaries.push(SweepSummary {
                strategy,
                group_size,
                gc_mean,
                gc_ci95,
                gc_ratio_vs_scptm: None,
            });
        }
    }
    let plain: BTreeMap<u32, f64> = summaries
        .iter()
        .filter(|s| s.strategy == StrategyKind::ScPtm)
        .filter_map(|s| s.gc_mean.map(|m| (s.group_size, m)))
        .collect();
    for s in &mut summaries {
        s.gc_ratio_vs_scptm = match (s.gc_mean, plain.get(&s.group_size)) {
            (Some(mean), Some(&base_mean)) if base_mean > 0.0 => Some(mean / base_mean),
            _ => None,
        };
    }
    Ok(SweepResult { rows, summaries })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".into(), |x| x.to_string())
}

/// Renders run rows followed by summary rows.
pub fn sweep_to_csv_string(res: &SweepResult) -> String {
    let mut s = String::from(
        "kind,strategy,group_size,seed,group_capacity,group_capacity_exact,\
         unique_goodput_bps,aggregate_goodput_bps,residual_undelivered,mean_delay_sf,\
         gc_exact_mean,gc_exact_ci95,gc_ratio_vs_scptm\n",
    );
    for row in &res.rows {
        let r = &row.report;
        s.push_str(&format!(
            "run,{},{},{},{},{},{},{},{},{},,,\n",
            row.strategy.as_str(),
            row.group_size,
            row.seed,
            r.group_capacity
                .map_or_else(|| "na".into(), |v| v.to_string()),
            opt(r.group_capacity_exact),
            r.unique_goodput_bps,
            r.aggregate_goodput_bps,
            r.residual_undelivered,
            opt(r.mean_delay_sf),
        ));
    }
    for sum in &res.summaries {
        s.push_str(&format!(
            "summary,{},{},,,,,,,,{},{},{}\n",
            sum.strategy.as_str(),
            sum.group_size,
            opt(sum.gc_mean),
            opt(sum.gc_ci95),
            opt(sum.gc_ratio_vs_scptm),
        ));
    }
    s
}

/// Writes `sweep.csv`.
pub fn write_sweep_csv(path: &Path, res: &SweepResult) -> Result<()> {
    std::fs::write(path, sweep_to_csv_string(res)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_base() -> SimConfig {
        let mut cfg = SimConfig::default();
        for (k, v) in [
            ("sim.warmup_sf", "40"),
            ("sim.measured_sf", "200"),
            ("channel.frozen_sinr_db", "30"),
            ("sweep.group_sizes", "2,3"),
            ("sweep.seeds", "1,2,3"),
            ("sweep.strategies", "sc-ptm,sc-ptm-ic"),
        ] {
            cfg.apply(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn sweep_covers_the_cartesian_product_in_order() {
        let res = run_sweep(&tiny_base()).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 3);
        assert_eq!(res.summaries.len(), 2 * 2);
        let key = |r: &SweepRow| (r.strategy.as_str(), r.group_size, r.seed);
        assert_eq!(key(&res.rows[0]), ("sc-ptm", 2, 1));
        assert_eq!(key(&res.rows[5]), ("sc-ptm", 3, 3));
        assert_eq!(key(&res.rows[6]), ("sc-ptm-ic", 2, 1));
    }

    #[test]
    fn sweep_output_is_stable_across_repeats() {
        let a = sweep_to_csv_string(&run_sweep(&tiny_base()).unwrap());
        let b = sweep_to_csv_string(&run_sweep(&tiny_base()).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("kind,strategy,group_size,seed,"));
    }

    #[test]
    fn frozen_channel_makes_the_coded_ratio_exactly_one() {
        let res = run_sweep(&tiny_base()).unwrap();
        for s in &res.summaries {
            assert!(s.gc_mean.unwrap() >= 1.0);
            if s.strategy == StrategyKind::ScPtmIc {
                assert_eq!(s.gc_ratio_vs_scptm, Some(1.0));
            }
        }
    }

    #[test]
    fn confidence_interval_needs_two_seeds() {
        let mut cfg = tiny_base();
        cfg.apply("sweep.seeds", "7").unwrap();
        let res = run_sweep(&cfg).unwrap();
        assert!(res.summaries.iter().all(|s| s.gc_ci95.is_none()));
        assert!(res.summaries.iter().all(|s| s.gc_mean.is_some()));
    }
}
