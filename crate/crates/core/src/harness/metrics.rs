use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use super::experiment::MetricsTrace;
use crate::control::StrategyKind;
use crate::network::LinkId;

/// Columns present in every metrics file, in order.
pub const FIXED_COLUMNS: [&str; 9] = [
    "strategy",
    "cycle",
    "time_s",
    "delay_increment",
    "cumulative_delay",
    "throughput",
    "controller_wall_s",
    "estimator_error",
    "partition",
];

/// Nine significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Boundary links that were coupled at least once in any trace.
fn residual_links(traces: &[MetricsTrace]) -> Vec<LinkId> {
    let set: BTreeSet<LinkId> = traces
        .iter()
        .flat_map(|t| t.records.iter().flat_map(|r| r.residuals.keys().copied()))
        .collect();
    set.into_iter().collect()
}

/// One row per strategy and control cycle. With `verbose`, one extra
/// `residual_link_<id>` column per coupled boundary link, blank in cycles
/// where the link was not coupled.
pub fn write_metrics_to<W: Write>(traces: &[MetricsTrace], out: W, verbose: bool) -> csv::Result<()> {
    let extra = if verbose { residual_links(traces) } else { Vec::new() };
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(extra.iter().map(|l| format!("residual_link_{}", l.0)));
    w.write_record(&header)?;
    for t in traces {
        for r in &t.records {
            let mut row = vec![
                r.strategy.name().to_string(),
                r.cycle.to_string(),
                format_float(r.time_s),
                format_float(r.delay_increment),
                format_float(r.cumulative_delay),
                format_float(r.throughput),
                format_float(r.controller_wall_s),
                r.estimator_error.map(format_float).unwrap_or_default(),
                r.partition.clone(),
            ];
            row.extend(
                extra
                    .iter()
                    .map(|l| r.residuals.get(l).map(|&x| format_float(x)).unwrap_or_default()),
            );
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(traces: &[MetricsTrace], path: impl AsRef<Path>, verbose: bool) -> csv::Result<()> {
    let file = std::fs::File::create(path)?;
    write_metrics_to(traces, std::io::BufWriter::new(file), verbose)
}

pub const SUMMARY_COLUMNS: [&str; 6] = [
    "strategy",
    "cumulative_delay",
    "throughput",
    "controller_wall_s",
    "wall_ratio_to_optimized",
    "max_conservation_error",
];

/// Per-strategy totals; the wall-time ratio is blank when the optimized
/// strategy was not run.
pub fn write_summary_to<W: Write>(traces: &[MetricsTrace], out: W) -> csv::Result<()> {
    let optimized = traces
        .iter()
        .find(|t| t.strategy == StrategyKind::Optimized)
        .map(|t| t.controller_wall_s());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for t in traces {
        let ratio = optimized
            .filter(|&o| o > 0.0)
            .map(|o| format_float(t.controller_wall_s() / o))
            .unwrap_or_default();
        w.write_record([
            t.strategy.name().to_string(),
            format_float(t.cumulative_delay()),
            format_float(t.throughput()),
            format_float(t.controller_wall_s()),
            ratio,
            format_float(t.max_conservation_error()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(traces: &[MetricsTrace], path: impl AsRef<Path>) -> csv::Result<()> {
    let file = std::fs::File::create(path)?;
    write_summary_to(traces, std::io::BufWriter::new(file))
}
