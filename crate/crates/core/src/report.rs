//! CSV report writer.

use std::fmt::Write as _;
use std::path::Path;

use crate::scenario::RunReport;

pub const CSV_HEADER: &str = "seed,allocator,attack,steps,honest_blocks,byz_blocks,longest_len,forks,cp_violations,to_violations,live_violations,attack_success,cost_burn,cost_reuse";

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct ReportError {
    pub path: String,
    pub source: std::io::Error,
}

/// One row per seed in ascending order, then an `AGG` row of means.
pub fn to_csv(report: &RunReport) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        let m = &r.metrics;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.allocator.name(),
            r.attack.name(),
            m.steps,
            m.honest_blocks,
            m.byz_blocks,
            m.longest_len,
            m.forks,
            r.cp_violations(),
            r.to_violations(),
            r.live_violations(),
            r.outcome.success as u8,
            r.outcome.cost.burn,
            r.outcome.cost.reuse,
        )
        .expect("writing to a String");
    }
    if let Some(a) = report.aggregate() {
        writeln!(
            s,
            "AGG,{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            report.allocator.name(),
            report.attack.name(),
            a.steps,
            a.honest_blocks,
            a.byz_blocks,
            a.longest_len,
            a.forks,
            a.cp_violations,
            a.to_violations,
            a.live_violations,
            a.attack_success,
            a.cost_burn,
            a.cost_reuse,
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, to_csv(report)).map_err(|source| ReportError { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::StrategyKind;
    use crate::engine::AllocatorKind;

    #[test]
    fn empty_report_is_header_only() {
        let r = RunReport { allocator: AllocatorKind::Pow, attack: StrategyKind::None, rows: vec![], warnings: vec![] };
        assert_eq!(to_csv(&r), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn unwritable_path_is_reported() {
        let r = RunReport { allocator: AllocatorKind::Pow, attack: StrategyKind::None, rows: vec![], warnings: vec![] };
        let e = write_report(&r, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
