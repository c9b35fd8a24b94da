use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ReportRow, SemicontinuityReport};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "k,c0_conn_dist,c1_metric_dist,max_transport_dist,class_id,class_residual,leq_limit_member,leq_residual";

pub const CSV_FILE: &str = "report.csv";
pub const TEXT_FILE: &str = "summary.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub text: PathBuf,
}

/// 17 significant digits, enough to reproduce every `f64` exactly.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_csv(report: &SemicontinuityReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in report.all_rows() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            float(r.c0_conn_dist),
            float(r.c1_metric_dist),
            float(r.max_transport_dist),
            r.class_id,
            float(r.class_residual),
            r.leq_limit_member,
            float(r.leq_residual)
        )
        .unwrap();
    }
    out
}

/// CSV row as read back: the eight schema columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: i64,
    pub c0_conn_dist: f64,
    pub c1_metric_dist: f64,
    pub max_transport_dist: f64,
    pub class_id: String,
    pub class_residual: f64,
    pub leq_limit_member: bool,
    pub leq_residual: f64,
}

impl From<&ReportRow> for CsvRow {
    fn from(r: &ReportRow) -> Self {
        Self {
            k: r.k,
            c0_conn_dist: r.c0_conn_dist,
            c1_metric_dist: r.c1_metric_dist,
            max_transport_dist: r.max_transport_dist,
            class_id: r.class_id.clone(),
            class_residual: r.class_residual,
            leq_limit_member: r.leq_limit_member,
            leq_residual: r.leq_residual,
        }
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidArgument("CSV header does not match the report schema".into()));
    }
    let bad = |line: &str| Error::InvalidArgument(format!("malformed CSV row `{line}`"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            Ok(CsvRow {
                k: f[0].parse().map_err(|_| bad(line))?,
                c0_conn_dist: num(f[1])?,
                c1_metric_dist: num(f[2])?,
                max_transport_dist: num(f[3])?,
                class_id: f[4].to_string(),
                class_residual: num(f[5])?,
                leq_limit_member: f[6].parse().map_err(|_| bad(line))?,
                leq_residual: num(f[7])?,
            })
        })
        .collect()
}

fn verdict(holds: bool) -> &'static str {
    if holds {
        "holds"
    } else {
        "fails"
    }
}

pub fn to_text(report: &SemicontinuityReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    writeln!(out, "family {} at x = {:?}, target H = {}", report.family, report.basepoint, s.target).unwrap();
    writeln!(out).unwrap();
    for r in &report.rows {
        writeln!(
            out,
            "k = {}: [Hol(g)] ≤ [Hol(g_{})] {} (residual {:.3e}); Hol(g_{}) ~ {} (dim {}, residual {:.3e}); [Hol(g_{})] ≤ [H] {}",
            r.k,
            r.k,
            verdict(r.leq_limit_member),
            r.leq_residual,
            r.k,
            r.class_id,
            r.algebra_dim,
            r.class_residual,
            r.k,
            verdict(r.in_target)
        )
        .unwrap();
    }
    let l = &report.limit;
    writeln!(
        out,
        "limit: Hol(g) ~ {} (dim {}, residual {:.3e}); [Hol(g)] ≤ [H] {} (residual {:.3e})",
        l.class_id,
        l.algebra_dim,
        l.class_residual,
        verdict(l.leq_limit_member),
        l.leq_residual
    )
    .unwrap();
    writeln!(out).unwrap();
    writeln!(out, "all members ≤ H: {}", s.all_members_in_target).unwrap();
    writeln!(out, "limit ≤ H: {}", s.limit_in_target).unwrap();
    writeln!(out, "[Hol(g)] ≤ [Hol(g_k)] for all k: {}", s.order_holds_for_all_k).unwrap();
    writeln!(out, "strict: {}", s.strict).unwrap();
    writeln!(out, "semicontinuity: {}", s.semicontinuity).unwrap();
    writeln!(out, "transport constant C: {:.6e}", s.transport_constant).unwrap();
    for d in &report.witness_drift {
        writeln!(out, "witness drift k = {} -> {}: {:.3e}", d.from_k, d.to_k, d.projector_distance).unwrap();
    }
    for n in &report.notes {
        writeln!(out, "note: {n}").unwrap();
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes one artifact into `dir`, creating the directory if needed.
pub fn render(report: &SemicontinuityReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    match format {
        ReportFormat::Csv => write(dir.join(CSV_FILE), &to_csv(report)),
        ReportFormat::Text => write(dir.join(TEXT_FILE), &to_text(report)),
    }
}

/// Writes `report.csv` and `summary.txt` into `dir`.
pub fn render_report(report: &SemicontinuityReport, dir: &Path) -> Result<ReportFiles> {
    Ok(ReportFiles {
        csv: render(report, ReportFormat::Csv, dir)?,
        text: render(report, ReportFormat::Text, dir)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Summary;

    fn row(k: i64, x: f64) -> ReportRow {
        ReportRow {
            k,
            c0_conn_dist: x,
            c1_metric_dist: x / 3.0,
            max_transport_dist: x * std::f64::consts::PI,
            class_id: "so2_block".into(),
            class_residual: 1.0 / 7.0 * 1e-17,
            leq_limit_member: true,
            leq_residual: f64::MIN_POSITIVE,
            algebra_dim: 1,
            spectral_gap: 1e6,
            in_target: true,
            in_target_residual: 0.0,
            compatibility_residual: 0.0,
        }
    }

    fn report() -> SemicontinuityReport {
        SemicontinuityReport {
            family: "poincare2d".into(),
            basepoint: vec![0.05, 0.0],
            rows: vec![row(2, 0.123_456_789_012_345_68), row(4, 2.0f64.sqrt() * 1e-300)],
            limit: ReportRow {
                class_id: "trivial".into(),
                ..row(-1, 0.0)
            },
            summary: Summary {
                target: "so2_block".into(),
                all_members_in_target: true,
                limit_in_target: true,
                order_holds_for_all_k: true,
                strict: true,
                semicontinuity: true,
                transport_constant: 1.0,
            },
            witness_drift: vec![],
            notes: vec![],
        }
    }

    #[test]
    fn csv_has_exact_header_and_one_row_per_member_plus_limit() {
        let csv = to_csv(&report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[3].starts_with("-1,"));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let r = report();
        let parsed = parse_csv(&to_csv(&r)).unwrap();
        let expected: Vec<CsvRow> = r.all_rows().map(CsvRow::from).collect();
        assert_eq!(parsed, expected);
        for (a, b) in parsed.iter().zip(&expected) {
            assert_eq!(a.c0_conn_dist.to_bits(), b.c0_conn_dist.to_bits());
            assert_eq!(a.max_transport_dist.to_bits(), b.max_transport_dist.to_bits());
        }
    }

    #[test]
    fn text_names_the_order_relation() {
        let text = to_text(&report());
        assert!(text.contains("[Hol(g)] ≤ [Hol(g_2)] holds"));
        assert!(text.contains("strict: true"));
    }

    #[test]
    fn files_are_written_and_unwritable_targets_reported() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&report(), &dir.path().join("nested")).unwrap();
        assert_eq!(std::fs::read_to_string(&files.csv).unwrap(), to_csv(&report()));
        assert!(files.text.exists());

        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(matches!(render_report(&report(), &blocker.join("sub")), Err(Error::Io { .. })));
    }
}
