//! Post-hoc analysis of run artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::artifacts::{write_json, BOUNDS_HEADER};
use crate::error::{GalaError, Result};
use crate::spectral::BOUND_SLACK;

/// Fraction of `scores` strictly above `threshold * reference`.
pub fn success_rate(scores: &[f64], reference: f64, threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(GalaError::invalid("success rate of an empty set of runs"));
    }
    if !(reference > 0.0) {
        return Err(GalaError::invalid(format!("reference score must be positive, got {reference}")));
    }
    let cut = threshold * reference;
    let ok = scores.iter().filter(|&&s| s > cut).count();
    Ok(ok as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub rows: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub violations: usize,
    /// Rows where both distance and bound are zero.
    pub zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub source: PathBuf,
    pub rows: usize,
    pub geometric: ColumnReport,
    pub exact: Option<ColumnReport>,
    pub prop2: Option<ColumnReport>,
    pub violations: usize,
    pub degenerate: Option<String>,
    /// `(k, empirical / bound_geometric)` per row.
    pub ratios: Vec<(u64, f64)>,
}

#[derive(Default)]
struct Acc {
    rows: usize,
    sum: f64,
    max: f64,
    violations: usize,
    zero: usize,
}

impl Acc {
    fn push(&mut self, dist: f64, bound: f64) -> f64 {
        self.rows += 1;
        if dist > bound + BOUND_SLACK || bound.is_nan() {
            self.violations += 1;
        }
        let r = if bound > 0.0 {
            dist / bound
        } else if dist == 0.0 {
            self.zero += 1;
            0.0
        } else {
            f64::INFINITY
        };
        self.sum += r;
        self.max = self.max.max(r);
        r
    }

    fn finish(self) -> ColumnReport {
        ColumnReport {
            rows: self.rows,
            max_ratio: self.max,
            mean_ratio: if self.rows > 0 { self.sum / self.rows as f64 } else { 0.0 },
            violations: self.violations,
            zero_rows: self.zero,
        }
    }
}

fn parse_field(path: &Path, line: usize, col: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| GalaError::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: column {col} has non-numeric value {s:?}"),
    })
}

/// Reads a bounds.csv and checks every row against its bounds.
pub fn analyse_bounds(path: &Path) -> Result<BoundReport> {
    let fmt = |m: String| GalaError::Format {
        path: path.to_path_buf(),
        message: m,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => GalaError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
        },
        _ => fmt(e.to_string()),
    })?;
    let headers = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(BOUNDS_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fmt(format!("missing column {name}")))?;
    }
    let (mut geo, mut exact, mut prop2) = (Acc::default(), Acc::default(), Acc::default());
    let mut ratios = Vec::new();
    let mut all_zero = true;
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        let get = |c: usize| rec.get(idx[c]).ok_or_else(|| fmt(format!("line {line}: short row")));
        let k: u64 = get(0)?.parse().map_err(|_| fmt(format!("line {line}: bad iteration index")))?;
        let dist = parse_field(path, line, BOUNDS_HEADER[1], get(1)?)?
            .ok_or_else(|| fmt(format!("line {line}: empty empirical_dist")))?;
        let g = parse_field(path, line, BOUNDS_HEADER[2], get(2)?)?
            .ok_or_else(|| fmt(format!("line {line}: empty bound_geometric")))?;
        if dist != 0.0 || g != 0.0 {
            all_zero = false;
        }
        ratios.push((k, geo.push(dist, g)));
        if let Some(e) = parse_field(path, line, BOUNDS_HEADER[3], get(3)?)? {
            exact.push(dist, e);
        }
        if let Some(p) = parse_field(path, line, BOUNDS_HEADER[4], get(4)?)? {
            prop2.push(dist, p);
        }
    }
    let rows = geo.rows;
    let degenerate = (rows > 0 && all_zero).then(|| "degenerate: zero bound".to_string());
    let opt = |a: Acc| (a.rows > 0).then(|| a.finish());
    let (exact, prop2) = (opt(exact), opt(prop2));
    let geometric = geo.finish();
    let violations = geometric.violations
        + exact.as_ref().map_or(0, |c| c.violations)
        + prop2.as_ref().map_or(0, |c| c.violations);
    Ok(BoundReport {
        source: path.to_path_buf(),
        rows,
        geometric,
        exact,
        prop2,
        violations,
        degenerate,
        ratios,
    })
}

/// Analyses `run_dir/bounds.csv` (or every `seed_*/bounds.csv` below it) and
/// writes `bound_report.json` next to each.
pub fn compare_bounds(run_dir: &Path) -> Result<Vec<BoundReport>> {
    let direct = run_dir.join("bounds.csv");
    let mut files = Vec::new();
    if direct.is_file() {
        files.push(direct);
    } else {
        let entries = std::fs::read_dir(run_dir).map_err(|e| GalaError::io(run_dir, e))?;
        for entry in entries {
            let p = entry.map_err(|e| GalaError::io(run_dir, e))?.path().join("bounds.csv");
            if p.is_file() {
                files.push(p);
            }
        }
        files.sort();
    }
    if files.is_empty() {
        return Err(GalaError::Format {
            path: run_dir.to_path_buf(),
            message: "no bounds.csv found".into(),
        });
    }
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let report = analyse_bounds(&f)?;
        let dir = f.parent().unwrap_or(run_dir);
        write_json(&dir.join("bound_report.json"), &report)?;
        out.push(report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn success_rate_examples() {
        assert_eq!(success_rate(&[10.0, 12.0], 10.0, 0.5).unwrap(), 1.0);
        assert_eq!(success_rate(&[10.0, 4.0], 10.0, 0.5).unwrap(), 0.5);
        assert_eq!(success_rate(&[0.0, 0.0, 0.0], 10.0, 0.5).unwrap(), 0.0);
        assert!(matches!(success_rate(&[], 10.0, 0.5), Err(GalaError::InvalidArgument(_))));
        assert!(success_rate(&[1.0], 0.0, 0.5).is_err());
    }

    #[test]
    fn corrupted_csv_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bounds.csv");
        std::fs::write(&p, "k,empirical_dist\n0,1\n").unwrap();
        assert!(matches!(analyse_bounds(&p), Err(GalaError::Format { .. })));
        std::fs::write(&p, "k,empirical_dist,bound_geometric,bound_exact,bound_prop2,update_norm\n0,abc,1,,,0\n").unwrap();
        assert!(matches!(analyse_bounds(&p), Err(GalaError::Format { .. })));
    }

    #[test]
    fn zero_rows_flag_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bounds.csv");
        std::fs::write(&p, "k,empirical_dist,bound_geometric,bound_exact,bound_prop2,update_norm\n0,0,0,0,,0\n1,0,0,0,,0\n").unwrap();
        let r = analyse_bounds(&p).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.degenerate.as_deref(), Some("degenerate: zero bound"));
    }

    #[test]
    fn violation_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bounds.csv");
        std::fs::write(&p, "k,empirical_dist,bound_geometric,bound_exact,bound_prop2,update_norm\n0,1,2,,,0\n1,3,2,,1,0\n").unwrap();
        let r = analyse_bounds(&p).unwrap();
        assert_eq!(r.geometric.violations, 1);
        assert_eq!(r.prop2.unwrap().violations, 1);
        assert_eq!(r.violations, 2);
        assert_eq!(r.geometric.max_ratio, 1.5);
    }
}
