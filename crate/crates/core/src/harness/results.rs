//! Results files: `t,mean_cum_regret,ci_halfwidth,n_reps` rows plus a
//! `<path>.meta` sidecar of `key=value` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::stats::{AggregateResult, ResultRow};
use crate::error::{Error, Result};

const HEADER: &str = "t,mean_cum_regret,ci_halfwidth,n_reps";

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the rows of `agg` to `path`.
pub fn emit_results(agg: &AggregateResult, path: &Path) -> Result<()> {
    if agg.rows.is_empty() || agg.rows.iter().any(|r| r.n_reps == 0) {
        return Err(Error::NoRuns);
    }
    let mut out = String::with_capacity(32 * (agg.rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in &agg.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.t, r.mean_cum_regret, r.ci_halfwidth, r.n_reps
        );
    }
    write_file(path, &out)
}

/// Writes `key=value` lines to the sidecar of `path`.
pub fn write_meta(path: &Path, meta: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "{k}={v}");
    }
    write_file(&sidecar_path(path), &out)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(err(1, format!("expected header {HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(
                i + 1,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| err(i + 1, e.to_string()));
        let int = |s: &str| s.parse::<u64>().map_err(|e| err(i + 1, e.to_string()));
        rows.push(ResultRow {
            t: int(fields[0])?,
            mean_cum_regret: float(fields[1])?,
            ci_halfwidth: float(fields[2])?,
            n_reps: int(fields[3])? as usize,
        });
    }
    if rows.is_empty() {
        return Err(Error::NoRuns);
    }
    Ok(rows)
}

pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>> {
    let meta = sidecar_path(path);
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse {
                    path: meta.clone(),
                    line: i + 1,
                    message: "expected key=value".into(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::aggregate;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/r.csv");
        let agg = aggregate(&[1, 2, 3], &[&[0.0, 0.5, 0.75], &[0.25, 0.5, 1.0]], 2).unwrap();
        emit_results(&agg, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,mean_cum_regret,ci_halfwidth,n_reps\n1,0.125,"));
        assert!(!text.contains('\r'));
        assert_eq!(read_results(&path).unwrap(), agg.rows);
        write_meta(&path, &[("policy".into(), "known-l".into())]).unwrap();
        assert_eq!(sidecar_path(&path), dir.path().join("sub/r.csv.meta"));
        assert_eq!(
            read_meta(&path).unwrap(),
            vec![("policy".into(), "known-l".into())]
        );
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,mean\n1,2\n").unwrap();
        assert!(matches!(
            read_results(&path),
            Err(Error::Parse { line: 1, .. })
        ));
        fs::write(&path, "t,mean_cum_regret,ci_halfwidth,n_reps\n1,x,0,1\n").unwrap();
        assert!(matches!(
            read_results(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_results(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
