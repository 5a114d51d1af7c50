//! Run artifact files. Every file is written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::engine::sim::{ProtocolEvent, UpdateRecord};
use crate::error::{GalaError, Result};
use crate::spectral::BoundRow;

pub const BOUNDS_HEADER: [&str; 6] = [
    "k",
    "empirical_dist",
    "bound_geometric",
    "bound_exact",
    "bound_prop2",
    "update_norm",
];

pub const METRICS_HEADER: [&str; 8] = [
    "global_step",
    "agent_id",
    "episode_return",
    "episode_length",
    "entropy",
    "value_loss",
    "policy_loss",
    "grad_norm",
];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| GalaError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| GalaError::invalid(format!("{} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| GalaError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| GalaError::io(&tmp, e))?;
    f.sync_all().map_err(|e| GalaError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| GalaError::io(path, e))
}

/// Decimal with 12 significant digits; non-finite values as `inf`/`nan`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 {
        "0".into()
    } else {
        let s = format!("{v:.11e}");
        let parsed: f64 = s.parse().unwrap_or(v);
        format!("{parsed}")
    }
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> std::result::Result<(), csv::Error>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(csv_err)?;
        fill(&mut w).map_err(csv_err)?;
        w.flush().map_err(|e| GalaError::Numerical(e.to_string()))?;
    }
    Ok(buf)
}

fn csv_err(e: csv::Error) -> GalaError {
    GalaError::Format {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    }
}

/// Rows whose stationary bound does not apply leave that column empty.
pub fn write_bounds_csv(path: &Path, rows: &[BoundRow], prop2_from: Option<u64>) -> Result<()> {
    let bytes = csv_bytes(&BOUNDS_HEADER, |w| {
        for r in rows {
            let prop2 = match prop2_from {
                Some(from) if r.k >= from && !r.bound_prop2.is_nan() => fmt_sig(r.bound_prop2),
                _ => String::new(),
            };
            let exact = if r.bound_exact.is_nan() { String::new() } else { fmt_sig(r.bound_exact) };
            w.write_record([
                r.k.to_string(),
                fmt_sig(r.empirical_dist),
                fmt_sig(r.bound_geometric),
                exact,
                prop2,
                fmt_sig(r.update_norm),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn write_metrics_csv(path: &Path, updates: &[UpdateRecord]) -> Result<()> {
    let bytes = csv_bytes(&METRICS_HEADER, |w| {
        for u in updates {
            let (ret, len) = if u.stats.episodes.is_empty() {
                (String::new(), String::new())
            } else {
                let m = u.stats.episodes.len() as f64;
                let r = u.stats.episodes.iter().map(|e| e.ret).sum::<f64>() / m;
                let l = u.stats.episodes.iter().map(|e| e.len as f64).sum::<f64>() / m;
                (fmt_sig(r), fmt_sig(l))
            };
            w.write_record([
                u.global_step.to_string(),
                u.agent.to_string(),
                ret,
                len,
                fmt_sig(u.stats.entropy),
                fmt_sig(u.stats.value_loss),
                fmt_sig(u.stats.policy_loss),
                fmt_sig(u.stats.grad_norm),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn write_corr_csv(path: &Path, n: usize, samples: &[(u64, DMatrix<f64>)]) -> Result<()> {
    let mut header = vec!["sample_step".to_string()];
    for i in 0..n {
        for j in 0..n {
            header.push(format!("c_{i}_{j}"));
        }
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let bytes = csv_bytes(&refs, |w| {
        for (step, c) in samples {
            let mut rec = vec![step.to_string()];
            for i in 0..n {
                for j in 0..n {
                    rec.push(fmt_sig(c[(i, j)]));
                }
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn write_protocol_log(path: &Path, events: &[ProtocolEvent]) -> Result<()> {
    let mut s = String::with_capacity(events.len() * 12);
    for e in events {
        s.push_str(&format!("{} {} {}\n", e.k, e.agent, e.kind));
    }
    write_atomic(path, s.as_bytes())
}

/// Header `n`, `d` as little-endian u64, then `n * d` little-endian f64.
pub fn encode_params(params: &[Vec<f64>]) -> Vec<u8> {
    let n = params.len();
    let d = params.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(16 + 8 * n * d);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for row in params {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_params(path: &Path, bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let bad = |m: &str| GalaError::Format {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 16 {
        return Err(bad("missing header"));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if n.checked_mul(d).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
        return Err(bad("payload length does not match the header"));
    }
    Ok(body
        .chunks_exact(8 * d.max(1))
        .take(n)
        .map(|row| {
            row.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        })
        .collect())
}

pub fn write_params(path: &Path, params: &[Vec<f64>]) -> Result<()> {
    write_atomic(path, &encode_params(params))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| GalaError::Numerical(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(123456.0), "123456");
    }

    #[test]
    fn params_roundtrip() {
        let p = vec![vec![1.0, -2.5], vec![3.0, 1e-300]];
        let bytes = encode_params(&p);
        assert_eq!(bytes.len(), 16 + 32);
        assert_eq!(decode_params(Path::new("x"), &bytes).unwrap(), p);
        assert!(decode_params(Path::new("x"), &bytes[..20]).is_err());
    }
}
