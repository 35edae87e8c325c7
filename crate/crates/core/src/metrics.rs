//! Trajectory and error statistics, plus plain-text table rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("error series is empty")]
    EmptySeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajStats {
    pub duration: f64,
    pub total_length: f64,
    pub average_speed: f64,
    pub n_range: [f64; 2],
    pub e_range: [f64; 2],
    /// Altitude (`-d`, up positive).
    pub alt_range: [f64; 2],
}

/// Statistics of a stamped position series `(seconds, position)`.
pub fn traj_stats(log: &[(f64, Vec3)]) -> Result<TrajStats, MetricsError> {
    let (first, rest) = log.split_first().ok_or(MetricsError::EmptyLog)?;
    let mut length = 0.0;
    let mut prev = first.1;
    let mut n_range = [first.1.n; 2];
    let mut e_range = [first.1.e; 2];
    let mut alt_range = [first.1.altitude(); 2];
    for &(_, p) in rest {
        length += prev.distance(p);
        prev = p;
        n_range = [n_range[0].min(p.n), n_range[1].max(p.n)];
        e_range = [e_range[0].min(p.e), e_range[1].max(p.e)];
        alt_range = [alt_range[0].min(p.altitude()), alt_range[1].max(p.altitude())];
    }
    let duration = log[log.len() - 1].0 - first.0;
    let average_speed = if duration > 0.0 { length / duration } else { 0.0 };
    Ok(TrajStats {
        duration,
        total_length: length,
        average_speed,
        n_range,
        e_range,
        alt_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Population variance (divides by `count`), m².
    pub variance: f64,
    pub max: f64,
    pub count: usize,
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    // shifted by the first sample so a constant series gives exactly zero
    let k = errors[0];
    let dm = errors.iter().map(|e| e - k).sum::<f64>() / n;
    let variance = (errors.iter().map(|e| (e - k - dm) * (e - k - dm)).sum::<f64>() / n).max(0.0);
    let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ErrorStats {
        mean,
        variance,
        max,
        count: errors.len(),
    })
}

/// Aligned plain-text table. Cells are rendered as given.
pub fn render_table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let total: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&line(&mut header.iter().copied()));
    out.push('\n');
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

/// Rounds to `decimals` places, printing `-0.0` as `0.0`.
fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn fmt1(x: f64) -> String {
    fixed(x, 1)
}

pub fn fmt_range(r: [f64; 2]) -> String {
    format!("[{}, {}]", fmt1(r[0]), fmt1(r[1]))
}

pub fn fmt_vec(v: [f64; 3], decimals: usize) -> String {
    format!(
        "[{}, {}, {}]",
        fixed(v[0], decimals),
        fixed(v[1], decimals),
        fixed(v[2], decimals)
    )
}
