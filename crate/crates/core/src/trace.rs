//! Trace CSV output and rate diagnostics.

use std::io::Write;

use crate::error::Result;
use crate::sync::TraceRow;

pub const SYNC_HEADER: &str = "iter,objective,lin_residual,ineq_violation,step_norm,pc_gap,dist_to_ref";
pub const ASYNC_HEADER: &str =
    "iter,objective,lin_residual,ineq_violation,step_norm,pc_gap,dist_to_ref,sim_time";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line without the newline. `with_time` selects the async layout.
pub fn format_row(row: &TraceRow, with_time: bool) -> String {
    let mut line = format!(
        "{},{},{},{},{},{},{}",
        row.iter,
        row.objective,
        row.lin_residual,
        row.ineq_violation,
        row.step_norm,
        row.pc_gap,
        opt(row.dist_to_ref)
    );
    if with_time {
        line.push(',');
        if let Some(t) = row.sim_time {
            line.push_str(&format!("{t:.6}"));
        }
    }
    line
}

pub fn write_trace<W: Write>(mut out: W, rows: &[TraceRow], with_time: bool) -> Result<()> {
    writeln!(out, "{}", if with_time { ASYNC_HEADER } else { SYNC_HEADER })?;
    for row in rows {
        writeln!(out, "{}", format_row(row, with_time))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &std::path::Path, rows: &[TraceRow], with_time: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), rows, with_time)
}

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `None` with fewer than two points or constant `x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Fit of `log10(dist_to_ref)` against iteration over the last `fraction` of the rows.
pub fn log_distance_fit(rows: &[TraceRow], fraction: f64) -> Option<LineFit> {
    let start = ((1.0 - fraction.clamp(0.0, 1.0)) * rows.len() as f64).floor() as usize;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows[start..]
        .iter()
        .filter_map(|r| {
            r.dist_to_ref
                .filter(|d| *d > 0.0)
                .map(|d| (r.iter as f64, d.log10()))
        })
        .unzip();
    fit_line(&xs, &ys)
}

/// First row whose `dist_to_ref` falls to `tol` or below.
pub fn first_below(rows: &[TraceRow], tol: f64) -> Option<&TraceRow> {
    rows.iter().find(|r| r.dist_to_ref.is_some_and(|d| d <= tol))
}
