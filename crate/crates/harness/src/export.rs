//! CSV output of traces and metrics.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use observerkit_core::sim::SimTrace;

use crate::config::Diagnostics;
use crate::metrics::MetricsReport;
use crate::scenario::ScenarioResult;
use crate::HarnessError;

/// Shortest decimal rendering of `v` with 9 significant digits: fixed notation
/// for exponents in `[-5, 9)`, scientific otherwise, trailing zeros removed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        trim_zeros(&format!("{v:.*}", (8 - exp) as usize)).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn suffix(label: &str) -> &str {
    label.strip_prefix('x').unwrap_or(label)
}

/// Column names of an exported trace.
pub fn trace_header(trace: &SimTrace, diag: &Diagnostics) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let hidden: Vec<&str> = trace
        .hidden
        .iter()
        .map(|&i| trace.state_labels[i].as_str())
        .collect();
    h.extend(hidden.iter().map(|s| s.to_string()));
    let p = trace.measured.len();
    h.extend((1..=p).map(|k| format!("y{k}")));
    h.extend((1..=p).map(|k| format!("y{k}_meas")));
    if let Some(r) = trace.rows.first() {
        if r.u.len() == 1 {
            h.push("u".into());
        } else {
            h.extend((1..=r.u.len()).map(|k| format!("u{k}")));
        }
        h.extend(hidden.iter().map(|s| format!("xhat{}", suffix(s))));
        h.extend(hidden.iter().map(|s| format!("xerr{}", suffix(s))));
        if diag.theta {
            if let (Some(th), Some(_)) = (&r.theta_hat, &r.theta_err) {
                h.extend((1..=th.len()).map(|k| format!("theta_hat{k}")));
                h.extend((1..=th.len()).map(|k| format!("theta_err{k}")));
            }
        }
        if diag.d_m {
            if let Some(d) = &r.d_m {
                h.extend((1..=d.len()).map(|k| format!("dm{k}")));
            }
        }
        if diag.chi {
            h.extend((1..=r.chi.len()).map(|k| format!("chi{k}")));
        }
    }
    h
}

/// Writes one row per recorded step after a header naming every column.
pub fn write_trace<W: Write>(
    trace: &SimTrace,
    diag: &Diagnostics,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let header = trace_header(trace, diag);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for r in &trace.rows {
        record.clear();
        record.push(format_sig9(r.t));
        for &i in &trace.hidden {
            record.push(format_sig9(r.x[i]));
        }
        record.extend(r.y_clean.iter().map(|v| format_sig9(*v)));
        record.extend(r.y_noisy.iter().map(|v| format_sig9(*v)));
        record.extend(r.u.iter().map(|v| format_sig9(*v)));
        for &i in &trace.hidden {
            record.push(format_sig9(r.x_hat[i]));
        }
        for &i in &trace.hidden {
            record.push(format_sig9(r.x_err[i]));
        }
        if diag.theta {
            if let (Some(th), Some(te)) = (&r.theta_hat, &r.theta_err) {
                record.extend(th.iter().chain(te.iter()).map(|v| format_sig9(*v)));
            }
        }
        if diag.d_m {
            if let Some(d) = &r.d_m {
                record.extend(d.iter().map(|v| format_sig9(*v)));
            }
        }
        if diag.chi {
            record.extend(r.chi.iter().map(|v| format_sig9(*v)));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn export_csv(trace: &SimTrace, diag: &Diagnostics, path: &Path) -> Result<(), HarnessError> {
    let f = create(path)?;
    write_trace(trace, diag, f).map_err(|e| csv_error(path, e))
}

/// One row per observer and reconstructed state.
pub fn write_metrics<W: Write>(report: &MetricsReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "observer",
        "state",
        "steady_rms",
        "convergence_time",
        "peak_error",
        "final_theta_error",
        "completed",
    ])?;
    for m in &report.observers {
        for s in &m.states {
            w.write_record([
                m.observer.clone(),
                s.label.clone(),
                format_sig9(s.steady_rms),
                s.convergence_time
                    .map_or_else(|| "not converged".into(), format_sig9),
                format_sig9(s.peak_error),
                m.final_theta_error.map_or_else(String::new, format_sig9),
                m.completed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `<plant>_<observer>.csv` for every run and `metrics.csv` into `dir`.
/// Returns the written paths.
pub fn export_result(
    result: &ScenarioResult,
    diag: &Diagnostics,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::with_capacity(result.runs.len() + 1);
    for run in &result.runs {
        let path = dir.join(format!("{}_{}.csv", result.plant, run.id));
        export_csv(&run.trace, diag, &path)?;
        written.push(path);
    }
    let path = dir.join("metrics.csv");
    let f = create(&path)?;
    write_metrics(&result.report, f).map_err(|e| csv_error(&path, e))?;
    written.push(path);
    Ok(written)
}
