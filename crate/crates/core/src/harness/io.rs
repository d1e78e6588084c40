//! CSV and JSON artifacts written by the harness.
//!
//! Floats are written in `{:.16e}` form (17 significant digits), which parses
//! back to the identical `f64`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::learners::{LearnerTrace, TraceRow};
use crate::mdp::TabularMdp;

use super::config::ExperimentConfig;
use super::fit::RateFit;

/// Which learner a trace came from; selects the error column name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    TwoTimescale,
    OneTimescale,
}

impl TraceKind {
    pub fn error_column(self) -> &'static str {
        match self {
            Self::TwoTimescale => "linf_err_q",
            Self::OneTimescale => "suplog_err_x",
        }
    }

    fn header(self) -> Vec<&'static str> {
        match self {
            Self::TwoTimescale => vec!["n", "linf_err_q", "g_track_err", "seed"],
            Self::OneTimescale => vec!["n", "suplog_err_x", "seed"],
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::Domain(format!("bad float {s:?}: {e}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|e| Error::Domain(format!("bad integer {s:?}: {e}")))
}

/// Long-format trace CSV: one row per `(seed, snapshot)`.
pub fn write_traces<W: Write>(
    writer: W,
    kind: TraceKind,
    traces: &[(u64, &LearnerTrace)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(kind.header())?;
    for (seed, trace) in traces {
        for row in &trace.rows {
            let mut record = vec![row.n.to_string(), fmt_f64(row.error)];
            if kind == TraceKind::TwoTimescale {
                record.push(row.g_track_err.map_or_else(String::new, fmt_f64));
            }
            record.push(seed.to_string());
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Seed-aggregated curve: the trace columns without `seed`.
pub fn write_median<W: Write>(writer: W, kind: TraceKind, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header = kind.header();
    w.write_record(&header[..header.len() - 1])?;
    for row in rows {
        let mut record = vec![row.n.to_string(), fmt_f64(row.error)];
        if kind == TraceKind::TwoTimescale {
            record.push(row.g_track_err.map_or_else(String::new, fmt_f64));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace CSV back into `(seed, row)` pairs in file order.
pub fn read_traces<R: Read>(reader: R) -> Result<(TraceKind, Vec<(u64, TraceRow)>)> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let kind = match headers.get(1) {
        Some("linf_err_q") => TraceKind::TwoTimescale,
        Some("suplog_err_x") => TraceKind::OneTimescale,
        other => {
            return Err(Error::Domain(format!(
                "unrecognized trace column {other:?}"
            )))
        }
    };
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let (g_track_err, seed_col) = match kind {
            TraceKind::TwoTimescale => {
                let g = field(2);
                (
                    if g.is_empty() {
                        None
                    } else {
                        Some(parse_f64(g)?)
                    },
                    3,
                )
            }
            TraceKind::OneTimescale => (None, 2),
        };
        out.push((
            parse_u64(field(seed_col))?,
            TraceRow {
                n: parse_u64(field(0))?,
                error: parse_f64(field(1))?,
                g_track_err,
            },
        ));
    }
    Ok((kind, out))
}

/// Per-pair solution table with both scales; `x` reads `inf` when it overflows.
pub fn write_solution<W: Write>(
    writer: W,
    mdp: &TabularMdp,
    log_x: &[f64],
    q: &[f64],
    greedy: &[usize],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["state", "action", "x", "ln_x", "q", "greedy"])?;
    for (s, &best) in greedy.iter().enumerate().take(mdp.num_states()) {
        for a in 0..mdp.num_actions() {
            let i = mdp.index(s, a);
            w.write_record([
                s.to_string(),
                a.to_string(),
                fmt_f64(log_x[i].exp()),
                fmt_f64(log_x[i]),
                fmt_f64(q[i]),
                u8::from(best == a).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub fit: RateFit,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SummaryRow {
    pub fn in_band(&self) -> bool {
        self.fit.slope >= self.lower && self.fit.slope <= self.upper
    }
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "config",
        "slope",
        "intercept",
        "r_squared",
        "points",
        "expected",
        "lower",
        "upper",
        "in_band",
    ])?;
    for row in rows {
        w.write_record([
            row.label.clone(),
            fmt_f64(row.fit.slope),
            fmt_f64(row.fit.intercept),
            fmt_f64(row.fit.r_squared),
            row.fit.points.to_string(),
            fmt_f64(row.expected),
            fmt_f64(row.lower),
            fmt_f64(row.upper),
            row.in_band().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metadata.json`: the resolved config, the MDP content hash, and any
/// task-specific extras.
pub fn write_metadata(
    dir: &Path,
    config: &ExperimentConfig,
    mdp: Option<&TabularMdp>,
    extra: serde_json::Value,
) -> Result<()> {
    let doc = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "mdp_hash": mdp.map(TabularMdp::content_hash),
        "extra": extra,
    });
    let mut f = File::create(dir.join("metadata.json"))?;
    f.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn create_file(dir: &Path, name: &str) -> Result<File> {
    std::fs::create_dir_all(dir)?;
    Ok(File::create(dir.join(name))?)
}
