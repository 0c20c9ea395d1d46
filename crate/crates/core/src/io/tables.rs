//! CSV encodings of fields, traces, metrics and sweep results.

use num_complex::Complex64;
use std::path::Path;

use crate::baselines::BaselineVariant;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::metrics::Metrics;
use crate::scaling::{GradientCell, ScalingSurface};
use crate::solver::{IterRecord, TrainingComparison};

/// Thirteen significant digits, enough to round-trip every value we emit.
pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))
}

/// Per-cell field with `x_m,y_m,<value_name>` columns in grid order.
pub fn field_csv(centers: &[Point], values: &[f64], value_name: &str) -> Result<Vec<u8>> {
    if centers.len() != values.len() {
        return Err(Error::invalid("field and grid lengths differ"));
    }
    table(
        &["x_m", "y_m", value_name],
        centers
            .iter()
            .zip(values)
            .map(|(p, v)| vec![num(p.x), num(p.y), num(*v)]),
    )
}

/// Points and values of a three-column field CSV.
pub fn read_field_csv(path: &Path) -> Result<(Vec<Point>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let get = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: i + 2,
                    column: k + 1,
                    message: format!("expected a number in {}", path.display()),
                })
        };
        points.push(Point::new(get(0)?, get(1)?));
        values.push(get(2)?);
    }
    Ok((points, values))
}

pub fn metrics_csv(m: &Metrics) -> Result<Vec<u8>> {
    table(
        &["c_tot", "d_tot", "p_t", "xi", "csat", "ee", "iree"],
        [vec![
            num(m.c_tot),
            num(m.d_tot),
            num(m.p_t),
            num(m.xi),
            num(m.csat),
            num(m.ee),
            num(m.iree),
        ]],
    )
}

pub fn trace_csv(records: &[IterRecord]) -> Result<Vec<u8>> {
    table(
        &["iter", "eta", "loss", "xi", "c_tot", "p_t", "csat", "penalty"],
        records.iter().map(|r| {
            vec![
                r.iter.to_string(),
                num(r.eta),
                num(r.loss),
                num(r.xi),
                num(r.c_tot),
                num(r.p_t),
                num(r.csat),
                num(r.penalty),
            ]
        }),
    )
}

/// Loss per training round of both schemes.
pub fn comparison_csv(c: &TrainingComparison) -> Result<Vec<u8>> {
    table(
        &["round", "alternating_loss", "end_to_end_loss"],
        c.alternating
            .iter()
            .zip(&c.end_to_end)
            .enumerate()
            .map(|(k, (a, e))| vec![k.to_string(), num(*a), num(*e)]),
    )
}

pub fn baseline_csv(rows: &[(BaselineVariant, Metrics)]) -> Result<Vec<u8>> {
    table(
        &["variant", "xi", "c_tot", "p_t", "iree", "csat"],
        rows.iter().map(|(v, m)| {
            vec![
                v.tag().to_string(),
                num(m.xi),
                num(m.c_tot),
                num(m.p_t),
                num(m.iree),
                num(m.csat),
            ]
        }),
    )
}

/// One row per run of every surface cell.
pub fn surface_csv(s: &ScalingSurface) -> Result<Vec<u8>> {
    table(
        &[
            "n_bs",
            "n_ris",
            "seed",
            "xi",
            "c_tot",
            "p_t",
            "iree",
            "ee",
            "csat",
            "converged",
        ],
        s.cells.iter().flat_map(|c| {
            c.runs.iter().map(move |r| {
                let m = &r.metrics;
                vec![
                    c.n_bs.to_string(),
                    c.n_ris.to_string(),
                    r.seed.to_string(),
                    num(m.xi),
                    num(m.c_tot),
                    num(m.p_t),
                    num(m.iree),
                    num(m.ee),
                    num(m.csat),
                    r.converged.to_string(),
                ]
            })
        }),
    )
}

pub fn gradient_csv(cells: &[GradientCell]) -> Result<Vec<u8>> {
    table(
        &["n_bs", "n_ris", "d_iree_d_nbs", "d_iree_d_nris"],
        cells.iter().map(|g| {
            vec![
                g.n_bs.to_string(),
                g.n_ris.to_string(),
                num(g.d_iree_d_nbs),
                num(g.d_iree_d_nris),
            ]
        }),
    )
}

/// Per-BS channel vectors as `bs_index,antenna_index,re,im`.
pub fn channel_csv(channels: &[Vec<Complex64>]) -> Result<Vec<u8>> {
    table(
        &["bs_index", "antenna_index", "re", "im"],
        channels.iter().enumerate().flat_map(|(n, h)| {
            h.iter()
                .enumerate()
                .map(move |(k, v)| vec![n.to_string(), k.to_string(), num(v.re), num(v.im)])
        }),
    )
}

/// Flat `key = value` report, one pair per line in the given order.
pub fn key_values(pairs: &[(String, String)]) -> Vec<u8> {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out.into_bytes()
}

/// Columns of a CSV file by header name, parsed as numbers.
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(match field {
                "true" => 1.0,
                "false" => 0.0,
                s => s.parse().unwrap_or(f64::NAN),
            });
        }
    }
    Ok((header, cols))
}
