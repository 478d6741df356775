use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdr::FdrReport;
use crate::inference::EdgeInference;
use crate::model::{Partition, SampleMatrix};

use super::{AggregateRow, ExperimentResult};

#[derive(Clone, Debug)]
pub struct IngestedData {
    /// Column-centered observations.
    pub data: SampleMatrix,
    pub header: Option<Vec<String>>,
}

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a rectangular numeric CSV (rows are observations) and centers each
/// column. A first row containing any non-numeric field is a header.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<IngestedData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let text = text.strip_suffix('\n').unwrap_or(&text);
    let text = text.strip_suffix('\r').unwrap_or(text);
    for (i, line) in text.split('\n').enumerate() {
        if line.trim().is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                column: 1,
                message: "blank line".into(),
            });
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            column: 1,
            message: e.to_string(),
        })?;
        if i == 0 && rec.iter().any(|f| parse_field(f).is_none()) {
            header = Some(rec.iter().map(|f| f.trim().to_string()).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::NonRectangular {
                line,
                expected,
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (j, f) in rec.iter().enumerate() {
            row.push(parse_field(f).ok_or_else(|| Error::Parse {
                line,
                column: j + 1,
                message: format!("`{f}` is not a finite number"),
            })?);
        }
        rows.push(row);
    }
    let d = width.unwrap_or(0);
    let n = rows.len();
    let mut data = SampleMatrix::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))?;
    data.center();
    Ok(IngestedData { data, header })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    EdgeList,
    Dot,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge_list" | "edges" | "csv" => Ok(GraphFormat::EdgeList),
            "dot" => Ok(GraphFormat::Dot),
            other => Err(Error::Config(format!("unknown graph format `{other}`"))),
        }
    }
}

/// Writes the selected edges. Node indices are 1-based in both formats.
///
/// `edge_list`: header `t,k,estimate,stat` then one line per edge.
/// `dot`: an undirected graph whose nodes are labeled with cluster id and size.
pub fn export_graph(
    report: &FdrReport,
    edges: &[EdgeInference],
    g_hat: &Partition,
    path: impl AsRef<Path>,
    format: GraphFormat,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let lookup = |t: usize, k: usize| edges.iter().find(|e| e.t == t && e.k == k);
    match format {
        GraphFormat::EdgeList => {
            out.push_str("t,k,estimate,stat\n");
            for &(t, k) in &report.selected {
                let (est, stat) = lookup(t, k).map_or((f64::NAN, f64::NAN), |e| (e.estimate, e.stat));
                out.push_str(&format!("{},{},{est},{stat}\n", t + 1, k + 1));
            }
        }
        GraphFormat::Dot => {
            out.push_str("graph clusters {\n");
            for (c, size) in g_hat.sizes().iter().enumerate() {
                out.push_str(&format!("  n{} [label=\"cluster {} (size {size})\"];\n", c + 1, c + 1));
            }
            for &(t, k) in &report.selected {
                let stat = lookup(t, k).map_or(f64::NAN, |e| e.stat);
                out.push_str(&format!("  n{} -- n{} [weight=\"{stat:.4}\"];\n", t + 1, k + 1));
            }
            out.push_str("}\n");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `variable,cluster` lines, both 1-based.
pub fn write_partition(g: &Partition, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("variable,cluster\n");
    for (j, &l) in g.labels().iter().enumerate() {
        out.push_str(&format!("{},{}\n", j + 1, l + 1));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_partition(path: impl AsRef<Path>) -> Result<Partition> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut parts = line.split(',');
        let label = parts
            .nth(1)
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                line: i + 1,
                column: 2,
                message: "expected `variable,cluster`".into(),
            })?;
        labels.push(label);
    }
    Partition::from_labels(&labels)
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record([
        "graph_kind", "method", "alpha", "topology", "K", "m", "mean_fdr", "mean_power", "n_fail",
    ])
    .map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.write_record([
            r.graph_kind.to_string(),
            r.method.to_string(),
            r.alpha.to_string(),
            r.topology.to_string(),
            r.k.to_string(),
            r.m.to_string(),
            format!("{:.6}", r.mean_fdr),
            format!("{:.6}", r.mean_power),
            r.n_fail.to_string(),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'static str,
    config: &'a super::ExperimentConfig,
    cluster_recovery_rate: f64,
    failed_replications: &'a [(usize, String)],
    table: &'a [AggregateRow],
}

pub fn write_summary_json(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        config: &result.config,
        cluster_recovery_rate: result.cluster_recovery_rate(),
        failed_replications: &result.failed_replications,
        table: &result.table,
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| Error::io(path, e.into()))?;
    writeln!(f).map_err(|e| Error::io(path, e))
}
