//! On-disk formats: topology JSON, leak CSV, intervention scripts, run
//! reports and metric series.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pqroute_core::operator::ScriptEntry;
use pqroute_core::sim::{RunMetadata, RunReport, RunSummary, WindowResult};
use pqroute_core::topology::{Border, DirectedEdge, TopologyError};
use pqroute_core::{LeakEvent, NetworkGraph, Node, NodeId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Topology { path: PathBuf, source: TopologyError },
}

impl FormatError {
    pub fn path(&self) -> &Path {
        match self {
            FormatError::Io { path, .. } | FormatError::Parse { path, .. } | FormatError::Topology { path, .. } => path,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, message: impl ToString) -> Self {
        FormatError::Parse { path: path.to_path_buf(), message: message.to_string() }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path).map(BufWriter::new).map_err(|e| FormatError::io(path, e))
}

// ---- topology ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub nodes: Vec<Node>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub borders: Option<Vec<BorderDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeDoc>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BorderDoc {
    pub a: NodeId,
    pub b: NodeId,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub from: NodeId,
    pub to: NodeId,
    pub cost: f64,
}

impl TopologyDoc {
    pub fn into_graph(self) -> Result<NetworkGraph, Result<TopologyError, &'static str>> {
        match (self.borders, self.edges) {
            (Some(b), None) => {
                let borders: Vec<_> = b.iter().map(|b| Border { a: b.a, b: b.b, cost: b.cost }).collect();
                NetworkGraph::from_borders(self.nodes, &borders).map_err(Ok)
            }
            (None, Some(e)) => {
                let edges: Vec<_> = e.iter().map(|e| DirectedEdge { from: e.from, to: e.to, cost: e.cost }).collect();
                NetworkGraph::from_edges(self.nodes, &edges).map_err(Ok)
            }
            (Some(_), Some(_)) => Err(Err("give either `borders` or `edges`, not both")),
            (None, None) => Err(Err("missing `borders` or `edges`")),
        }
    }

    /// Document for `g`; symmetric graphs are written as borders.
    pub fn from_graph(g: &NetworkGraph) -> Self {
        let mut borders = Vec::new();
        let mut edges = Vec::new();
        let symmetric = g.is_symmetric();
        for (i, &(from, to)) in g.edges().iter().enumerate() {
            let cost = g.base_costs()[i];
            if !symmetric {
                edges.push(EdgeDoc { from, to, cost });
            } else if from < to {
                borders.push(BorderDoc { a: from, b: to, cost });
            }
        }
        TopologyDoc {
            nodes: g.nodes().to_vec(),
            borders: symmetric.then_some(borders),
            edges: (!symmetric).then_some(edges),
        }
    }
}

pub fn parse_topology(text: &str, path: &Path) -> Result<NetworkGraph, FormatError> {
    let doc: TopologyDoc = serde_json::from_str(text).map_err(|e| FormatError::parse(path, e))?;
    doc.into_graph().map_err(|e| match e {
        Ok(source) => FormatError::Topology { path: path.to_path_buf(), source },
        Err(msg) => FormatError::parse(path, msg),
    })
}

pub fn read_topology(path: &Path) -> Result<NetworkGraph, FormatError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| FormatError::io(path, e))?;
    parse_topology(&text, path)
}

pub fn write_topology(path: &Path, g: &NetworkGraph) -> Result<(), FormatError> {
    write_json(path, &TopologyDoc::from_graph(g))
}

// ---- leak events ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeakRow {
    seq: u64,
    node_id: u32,
    repair_hours: f64,
    cost: f64,
}

pub const LEAK_CSV_HEADER: [&str; 4] = ["seq", "node_id", "repair_hours", "cost"];

pub fn parse_leaks<R: Read>(reader: R, path: &Path) -> Result<Vec<LeakEvent>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| FormatError::parse(path, e))?.clone();
    if header.iter().ne(LEAK_CSV_HEADER) {
        return Err(FormatError::parse(path, format!("expected header `{}`", LEAK_CSV_HEADER.join(","))));
    }
    let mut events = Vec::new();
    for row in rdr.deserialize::<LeakRow>() {
        let row = row.map_err(|e| FormatError::parse(path, e))?;
        events.push(LeakEvent {
            seq: row.seq,
            node: NodeId(row.node_id),
            repair_hours: row.repair_hours,
            cost: row.cost,
        });
    }
    Ok(events)
}

pub fn read_leaks(path: &Path) -> Result<Vec<LeakEvent>, FormatError> {
    parse_leaks(open(path)?, path)
}

pub fn write_leaks<W: Write>(writer: W, events: &[LeakEvent]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(LEAK_CSV_HEADER)?;
    for e in events {
        w.serialize(LeakRow { seq: e.seq, node_id: e.node.0, repair_hours: e.repair_hours, cost: e.cost })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_leaks_file(path: &Path, events: &[LeakEvent]) -> Result<(), FormatError> {
    write_leaks(create(path)?, events).map_err(|e| FormatError::parse(path, e))
}

// ---- intervention scripts ----

/// Script document: `{"entries": [{"window": 3, "mark": [...], "unmark": [...]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptDoc {
    pub entries: Vec<ScriptEntry>,
}

pub fn read_script(path: &Path) -> Result<Vec<ScriptEntry>, FormatError> {
    let doc: ScriptDoc = read_json(path)?;
    Ok(doc.entries)
}

// ---- json helpers ----

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    serde_json::from_reader(open(path)?).map_err(|e| FormatError::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| FormatError::parse(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| FormatError::io(path, e))
}

// ---- run reports ----

pub const REPORT_FILE: &str = "report.ndjson";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub metadata: RunMetadata,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingDoc {
    pub elapsed_ms: f64,
    pub ms_per_window: f64,
}

/// `report.ndjson` (one window per line) and `summary.json` under `dir`.
/// Timing goes to its own file so that the report stays reproducible.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), FormatError> {
    let path = dir.join(REPORT_FILE);
    let mut w = create(&path)?;
    for window in &report.windows {
        serde_json::to_writer(&mut w, window).map_err(|e| FormatError::parse(&path, e))?;
        w.write_all(b"\n").map_err(|e| FormatError::io(&path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(&path, e))?;
    write_json(
        &dir.join(SUMMARY_FILE),
        &SummaryDoc { metadata: report.metadata.clone(), summary: report.summary.clone() },
    )
}

/// Reads window results from a report file, or from `report.ndjson` inside
/// a directory.
pub fn read_report_windows(path: &Path) -> Result<Vec<WindowResult>, FormatError> {
    let path = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let mut windows = Vec::new();
    for (i, line) in open(&path)?.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let w: WindowResult =
            serde_json::from_str(&line).map_err(|e| FormatError::parse(&path, format!("line {}: {e}", i + 1)))?;
        windows.push(w);
    }
    Ok(windows)
}

// ---- metric series ----

pub const QOPT_DELTA_CSV: &str = "qopt_delta.csv";
pub const PATH_COST_CSV: &str = "path_cost.csv";
pub const LABEL_COUNTS_CSV: &str = "label_counts.csv";

#[derive(Debug, Serialize)]
struct DeltaRow {
    window: usize,
    qopt_delta: f64,
    qopt_delta_max: f64,
}

#[derive(Debug, Serialize)]
struct CostRow {
    window: usize,
    feasible: bool,
    path_cost: Option<f64>,
    path_len: usize,
}

#[derive(Debug, Serialize)]
struct CountRow {
    window: usize,
    leaks: usize,
    dangerous: usize,
    safe: usize,
    isolated: usize,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| FormatError::parse(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// Writes the three metric series under `dir`. The delta series has one row
/// per consecutive window pair, keyed by the later window.
pub fn write_metric_series(dir: &Path, windows: &[WindowResult]) -> Result<[PathBuf; 3], FormatError> {
    let paths = [dir.join(QOPT_DELTA_CSV), dir.join(PATH_COST_CSV), dir.join(LABEL_COUNTS_CSV)];
    write_rows(
        &paths[0],
        windows.iter().filter_map(|w| {
            Some(DeltaRow {
                window: w.window,
                qopt_delta: w.qopt_delta?,
                qopt_delta_max: w.qopt_delta_max.unwrap_or(0.0),
            })
        }),
    )?;
    write_rows(
        &paths[1],
        windows.iter().map(|w| CostRow {
            window: w.window,
            feasible: w.feasible,
            path_cost: w.path_cost,
            path_len: w.path.as_ref().map_or(0, Vec::len),
        }),
    )?;
    write_rows(
        &paths[2],
        windows.iter().map(|w| CountRow {
            window: w.window,
            leaks: w.label_counts.leaks,
            dangerous: w.label_counts.dangerous,
            safe: w.label_counts.safe,
            isolated: w.isolation.len(),
        }),
    )?;
    Ok(paths)
}
