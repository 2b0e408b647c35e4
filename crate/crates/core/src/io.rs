//! File formats. Node and edge numbers are 1-based in every file and
//! message; the library itself is 0-based.
//!
//! Graph JSON:
//!
//! ```json
//! {"nodes": 3, "edges": [[1, 2], [1, 3], [2, 3]], "traffic": [1.0, 0.0]}
//! ```
//!
//! `traffic` may be omitted (all zeros) but, if present, must list exactly
//! `nodes - 1` values. The edge-list format has one `r s` pair per line and
//! takes traffic from a sidecar file with one value per line; blank lines and
//! lines starting with `#` are skipped in both.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::GraphError;
use crate::graph::{FlowState, NetworkGraph, TrafficVector};
use crate::solver::{IterationRecord, SolveReport};

/// A parsed routing problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub graph: NetworkGraph,
    pub traffic: TrafficVector,
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: String,
        field: String,
        message: String,
    },
    #[error("{path}: line {line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    EdgeList,
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|source| InputError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a problem. `traffic` names the sidecar file and is only valid for
/// the edge-list format.
pub fn load_problem(
    path: &Path,
    format: GraphFormat,
    traffic: Option<&Path>,
) -> Result<Problem, InputError> {
    match format {
        GraphFormat::Json => {
            if let Some(extra) = traffic {
                return Err(InputError::Invalid {
                    path: extra.display().to_string(),
                    message: "a traffic file is only used with the edge-list format; \
                              JSON graphs carry their own `traffic` field"
                        .into(),
                });
            }
            parse_graph_json(&read(path)?, &path.display().to_string())
        }
        GraphFormat::EdgeList => {
            let sidecar = match traffic {
                Some(t) => Some((read(t)?, t.display().to_string())),
                None => None,
            };
            parse_edge_list(
                &read(path)?,
                &path.display().to_string(),
                sidecar.as_ref().map(|(text, name)| (text.as_str(), name.as_str())),
            )
        }
    }
}

#[derive(Deserialize)]
struct RawGraph {
    nodes: i64,
    edges: Vec<[i64; 2]>,
    #[serde(default)]
    traffic: Option<Vec<f64>>,
}

/// Renders a construction error with 1-based node and edge numbers.
pub fn describe_graph_error(err: &GraphError, node_count: usize) -> String {
    match *err {
        GraphError::Disconnected { node } => format!(
            "graph is disconnected: node {} cannot reach destination node {node_count}",
            node + 1
        ),
        GraphError::NodeOutOfRange { edge, node, .. } => {
            format!("edge {} references node {} outside 1..={node_count}", edge + 1, node + 1)
        }
        GraphError::SelfLoop { edge, node } => {
            format!("edge {} is a self-loop on node {}", edge + 1, node + 1)
        }
        GraphError::Misoriented { edge, r, s } => format!(
            "edge {} is ({}, {}); endpoints must be listed low to high",
            edge + 1,
            r + 1,
            s + 1
        ),
        GraphError::DuplicateEdge { edge, r, s } => {
            format!("edge {} duplicates ({}, {})", edge + 1, r + 1, s + 1)
        }
        GraphError::InvalidTraffic { node, value } => format!(
            "traffic at node {} is {value}; it must be finite and non-negative",
            node + 1
        ),
        ref other => other.to_string(),
    }
}

fn check_edge(r: i64, s: i64, node_count: usize, seen: &mut Vec<(usize, usize)>) -> Result<(usize, usize), String> {
    for v in [r, s] {
        if v < 1 || v as u64 > node_count as u64 {
            return Err(format!("node {v} is outside 1..={node_count}"));
        }
    }
    if r == s {
        return Err(format!("self-loop on node {r}"));
    }
    if r > s {
        return Err(format!("pair ({r}, {s}) must be listed low to high, as ({s}, {r})"));
    }
    let edge = (r as usize - 1, s as usize - 1);
    if seen.contains(&edge) {
        return Err(format!("duplicate edge ({r}, {s})"));
    }
    seen.push(edge);
    Ok(edge)
}

fn finish(
    node_count: usize,
    edges: Vec<(usize, usize)>,
    traffic: Vec<f64>,
    path: &str,
) -> Result<Problem, InputError> {
    let graph = NetworkGraph::new(node_count, edges).map_err(|e| InputError::Invalid {
        path: path.to_string(),
        message: describe_graph_error(&e, node_count),
    })?;
    let traffic = TrafficVector::new(traffic).map_err(|e| InputError::Invalid {
        path: path.to_string(),
        message: describe_graph_error(&e, node_count),
    })?;
    Ok(Problem { graph, traffic })
}

fn check_traffic(value: f64) -> Result<f64, String> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(format!("traffic must be finite and non-negative, got {value}"))
    }
}

/// Parses the graph JSON format; `path` only labels diagnostics.
pub fn parse_graph_json(text: &str, path: &str) -> Result<Problem, InputError> {
    let raw: RawGraph = serde_json::from_str(text).map_err(|e| InputError::Syntax {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string().split(" at line").next().unwrap_or_default().to_string(),
    })?;
    let field = |field: String, message: String| InputError::Field {
        path: path.to_string(),
        field,
        message,
    };
    if raw.nodes < 2 {
        return Err(field("nodes".into(), format!("need at least 2 nodes, got {}", raw.nodes)));
    }
    let node_count = raw.nodes as usize;
    let mut edges = Vec::with_capacity(raw.edges.len());
    for (k, &[r, s]) in raw.edges.iter().enumerate() {
        check_edge(r, s, node_count, &mut edges).map_err(|m| field(format!("edges[{k}]"), m))?;
    }
    let traffic = match raw.traffic {
        None => vec![0.0; node_count - 1],
        Some(values) => {
            if values.len() != node_count - 1 {
                return Err(field(
                    "traffic".into(),
                    format!(
                        "has {} entries; expected {} (one per node except the destination)",
                        values.len(),
                        node_count - 1
                    ),
                ));
            }
            for (k, &v) in values.iter().enumerate() {
                check_traffic(v).map_err(|m| field(format!("traffic[{k}]"), m))?;
            }
            values
        }
    };
    finish(node_count, edges, traffic, path)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses the edge-list format. Without a traffic sidecar the node count is
/// the largest node number used and all traffic is zero; with one, it is
/// one more than the number of traffic values.
pub fn parse_edge_list(
    text: &str,
    path: &str,
    traffic: Option<(&str, &str)>,
) -> Result<Problem, InputError> {
    let line_error = |path: &str, line: usize, message: String| InputError::Line {
        path: path.to_string(),
        line,
        message,
    };
    let mut pairs = Vec::new();
    for (line, content) in content_lines(text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(line_error(
                path,
                line,
                format!("expected two node numbers `r s`, found {} fields", fields.len()),
            ));
        }
        let mut ends = [0i64; 2];
        for (slot, text) in ends.iter_mut().zip(&fields) {
            *slot = text
                .parse()
                .map_err(|_| line_error(path, line, format!("`{text}` is not a node number")))?;
        }
        pairs.push((line, ends));
    }

    let values = match traffic {
        Some((text, name)) => {
            let mut values = Vec::new();
            for (line, content) in content_lines(text) {
                let v: f64 = content
                    .parse()
                    .map_err(|_| line_error(name, line, format!("`{content}` is not a number")))?;
                values.push(check_traffic(v).map_err(|m| line_error(name, line, m))?);
            }
            Some(values)
        }
        None => None,
    };
    let node_count = match &values {
        Some(v) => v.len() + 1,
        None => pairs
            .iter()
            .flat_map(|(_, e)| e.iter().copied())
            .max()
            .unwrap_or(0)
            .max(0) as usize,
    };
    if node_count < 2 {
        return Err(InputError::Invalid {
            path: path.to_string(),
            message: format!("need at least 2 nodes, got {node_count}"),
        });
    }
    let mut edges = Vec::with_capacity(pairs.len());
    for (line, [r, s]) in pairs {
        check_edge(r, s, node_count, &mut edges).map_err(|m| line_error(path, line, m))?;
    }
    finish(
        node_count,
        edges,
        values.unwrap_or_else(|| vec![0.0; node_count - 1]),
        path,
    )
}

/// Fixed six-decimal rendering; never prints a negative zero.
pub fn fixed(value: f64) -> String {
    let text = format!("{value:.6}");
    if text.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        text.trim_start_matches('-').to_string()
    } else {
        text
    }
}

#[derive(Serialize, Deserialize)]
struct FlowRow {
    edge_index: usize,
    r: usize,
    s: usize,
    flow: f64,
}

#[derive(Serialize)]
struct FlowReport<'a> {
    p: f64,
    seed: Option<u64>,
    converged: bool,
    termination: &'a str,
    cost: f64,
    feasibility_residual: f64,
    outer_iterations: usize,
    flows: Vec<FlowRow>,
}

#[derive(Deserialize)]
struct FlowFile {
    flows: Vec<FlowRow>,
}

fn flow_rows(graph: &NetworkGraph, flows: &FlowState) -> Vec<FlowRow> {
    graph
        .edges()
        .iter()
        .zip(flows.as_slice())
        .enumerate()
        .map(|(m, (&(r, s), &flow))| FlowRow {
            edge_index: m + 1,
            r: r + 1,
            s: s + 1,
            flow,
        })
        .collect()
}

pub const FLOWS_HEADER: &str = "edge_index,r,s,flow";
pub const TRACE_HEADER: &str = "iter,cost,feasibility_residual,correction_norm,inner_sweeps,step_length";
pub const SWEEP_HEADER: &str = "p,cost,cut_max,cut_min,cut_cv,converged";

pub fn flows_csv(graph: &NetworkGraph, flows: &FlowState) -> String {
    let mut out = format!("{FLOWS_HEADER}\n");
    for row in flow_rows(graph, flows) {
        let _ = writeln!(out, "{},{},{},{}", row.edge_index, row.r, row.s, fixed(row.flow));
    }
    out
}

pub fn flows_json(graph: &NetworkGraph, report: &SolveReport, p: f64, seed: Option<u64>) -> String {
    let doc = FlowReport {
        p,
        seed,
        converged: report.converged,
        termination: report.termination.as_str(),
        cost: report.cost,
        feasibility_residual: report.feasibility_residual,
        outer_iterations: report.trace.len(),
        flows: flow_rows(graph, &report.flows),
    };
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for row in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iter,
            fixed(row.cost),
            fixed(row.feasibility_residual),
            fixed(row.correction_norm),
            row.inner_sweeps,
            fixed(row.step_length)
        );
    }
    out
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    cost: f64,
    feasibility_residual: f64,
    correction_norm: f64,
    inner_sweeps: usize,
    step_length: f64,
}

pub fn trace_json(trace: &[IterationRecord], seed: Option<u64>) -> String {
    #[derive(Serialize)]
    struct Doc {
        seed: Option<u64>,
        trace: Vec<TraceRow>,
    }
    let doc = Doc {
        seed,
        trace: trace
            .iter()
            .map(|r| TraceRow {
                iter: r.iter,
                cost: r.cost,
                feasibility_residual: r.feasibility_residual,
                correction_norm: r.correction_norm,
                inner_sweeps: r.inner_sweeps,
                step_length: r.step_length,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("trace serializes") + "\n"
}

/// One row of a p-sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub cost: f64,
    pub cut_max: f64,
    pub cut_min: f64,
    pub cut_cv: f64,
    pub converged: bool,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fixed(row.p),
            fixed(row.cost),
            fixed(row.cut_max),
            fixed(row.cut_min),
            fixed(row.cut_cv),
            row.converged
        );
    }
    out
}

pub fn sweep_json(rows: &[SweepRow], seed: Option<u64>) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        seed: Option<u64>,
        rows: &'a [SweepRow],
    }
    serde_json::to_string_pretty(&Doc { seed, rows }).expect("sweep serializes") + "\n"
}

/// Reads a flows file written by [`flows_csv`] or [`flows_json`] and checks
/// that it lists the edges of `graph` in order.
pub fn parse_flows(text: &str, path: &str, graph: &NetworkGraph) -> Result<FlowState, InputError> {
    let rows: Vec<(usize, FlowRow)> = if text.trim_start().starts_with('{') {
        let file: FlowFile = serde_json::from_str(text).map_err(|e| InputError::Syntax {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string().split(" at line").next().unwrap_or_default().to_string(),
        })?;
        file.flows.into_iter().enumerate().map(|(k, r)| (k + 1, r)).collect()
    } else {
        let mut lines = content_lines(text);
        match lines.next() {
            Some((_, header)) if header == FLOWS_HEADER => {}
            Some((line, _)) => {
                return Err(InputError::Line {
                    path: path.to_string(),
                    line,
                    message: format!("expected header `{FLOWS_HEADER}`"),
                })
            }
            None => {
                return Err(InputError::Invalid {
                    path: path.to_string(),
                    message: "empty flows file".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (line, content) in lines {
            let bad = |message: String| InputError::Line {
                path: path.to_string(),
                line,
                message,
            };
            let cells: Vec<&str> = content.split(',').map(str::trim).collect();
            if cells.len() != 4 {
                return Err(bad(format!("expected 4 columns, found {}", cells.len())));
            }
            let int = |k: usize| -> Result<usize, InputError> {
                cells[k]
                    .parse()
                    .map_err(|_| bad(format!("`{}` is not a non-negative integer", cells[k])))
            };
            let flow = cells[3]
                .parse()
                .map_err(|_| bad(format!("`{}` is not a number", cells[3])))?;
            rows.push((
                line,
                FlowRow {
                    edge_index: int(0)?,
                    r: int(1)?,
                    s: int(2)?,
                    flow,
                },
            ));
        }
        rows
    };
    if rows.len() != graph.edge_count() {
        return Err(InputError::Invalid {
            path: path.to_string(),
            message: format!("{} flow rows for a graph with {} edges", rows.len(), graph.edge_count()),
        });
    }
    let mut loads = Vec::with_capacity(rows.len());
    for (m, (line, row)) in rows.into_iter().enumerate() {
        let (r, s) = graph.edge(m);
        if row.edge_index != m + 1 || row.r != r + 1 || row.s != s + 1 {
            return Err(InputError::Line {
                path: path.to_string(),
                line,
                message: format!(
                    "row ({}, {}, {}) does not match edge {} = ({}, {})",
                    row.edge_index,
                    row.r,
                    row.s,
                    m + 1,
                    r + 1,
                    s + 1
                ),
            });
        }
        if !row.flow.is_finite() {
            return Err(InputError::Line {
                path: path.to_string(),
                line,
                message: "flow must be finite".into(),
            });
        }
        loads.push(row.flow);
    }
    Ok(FlowState::new(loads))
}

pub fn load_flows(path: &Path, graph: &NetworkGraph) -> Result<FlowState, InputError> {
    parse_flows(&read(path)?, &path.display().to_string(), graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{"nodes": 3, "edges": [[1, 2], [1, 3], [2, 3]], "traffic": [1, 0]}"#;

    #[test]
    fn reads_the_triangle() {
        let p = parse_graph_json(TRIANGLE, "t.json").unwrap();
        assert_eq!(p.graph.node_count(), 3);
        assert_eq!(p.graph.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(p.traffic.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn missing_traffic_defaults_to_zero_but_short_traffic_is_an_error() {
        let p = parse_graph_json(r#"{"nodes": 3, "edges": [[1, 2], [2, 3]]}"#, "g").unwrap();
        assert_eq!(p.traffic.as_slice(), &[0.0, 0.0]);
        let err = parse_graph_json(r#"{"nodes": 3, "edges": [[1, 2], [2, 3]], "traffic": [1]}"#, "g")
            .unwrap_err();
        assert!(err.to_string().contains("field `traffic`"), "{err}");
    }

    #[test]
    fn json_diagnostics_name_the_field_or_position() {
        let cases = [
            (r#"{"nodes": 3, "edges": [[1, 2], [3, 2]]}"#, "edges[1]"),
            (r#"{"nodes": 3, "edges": [[1, 4]]}"#, "edges[0]"),
            (r#"{"nodes": 3, "edges": [[1, 2], [1, 2]]}"#, "duplicate"),
            (r#"{"nodes": 3, "edges": [[2, 2]]}"#, "self-loop"),
            (r#"{"nodes": 1, "edges": []}"#, "field `nodes`"),
            (r#"{"nodes": 3, "edges": [[1, 2], [2, 3]], "traffic": [1, -2]}"#, "traffic[1]"),
            ("{\"nodes\": 3,\n \"edges\": [[1, 2] [2, 3]]}", "line 2"),
        ];
        for (text, needle) in cases {
            let err = parse_graph_json(text, "g.json").unwrap_err().to_string();
            assert!(err.contains(needle), "{err} should mention {needle}");
        }
    }

    #[test]
    fn disconnected_graph_names_a_node() {
        let err = parse_graph_json(r#"{"nodes": 4, "edges": [[1, 2], [3, 4]]}"#, "g")
            .unwrap_err()
            .to_string();
        assert!(err.contains("node 1 cannot reach destination node 4"), "{err}");
    }

    #[test]
    fn edge_list_with_sidecar() {
        let p = parse_edge_list("# triangle\n1 2\n1 3\n\n2 3\n", "g", Some(("1.0\n0\n", "t"))).unwrap();
        assert_eq!(p.graph.edge_count(), 3);
        assert_eq!(p.traffic.as_slice(), &[1.0, 0.0]);

        let p = parse_edge_list("1 2\n2 3\n", "g", None).unwrap();
        assert_eq!(p.graph.node_count(), 3);

        let err = parse_edge_list("1 2\n2 x\n", "g", None).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_edge_list("1 2\n2 4\n", "g", Some(("1\n0\n", "t"))).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("outside"), "{err}");
        let err = parse_edge_list("1 2\n", "g", Some(("abc\n", "t"))).unwrap_err().to_string();
        assert!(err.starts_with("t: line 1"), "{err}");
    }

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed(1.0 / 3.0), "0.333333");
        assert_eq!(fixed(-1e-9), "0.000000");
        assert_eq!(fixed(-0.5), "-0.500000");
        assert_eq!(fixed(2.0), "2.000000");
    }

    #[test]
    fn flows_round_trip_through_both_formats() {
        let p = parse_graph_json(TRIANGLE, "t").unwrap();
        let flows = FlowState::new(vec![1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]);
        let csv = flows_csv(&p.graph, &flows);
        assert_eq!(csv, "edge_index,r,s,flow\n1,1,2,0.333333\n2,1,3,0.666667\n3,2,3,0.333333\n");
        let back = parse_flows(&csv, "f.csv", &p.graph).unwrap();
        assert!((back[1] - 0.666667).abs() < 1e-12);

        let json = r#"{"flows": [{"edge_index": 1, "r": 1, "s": 2, "flow": 0.1},
            {"edge_index": 2, "r": 1, "s": 3, "flow": 0.9},
            {"edge_index": 3, "r": 2, "s": 3, "flow": 0.1}]}"#;
        assert_eq!(parse_flows(json, "f.json", &p.graph).unwrap().as_slice(), &[0.1, 0.9, 0.1]);

        let wrong = "edge_index,r,s,flow\n1,1,2,0.5\n2,2,3,0.5\n3,1,3,0.5\n";
        assert!(parse_flows(wrong, "f", &p.graph).unwrap_err().to_string().contains("line 3"));
    }

    #[test]
    fn trace_header_is_exact() {
        assert_eq!(
            trace_csv(&[]),
            "iter,cost,feasibility_residual,correction_norm,inner_sweeps,step_length\n"
        );
    }
}
