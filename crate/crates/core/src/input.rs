//! Graph and perturbation descriptions read from JSON or short builtin
//! strings. Labels are 1-based in every external format.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use crate::catalog;
use crate::error::{Error, Result};
use crate::graph::{FundEdge, PeriodicGraph, Vertex};
use crate::perturbation::{FinitePatch, Patch, Perturbation};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    dimension: usize,
    cell_size: usize,
    edges: Vec<(usize, usize, Vec<i64>)>,
}

fn zero_based(label: usize, cell_size: usize) -> Result<usize> {
    if label == 0 {
        return Err(Error::Parse("labels are 1-based; got 0".into()));
    }
    if label > cell_size {
        return Err(Error::LabelOutOfRange { label, cell_size });
    }
    Ok(label - 1)
}

/// Parses a periodic graph from its JSON description.
pub fn parse_graph(text: &str) -> Result<PeriodicGraph> {
    let f: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("graph file: {e}")))?;
    let edges = f
        .edges
        .iter()
        .map(|(o, t, idx)| Ok(FundEdge::new(zero_based(*o, f.cell_size)?, zero_based(*t, f.cell_size)?, idx)))
        .collect::<Result<Vec<_>>>()?;
    PeriodicGraph::new(f.dimension, f.cell_size, edges)
}

/// Where a graph comes from: `builtin:<name>` or JSON text.
pub fn resolve_graph(source: &str, read: impl FnOnce(&str) -> std::io::Result<String>) -> Result<ResolvedGraph> {
    match source.strip_prefix("builtin:") {
        Some(name) => {
            let entry = catalog::entry_by_name(name)?;
            Ok(ResolvedGraph { base: entry.base.clone(), entry: Some(entry) })
        }
        None => {
            let text = read(source).map_err(|e| Error::Parse(format!("cannot read {source}: {e}")))?;
            Ok(ResolvedGraph { base: parse_graph(&text)?, entry: None })
        }
    }
}

#[derive(Debug)]
pub struct ResolvedGraph {
    pub base: PeriodicGraph,
    /// Set when the graph came from the catalog; may carry a perturbation.
    pub entry: Option<catalog::CatalogEntry>,
}

/// Splits `name,key=value,...`.
pub fn split_builtin(spec: &str) -> Result<(String, Vec<(String, String)>)> {
    let mut parts = spec.split(',');
    let name = parts.next().unwrap_or_default().trim().to_string();
    if name.is_empty() {
        return Err(Error::Parse("empty builtin name".into()));
    }
    let params = parts
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got {kv:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((name, params))
}

fn parse_vertex(v: &Value, base: &PeriodicGraph, max_label: Option<usize>) -> Result<Vertex> {
    let bad = || Error::Parse(format!("vertex must be [[cell...], label], got {v}"));
    let arr = v.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
    let cell = arr[0]
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|c| c.as_i64().ok_or_else(bad))
        .collect::<Result<Vec<i64>>>()?;
    if cell.len() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), got: cell.len() });
    }
    let label = arr[1].as_u64().ok_or_else(bad)? as usize;
    let label = zero_based(label, max_label.unwrap_or(usize::MAX))?;
    Ok(Vertex::new(&cell, label))
}

fn parse_patch(v: &Value, base: &PeriodicGraph) -> Result<Patch> {
    let obj = v.as_object().ok_or_else(|| Error::Parse("patch must be an object".into()))?;
    for key in obj.keys() {
        if !["removed_vertices", "removed_edges", "added_vertices", "added_edges"].contains(&key.as_str()) {
            return Err(Error::Parse(format!("unknown patch field {key:?}")));
        }
    }
    let list = |key: &str| -> Vec<Value> { obj.get(key).and_then(Value::as_array).cloned().unwrap_or_default() };
    let s = base.cell_size();
    let vertices = |key: &str, max: Option<usize>| -> Result<BTreeSet<Vertex>> {
        list(key).iter().map(|x| parse_vertex(x, base, max)).collect()
    };
    let edges = |key: &str, max: Option<usize>| -> Result<Vec<(Vertex, Vertex)>> {
        list(key)
            .iter()
            .map(|e| match e.as_array().map(Vec::as_slice) {
                Some([a, b]) => Ok((parse_vertex(a, base, max)?, parse_vertex(b, base, max)?)),
                _ => Err(Error::Parse(format!("edge must be [vertex, vertex], got {e}"))),
            })
            .collect()
    };
    Ok(Patch {
        removed_vertices: vertices("removed_vertices", Some(s))?,
        removed_edges: edges("removed_edges", Some(s))?,
        added_vertices: vertices("added_vertices", None)?,
        added_edges: edges("added_edges", None)?,
    })
}

fn value_to_param(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a perturbation: `builtin:<name>[,k=v...]`, or JSON holding either
/// `{"builtin": name, ...params}` or `{"patch": {...}}`.
pub fn resolve_perturbation(
    source: &str,
    base: &PeriodicGraph,
    read: impl FnOnce(&str) -> std::io::Result<String>,
) -> Result<Arc<dyn Perturbation>> {
    if let Some(spec) = source.strip_prefix("builtin:") {
        let (name, params) = split_builtin(spec)?;
        return catalog::perturbation_by_name(base, &name, &params);
    }
    let text = read(source).map_err(|e| Error::Parse(format!("cannot read {source}: {e}")))?;
    parse_perturbation(&text, base)
}

pub fn parse_perturbation(text: &str, base: &PeriodicGraph) -> Result<Arc<dyn Perturbation>> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("perturbation file: {e}")))?;
    let obj = v.as_object().ok_or_else(|| Error::Parse("perturbation must be a JSON object".into()))?;
    match (obj.get("builtin"), obj.get("patch")) {
        (Some(name), None) => {
            let name = name.as_str().ok_or_else(|| Error::Parse("builtin must be a string".into()))?;
            let params: Vec<(String, String)> =
                obj.iter().filter(|(k, _)| *k != "builtin").map(|(k, v)| (k.clone(), value_to_param(v))).collect();
            catalog::perturbation_by_name(base, name, &params)
        }
        (None, Some(patch)) => {
            if obj.len() != 1 {
                return Err(Error::Parse("patch perturbation takes no other fields".into()));
            }
            Ok(Arc::new(FinitePatch::new(base, parse_patch(patch, base)?)?))
        }
        _ => Err(Error::Parse("perturbation needs exactly one of \"builtin\" or \"patch\"".into())),
    }
}
