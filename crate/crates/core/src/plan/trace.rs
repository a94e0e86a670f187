//! Locality tracing: unify the window dimension of every operator's edges.
//!
//! Sweeps run from the sink towards the sources. A node whose edges disagree
//! has all of them set to the least common multiple, which can unsettle a
//! neighbour already visited; sweeps repeat until nothing changes.

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::model::Millis;
use crate::ops::OperatorKind;
use crate::scalar::Scalar;

use super::{EdgeId, QueryGraph};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub lines: Vec<String>,
    pub sweeps: usize,
}

impl TraceLog {
    pub fn contains(&self, needle: &str) -> bool {
        self.lines.iter().any(|l| l.contains(needle))
    }
}

/// Edges of node `n` with the time unit each dimension is measured in.
/// Alter-period nodes compare slot counts, every other node compares time.
fn node_edges<T: Scalar>(g: &QueryGraph<T>, n: usize) -> Vec<(EdgeId, Millis)> {
    let node = &g.nodes[n];
    let scaled = matches!(node.kind, OperatorKind::AlterPeriod { .. });
    let unit = |e: EdgeId| if scaled { g.edges[e].props.period() } else { 1 };
    node.inputs
        .iter()
        .chain(node.outputs.iter())
        .map(|&e| (e, unit(e)))
        .collect()
}

pub fn locality_trace<T: Scalar>(g: &mut QueryGraph<T>, cap: Millis) -> Result<TraceLog> {
    let mut log = TraceLog::default();
    let n = g.nodes.len();
    let max_sweeps = n * n + 1;
    loop {
        log.sweeps += 1;
        let mut changed = false;
        for node in (0..n).rev() {
            let edges = node_edges(g, node);
            if edges.len() < 2 && g.nodes[node].kind.intrinsic_dimension().is_none() {
                continue;
            }
            let mut units: Vec<i128> = edges.iter().map(|&(e, u)| (g.edges[e].dimension / u) as i128).collect();
            if let Some(w) = g.nodes[node].kind.intrinsic_dimension() {
                units.push(w as i128);
            }
            let target = units.iter().fold(1i128, |acc, &x| acc.lcm(&x));
            if edges.iter().all(|&(e, u)| g.edges[e].dimension == target as Millis * u) {
                continue;
            }
            let too_big = edges
                .iter()
                .map(|&(_, u)| target * u as i128)
                .find(|&d| d > cap as i128);
            if let Some(d) = too_big {
                let periods: Vec<String> = edges
                    .iter()
                    .map(|&(e, _)| g.edges[e].props.period().to_string())
                    .collect();
                return Err(Error::DimensionOverflow {
                    node: g.path(node),
                    dimension: d as u128,
                    cap,
                    periods: periods.join(", "),
                });
            }
            let before: Vec<String> = edges.iter().map(|&(e, _)| g.edge_label(e)).collect();
            for &(e, u) in &edges {
                g.edges[e].dimension = target as Millis * u;
            }
            let shown = match edges.iter().map(|&(_, u)| u).max() {
                Some(u) if u > 1 => format!("{target} slots"),
                _ => target.to_string(),
            };
            log.lines.push(format!(
                "sweep {}: {} {} -> set to {}",
                log.sweeps,
                g.nodes[node].name,
                before.join(" "),
                shown
            ));
            changed = true;
        }
        if !changed {
            return Ok(log);
        }
        if log.sweeps > max_sweeps {
            return Err(Error::Invariant(format!(
                "locality tracing did not settle after {max_sweeps} sweeps"
            )));
        }
    }
}
