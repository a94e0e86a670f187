//! Static memory plan: every buffer an execution will ever hold.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::FWindow;
use crate::scalar::Scalar;

use super::{EdgeId, LineageMap, NodeId, QueryGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeMemory {
    pub edge: EdgeId,
    pub label: String,
    /// Slots per window.
    pub capacity: usize,
    pub ring_depth: usize,
    pub bytes: u64,
    /// Set for multicast outputs, which read their producer's ring.
    pub shared_with: Option<EdgeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateMemory {
    pub node: NodeId,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryPlan {
    pub edges: Vec<EdgeMemory>,
    pub states: Vec<StateMemory>,
    pub total_bytes: u64,
}

pub fn plan_memory<T: Scalar>(g: &QueryGraph<T>, lineage: &LineageMap, budget: Option<u64>) -> Result<MemoryPlan> {
    let mut edges = Vec::with_capacity(g.edges.len());
    for (e, edge) in g.edges.iter().enumerate() {
        let capacity = (edge.dimension / edge.props.period()) as usize;
        let phys = g.physical(e);
        let (ring_depth, bytes, shared_with) = if phys == e {
            let depth = lineage.ring_depth[e].max(1);
            let bytes = depth as u64 * FWindow::<T>::bytes_for(capacity, edge.props.width) as u64;
            (depth, bytes, None)
        } else {
            (0, 0, Some(phys))
        };
        edges.push(EdgeMemory {
            edge: e,
            label: g.edge_label(e),
            capacity,
            ring_depth,
            bytes,
            shared_with,
        });
    }
    let states: Vec<StateMemory> = (0..g.nodes.len())
        .filter_map(|n| {
            let out_cap = g.nodes[n].outputs.first().map_or(0, |&e| edges[e].capacity);
            let bytes = g.nodes[n].kind.state_bytes(&g.input_props(n), out_cap) as u64;
            (bytes > 0).then_some(StateMemory { node: n, bytes })
        })
        .collect();
    let total_bytes = edges.iter().map(|e| e.bytes).sum::<u64>() + states.iter().map(|s| s.bytes).sum::<u64>();
    if let Some(budget) = budget {
        if total_bytes > budget {
            return Err(Error::MemoryBudget {
                required: total_bytes,
                budget,
            });
        }
    }
    Ok(MemoryPlan {
        edges,
        states,
        total_bytes,
    })
}
