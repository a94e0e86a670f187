//! Query compilation: graph construction, locality tracing, lineage and
//! static memory planning.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Millis;
use crate::ops::{Lineage, OperatorKind};
use crate::scalar::Scalar;

mod builder;
mod lineage;
mod memory;
mod trace;

pub use crate::ops::EdgeProps;
pub use builder::{QueryBuilder, SourceSpec, StreamId};
pub use lineage::{derive_lineage, Atom, Demand, IndexMap, LineageMap, Step, TimeMap, WindowRange};
pub use memory::{plan_memory, EdgeMemory, MemoryPlan, StateMemory};
pub use trace::{locality_trace, TraceLog};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone)]
pub struct PlanConfig {
    /// Locality tracing aborts when a dimension would exceed this.
    pub dimension_cap: Millis,
    /// Optional ceiling on the static memory plan.
    pub memory_budget: Option<u64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            dimension_cap: 1 << 32,
            memory_budget: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphNode<T> {
    pub name: String,
    pub kind: OperatorKind<T>,
    pub inputs: Vec<EdgeId>,
    pub outputs: Vec<EdgeId>,
}

#[derive(Debug, Clone)]
pub struct GraphEdge {
    pub from: NodeId,
    /// Consumer node and its input port; `None` for the sink edge.
    pub to: Option<(NodeId, usize)>,
    pub props: EdgeProps,
    pub dimension: Millis,
}

/// Operator DAG with nodes in topological order (inputs before consumers).
#[derive(Debug, Clone)]
pub struct QueryGraph<T> {
    pub nodes: Vec<GraphNode<T>>,
    pub edges: Vec<GraphEdge>,
    pub sink: EdgeId,
}

impl<T: Scalar> QueryGraph<T> {
    pub fn edge_label(&self, e: EdgeId) -> String {
        let edge = &self.edges[e];
        let d = edge.props.descriptor;
        format!("({},{})[{}]", d.offset, d.period, edge.dimension)
    }

    /// Source node names followed by the chain of first inputs down to `n`.
    pub fn path(&self, n: NodeId) -> String {
        let mut chain = vec![self.nodes[n].name.as_str()];
        let mut cur = n;
        while let Some(&e) = self.nodes[cur].inputs.first() {
            cur = self.edges[e].from;
            chain.push(self.nodes[cur].name.as_str());
        }
        chain.reverse();
        chain.join(" > ")
    }

    /// Physical edge holding the data of `e`: multicast outputs alias their input.
    pub fn physical(&self, mut e: EdgeId) -> EdgeId {
        loop {
            let n = &self.nodes[self.edges[e].from];
            match n.kind {
                OperatorKind::Multicast { .. } => e = n.inputs[0],
                _ => return e,
            }
        }
    }

    pub fn source_nodes(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.kind {
            OperatorKind::Source { index, .. } => Some((i, index)),
            _ => None,
        })
    }

    pub fn input_props(&self, n: NodeId) -> Vec<EdgeProps> {
        self.nodes[n].inputs.iter().map(|&e| self.edges[e].props).collect()
    }

    pub fn output_props(&self, n: NodeId) -> Option<EdgeProps> {
        self.nodes[n].outputs.first().map(|&e| self.edges[e].props)
    }

    pub fn output_dimension(&self, n: NodeId) -> Option<Millis> {
        self.nodes[n].outputs.first().map(|&e| self.edges[e].dimension)
    }

    /// Lineage of every input of `n` under the current dimensions.
    pub fn node_lineage(&self, n: NodeId) -> Vec<Lineage> {
        let Some(out) = self.output_props(n) else {
            return Vec::new();
        };
        let dim = self.output_dimension(n).unwrap_or(out.period());
        self.nodes[n].kind.lineage(&self.input_props(n), &out, dim)
    }
}

/// A compiled query.
pub struct Plan<T> {
    pub graph: QueryGraph<T>,
    pub sources: Vec<crate::plan::SourceSpec>,
    pub trace: TraceLog,
    pub lineage: LineageMap,
    pub memory: MemoryPlan,
    pub warnings: Vec<String>,
}

impl<T: Scalar> Plan<T> {
    pub fn sink_edge(&self) -> &GraphEdge {
        &self.graph.edges[self.graph.sink]
    }

    pub fn sink_props(&self) -> EdgeProps {
        self.sink_edge().props
    }

    /// Deterministic report: one line per edge, then state and totals.
    pub fn dump(&self) -> String {
        let g = &self.graph;
        let mut s = String::new();
        for (e, edge) in g.edges.iter().enumerate() {
            let from = &g.nodes[edge.from].name;
            let to = edge
                .to
                .map_or_else(|| "sink".to_string(), |(n, _)| g.nodes[n].name.clone());
            let m = &self.memory.edges[e];
            let storage = match m.shared_with {
                Some(p) => format!("shares e{p}"),
                None => format!("ring={} bytes={}", m.ring_depth, m.bytes),
            };
            let _ = writeln!(
                s,
                "e{e} {from} -> {to} {} width={} cap={} {storage}",
                g.edge_label(e),
                edge.props.width,
                m.capacity,
            );
        }
        for st in &self.memory.states {
            let _ = writeln!(s, "state {} bytes={}", g.nodes[st.node].name, st.bytes);
        }
        let _ = writeln!(s, "total bytes={}", self.memory.total_bytes);
        s
    }
}

fn resolve<T>(b: &QueryBuilder<T>, s: StreamId) -> Result<(usize, usize)> {
    let mut cur = s;
    for _ in 0..=b.streams.len() {
        let st = &b.streams[cur.0];
        if let Some(p) = st.producer {
            return Ok(p);
        }
        match st.bound {
            Some(next) => cur = next,
            None => {
                return Err(Error::plan(
                    format!("stream#{}", s.0),
                    "placeholder was never bound to a stream",
                ))
            }
        }
    }
    Err(Error::plan(
        format!("stream#{}", s.0),
        "placeholder bindings form a loop",
    ))
}

pub(crate) fn compile<T: Scalar>(b: QueryBuilder<T>, sink: StreamId, config: &PlanConfig) -> Result<Plan<T>> {
    let mut warnings = Vec::new();
    let (sink_node, sink_port) = resolve(&b, sink)?;

    // Resolved inputs of every builder node.
    let inputs: Vec<Vec<(usize, usize)>> = b
        .nodes
        .iter()
        .map(|n| n.inputs.iter().map(|&s| resolve(&b, s)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let label = |i: usize| -> String {
        b.nodes[i]
            .name
            .clone()
            .unwrap_or_else(|| format!("{}#{i}", b.nodes[i].kind.label()))
    };

    // Depth-first post-order from the sink gives a topological order; a grey
    // node reached again closes a cycle.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark = vec![Mark::White; b.nodes.len()];
    let mut order = Vec::new();
    let mut stack: Vec<(usize, usize)> = vec![(sink_node, 0)];
    mark[sink_node] = Mark::Grey;
    while let Some(&mut (n, ref mut next)) = stack.last_mut() {
        if *next < inputs[n].len() {
            let (m, _) = inputs[n][*next];
            *next += 1;
            match mark[m] {
                Mark::White => {
                    mark[m] = Mark::Grey;
                    stack.push((m, 0));
                }
                Mark::Grey => {
                    let start = stack.iter().position(|&(x, _)| x == m).unwrap_or(0);
                    let cycle: Vec<String> = stack[start..].iter().map(|&(x, _)| label(x)).collect();
                    return Err(Error::plan(cycle.join(" > "), "query graph contains a cycle"));
                }
                Mark::Black => {}
            }
        } else {
            mark[n] = Mark::Black;
            order.push(n);
            stack.pop();
        }
    }
    for (i, m) in mark.iter().enumerate() {
        if *m == Mark::White {
            warnings.push(format!("{} does not reach the sink and was dropped", label(i)));
        }
    }

    // Each produced stream feeds exactly one consumer.
    let mut consumers: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    for &n in &order {
        for (port, &src) in inputs[n].iter().enumerate() {
            consumers.entry(src).or_default().push((n, port));
        }
    }
    if let Some(c) = consumers.get(&(sink_node, sink_port)) {
        if !c.is_empty() {
            return Err(Error::plan(
                label(sink_node),
                "the sink stream is also consumed inside the query; fork it with multicast",
            ));
        }
    }
    for (&(n, _), c) in &consumers {
        if c.len() > 1 {
            return Err(Error::plan(
                label(n),
                format!("stream is consumed {} times; fork it with multicast", c.len()),
            ));
        }
    }

    let new_id: HashMap<usize, NodeId> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut nodes: Vec<GraphNode<T>> = order
        .iter()
        .map(|&n| GraphNode {
            name: match (&b.nodes[n].name, &b.nodes[n].kind) {
                (Some(name), _) => name.clone(),
                (None, OperatorKind::Source { spec, .. }) => spec.name.clone(),
                (None, k) => format!("{}#{}", k.label(), new_id[&n]),
            },
            kind: b.nodes[n].kind.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
        .collect();

    let placeholder_props = EdgeProps::new(Default::default(), 1, 1, 1);
    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut edge_of: HashMap<(usize, usize), EdgeId> = HashMap::new();
    let mut sink_edge = None;
    for &n in &order {
        if let OperatorKind::Multicast { n: k } = b.nodes[n].kind {
            if k == 0 {
                return Err(Error::plan(label(n), "multicast needs at least one branch"));
            }
        }
        for port in 0..b.nodes[n].kind.outputs() {
            let to = consumers.get(&(n, port)).and_then(|c| c.first()).copied();
            let is_sink = (n, port) == (sink_node, sink_port);
            if to.is_none() && !is_sink {
                warnings.push(format!("{} output {port} has no consumer (dead branch)", label(n)));
                continue;
            }
            let id = edges.len();
            edges.push(GraphEdge {
                from: new_id[&n],
                to: to.map(|(c, p)| (new_id[&c], p)),
                props: placeholder_props,
                dimension: 1,
            });
            nodes[new_id[&n]].outputs.push(id);
            edge_of.insert((n, port), id);
            if is_sink {
                sink_edge = Some(id);
            }
        }
    }
    for &n in &order {
        nodes[new_id[&n]].inputs = inputs[n].iter().map(|src| edge_of[src]).collect();
    }
    let mut graph = QueryGraph {
        nodes,
        edges,
        sink: sink_edge.ok_or_else(|| Error::plan(label(sink_node), "sink edge missing"))?,
    };

    for n in 0..graph.nodes.len() {
        let ins = graph.input_props(n);
        let out = graph.nodes[n]
            .kind
            .derive(&ins)
            .map_err(|m| Error::plan(graph.path(n), m))?;
        for &e in &graph.nodes[n].outputs.clone() {
            graph.edges[e].props = out;
            graph.edges[e].dimension = out.period();
        }
    }
    for st in &b.streams {
        if let (Some(declared), Some(_)) = (st.declared, st.bound) {
            if let Some(&e) = st.bound.and_then(|t| resolve(&b, t).ok()).and_then(|p| edge_of.get(&p)) {
                if graph.edges[e].props != declared {
                    return Err(Error::plan(
                        graph.path(graph.edges[e].from),
                        "bound stream does not match the placeholder's declared properties",
                    ));
                }
            }
        }
    }
    let sources = b.sources.clone();
    for (_, idx) in graph.source_nodes() {
        if idx >= sources.len() {
            return Err(Error::plan("sources", "source index out of range"));
        }
    }

    let trace = locality_trace(&mut graph, config.dimension_cap)?;
    let lineage = derive_lineage(&graph);
    let memory = plan_memory(&graph, &lineage, config.memory_budget)?;
    Ok(Plan {
        graph,
        sources,
        trace,
        lineage,
        memory,
        warnings,
    })
}
