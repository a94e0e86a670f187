//! Plan execution.
//!
//! Execution pulls sink windows one at a time. Producing window `j` of an
//! edge first ensures the input windows named by the node's lineage, then
//! runs the kernel into a ring slot. Every buffer is acquired in
//! [`Execution::new`]; the run loops only move windows in and out of rings.
//!
//! The eager run visits every sink window in the data span. The targeted run
//! asks the demand formula for the next sink window whose lineage reaches
//! available source data and skips the rest.

use std::time::Instant;

use serde::Serialize;

use crate::alloc_counter;
use crate::error::{Error, Result};
use crate::model::Timestamp;
use crate::ops::kernels::{apply, Scratch};
use crate::ops::OperatorKind;
use crate::plan::{EdgeId, Plan};
use crate::ring::Ring;
use crate::scalar::Scalar;

mod sink;
mod source;

pub use sink::{ChecksumSink, CollectSink, CsvSink, Sink};
pub use source::{ingest_csv, AvailabilityIndex, IngestOptions, SourceData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Eager,
    Targeted,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eager" => Ok(Engine::Eager),
            "targeted" => Ok(Engine::Targeted),
            _ => Err(Error::param(format!("unknown engine {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionStats {
    pub windows_processed: u64,
    pub windows_skipped: u64,
    /// Kernel invocations per node, in plan order.
    pub node_windows: Vec<u64>,
    pub events_in: u64,
    pub events_out: u64,
    pub wall_ms: f64,
    /// Allocations made by the engine after the first sink window; `None`
    /// unless the counting allocator is installed.
    pub steady_state_allocations: Option<u64>,
}

impl ExecutionStats {
    pub fn total_windows(&self) -> u64 {
        self.windows_processed + self.windows_skipped
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

pub struct Execution<'a, T> {
    plan: &'a Plan<T>,
    sources: &'a [SourceData<T>],
    /// Per edge; `None` for edges that alias another ring.
    rings: Vec<Option<Ring<T>>>,
    scratch: Vec<Scratch<T>>,
    node_windows: Vec<u64>,
    events_in: u64,
}

impl<'a, T: Scalar> Execution<'a, T> {
    pub fn new(plan: &'a Plan<T>, sources: &'a [SourceData<T>]) -> Result<Self> {
        if sources.len() != plan.sources.len() {
            return Err(Error::param(format!(
                "query declares {} sources, {} supplied",
                plan.sources.len(),
                sources.len()
            )));
        }
        for (d, spec) in sources.iter().zip(&plan.sources) {
            d.check(spec)?;
        }
        let g = &plan.graph;
        let rings = g
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let m = &plan.memory.edges[e];
                if m.shared_with.is_some() {
                    Ok(None)
                } else {
                    Ring::new(edge.props.descriptor, edge.dimension, m.ring_depth).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let scratch = (0..g.nodes.len())
            .map(|n| {
                let cap = g.nodes[n].outputs.first().map_or(0, |&e| plan.memory.edges[e].capacity);
                Scratch::for_kind(&g.nodes[n].kind, &g.input_props(n), cap)
            })
            .collect();
        Ok(Execution {
            plan,
            sources,
            rings,
            scratch,
            node_windows: vec![0; g.nodes.len()],
            events_in: 0,
        })
    }

    pub fn plan(&self) -> &Plan<T> {
        self.plan
    }

    /// Sink window indices `[first, end)` that can hold output.
    pub fn span(&self) -> (i64, i64) {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for atom in self.plan.lineage.atoms.iter().filter(|a| a.demanded) {
            if let Some((s, e)) = self.sources[atom.source].availability().extent() {
                let (a, b) = atom.index.range_over(s, e);
                lo = lo.min(a);
                hi = hi.max(b + 1);
            }
        }
        if lo >= hi {
            (0, 0)
        } else {
            (lo, hi)
        }
    }

    /// Sink window indices overlapping the time range `[from, to)`.
    pub fn windows_in(&self, from: Timestamp, to: Timestamp) -> (i64, i64) {
        let l = &self.plan.lineage;
        let a = (from - l.sink_origin).div_euclid(l.sink_dim);
        let b = (to - l.sink_origin + l.sink_dim - 1).div_euclid(l.sink_dim);
        (a, b.max(a))
    }

    /// Next sink window at or after `j` that the demand formula allows.
    pub fn next_demanded(&self, j: i64) -> Option<i64> {
        let l = &self.plan.lineage;
        let mut avail = |a: usize, from: i64| {
            let atom = &l.atoms[a];
            atom.index
                .next_intersecting(from, self.sources[atom.source].availability().segments())
        };
        l.demand.next(j, &mut avail)
    }

    pub fn run(&mut self, engine: Engine, sink: &mut dyn Sink<T>) -> Result<ExecutionStats> {
        let span = self.span();
        self.run_range(engine, span, sink)
    }

    pub fn run_eager(&mut self, sink: &mut dyn Sink<T>) -> Result<ExecutionStats> {
        self.run(Engine::Eager, sink)
    }

    pub fn run_targeted(&mut self, sink: &mut dyn Sink<T>) -> Result<ExecutionStats> {
        self.run(Engine::Targeted, sink)
    }

    /// Runs sink windows `[span.0, span.1)`.
    pub fn run_range(&mut self, engine: Engine, span: (i64, i64), sink: &mut dyn Sink<T>) -> Result<ExecutionStats> {
        for r in self.rings.iter_mut().flatten() {
            r.invalidate();
        }
        self.node_windows.iter_mut().for_each(|c| *c = 0);
        self.events_in = 0;
        let started = Instant::now();
        let counting = alloc_counter::installed();
        let mut stats = ExecutionStats::default();
        let mut baseline: Option<u64> = None;
        let mut sink_allocs = 0u64;

        let (first, end) = span;
        let mut j = first;
        while j < end {
            let k = match engine {
                Engine::Eager => j,
                Engine::Targeted => match self.next_demanded(j) {
                    Some(k) if k < end => k,
                    _ => end,
                },
            };
            stats.windows_skipped += (k - j) as u64;
            if k >= end {
                break;
            }
            self.produce_sink(k, sink, &mut stats, &mut sink_allocs)?;
            stats.windows_processed += 1;
            if counting && baseline.is_none() {
                baseline = Some(alloc_counter::allocations() - sink_allocs);
            }
            j = k + 1;
        }
        if let Some(b) = baseline {
            stats.steady_state_allocations = Some(alloc_counter::allocations() - sink_allocs - b);
        } else if counting {
            stats.steady_state_allocations = Some(0);
        }
        sink.finish()?;
        stats.node_windows = self.node_windows.clone();
        stats.events_in = self.events_in;
        stats.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(stats)
    }

    fn produce_sink(
        &mut self,
        j: i64,
        sink: &mut dyn Sink<T>,
        stats: &mut ExecutionStats,
        sink_allocs: &mut u64,
    ) -> Result<()> {
        let e = self.plan.graph.physical(self.plan.graph.sink);
        self.ensure(e, j)?;
        let w = self.rings[e]
            .as_ref()
            .and_then(|r| r.get(j))
            .ok_or_else(|| Error::Invariant(format!("sink window {j} missing after evaluation")))?;
        let cap = w.capacity();
        let mut i = 0;
        while let Some(s) = w.presence().next_set(i, cap) {
            let ev = w.event(s).expect("present slot");
            let before = alloc_counter::allocations();
            sink.accept(ev)?;
            *sink_allocs += alloc_counter::allocations() - before;
            stats.events_out += 1;
            i = s + 1;
        }
        Ok(())
    }

    /// Makes window `j` of physical edge `e` resident.
    fn ensure(&mut self, e: EdgeId, j: i64) -> Result<()> {
        let plan = self.plan;
        let ring = self.rings[e]
            .as_mut()
            .ok_or_else(|| Error::Invariant(format!("edge {e} has no ring")))?;
        if ring.has(j) {
            return Ok(());
        }
        let n = plan.graph.edges[e].from;
        let node = &plan.graph.nodes[n];
        if let OperatorKind::Source { index, .. } = node.kind {
            let data = &self.sources[index];
            let mut w = ring.take(j);
            let (a, b) = (w.sync(), w.end());
            let p = w.period();
            let range = data.range(a, b);
            self.events_in += range.len() as u64;
            for i in range {
                let ev = data.event(i);
                w.emit(((ev.sync - a) / p) as usize, ev.duration)
                    .copy_from_slice(ev.payload);
            }
            ring.put(j, w);
            self.node_windows[n] += 1;
            return Ok(());
        }
        let ranges = &plan.lineage.ranges[n];
        for r in ranges {
            for k in j + r.lo..=j + r.hi {
                self.ensure(r.edge, k)?;
            }
        }
        let mut out = self.rings[e].as_mut().expect("checked above").take(j);
        let lin = &plan.lineage.nodes[n];
        let view = |k: usize| {
            self.rings[ranges[k].edge]
                .as_ref()
                .expect("input edges are physical")
                .view()
        };
        let scratch = &mut self.scratch[n];
        let res = match ranges.len() {
            1 => apply(&node.kind, &[view(0)], lin, &mut out, scratch),
            2 => apply(&node.kind, &[view(0), view(1)], lin, &mut out, scratch),
            k => Err(Error::Invariant(format!("unsupported arity {k}"))),
        };
        self.rings[e].as_mut().expect("checked above").put(j, out);
        self.node_windows[n] += 1;
        res
    }

    /// Evaluates sink window `j` and returns its events, bypassing the sink.
    pub fn window_events(&mut self, j: i64) -> Result<Vec<crate::model::Event<T>>> {
        let e = self.plan.graph.physical(self.plan.graph.sink);
        self.ensure(e, j)?;
        Ok(self.rings[e]
            .as_ref()
            .and_then(|r| r.get(j))
            .map(|w| w.to_events())
            .unwrap_or_default())
    }

    /// Addresses of every ring buffer; stable across runs.
    pub fn buffer_addresses(&self) -> Vec<usize> {
        self.rings.iter().flatten().flat_map(|r| r.column_addrs()).collect()
    }
}
