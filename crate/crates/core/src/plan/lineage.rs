//! Lineage: which input windows an output window needs, and which source
//! intervals a sink window depends on.

use num_rational::Ratio;
use num_traits::One;

use crate::model::{Millis, Timestamp};
use crate::ops::{JoinMode, Lineage, OperatorKind};
use crate::scalar::Scalar;

use super::{EdgeId, NodeId, QueryGraph};

type Q = Ratio<i128>;

/// Input windows `[j + lo, j + hi]` of `edge` needed by output window `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRange {
    pub edge: EdgeId,
    pub lo: i64,
    pub hi: i64,
}

/// One hop from an edge to one of its producer's inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub lineage: Lineage,
    pub out_offset: Timestamp,
    pub in_offset: Timestamp,
    /// Alignment grid of the output side.
    pub grain: Millis,
}

impl Step {
    fn scale(&self) -> Q {
        Q::new(self.lineage.num as i128, self.lineage.den as i128)
    }

    /// `A(t) = in_offset + (t - out_offset) * num / den + shift`.
    fn map(&self, t: Q) -> Q {
        Q::from((self.in_offset + self.lineage.shift) as i128) + (t - Q::from(self.out_offset as i128)) * self.scale()
    }
}

fn floor_to(x: Q, offset: Timestamp, g: Millis) -> Q {
    let (o, g) = (Q::from(offset as i128), Q::from(g as i128));
    o + ((x - o) / g).floor() * g
}

fn ceil_to(x: Q, offset: Timestamp, g: Millis) -> Q {
    let (o, g) = (Q::from(offset as i128), Q::from(g as i128));
    o + ((x - o) / g).ceil() * g
}

/// Interval map over time, from the sink to one source, as the chain of
/// operator hops. Each hop widens to the output grain, then applies lineage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeMap {
    pub steps: Vec<Step>,
}

impl TimeMap {
    pub fn identity() -> Self {
        TimeMap::default()
    }

    /// Integer hull of the input interval needed by `[a, b)`.
    pub fn apply(&self, a: Timestamp, b: Timestamp) -> (Timestamp, Timestamp) {
        let mut lo = Q::from(a as i128);
        let mut hi = Q::from(b as i128);
        for s in &self.steps {
            let l = &s.lineage;
            lo = s.map(floor_to(lo, s.out_offset, s.grain)) - Q::from(l.back as i128);
            hi = s.map(ceil_to(hi, s.out_offset, s.grain)) + Q::from(l.ahead as i128);
        }
        (lo.floor().to_integer() as i64, hi.ceil().to_integer() as i64)
    }

    fn then(&self, step: Step) -> Self {
        let mut steps = self.steps.clone();
        steps.push(step);
        TimeMap { steps }
    }
}

/// A [`TimeMap`] over sink window indices: window `j` needs
/// `[slope*j + lo0, slope*j + hi0)`. Grain widening is folded in exactly when
/// the slope preserves the grid and conservatively otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexMap {
    slope: Q,
    lo0: Q,
    hi0: Q,
}

impl IndexMap {
    fn new(map: &TimeMap, origin: Timestamp, dim: Millis) -> Self {
        let mut m = IndexMap {
            slope: Q::from(dim as i128),
            lo0: Q::from(origin as i128),
            hi0: Q::from((origin + dim) as i128),
        };
        for s in &map.steps {
            m = m.then(s);
        }
        m
    }

    fn then(&self, s: &Step) -> Self {
        let g = Q::from(s.grain as i128);
        let o = Q::from(s.out_offset as i128);
        let on_grid = (self.slope / g).is_integer();
        let lo = if on_grid && self.lo0.is_integer() {
            floor_to(self.lo0, s.out_offset, s.grain)
        } else {
            self.lo0.floor() - g + Q::one()
        };
        let hi = if on_grid && self.hi0.is_integer() {
            ceil_to(self.hi0, s.out_offset, s.grain)
        } else {
            self.hi0.ceil() + g - Q::one()
        };
        let an = s.scale();
        let base = Q::from((s.in_offset + s.lineage.shift) as i128) - an * o;
        IndexMap {
            slope: an * self.slope,
            lo0: an * lo + base - Q::from(s.lineage.back as i128),
            hi0: an * hi + base + Q::from(s.lineage.ahead as i128),
        }
    }

    fn lo(&self, j: i64) -> Q {
        self.slope * Q::from(j as i128) + self.lo0
    }

    fn hi(&self, j: i64) -> Q {
        self.slope * Q::from(j as i128) + self.hi0
    }

    pub fn interval(&self, j: i64) -> (Timestamp, Timestamp) {
        (
            self.lo(j).floor().to_integer() as i64,
            self.hi(j).ceil().to_integer() as i64,
        )
    }

    /// Smallest `j` whose interval ends after `s`.
    fn first_reaching(&self, s: Timestamp) -> i64 {
        ((Q::from(s as i128) - self.hi0) / self.slope).floor().to_integer() as i64 + 1
    }

    /// Largest `j` whose interval starts before `e`.
    fn last_reaching(&self, e: Timestamp) -> i64 {
        ((Q::from(e as i128) - self.lo0) / self.slope).ceil().to_integer() as i64 - 1
    }

    /// Smallest `j >= from` whose interval meets one of the sorted, disjoint `segments`.
    pub fn next_intersecting(&self, from: i64, segments: &[(Timestamp, Timestamp)]) -> Option<i64> {
        let lo = self.lo(from);
        let mut k = segments.partition_point(|&(_, e)| Q::from(e as i128) <= lo);
        let mut j = from;
        while k < segments.len() {
            let (s, e) = segments[k];
            j = j.max(self.first_reaching(s));
            if self.lo(j) < Q::from(e as i128) {
                return Some(j);
            }
            k += 1;
        }
        None
    }

    /// Window indices whose interval meets `[start, end)`.
    pub fn range_over(&self, start: Timestamp, end: Timestamp) -> (i64, i64) {
        (self.first_reaching(start), self.last_reaching(end))
    }
}

/// One path from the sink to a source.
#[derive(Debug, Clone)]
pub struct Atom {
    /// Index of the source in declaration order.
    pub source: usize,
    pub node: NodeId,
    pub time: TimeMap,
    pub index: IndexMap,
    /// Whether the demand formula refers to this atom. Paths into the
    /// preserved-null side of a left join are needed for data but not for
    /// deciding whether a window can hold output.
    pub demanded: bool,
}

/// Condition on source availability under which a sink window can be non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Demand {
    Atom(usize),
    All(Vec<Demand>),
    Any(Vec<Demand>),
}

impl Demand {
    /// Smallest `j >= from` satisfying the condition; `avail(atom, j)` answers for one atom.
    pub fn next(&self, from: i64, avail: &mut impl FnMut(usize, i64) -> Option<i64>) -> Option<i64> {
        match self {
            Demand::Atom(a) => avail(*a, from),
            Demand::Any(cs) => cs.iter().filter_map(|c| c.next(from, avail)).min(),
            Demand::All(cs) => {
                let mut j = from;
                loop {
                    let mut moved = false;
                    for c in cs {
                        let k = c.next(j, avail)?;
                        if k > j {
                            j = k;
                            moved = true;
                        }
                    }
                    if !moved {
                        return Some(j);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineageMap {
    /// Per node, per input.
    pub nodes: Vec<Vec<Lineage>>,
    /// Per node, per input: physical edge and window offsets.
    pub ranges: Vec<Vec<WindowRange>>,
    /// Per edge: windows needed relative to the current sink window.
    pub edge_span: Vec<(i64, i64)>,
    /// Per edge: ring depth (0 for edges that alias another buffer).
    pub ring_depth: Vec<usize>,
    pub atoms: Vec<Atom>,
    pub demand: Demand,
    pub sink_origin: Timestamp,
    pub sink_dim: Millis,
}

impl LineageMap {
    /// Source intervals required by the sink interval `[a, b)`, one per atom.
    pub fn source_intervals(&self, a: Timestamp, b: Timestamp) -> Vec<(usize, Timestamp, Timestamp)> {
        self.atoms
            .iter()
            .map(|at| {
                let (lo, hi) = at.time.apply(a, b);
                (at.source, lo, hi)
            })
            .collect()
    }

    pub fn sink_window(&self, j: i64) -> (Timestamp, Timestamp) {
        let a = self.sink_origin + j * self.sink_dim;
        (a, a + self.sink_dim)
    }
}

/// Fixed inputs of the demand walk: the graph, per-node lineage and the sink grid.
struct DemandCtx<'a, T> {
    g: &'a QueryGraph<T>,
    lineage: &'a [Vec<Lineage>],
    origin: Timestamp,
    dim: Millis,
}

fn build_demand<T: Scalar>(
    cx: &DemandCtx<'_, T>,
    e: EdgeId,
    map: TimeMap,
    atoms: &mut Vec<Atom>,
    demanded: bool,
) -> Demand {
    let (g, lineage) = (cx.g, cx.lineage);
    let n = g.edges[e].from;
    let node = &g.nodes[n];
    let out = g.edges[e].props;
    let follow = |k: usize, atoms: &mut Vec<Atom>, demanded: bool| {
        let input = node.inputs[k];
        let next = map.then(Step {
            lineage: lineage[n][k],
            out_offset: out.offset(),
            in_offset: g.edges[input].props.offset(),
            grain: node.kind.output_grain(&out),
        });
        build_demand(cx, input, next, atoms, demanded)
    };
    match &node.kind {
        OperatorKind::Source { index, .. } => {
            atoms.push(Atom {
                source: *index,
                node: n,
                index: IndexMap::new(&map, cx.origin, cx.dim),
                time: map,
                demanded,
            });
            Demand::Atom(atoms.len() - 1)
        }
        OperatorKind::Join { mode, .. } => {
            let l = follow(0, atoms, demanded);
            match mode {
                JoinMode::Inner => Demand::All(vec![l, follow(1, atoms, demanded)]),
                JoinMode::Left => {
                    follow(1, atoms, false);
                    l
                }
                JoinMode::Outer => Demand::Any(vec![l, follow(1, atoms, demanded)]),
            }
        }
        OperatorKind::ClipJoin { .. } => {
            follow(1, atoms, false);
            follow(0, atoms, demanded)
        }
        _ => follow(0, atoms, demanded),
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

pub fn derive_lineage<T: Scalar>(g: &QueryGraph<T>) -> LineageMap {
    let lineage: Vec<Vec<Lineage>> = (0..g.nodes.len()).map(|n| g.node_lineage(n)).collect();

    let ranges: Vec<Vec<WindowRange>> = (0..g.nodes.len())
        .map(|n| {
            g.nodes[n]
                .inputs
                .iter()
                .zip(&lineage[n])
                .map(|(&e, l)| {
                    let d = g.edges[e].dimension;
                    debug_assert_eq!(
                        g.output_dimension(n).map(|o| o as i128 * l.num as i128),
                        Some(d as i128 * l.den as i128)
                    );
                    WindowRange {
                        edge: g.physical(e),
                        lo: floor_div(l.shift - l.back, d),
                        hi: floor_div(l.shift + d + l.ahead - 1, d),
                    }
                })
                .collect()
        })
        .collect();

    let mut span: Vec<Option<(i64, i64)>> = vec![None; g.edges.len()];
    span[g.sink] = Some((0, 0));
    let widen = |s: &mut Option<(i64, i64)>, lo: i64, hi: i64| {
        *s = Some(match *s {
            Some((a, b)) => (a.min(lo), b.max(hi)),
            None => (lo, hi),
        });
    };
    for n in (0..g.nodes.len()).rev() {
        let node = &g.nodes[n];
        let mut out: Option<(i64, i64)> = None;
        for &o in &node.outputs {
            if let Some((lo, hi)) = span[o] {
                widen(&mut out, lo, hi);
            }
        }
        let Some((olo, ohi)) = out else { continue };
        for (k, &i) in node.inputs.iter().enumerate() {
            let r = &ranges[n][k];
            widen(&mut span[i], olo + r.lo, ohi + r.hi);
        }
    }
    let edge_span: Vec<(i64, i64)> = span.iter().map(|s| s.unwrap_or((0, 0))).collect();

    let mut phys_span: Vec<Option<(i64, i64)>> = vec![None; g.edges.len()];
    for (e, &(lo, hi)) in edge_span.iter().enumerate() {
        widen(&mut phys_span[g.physical(e)], lo, hi);
    }
    let ring_depth = (0..g.edges.len())
        .map(|e| {
            if g.physical(e) != e {
                0
            } else {
                phys_span[e].map_or(1, |(lo, hi)| (hi - lo + 1) as usize)
            }
        })
        .collect();

    let sink = &g.edges[g.sink];
    let origin = sink.props.offset();
    let dim = sink.dimension;
    let mut atoms = Vec::new();
    let cx = DemandCtx {
        g,
        lineage: &lineage,
        origin,
        dim,
    };
    let demand = build_demand(&cx, g.sink, TimeMap::identity(), &mut atoms, true);

    LineageMap {
        nodes: lineage,
        ranges,
        edge_span,
        ring_depth,
        atoms,
        demand,
        sink_origin: origin,
        sink_dim: dim,
    }
}
