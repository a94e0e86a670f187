//! Fluent query construction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Millis, StreamDescriptor};
use crate::ops::{
    Agg, CombineFn, EdgeProps, JoinMode, MapFn, OperatorKind, PredFn, ShapeFilter, ShapeMode, TransformSpec,
};
use crate::scalar::Scalar;
use crate::shape::{MatchParams, ShapeTemplate};

use super::{compile, Plan, PlanConfig};

/// Declared shape of an ingested stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub descriptor: StreamDescriptor,
    pub width: usize,
    /// Longest event duration the source may contain.
    pub max_duration: Millis,
    /// All durations are multiples of this; divides the period.
    pub grain: Millis,
}

impl SourceSpec {
    /// Scalar samples that each last one period.
    pub fn new(name: impl Into<String>, descriptor: StreamDescriptor) -> Self {
        SourceSpec {
            name: name.into(),
            descriptor,
            width: 1,
            max_duration: descriptor.period,
            grain: descriptor.period,
        }
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        self
    }

    pub fn with_max_duration(mut self, max_duration: Millis) -> Self {
        self.max_duration = max_duration;
        self
    }

    pub fn with_grain(mut self, grain: Millis) -> Self {
        self.grain = grain;
        self
    }
}

/// Handle to a stream inside a [`QueryBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId(pub(crate) usize);

pub(crate) struct BStream {
    pub producer: Option<(usize, usize)>,
    pub bound: Option<StreamId>,
    pub declared: Option<EdgeProps>,
}

pub(crate) struct BNode<T> {
    pub name: Option<String>,
    pub kind: OperatorKind<T>,
    pub inputs: Vec<StreamId>,
}

pub struct QueryBuilder<T> {
    pub(crate) nodes: Vec<BNode<T>>,
    pub(crate) streams: Vec<BStream>,
    pub(crate) sources: Vec<SourceSpec>,
}

impl<T: Scalar> Default for QueryBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> QueryBuilder<T> {
    pub fn new() -> Self {
        QueryBuilder {
            nodes: Vec::new(),
            streams: Vec::new(),
            sources: Vec::new(),
        }
    }

    fn add(&mut self, kind: OperatorKind<T>, inputs: &[StreamId]) -> Vec<StreamId> {
        let node = self.nodes.len();
        let outputs: Vec<StreamId> = (0..kind.outputs())
            .map(|port| {
                self.streams.push(BStream {
                    producer: Some((node, port)),
                    bound: None,
                    declared: None,
                });
                StreamId(self.streams.len() - 1)
            })
            .collect();
        self.nodes.push(BNode {
            name: None,
            kind,
            inputs: inputs.to_vec(),
        });
        outputs
    }

    fn add1(&mut self, kind: OperatorKind<T>, inputs: &[StreamId]) -> StreamId {
        self.add(kind, inputs)[0]
    }

    pub fn source(&mut self, spec: SourceSpec) -> StreamId {
        let index = self.sources.len();
        self.sources.push(spec.clone());
        self.add1(OperatorKind::Source { index, spec }, &[])
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.sources
    }

    /// Names the node producing `s`; names appear in trace logs and plan dumps.
    pub fn name(&mut self, s: StreamId, name: impl Into<String>) -> StreamId {
        if let Some((node, _)) = self.streams[s.0].producer {
            self.nodes[node].name = Some(name.into());
        }
        s
    }

    /// Forward reference with declared properties, bound later with [`QueryBuilder::bind`].
    pub fn placeholder(&mut self, props: EdgeProps) -> StreamId {
        self.streams.push(BStream {
            producer: None,
            bound: None,
            declared: Some(props),
        });
        StreamId(self.streams.len() - 1)
    }

    pub fn bind(&mut self, placeholder: StreamId, target: StreamId) -> Result<()> {
        let s = &mut self.streams[placeholder.0];
        if s.producer.is_some() || s.bound.is_some() {
            return Err(Error::param(format!(
                "stream {} is not an unbound placeholder",
                placeholder.0
            )));
        }
        s.bound = Some(target);
        Ok(())
    }

    pub fn select(
        &mut self,
        s: StreamId,
        width: usize,
        f: impl Fn(crate::model::Timestamp, &[T], &mut [T]) + Send + Sync + 'static,
    ) -> StreamId {
        let f: MapFn<T> = Arc::new(f);
        self.add1(OperatorKind::Select { width, f }, &[s])
    }

    /// Lane-wise scalar projection.
    pub fn map(&mut self, s: StreamId, f: impl Fn(T) -> T + Send + Sync + 'static) -> StreamId {
        let width = self.width_hint(s);
        self.select(s, width, move |_, x, out| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = f(*v);
            }
        })
    }

    pub fn filter(
        &mut self,
        s: StreamId,
        pred: impl Fn(crate::model::Timestamp, &[T]) -> bool + Send + Sync + 'static,
    ) -> StreamId {
        let pred: PredFn<T> = Arc::new(pred);
        self.add1(OperatorKind::Where { pred }, &[s])
    }

    pub fn where_shape(
        &mut self,
        s: StreamId,
        template: &ShapeTemplate,
        params: MatchParams,
        mode: ShapeMode,
    ) -> StreamId {
        let filter = ShapeFilter {
            template: template.prepared(&params),
            params,
            mode,
        };
        self.add1(OperatorKind::WhereShape(Arc::new(filter)), &[s])
    }

    pub fn aggregate(&mut self, s: StreamId, w: Millis, p: Millis, agg: Agg<T>) -> StreamId {
        self.add1(OperatorKind::Aggregate { w, p, agg }, &[s])
    }

    pub fn tumbling(&mut self, s: StreamId, w: Millis, agg: Agg<T>) -> StreamId {
        self.aggregate(s, w, w, agg)
    }

    pub fn join(
        &mut self,
        left: StreamId,
        right: StreamId,
        mode: JoinMode,
        width: usize,
        combine: impl Fn(crate::model::Timestamp, Option<&[T]>, Option<&[T]>, &mut [T]) + Send + Sync + 'static,
    ) -> StreamId {
        let combine: CombineFn<T> = Arc::new(combine);
        self.add1(OperatorKind::Join { mode, width, combine }, &[left, right])
    }

    /// Join whose payload is the left lanes followed by the right lanes; a
    /// missing side is filled with NaN.
    pub fn join_concat(&mut self, left: StreamId, right: StreamId, mode: JoinMode) -> StreamId {
        let (wl, wr) = (self.width_hint(left), self.width_hint(right));
        self.join(left, right, mode, wl + wr, concat(wl, wr))
    }

    pub fn clip_join(
        &mut self,
        left: StreamId,
        right: StreamId,
        width: usize,
        combine: impl Fn(crate::model::Timestamp, Option<&[T]>, Option<&[T]>, &mut [T]) + Send + Sync + 'static,
    ) -> StreamId {
        let combine: CombineFn<T> = Arc::new(combine);
        self.add1(OperatorKind::ClipJoin { width, combine }, &[left, right])
    }

    pub fn clip_join_concat(&mut self, left: StreamId, right: StreamId) -> StreamId {
        let (wl, wr) = (self.width_hint(left), self.width_hint(right));
        self.clip_join(left, right, wl + wr, concat(wl, wr))
    }

    pub fn chop(&mut self, s: StreamId, c: Millis) -> StreamId {
        self.add1(OperatorKind::Chop { c }, &[s])
    }

    pub fn shift(&mut self, s: StreamId, k: Millis) -> StreamId {
        self.add1(OperatorKind::Shift { k }, &[s])
    }

    pub fn alter_period(&mut self, s: StreamId, period: Millis) -> StreamId {
        self.add1(OperatorKind::AlterPeriod { period }, &[s])
    }

    pub fn alter_duration(&mut self, s: StreamId, duration: Millis) -> StreamId {
        self.add1(OperatorKind::AlterDuration { duration }, &[s])
    }

    pub fn multicast(&mut self, s: StreamId, n: usize) -> Vec<StreamId> {
        self.add(OperatorKind::Multicast { n }, &[s])
    }

    pub fn transform(&mut self, s: StreamId, spec: TransformSpec<T>) -> StreamId {
        self.add1(OperatorKind::Transform(spec), &[s])
    }

    /// Payload width of `s` as far as it can be derived now (1 when unknown).
    pub fn width_hint(&self, s: StreamId) -> usize {
        self.props_hint(s, 0).map_or(1, |p| p.width)
    }

    /// Properties of `s` if its upstream is fully defined.
    pub fn props_hint(&self, s: StreamId, depth: usize) -> Option<EdgeProps> {
        if depth > self.streams.len() {
            return None;
        }
        let st = &self.streams[s.0];
        if let Some(b) = st.bound {
            return self.props_hint(b, depth + 1);
        }
        if let Some(p) = st.declared {
            return Some(p);
        }
        let (node, _) = st.producer?;
        let n = &self.nodes[node];
        let ins = n
            .inputs
            .iter()
            .map(|i| self.props_hint(*i, depth + 1))
            .collect::<Option<Vec<_>>>()?;
        n.kind.derive(&ins).ok()
    }

    pub fn compile(self, sink: StreamId) -> Result<Plan<T>> {
        self.compile_with(sink, &PlanConfig::default())
    }

    pub fn compile_with(self, sink: StreamId, config: &PlanConfig) -> Result<Plan<T>> {
        compile(self, sink, config)
    }
}

#[allow(clippy::type_complexity)]
fn concat<T: Scalar>(wl: usize, wr: usize) -> impl Fn(crate::model::Timestamp, Option<&[T]>, Option<&[T]>, &mut [T]) {
    move |_, l, r, out| {
        match l {
            Some(l) => out[..wl].copy_from_slice(l),
            None => out[..wl].iter_mut().for_each(|x| *x = T::nan()),
        }
        match r {
            Some(r) => out[wl..wl + wr].copy_from_slice(r),
            None => out[wl..wl + wr].iter_mut().for_each(|x| *x = T::nan()),
        }
    }
}
