//! Temporal query engine for periodic event streams.
//!
//! Queries are built with [`QueryBuilder`], compiled into a [`Plan`] whose
//! edge windows are sized by locality tracing and preallocated up front, and
//! executed by an [`Execution`] either eagerly (every window in the span) or
//! targeted (only windows whose lineage reaches available source data).
//!
//! The engine is generic over the payload scalar ([`Scalar`]: `f32` or `f64`).
//! The aliases at the crate root fix it to `f32`, the device sample type.

pub mod alloc_counter;
pub mod error;
pub mod exec;
pub mod gen;
pub mod model;
pub mod ops;
pub mod plan;
pub mod ring;
pub mod scalar;
pub mod shape;
pub mod toolkit;

pub use error::{Error, Result};
pub use exec::{
    ingest_csv, AvailabilityIndex, ChecksumSink, CollectSink, CsvSink, Engine, Execution, ExecutionStats,
    IngestOptions, Sink, SourceData,
};
pub use model::{capacity, Event, EventRef, FWindow, Millis, PayloadKind, StreamDescriptor, Timestamp};
pub use ops::{Agg, JoinMode, OperatorKind, ShapeMode, SliceCtx, SliceOut, TransformSpec};
pub use plan::{
    derive_lineage, locality_trace, plan_memory, EdgeProps, MemoryPlan, Plan, PlanConfig, QueryBuilder, QueryGraph,
    SourceSpec, StreamId,
};
pub use scalar::Scalar;
pub use shape::{cdtw_distance, scan_stream, MatchParams, ShapeTemplate};

/// Device sample type.
pub type Sample = f32;
pub type Window = FWindow<Sample>;
pub type Query = QueryBuilder<Sample>;
pub type CompiledPlan = Plan<Sample>;
pub type Source = SourceData<Sample>;
