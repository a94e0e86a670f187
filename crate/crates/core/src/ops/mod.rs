//! Primitive temporal operators.
//!
//! Each operator declares three things: how it transforms the edge
//! properties of its inputs (descriptor, payload width, longest event
//! duration, duration grain), which input interval it needs to produce an
//! output interval (its lineage), and a per-window kernel in [`kernels`].

use std::fmt;
use std::sync::Arc;

use num_integer::Integer;

use crate::model::{EventRef, Millis, PayloadKind, StreamDescriptor, Timestamp};
use crate::plan::SourceSpec;
use crate::scalar::Scalar;
use crate::shape::MatchParams;

pub mod kernels;

/// Projection: `(sync, input payload, output payload)`.
pub type MapFn<T> = Arc<dyn Fn(Timestamp, &[T], &mut [T]) + Send + Sync>;

/// Filter predicate over `(sync, payload)`.
pub type PredFn<T> = Arc<dyn Fn(Timestamp, &[T]) -> bool + Send + Sync>;

/// Join combiner: `(output sync, left payload, right payload, output payload)`.
/// A `None` side is the unmatched side of a left/outer join or a clip join
/// without a successor.
pub type CombineFn<T> = Arc<dyn Fn(Timestamp, Option<&[T]>, Option<&[T]>, &mut [T]) + Send + Sync>;

/// User aggregate over the events of one window starting at the given time.
/// Returns false to leave the output slot absent.
pub type AggFn<T> = Arc<dyn Fn(Timestamp, &mut dyn Iterator<Item = EventRef<'_, T>>, &mut [T]) -> bool + Send + Sync>;

/// Slice transformation; see [`TransformSpec`].
pub type TransformFn<T> = Arc<dyn Fn(&SliceCtx<'_, T>, &mut SliceOut<'_, T>) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JoinMode {
    Inner,
    Left,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeMode {
    /// Remove events inside matched intervals.
    Drop,
    /// Keep only events inside matched intervals.
    Keep,
}

pub enum Agg<T> {
    Sum,
    Max,
    Min,
    Mean,
    Count,
    /// Population standard deviation.
    Std,
    Custom {
        width: usize,
        f: AggFn<T>,
    },
}

impl<T> Clone for Agg<T> {
    fn clone(&self) -> Self {
        match self {
            Agg::Sum => Agg::Sum,
            Agg::Max => Agg::Max,
            Agg::Min => Agg::Min,
            Agg::Mean => Agg::Mean,
            Agg::Count => Agg::Count,
            Agg::Std => Agg::Std,
            Agg::Custom { width, f } => Agg::Custom {
                width: *width,
                f: f.clone(),
            },
        }
    }
}

impl<T> fmt::Debug for Agg<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agg::Custom { width, .. } => write!(f, "Custom(width={width})"),
            other => f.write_str(match other {
                Agg::Sum => "Sum",
                Agg::Max => "Max",
                Agg::Min => "Min",
                Agg::Mean => "Mean",
                Agg::Count => "Count",
                _ => "Std",
            }),
        }
    }
}

/// Input context handed to a transform function for one slice.
///
/// Slots are laid out `history` before the slice, `len` in it and
/// `lookahead` after it; `values` holds `width` lanes per slot.
pub struct SliceCtx<'a, T> {
    pub start: Timestamp,
    pub period: Millis,
    pub width: usize,
    pub history: usize,
    pub len: usize,
    pub lookahead: usize,
    pub values: &'a [T],
    pub present: &'a [bool],
}

impl<T: Scalar> SliceCtx<'_, T> {
    /// Payload of the slot `i` positions from the slice start (negative reaches into history).
    #[inline]
    pub fn get(&self, i: isize) -> Option<&[T]> {
        let k = self.history as isize + i;
        if k < 0 || k as usize >= self.present.len() || !self.present[k as usize] {
            return None;
        }
        let k = k as usize;
        Some(&self.values[k * self.width..(k + 1) * self.width])
    }

    pub fn total(&self) -> usize {
        self.present.len()
    }
}

/// Output of a transform for one slice, pre-filled with a copy of the input slice.
pub struct SliceOut<'a, T> {
    pub values: &'a mut [T],
    pub present: &'a mut [bool],
}

pub struct TransformSpec<T> {
    /// Slice length in milliseconds, a multiple of the input period.
    pub slice: Millis,
    /// Context slots before the slice.
    pub history: usize,
    /// Context slots after the slice.
    pub lookahead: usize,
    pub f: TransformFn<T>,
}

impl<T> Clone for TransformSpec<T> {
    fn clone(&self) -> Self {
        TransformSpec {
            slice: self.slice,
            history: self.history,
            lookahead: self.lookahead,
            f: self.f.clone(),
        }
    }
}

/// Prepared shape filter: template (already z-normalized when requested).
#[derive(Debug, Clone)]
pub struct ShapeFilter {
    pub template: Vec<f64>,
    pub params: MatchParams,
    pub mode: ShapeMode,
}

pub enum OperatorKind<T> {
    Source {
        index: usize,
        spec: SourceSpec,
    },
    Select {
        width: usize,
        f: MapFn<T>,
    },
    Where {
        pred: PredFn<T>,
    },
    WhereShape(Arc<ShapeFilter>),
    Aggregate {
        w: Millis,
        p: Millis,
        agg: Agg<T>,
    },
    Join {
        mode: JoinMode,
        width: usize,
        combine: CombineFn<T>,
    },
    ClipJoin {
        width: usize,
        combine: CombineFn<T>,
    },
    Chop {
        c: Millis,
    },
    Shift {
        k: Millis,
    },
    AlterPeriod {
        period: Millis,
    },
    AlterDuration {
        duration: Millis,
    },
    Multicast {
        n: usize,
    },
    Transform(TransformSpec<T>),
}

impl<T> Clone for OperatorKind<T> {
    fn clone(&self) -> Self {
        use OperatorKind::*;
        match self {
            Source { index, spec } => Source {
                index: *index,
                spec: spec.clone(),
            },
            Select { width, f } => Select {
                width: *width,
                f: f.clone(),
            },
            Where { pred } => Where { pred: pred.clone() },
            WhereShape(s) => WhereShape(s.clone()),
            Aggregate { w, p, agg } => Aggregate {
                w: *w,
                p: *p,
                agg: agg.clone(),
            },
            Join { mode, width, combine } => Join {
                mode: *mode,
                width: *width,
                combine: combine.clone(),
            },
            ClipJoin { width, combine } => ClipJoin {
                width: *width,
                combine: combine.clone(),
            },
            Chop { c } => Chop { c: *c },
            Shift { k } => Shift { k: *k },
            AlterPeriod { period } => AlterPeriod { period: *period },
            AlterDuration { duration } => AlterDuration { duration: *duration },
            Multicast { n } => Multicast { n: *n },
            Transform(t) => Transform(t.clone()),
        }
    }
}

impl<T> fmt::Debug for OperatorKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use OperatorKind::*;
        match self {
            Source { spec, .. } => write!(f, "Source({})", spec.name),
            Select { width, .. } => write!(f, "Select(width={width})"),
            Where { .. } => write!(f, "Where"),
            WhereShape(s) => write!(f, "WhereShape(m={}, {:?})", s.template.len(), s.mode),
            Aggregate { w, p, agg } => write!(f, "Aggregate({w}, {p}, {agg:?})"),
            Join { mode, .. } => write!(f, "Join({mode:?})"),
            ClipJoin { .. } => write!(f, "ClipJoin"),
            Chop { c } => write!(f, "Chop({c})"),
            Shift { k } => write!(f, "Shift({k})"),
            AlterPeriod { period } => write!(f, "AlterPeriod({period})"),
            AlterDuration { duration } => write!(f, "AlterDuration({duration})"),
            Multicast { n } => write!(f, "Multicast({n})"),
            Transform(t) => write!(f, "Transform({})", t.slice),
        }
    }
}

/// Static properties of a stream edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeProps {
    pub descriptor: StreamDescriptor,
    pub width: usize,
    /// Upper bound on any event duration.
    pub max_duration: Millis,
    /// Every sync and every event end is congruent to the offset modulo the grain.
    pub grain: Millis,
}

impl EdgeProps {
    pub fn new(descriptor: StreamDescriptor, width: usize, max_duration: Millis, grain: Millis) -> Self {
        EdgeProps {
            descriptor: descriptor.with_kind(PayloadKind::with_width(width)),
            width,
            max_duration,
            grain,
        }
    }

    pub fn offset(&self) -> Timestamp {
        self.descriptor.offset
    }

    pub fn period(&self) -> Millis {
        self.descriptor.period
    }
}

/// Input interval required for output interval `[a, b)`:
/// `[A(a) - back, A(b) + ahead)` with
/// `A(t) = in_offset + (t - out_offset) * num / den + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lineage {
    pub num: i64,
    pub den: i64,
    pub shift: Millis,
    pub back: Millis,
    pub ahead: Millis,
}

impl Lineage {
    fn identity() -> Self {
        Lineage {
            num: 1,
            den: 1,
            shift: 0,
            back: 0,
            ahead: 0,
        }
    }

    fn with(shift: Millis, back: Millis, ahead: Millis) -> Self {
        Lineage {
            shift,
            back: back.max(0),
            ahead: ahead.max(0),
            ..Lineage::identity()
        }
    }
}

fn gcd3(a: i64, b: i64, c: i64) -> i64 {
    a.gcd(&b).gcd(&c)
}

impl<T: Scalar> OperatorKind<T> {
    pub fn label(&self) -> &'static str {
        use OperatorKind::*;
        match self {
            Source { .. } => "source",
            Select { .. } => "select",
            Where { .. } => "where",
            WhereShape(_) => "where_shape",
            Aggregate { .. } => "aggregate",
            Join { mode, .. } => match mode {
                JoinMode::Inner => "join",
                JoinMode::Left => "left_join",
                JoinMode::Outer => "outer_join",
            },
            ClipJoin { .. } => "clip_join",
            Chop { .. } => "chop",
            Shift { .. } => "shift",
            AlterPeriod { .. } => "alter_period",
            AlterDuration { .. } => "alter_duration",
            Multicast { .. } => "multicast",
            Transform(_) => "transform",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            OperatorKind::Source { .. } => 0,
            OperatorKind::Join { .. } | OperatorKind::ClipJoin { .. } => 2,
            _ => 1,
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            OperatorKind::Multicast { n } => *n,
            _ => 1,
        }
    }

    /// Output edge properties, or a message explaining why the inputs are rejected.
    pub fn derive(&self, inputs: &[EdgeProps]) -> Result<EdgeProps, String> {
        use OperatorKind::*;
        let positive = |name: &str, v: Millis| {
            if v < 1 {
                Err(format!("{name} must be >= 1, got {v}"))
            } else {
                Ok(())
            }
        };
        match self {
            Source { spec, .. } => {
                let d = spec.descriptor;
                positive("period", d.period)?;
                positive("max_duration", spec.max_duration)?;
                positive("grain", spec.grain)?;
                if d.period % spec.grain != 0 {
                    return Err(format!(
                        "duration grain {} does not divide period {}",
                        spec.grain, d.period
                    ));
                }
                if spec.width == 0 {
                    return Err("payload width must be >= 1".into());
                }
                Ok(EdgeProps::new(d, spec.width, spec.max_duration, spec.grain))
            }
            Select { width, .. } => {
                let i = inputs[0];
                if *width == 0 {
                    return Err("select output width must be >= 1".into());
                }
                Ok(EdgeProps::new(i.descriptor, *width, i.max_duration, i.grain))
            }
            Where { .. } | Multicast { .. } => Ok(inputs[0]),
            WhereShape(s) => {
                let i = inputs[0];
                if i.width != 1 {
                    return Err(format!("shape filter needs a scalar stream, width is {}", i.width));
                }
                if i.max_duration > i.period() {
                    return Err("shape filter needs events no longer than one period".into());
                }
                s.params.validate(s.template.len()).map_err(|e| e.to_string())?;
                Ok(i)
            }
            Aggregate { w, p, agg } => {
                let i = inputs[0];
                positive("aggregate stride", *p)?;
                let pin = i.period();
                if w % pin != 0 || p % pin != 0 {
                    return Err(format!(
                        "aggregate window {w} and stride {p} must be multiples of the input period {pin}"
                    ));
                }
                if w < p {
                    return Err(format!("aggregate window {w} is shorter than its stride {p}"));
                }
                let width = match agg {
                    Agg::Count => 1,
                    Agg::Custom { width, .. } => *width,
                    _ => i.width,
                };
                if width == 0 {
                    return Err("aggregate output width must be >= 1".into());
                }
                let d = StreamDescriptor::new(i.offset(), *p).map_err(|e| e.to_string())?;
                Ok(EdgeProps::new(d, width, *p, *p))
            }
            Join { mode, width, .. } => {
                let (l, r) = (inputs[0], inputs[1]);
                if *width == 0 {
                    return Err("join output width must be >= 1".into());
                }
                let delta = l.offset() - r.offset();
                let period = match mode {
                    JoinMode::Inner => gcd3(l.period(), r.period(), delta),
                    JoinMode::Left => gcd3(l.period(), r.grain, delta),
                    JoinMode::Outer => gcd3(l.grain, r.grain, delta),
                };
                let max_duration = match mode {
                    JoinMode::Inner => l.max_duration.min(r.max_duration),
                    JoinMode::Left => l.max_duration,
                    JoinMode::Outer => l.max_duration.max(r.max_duration),
                };
                let grain = gcd3(period, l.grain, r.grain);
                let d = StreamDescriptor::new(l.offset().min(r.offset()), period).map_err(|e| e.to_string())?;
                Ok(EdgeProps::new(d, *width, max_duration, grain))
            }
            ClipJoin { width, .. } => {
                let (l, r) = (inputs[0], inputs[1]);
                if *width == 0 {
                    return Err("clip join output width must be >= 1".into());
                }
                let grain = gcd3(l.grain, r.period(), l.offset() - r.offset());
                Ok(EdgeProps::new(l.descriptor, *width, l.max_duration, grain))
            }
            Chop { c } => {
                let i = inputs[0];
                positive("chop period", *c)?;
                let d = StreamDescriptor::new(i.offset(), i.period().gcd(c)).map_err(|e| e.to_string())?;
                Ok(EdgeProps::new(d, i.width, i.max_duration.min(*c), i.grain.gcd(c)))
            }
            Shift { k } => {
                let i = inputs[0];
                let d = StreamDescriptor::new(i.offset() + k, i.period()).map_err(|e| e.to_string())?;
                Ok(EdgeProps::new(d, i.width, i.max_duration, i.grain))
            }
            AlterPeriod { period } => {
                let i = inputs[0];
                positive("new period", *period)?;
                let d = StreamDescriptor::new(i.offset(), *period).map_err(|e| e.to_string())?;
                Ok(EdgeProps::new(
                    d,
                    i.width,
                    i.max_duration.min(*period),
                    i.grain.gcd(period),
                ))
            }
            AlterDuration { duration } => {
                let i = inputs[0];
                positive("duration", *duration)?;
                if *duration > i.period() {
                    return Err(format!(
                        "duration {duration} exceeds period {} and would overlap events",
                        i.period()
                    ));
                }
                Ok(EdgeProps::new(
                    i.descriptor,
                    i.width,
                    *duration,
                    i.period().gcd(duration),
                ))
            }
            Transform(t) => {
                let i = inputs[0];
                if t.slice < i.period() || t.slice % i.period() != 0 {
                    return Err(format!(
                        "transform slice {} must be a positive multiple of the period {}",
                        t.slice,
                        i.period()
                    ));
                }
                if i.max_duration > i.period() {
                    return Err("transform needs events no longer than one period".into());
                }
                Ok(i)
            }
        }
    }

    /// Extra divisor the node's window dimension must honour.
    pub fn intrinsic_dimension(&self) -> Option<Millis> {
        match self {
            OperatorKind::Transform(t) => Some(t.slice),
            _ => None,
        }
    }

    /// Output intervals must be widened to this grid, measured from the
    /// output offset, before their lineage applies: an output slot can depend
    /// on input past its own sync (aggregate reach, transform slices).
    pub fn output_grain(&self, out: &EdgeProps) -> Millis {
        match self {
            OperatorKind::Transform(t) => t.slice,
            _ => out.period(),
        }
    }

    /// Lineage of every input, given the traced output dimension. Valid for
    /// output intervals aligned to [`output_grain`](Self::output_grain).
    pub fn lineage(&self, inputs: &[EdgeProps], out: &EdgeProps, out_dim: Millis) -> Vec<Lineage> {
        use OperatorKind::*;
        let shift = |i: &EdgeProps| out.offset() - i.offset();
        match self {
            Source { .. } => Vec::new(),
            Select { .. } | Where { .. } | Multicast { .. } | Shift { .. } | AlterDuration { .. } => {
                vec![Lineage::identity()]
            }
            AlterPeriod { period } => vec![Lineage {
                num: inputs[0].period(),
                den: *period,
                ..Lineage::identity()
            }],
            WhereShape(s) => {
                let reach = (s.template.len() as Millis - 1) * inputs[0].period();
                vec![Lineage::with(0, reach, reach)]
            }
            Aggregate { w, p, .. } => vec![Lineage::with(0, 0, w - p)],
            Join { mode, .. } => {
                let (l, r) = (&inputs[0], &inputs[1]);
                let (ml, mr) = (l.max_duration, r.max_duration);
                let (lb, la, rb, ra) = match mode {
                    JoinMode::Inner => (ml - 1, 0, mr - 1, 0),
                    JoinMode::Left => (ml - 1, 0, ml + mr - 2, ml - 1),
                    JoinMode::Outer => {
                        let both = ml + mr - 2;
                        let ahead = ml.max(mr) - 1;
                        (both, ahead, both, ahead)
                    }
                };
                vec![Lineage::with(shift(l), lb, la), Lineage::with(shift(r), rb, ra)]
            }
            ClipJoin { .. } => vec![Lineage::identity(), Lineage::with(shift(&inputs[1]), 0, out_dim - 1)],
            Chop { .. } => vec![Lineage::with(0, inputs[0].max_duration - 1, 0)],
            Transform(t) => {
                let p = inputs[0].period();
                vec![Lineage::with(0, t.history as Millis * p, t.lookahead as Millis * p)]
            }
        }
    }

    /// Scratch bytes the kernel preallocates.
    pub fn state_bytes(&self, inputs: &[EdgeProps], out_capacity: usize) -> usize {
        match self {
            OperatorKind::Transform(t) => {
                let i = &inputs[0];
                let len = (t.slice / i.period()) as usize;
                let total = t.history + len + t.lookahead;
                total * (i.width * std::mem::size_of::<T>() + 1) + len * (i.width * std::mem::size_of::<T>() + 1)
            }
            OperatorKind::WhereShape(s) => kernels::ShapeScratch::bytes(s, out_capacity),
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn props(offset: Timestamp, period: Millis) -> EdgeProps {
        EdgeProps::new(StreamDescriptor::new(offset, period).unwrap(), 1, period, period)
    }

    fn join(mode: JoinMode) -> OperatorKind<f32> {
        OperatorKind::Join {
            mode,
            width: 2,
            combine: Arc::new(|_, _, _, _| {}),
        }
    }

    #[test]
    fn join_descriptors() {
        let out = join(JoinMode::Inner).derive(&[props(0, 2), props(0, 5)]).unwrap();
        assert_eq!(out.descriptor.offset, 0);
        assert_eq!(out.period(), 1);
        let out = join(JoinMode::Inner).derive(&[props(0, 4), props(2, 8)]).unwrap();
        assert_eq!((out.offset(), out.period()), (0, 2));
        let out = join(JoinMode::Inner).derive(&[props(0, 4), props(0, 8)]).unwrap();
        assert_eq!(out.period(), 4);
    }

    #[test]
    fn shift_and_alter_descriptors() {
        let s = OperatorKind::<f32>::Shift { k: 6 }.derive(&[props(0, 2)]).unwrap();
        assert_eq!((s.offset(), s.period()), (6, 2));
        let s = OperatorKind::<f32>::Shift { k: -2 }.derive(&[props(0, 2)]).unwrap();
        assert_eq!(s.offset(), -2);
        let a = OperatorKind::<f32>::AlterPeriod { period: 2 }
            .derive(&[props(0, 8)])
            .unwrap();
        assert_eq!((a.period(), a.max_duration), (2, 2));
        assert!(OperatorKind::<f32>::AlterDuration { duration: 3 }
            .derive(&[props(0, 2)])
            .is_err());
    }

    #[test]
    fn aggregate_rejects_gapped_windows() {
        let agg = |w, p| OperatorKind::<f32>::Aggregate { w, p, agg: Agg::Mean };
        assert_eq!(agg(100, 100).derive(&[props(0, 2)]).unwrap().period(), 100);
        assert!(agg(50, 100).derive(&[props(0, 2)]).is_err());
        assert!(agg(101, 101).derive(&[props(0, 2)]).is_err());
    }
}
