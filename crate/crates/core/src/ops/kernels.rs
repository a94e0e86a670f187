//! Per-window kernels.
//!
//! A kernel fills one output window `[a, b)` from the input events inside the
//! operator's lineage interval. Kernels keep no state between windows, so a
//! window computes the same result whichever windows ran before it. Scratch
//! space is sized once when an execution starts.

use crate::error::{Error, Result};
use crate::model::{FWindow, Millis, Timestamp};
use crate::ring::InputView;
use crate::scalar::Scalar;
use crate::shape::{candidate_distance, DtwScratch};

use super::{Agg, EdgeProps, JoinMode, Lineage, OperatorKind, ShapeFilter, ShapeMode, SliceCtx, SliceOut};

/// Fixed scratch owned by one node for the whole execution.
pub enum Scratch<T> {
    None,
    Transform(TransformScratch<T>),
    Shape(ShapeScratch),
}

pub struct TransformScratch<T> {
    values: Vec<T>,
    present: Vec<bool>,
    out_values: Vec<T>,
    out_present: Vec<bool>,
}

pub struct ShapeScratch {
    cand: Vec<f64>,
    dtw: DtwScratch,
    covered: Vec<bool>,
}

impl ShapeScratch {
    pub fn bytes(s: &ShapeFilter, out_capacity: usize) -> usize {
        s.template.len() * 8 + DtwScratch::bytes(s.params.band_radius) + out_capacity
    }
}

impl<T: Scalar> Scratch<T> {
    pub fn for_kind(kind: &OperatorKind<T>, inputs: &[EdgeProps], out_capacity: usize) -> Self {
        match kind {
            OperatorKind::Transform(t) => {
                let i = &inputs[0];
                let len = (t.slice / i.period()) as usize;
                let total = t.history + len + t.lookahead;
                Scratch::Transform(TransformScratch {
                    values: vec![T::zero(); total * i.width],
                    present: vec![false; total],
                    out_values: vec![T::zero(); len * i.width],
                    out_present: vec![false; len],
                })
            }
            OperatorKind::WhereShape(s) => Scratch::Shape(ShapeScratch {
                cand: vec![0.0; s.template.len()],
                dtw: DtwScratch::new(s.params.band_radius),
                covered: vec![false; out_capacity],
            }),
            _ => Scratch::None,
        }
    }
}

fn invariant(msg: impl Into<String>) -> Error {
    Error::Invariant(msg.into())
}

/// Index of `out` within its own frame.
#[inline]
fn window_index<T: Scalar>(out: &FWindow<T>) -> i64 {
    (out.sync() - out.descriptor().offset).div_euclid(out.dimension())
}

#[inline]
fn slot_for<T: Scalar>(out: &FWindow<T>, t: Timestamp) -> Result<usize> {
    let off = t - out.sync();
    let p = out.period();
    if off < 0 || off >= out.dimension() || off % p != 0 {
        return Err(invariant(format!(
            "event at {t} does not fit window [{}, {}) on period {p}",
            out.sync(),
            out.end()
        )));
    }
    Ok((off / p) as usize)
}

/// Applies `kind` to produce `out`, which arrives cleared and positioned.
pub fn apply<T: Scalar>(
    kind: &OperatorKind<T>,
    ins: &[InputView<'_, T>],
    lin: &[Lineage],
    out: &mut FWindow<T>,
    scratch: &mut Scratch<T>,
) -> Result<()> {
    use OperatorKind::*;
    match kind {
        Source { .. } => Err(invariant("source nodes are filled by the runtime")),
        Multicast { .. } => Err(invariant("multicast edges alias their producer")),
        Select { f, .. } => {
            let src = same_index(&ins[0], out)?;
            for i in present_slots(src) {
                let sync = src.vsync(i);
                let dst = out.emit(i, src.duration(i));
                f(sync, src.payload(i), dst);
            }
            Ok(())
        }
        Where { pred } => {
            let src = same_index(&ins[0], out)?;
            for i in present_slots(src) {
                if pred(src.vsync(i), src.payload(i)) {
                    out.emit(i, src.duration(i)).copy_from_slice(src.payload(i));
                }
            }
            Ok(())
        }
        AlterDuration { duration } => {
            let src = same_index(&ins[0], out)?;
            for i in present_slots(src) {
                out.emit(i, *duration).copy_from_slice(src.payload(i));
            }
            Ok(())
        }
        Shift { .. } => {
            let src = same_index(&ins[0], out)?;
            for i in present_slots(src) {
                out.emit(i, src.duration(i)).copy_from_slice(src.payload(i));
            }
            Ok(())
        }
        AlterPeriod { period } => {
            let src = same_index(&ins[0], out)?;
            for i in present_slots(src) {
                out.emit(i, src.duration(i).min(*period))
                    .copy_from_slice(src.payload(i));
            }
            Ok(())
        }
        Aggregate { w, p, agg } => aggregate(&ins[0], *w, *p, agg, out),
        Join { mode, combine, .. } => {
            let l = Side::new(&ins[0], &lin[0], out);
            let r = Side::new(&ins[1], &lin[1], out);
            match mode {
                JoinMode::Inner => inner_join(&l, &r, combine.as_ref(), out),
                JoinMode::Left => preserve_left(&l, &r, combine.as_ref(), out),
                JoinMode::Outer => {
                    preserve_left(&l, &r, combine.as_ref(), out)?;
                    preserve_right(&l, &r, combine.as_ref(), out)
                }
            }
        }
        ClipJoin { combine, .. } => clip_join(&ins[0], &ins[1], combine.as_ref(), out),
        Chop { c } => chop(&Side::new(&ins[0], &lin[0], out), *c, out),
        Transform(t) => match scratch {
            Scratch::Transform(s) => transform(&ins[0], t.slice, t.history, t.lookahead, &t.f, s, out),
            _ => Err(invariant("transform scratch missing")),
        },
        WhereShape(f) => match scratch {
            Scratch::Shape(s) => where_shape(&ins[0], f, s, out),
            _ => Err(invariant("shape scratch missing")),
        },
    }
}

fn same_index<'a, T: Scalar>(input: &InputView<'a, T>, out: &FWindow<T>) -> Result<&'a FWindow<T>> {
    let j = window_index(out);
    let src = input
        .window(j)
        .ok_or_else(|| invariant(format!("input window {j} is not resident")))?;
    if src.capacity() != out.capacity() {
        return Err(invariant(format!(
            "slot-preserving operator got {} input slots for {} output slots",
            src.capacity(),
            out.capacity()
        )));
    }
    Ok(src)
}

fn present_slots<T: Scalar>(w: &FWindow<T>) -> impl Iterator<Item = usize> + '_ {
    let cap = w.capacity();
    let mut next = 0;
    std::iter::from_fn(move || {
        let i = w.presence().next_set(next, cap)?;
        next = i + 1;
        Some(i)
    })
}

fn aggregate<T: Scalar>(
    input: &InputView<'_, T>,
    w: Millis,
    p: Millis,
    agg: &Agg<T>,
    out: &mut FWindow<T>,
) -> Result<()> {
    let a = out.sync();
    let width = out.width();
    for i in 0..out.capacity() {
        let t = a + i as Millis * p;
        if let Agg::Custom { f, .. } = agg {
            let mut it = input.events(t, t + w);
            let dst = out.emit(i, p);
            if !f(t, &mut it, dst) {
                out.remove(i);
            }
            continue;
        }
        let n = input.events(t, t + w).count();
        if n == 0 {
            continue;
        }
        let nf = n as f64;
        let dst = out.emit(i, p);
        if let Agg::Count = agg {
            dst[0] = T::of(nf);
            continue;
        }
        for (lane, d) in dst.iter_mut().enumerate().take(width) {
            let lanes = input.events(t, t + w).map(|e| e.payload[lane].widen());
            let v = match agg {
                Agg::Sum => lanes.sum::<f64>(),
                Agg::Max => lanes.fold(f64::NEG_INFINITY, f64::max),
                Agg::Min => lanes.fold(f64::INFINITY, f64::min),
                Agg::Mean => lanes.sum::<f64>() / nf,
                Agg::Std => {
                    let mean = lanes.sum::<f64>() / nf;
                    let ss = input
                        .events(t, t + w)
                        .map(|e| {
                            let d = e.payload[lane].widen() - mean;
                            d * d
                        })
                        .sum::<f64>();
                    (ss / nf).sqrt()
                }
                Agg::Count | Agg::Custom { .. } => unreachable!(),
            };
            *d = T::of(v);
        }
    }
    Ok(())
}

type Combine<T> = dyn Fn(Timestamp, Option<&[T]>, Option<&[T]>, &mut [T]) + Send + Sync;

#[inline]
fn emit_piece<T: Scalar>(
    out: &mut FWindow<T>,
    start: Timestamp,
    end: Timestamp,
    l: Option<&[T]>,
    r: Option<&[T]>,
    combine: &Combine<T>,
) -> Result<()> {
    if start < out.sync() || start >= out.end() || end <= start {
        return Ok(());
    }
    let i = slot_for(out, start)?;
    let dst = out.emit(i, end - start);
    combine(start, l, r, dst);
    Ok(())
}

/// An input read over its lineage interval `[a - back, b + ahead)`.
struct Side<'a, 'v, T> {
    view: &'v InputView<'a, T>,
    from: Timestamp,
    to: Timestamp,
}

impl<'a, 'v, T: Scalar> Side<'a, 'v, T> {
    fn new(view: &'v InputView<'a, T>, lin: &Lineage, out: &FWindow<T>) -> Self {
        Side {
            view,
            from: out.sync() - lin.back,
            to: out.end() + lin.ahead,
        }
    }

    /// Events that can start a piece inside the output window.
    fn own(&self, out_end: Timestamp) -> crate::ring::Events<'a, T> {
        self.view.events(self.from, out_end)
    }

    fn all(&self) -> crate::ring::Events<'a, T> {
        self.view.events(self.from, self.to)
    }
}

fn inner_join<T: Scalar>(
    left: &Side<'_, '_, T>,
    right: &Side<'_, '_, T>,
    combine: &Combine<T>,
    out: &mut FWindow<T>,
) -> Result<()> {
    let b = out.end();
    let mut li = left.own(b).peekable();
    let mut ri = right.own(b).peekable();
    while let (Some(l), Some(r)) = (li.peek().copied(), ri.peek().copied()) {
        let s = l.sync.max(r.sync);
        let e = l.end().min(r.end());
        if s < e {
            emit_piece(out, s, e, Some(l.payload), Some(r.payload), combine)?;
        }
        match l.end().cmp(&r.end()) {
            std::cmp::Ordering::Less => {
                li.next();
            }
            std::cmp::Ordering::Greater => {
                ri.next();
            }
            std::cmp::Ordering::Equal => {
                li.next();
                ri.next();
            }
        }
    }
    Ok(())
}

/// Emits matched and unmatched-left pieces of every left event.
fn preserve_left<T: Scalar>(
    left: &Side<'_, '_, T>,
    right: &Side<'_, '_, T>,
    combine: &Combine<T>,
    out: &mut FWindow<T>,
) -> Result<()> {
    let mut rbase = right.all().peekable();
    for l in left.own(out.end()) {
        while rbase.peek().is_some_and(|r| r.end() <= l.sync) {
            rbase.next();
        }
        let mut cursor = l.sync;
        let scan = rbase.clone();
        for r in scan {
            if r.sync >= l.end() || cursor >= l.end() {
                break;
            }
            if r.end() <= cursor {
                continue;
            }
            if r.sync > cursor {
                emit_piece(out, cursor, r.sync, Some(l.payload), None, combine)?;
            }
            let ms = l.sync.max(r.sync);
            let me = l.end().min(r.end());
            emit_piece(out, ms, me, Some(l.payload), Some(r.payload), combine)?;
            cursor = me;
        }
        if cursor < l.end() {
            emit_piece(out, cursor, l.end(), Some(l.payload), None, combine)?;
        }
    }
    Ok(())
}

/// Emits unmatched-right pieces only.
fn preserve_right<T: Scalar>(
    left: &Side<'_, '_, T>,
    right: &Side<'_, '_, T>,
    combine: &Combine<T>,
    out: &mut FWindow<T>,
) -> Result<()> {
    let mut lbase = left.all().peekable();
    for r in right.own(out.end()) {
        while lbase.peek().is_some_and(|l| l.end() <= r.sync) {
            lbase.next();
        }
        let mut cursor = r.sync;
        let scan = lbase.clone();
        for l in scan {
            if l.sync >= r.end() || cursor >= r.end() {
                break;
            }
            if l.end() <= cursor {
                continue;
            }
            if l.sync > cursor {
                emit_piece(out, cursor, l.sync, None, Some(r.payload), combine)?;
            }
            cursor = l.end().min(r.end());
        }
        if cursor < r.end() {
            emit_piece(out, cursor, r.end(), None, Some(r.payload), combine)?;
        }
    }
    Ok(())
}

fn clip_join<T: Scalar>(
    left: &InputView<'_, T>,
    right: &InputView<'_, T>,
    combine: &Combine<T>,
    out: &mut FWindow<T>,
) -> Result<()> {
    let (a, b) = (out.sync(), out.end());
    let bound = out.dimension();
    let mut ri = right.events(a, b + bound - 1).peekable();
    for l in left.events(a, b) {
        while ri.peek().is_some_and(|r| r.sync < l.sync) {
            ri.next();
        }
        let next = ri.peek().copied().filter(|r| r.sync < l.sync + bound);
        let duration = match next {
            Some(r) if r.sync > l.sync && r.sync < l.end() => r.sync - l.sync,
            _ => l.duration,
        };
        let i = slot_for(out, l.sync)?;
        let dst = out.emit(i, duration);
        combine(l.sync, Some(l.payload), next.map(|r| r.payload), dst);
    }
    Ok(())
}

fn chop<T: Scalar>(input: &Side<'_, '_, T>, c: Millis, out: &mut FWindow<T>) -> Result<()> {
    let (a, b) = (out.sync(), out.end());
    let origin = input.view.origin();
    for e in input.own(b) {
        let mut start = e.sync;
        while start < e.end() && start < b {
            let boundary = origin + ((start - origin).div_euclid(c) + 1) * c;
            let end = boundary.min(e.end());
            if start >= a {
                let i = slot_for(out, start)?;
                out.emit(i, end - start).copy_from_slice(e.payload);
            }
            start = end;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn transform<T: Scalar>(
    input: &InputView<'_, T>,
    slice: Millis,
    history: usize,
    lookahead: usize,
    f: &super::TransformFn<T>,
    s: &mut TransformScratch<T>,
    out: &mut FWindow<T>,
) -> Result<()> {
    let p = out.period();
    let width = out.width();
    let len = (slice / p) as usize;
    let total = history + len + lookahead;
    let mut start = out.sync();
    while start < out.end() {
        let ctx_start = start - history as Millis * p;
        let ctx_end = start + (len + lookahead) as Millis * p;
        s.present[..total].iter_mut().for_each(|x| *x = false);
        let mut any = false;
        for e in input.events(ctx_start, ctx_end) {
            let k = ((e.sync - ctx_start) / p) as usize;
            s.present[k] = true;
            s.values[k * width..(k + 1) * width].copy_from_slice(e.payload);
            any = true;
        }
        if any {
            s.out_present[..len].copy_from_slice(&s.present[history..history + len]);
            s.out_values[..len * width].copy_from_slice(&s.values[history * width..(history + len) * width]);
            let ctx = SliceCtx {
                start,
                period: p,
                width,
                history,
                len,
                lookahead,
                values: &s.values[..total * width],
                present: &s.present[..total],
            };
            let mut o = SliceOut {
                values: &mut s.out_values[..len * width],
                present: &mut s.out_present[..len],
            };
            f(&ctx, &mut o);
            let base = ((start - out.sync()) / p) as usize;
            for k in 0..len {
                if !s.out_present[k] {
                    continue;
                }
                let t = start + k as Millis * p;
                let duration = if s.present[history + k] {
                    input.event_at(t).map_or(p, |e| e.duration)
                } else {
                    p
                };
                out.emit(base + k, duration)
                    .copy_from_slice(&s.out_values[k * width..(k + 1) * width]);
            }
        }
        start += slice;
    }
    Ok(())
}

fn where_shape<T: Scalar>(
    input: &InputView<'_, T>,
    filter: &ShapeFilter,
    s: &mut ShapeScratch,
    out: &mut FWindow<T>,
) -> Result<()> {
    let (a, b) = (out.sync(), out.end());
    let p = out.period();
    let m = filter.template.len();
    let span = m as Millis * p;
    let hop = filter.params.hop as Millis * p;
    let cap = out.capacity();
    s.covered[..cap].iter_mut().for_each(|x| *x = false);

    let origin = out.descriptor().offset;
    let first = a - (m as Millis - 1) * p;
    let mut start = first + (origin - first).rem_euclid(hop);
    while start < b {
        let mut n = 0;
        for e in input.events(start, start + span) {
            let k = ((e.sync - start) / p) as usize;
            if k != n {
                break;
            }
            s.cand[k] = e.payload[0].widen();
            n += 1;
        }
        if n == m
            && candidate_distance(&filter.template, &filter.params, &mut s.cand, &mut s.dtw) < filter.params.threshold
        {
            let lo = ((start.max(a) - a) / p) as usize;
            let hi = (((start + span).min(b) - a) / p) as usize;
            s.covered[lo..hi].iter_mut().for_each(|x| *x = true);
        }
        start += hop;
    }

    let src = same_index(input, out)?;
    let keep_covered = filter.mode == ShapeMode::Keep;
    for i in present_slots(src) {
        if s.covered[i] == keep_covered {
            out.emit(i, src.duration(i)).copy_from_slice(src.payload(i));
        }
    }
    Ok(())
}
