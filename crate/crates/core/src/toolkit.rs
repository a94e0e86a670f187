//! Physiological signal operations built from primitive operators.

use std::f64::consts::PI;
use std::sync::Arc;

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::model::{Millis, StreamDescriptor};
use crate::ops::{Agg, EdgeProps, JoinMode, SliceCtx, SliceOut, TransformSpec};
use crate::plan::{QueryBuilder, SourceSpec, StreamId};
use crate::scalar::Scalar;

/// Gap imputation used by the end-to-end pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fill {
    #[default]
    Const,
    Mean,
}

/// Parameters of the end-to-end pipeline and the toolkit benches.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolkitParams {
    /// Normalization window.
    pub window: Millis,
    /// Longest gap the fills close; also the fill-mean window.
    pub gap_limit: Millis,
    pub fill: Fill,
    pub fill_value: f64,
    pub target_period: Millis,
    pub taps: Vec<f64>,
}

impl Default for ToolkitParams {
    fn default() -> Self {
        ToolkitParams {
            window: 60_000,
            gap_limit: 40,
            fill: Fill::Const,
            fill_value: 0.0,
            target_period: 2,
            taps: Vec::new(),
        }
    }
}

fn props<T: Scalar>(q: &QueryBuilder<T>, s: StreamId) -> Result<EdgeProps> {
    q.props_hint(s, 0)
        .ok_or_else(|| Error::param("stream properties are not derivable yet"))
}

fn scalar_props<T: Scalar>(q: &QueryBuilder<T>, s: StreamId, op: &str) -> Result<EdgeProps> {
    let p = props(q, s)?;
    if p.width != 1 {
        return Err(Error::param(format!(
            "{op} needs a scalar stream, width is {}",
            p.width
        )));
    }
    Ok(p)
}

fn multiple_of(what: &str, v: Millis, period: Millis) -> Result<()> {
    if v < period || v % period != 0 {
        return Err(Error::param(format!(
            "{what} {v} must be a positive multiple of the period {period}"
        )));
    }
    Ok(())
}

/// Standard scores over tumbling windows of `w`, using the population
/// deviation; windows with zero deviation map to 0.
pub fn normalize<T: Scalar>(q: &mut QueryBuilder<T>, s: StreamId, w: Millis) -> Result<StreamId> {
    let p = scalar_props(q, s, "normalize")?;
    multiple_of("normalize window", w, p.period())?;
    let parts = q.multicast(s, 3);
    let mean = q.tumbling(parts[1], w, Agg::Mean);
    let std = q.tumbling(parts[2], w, Agg::Std);
    let with_mean = q.join_concat(parts[0], mean, JoinMode::Inner);
    let all = q.join_concat(with_mean, std, JoinMode::Inner);
    Ok(q.select(all, 1, |_, x, out| {
        let (v, mu, sigma) = (x[0].widen(), x[1].widen(), x[2].widen());
        out[0] = if sigma > 0.0 {
            T::of((v - mu) / sigma)
        } else {
            T::zero()
        };
    }))
}

/// FIR filter `out[t] = sum_j taps[j] * x[t - j*period]`; absent when any tap
/// falls on an absent slot.
pub fn pass_filter<T: Scalar>(q: &mut QueryBuilder<T>, s: StreamId, taps: &[f64]) -> Result<StreamId> {
    let p = scalar_props(q, s, "pass_filter")?;
    if taps.is_empty() {
        return Err(Error::param("pass_filter needs at least one tap"));
    }
    let taps: Arc<[f64]> = taps.into();
    let n = taps.len();
    let f = move |ctx: &SliceCtx<'_, T>, out: &mut SliceOut<'_, T>| {
        let mut acc = 0.0;
        for (j, &h) in taps.iter().enumerate() {
            match ctx.get(-(j as isize)) {
                Some(x) => acc += h * x[0].widen(),
                None => {
                    out.present[0] = false;
                    return;
                }
            }
        }
        out.values[0] = T::of(acc);
    };
    Ok(q.transform(
        s,
        TransformSpec {
            slice: p.period(),
            history: n - 1,
            lookahead: 0,
            f: Arc::new(f),
        },
    ))
}

/// Windowed-sinc low-pass design with a Hamming window and unit DC gain.
pub fn lowpass(cutoff_hz: f64, num_taps: usize, sample_hz: f64) -> Result<Vec<f64>> {
    if num_taps == 0 || num_taps.is_multiple_of(2) {
        return Err(Error::param(format!("number of taps must be odd, got {num_taps}")));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_hz / 2.0) {
        return Err(Error::param(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            sample_hz / 2.0
        )));
    }
    let fc = cutoff_hz / sample_hz;
    let mid = (num_taps / 2) as f64;
    let mut h: Vec<f64> = (0..num_taps)
        .map(|i| {
            let k = i as f64 - mid;
            let sinc = if k == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * k).sin() / (PI * k)
            };
            let window = if num_taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * i as f64 / (num_taps - 1) as f64).cos()
            };
            sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= sum);
    Ok(h)
}

/// Closes absent runs of at most `limit` that have present neighbours on
/// both sides; `fill` picks the value for the slice being written.
fn fill_gaps<T: Scalar>(ctx: &SliceCtx<'_, T>, out: &mut SliceOut<'_, T>, limit: usize, fill: T) {
    let total = ctx.total();
    let (lo, hi) = (ctx.history, ctx.history + ctx.len);
    let mut i = 0;
    while i < total {
        if ctx.present[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < total && !ctx.present[i] {
            i += 1;
        }
        let bounded = start > 0 && i < total;
        if bounded && i - start <= limit {
            for k in start.max(lo)..i.min(hi) {
                out.present[k - lo] = true;
                out.values[k - lo] = fill;
            }
        }
    }
}

/// Fills absent runs no longer than `gap_limit` with `value`.
pub fn fill_const<T: Scalar>(q: &mut QueryBuilder<T>, s: StreamId, gap_limit: Millis, value: f64) -> Result<StreamId> {
    let p = scalar_props(q, s, "fill_const")?;
    multiple_of("gap limit", gap_limit, p.period())?;
    let limit = (gap_limit / p.period()) as usize;
    let v = T::of(value);
    Ok(q.transform(
        s,
        TransformSpec {
            slice: gap_limit,
            history: limit,
            lookahead: limit,
            f: Arc::new(move |ctx, out| fill_gaps(ctx, out, limit, v)),
        },
    ))
}

/// Fills absent runs no longer than `w` with the mean of the present values
/// of the tumbling `w` window each slot belongs to.
pub fn fill_mean<T: Scalar>(q: &mut QueryBuilder<T>, s: StreamId, w: Millis) -> Result<StreamId> {
    let p = scalar_props(q, s, "fill_mean")?;
    multiple_of("fill window", w, p.period())?;
    let limit = (w / p.period()) as usize;
    let f = move |ctx: &SliceCtx<'_, T>, out: &mut SliceOut<'_, T>| {
        let (mut sum, mut n) = (0.0, 0usize);
        for k in 0..ctx.len as isize {
            if let Some(x) = ctx.get(k) {
                sum += x[0].widen();
                n += 1;
            }
        }
        if n > 0 {
            fill_gaps(ctx, out, limit, T::of(sum / n as f64));
        }
    };
    Ok(q.transform(
        s,
        TransformSpec {
            slice: w,
            history: limit,
            lookahead: limit,
            f: Arc::new(f),
        },
    ))
}

/// Sync phase carried through the payload; small enough to be exact in f32.
const PHASE: i64 = 1 << 24;

/// Linear interpolation onto the grid `(offset, target)`.
///
/// Each input event is tagged with its sync phase, chopped onto the common
/// grid of both periods, and clip-joined with the following input event; the
/// combiner interpolates between the two. Slots whose neighbours are more
/// than one input period apart stay absent. When the target period is
/// coarser than the common grid, a tumbling pick keeps the slot-start values.
pub fn resample<T: Scalar>(q: &mut QueryBuilder<T>, s: StreamId, target: Millis) -> Result<StreamId> {
    let p = scalar_props(q, s, "resample")?;
    if target < 1 {
        return Err(Error::param(format!("target period must be >= 1, got {target}")));
    }
    if p.max_duration > p.period() {
        return Err(Error::param("resample needs events no longer than one period"));
    }
    let pin = p.period();
    let g = pin.gcd(&target);
    let tagged = q.select(s, 2, |t, x, out| {
        out[0] = x[0];
        out[1] = T::of(t.rem_euclid(PHASE) as f64);
    });
    let copies = q.multicast(tagged, 2);
    let pieces = q.chop(copies[0], g);
    let joined = q.clip_join(pieces, copies[1], 1, move |t, l, r, out| {
        let l = l.expect("clip join always has a left side");
        let v1 = l[0].widen();
        let t1 = t - (t - l[1].widen() as i64).rem_euclid(PHASE);
        out[0] = if t1 == t {
            l[0]
        } else if let Some(r) = r {
            let t2 = t + (r[1].widen() as i64 - t).rem_euclid(PHASE);
            if t2 - t1 <= pin {
                let v2 = r[0].widen();
                T::of(v1 + (v2 - v1) * (t - t1) as f64 / (t2 - t1) as f64)
            } else {
                T::nan()
            }
        } else {
            T::nan()
        };
    });
    let valid = q.filter(joined, |_, x| !x[0].is_nan());
    if g == target {
        return Ok(valid);
    }
    let pick = Agg::Custom {
        width: 1,
        f: Arc::new(move |t, events, out| match events.next() {
            Some(e) if e.sync == t => {
                out[0] = e.payload[0];
                true
            }
            _ => false,
        }),
    };
    Ok(q.tumbling(valid, target, pick))
}

/// Inner join on strict overlap of two normalized, gap-filled streams, the
/// second resampled onto the first's period.
pub fn end_to_end<T: Scalar>(
    q: &mut QueryBuilder<T>,
    ecg: StreamId,
    abp: StreamId,
    params: &ToolkitParams,
) -> Result<StreamId> {
    let fill = |q: &mut QueryBuilder<T>, s| match params.fill {
        Fill::Const => fill_const(q, s, params.gap_limit, params.fill_value),
        Fill::Mean => fill_mean(q, s, params.gap_limit),
    };
    let ecg = fill(q, ecg)?;
    let abp = fill(q, abp)?;
    let abp = resample(q, abp, params.target_period)?;
    let ecg = normalize(q, ecg, params.window)?;
    let abp = normalize(q, abp, params.window)?;
    let ecg = q.alter_duration(ecg, 1);
    let abp = q.alter_duration(abp, 1);
    Ok(q.join_concat(ecg, abp, JoinMode::Inner))
}

/// Source specs of the two-signal examples: a 500 Hz and a 125 Hz stream.
pub fn ecg_abp_specs() -> (SourceSpec, SourceSpec) {
    (
        SourceSpec::new("ecg", StreamDescriptor::new(0, 2).expect("valid")),
        SourceSpec::new("abp", StreamDescriptor::new(0, 8).expect("valid")),
    )
}

/// Running example: a 500 Hz signal minus its 100 ms tumbling mean, joined
/// with a 200 Hz signal.
pub fn listing1<T: Scalar>() -> Result<(QueryBuilder<T>, StreamId)> {
    let mut q = QueryBuilder::new();
    let s500 = q.source(SourceSpec::new("sig500", StreamDescriptor::new(0, 2)?));
    let s200 = q.source(SourceSpec::new("sig200", StreamDescriptor::new(0, 5)?));
    let parts = q.multicast(s500, 2);
    let vals = q.map(parts[0], |x| x);
    let vals = q.name(vals, "Select1");
    let mean = q.tumbling(parts[1], 100, Agg::Mean);
    let mean = q.name(mean, "TumblingWindow");
    let left = q.join(vals, mean, JoinMode::Inner, 1, |_, v, m, out| {
        out[0] = v.expect("inner")[0] - m.expect("inner")[0];
    });
    let left = q.name(left, "Join1");
    let right = q.map(s200, |x| x);
    let right = q.name(right, "Select2");
    let out = q.join_concat(left, right, JoinMode::Inner);
    let out = q.name(out, "Join2");
    q.name(parts[0], "Multicast");
    Ok((q, out))
}
