//! Periodic stream data model: events, stream descriptors and the columnar
//! fixed-interval window (`FWindow`).
//!
//! Time is integer milliseconds. A periodic stream is identified by its
//! `(offset, period)` pair; every event sync lies on that grid, and at most
//! one event is active at any instant. An `FWindow` covers
//! `[sync, sync + dimension)` and stores one slot per grid point, so its
//! capacity is `dimension / period` no matter how much data flows through it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Milliseconds since an arbitrary epoch.
pub type Timestamp = i64;

/// A non-negative span of milliseconds.
pub type Millis = i64;

/// Shape of the payload cell carried by every event of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    /// One signal value.
    Scalar,
    /// A fixed number of lanes, e.g. the output of a join.
    Composite { lanes: u16 },
}

impl PayloadKind {
    pub fn with_width(width: usize) -> Self {
        if width == 1 {
            PayloadKind::Scalar
        } else {
            PayloadKind::Composite { lanes: width as u16 }
        }
    }

    pub fn width(self) -> usize {
        match self {
            PayloadKind::Scalar => 1,
            PayloadKind::Composite { lanes } => lanes as usize,
        }
    }
}

/// Symbolic identity of a periodic stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamDescriptor {
    pub offset: Timestamp,
    pub period: Millis,
    pub kind: PayloadKind,
}

impl Default for StreamDescriptor {
    fn default() -> Self {
        StreamDescriptor {
            offset: 0,
            period: 1,
            kind: PayloadKind::Scalar,
        }
    }
}

impl StreamDescriptor {
    pub fn new(offset: Timestamp, period: Millis) -> Result<Self> {
        if period < 1 {
            return Err(Error::param(format!("period must be >= 1, got {period}")));
        }
        Ok(StreamDescriptor {
            offset,
            period,
            kind: PayloadKind::Scalar,
        })
    }

    /// Descriptor for a device sampling at `hz`. Rates whose period is not a
    /// whole number of milliseconds are rejected.
    pub fn from_hz(offset: Timestamp, hz: f64) -> Result<Self> {
        if !hz.is_finite() || hz <= 0.0 {
            return Err(Error::param(format!("frequency must be positive, got {hz}")));
        }
        let period = 1000.0 / hz;
        if (period - period.round()).abs() > 1e-9 || period.round() < 1.0 {
            return Err(Error::param(format!(
                "{hz} Hz does not have an integer millisecond period"
            )));
        }
        Self::new(offset, period.round() as Millis)
    }

    pub fn with_kind(mut self, kind: PayloadKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn width(&self) -> usize {
        self.kind.width()
    }

    pub fn is_on_grid(&self, t: Timestamp) -> bool {
        (t - self.offset).rem_euclid(self.period) == 0
    }

    /// Smallest grid point `>= t`.
    pub fn ceil_to_grid(&self, t: Timestamp) -> Timestamp {
        let r = (t - self.offset).rem_euclid(self.period);
        if r == 0 {
            t
        } else {
            t + self.period - r
        }
    }

    /// Largest grid point `<= t`.
    pub fn floor_to_grid(&self, t: Timestamp) -> Timestamp {
        t - (t - self.offset).rem_euclid(self.period)
    }
}

impl fmt::Display for StreamDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.offset, self.period)
    }
}

/// Number of slots an FWindow of `dimension` needs on `descriptor`.
pub fn capacity(descriptor: &StreamDescriptor, dimension: Millis) -> Result<usize> {
    if dimension < 1 || dimension % descriptor.period != 0 {
        return Err(Error::NonDivisibleDimension {
            edge: descriptor.to_string(),
            dimension,
            period: descriptor.period,
        });
    }
    Ok((dimension / descriptor.period) as usize)
}

/// An owned, present event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    pub sync: Timestamp,
    pub duration: Millis,
    pub payload: Vec<T>,
}

impl<T: Scalar> Event<T> {
    pub fn new(sync: Timestamp, duration: Millis, payload: Vec<T>) -> Self {
        Event {
            sync,
            duration,
            payload,
        }
    }

    pub fn scalar(sync: Timestamp, duration: Millis, value: T) -> Self {
        Event::new(sync, duration, vec![value])
    }

    pub fn end(&self) -> Timestamp {
        self.sync + self.duration
    }

    pub fn as_ref(&self) -> EventRef<'_, T> {
        EventRef {
            sync: self.sync,
            duration: self.duration,
            payload: &self.payload,
        }
    }

    /// Same sync, duration and bit-identical payload.
    pub fn bit_eq(&self, other: &Event<T>) -> bool {
        self.sync == other.sync
            && self.duration == other.duration
            && self.payload.len() == other.payload.len()
            && self
                .payload
                .iter()
                .zip(&other.payload)
                .all(|(a, b)| a.bits() == b.bits())
    }
}

/// Borrowed view of one present event inside a window.
#[derive(Debug, Clone, Copy)]
pub struct EventRef<'a, T> {
    pub sync: Timestamp,
    pub duration: Millis,
    pub payload: &'a [T],
}

impl<T: Scalar> EventRef<'_, T> {
    pub fn end(&self) -> Timestamp {
        self.sync + self.duration
    }

    pub fn to_owned(&self) -> Event<T> {
        Event::new(self.sync, self.duration, self.payload.to_vec())
    }
}

/// Packed per-slot presence flags.
#[derive(Debug, Clone, Default)]
pub struct Presence {
    words: Vec<u64>,
    len: usize,
}

impl Presence {
    pub fn new(len: usize) -> Self {
        Presence {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i >> 6] & (1 << (i & 63)) != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn unset(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i >> 6] &= !(1 << (i & 63));
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// First set index in `[from, to)`.
    #[inline]
    pub fn next_set(&self, from: usize, to: usize) -> Option<usize> {
        let to = to.min(self.len);
        if from >= to {
            return None;
        }
        let mut wi = from >> 6;
        let mut word = self.words[wi] & (!0u64 << (from & 63));
        loop {
            if word != 0 {
                let i = (wi << 6) + word.trailing_zeros() as usize;
                return (i < to).then_some(i);
            }
            wi += 1;
            if wi << 6 >= to {
                return None;
            }
            word = self.words[wi];
        }
    }

    pub fn any_in(&self, from: usize, to: usize) -> bool {
        self.next_set(from, to).is_some()
    }

    pub(crate) fn heap_bytes(len: usize) -> usize {
        len.div_ceil(64) * 8
    }
}

/// Fixed-interval columnar window over a periodic stream.
///
/// Slot `i` stands for nominal time `sync + i * period`. Columns are sized
/// once at construction; [`FWindow::slide`] moves the window forward by
/// clearing presence and updating `sync`, never reallocating.
#[derive(Debug, Clone)]
pub struct FWindow<T> {
    descriptor: StreamDescriptor,
    sync: Timestamp,
    dimension: Millis,
    width: usize,
    payload: Vec<T>,
    vsync: Vec<Timestamp>,
    duration: Vec<Millis>,
    present: Presence,
}

impl<T: Scalar> Default for FWindow<T> {
    fn default() -> Self {
        FWindow {
            descriptor: StreamDescriptor::default(),
            sync: 0,
            dimension: 0,
            width: 0,
            payload: Vec::new(),
            vsync: Vec::new(),
            duration: Vec::new(),
            present: Presence::default(),
        }
    }
}

impl<T: Scalar> FWindow<T> {
    pub fn new(descriptor: StreamDescriptor, dimension: Millis, sync: Timestamp) -> Result<Self> {
        let cap = capacity(&descriptor, dimension)?;
        if !descriptor.is_on_grid(sync) {
            return Err(Error::Misaligned {
                what: "window sync",
                value: sync,
                offset: descriptor.offset,
                period: descriptor.period,
            });
        }
        let width = descriptor.width();
        Ok(FWindow {
            descriptor,
            sync,
            dimension,
            width,
            payload: vec![T::zero(); cap * width],
            vsync: vec![0; cap],
            duration: vec![0; cap],
            present: Presence::new(cap),
        })
    }

    /// Heap bytes used by one window of `slots` slots and `width` lanes.
    pub fn bytes_for(slots: usize, width: usize) -> usize {
        slots * (width * std::mem::size_of::<T>() + 16) + Presence::heap_bytes(slots)
    }

    pub fn descriptor(&self) -> &StreamDescriptor {
        &self.descriptor
    }

    pub fn sync(&self) -> Timestamp {
        self.sync
    }

    pub fn end(&self) -> Timestamp {
        self.sync + self.dimension
    }

    pub fn dimension(&self) -> Millis {
        self.dimension
    }

    pub fn period(&self) -> Millis {
        self.descriptor.period
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn capacity(&self) -> usize {
        self.vsync.len()
    }

    pub fn presence(&self) -> &Presence {
        &self.present
    }

    /// Nominal time of slot `i`.
    #[inline]
    pub fn slot_time(&self, i: usize) -> Timestamp {
        self.sync + i as Millis * self.descriptor.period
    }

    pub fn slot_of(&self, t: Timestamp) -> Result<usize> {
        if t < self.sync || t >= self.end() {
            return Err(Error::OutOfRange {
                t,
                start: self.sync,
                end: self.end(),
            });
        }
        Ok(((t - self.sync) / self.descriptor.period) as usize)
    }

    /// Moves the window to `new_sync`, dropping its contents. Buffers are reused.
    pub fn slide(&mut self, new_sync: Timestamp) -> Result<()> {
        if new_sync < self.sync {
            return Err(Error::BackwardSlide {
                from: self.sync,
                to: new_sync,
            });
        }
        if !self.descriptor.is_on_grid(new_sync) {
            return Err(Error::Misaligned {
                what: "slide target",
                value: new_sync,
                offset: self.descriptor.offset,
                period: self.descriptor.period,
            });
        }
        if new_sync != self.sync {
            self.sync = new_sync;
            self.present.clear();
        }
        Ok(())
    }

    /// Repositions the window anywhere on its grid. Used by the runtime when a
    /// ring slot is recycled for an unrelated window index.
    pub(crate) fn reset_to(&mut self, sync: Timestamp) {
        debug_assert!(self.descriptor.is_on_grid(sync));
        self.sync = sync;
        self.present.clear();
    }

    pub fn clear(&mut self) {
        self.present.clear();
    }

    #[inline]
    pub fn is_present(&self, i: usize) -> bool {
        self.present.get(i)
    }

    #[inline]
    pub fn payload(&self, i: usize) -> &[T] {
        &self.payload[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    pub fn vsync(&self, i: usize) -> Timestamp {
        self.vsync[i]
    }

    #[inline]
    pub fn duration(&self, i: usize) -> Millis {
        self.duration[i]
    }

    #[inline]
    pub fn event(&self, i: usize) -> Option<EventRef<'_, T>> {
        self.present.get(i).then(|| EventRef {
            sync: self.vsync[i],
            duration: self.duration[i],
            payload: self.payload(i),
        })
    }

    /// Marks slot `i` present with the given duration and returns its payload
    /// cell for the caller to fill.
    #[inline]
    pub fn emit(&mut self, i: usize, duration: Millis) -> &mut [T] {
        debug_assert!(duration >= 1, "present events need a positive duration");
        self.present.set(i);
        self.vsync[i] = self.slot_time(i);
        self.duration[i] = duration;
        let w = self.width;
        &mut self.payload[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.present.unset(i);
    }

    #[inline]
    pub fn set_duration(&mut self, i: usize, duration: Millis) {
        self.duration[i] = duration;
    }

    #[inline]
    pub fn payload_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.width;
        &mut self.payload[i * w..(i + 1) * w]
    }

    /// Checked insertion of an on-grid event.
    pub fn insert(&mut self, sync: Timestamp, duration: Millis, payload: &[T]) -> Result<()> {
        if !self.descriptor.is_on_grid(sync) {
            return Err(Error::Misaligned {
                what: "event sync",
                value: sync,
                offset: self.descriptor.offset,
                period: self.descriptor.period,
            });
        }
        if payload.len() != self.width {
            return Err(Error::LengthMismatch {
                left: payload.len(),
                right: self.width,
            });
        }
        if duration < 1 {
            return Err(Error::param(format!("duration must be >= 1, got {duration}")));
        }
        let i = self.slot_of(sync)?;
        self.emit(i, duration).copy_from_slice(payload);
        Ok(())
    }

    pub fn present_count(&self) -> usize {
        self.present.count()
    }

    pub fn iter(&self) -> impl Iterator<Item = EventRef<'_, T>> + '_ {
        let cap = self.capacity();
        let mut next = 0;
        std::iter::from_fn(move || {
            let i = self.present.next_set(next, cap)?;
            next = i + 1;
            self.event(i)
        })
    }

    pub fn to_events(&self) -> Vec<Event<T>> {
        self.iter().map(|e| e.to_owned()).collect()
    }

    /// Stable address of the payload column; the runtime asserts it never changes.
    pub fn column_addr(&self) -> usize {
        self.payload.as_ptr() as usize
    }

    /// Verifies slot alignment, positive durations and non-overlap.
    pub fn check_invariants(&self) -> Result<()> {
        let mut prev_end: Option<Timestamp> = None;
        for i in (0..self.capacity()).filter(|&i| self.present.get(i)) {
            let v = self.vsync[i];
            let lo = self.slot_time(i);
            if v < lo || v >= lo + self.descriptor.period {
                return Err(Error::Invariant(format!(
                    "slot {i} holds vsync {v} outside [{lo}, {})",
                    lo + self.descriptor.period
                )));
            }
            if self.duration[i] < 1 {
                return Err(Error::Invariant(format!(
                    "slot {i} has non-positive duration {}",
                    self.duration[i]
                )));
            }
            if let Some(end) = prev_end {
                if end > v {
                    return Err(Error::Invariant(format!(
                        "event at {v} overlaps the previous event ending at {end}"
                    )));
                }
            }
            prev_end = Some(v + self.duration[i]);
        }
        Ok(())
    }
}
