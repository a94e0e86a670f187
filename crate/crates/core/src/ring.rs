//! Per-edge window rings.
//!
//! Every physical edge owns `depth` preallocated windows. Window index `j` of
//! an edge covers `[origin + j*dim, origin + (j+1)*dim)` and lives in slot
//! `j mod depth`, tagged with `j` so stale contents are never read.

use crate::error::Result;
use crate::model::{EventRef, FWindow, Millis, StreamDescriptor, Timestamp};
use crate::scalar::Scalar;

const EMPTY: i64 = i64::MIN;

#[derive(Debug)]
pub struct Ring<T> {
    origin: Timestamp,
    dim: Millis,
    windows: Vec<FWindow<T>>,
    tags: Vec<i64>,
}

impl<T: Scalar> Ring<T> {
    pub fn new(descriptor: StreamDescriptor, dim: Millis, depth: usize) -> Result<Self> {
        let depth = depth.max(1);
        let windows = (0..depth)
            .map(|_| FWindow::new(descriptor, dim, descriptor.offset))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ring {
            origin: descriptor.offset,
            dim,
            windows,
            tags: vec![EMPTY; depth],
        })
    }

    pub fn depth(&self) -> usize {
        self.windows.len()
    }

    pub fn dim(&self) -> Millis {
        self.dim
    }

    pub fn origin(&self) -> Timestamp {
        self.origin
    }

    pub fn period(&self) -> Millis {
        self.windows[0].period()
    }

    #[inline]
    pub fn window_sync(&self, idx: i64) -> Timestamp {
        self.origin + idx * self.dim
    }

    /// Index of the window containing `t`.
    #[inline]
    pub fn index_of(&self, t: Timestamp) -> i64 {
        (t - self.origin).div_euclid(self.dim)
    }

    #[inline]
    fn slot(&self, idx: i64) -> usize {
        idx.rem_euclid(self.windows.len() as i64) as usize
    }

    #[inline]
    pub fn has(&self, idx: i64) -> bool {
        self.tags[self.slot(idx)] == idx
    }

    #[inline]
    pub fn get(&self, idx: i64) -> Option<&FWindow<T>> {
        let s = self.slot(idx);
        (self.tags[s] == idx).then(|| &self.windows[s])
    }

    /// Takes the window for `idx` out of the ring, reset and positioned.
    /// The caller fills it and hands it back with [`Ring::put`].
    pub(crate) fn take(&mut self, idx: i64) -> FWindow<T> {
        let s = self.slot(idx);
        self.tags[s] = EMPTY;
        let mut w = std::mem::take(&mut self.windows[s]);
        w.reset_to(self.origin + idx * self.dim);
        w
    }

    pub(crate) fn put(&mut self, idx: i64, w: FWindow<T>) {
        let s = self.slot(idx);
        self.windows[s] = w;
        self.tags[s] = idx;
    }

    pub(crate) fn invalidate(&mut self) {
        self.tags.iter_mut().for_each(|t| *t = EMPTY);
    }

    pub fn column_addrs(&self) -> impl Iterator<Item = usize> + '_ {
        self.windows.iter().map(|w| w.column_addr())
    }

    pub fn view(&self) -> InputView<'_, T> {
        InputView { ring: self }
    }
}

/// Read access to an input edge for one kernel invocation.
#[derive(Clone, Copy)]
pub struct InputView<'a, T> {
    ring: &'a Ring<T>,
}

impl<'a, T: Scalar> InputView<'a, T> {
    pub fn period(&self) -> Millis {
        self.ring.period()
    }

    pub fn origin(&self) -> Timestamp {
        self.ring.origin
    }

    pub fn dim(&self) -> Millis {
        self.ring.dim
    }

    /// True when every window overlapping `[from, to)` is resident.
    pub fn covers(&self, from: Timestamp, to: Timestamp) -> bool {
        if from >= to {
            return true;
        }
        (self.ring.index_of(from)..=self.ring.index_of(to - 1)).all(|j| self.ring.has(j))
    }

    pub fn window(&self, idx: i64) -> Option<&'a FWindow<T>> {
        self.ring.get(idx)
    }

    pub fn index_of(&self, t: Timestamp) -> i64 {
        self.ring.index_of(t)
    }

    /// Present event whose sync is exactly `t`.
    pub fn event_at(&self, t: Timestamp) -> Option<EventRef<'a, T>> {
        let w = self.ring.get(self.ring.index_of(t))?;
        let off = t - w.sync();
        if off % w.period() != 0 {
            return None;
        }
        w.event((off / w.period()) as usize)
    }

    /// Present events with sync in `[from, to)`, in time order.
    pub fn events(&self, from: Timestamp, to: Timestamp) -> Events<'a, T> {
        let ring = self.ring;
        let (widx, wend) = if from < to {
            (ring.index_of(from), ring.index_of(to - 1))
        } else {
            (0, -1)
        };
        let mut it = Events {
            ring,
            from,
            to,
            widx,
            wend,
            window: None,
            slot: 0,
            slot_end: 0,
        };
        it.load();
        it
    }
}

#[derive(Clone)]
pub struct Events<'a, T> {
    ring: &'a Ring<T>,
    from: Timestamp,
    to: Timestamp,
    widx: i64,
    wend: i64,
    window: Option<&'a FWindow<T>>,
    slot: usize,
    slot_end: usize,
}

impl<'a, T: Scalar> Events<'a, T> {
    fn load(&mut self) {
        self.window = None;
        while self.widx <= self.wend {
            if let Some(w) = self.ring.get(self.widx) {
                let p = w.period();
                let lo = (self.from - w.sync()).max(0);
                let hi = (self.to - w.sync()).min(w.dimension());
                self.slot = ((lo + p - 1) / p) as usize;
                self.slot_end = ((hi + p - 1) / p) as usize;
                self.window = Some(w);
                return;
            }
            debug_assert!(false, "window {} not resident", self.widx);
            self.widx += 1;
        }
    }
}

impl<'a, T: Scalar> Iterator for Events<'a, T> {
    type Item = EventRef<'a, T>;

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let w = self.window?;
            if let Some(i) = w.presence().next_set(self.slot, self.slot_end) {
                self.slot = i + 1;
                return w.event(i);
            }
            self.widx += 1;
            self.load();
        }
    }
}
