//! Ingested source data.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Event, EventRef, Millis, StreamDescriptor, Timestamp};
use crate::plan::SourceSpec;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Runs separated by at most this gap count as one availability segment.
    pub merge_gap: Millis,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { merge_gap: 60_000 }
    }
}

/// Sorted, disjoint `[start, end)` segments where a source has data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AvailabilityIndex {
    segments: Vec<(Timestamp, Timestamp)>,
}

impl AvailabilityIndex {
    pub fn build(syncs: &[Timestamp], durations: &[Millis], merge_gap: Millis) -> Self {
        let mut segments: Vec<(Timestamp, Timestamp)> = Vec::new();
        for (&s, &d) in syncs.iter().zip(durations) {
            match segments.last_mut() {
                Some(last) if s - last.1 <= merge_gap => last.1 = last.1.max(s + d),
                _ => segments.push((s, s + d)),
            }
        }
        AvailabilityIndex { segments }
    }

    pub fn from_segments(mut segments: Vec<(Timestamp, Timestamp)>) -> Self {
        segments.retain(|&(s, e)| s < e);
        segments.sort_unstable();
        let mut merged: Vec<(Timestamp, Timestamp)> = Vec::with_capacity(segments.len());
        for (s, e) in segments {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        AvailabilityIndex { segments: merged }
    }

    pub fn segments(&self) -> &[(Timestamp, Timestamp)] {
        &self.segments
    }

    pub fn intersects(&self, start: Timestamp, end: Timestamp) -> bool {
        let k = self.segments.partition_point(|&(_, e)| e <= start);
        k < self.segments.len() && self.segments[k].0 < end
    }

    pub fn extent(&self) -> Option<(Timestamp, Timestamp)> {
        Some((self.segments.first()?.0, self.segments.last()?.1))
    }

    pub fn covered(&self) -> Millis {
        self.segments.iter().map(|(s, e)| e - s).sum()
    }
}

/// Columnar events of one source, sorted by sync.
#[derive(Debug, Clone)]
pub struct SourceData<T> {
    pub descriptor: StreamDescriptor,
    pub width: usize,
    syncs: Vec<Timestamp>,
    durations: Vec<Millis>,
    payload: Vec<T>,
    availability: AvailabilityIndex,
    /// Rows dropped at ingest because their timestamp was off the grid.
    pub rejected: u64,
    /// Rows that repeated an earlier timestamp; the last one was kept.
    pub duplicates: u64,
}

impl<T: Scalar> SourceData<T> {
    pub fn empty(descriptor: StreamDescriptor, width: usize) -> Self {
        SourceData {
            descriptor,
            width,
            syncs: Vec::new(),
            durations: Vec::new(),
            payload: Vec::new(),
            availability: AvailabilityIndex::default(),
            rejected: 0,
            duplicates: 0,
        }
    }

    /// Builds from events that are on the grid, sorted and non-overlapping.
    pub fn from_events(
        descriptor: StreamDescriptor,
        width: usize,
        events: impl IntoIterator<Item = Event<T>>,
    ) -> Result<Self> {
        let mut d = Self::empty(descriptor, width);
        for e in events {
            d.push(e.sync, e.duration, &e.payload)?;
        }
        d.reindex(IngestOptions::default().merge_gap);
        Ok(d)
    }

    /// Scalar samples lasting one period each; NaN values are treated as absent.
    pub fn from_samples(descriptor: StreamDescriptor, samples: &[(Timestamp, T)]) -> Result<Self> {
        let mut d = Self::empty(descriptor, 1);
        for &(t, v) in samples {
            if !v.is_nan() {
                d.push(t, descriptor.period, &[v])?;
            }
        }
        d.reindex(IngestOptions::default().merge_gap);
        Ok(d)
    }

    /// Consecutive scalar samples starting at `start`; NaN values are absent.
    pub fn dense(descriptor: StreamDescriptor, start: Timestamp, values: &[T]) -> Result<Self> {
        let mut d = Self::empty(descriptor, 1);
        for (i, &v) in values.iter().enumerate() {
            if !v.is_nan() {
                d.push(start + i as Millis * descriptor.period, descriptor.period, &[v])?;
            }
        }
        d.reindex(IngestOptions::default().merge_gap);
        Ok(d)
    }

    fn push(&mut self, sync: Timestamp, duration: Millis, payload: &[T]) -> Result<()> {
        if !self.descriptor.is_on_grid(sync) {
            return Err(Error::Misaligned {
                what: "source event",
                value: sync,
                offset: self.descriptor.offset,
                period: self.descriptor.period,
            });
        }
        if duration < 1 {
            return Err(Error::param(format!("event at {sync} has duration {duration}")));
        }
        if payload.len() != self.width {
            return Err(Error::LengthMismatch {
                left: payload.len(),
                right: self.width,
            });
        }
        if let Some(&last) = self.syncs.last() {
            let end = last + self.durations[self.durations.len() - 1];
            if sync < end {
                return Err(Error::param(format!("event at {sync} overlaps the event at {last}")));
            }
        }
        self.syncs.push(sync);
        self.durations.push(duration);
        self.payload.extend_from_slice(payload);
        Ok(())
    }

    /// Rebuilds the availability index with a different merge gap.
    pub fn reindex(&mut self, merge_gap: Millis) {
        self.availability = AvailabilityIndex::build(&self.syncs, &self.durations, merge_gap);
    }

    pub fn len(&self) -> usize {
        self.syncs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syncs.is_empty()
    }

    pub fn syncs(&self) -> &[Timestamp] {
        &self.syncs
    }

    pub fn durations(&self) -> &[Millis] {
        &self.durations
    }

    pub fn event(&self, i: usize) -> EventRef<'_, T> {
        EventRef {
            sync: self.syncs[i],
            duration: self.durations[i],
            payload: &self.payload[i * self.width..(i + 1) * self.width],
        }
    }

    pub fn events(&self) -> impl Iterator<Item = EventRef<'_, T>> + '_ {
        (0..self.len()).map(|i| self.event(i))
    }

    /// Index range of events with sync in `[from, to)`.
    pub fn range(&self, from: Timestamp, to: Timestamp) -> std::ops::Range<usize> {
        let a = self.syncs.partition_point(|&s| s < from);
        let b = a + self.syncs[a..].partition_point(|&s| s < to);
        a..b
    }

    pub fn availability(&self) -> &AvailabilityIndex {
        &self.availability
    }

    /// First sync and last end.
    pub fn extent(&self) -> Option<(Timestamp, Timestamp)> {
        let n = self.len();
        (n > 0).then(|| (self.syncs[0], self.syncs[n - 1] + self.durations[n - 1]))
    }

    pub fn max_duration(&self) -> Millis {
        self.durations.iter().copied().max().unwrap_or(0)
    }

    /// Checks the data against the stream the query declared for it.
    pub fn check(&self, spec: &SourceSpec) -> Result<()> {
        let bad = |m: String| Err(Error::plan(spec.name.clone(), m));
        if self.descriptor.offset != spec.descriptor.offset || self.descriptor.period != spec.descriptor.period {
            return bad(format!(
                "data is on grid {} but the query declares {}",
                self.descriptor, spec.descriptor
            ));
        }
        if self.width != spec.width {
            return bad(format!(
                "data has width {} but the query declares {}",
                self.width, spec.width
            ));
        }
        if let Some(&d) = self
            .durations
            .iter()
            .find(|&&d| d > spec.max_duration || d % spec.grain != 0)
        {
            return bad(format!(
                "duration {d} violates max duration {} / grain {}",
                spec.max_duration, spec.grain
            ));
        }
        Ok(())
    }
}

/// Reads `timestamp,value[,value...]` rows. A header row is skipped; empty
/// or NaN values mark a missing sample.
pub fn ingest_csv<T: Scalar>(path: impl AsRef<Path>, spec: &SourceSpec, opts: &IngestOptions) -> Result<SourceData<T>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let desc = spec.descriptor;
    let mut data = SourceData::empty(desc, spec.width);
    let mut row = Vec::with_capacity(spec.width);
    let mut last: Option<Timestamp> = None;
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(n as u64 + 1, |p| p.line());
        let err = |m: String| Error::Ingest {
            path: shown.clone(),
            line,
            message: m,
        };
        let Some(ts) = rec.get(0) else { continue };
        if ts.is_empty() {
            continue;
        }
        let t: Timestamp = match ts.parse() {
            Ok(t) => t,
            Err(_) if n == 0 => continue,
            Err(_) => return Err(err(format!("bad timestamp {ts:?}"))),
        };
        if rec.len() != spec.width + 1 {
            return Err(err(format!("expected {} columns, found {}", spec.width + 1, rec.len())));
        }
        if let Some(prev) = last {
            if t < prev {
                return Err(err(format!("timestamp {t} decreases after {prev}")));
            }
        }
        last = Some(t);
        if !desc.is_on_grid(t) {
            data.rejected += 1;
            continue;
        }
        row.clear();
        let mut missing = false;
        for f in rec.iter().skip(1) {
            if f.is_empty() {
                missing = true;
                break;
            }
            let v: f64 = f.parse().map_err(|_| err(format!("bad value {f:?}")))?;
            if v.is_nan() {
                missing = true;
                break;
            }
            row.push(T::of(v));
        }
        if data.syncs.last() == Some(&t) {
            data.duplicates += 1;
            data.syncs.pop();
            data.durations.pop();
            let w = data.width;
            data.payload.truncate(data.payload.len() - w);
        }
        if missing {
            continue;
        }
        data.syncs.push(t);
        data.durations.push(desc.period);
        data.payload.extend_from_slice(&row);
    }
    data.reindex(opts.merge_gap);
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn availability_merges_small_gaps() {
        let syncs = [0, 2, 4, 100, 102, 300];
        let durs = [2; 6];
        let a = AvailabilityIndex::build(&syncs, &durs, 10);
        assert_eq!(a.segments(), &[(0, 6), (100, 104), (300, 302)]);
        assert!(a.intersects(5, 50));
        assert!(!a.intersects(6, 100));
        let a = AvailabilityIndex::build(&syncs, &durs, 96);
        assert_eq!(a.segments(), &[(0, 104), (300, 302)]);
    }

    #[test]
    fn csv_rules() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "timestamp,value\n0,1\n3,9\n4,2\n4,3\n6,\n8,5\n").unwrap();
        let spec = SourceSpec::new("s", StreamDescriptor::new(0, 2).unwrap());
        let d: SourceData<f64> = ingest_csv(&p, &spec, &IngestOptions::default()).unwrap();
        assert_eq!(d.syncs(), &[0, 4, 8]);
        assert_eq!(d.event(1).payload, &[3.0]);
        assert_eq!((d.rejected, d.duplicates), (1, 1));

        std::fs::write(&p, "0,1\n4,2\n2,3\n").unwrap();
        let e = ingest_csv::<f64>(&p, &spec, &IngestOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Ingest { line: 3, .. }), "{e}");
    }
}
