//! Shape queries: constrained DTW subsequence matching.
//!
//! A template of `m` samples is compared against every fully present run of
//! `m` consecutive slots whose start lies on the hop grid
//! `offset + k * hop * period`. The distance is Sakoe-Chiba banded DTW with
//! squared cell cost, divided by `m`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FWindow, Millis, Timestamp};
use crate::ops::ShapeMode;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTemplate {
    values: Vec<f64>,
}

impl ShapeTemplate {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param(format!(
                "shape template needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("shape template value {v} is not finite")));
        }
        Ok(ShapeTemplate { values })
    }

    /// One value per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line.parse::<f64>().map_err(|e| Error::Ingest {
                path: path.display().to_string(),
                line: n as u64 + 1,
                message: format!("bad template value {line:?}: {e}"),
            })?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Template as used for matching: z-normalized when the params ask for it.
    pub fn prepared(&self, params: &MatchParams) -> Vec<f64> {
        let mut v = self.values.clone();
        if params.normalize {
            znormalize(&mut v);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Sakoe-Chiba band radius in slots.
    pub band_radius: usize,
    /// A candidate matches when its distance is strictly below this.
    pub threshold: f64,
    /// Slots between evaluated candidate starts.
    pub hop: usize,
    /// Z-normalize template and candidates.
    pub normalize: bool,
}

impl MatchParams {
    /// Default band and hop for a template of length `m`.
    pub fn new(m: usize, threshold: f64) -> Self {
        MatchParams {
            band_radius: default_band(m),
            threshold,
            hop: (m / 4).max(1),
            normalize: true,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if m < 2 {
            return Err(Error::param("shape template needs at least 2 values"));
        }
        if self.band_radius >= m {
            return Err(Error::param(format!(
                "band radius {} must be below the template length {m}",
                self.band_radius
            )));
        }
        if self.hop == 0 {
            return Err(Error::param("hop must be >= 1"));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::param(format!("threshold must be > 0, got {}", self.threshold)));
        }
        Ok(())
    }
}

/// `max(5, ceil(m / 10))`, clamped below `m`.
pub fn default_band(m: usize) -> usize {
    5usize.max(m.div_ceil(10)).min(m.saturating_sub(1))
}

/// In-place population z-normalization; a constant input becomes all zeros.
pub fn znormalize(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
}

/// Two rolling band columns.
#[derive(Debug, Clone)]
pub struct DtwScratch {
    prev: Vec<f64>,
    cur: Vec<f64>,
}

impl DtwScratch {
    pub fn new(band_radius: usize) -> Self {
        DtwScratch {
            prev: vec![f64::INFINITY; 2 * band_radius + 1],
            cur: vec![f64::INFINITY; 2 * band_radius + 1],
        }
    }

    pub fn bytes(band_radius: usize) -> usize {
        2 * (2 * band_radius + 1) * 8
    }
}

/// Banded DTW distance using caller-provided scratch sized for `r`.
#[allow(clippy::needless_range_loop)]
pub fn cdtw_with(scratch: &mut DtwScratch, a: &[f64], b: &[f64], r: usize) -> f64 {
    let m = a.len();
    debug_assert_eq!(m, b.len());
    debug_assert!(scratch.prev.len() > 2 * r);
    let width = 2 * r + 1;
    let (prev, cur) = (&mut scratch.prev, &mut scratch.cur);
    prev[..width].iter_mut().for_each(|x| *x = f64::INFINITY);
    // Band coordinate k = j - i + r.
    for i in 0..m {
        cur[..width].iter_mut().for_each(|x| *x = f64::INFINITY);
        let jlo = i.saturating_sub(r);
        let jhi = (i + r).min(m - 1);
        for j in jlo..=jhi {
            let k = j + r - i;
            let d = a[i] - b[j];
            let cost = d * d;
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 && k + 1 < width {
                    prev[k + 1]
                } else {
                    f64::INFINITY
                };
                let diag = if i > 0 { prev[k] } else { f64::INFINITY };
                let left = if k > 0 && j > 0 { cur[k - 1] } else { f64::INFINITY };
                up.min(diag).min(left)
            };
            cur[k] = cost + best;
        }
        std::mem::swap(prev, cur);
    }
    prev[r] / m as f64
}

/// Constrained DTW distance between equal-length sequences.
pub fn cdtw_distance<T: Scalar>(a: &[T], b: &[T], r: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    if r >= a.len() && a.len() > 1 {
        return Err(Error::param(format!(
            "band radius {r} must be below the sequence length {}",
            a.len()
        )));
    }
    let a: Vec<f64> = a.iter().map(|x| x.widen()).collect();
    let b: Vec<f64> = b.iter().map(|x| x.widen()).collect();
    let mut scratch = DtwScratch::new(r);
    Ok(cdtw_with(&mut scratch, &a, &b, r))
}

/// Distance of one candidate run against a prepared template.
pub(crate) fn candidate_distance(
    template: &[f64],
    params: &MatchParams,
    cand: &mut [f64],
    scratch: &mut DtwScratch,
) -> f64 {
    if params.normalize {
        znormalize(cand);
    }
    cdtw_with(scratch, template, cand, params.band_radius)
}

/// Streaming matcher. Samples are pushed in time order; missing grid points
/// break contiguity. Carries only the last `m` samples.
pub struct ShapeScanner {
    template: Vec<f64>,
    params: MatchParams,
    offset: Timestamp,
    period: Millis,
    hist: Vec<f64>,
    head: usize,
    run: usize,
    last: Option<Timestamp>,
    cand: Vec<f64>,
    scratch: DtwScratch,
    current: Option<(Timestamp, Timestamp)>,
    matches: Vec<(Timestamp, Timestamp)>,
}

impl ShapeScanner {
    pub fn new(template: &ShapeTemplate, params: MatchParams, offset: Timestamp, period: Millis) -> Result<Self> {
        params.validate(template.len())?;
        let m = template.len();
        Ok(ShapeScanner {
            template: template.prepared(&params),
            params,
            offset,
            period,
            hist: vec![0.0; m],
            head: 0,
            run: 0,
            last: None,
            cand: vec![0.0; m],
            scratch: DtwScratch::new(params.band_radius),
            current: None,
            matches: Vec::new(),
        })
    }

    pub fn push(&mut self, t: Timestamp, v: f64) {
        let m = self.template.len();
        if self.last.is_none_or(|l| t != l + self.period) {
            self.run = 0;
        }
        self.last = Some(t);
        self.hist[self.head] = v;
        self.head = (self.head + 1) % m;
        self.run += 1;
        if self.run < m {
            return;
        }
        let start = t - (m as Millis - 1) * self.period;
        let hop = self.params.hop as Millis * self.period;
        if (start - self.offset).rem_euclid(hop) != 0 {
            return;
        }
        for i in 0..m {
            self.cand[i] = self.hist[(self.head + i) % m];
        }
        let d = candidate_distance(&self.template, &self.params, &mut self.cand, &mut self.scratch);
        if d < self.params.threshold {
            let end = start + m as Millis * self.period;
            match &mut self.current {
                Some((_, e)) if start <= *e => *e = end,
                cur => {
                    if let Some(done) = cur.take() {
                        self.matches.push(done);
                    }
                    *cur = Some((start, end));
                }
            }
        }
    }

    pub fn finish(mut self) -> Vec<(Timestamp, Timestamp)> {
        if let Some(done) = self.current.take() {
            self.matches.push(done);
        }
        self.matches
    }
}

/// Matched intervals `[start, end)` over a sequence of windows of one stream.
pub fn scan_stream<'a, T: Scalar>(
    windows: impl IntoIterator<Item = &'a FWindow<T>>,
    template: &ShapeTemplate,
    params: &MatchParams,
) -> Result<Vec<(Timestamp, Timestamp)>> {
    let mut scanner: Option<ShapeScanner> = None;
    for w in windows {
        let s = match &mut scanner {
            Some(s) => s,
            None => scanner.insert(ShapeScanner::new(template, *params, w.descriptor().offset, w.period())?),
        };
        for e in w.iter() {
            s.push(e.sync, e.payload[0].widen());
        }
    }
    Ok(scanner.map(|s| s.finish()).unwrap_or_default())
}

/// Applies matched intervals to a window: `Drop` removes covered events,
/// `Keep` removes the others.
pub fn where_shape<T: Scalar>(window: &FWindow<T>, matches: &[(Timestamp, Timestamp)], mode: ShapeMode) -> FWindow<T> {
    let mut out = window.clone();
    for i in 0..out.capacity() {
        if !out.is_present(i) {
            continue;
        }
        let t = out.vsync(i);
        let covered = matches.iter().any(|&(s, e)| s <= t && t < e);
        if covered == (mode == ShapeMode::Drop) {
            out.remove(i);
        }
    }
    out
}
