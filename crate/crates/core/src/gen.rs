//! Deterministic synthetic waveforms.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::SourceData;
use crate::model::{Millis, StreamDescriptor, Timestamp};
use crate::shape::ShapeTemplate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    /// Values drawn uniformly from `[0, 1000)`.
    Uniform,
    /// Pressure-like oscillation between 80 and 120 plus Gaussian noise.
    Sine { noise: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapModel {
    None,
    /// `count` equal blocks, each with one present run covering `coverage` of it.
    Segments {
        coverage: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub frequency_hz: f64,
    pub duration_ms: Millis,
    pub seed: u64,
    pub waveform: Waveform,
    pub gaps: GapModel,
    /// Probability that a short run of 1 to 4 samples is dropped at a slot.
    pub dropout: f64,
}

impl GenSpec {
    pub fn new(frequency_hz: f64, duration_ms: Millis, seed: u64) -> Self {
        GenSpec {
            frequency_hz,
            duration_ms,
            seed,
            waveform: Waveform::Uniform,
            gaps: GapModel::None,
            dropout: 0.0,
        }
    }

    pub fn descriptor(&self) -> Result<StreamDescriptor> {
        StreamDescriptor::from_hz(0, self.frequency_hz)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    waveform: Waveform,
    noise: Option<Normal<f64>>,
}

impl Sampler {
    fn new(seed: u64, waveform: Waveform) -> Result<Self> {
        let noise = match waveform {
            Waveform::Sine { noise } if noise > 0.0 => {
                Some(Normal::new(0.0, noise).map_err(|e| Error::param(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            waveform,
            noise,
        })
    }

    fn value(&mut self, t: Timestamp) -> f32 {
        match self.waveform {
            Waveform::Uniform => self.rng.gen_range(0.0f32..1000.0),
            Waveform::Sine { .. } => {
                let base = 100.0 + 20.0 * (2.0 * PI * 1.2 * t as f64 / 1000.0).sin();
                let n = self.noise.map_or(0.0, |d| d.sample(&mut self.rng));
                (base + n) as f32
            }
        }
    }
}

/// Present runs of a stream, as `[start, end)` in time.
fn runs(spec: &GenSpec, period: Millis, rng: &mut ChaCha8Rng) -> Vec<(Timestamp, Timestamp)> {
    match spec.gaps {
        GapModel::None => vec![(0, spec.duration_ms)],
        GapModel::Segments { coverage, count } => {
            let count = count.max(1) as i64;
            let block = spec.duration_ms / count;
            let len = ((block as f64 * coverage) as i64 / period) * period;
            (0..count)
                .map(|b| {
                    let slack = (block - len) / period;
                    let shift = if slack > 0 {
                        rng.gen_range(0..=slack) * period
                    } else {
                        0
                    };
                    let s = b * block - (b * block).rem_euclid(period) + shift;
                    (s, s + len)
                })
                .collect()
        }
    }
}

fn fill(
    data: &mut Vec<(Timestamp, f32)>,
    runs: &[(Timestamp, Timestamp)],
    period: Millis,
    dropout: f64,
    sampler: &mut Sampler,
) {
    for &(s, e) in runs {
        let mut t = s;
        while t < e {
            if dropout > 0.0 && sampler.rng.gen_bool(dropout) {
                t += sampler.rng.gen_range(1..=4) * period;
                continue;
            }
            let v = sampler.value(t);
            data.push((t, v));
            t += period;
        }
    }
}

pub fn generate(spec: &GenSpec) -> Result<SourceData<f32>> {
    let desc = spec.descriptor()?;
    let mut sampler = Sampler::new(spec.seed, spec.waveform)?;
    let runs = runs(spec, desc.period, &mut sampler.rng);
    let mut samples = Vec::with_capacity((spec.duration_ms / desc.period) as usize);
    fill(&mut samples, &runs, desc.period, spec.dropout, &mut sampler);
    SourceData::from_samples(desc, &samples)
}

/// Two streams whose availability overlaps on a known fraction of time.
#[derive(Debug, Clone)]
pub struct TwoStream {
    pub first: SourceData<f32>,
    pub second: SourceData<f32>,
    /// Time ranges where both streams have data.
    pub overlap: Vec<(Timestamp, Timestamp)>,
}

/// Splits `[0, duration)` into `blocks` blocks. In each block the first
/// stream covers the leading `(1 + f) / 2` and the second the trailing
/// `(1 + f) / 2`, so they overlap on a fraction `f` of every block.
pub fn two_stream(
    first_hz: f64,
    second_hz: f64,
    duration_ms: Millis,
    blocks: usize,
    overlap: f64,
    seed: u64,
    waveform: Waveform,
) -> Result<TwoStream> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::param(format!("overlap fraction {overlap} is outside [0, 1]")));
    }
    let d1 = StreamDescriptor::from_hz(0, first_hz)?;
    let d2 = StreamDescriptor::from_hz(0, second_hz)?;
    let grid = d1.period.lcm(&d2.period);
    let blocks = blocks.max(1) as i64;
    let block = (duration_ms / blocks / grid) * grid;
    if block == 0 {
        return Err(Error::param("duration too short for the requested block count"));
    }
    let cover = ((block as f64 * (1.0 + overlap) / 2.0 / grid as f64).round() as i64 * grid).min(block);
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    let mut both = Vec::new();
    for b in 0..blocks {
        let s = b * block;
        r1.push((s, s + cover));
        r2.push((s + block - cover, s + block));
        if 2 * cover > block {
            both.push((s + block - cover, s + cover));
        }
    }
    let mut s1 = Sampler::new(seed, waveform)?;
    let mut s2 = Sampler::new(seed.wrapping_add(0x9e37_79b9), waveform)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    fill(&mut a, &r1, d1.period, 0.0, &mut s1);
    fill(&mut b, &r2, d2.period, 0.0, &mut s2);
    Ok(TwoStream {
        first: SourceData::from_samples(d1, &a)?,
        second: SourceData::from_samples(d2, &b)?,
        overlap: both,
    })
}

/// Shape of a pressure line being zeroed against atmosphere: a short rise,
/// a fast drop to zero and a flat tail.
pub fn line_zero_template() -> ShapeTemplate {
    let mut v = vec![100.0, 101.0, 102.0, 80.0, 60.0, 40.0, 20.0, 5.0, 2.0, 1.0];
    v.resize(24, 0.0);
    ShapeTemplate::new(v).expect("valid template")
}

/// A noisy pressure waveform with `count` injected line-zero artifacts.
#[derive(Debug, Clone)]
pub struct LineZero {
    pub data: SourceData<f32>,
    /// Injected artifact intervals.
    pub truth: Vec<(Timestamp, Timestamp)>,
    pub template: ShapeTemplate,
}

pub fn line_zero(frequency_hz: f64, duration_ms: Millis, count: usize, noise: f64, seed: u64) -> Result<LineZero> {
    let desc = StreamDescriptor::from_hz(0, frequency_hz)?;
    let p = desc.period;
    let template = line_zero_template();
    let m = template.len() as i64;
    let n = duration_ms / p;
    let stride = n / (count as i64 + 1);
    if count > 0 && stride < 2 * m {
        return Err(Error::param("stream too short for the requested number of artifacts"));
    }
    let mut sampler = Sampler::new(seed, Waveform::Sine { noise })?;
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::param(e.to_string()))?;
    let mut values: Vec<(Timestamp, f32)> = (0..n).map(|i| (i * p, sampler.value(i * p))).collect();
    let mut truth = Vec::with_capacity(count);
    for k in 1..=count as i64 {
        let jitter = sampler.rng.gen_range(0..m);
        let start = k * stride + jitter;
        for (i, &v) in template.values().iter().enumerate() {
            let e = if noise > 0.0 {
                normal.sample(&mut sampler.rng)
            } else {
                0.0
            };
            values[(start + i as i64) as usize].1 = (v + e) as f32;
        }
        truth.push((start * p, (start + m) * p));
    }
    Ok(LineZero {
        data: SourceData::from_samples(desc, &values)?,
        truth,
        template,
    })
}

/// Detection quality against injected ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionScore {
    pub truth: usize,
    /// Truth intervals overlapped by at least one match.
    pub detected: usize,
    pub recall: f64,
    pub matched_ms: Millis,
    /// Matched time outside every truth interval.
    pub false_positive_ms: Millis,
    /// `false_positive_ms` over the stream length.
    pub false_positive_fraction: f64,
}

/// Scores matches against disjoint truth intervals over a stream of `stream_ms`.
pub fn score(
    matches: &[(Timestamp, Timestamp)],
    truth: &[(Timestamp, Timestamp)],
    stream_ms: Millis,
) -> DetectionScore {
    let overlap = |(a, b): (Timestamp, Timestamp), (c, d): (Timestamp, Timestamp)| (b.min(d) - a.max(c)).max(0);
    let detected = truth
        .iter()
        .filter(|&&t| matches.iter().any(|&m| overlap(m, t) > 0))
        .count();
    let matched_ms: Millis = matches.iter().map(|(a, b)| b - a).sum();
    let inside: Millis = matches
        .iter()
        .map(|&m| truth.iter().map(|&t| overlap(m, t)).sum::<Millis>())
        .sum();
    let false_positive_ms = matched_ms - inside;
    DetectionScore {
        truth: truth.len(),
        detected,
        recall: if truth.is_empty() {
            1.0
        } else {
            detected as f64 / truth.len() as f64
        },
        matched_ms,
        false_positive_ms,
        false_positive_fraction: if stream_ms > 0 {
            false_positive_ms as f64 / stream_ms as f64
        } else {
            0.0
        },
    }
}

/// Writes `timestamp,value` rows; byte-identical for identical data.
pub fn write_csv(path: impl AsRef<Path>, data: &SourceData<f32>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "timestamp,value")?;
    let mut line = String::new();
    for e in data.events() {
        line.clear();
        let _ = write!(line, "{}", e.sync);
        for v in e.payload {
            let _ = write!(line, ",{v}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_intervals(path: impl AsRef<Path>, intervals: &[(Timestamp, Timestamp)]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "start,end")?;
    for (s, e) in intervals {
        writeln!(w, "{s},{e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_intervals(path: impl AsRef<Path>) -> Result<Vec<(Timestamp, Timestamp)>> {
    let path = path.as_ref();
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("start")) {
            continue;
        }
        let bad = || Error::Ingest {
            path: path.display().to_string(),
            line: i as u64 + 1,
            message: format!("expected start,end but found {line:?}"),
        };
        let (s, e) = line.split_once(',').ok_or_else(bad)?;
        out.push((
            s.trim().parse().map_err(|_| bad())?,
            e.trim().parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}
