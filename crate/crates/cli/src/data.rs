//! Bench inputs: ingested CSV files or data generated in memory.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use pstream::gen::{self, GapModel, GenSpec, Waveform};
use pstream::{ingest_csv, IngestOptions, Millis, Source, SourceSpec};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WaveformArg {
    Uniform,
    Sine,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV, once per source (two for endtoend); generated when absent.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    /// Length of generated data.
    #[arg(long, default_value_t = 10.0)]
    pub minutes: f64,
    #[arg(long, value_enum, default_value_t = WaveformArg::Uniform)]
    pub waveform: WaveformArg,
    /// Standard deviation of the sine waveform's noise.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Probability of a short dropout at each generated slot.
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Fraction of time both generated endtoend streams have data.
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
    /// Blocks the generated availability pattern repeats over.
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
}

impl DataArgs {
    pub fn waveform(&self) -> Waveform {
        match self.waveform {
            WaveformArg::Uniform => Waveform::Uniform,
            WaveformArg::Sine => Waveform::Sine { noise: self.noise },
        }
    }

    pub fn duration_ms(&self) -> CliResult<Millis> {
        let ms = self.minutes * 60_000.0;
        if ms.is_nan() || ms < 1.0 {
            return Err(CliError::Usage(format!(
                "--minutes must be positive, got {}",
                self.minutes
            )));
        }
        Ok(ms.round() as Millis)
    }

    /// Inputs of one shard. Files are read as given; generated data uses
    /// `seed + shard` so shards differ. `events`, when set, sizes generated
    /// data to roughly that many input events.
    pub fn load(&self, specs: &[SourceSpec], seed: u64, shard: usize, events: Option<u64>) -> CliResult<Vec<Source>> {
        if !self.data.is_empty() {
            if self.data.len() != specs.len() {
                return Err(CliError::Usage(format!(
                    "this bench reads {} input file(s), {} given",
                    specs.len(),
                    self.data.len()
                )));
            }
            return specs
                .iter()
                .zip(&self.data)
                .map(|(s, p)| Ok(ingest_csv(p, s, &IngestOptions::default())?))
                .collect();
        }
        let seed = seed.wrapping_add(shard as u64);
        // Events per millisecond across all sources, given the coverage.
        let rate: f64 = if specs.len() == 2 {
            specs.iter().map(|s| 1.0 / s.descriptor.period as f64).sum::<f64>() * (1.0 + self.overlap) / 2.0
        } else {
            1.0 / specs[0].descriptor.period as f64
        };
        let duration = match events {
            Some(n) => (n as f64 / rate).ceil() as Millis,
            None => self.duration_ms()?,
        };
        if specs.len() == 2 {
            let hz = |s: &SourceSpec| 1000.0 / s.descriptor.period as f64;
            let ts = gen::two_stream(
                hz(&specs[0]),
                hz(&specs[1]),
                duration,
                self.blocks,
                self.overlap,
                seed,
                self.waveform(),
            )?;
            Ok(vec![ts.first, ts.second])
        } else {
            let spec = GenSpec {
                frequency_hz: 1000.0 / specs[0].descriptor.period as f64,
                duration_ms: duration,
                seed,
                waveform: self.waveform(),
                gaps: GapModel::None,
                dropout: self.dropout,
            };
            Ok(vec![gen::generate(&spec)?])
        }
    }
}
