//! `gen`: synthetic datasets written as CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};

use pstream::gen::{self, GapModel, GenSpec};
use pstream::Millis;

use crate::data::WaveformArg;
use crate::{CliError, CliResult, Common};

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Subcommand, Debug)]
pub enum GenKind {
    /// One stream; `--out` is the CSV path.
    Single(SingleArgs),
    /// Two streams with a known availability overlap; `--out` is a directory
    /// receiving ecg.csv, abp.csv and overlap.csv.
    TwoStream(TwoStreamArgs),
    /// A pressure stream with injected line-zero artifacts; `--out` is the CSV
    /// path, with `<stem>.truth.csv` and `<stem>.template.txt` beside it.
    LineZero(LineZeroArgs),
}

#[derive(Args, Debug)]
pub struct SingleArgs {
    #[arg(long, default_value_t = 1000.0)]
    pub hz: f64,
    #[arg(long, default_value_t = 10.0)]
    pub minutes: f64,
    #[arg(long, value_enum, default_value_t = WaveformArg::Uniform)]
    pub waveform: WaveformArg,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Split into this many blocks, each with one present run.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Fraction of each block the present run covers.
    #[arg(long, default_value_t = 0.5)]
    pub coverage: f64,
}

#[derive(Args, Debug)]
pub struct TwoStreamArgs {
    #[arg(long, default_value_t = 500.0)]
    pub first_hz: f64,
    #[arg(long, default_value_t = 125.0)]
    pub second_hz: f64,
    #[arg(long, default_value_t = 10.0)]
    pub minutes: f64,
    /// Fraction of time both streams have data.
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, value_enum, default_value_t = WaveformArg::Sine)]
    pub waveform: WaveformArg,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
}

#[derive(Args, Debug)]
pub struct LineZeroArgs {
    #[arg(long, default_value_t = 125.0)]
    pub hz: f64,
    #[arg(long, default_value_t = 10.0)]
    pub minutes: f64,
    /// Number of injected artifacts.
    #[arg(long, default_value_t = 49)]
    pub count: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
}

fn minutes_ms(minutes: f64) -> CliResult<Millis> {
    let ms = minutes * 60_000.0;
    if ms.is_nan() || ms < 1.0 {
        return Err(CliError::Usage(format!("--minutes must be positive, got {minutes}")));
    }
    Ok(ms.round() as Millis)
}

fn waveform(w: WaveformArg, noise: f64) -> gen::Waveform {
    match w {
        WaveformArg::Uniform => gen::Waveform::Uniform,
        WaveformArg::Sine => gen::Waveform::Sine { noise },
    }
}

fn out_path(common: &Common) -> CliResult<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("gen needs --out".into()))
}

/// `<dir>/<stem><suffix>` for a data path.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(args: &GenArgs, common: &Common) -> CliResult {
    let out = out_path(common)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match &args.kind {
        GenKind::Single(a) => {
            let spec = GenSpec {
                frequency_hz: a.hz,
                duration_ms: minutes_ms(a.minutes)?,
                seed: common.seed,
                waveform: waveform(a.waveform, a.noise),
                gaps: match a.segments {
                    Some(count) => GapModel::Segments {
                        coverage: a.coverage,
                        count,
                    },
                    None => GapModel::None,
                },
                dropout: a.dropout,
            };
            gen::write_csv(out, &gen::generate(&spec)?)?;
        }
        GenKind::TwoStream(a) => {
            let ts = gen::two_stream(
                a.first_hz,
                a.second_hz,
                minutes_ms(a.minutes)?,
                a.blocks,
                a.overlap,
                common.seed,
                waveform(a.waveform, a.noise),
            )?;
            std::fs::create_dir_all(out)?;
            gen::write_csv(out.join("ecg.csv"), &ts.first)?;
            gen::write_csv(out.join("abp.csv"), &ts.second)?;
            gen::write_intervals(out.join("overlap.csv"), &ts.overlap)?;
        }
        GenKind::LineZero(a) => {
            let lz = gen::line_zero(a.hz, minutes_ms(a.minutes)?, a.count, a.noise, common.seed)?;
            gen::write_csv(out, &lz.data)?;
            gen::write_intervals(sibling(out, ".truth.csv"), &lz.truth)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(sibling(out, ".template.txt"))?);
            for v in lz.template.values() {
                writeln!(w, "{v}")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
