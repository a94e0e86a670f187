//! Built-in queries shared by `bench` and `plan`.

use clap::{Args, ValueEnum};

use pstream::toolkit::{self, Fill, ToolkitParams};
use pstream::{Millis, Query, SourceSpec, StreamDescriptor, StreamId};

use crate::{CliError, CliResult, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchName {
    Normalize,
    Passfilter,
    Fillconst,
    Fillmean,
    Resample,
    Endtoend,
}

impl BenchName {
    pub fn label(self) -> &'static str {
        match self {
            BenchName::Normalize => "normalize",
            BenchName::Passfilter => "passfilter",
            BenchName::Fillconst => "fillconst",
            BenchName::Fillmean => "fillmean",
            BenchName::Resample => "resample",
            BenchName::Endtoend => "endtoend",
        }
    }

    pub fn two_stream(self) -> bool {
        self == BenchName::Endtoend
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FillArg {
    Const,
    Mean,
}

/// Operation parameters.
#[derive(Args, Debug, Clone)]
pub struct OpArgs {
    /// Sample rate of single-stream inputs.
    #[arg(long, default_value_t = 1000.0)]
    pub hz: f64,
    /// Longest gap the fills close [default: the window].
    #[arg(long)]
    pub gap_limit_ms: Option<Millis>,
    /// Gap imputation of the end-to-end pipeline.
    #[arg(long, value_enum, default_value_t = FillArg::Const)]
    pub fill: FillArg,
    /// Output period of resample and of the end-to-end pipeline's second stream.
    #[arg(long, default_value_t = 2)]
    pub target_period_ms: Millis,
    /// Number of FIR taps.
    #[arg(long, default_value_t = 31)]
    pub taps: usize,
    /// Low-pass cutoff of the FIR filter.
    #[arg(long, default_value_t = 40.0)]
    pub cutoff_hz: f64,
}

impl OpArgs {
    pub fn params(&self, name: BenchName, common: &Common) -> CliResult<ToolkitParams> {
        Ok(ToolkitParams {
            window: common.window_ms,
            gap_limit: self.gap_limit_ms.unwrap_or(common.window_ms),
            fill: match self.fill {
                FillArg::Const => Fill::Const,
                FillArg::Mean => Fill::Mean,
            },
            fill_value: 0.0,
            target_period: self.target_period_ms,
            taps: if name == BenchName::Passfilter {
                toolkit::lowpass(self.cutoff_hz, self.taps, self.hz)?
            } else {
                Vec::new()
            },
        })
    }

    pub fn single_spec(&self) -> CliResult<SourceSpec> {
        let d = StreamDescriptor::from_hz(0, self.hz).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(SourceSpec::new("signal", d))
    }

    /// Sources the bench reads, in declaration order.
    pub fn specs(&self, name: BenchName) -> CliResult<Vec<SourceSpec>> {
        if name.two_stream() {
            let (ecg, abp) = toolkit::ecg_abp_specs();
            Ok(vec![ecg, abp])
        } else {
            Ok(vec![self.single_spec()?])
        }
    }
}

pub fn build(name: BenchName, specs: &[SourceSpec], p: &ToolkitParams) -> CliResult<(Query, StreamId)> {
    let mut q = Query::new();
    let sources: Vec<StreamId> = specs.iter().map(|s| q.source(s.clone())).collect();
    let s = sources[0];
    let out = match name {
        BenchName::Normalize => toolkit::normalize(&mut q, s, p.window)?,
        BenchName::Passfilter => toolkit::pass_filter(&mut q, s, &p.taps)?,
        BenchName::Fillconst => toolkit::fill_const(&mut q, s, p.gap_limit, p.fill_value)?,
        BenchName::Fillmean => toolkit::fill_mean(&mut q, s, p.gap_limit)?,
        BenchName::Resample => toolkit::resample(&mut q, s, p.target_period)?,
        BenchName::Endtoend => toolkit::end_to_end(&mut q, s, sources[1], p)?,
    };
    Ok((q, out))
}
