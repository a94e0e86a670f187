//! `detect`: template-shaped regions of a stream.
//!
//! Matched intervals go to `--out` (default `<data stem>.matches.csv`); a JSON
//! metrics object goes to stdout, scored against ground truth when a truth
//! file is given or sits beside the data as `<stem>.truth.csv`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use pstream::gen;
use pstream::shape::ShapeScanner;
use pstream::{
    ingest_csv, CsvSink, Execution, IngestOptions, MatchParams, Query, ShapeMode, ShapeTemplate, SourceSpec,
    StreamDescriptor,
};

use crate::gen::sibling;
use crate::{CliError, CliResult, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectMode {
    /// Report matched intervals only.
    Report,
    /// Also write the stream restricted to matched intervals.
    Keep,
    /// Also write the stream with matched intervals removed.
    Drop,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Input CSV (`timestamp,value`).
    #[arg(long)]
    pub data: PathBuf,
    /// Template file, one value per line.
    #[arg(long)]
    pub template: PathBuf,
    /// Sample rate of the input.
    #[arg(long, default_value_t = 125.0)]
    pub hz: f64,
    /// Sakoe-Chiba band radius in slots [default: max(5, m/10)].
    #[arg(long)]
    pub band: Option<usize>,
    /// Slots between candidate starts [default: m/4].
    #[arg(long)]
    pub hop: Option<usize>,
    /// Match when the normalized cDTW distance is below this.
    #[arg(long)]
    pub threshold: f64,
    /// Compare raw values instead of z-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, value_enum, default_value_t = DetectMode::Report)]
    pub mode: DetectMode,
    /// Ground-truth intervals (`start,end`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Filtered stream of keep/drop [default: `<data stem>.filtered.csv`].
    #[arg(long)]
    pub filtered_out: Option<PathBuf>,
}

pub fn run(args: &DetectArgs, common: &Common) -> CliResult {
    let template = ShapeTemplate::from_file(&args.template)?;
    let m = template.len();
    let defaults = MatchParams::new(m, args.threshold);
    let params = MatchParams {
        band_radius: args.band.unwrap_or(defaults.band_radius),
        hop: args.hop.unwrap_or(defaults.hop),
        normalize: !args.no_normalize,
        ..defaults
    };
    params.validate(m)?;
    let desc = StreamDescriptor::from_hz(0, args.hz).map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = SourceSpec::new("signal", desc);
    let data = ingest_csv(&args.data, &spec, &IngestOptions::default())?;

    let mut scanner = ShapeScanner::new(&template, params, desc.offset, desc.period)?;
    for e in data.events() {
        scanner.push(e.sync, e.payload[0] as f64);
    }
    let matches = scanner.finish();

    let out = common
        .out
        .clone()
        .unwrap_or_else(|| sibling(&args.data, ".matches.csv"));
    gen::write_intervals(&out, &matches)?;

    let mut filtered = None;
    if args.mode != DetectMode::Report {
        let path = args
            .filtered_out
            .clone()
            .unwrap_or_else(|| sibling(&args.data, ".filtered.csv"));
        let mode = if args.mode == DetectMode::Keep {
            ShapeMode::Keep
        } else {
            ShapeMode::Drop
        };
        let mut q = Query::new();
        let s = q.source(spec.clone());
        let f = q.where_shape(s, &template, params, mode);
        let plan = q.compile(f)?;
        let sources = [data.clone()];
        let mut exec = Execution::new(&plan, &sources)?;
        let mut sink = CsvSink::new(BufWriter::new(File::create(&path)?), plan.sink_props().width);
        let engine = common.engine.engines()[0];
        let stats = exec.run(engine, &mut sink)?;
        sink.into_inner().flush()?;
        filtered = Some(json!({ "path": path, "eventsOut": stats.events_out }));
    }

    let stream_ms = data.extent().map_or(0, |(a, b)| b - a);
    let truth_path = args.truth.clone().or_else(|| {
        let p = sibling(&args.data, ".truth.csv");
        p.exists().then_some(p)
    });
    let score = match &truth_path {
        Some(p) => Some(gen::score(&matches, &gen::read_intervals(p)?, stream_ms)),
        None => None,
    };
    let report = json!({
        "events": data.len(),
        "templateLength": m,
        "bandRadius": params.band_radius,
        "hop": params.hop,
        "threshold": params.threshold,
        "normalize": params.normalize,
        "matches": matches.len(),
        "matchedMs": matches.iter().map(|(a, b)| b - a).sum::<i64>(),
        "intervals": out,
        "filtered": filtered,
        "score": score,
    });
    println!("{report}");
    Ok(())
}
