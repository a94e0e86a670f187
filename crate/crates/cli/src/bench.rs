//! `bench`: timed runs of a toolkit operation or the end-to-end pipeline.
//!
//! Each shard owns its data, plan and execution on its own thread; shards
//! start every trial together and share nothing. One JSON object is written
//! per trial, then a summary per engine, then a comparison when both engines
//! ran.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Barrier;

use clap::Args;
use serde_json::{json, Value};

use pstream::{ChecksumSink, CsvSink, Engine, EventRef, Execution, ExecutionStats, Sample, Sink};

use crate::data::DataArgs;
use crate::queries::{build, BenchName, OpArgs};
use crate::{output, CliError, CliResult, Common};

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub name: BenchName,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub op: OpArgs,
    /// Write the first shard's sink stream of the first trial as CSV.
    #[arg(long)]
    pub sink_out: Option<PathBuf>,
    /// Dataset-size sweep: approximate input event counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<u64>,
}

struct Tee<'a> {
    sum: ChecksumSink,
    csv: Option<&'a mut CsvSink<BufWriter<File>>>,
}

impl Sink<Sample> for Tee<'_> {
    fn accept(&mut self, e: EventRef<'_, Sample>) -> pstream::Result<()> {
        self.sum.accept(e)?;
        if let Some(c) = self.csv.as_deref_mut() {
            c.accept(e)?;
        }
        Ok(())
    }

    fn finish(&mut self) -> pstream::Result<()> {
        if let Some(c) = self.csv.as_deref_mut() {
            Sink::<Sample>::finish(c)?;
        }
        Ok(())
    }
}

struct ShardRun {
    stats: ExecutionStats,
    checksum: String,
}

fn engine_name(e: Engine) -> &'static str {
    match e {
        Engine::Eager => "eager",
        Engine::Targeted => "targeted",
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs `trials` trials on every shard; returns `runs[trial][shard]`.
fn run_shards(
    args: &BenchArgs,
    common: &Common,
    engine: Engine,
    size: Option<u64>,
    sink_out: Option<&PathBuf>,
) -> CliResult<Vec<Vec<ShardRun>>> {
    let specs = args.op.specs(args.name)?;
    let params = args.op.params(args.name, common)?;
    let shards = common.parallel.max(1);
    let barrier = Barrier::new(shards);
    let results: Vec<CliResult<Vec<ShardRun>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..shards)
            .map(|shard| {
                let (specs, params, barrier) = (&specs, &params, &barrier);
                scope.spawn(move || -> CliResult<Vec<ShardRun>> {
                    let prepared = (|| {
                        let sources = args.data.load(specs, common.seed, shard, size)?;
                        let (q, out) = build(args.name, specs, params)?;
                        let plan = q.compile(out)?;
                        Ok::<_, CliError>((sources, plan))
                    })();
                    let mut runs = Vec::with_capacity(common.trials);
                    let (sources, plan) = match prepared {
                        Ok(p) => p,
                        Err(e) => {
                            // Keep the other shards from waiting forever.
                            for _ in 0..common.trials {
                                barrier.wait();
                            }
                            return Err(e);
                        }
                    };
                    let mut exec = Execution::new(&plan, &sources)?;
                    let width = plan.sink_props().width;
                    for trial in 0..common.trials {
                        let mut csv = match (shard, trial, sink_out) {
                            (0, 0, Some(p)) => Some(CsvSink::new(BufWriter::new(File::create(p)?), width)),
                            _ => None,
                        };
                        let mut sink = Tee {
                            sum: ChecksumSink::new(),
                            csv: csv.as_mut(),
                        };
                        barrier.wait();
                        let stats = exec.run(engine, &mut sink)?;
                        runs.push(ShardRun {
                            stats,
                            checksum: sink.sum.hex(),
                        });
                    }
                    Ok(runs)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::Usage("bench shard panicked".into())))
            })
            .collect()
    });
    let per_shard = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let mut per_trial: Vec<Vec<ShardRun>> = (0..common.trials).map(|_| Vec::new()).collect();
    for shard in per_shard {
        for (t, r) in shard.into_iter().enumerate() {
            per_trial[t].push(r);
        }
    }
    Ok(per_trial)
}

struct Trial {
    record: Value,
    wall_ms: f64,
    throughput: f64,
    checksum: String,
}

fn trial_record(args: &BenchArgs, engine: Engine, trial: usize, size: Option<u64>, runs: &[ShardRun]) -> Trial {
    let sum = |f: fn(&ExecutionStats) -> u64| runs.iter().map(|r| f(&r.stats)).sum::<u64>();
    let events = sum(|s| s.events_in);
    let wall_ms = runs.iter().map(|r| r.stats.wall_ms).fold(0.0, f64::max);
    let throughput = if wall_ms > 0.0 {
        events as f64 / (wall_ms / 1e3)
    } else {
        0.0
    };
    let allocs = runs
        .iter()
        .map(|r| r.stats.steady_state_allocations)
        .try_fold(0u64, |acc, a| a.map(|a| acc.max(a)));
    let checksum = runs.iter().map(|r| r.checksum.as_str()).collect::<Vec<_>>().join(",");
    let record = json!({
        "bench": args.name.label(),
        "engine": engine_name(engine),
        "trial": trial,
        "size": size,
        "shards": runs.len(),
        "events": events,
        "eventsOut": sum(|s| s.events_out),
        "wallMs": wall_ms,
        "throughputEventsPerSec": throughput,
        "windowsProcessed": sum(|s| s.windows_processed),
        "windowsSkipped": sum(|s| s.windows_skipped),
        "totalWindows": sum(|s| s.total_windows()),
        "steadyStateAllocations": allocs,
        "outputChecksum": checksum,
    });
    Trial {
        record,
        wall_ms,
        throughput,
        checksum,
    }
}

pub fn run(args: &BenchArgs, common: &Common) -> CliResult {
    if common.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if args.sizes.contains(&0) {
        return Err(CliError::Usage("--sizes entries must be positive".into()));
    }
    let mut out = output(common)?;
    let sizes: Vec<Option<u64>> = if args.sizes.is_empty() {
        vec![None]
    } else {
        args.sizes.iter().map(|&s| Some(s)).collect()
    };
    for size in sizes {
        let mut summaries: Vec<(Engine, f64, String)> = Vec::new();
        for (k, engine) in common.engine.engines().into_iter().enumerate() {
            let sink_out = if k == 0 { args.sink_out.as_ref() } else { None };
            let runs = run_shards(args, common, engine, size, sink_out)?;
            let trials: Vec<Trial> = runs
                .iter()
                .enumerate()
                .map(|(t, r)| trial_record(args, engine, t, size, r))
                .collect();
            for t in &trials {
                writeln!(out, "{}", t.record)?;
            }
            let (wall_mean, wall_std) = mean_std(&trials.iter().map(|t| t.wall_ms).collect::<Vec<_>>());
            let (tp_mean, tp_std) = mean_std(&trials.iter().map(|t| t.throughput).collect::<Vec<_>>());
            let first = &trials[0].record;
            let stable = trials.iter().all(|t| t.checksum == trials[0].checksum);
            let summary = json!({
                "bench": args.name.label(),
                "engine": engine_name(engine),
                "summary": true,
                "size": size,
                "trials": trials.len(),
                "shards": first["shards"],
                "events": first["events"],
                "eventsOut": first["eventsOut"],
                "wallMsMean": wall_mean,
                "wallMsStd": wall_std,
                "throughputEventsPerSecMean": tp_mean,
                "throughputEventsPerSecStd": tp_std,
                "windowsProcessed": first["windowsProcessed"],
                "windowsSkipped": first["windowsSkipped"],
                "totalWindows": first["totalWindows"],
                "steadyStateAllocations": trials.iter().map(|t| t.record["steadyStateAllocations"].as_u64()).max().flatten(),
                "outputChecksum": trials[0].checksum,
                "checksumStable": stable,
            });
            writeln!(out, "{summary}")?;
            summaries.push((engine, wall_mean, trials[0].checksum.clone()));
        }
        if let [(_, eager, ce), (_, targeted, ct)] = summaries.as_slice() {
            let cmp = json!({
                "bench": args.name.label(),
                "comparison": true,
                "size": size,
                "speedup": if *targeted > 0.0 { eager / targeted } else { 0.0 },
                "checksumsEqual": ce == ct,
            });
            writeln!(out, "{cmp}")?;
        }
    }
    out.flush()?;
    Ok(())
}
