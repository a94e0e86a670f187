//! `plan`: trace log and memory plan of a built-in query.

use std::io::Write;

use clap::{Args, ValueEnum};

use pstream::toolkit::listing1;
use pstream::Query;

use crate::queries::{build, BenchName, OpArgs};
use crate::{output, CliResult, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanQuery {
    /// 500 Hz signal minus its 100 ms mean, joined with a 200 Hz signal.
    Listing1,
    /// A bare source.
    Identity,
    Normalize,
    Passfilter,
    Fillconst,
    Fillmean,
    Resample,
    Endtoend,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(value_enum)]
    pub query: PlanQuery,
    #[command(flatten)]
    pub op: OpArgs,
}

fn bench_name(q: PlanQuery) -> Option<BenchName> {
    Some(match q {
        PlanQuery::Normalize => BenchName::Normalize,
        PlanQuery::Passfilter => BenchName::Passfilter,
        PlanQuery::Fillconst => BenchName::Fillconst,
        PlanQuery::Fillmean => BenchName::Fillmean,
        PlanQuery::Resample => BenchName::Resample,
        PlanQuery::Endtoend => BenchName::Endtoend,
        PlanQuery::Listing1 | PlanQuery::Identity => return None,
    })
}

pub fn run(args: &PlanArgs, common: &Common) -> CliResult {
    let (q, out) = match (args.query, bench_name(args.query)) {
        (_, Some(name)) => {
            let specs = args.op.specs(name)?;
            build(name, &specs, &args.op.params(name, common)?)?
        }
        (PlanQuery::Listing1, None) => listing1()?,
        _ => {
            let mut q = Query::new();
            let s = q.source(args.op.single_spec()?);
            (q, s)
        }
    };
    let plan = q.compile(out)?;
    let mut w = output(common)?;
    writeln!(w, "trace sweeps={}", plan.trace.sweeps)?;
    for line in &plan.trace.lines {
        writeln!(w, "  {line}")?;
    }
    for warning in &plan.warnings {
        writeln!(w, "warning {warning}")?;
    }
    write!(w, "{}", plan.dump())?;
    w.flush()?;
    Ok(())
}
