use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use cer_core::partition::run_parallel;
use cer_core::{ComplexEvent, Position};
use clap::Args;

use crate::output::write_record;
use crate::{EngineArgs, Failure, QueryInput};

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    input: QueryInput,
    #[command(flatten)]
    engine: EngineArgs,
    /// Write records here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print engine counters as JSON on stderr.
    #[arg(long)]
    stats: bool,
    /// Worker threads for partitioned queries.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

pub fn run(args: RunArgs) -> Result<(), Failure> {
    let (mut q, stream) = args.input.load()?;
    args.engine.apply(&mut q);
    let cfg = args.engine.config(&q);
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let engine_err = |e: cer_core::EngineError| Failure::Input(e.to_string());

    if args.workers > 1 && !q.partition_by.is_empty() {
        let events = run_parallel(&q.cea, &q.partition_by, cfg, &stream, args.workers).map_err(engine_err)?;
        for (_, c) in &events {
            write_record(&mut out, c, &stream)?;
        }
        out.flush()?;
        if args.stats {
            let stats = serde_json::json!({ "events": stream.len(), "outputs": events.len(), "workers": args.workers });
            eprintln!("{stats}");
        }
        return Ok(());
    }

    let mut p = q.runner(cfg);
    let mut io_err = None;
    let mut sink = |_: Position, c: ComplexEvent| {
        if io_err.is_none() {
            if let Err(e) = write_record(&mut out, &c, &stream) {
                io_err = Some(e);
            }
        }
    };
    for t in &stream {
        p.dispatch(t, &mut sink).map_err(engine_err)?;
    }
    if let Some(e) = io_err {
        return Err(e.into());
    }
    out.flush()?;
    if args.stats {
        let s = p.engine_totals();
        let ps = p.stats();
        let stats = serde_json::json!({
            "events": s.events,
            "outputs": s.outputs,
            "capped_triggers": s.capped_triggers,
            "engines": p.engine_count(),
            "live_nodes": ps.live_nodes,
            "peak_live_nodes": ps.peak_live_nodes,
            "det_states": s.det.det_states,
            "cache_hit_rate": s.det.hit_rate(),
            "max_enumeration_gap": s.enumeration.max_gap,
        });
        eprintln!("{stats}");
    }
    Ok(())
}
