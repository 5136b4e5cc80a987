use std::time::{Duration, Instant};

use cer_core::synth::{generate, GenSpec};
use cer_core::NullSink;
use clap::Args;
use serde::Serialize;

use crate::{EngineArgs, Failure, QueryInput};

/// Events between clock reads.
const CHUNK: usize = 256;

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    input: QueryInput,
    #[command(flatten)]
    engine: EngineArgs,
    /// Stop reading events after this many seconds.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    /// Give up if a chunk of 256 events takes longer than this many milliseconds.
    #[arg(long, default_value_t = 10_000)]
    stall_ms: u64,
    /// Without `--stream`, generate this many events instead.
    #[arg(long, default_value_t = 1_000_000)]
    events: usize,
    #[arg(long, default_value_t = 3)]
    types: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Status {
    /// Every event was processed.
    Complete,
    /// The duration ran out first.
    Cutoff,
    /// A chunk exceeded the stall cap.
    Stalled,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    events: u64,
    elapsed_secs: f64,
    throughput: f64,
    outputs: u64,
    peak_live_nodes: usize,
    det_states: usize,
    cache_hit_rate: f64,
    status: Status,
}

pub fn bench(args: BenchArgs) -> Result<(), Failure> {
    let (mut q, stream) = if args.input.stream.is_some() {
        args.input.load()?
    } else {
        let schema = args.input.schema()?;
        let q = args.input.query(schema.as_ref())?;
        let mut s = generate(&GenSpec {
            events: args.events,
            types: args.types,
            seed: args.seed,
            ..GenSpec::default()
        });
        for t in &mut s {
            q.stamp(t).map_err(|e| Failure::Input(e.to_string()))?;
        }
        (q, s)
    };
    args.engine.apply(&mut q);
    let mut p = q.runner(args.engine.config(&q));
    let budget = Duration::from_secs_f64(args.duration.max(0.0));
    let stall = Duration::from_millis(args.stall_ms);
    let start = Instant::now();
    let mut status = Status::Complete;
    let mut processed = 0u64;
    for chunk in stream.chunks(CHUNK) {
        let t0 = Instant::now();
        for t in chunk {
            p.dispatch(t, &mut NullSink)
                .map_err(|e| Failure::Input(e.to_string()))?;
        }
        processed += chunk.len() as u64;
        let now = Instant::now();
        if now - t0 > stall {
            status = Status::Stalled;
            break;
        }
        if now - start > budget {
            status = Status::Cutoff;
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let totals = p.engine_totals();
    let report = BenchReport {
        events: processed,
        elapsed_secs: elapsed,
        throughput: if elapsed > 0.0 { processed as f64 / elapsed } else { 0.0 },
        outputs: totals.outputs,
        peak_live_nodes: p.stats().peak_live_nodes,
        det_states: totals.det.det_states,
        cache_hit_rate: totals.det.hit_rate(),
        status,
    };
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}
