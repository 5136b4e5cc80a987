use std::collections::{BTreeMap, BTreeSet};

use cer_core::oracle::{brute_runs, by_trigger, within_filter, Diff, MAX_RUN_STREAM};
use cer_core::partition::{route, PartitionKey};
use cer_core::{ComplexEvent, DataTuple, Engine, EngineConfig, Position};
use clap::Args;

use crate::{EngineArgs, Failure, QueryInput};

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    input: QueryInput,
    #[command(flatten)]
    engine: EngineArgs,
    /// Refuse streams longer than this; the oracle is exponential.
    #[arg(long, default_value_t = MAX_RUN_STREAM)]
    max_len: usize,
    /// Corrupt the engine on purpose, to see the checker fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

pub fn check(args: CheckArgs) -> Result<(), Failure> {
    let (mut q, stream) = args.input.load()?;
    args.engine.apply(&mut q);
    if stream.len() > args.max_len {
        return Err(Failure::Input(format!(
            "stream has {} events; the oracle accepts at most {}",
            stream.len(),
            args.max_len
        )));
    }
    let cfg = EngineConfig {
        limit: None,
        ..args.engine.config(&q)
    };
    // The oracle knows nothing of partitions, so split the stream here.
    let mut groups: BTreeMap<Option<PartitionKey>, Vec<DataTuple>> = BTreeMap::new();
    for t in &stream {
        if q.partition_by.is_empty() {
            groups.entry(None).or_default().push(t.clone());
        } else if let Some(k) = route(&q.partition_by, t) {
            groups.entry(Some(k)).or_default().push(t.clone());
        }
    }
    let time_of = |p: Position| stream[p].time;
    let mut engine_out: Vec<ComplexEvent> = Vec::new();
    let mut oracle_out: BTreeSet<ComplexEvent> = BTreeSet::new();
    for sub in groups.values() {
        let mut e = Engine::new(&q.cea, cfg.clone());
        if args.inject_fault {
            e.inject_fault();
        }
        let mut out = Vec::new();
        for t in sub {
            e.process_event(t, &mut out)
                .map_err(|e| Failure::Input(e.to_string()))?;
        }
        engine_out.extend(out.into_iter().map(|(_, c)| c));
        // The oracle indexes its input by position, so renumber and map back.
        let local: Vec<DataTuple> = sub
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                t.position = i;
                t
            })
            .collect();
        let runs = brute_runs(&q.cea, &local, cfg.window).map_err(|e| Failure::Input(e.to_string()))?;
        for c in runs {
            let map = |p: Position| sub[p].position;
            oracle_out.insert(ComplexEvent::new(
                map(c.start),
                map(c.end),
                c.data.iter().map(|&p| map(p)).collect(),
            ));
        }
    }
    let oracle_out = within_filter(&oracle_out, cfg.window, time_of);
    let diff = Diff::compute(&engine_out, &oracle_out);
    let want = by_trigger(oracle_out.iter().cloned());
    if diff.is_empty() && by_trigger(engine_out.iter().cloned()) == want {
        println!(
            "ok: {} complex events at {} triggers agree",
            engine_out.len(),
            want.len()
        );
        Ok(())
    } else {
        print!("{diff}");
        println!(
            "mismatch: engine {} events, oracle {} events",
            engine_out.len(),
            oracle_out.len()
        );
        Err(Failure::Mismatch)
    }
}
