use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use cer_core::synth::{generate, schema_text, sequence_query, to_csv, GenSpec, ValueDist};
use clap::{Args, ValueEnum};

use crate::Failure;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dist {
    Uniform,
    Skewed,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    events: usize,
    /// Number of event types, named A0, A1, ...
    #[arg(long, default_value_t = 3)]
    types: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    values: Dist,
    /// Values of `v` fall in `0..max-value`.
    #[arg(long, default_value_t = 100)]
    max_value: i64,
    /// Distinct partition keys in column `k`; 0 omits the column.
    #[arg(long, default_value_t = 0)]
    keys: usize,
    /// Chance per step of planting A0, A1, ... back to back.
    #[arg(long, default_value_t = 0.0)]
    plant_rate: f64,
    /// Length of a planted occurrence, and of the query from `--query-out`.
    #[arg(long, default_value_t = 3)]
    plant_len: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write a matching schema.
    #[arg(long)]
    schema_out: Option<PathBuf>,
    /// Also write a sequence query over the planted types.
    #[arg(long)]
    query_out: Option<PathBuf>,
    /// Window of the written query, in events.
    #[arg(long, default_value_t = 1000)]
    window: u64,
    /// End the written query with a type that never occurs, so it never fires.
    #[arg(long)]
    never: bool,
}

pub fn gen(args: GenArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.plant_rate) {
        return Err(Failure::Input("--plant-rate must be in [0, 1]".into()));
    }
    let spec = GenSpec {
        events: args.events,
        types: args.types,
        values: match args.values {
            Dist::Uniform => ValueDist::Uniform { max: args.max_value },
            Dist::Skewed => ValueDist::Skewed { max: args.max_value },
        },
        keys: args.keys,
        plant_rate: args.plant_rate,
        plant_len: args.plant_len,
        seed: args.seed,
    };
    let csv = to_csv(&generate(&spec), args.keys > 0);
    match &args.output {
        Some(p) => fs::write(p, csv)?,
        None => io::stdout().lock().write_all(csv.as_bytes())?,
    }
    if let Some(p) = &args.schema_out {
        fs::write(p, schema_text(args.types.max(args.plant_len), args.keys > 0))?;
    }
    if let Some(p) = &args.query_out {
        fs::write(p, sequence_query(args.plant_len, args.window, args.never) + "\n")?;
    }
    Ok(())
}
