//! `cer`: run, check, generate and benchmark complex event queries.

mod bench;
mod check;
mod gen;
mod input;
mod output;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cer_core::{CompiledQuery, ConsumePolicy, DataTuple, EngineConfig, Schema};
use clap::{Args, Parser, Subcommand, ValueEnum};

use input::Format;

#[derive(Parser)]
#[command(
    name = "cer",
    version,
    about = "Complex event recognition over CSV and NDJSON streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a query and print complex events as NDJSON.
    Run(run::RunArgs),
    /// Compare the engine against the brute-force oracle on a small stream.
    Check(check::CheckArgs),
    /// Generate a synthetic CSV stream.
    Gen(gen::GenArgs),
    /// Time a query over an in-memory stream and print a JSON report.
    Bench(bench::BenchArgs),
}

/// Inputs shared by every command that evaluates a query.
#[derive(Args, Debug, Clone)]
pub struct QueryInput {
    /// Schema file with `DECLARE EVENT` lines. Without it, column types are inferred.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// File holding the CEQL query.
    #[arg(long, required_unless_present = "expr")]
    query: Option<PathBuf>,
    /// Query text given inline.
    #[arg(short = 'e', long, conflicts_with = "query")]
    expr: Option<String>,
    /// Stream file; stdin when absent or `-`.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Stream format; guessed from the extension by default.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug, Clone)]
pub struct EngineArgs {
    /// Replace the query's window, in stream time units.
    #[arg(long)]
    within_override: Option<u64>,
    /// Cap on complex events per trigger; 0 means no cap.
    #[arg(long, default_value_t = cer_core::engine::DEFAULT_LIMIT)]
    limit: usize,
    /// Replace the query's consumption policy.
    #[arg(long, value_enum)]
    consume: Option<Consume>,
    /// Events between pruning passes.
    #[arg(long, default_value_t = cer_core::engine::DEFAULT_PRUNE_PERIOD)]
    prune_period: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Consume {
    None,
    Any,
}

/// How a command ended, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Engine and oracle disagree.
    Mismatch,
    /// Bad files, queries or streams.
    Input(String),
}

impl From<input::InputError> for Failure {
    fn from(e: input::InputError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

impl QueryInput {
    fn schema(&self) -> Result<Option<Schema>, Failure> {
        self.schema
            .as_deref()
            .map(|p| Schema::parse(&read_file(p)?).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))))
            .transpose()
    }

    fn query(&self, schema: Option<&Schema>) -> Result<CompiledQuery, Failure> {
        let text = match (&self.expr, &self.query) {
            (Some(e), _) => e.clone(),
            (None, Some(p)) => read_file(p)?,
            (None, None) => return Err(Failure::Input("no query given".into())),
        };
        let q = match schema {
            Some(s) => CompiledQuery::with_schema(&text, s),
            None => CompiledQuery::new(&text),
        };
        q.map_err(|e| Failure::Input(format!("query: {e}")))
    }

    /// Loads schema, query and stream, with times stamped per the query.
    fn load(&self) -> Result<(CompiledQuery, Vec<DataTuple>), Failure> {
        let schema = self.schema()?;
        let q = self.query(schema.as_ref())?;
        let format = self.format.unwrap_or_else(|| Format::detect(self.stream.as_deref()));
        let reader = input::open(self.stream.as_deref())?;
        let mut stream = input::read_stream(reader, format, schema.as_ref())?;
        for t in &mut stream {
            q.stamp(t).map_err(|e| Failure::Input(e.to_string()))?;
        }
        Ok((q, stream))
    }
}

impl EngineArgs {
    fn apply(&self, q: &mut CompiledQuery) {
        if let Some(w) = self.within_override {
            q.window = Some(w);
        }
        if let Some(c) = self.consume {
            q.consume = match c {
                Consume::None => ConsumePolicy::None,
                Consume::Any => ConsumePolicy::Any,
            };
        }
    }

    fn config(&self, q: &CompiledQuery) -> EngineConfig {
        q.engine_config(EngineConfig {
            limit: (self.limit > 0).then_some(self.limit),
            prune_period: self.prune_period.max(1),
            ..EngineConfig::default()
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::run(a),
        Command::Check(a) => check::check(a),
        Command::Gen(a) => gen::gen(a),
        Command::Bench(a) => bench::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch) => ExitCode::from(1),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
