use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use orthochain::battery::{run_theory_battery, BatteryOptions};
use orthochain::record::write_csv;
use orthochain::spec::{OneOrMany, SeedsField};
use orthochain::{run, ConfigFile, ExperimentError, ExperimentKind, ExperimentOutput, ExperimentSpec};

const USAGE_EXIT: u8 = 2;
const FAILURE_EXIT: u8 = 1;

/// Simulate deep random networks with batch normalization and check the
/// resulting orthogonality bounds.
#[derive(Parser, Debug)]
#[command(name = "orthochain", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-layer diagnostics of a single chain configuration.
    Chain(RunArgs),
    /// Layer-averaged gap against width with a log-log slope.
    WidthSweep(RunArgs),
    /// Per-layer gap profile, decay rate and plateau.
    DepthSweep(RunArgs),
    /// Cosine between two samples, BN against vanilla.
    Cosine(RunArgs),
    /// Gram fluctuation against width for nonlinear activations.
    Conjecture(RunArgs),
    /// Pass/fail battery over the theoretical bounds.
    TheoryCheck(RunArgs),
    /// Gap through layers built by an initializer, without normalization.
    InitDemo(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Chain(a) => (ExperimentKind::Chain, a),
            Command::WidthSweep(a) => (ExperimentKind::WidthSweep, a),
            Command::DepthSweep(a) => (ExperimentKind::DepthSweep, a),
            Command::Cosine(a) => (ExperimentKind::CosineContrast, a),
            Command::Conjecture(a) => (ExperimentKind::ConjectureSweep, a),
            Command::TheoryCheck(a) => (ExperimentKind::TheoryBattery, a),
            Command::InitDemo(a) => (ExperimentKind::InitDemo, a),
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Batch size; a comma-separated list pairs with --d-list for theory-check.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Single width.
    #[arg(long, conflicts_with = "d_list")]
    d: Option<usize>,
    /// Comma-separated, strictly increasing widths.
    #[arg(long, value_delimiter = ',')]
    d_list: Option<Vec<usize>>,
    /// Number of layers including the input.
    #[arg(long)]
    depth: Option<usize>,
    /// Number of replicates.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// linear, relu, tanh, sin or sigmoid; comma-separated for conjecture.
    #[arg(long, value_delimiter = ',')]
    activation: Option<Vec<String>>,
    /// bn or vanilla.
    #[arg(long)]
    chain: Option<String>,
    /// orthogonal, xavier or gaussian.
    #[arg(long)]
    init: Option<String>,
    /// gaussian, correlated or orthogonal.
    #[arg(long)]
    input: Option<String>,
    /// Noise level of the correlated input.
    #[arg(long)]
    eps: Option<f64>,
    /// factored or dense.
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "ORTHOCHAIN_THREADS")]
    threads: Option<usize>,
    /// Negative control for theory-check: skip the 1/sqrt(d) rescale.
    #[arg(long, hide = true)]
    omit_bn_scaling: bool,
}

impl RunArgs {
    fn overrides(&self) -> ConfigFile {
        ConfigFile {
            n: self.n.clone().map(|n| if n.len() == 1 { OneOrMany::One(n[0]) } else { OneOrMany::Many(n) }),
            d: self.d,
            d_list: self.d_list.clone(),
            depth: self.depth,
            activation: self.activation.clone().map(|a| {
                if a.len() == 1 {
                    OneOrMany::One(a[0].clone())
                } else {
                    OneOrMany::Many(a)
                }
            }),
            chain_kind: self.chain.clone(),
            sampling: self.sampling.clone(),
            input: self.input.clone(),
            eps: self.eps,
            init: self.init.clone(),
            seeds: self.seeds.map(SeedsField::Count),
            master_seed: self.master_seed,
            burn_in: self.burn_in,
            out: self.out.clone(),
            ..ConfigFile::default()
        }
    }
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentSpec, ExperimentError> {
    let base = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    ExperimentSpec::from_config(kind, &base.merged(args.overrides()))
}

fn execute(spec: &ExperimentSpec, args: &RunArgs) -> anyhow::Result<ExperimentOutput> {
    if spec.kind == ExperimentKind::TheoryBattery {
        let opts = BatteryOptions { omit_bn_scaling: args.omit_bn_scaling, ..BatteryOptions::default() };
        return Ok(run_theory_battery(spec, &opts)?.into_output(spec));
    }
    Ok(run(spec)?)
}

fn write_output(spec: &ExperimentSpec, output: &ExperimentOutput) -> anyhow::Result<()> {
    match &spec.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(BufWriter::new(file), &output.records).with_context(|| format!("writing {}", path.display()))
        }
        None => write_csv(BufWriter::new(io::stdout().lock()), &output.records).context("writing CSV to stdout"),
    }
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let spec = match resolve(kind, &args) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("run `orthochain {} --help` for usage", kind.command());
            return ExitCode::from(USAGE_EXIT);
        }
    };
    if args.omit_bn_scaling && kind != ExperimentKind::TheoryBattery {
        eprintln!("error: --omit-bn-scaling only applies to theory-check");
        return ExitCode::from(USAGE_EXIT);
    }
    let threads = match args.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(USAGE_EXIT);
        }
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let echo = serde_json::json!({ "effective": spec.to_config(), "threads": threads });
    eprintln!("{echo}");

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(FAILURE_EXIT);
        }
    };
    let result = pool.install(|| execute(&spec, &args)).and_then(|out| {
        write_output(&spec, &out)?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            eprintln!("{}", out.summary);
            if out.failures > 0 {
                ExitCode::from(FAILURE_EXIT)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(FAILURE_EXIT)
        }
    }
}
