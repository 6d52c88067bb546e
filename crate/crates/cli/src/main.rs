use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sbmgof::sbm::{generate_sbm, SbmConfig};
use sbmgof::sim::{run_table, write_table_csv, Setting, SimConfig};
use sbmgof::testing::{run_test, BChoice, Target, TestOptions, Variant};
use sbmgof::{AdjacencyMatrix, Membership};

/// Goodness-of-fit tests for stochastic block models.
#[derive(Parser)]
#[command(name = "sbmgof", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether the graph has K communities (membership estimated spectrally).
    TestK {
        /// Edge list, or `-` for stdin.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        #[command(flatten)]
        shared: TestArgs,
    },
    /// Test a given community membership.
    TestG {
        #[arg(long)]
        graph: PathBuf,
        /// One label per line, node order.
        #[arg(long)]
        membership: PathBuf,
        #[command(flatten)]
        shared: TestArgs,
    },
    /// Sample a graph from a JSON block model; writes OUT and OUT.membership.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long, env = "SBMGOF_SEED")]
        seed: Option<u64>,
    },
    /// Produce a rejection-rate table as CSV.
    Simulate {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        setting: Option<SettingArg>,
        /// JSON simulation config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        reps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        variant: Option<VariantArg>,
        #[arg(long, env = "SBMGOF_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
    variant: VariantArg,
    /// Rows drawn per resampled sum: an integer or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_b)]
    b: BChoice,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
    #[arg(long = "boot-j", default_value_t = 100)]
    boot_j: usize,
    #[arg(long, env = "SBMGOF_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    Plain,
    Bootstrap,
    Augmented,
    AugmentedBootstrap,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Plain => Variant::Plain,
            VariantArg::Bootstrap => Variant::Bootstrap,
            VariantArg::Augmented => Variant::Augmented,
            VariantArg::AugmentedBootstrap => Variant::AugmentedBootstrap,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SettingArg {
    #[value(name = "1i")]
    S1i,
    #[value(name = "1ii")]
    S1ii,
    #[value(name = "2i")]
    S2i,
    #[value(name = "2ii")]
    S2ii,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::S1i => Setting::Dense300,
            SettingArg::S1ii => Setting::Dense3000,
            SettingArg::S2i => Setting::Sparse300,
            SettingArg::S2ii => Setting::Sparse3000,
        }
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(a) if a > 0.0 && a < 1.0 => Ok(a),
        _ => Err(format!("alpha must be a number in (0, 1), got {s:?}")),
    }
}

fn parse_b(s: &str) -> Result<BChoice, String> {
    s.parse().map_err(|e: sbmgof::Error| e.to_string())
}

/// Errors the user can fix by changing the invocation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_input_error(&e) { 2 } else { 1 })
        }
    }
}

/// Usage errors and unreadable or malformed input exit with 2; failures
/// inside the computation exit with 1.
fn is_input_error(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.is::<Usage>()
            || cause.is::<io::Error>()
            || matches!(
                cause.downcast_ref::<sbmgof::Error>(),
                Some(
                    sbmgof::Error::Parse { .. }
                        | sbmgof::Error::SelfLoop { .. }
                        | sbmgof::Error::EmptyInput
                        | sbmgof::Error::EmptyGraph
                        | sbmgof::Error::EmptyCommunity(_)
                        | sbmgof::Error::InvalidArgument(_)
                        | sbmgof::Error::LengthMismatch { .. }
                        | sbmgof::Error::Io(_)
                )
            )
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::TestK { graph, k, shared } => {
            let opts = shared.options()?;
            with_workers(shared.workers, || {
                let a = read_graph(&graph)?;
                report(run_test(&a, &Target::Count(k as usize), &opts)?)
            })
        }
        Command::TestG { graph, membership, shared } => {
            let opts = shared.options()?;
            with_workers(shared.workers, || {
                let a = read_graph(&graph)?;
                let g = Membership::load(BufReader::new(
                    File::open(&membership).with_context(|| format!("opening {}", membership.display()))?,
                ))
                .with_context(|| format!("reading {}", membership.display()))?;
                g.check_len(&a)?;
                report(run_test(&a, &Target::Given(g), &opts)?)
            })
        }
        Command::Generate { config, out, seed } => generate(&config, &out, seed),
        Command::Simulate { setting, config, reps, out, variant, seed, workers } => {
            let mut cfg = match (setting, config) {
                (Some(s), _) => SimConfig::new(s.into()),
                (None, Some(path)) => {
                    let text = read_text(&path)?;
                    SimConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
                }
                (None, None) => return Err(usage("one of --setting or --config is required")),
            };
            if let Some(r) = reps {
                cfg.reps = Some(r as usize);
            }
            if let Some(v) = variant {
                cfg.variant = v.into();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let workers = workers.unwrap_or_else(default_workers);
            let table = run_table(&cfg, workers)?;
            let mut buf = Vec::new();
            write_table_csv(&table, &mut buf)?;
            write_output(&out, &buf)
        }
    }
}

impl TestArgs {
    fn options(&self) -> anyhow::Result<TestOptions> {
        let opts = TestOptions {
            alpha: self.alpha,
            b: self.b,
            m: self.m as usize,
            bootstrap_j: self.boot_j,
            seed: self.seed,
            variant: self.variant.into(),
        };
        opts.validate().map_err(|e| usage(e.to_string()))?;
        Ok(opts)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or_else(default_workers).max(1)).build()?;
    pool.install(f)
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text)?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(text)
}

fn read_graph(path: &Path) -> anyhow::Result<AdjacencyMatrix> {
    let text = read_text(path)?;
    AdjacencyMatrix::load_edge_list(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))
}

fn report(rep: sbmgof::testing::TestReport) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, &rep)?;
    writeln!(out)?;
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if path == Path::new("-") {
        io::stdout().lock().write_all(bytes)?;
    } else {
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn generate(config: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let text = read_text(config)?;
    let mut cfg: SbmConfig =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let spec = cfg.to_spec().map_err(|e| usage(format!("{}: {e}", config.display())))?;
    let a = generate_sbm(&spec);

    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".membership");
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    a.write_edge_list(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(&sidecar)?);
    spec.g.write(&mut w)?;
    w.flush()?;
    Ok(())
}
