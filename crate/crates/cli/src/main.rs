use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use levers_core::config::ScenarioConfig;
use levers_core::population::write_population;
use levers_core::report::{sha256_hex, Manifest, ResultDocument, Table, SCHEMA_VERSION};
use levers_core::synth::{generate, SynthSpec};
use levers_core::{Error, ErrorClass, ENGINE_VERSION};
use levers_service::{serve, ServiceConfig};

/// Welfare analysis of policy levers for prediction-based allocation.
#[derive(Parser)]
#[command(name = "levers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and resolve a config, then print a summary of the scenario.
    Validate(RunArgs),
    /// Welfare of the scenario next to its random and perfect baselines.
    Evaluate(RunArgs),
    /// Welfare gain of one lever over a grid of magnitudes.
    Curve(RunArgs),
    /// Smallest lever magnitude matching a benchmark lever's gain.
    BreakEven(RunArgs),
    /// Cost of the benchmark lever that matches a fixed lever's gain.
    EquivCost(RunArgs),
    /// Gain ratios between two levers over a two-dimensional grid.
    RatioGrid(RunArgs),
    /// Best split of a budget across up to three levers.
    Optimize(RunArgs),
    /// Generate a synthetic population and write it in the ingestion format.
    Synth(SynthArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for result.json, table.{csv,json} and manifest.json.
    /// Without it the result document goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Replaces the config's policy seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Format of the flat table.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file holding a synthetic population spec.
    #[arg(long)]
    spec: PathBuf,
    /// Destination file.
    #[arg(long)]
    out: PathBuf,
    /// Replaces the seed given in the spec file.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Sweep worker threads per analysis (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Analyses above this many cells run as polled jobs.
    #[arg(long, default_value_t = ServiceConfig::default().inline_threshold)]
    inline_threshold: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Analysis => 4,
    }
}

fn write(path: &Path, contents: &str) -> Result<String, Error> {
    fs::write(path, contents).map_err(|e| Error::config("--out", format!("cannot write {}: {e}", path.display())))?;
    Ok(sha256_hex(contents.as_bytes()))
}

fn run(args: &RunArgs, expected: Option<&str>) -> Result<(), Error> {
    let start = Instant::now();
    let (mut cfg, base) = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg = cfg.with_seed(seed);
    }
    let pop = cfg.population(&base)?;
    let resolved = cfg.resolve(pop)?;
    let hash = cfg.hash();

    let Some(expected) = expected else {
        let s = &resolved.scenario;
        println!("config ok  hash {hash}");
        println!(
            "population  N={} labeled={} share={}",
            s.population.len(),
            s.population.labeled_count(),
            s.population.label_share()
        );
        println!("utility     {:?}", s.utility);
        println!("capacity    {} ({} slots)", s.constraint.capacity, s.constraint.slots());
        for (name, m) in &resolved.masks {
            println!("mask        {name}: {} records", m.count());
        }
        for (name, l) in &resolved.levers {
            let cost = l
                .cost
                .as_ref()
                .map_or("no cost model".to_string(), |c| format!("{:?}", c.kind));
            println!("lever       {name}: {} ({cost})", l.at(0.0).name());
        }
        println!(
            "analysis    {} ({} cells)",
            resolved.analysis.name(),
            resolved.analysis.cell_count()
        );
        return Ok(());
    };
    if resolved.analysis.name() != expected {
        return Err(Error::config(
            "analysis.kind",
            format!(
                "this subcommand runs `{expected}`, config asks for `{}`",
                resolved.analysis.name()
            ),
        ));
    }

    let result = resolved.run(args.workers)?;
    let table = Table::from_result(&result);
    let doc = ResultDocument::new(&hash, cfg.policy.seed, result).to_json();
    let Some(out) = &args.out else {
        print!("{doc}");
        return Ok(());
    };
    fs::create_dir_all(out).map_err(|e| Error::config("--out", e.to_string()))?;
    let mut files = BTreeMap::new();
    files.insert("result.json".to_string(), write(&out.join("result.json"), &doc)?);
    let (name, text) = match args.format {
        Format::Csv => ("table.csv", table.to_csv()?),
        Format::Json => ("table.json", table.to_json()),
    };
    files.insert(name.to_string(), write(&out.join(name), &text)?);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        config_hash: hash,
        seed: cfg.policy.seed,
        analysis: expected.to_string(),
        workers: args.workers,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        files,
    };
    let mut m = serde_json::to_string_pretty(&manifest).expect("manifests serialize");
    m.push('\n');
    write(&out.join("manifest.json"), &m)?;
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Error::config("--spec", format!("cannot read {}: {e}", args.spec.display())))?;
    let mut spec: SynthSpec = toml::from_str(&text).map_err(|e| Error::config("--spec", e.to_string()))?;
    if let Some(seed) = args.seed_override {
        spec.seed = seed;
    }
    let pop = generate(&spec)?;
    let file = fs::File::create(&args.out)
        .map_err(|e| Error::config("--out", format!("cannot create {}: {e}", args.out.display())))?;
    write_population(&pop, std::io::BufWriter::new(file))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate(a) => run(a, None),
        Command::Evaluate(a) => run(a, Some("evaluate")),
        Command::Curve(a) => run(a, Some("curve")),
        Command::BreakEven(a) => run(a, Some("break_even")),
        Command::EquivCost(a) => run(a, Some("equivalent_cost")),
        Command::RatioGrid(a) => run(a, Some("ratio_grid")),
        Command::Optimize(a) => run(a, Some("optimize_budget")),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => {
            let config = ServiceConfig {
                inline_threshold: a.inline_threshold,
                workers: a.workers,
            };
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            eprintln!("listening on http://{}", a.addr);
            return match rt.block_on(serve(a.addr, config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
