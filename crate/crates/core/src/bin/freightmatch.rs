use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use freightmatch::decompose::{run_decomposition, run_joint, write_assignments, write_unmet, DecompositionOptions, PhaseReport};
use freightmatch::domain::TradeType;
use freightmatch::instance::{load_instance, save_instance, synthesize_instance, SynthesisConfig};
use freightmatch::international::{generate_international_shipments, write_shipments, InternationalShipment};
use freightmatch::lp::{write_lp, BundledSimplex, ExternalSolver, LpBackend};
use freightmatch::models::{build_joint_model, build_supplier_selection_model, ObjectiveBreakdown, Problem};
use freightmatch::pairing::{enumerate_pairs, PairingOptions};
use freightmatch::report::write_reports;
use freightmatch::Error;

/// Supplier selection and commodity assignment for regional freight.
#[derive(Parser)]
#[command(name = "freightmatch", version)]
struct Cli {
    /// Worker threads for pair enumeration (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instance directory.
    Generate(GenerateArgs),
    /// Solve an instance and write assignments and reports.
    Solve(SolveArgs),
    /// Allocate port import/export tonnage to establishments.
    International(InternationalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Internal zones.
    #[arg(long, default_value_t = 4)]
    zones: usize,
    #[arg(long, default_value_t = 2)]
    external_zones: usize,
    #[arg(long, default_value_t = 6)]
    establishments_per_zone: usize,
    #[arg(long, default_value_t = 3)]
    commodities: u8,
    #[arg(long, default_value_t = 1.5)]
    capacity_ratio: f64,
    #[arg(long, default_value_t = 100.0)]
    demand_scale: f64,
    /// Keep only the nearest M suppliers per receiver.
    #[arg(long)]
    max_suppliers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Joint,
    Decomposed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Bundled,
    External,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance directory.
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Decomposed)]
    mode: Mode,
    /// Solve internal and external suppliers of internal receivers in turn.
    #[arg(long)]
    split_ei: bool,
    /// Overrides the instance's nearest-supplier cap.
    #[arg(long)]
    max_suppliers: Option<usize>,
    /// Weight overrides, e.g. `w1=2,w4=0.5,micro=5`.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, value_enum, default_value_t = SolverKind::Bundled)]
    solver: SolverKind,
    /// Command line of the external solver.
    #[arg(long, default_value = "python3 scripts/scipy_highs_backend.py")]
    external_cmd: String,
    /// Also write the first-stage LP in CPLEX LP format.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    /// Skip the import/export heuristic in the summary.
    #[arg(long)]
    no_international: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TradeArg {
    Import,
    Export,
    Both,
}

#[derive(Args)]
struct InternationalArgs {
    /// Instance directory.
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = TradeArg::Both)]
    trade_type: TradeArg,
    #[arg(long)]
    lb: Option<f64>,
    #[arg(long)]
    ub: Option<f64>,
    #[arg(long)]
    size_threshold: Option<f64>,
    /// Defaults to the instance seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SolveSummary {
    mode: &'static str,
    solver: String,
    pairs: usize,
    receivers: usize,
    objective: ObjectiveBreakdown,
    objective_total: f64,
    bin_gap_total: f64,
    flow_gap_total: f64,
    unmet_fraction_max: f64,
    phases: Vec<PhaseReport>,
    seconds: f64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Subproblem { .. } | Error::Numerical(_) | Error::External(_) | Error::Model(_) => 3,
        Error::Invalid(_)
        | Error::MalformedRow { .. }
        | Error::MissingFile(_)
        | Error::PoolExhausted { .. }
        | Error::NoTradeCandidate { .. }
        | Error::MissingDistance { .. }
        | Error::Csv(_)
        | Error::Json(_) => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FREIGHTMATCH_LOG", "warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already set up: {e}");
        }
    }
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::International(a) => international(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    let cfg = SynthesisConfig {
        n_internal_zones: a.zones,
        n_external_zones: a.external_zones,
        establishments_per_zone: a.establishments_per_zone,
        commodity_count: a.commodities,
        demand_scale: a.demand_scale,
        capacity_ratio: a.capacity_ratio,
        rng_seed: a.seed,
        max_suppliers: a.max_suppliers,
        ..SynthesisConfig::default()
    };
    let instance = synthesize_instance(&cfg)?;
    save_instance(&instance, &a.out)?;
    println!(
        "wrote {} ({} establishments, {} zones)",
        a.out.display(),
        instance.establishments.len(),
        instance.zones.len()
    );
    Ok(())
}

fn backend(a: &SolveArgs) -> Result<Box<dyn LpBackend>, Error> {
    Ok(match a.solver {
        SolverKind::Bundled => Box::new(BundledSimplex::default()),
        SolverKind::External => Box::new(ExternalSolver::from_command_line(&a.external_cmd)?),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn solve(a: SolveArgs) -> Result<(), Error> {
    let started = Instant::now();
    let mut instance = load_instance(&a.instance)?;
    if let Some(w) = &a.weights {
        instance.weights.apply_overrides(w).map_err(Error::Config)?;
    }
    if a.max_suppliers == Some(0) {
        return Err(Error::Config("--max-suppliers must be at least 1".into()));
    }
    let max_suppliers = a.max_suppliers.or(instance.max_suppliers);
    let backend = backend(&a)?;
    let pairs = enumerate_pairs(&instance, &PairingOptions { max_suppliers })?;
    log::info!("{} candidate pairs", pairs.len());

    if let Some(path) = &a.export_lp {
        let regional = freightmatch::decompose::regional_pairs(&pairs, &instance.establishments);
        let problem = Problem::new(&instance, &regional, instance.weights);
        let lp = match a.mode {
            Mode::Joint => build_joint_model(&problem)?.lp,
            Mode::Decomposed => build_supplier_selection_model(&problem)?.lp,
        };
        write_lp(&lp, &mut create(path)?)?;
    }

    let (mode, pairs, assignment, phases) = match a.mode {
        Mode::Joint => {
            let (pairs, a) = run_joint(&instance, &pairs, backend.as_ref())?;
            ("joint", pairs, a, Vec::new())
        }
        Mode::Decomposed => {
            let d = run_decomposition(&instance, &pairs, backend.as_ref(), DecompositionOptions { split_ei: a.split_ei })?;
            ("decomposed", d.pairs, d.assignment, d.phases)
        }
    };

    let shipments: Vec<InternationalShipment> = if a.no_international || instance.port_flows.is_empty() {
        Vec::new()
    } else {
        match generate_international_shipments(
            &instance,
            &[TradeType::Import, TradeType::Export],
            &instance.trade_bounds,
            instance.rng_seed,
        ) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("international shipments skipped: {e}");
                Vec::new()
            }
        }
    };

    fs::create_dir_all(&a.out)?;
    write_assignments(&instance, &pairs, &assignment, create(&a.out.join("assignments.csv"))?)?;
    write_unmet(&instance, &assignment, create(&a.out.join("unmet.csv"))?)?;
    write_reports(&a.out.join("report"), &instance, &pairs, &assignment, &shipments)?;

    let summary = SolveSummary {
        mode,
        solver: backend.name().to_string(),
        pairs: pairs.len(),
        receivers: assignment.receivers.len(),
        objective: assignment.breakdown,
        objective_total: assignment.breakdown.total(),
        bin_gap_total: assignment.total_bin_gap(),
        flow_gap_total: assignment.total_flow_gap(),
        unmet_fraction_max: assignment.unmet.iter().copied().fold(0.0, f64::max),
        phases,
        seconds: started.elapsed().as_secs_f64(),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(a.out.join("solve_summary.json"), json)?;
    println!(
        "{mode}: objective {:.6}, bin gap {:.6}, flow gap {:.3} t, {} pairs",
        summary.objective_total, summary.bin_gap_total, summary.flow_gap_total, summary.pairs
    );
    Ok(())
}

fn international(a: InternationalArgs) -> Result<(), Error> {
    let instance = load_instance(&a.instance)?;
    let mut bounds = instance.trade_bounds;
    if let Some(v) = a.lb {
        bounds.lb = v;
    }
    if let Some(v) = a.ub {
        bounds.ub = v;
    }
    if let Some(v) = a.size_threshold {
        bounds.size_threshold = v;
    }
    let trades: &[TradeType] = match a.trade_type {
        TradeArg::Import => &[TradeType::Import],
        TradeArg::Export => &[TradeType::Export],
        TradeArg::Both => &[TradeType::Import, TradeType::Export],
    };
    let shipments = generate_international_shipments(&instance, trades, &bounds, a.seed.unwrap_or(instance.rng_seed))?;
    fs::create_dir_all(&a.out)?;
    write_shipments(&shipments, create(&a.out.join("international_shipments.csv"))?)?;
    println!("{} shipments", shipments.len());
    Ok(())
}
