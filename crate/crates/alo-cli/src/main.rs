//! Command line front end for the aircraft loading optimizer.
//!
//! Subcommands: `generate` (benchmark instances), `export` (MPS/JSON model),
//! `solve` (mass packing), `optimize-cg` (center-of-gravity targeting),
//! `validate` (exact feasibility check), `bench` (runtime-scaling grid).
//!
//! Every run prints exactly one JSON summary line on stdout; human-readable
//! logs go to stderr. Exit codes: 0 success / feasible, 1 quality or
//! feasibility not reached, 2 usage error, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use alo_core::bench::{
    cells_to_csv, emit_report, fit_scaling, run_grid, summarize, GridConfig, ReferenceCurve,
};
use alo_core::cgopt::{optimize_cg_direct, optimize_cg_sequence, CgOptConfig, CgOptStatus, StageRecord};
use alo_core::export::{write_mps, write_system_json};
use alo_core::instance::{
    airbus_reference_instance, generate_instance, load_instance, save_instance, split_sizes,
    GeneratorConfig, Instance,
};
use alo_core::model::{build_constraints, center_of_gravity, total_mass, validate, Assignment};
use alo_core::solver::{
    solve, w_max, InstanceSummary, SolveConfig, SolveMode, SolveStatus, SolutionDocument, TimeSource,
};
use alo_core::Error;

const SEED_ENV: &str = "ALO_SEED";

#[derive(Parser)]
#[command(
    name = "alo",
    version,
    about = "Aircraft loading optimizer: model, instances, solvers, CG targeting, benchmarks",
    after_help = "Exit codes: 0 success/feasible, 1 quality or feasibility not reached, 2 usage, 3 I/O."
)]
struct Cli {
    /// Random seed; falls back to the ALO_SEED environment variable, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap for parallel operations.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Increase log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark instance and write it as JSON.
    Generate(GenerateArgs),
    /// Build the constraint model of an instance and write it as MPS or JSON.
    Export(ExportArgs),
    /// Maximize carried mass; write the solution document as JSON.
    Solve(SolveArgs),
    /// Drive the center of gravity toward the target; write a stage report.
    #[command(name = "optimize-cg")]
    OptimizeCg(OptimizeCgArgs),
    /// Check a solution file against every constraint in exact arithmetic.
    Validate(ValidateArgs),
    /// Run the runtime-scaling benchmark grid; write CSV and SVG plots.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
#[command(group(
    clap::ArgGroup::new("source")
        .required(true)
        .args(["reference", "n", "n1"])
))]
struct GenerateArgs {
    /// Write the fixed 60-container, 20-bin reference instance.
    #[arg(long, conflicts_with_all = ["bins", "n2", "n3"])]
    reference: bool,

    /// Total container count; sizes are split in 3:2:1 proportion.
    #[arg(short = 'n')]
    n: Option<usize>,

    /// Single-bin container count (use with --n2 and --n3).
    #[arg(long, requires = "n2", requires = "n3")]
    n1: Option<usize>,

    /// Half-bin container count.
    #[arg(long, requires = "n1")]
    n2: Option<usize>,

    /// Double-bin container count.
    #[arg(long, requires = "n1")]
    n3: Option<usize>,

    /// Bin count of the loading zone.
    #[arg(short = 'N', long = "bins", default_value_t = 20)]
    bins: usize,

    /// Output path for the instance JSON.
    #[arg(long, default_value = "instance.json")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Mps,
    Json,
}

#[derive(clap::Args)]
struct ExportArgs {
    /// Instance JSON file.
    instance: PathBuf,

    #[arg(long, value_enum, default_value_t = ExportFormat::Mps)]
    format: ExportFormat,

    /// Output path; defaults to model.mps or model.json per the format.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exhaustive,
    BranchAndBound,
    ThresholdDescent,
}

impl From<ModeArg> for SolveMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Exhaustive => SolveMode::Exhaustive,
            ModeArg::BranchAndBound => SolveMode::BranchAndBound,
            ModeArg::ThresholdDescent => SolveMode::ThresholdDescent,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,

    #[arg(long, value_enum, default_value_t = ModeArg::ThresholdDescent)]
    mode: ModeArg,

    /// Stop once carried mass reaches tau * min(max payload, total mass).
    #[arg(long, default_value_t = 0.999)]
    tau: f64,

    /// Time budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,

    /// Stochastic search lanes sharing one incumbent.
    #[arg(long, default_value_t = 8)]
    restarts: usize,

    /// Mass-floor increment in kg after each feasible find.
    #[arg(long, default_value_t = 1)]
    threshold_step: u64,

    /// Replace the wall clock with a virtual clock advancing this many
    /// seconds per search step; makes runs reproducible.
    #[arg(long, value_name = "SECS_PER_STEP")]
    virtual_clock: Option<f64>,

    /// Output path for the solution JSON.
    #[arg(long, default_value = "solution.json")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Shrink the allowed CG interval toward the target, resolving each time.
    Sequence,
    /// Bound |cg - target| directly and tighten the bound each stage.
    Direct,
}

#[derive(clap::Args)]
struct OptimizeCgArgs {
    /// Instance JSON file.
    instance: PathBuf,

    #[arg(long, value_enum, default_value_t = MethodArg::Sequence)]
    method: MethodArg,

    /// Mass floor fraction: every stage keeps mass >= tau * min(max payload, total mass).
    #[arg(long, default_value_t = 0.998)]
    tau: f64,

    /// CG improvement step per stage, as a fraction of the zone length.
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,

    #[arg(long, default_value_t = 64)]
    max_stages: usize,

    /// Per-stage time budget in seconds.
    #[arg(long)]
    stage_budget: Option<f64>,

    /// Direct method: starting bound on |cg - target| instead of a free first stage.
    #[arg(long)]
    initial_threshold: Option<f64>,

    /// Solver backend for each stage.
    #[arg(long, value_enum, default_value_t = ModeArg::ThresholdDescent)]
    mode: ModeArg,

    #[arg(long, default_value_t = 8)]
    restarts: usize,

    /// Virtual clock (seconds per step) for reproducible stages.
    #[arg(long, value_name = "SECS_PER_STEP")]
    virtual_clock: Option<f64>,

    /// Output path for the stage report JSON.
    #[arg(long, default_value = "cg_report.json")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ValidateArgs {
    /// Instance JSON file.
    instance: PathBuf,

    /// Solution or CG-report JSON file produced by solve or optimize-cg.
    solution: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveArg {
    /// Overlay the mass-packing reference power law.
    Packing,
    /// Overlay the CG-optimization variant (shifted prefactor).
    Cg,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Container-to-bin ratio; repeat the flag for several ratios.
    #[arg(long = "r", value_name = "RATIO", required = true)]
    r_values: Vec<f64>,

    /// Comma-separated bin counts.
    #[arg(long = "N-list", value_name = "N,N,...", value_delimiter = ',', required = true)]
    n_list: Vec<usize>,

    /// Instances per (r, N) cell.
    #[arg(long, default_value_t = 1)]
    count: usize,

    /// Per-instance quality threshold.
    #[arg(long, default_value_t = 0.99)]
    tau: f64,

    /// Per-instance time budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,

    #[arg(long, default_value_t = 8)]
    restarts: usize,

    /// Virtual clock (seconds per step) for reproducible records.
    #[arg(long, value_name = "SECS_PER_STEP")]
    virtual_clock: Option<f64>,

    /// Draw the dashed reference power law on the plots.
    #[arg(long, value_enum)]
    reference_curve: Option<CurveArg>,

    /// Directory for records.csv, cells.csv and the SVG plots.
    #[arg(long, default_value = "bench_report")]
    out_dir: PathBuf,
}

/// Report of one CG optimization run, serialized next to the solution format.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CgDocument {
    version: u32,
    instance: InstanceSummary,
    status: CgOptStatus,
    /// (container index, bin) pairs of the best loading; empty without one.
    placements: Vec<(usize, usize)>,
    deviation: Option<f64>,
    cg: Option<f64>,
    mass: Option<u64>,
    floor: u64,
    stages: Vec<StageRecord>,
}

const CG_SCHEMA_VERSION: u32 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok((summary, code)) => {
            println!("{summary}");
            ExitCode::from(code)
        }
        Err(err) => {
            log::error!("{err}");
            eprintln!("error: {err}");
            let code = match err {
                Error::Io { .. } | Error::Parse { .. } => 3u8,
                _ => 2u8,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(String, u8), Error> {
    if cli.threads == 0 {
        return Err(Error::Invalid {
            what: "threads",
            why: "at least one worker thread is required".into(),
        });
    }
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Export(args) => cmd_export(args),
        Command::Solve(args) => cmd_solve(cli, args),
        Command::OptimizeCg(args) => cmd_optimize_cg(cli, args),
        Command::Validate(args) => cmd_validate(args),
        Command::Bench(args) => cmd_bench(cli, args),
    }
}

fn resolved_seed(cli: &Cli) -> Result<u64, Error> {
    if let Some(seed) = cli.seed {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| Error::Invalid {
            what: "seed",
            why: format!("{SEED_ENV}={text:?} is not an unsigned integer"),
        }),
        Err(_) => Ok(0),
    }
}

fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn summary_line(value: &serde_json::Value) -> String {
    serde_json::to_string(value).expect("summary serialization cannot fail")
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<(String, u8), Error> {
    let (instance, seed) = if args.reference {
        (airbus_reference_instance(), None)
    } else {
        let seed = resolved_seed(cli)?;
        let (n1, n2, n3) = match (args.n, args.n1) {
            (Some(n), None) => split_sizes(n),
            (None, Some(n1)) => (n1, args.n2.unwrap_or(0), args.n3.unwrap_or(0)),
            _ => unreachable!("clap enforces exactly one source"),
        };
        let config = GeneratorConfig::new(n1, n2, n3, args.bins, seed)?;
        (generate_instance(&config)?, Some(seed))
    };
    write_file(&args.out, &save_instance(&instance))?;
    let (n1, n2, n3) = instance.payload.size_counts();
    log::info!(
        "generated {} containers over {} bins into {}",
        instance.payload.len(),
        instance.spec.bin_count,
        args.out.display()
    );
    let summary = json!({
        "command": "generate",
        "n": instance.payload.len(),
        "n1": n1,
        "n2": n2,
        "n3": n3,
        "N": instance.spec.bin_count,
        "seed": seed,
        "total_mass": instance.payload.total_mass(),
        "w_max": w_max(&instance.spec, &instance.payload),
        "out": args.out.display().to_string(),
    });
    Ok((summary_line(&summary), 0))
}

fn cmd_export(args: &ExportArgs) -> Result<(String, u8), Error> {
    let instance = load_instance(&read_file(&args.instance)?)?;
    let system = build_constraints(&instance.spec, &instance.payload);
    let (format, rendered, default_name) = match args.format {
        ExportFormat::Mps => ("mps", write_mps(&system)?, "model.mps"),
        ExportFormat::Json => ("json", write_system_json(&system), "model.json"),
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(default_name));
    write_file(&out, &rendered)?;
    let summary = json!({
        "command": "export",
        "format": format,
        "rows": system.rows().len(),
        "vars": system.variables().len(),
        "n_l": system.count_nonzeros(),
        "out": out.display().to_string(),
    });
    Ok((summary_line(&summary), 0))
}

fn solve_config_from(
    mode: ModeArg,
    tau: f64,
    budget: f64,
    restarts: usize,
    threshold_step: u64,
    virtual_clock: Option<f64>,
    cli: &Cli,
) -> Result<SolveConfig, Error> {
    let mut config = SolveConfig::new(mode.into());
    config.tau = tau;
    config.time_budget = budget;
    config.seed = resolved_seed(cli)?;
    config.restarts = restarts;
    config.threshold_step = threshold_step;
    config.threads = cli.threads;
    if let Some(seconds_per_step) = virtual_clock {
        config.time_source = TimeSource::Steps {
            seconds_per_step,
        };
    }
    Ok(config)
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> Result<(String, u8), Error> {
    let instance = load_instance(&read_file(&args.instance)?)?;
    let config = solve_config_from(
        args.mode,
        args.tau,
        args.budget,
        args.restarts,
        args.threshold_step,
        args.virtual_clock,
        cli,
    )?;
    let system = build_constraints(&instance.spec, &instance.payload);
    let report = solve(&system, &instance.spec, &instance.payload, &config)?;
    let document = SolutionDocument::new(&instance, &report);
    write_file(&args.out, &document.to_json())?;
    log::info!(
        "solve finished: status {:?}, mass {} kg after {:.3} s",
        report.status,
        report.mass,
        report.wall_time_s
    );
    let reached = matches!(report.status, SolveStatus::Optimal | SolveStatus::TauReached);
    let summary = json!({
        "command": "solve",
        "status": report.status,
        "mass": report.mass,
        "w_max": w_max(&instance.spec, &instance.payload),
        "tau": args.tau,
        "n_l": report.n_l,
        "time_s": report.wall_time_s,
        "steps": report.steps,
        "out": args.out.display().to_string(),
    });
    Ok((summary_line(&summary), if reached { 0 } else { 1 }))
}

fn cmd_optimize_cg(cli: &Cli, args: &OptimizeCgArgs) -> Result<(String, u8), Error> {
    let instance = load_instance(&read_file(&args.instance)?)?;
    let solve_config = solve_config_from(
        args.mode,
        args.tau,
        args.stage_budget.unwrap_or(60.0),
        args.restarts,
        1,
        args.virtual_clock,
        cli,
    )?;
    let config = CgOptConfig {
        tau: args.tau,
        epsilon: args.epsilon,
        stage_budget: args.stage_budget,
        max_stages: args.max_stages,
        initial_threshold: args.initial_threshold,
    };
    let report = match args.method {
        MethodArg::Sequence => optimize_cg_sequence(&instance, &config, &solve_config)?,
        MethodArg::Direct => optimize_cg_direct(&instance, &config, &solve_config)?,
    };
    let document = CgDocument {
        version: CG_SCHEMA_VERSION,
        instance: InstanceSummary::of(&instance),
        status: report.status,
        placements: report.assignment.as_ref().map(Assignment::placements).unwrap_or_default(),
        deviation: report.deviation,
        cg: report.cg,
        mass: report.mass,
        floor: report.floor,
        stages: report.stages.clone(),
    };
    let mut rendered =
        serde_json::to_string_pretty(&document).expect("report serialization cannot fail");
    rendered.push('\n');
    write_file(&args.out, &rendered)?;
    log::info!(
        "cg optimization finished: status {:?}, {} stages, deviation {:?}",
        report.status,
        report.stages.len(),
        report.deviation
    );
    let summary = json!({
        "command": "optimize_cg",
        "status": report.status,
        "deviation": report.deviation,
        "cg": report.cg,
        "cg_target": instance.spec.cg_target,
        "mass": report.mass,
        "floor": report.floor,
        "stages": report.stages.len(),
        "out": args.out.display().to_string(),
    });
    let found = report.status != CgOptStatus::NoSolutionFound;
    Ok((summary_line(&summary), if found { 0 } else { 1 }))
}

fn cmd_validate(args: &ValidateArgs) -> Result<(String, u8), Error> {
    let instance = load_instance(&read_file(&args.instance)?)?;
    let text = read_file(&args.solution)?;
    let assignment = parse_solution_placements(&text, &instance)?;
    let report = validate(&assignment, &instance.spec, &instance.payload)?;
    for violation in &report.violations {
        log::warn!(
            "violated {}: lhs {} > rhs {}",
            violation.tag,
            violation.lhs,
            violation.rhs
        );
    }
    let summary = json!({
        "command": "validate",
        "feasible": report.feasible,
        "violations": report.violations,
        "mass": total_mass(&assignment, &instance.payload),
        "cg": center_of_gravity(&assignment, &instance.spec, &instance.payload),
    });
    Ok((summary_line(&summary), if report.feasible { 0 } else { 1 }))
}

/// Accept either a solve document or a CG report; both carry an instance
/// fingerprint and a placement list.
fn parse_solution_placements(text: &str, instance: &Instance) -> Result<Assignment, Error> {
    if let Ok(document) = SolutionDocument::from_json(text) {
        return document.assignment(instance);
    }
    let document: CgDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "solution".into(),
        message: format!("neither a solution document nor a CG report: {e}"),
    })?;
    if document.version != CG_SCHEMA_VERSION {
        return Err(Error::Parse {
            path: "version".into(),
            message: format!("unsupported CG report version {}", document.version),
        });
    }
    if document.instance != InstanceSummary::of(instance) {
        return Err(Error::Invalid {
            what: "solution document",
            why: "instance fingerprint does not match the provided instance".into(),
        });
    }
    Assignment::from_placements(&instance.spec, &instance.payload, &document.placements)
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<(String, u8), Error> {
    let mut grid = GridConfig::new(args.r_values.clone(), args.n_list.clone());
    grid.instances_per_cell = args.count;
    grid.base_seed = resolved_seed(cli)?;
    grid.solve.seed = grid.base_seed;
    grid.threads = cli.threads;
    grid.solve.tau = args.tau;
    grid.solve.time_budget = args.budget;
    grid.solve.restarts = args.restarts;
    if let Some(seconds_per_step) = args.virtual_clock {
        grid.solve.time_source = TimeSource::Steps { seconds_per_step };
    }
    let records = run_grid(&grid)?;
    let mut fits = Vec::new();
    for &r in &args.r_values {
        match fit_scaling(&records, r) {
            Ok(fit) => fits.push(fit),
            Err(err) => log::info!("no scaling fit at r = {r}: {err}"),
        }
    }
    let overlay = args.reference_curve.map(|curve| match curve {
        CurveArg::Packing => ReferenceCurve::MassPacking,
        CurveArg::Cg => ReferenceCurve::CgOptimization,
    });
    let written = emit_report(&records, &fits, overlay, &args.out_dir)?;
    let cells = summarize(&records, args.budget);
    let cells_path = args.out_dir.join("cells.csv");
    write_file(&cells_path, &cells_to_csv(&cells))?;
    for path in &written {
        log::info!("wrote {}", path.display());
    }
    let reached = records
        .iter()
        .filter(|rec| rec.status == SolveStatus::TauReached)
        .count();
    let summary = json!({
        "command": "bench",
        "records": records.len(),
        "reached": reached,
        "censored": records.len() - reached,
        "fits": fits,
        "out_dir": args.out_dir.display().to_string(),
    });
    Ok((summary_line(&summary), 0))
}
