//! Command-line front end: run a scenario sweep to results tables, verify
//! a solution file against its instance, or print the derived per-phase
//! parameters for an application preset.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fogplace::energy::{evaluate, validate};
use fogplace::exact::{build_model, lp_text};
use fogplace::instance::{Instance, PlacementMode};
use fogplace::power::ProfileCatalog;
use fogplace::scenario::{
    emit_results, load_dataset, point_instances, run_scenario, sig6, ResultsFormat, Scenario,
    SolverChoice,
};
use fogplace::solution::PlacementSolution;
use fogplace::traffic::{derive_phases, AppProfile, PhaseParams};
use fogplace::topology::Topology;

#[derive(Parser)]
#[command(
    name = "fogplace",
    about = "Place telehealth processing servers across a fog/cloud network and price the energy",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario sweep and write CSV + JSON results tables.
    Run(RunArgs),
    /// Check a solution file against its instance and price it.
    Verify(VerifyArgs),
    /// Print the derived per-phase rates and durations for a preset.
    Derive(DeriveArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario definition (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Network topology (JSON).
    #[arg(long)]
    topology: PathBuf,
    /// Device/server power catalog (JSON).
    #[arg(long)]
    profiles: PathBuf,
    /// Override the scenario file's solver.
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Directory for the results tables (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Also write one LP-format model per sweep point into this directory.
    #[arg(long)]
    export_lp: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Placement solution (JSON).
    #[arg(long)]
    solution: PathBuf,
    /// Instance the solution claims to solve (JSON).
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct DeriveArgs {
    /// Application preset.
    #[arg(long, value_enum)]
    app: AppArg,
    /// Where the processing servers sit.
    #[arg(long, value_enum, default_value = "foa")]
    mode: ModeArg,
    /// Population size (defaults to the preset's shipped roster total).
    #[arg(long)]
    patients: Option<u32>,
    /// Fraction of the population one server must handle.
    #[arg(long, default_value = "1.0")]
    share: f64,
    /// Servers allowed on one hosting node.
    #[arg(long, default_value = "1")]
    servers_per_node: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Heuristic,
    Oracle,
}

impl From<SolverArg> for SolverChoice {
    fn from(a: SolverArg) -> Self {
        match a {
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Heuristic => SolverChoice::Heuristic,
            SolverArg::Oracle => SolverChoice::Oracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AppArg {
    Ecg,
    Fall,
}

impl AppArg {
    fn name(self) -> &'static str {
        match self {
            AppArg::Ecg => "ecg",
            AppArg::Fall => "fall",
        }
    }

    /// Shipped West Leeds roster totals, the default derivation population.
    fn default_patients(self) -> u32 {
        match self {
            AppArg::Ecg => 669,
            AppArg::Fall => 140,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Foa,
    Ca,
}

impl From<ModeArg> for PlacementMode {
    fn from(a: ModeArg) -> Self {
        match a {
            ModeArg::Foa => PlacementMode::Foa,
            ModeArg::Ca => PlacementMode::Ca,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::Derive(args) => derive(args),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let mut sc = Scenario::load(&args.scenario).map_err(|e| e.to_string())?;
    if let Some(choice) = args.solver {
        sc.solver = choice.into();
    }
    let topo = Topology::load(&args.topology).map_err(|e| e.to_string())?;
    let catalog = ProfileCatalog::load(&args.profiles).map_err(|e| e.to_string())?;
    let roster =
        load_dataset(sc.dataset_relative_to(&args.scenario)).map_err(|e| e.to_string())?;

    if !sc.note.is_empty() {
        eprintln!("note: {}", sc.note);
    }
    let rows = run_scenario(&sc, &topo, &catalog, &roster).map_err(|e| e.to_string())?;

    fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
    for (ext, format) in [("csv", ResultsFormat::Csv), ("json", ResultsFormat::Structured)] {
        let path = args.out.join(format!("{}.{ext}", sc.name));
        let mut file = fs::File::create(&path)
            .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
        emit_results(&rows, &mut file, format).map_err(|e| e.to_string())?;
        println!("wrote {}", path.display());
    }

    if let Some(dir) = &args.export_lp {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        for (label, inst) in
            point_instances(&sc, &topo, &catalog, &roster).map_err(|e| e.to_string())?
        {
            let (model, _) = build_model(&inst).map_err(|e| e.to_string())?;
            let path = dir.join(format!("{}-{label}.lp", sc.name));
            fs::write(&path, lp_text::export(&model))
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            println!("wrote {}", path.display());
        }
    }

    let mut all_ok = true;
    for row in &rows {
        let saving = row
            .total_saving_pct()
            .map(|p| format!("total saving {}%", sig6(p)))
            .unwrap_or_else(|| "no baseline".into());
        println!(
            "{} [{}] patients={} solver={} status={} {}",
            row.scenario, row.point, row.patients, row.solver, row.status, saving
        );
        all_ok &= row.status == "ok";
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verify(args: VerifyArgs) -> Result<ExitCode, String> {
    let inst = Instance::load(&args.instance).map_err(|e| e.to_string())?;
    let sol = PlacementSolution::load(&args.solution).map_err(|e| e.to_string())?;
    let report = validate(&inst, &sol);
    if !report.is_ok() {
        eprintln!("solution violates the instance constraints:");
        eprint!("{report}");
        return Ok(ExitCode::FAILURE);
    }
    let energy = evaluate(&inst, &sol).map_err(|e| e.to_string())?;
    println!("solution is feasible");
    for (name, value) in [
        ("access", energy.access_j),
        ("metro", energy.metro_j),
        ("core", energy.core_j),
        ("cloud", energy.cloud_j),
        ("switch", energy.fog_switch_j),
        ("servers", energy.servers_j),
        ("network", energy.network_j()),
        ("total", energy.total_j()),
    ] {
        println!("{name:>8}  {} J", sig6(value));
    }
    Ok(ExitCode::SUCCESS)
}

fn derive(args: DeriveArgs) -> Result<ExitCode, String> {
    if !(args.share > 0.0 && args.share <= 1.0) {
        return Err(format!("share {} outside (0, 1]", args.share));
    }
    if args.servers_per_node == 0 {
        return Err("servers-per-node must be at least 1".into());
    }
    let app = AppProfile::preset(args.app.name()).map_err(|e| e.to_string())?;
    let total = args.patients.unwrap_or_else(|| args.app.default_patients());
    if total == 0 {
        return Err("patients must be at least 1".into());
    }
    let omega = ((f64::from(total) * args.share).ceil() as u32).max(1);
    let pat_max = total.min(args.servers_per_node.saturating_mul(omega)).max(1);
    let prb_bps = ProfileCatalog::reference().radio.prb_bps;
    let mode: PlacementMode = args.mode.into();
    let p: PhaseParams =
        derive_phases(&app, mode, omega, pat_max, prb_bps).map_err(|e| e.to_string())?;

    for (name, value) in [
        ("app", app.name.clone()),
        ("mode", format!("{mode:?}").to_lowercase()),
        ("patients", total.to_string()),
        ("omega_max", omega.to_string()),
        ("pat_max", p.pat_max.to_string()),
        ("delta_f_bps", sig6(p.delta_f_bps)),
        ("rb_prbs", p.rb_prbs.to_string()),
        ("delta_b_bps", sig6(p.delta_b_bps)),
        ("tau_b_s", sig6(p.tau_b_s)),
        ("tau_p_s", sig6(p.tau_p_s)),
        ("tau_max_s", sig6(p.tau_max_s)),
        ("delta_min_bps", sig6(p.delta_min_bps)),
        ("ra_prbs", p.ra_prbs.to_string()),
        ("delta_a_bps", sig6(p.delta_a_bps)),
        ("tau_a_s", sig6(p.tau_a_s)),
        ("delta_c_bps", sig6(p.delta_c_bps)),
        ("tau_c_s", sig6(p.tau_c_s)),
    ] {
        println!("{name:<14} {value}");
    }
    Ok(ExitCode::SUCCESS)
}
