use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use risrelay::channel::generate_scenario;
use risrelay::discrete::{brute_force_oracle, DuplexMode};
use risrelay::sim::{
    run_experiment_to_files, ExperimentConfig, PhaseSolverKind, Placement, SimMode, CSV_HEADER,
};
use risrelay::SolverOptions;

#[derive(Parser)]
#[command(name = "risrelay", version, about = "Minimum-power beamforming and RIS phase design for a relay-aided multiuser downlink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured Monte Carlo sweep and write CSV results.
    Simulate(SimulateArgs),
    /// Re-run the experiment behind a CSV file and check it row by row.
    Validate(ValidateArgs),
    /// Exhaustively search the discrete phase configurations of one scenario.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hd,
    Fd,
    RelayOnly,
    RisOnly,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hd => SimMode::Hd,
            ModeArg::Fd => SimMode::Fd,
            ModeArg::RelayOnly => SimMode::RelayOnly,
            ModeArg::RisOnly => SimMode::RisOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Duality,
    Zf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseSolverArg {
    Continuous,
    Quantized,
    Refinement,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    UsersCenter,
    Midpoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum DuplexArg {
    Hd,
    Fd,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file mirroring the ExperimentConfig fields; defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    solver: Option<SolverArg>,
    #[arg(long)]
    phase_solver: Option<PhaseSolverArg>,
    /// Bits per element for discrete phase solvers.
    #[arg(long)]
    b: Option<u32>,
    /// QoS sweep values, bits per symbol.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    rth: Option<Vec<f64>>,
    /// RIS size sweep values.
    #[arg(long = "L", value_delimiter = ',', num_args = 1..)]
    l: Option<Vec<usize>>,
    /// User count sweep values.
    #[arg(long = "K", value_delimiter = ',', num_args = 1..)]
    k: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    placement: Option<PlacementArg>,
    /// Output CSV path; the summary lands next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// CSV produced by `simulate`.
    #[arg(long = "in")]
    input: PathBuf,
    /// The config the CSV was produced with.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "fd")]
    mode: DuplexArg,
    #[arg(long, default_value_t = 1.0)]
    rth: f64,
    #[arg(long, default_value_t = 1)]
    b: u32,
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long = "L", default_value_t = 4)]
    l: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "users-center")]
    placement: PlacementArg,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, String> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_overrides(config: &mut ExperimentConfig, args: &SimulateArgs) -> Result<(), String> {
    let sweep_flags =
        [args.rth.is_some(), args.l.is_some(), args.k.is_some()].iter().filter(|&&s| s).count();
    if sweep_flags > 1 {
        return Err("pass at most one of --rth, --L, --K".into());
    }
    if let Some(m) = args.mode {
        config.mode = m.into();
    }
    if let Some(s) = args.solver {
        config.solver = match s {
            SolverArg::Duality => risrelay::precoding::RelaySolver::Duality,
            SolverArg::Zf => risrelay::precoding::RelaySolver::Zf,
        };
    }
    if let Some(p) = args.phase_solver {
        config.phase_solver = match p {
            PhaseSolverArg::Continuous => PhaseSolverKind::Continuous,
            PhaseSolverArg::Quantized => PhaseSolverKind::Quantized,
            PhaseSolverArg::Refinement => PhaseSolverKind::Refinement,
        };
    }
    if let Some(b) = args.b {
        config.b = b;
    }
    if let Some(v) = &args.rth {
        config.rth_values = Some(v.clone());
        config.l_values = None;
        config.k_values = None;
    }
    if let Some(v) = &args.l {
        config.l_values = Some(v.clone());
        config.rth_values = None;
        config.k_values = None;
    }
    if let Some(v) = &args.k {
        config.k_values = Some(v.clone());
        config.rth_values = None;
        config.l_values = None;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(p) = args.placement {
        config.placement = match p {
            PlacementArg::UsersCenter => Placement::UsersCenter,
            PlacementArg::Midpoint => Placement::Midpoint,
        };
    }
    if let Some(out) = &args.out {
        config.out = Some(out.to_string_lossy().into_owned());
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), String> {
    let mut config = load_config(&args.config)?;
    apply_overrides(&mut config, &args)?;
    let out = run_experiment_to_files(&config).map_err(|e| e.to_string())?;
    match &config.out {
        Some(path) => eprintln!("wrote {} rows to {path}", out.rows.len()),
        None => print!("{}", out.csv()),
    }
    for s in &out.summary {
        eprintln!(
            "sweep={} trials={} converged={} mean_power_dbm={:.3}",
            s.sweep_value, s.trials, s.converged_trials, s.mean_power_dbm
        );
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), String> {
    let mut config = load_config(&args.config)?;
    config.out = None;
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| format!("cannot read {}: {e}", args.input.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    if header != CSV_HEADER {
        return Err(format!("unexpected header: {header}"));
    }
    let expected = risrelay::sim::run_experiment(&config).map_err(|e| e.to_string())?;
    let expected_lines: Vec<String> = expected.rows.iter().map(|r| r.to_csv_line()).collect();
    let got_lines: Vec<&str> = lines.collect();
    if got_lines.len() != expected_lines.len() {
        return Err(format!(
            "row count {} does not match the {} rows the config reproduces",
            got_lines.len(),
            expected_lines.len()
        ));
    }
    let mut mismatches = 0;
    for (i, (got, want)) in got_lines.iter().zip(&expected_lines).enumerate() {
        if *got != want {
            mismatches += 1;
            eprintln!("row {i}: file has `{got}`, reproduction has `{want}`");
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} mismatching rows"));
    }
    println!("{} rows verified against the config", got_lines.len());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), String> {
    let geometry = match args.placement {
        PlacementArg::UsersCenter => {
            risrelay::channel::SystemGeometry::users_center(args.m, args.n, args.k, args.l)
        }
        PlacementArg::Midpoint => {
            risrelay::channel::SystemGeometry::midpoint(args.m, args.n, args.k, args.l)
        }
    };
    let ch = generate_scenario(
        &geometry,
        &risrelay::channel::FadingParams::default(),
        args.seed,
    )
    .map_err(|e| e.to_string())?;
    let mode = match args.mode {
        DuplexArg::Hd => DuplexMode::Hd,
        DuplexArg::Fd => DuplexMode::Fd,
    };
    let sol = brute_force_oracle(&ch, mode, args.rth, args.b, &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    println!("total_power_mw={:.12e}", sol.total_power);
    println!("stage_solves={}", sol.stage_solves);
    println!("theta1={:?}", sol.theta1.extract_phases());
    if let Some(t2) = &sol.theta2 {
        println!("theta2={:?}", t2.extract_phases());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
