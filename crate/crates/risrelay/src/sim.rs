//! Experiment engine: builds seeded scenarios, sweeps one parameter (QoS
//! threshold, RIS size, or user count), solves each trial per the configured
//! protocol and solver, and emits a CSV table plus a per-sweep-value summary.
//! Identical (config, seed) pairs produce byte-identical output.

use serde::{Deserialize, Serialize};

use crate::channel::{generate_scenario, near_square_layout, ChannelSet, FadingParams, SystemGeometry};
use crate::discrete::{successive_refinement, DuplexMode};
use crate::error::{Error, Result};
use crate::full_duplex::{solve_full_duplex, validate_full_duplex, FullDuplexSolution};
use crate::half_duplex::{
    solve_half_duplex, validate_half_duplex, ConstraintReport, HalfDuplexSolution, SolverOptions,
};
use crate::phases::{quantize_phases, PhaseVector};
use crate::precoding::{
    coupling_blocks, duality_beamforming, effective_channels, fixed_point_phase, CouplingSide,
    Precoders, RelaySolver,
};

/// System configuration under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Hd,
    Fd,
    RelayOnly,
    RisOnly,
}

impl SimMode {
    pub fn label(&self) -> &'static str {
        match self {
            SimMode::Hd => "hd",
            SimMode::Fd => "fd",
            SimMode::RelayOnly => "relay-only",
            SimMode::RisOnly => "ris-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSolverKind {
    Continuous,
    Quantized,
    Refinement,
}

impl PhaseSolverKind {
    pub fn label(&self) -> &'static str {
        match self {
            PhaseSolverKind::Continuous => "continuous",
            PhaseSolverKind::Quantized => "quantized",
            PhaseSolverKind::Refinement => "refinement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    UsersCenter,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: SimMode,
    pub solver: RelaySolver,
    pub phase_solver: PhaseSolverKind,
    /// Bits per element for the discrete phase solvers.
    pub b: u32,
    /// QoS threshold used when the sweep variable is L or K.
    pub rth: f64,
    pub rth_values: Option<Vec<f64>>,
    pub l_values: Option<Vec<usize>>,
    pub k_values: Option<Vec<usize>>,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub trials: usize,
    pub seed: u64,
    pub placement: Placement,
    pub fading: FadingParams,
    /// Which protocol the relay-only baseline duty-cycles under.
    pub relay_only_duplex: DuplexMode,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: SimMode::Fd,
            solver: RelaySolver::Duality,
            phase_solver: PhaseSolverKind::Continuous,
            b: 3,
            rth: 1.0,
            rth_values: Some(vec![1.0]),
            l_values: None,
            k_values: None,
            m: 5,
            n: 5,
            k: 4,
            l: 50,
            trials: 100,
            seed: 0,
            placement: Placement::UsersCenter,
            fading: FadingParams::default(),
            relay_only_duplex: DuplexMode::Fd,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    RateThreshold,
    RisElements,
    Users,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let sweeps = [
            self.rth_values.is_some(),
            self.l_values.is_some(),
            self.k_values.is_some(),
        ];
        if sweeps.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config("exactly one of rth_values, l_values, k_values must be set".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.rth < 0.0 {
            return Err(Error::Config("rth must be >= 0".into()));
        }
        self.fading.validate()?;
        Ok(())
    }

    pub fn sweep(&self) -> (SweepVariable, Vec<f64>) {
        if let Some(v) = &self.rth_values {
            (SweepVariable::RateThreshold, v.clone())
        } else if let Some(v) = &self.l_values {
            (SweepVariable::RisElements, v.iter().map(|&x| x as f64).collect())
        } else {
            (
                SweepVariable::Users,
                self.k_values.as_ref().unwrap().iter().map(|&x| x as f64).collect(),
            )
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            relay_solver: self.solver,
            ..SolverOptions::default()
        }
    }

    fn geometry(&self, sweep: SweepVariable, value: f64) -> SystemGeometry {
        let (m, n) = (self.m, self.n);
        let mut k = self.k;
        let mut l = self.l;
        match sweep {
            SweepVariable::RateThreshold => {}
            SweepVariable::RisElements => l = value as usize,
            SweepVariable::Users => k = value as usize,
        }
        if self.mode == SimMode::RelayOnly {
            l = 0;
        }
        let mut g = match self.placement {
            Placement::UsersCenter => SystemGeometry::users_center(m, n, k, l),
            Placement::Midpoint => SystemGeometry::midpoint(m, n, k, l),
        };
        g.ris_array = near_square_layout(l);
        g
    }

    fn rate_threshold(&self, sweep: SweepVariable, value: f64) -> f64 {
        match sweep {
            SweepVariable::RateThreshold => value,
            _ => self.rth,
        }
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: SimMode,
    pub solver: RelaySolver,
    pub phase_solver: PhaseSolverKind,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub total_power_mw: f64,
    pub total_power_dbm: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Smallest delivered per-user rate, in the same units as the QoS
    /// threshold (half-duplex rates are divided by two).
    pub achieved_min_rate: f64,
}

pub const CSV_HEADER: &str = "mode,solver,phase_solver,sweep_value,trial,seed,total_power_mw,total_power_dbm,outer_iterations,converged,achieved_min_rate";

/// Per-sweep-value aggregate; powers are averaged in linear mW before the
/// dBm conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub trials: usize,
    pub converged_trials: usize,
    pub mean_power_mw: f64,
    pub mean_power_dbm: f64,
}

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

fn solver_label(s: RelaySolver) -> &'static str {
    match s {
        RelaySolver::Duality => "duality",
        RelaySolver::Zf => "zf",
    }
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.mode.label(),
            solver_label(self.solver),
            self.phase_solver.label(),
            fmt_float(self.sweep_value),
            self.trial,
            self.seed,
            fmt_float(self.total_power_mw),
            fmt_float(self.total_power_dbm),
            self.outer_iterations,
            self.converged,
            fmt_float(self.achieved_min_rate),
        )
    }
}

pub fn dbm_from_mw(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Single-hop baseline without the relay: the BS serves the users directly
/// through the surface, alternating duality beamforming with fixed-point
/// phase updates on the direct-link signal blocks.
#[derive(Debug, Clone)]
pub struct RisOnlySolution {
    pub w: nalgebra::DMatrix<num_complex::Complex64>,
    pub theta: PhaseVector,
    pub total_power: f64,
    pub user_rates: Vec<f64>,
    pub power_history: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
}

fn ris_only_stage(
    ch: &ChannelSet,
    r_th: f64,
    theta: &PhaseVector,
) -> Result<(nalgebra::DMatrix<num_complex::Complex64>, f64)> {
    let k = ch.num_users();
    let eff = effective_channels(ch, theta, theta)?;
    let eta = (2f64).powf(r_th) - 1.0;
    let noise = vec![ch.noise_power; k];
    let w = duality_beamforming(&eff.h_ti, &noise, &vec![eta; k])?;
    let power = w.norm_squared();
    Ok((w, power))
}

pub fn solve_ris_only(ch: &ChannelSet, r_th: f64, options: &SolverOptions) -> Result<RisOnlySolution> {
    ch.validate()?;
    if r_th < 0.0 {
        return Err(Error::Domain("rate threshold must be >= 0".into()));
    }
    let l = ch.num_ris_elements();
    let mut theta = PhaseVector::identity(l);
    let (mut w, mut power) = ris_only_stage(ch, r_th, &theta)?;
    let mut history = vec![power];
    let mut converged = r_th == 0.0;
    let mut outer = 0;

    if !converged {
        for _ in 0..options.max_outer {
            outer += 1;
            let blocks = coupling_blocks(ch, &w, CouplingSide::Bs)?;
            let cand = fixed_point_phase(&blocks.diagonal_sum(), &theta, options.inner_tol, 500)?.phase;
            if let Ok((cand_w, cand_power)) = ris_only_stage(ch, r_th, &cand) {
                if cand_power <= power {
                    theta = cand;
                    w = cand_w;
                    power = cand_power;
                }
            }
            let prev = *history.last().unwrap();
            history.push(power);
            if (prev - power).abs() <= options.power_tol * prev.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }

    let eff = effective_channels(ch, &theta, &theta)?;
    let user_rates = (0..ch.num_users())
        .map(|k| {
            let mut sig = 0.0;
            let mut intf = 0.0;
            for (i, wi) in w.column_iter().enumerate() {
                let p = eff.h_ti[k].dotc(&wi).norm_sqr();
                if i == k {
                    sig = p;
                } else {
                    intf += p;
                }
            }
            (1.0 + sig / (intf + ch.noise_power)).log2()
        })
        .collect();
    Ok(RisOnlySolution {
        w,
        theta,
        total_power: power,
        user_rates,
        power_history: history,
        converged,
        outer_iterations: outer,
    })
}

/// Baseline dispatcher for the two reduced systems.
#[derive(Debug, Clone)]
pub enum BaselineSolution {
    RelayOnlyHd(HalfDuplexSolution),
    RelayOnlyFd(FullDuplexSolution),
    RisOnly(RisOnlySolution),
}

impl BaselineSolution {
    pub fn total_power(&self) -> f64 {
        match self {
            BaselineSolution::RelayOnlyHd(s) => s.total_power,
            BaselineSolution::RelayOnlyFd(s) => s.total_power,
            BaselineSolution::RisOnly(s) => s.total_power,
        }
    }
}

pub fn baseline_solve(
    ch: &ChannelSet,
    mode: SimMode,
    relay_only_duplex: DuplexMode,
    r_th: f64,
    options: &SolverOptions,
) -> Result<BaselineSolution> {
    match mode {
        SimMode::RelayOnly => {
            let dead = ch.with_dead_ris();
            match relay_only_duplex {
                DuplexMode::Hd => Ok(BaselineSolution::RelayOnlyHd(solve_half_duplex(&dead, r_th, options)?)),
                DuplexMode::Fd => Ok(BaselineSolution::RelayOnlyFd(solve_full_duplex(&dead, r_th, options)?)),
            }
        }
        SimMode::RisOnly => Ok(BaselineSolution::RisOnly(solve_ris_only(ch, r_th, options)?)),
        _ => Err(Error::Config("baseline_solve handles relay-only and ris-only".into())),
    }
}

struct TrialOutcome {
    power_mw: f64,
    outer_iterations: usize,
    converged: bool,
    min_rate: f64,
    valid: bool,
}

fn hd_outcome(ch: &ChannelSet, sol: &HalfDuplexSolution, r_th: f64) -> Result<TrialOutcome> {
    let report = validate_half_duplex(ch, sol, r_th)?;
    Ok(TrialOutcome {
        power_mw: sol.total_power,
        outer_iterations: sol.outer_iterations,
        converged: sol.converged,
        min_rate: report.user_rates.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
        valid: report.ok,
    })
}

fn fd_outcome(ch: &ChannelSet, sol: &FullDuplexSolution, r_th: f64) -> Result<TrialOutcome> {
    let report = validate_full_duplex(ch, sol, r_th)?;
    Ok(TrialOutcome {
        power_mw: sol.total_power,
        outer_iterations: sol.outer_iterations,
        converged: sol.converged,
        min_rate: report.user_rates.iter().cloned().fold(f64::INFINITY, f64::min),
        valid: report.ok,
    })
}

fn discrete_outcome(
    ch: &ChannelSet,
    mode: DuplexMode,
    theta1: &PhaseVector,
    theta2: &PhaseVector,
    pre: Precoders,
    power: f64,
    cont_iterations: usize,
    cont_converged: bool,
    r_th: f64,
) -> Result<TrialOutcome> {
    match mode {
        DuplexMode::Hd => {
            let sol = HalfDuplexSolution {
                precoders: pre,
                theta1: theta1.clone(),
                theta2: theta2.clone(),
                total_power: power,
                relay_rate: 0.0,
                user_rates: Vec::new(),
                power_history: vec![power],
                converged: cont_converged,
                outer_iterations: cont_iterations,
            };
            hd_outcome(ch, &sol, r_th)
        }
        DuplexMode::Fd => {
            let sol = FullDuplexSolution {
                precoders: pre,
                theta: theta1.clone(),
                total_power: power,
                relay_rate: 0.0,
                user_rates: Vec::new(),
                power_history: vec![power],
                converged: cont_converged,
                outer_iterations: cont_iterations,
            };
            fd_outcome(ch, &sol, r_th)
        }
    }
}

fn run_trial(config: &ExperimentConfig, ch: &ChannelSet, r_th: f64) -> Result<TrialOutcome> {
    let options = config.solver_options();
    match config.mode {
        SimMode::Hd => {
            let sol = solve_half_duplex(ch, r_th, &options)?;
            match config.phase_solver {
                PhaseSolverKind::Continuous => hd_outcome(ch, &sol, r_th),
                PhaseSolverKind::Quantized => {
                    let q1 = PhaseVector::from_phases(&quantize_phases(
                        &sol.theta1.extract_phases(),
                        config.b,
                    )?);
                    let q2 = PhaseVector::from_phases(&quantize_phases(
                        &sol.theta2.extract_phases(),
                        config.b,
                    )?);
                    let (pre, power) = crate::half_duplex::solve_precoders_half_duplex(
                        ch, r_th, &options, &q1, &q2,
                    )?;
                    discrete_outcome(
                        ch,
                        DuplexMode::Hd,
                        &q1,
                        &q2,
                        pre,
                        power,
                        sol.outer_iterations,
                        sol.converged,
                        r_th,
                    )
                }
                PhaseSolverKind::Refinement => {
                    let refined = successive_refinement(
                        ch,
                        DuplexMode::Hd,
                        r_th,
                        config.b,
                        &sol.theta1.extract_phases(),
                        Some(&sol.theta2.extract_phases()),
                        &options,
                    )?;
                    let theta2 = refined.theta2.clone().expect("hd refinement keeps theta2");
                    discrete_outcome(
                        ch,
                        DuplexMode::Hd,
                        &refined.theta1,
                        &theta2,
                        refined.precoders,
                        refined.total_power,
                        sol.outer_iterations,
                        sol.converged,
                        r_th,
                    )
                }
            }
        }
        SimMode::Fd => {
            let sol = solve_full_duplex(ch, r_th, &options)?;
            match config.phase_solver {
                PhaseSolverKind::Continuous => fd_outcome(ch, &sol, r_th),
                PhaseSolverKind::Quantized => {
                    let q = PhaseVector::from_phases(&quantize_phases(
                        &sol.theta.extract_phases(),
                        config.b,
                    )?);
                    let (pre, power) = crate::full_duplex::solve_precoders_full_duplex(
                        ch, r_th, &options, &q,
                    )?;
                    discrete_outcome(
                        ch,
                        DuplexMode::Fd,
                        &q,
                        &q,
                        pre,
                        power,
                        sol.outer_iterations,
                        sol.converged,
                        r_th,
                    )
                }
                PhaseSolverKind::Refinement => {
                    let refined = successive_refinement(
                        ch,
                        DuplexMode::Fd,
                        r_th,
                        config.b,
                        &sol.theta.extract_phases(),
                        None,
                        &options,
                    )?;
                    let theta = refined.theta1.clone();
                    discrete_outcome(
                        ch,
                        DuplexMode::Fd,
                        &theta,
                        &theta,
                        refined.precoders,
                        refined.total_power,
                        sol.outer_iterations,
                        sol.converged,
                        r_th,
                    )
                }
            }
        }
        SimMode::RelayOnly | SimMode::RisOnly => {
            if config.phase_solver != PhaseSolverKind::Continuous && config.mode == SimMode::RisOnly
            {
                return Err(Error::Config(
                    "ris-only supports the continuous phase solver only".into(),
                ));
            }
            match baseline_solve(ch, config.mode, config.relay_only_duplex, r_th, &options)? {
                BaselineSolution::RelayOnlyHd(sol) => hd_outcome(&ch.with_dead_ris(), &sol, r_th),
                BaselineSolution::RelayOnlyFd(sol) => fd_outcome(&ch.with_dead_ris(), &sol, r_th),
                BaselineSolution::RisOnly(sol) => {
                    let min_rate = sol.user_rates.iter().cloned().fold(f64::INFINITY, f64::min);
                    let report = ConstraintReport::build(
                        f64::INFINITY,
                        0.0,
                        sol.user_rates.clone(),
                        r_th,
                    );
                    Ok(TrialOutcome {
                        power_mw: sol.total_power,
                        outer_iterations: sol.outer_iterations,
                        converged: sol.converged,
                        min_rate,
                        valid: report.ok,
                    })
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl RunOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }

    /// Summary table; mean power is averaged in linear mW, then converted to
    /// dBm, as stated in the leading comment line.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "# mean_power_dbm = 10*log10(mean of total_power_mw), averaged in linear mW\n",
        );
        out.push_str("sweep_value,trials,converged_trials,mean_power_mw,mean_power_dbm\n");
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_float(s.sweep_value),
                s.trials,
                s.converged_trials,
                fmt_float(s.mean_power_mw),
                fmt_float(s.mean_power_dbm),
            ));
        }
        out
    }
}

/// Runs every (sweep value, trial) cell of the configured experiment. Trial
/// t always draws the scenario from seed `config.seed + t`, so runs with
/// different modes pair channel realizations trial by trial. Non-converged
/// or constraint-violating trials are flagged in their rows, never dropped.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let (sweep, values) = config.sweep();
    let mut rows = Vec::new();
    let mut summary = Vec::new();

    for &value in &values {
        let geometry = config.geometry(sweep, value);
        geometry.validate()?;
        let r_th = config.rate_threshold(sweep, value);
        let mut power_sum = 0.0;
        let mut converged_trials = 0;
        for t in 0..config.trials {
            let seed = config.seed + t as u64;
            let ch = generate_scenario(&geometry, &config.fading, seed)?;
            let outcome = run_trial(config, &ch, r_th)?;
            power_sum += outcome.power_mw;
            let converged = outcome.converged && outcome.valid;
            if converged {
                converged_trials += 1;
            }
            rows.push(ResultRow {
                mode: config.mode,
                solver: config.solver,
                phase_solver: config.phase_solver,
                sweep_value: value,
                trial: t,
                seed,
                total_power_mw: outcome.power_mw,
                total_power_dbm: dbm_from_mw(outcome.power_mw),
                outer_iterations: outcome.outer_iterations,
                converged,
                achieved_min_rate: outcome.min_rate,
            });
        }
        let mean_mw = power_sum / config.trials as f64;
        summary.push(SummaryRow {
            sweep_value: value,
            trials: config.trials,
            converged_trials,
            mean_power_mw: mean_mw,
            mean_power_dbm: dbm_from_mw(mean_mw),
        });
    }
    Ok(RunOutput { rows, summary })
}

/// Runs the experiment and writes `<out>.csv`-style files: the row table at
/// the configured path and the summary next to it with a `.summary.csv`
/// suffix. Returns the written row table.
pub fn run_experiment_to_files(config: &ExperimentConfig) -> Result<RunOutput> {
    let out = run_experiment(config)?;
    if let Some(path) = &config.out {
        std::fs::write(path, out.csv())?;
        let summary_path = if let Some(stripped) = path.strip_suffix(".csv") {
            format!("{stripped}.summary.csv")
        } else {
            format!("{path}.summary.csv")
        };
        std::fs::write(summary_path, out.summary_csv())?;
    }
    Ok(out)
}
