//! Two-phase relaying: the BS transmits to the relay (and users) in the first
//! phase, the relay forwards in the second, and each user combines both
//! observations. Minimizes (1/2)tr(W W^H) + (1/2)tr(U U^H) subject to
//! R_R >= 2K R_th and Rbar_k >= 2 R_th by alternating over W, U and the two
//! phase matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::phases::PhaseVector;
use crate::precoding::{
    coupling_blocks, duality_beamforming, effective_channels, fixed_point_phase, hd_user_snrs,
    linearized_phase_step, relay_rate, surrogate_relay_rate, svd_waterfilling, zero_forcing,
    CouplingSide, EffectiveChannels, Precoders, RelaySolver,
};

/// Shared alternating-optimization knobs for both duplex modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub relay_solver: RelaySolver,
    /// Relative total-power change that ends the outer loop.
    pub power_tol: f64,
    /// Convergence tolerance of the inner fixed-point phase iteration.
    pub inner_tol: f64,
    pub max_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            relay_solver: RelaySolver::Duality,
            power_tol: 1e-4,
            inner_tol: 1e-6,
            max_outer: 50,
        }
    }
}

const INNER_MAX_ITERS: usize = 500;

#[derive(Debug, Clone)]
pub struct HalfDuplexSolution {
    pub precoders: Precoders,
    pub theta1: PhaseVector,
    pub theta2: PhaseVector,
    /// (1/2)tr(W W^H) + (1/2)tr(U U^H), linear mW.
    pub total_power: f64,
    pub relay_rate: f64,
    /// Rbar_k = log2(1 + gamma_{k,1} + gamma_{k,2}).
    pub user_rates: Vec<f64>,
    pub power_history: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
}

/// Constraint margins recomputed from scratch; `ok` means every margin is
/// above -1e-6.
#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub relay_rate: f64,
    pub relay_rate_required: f64,
    pub user_rates: Vec<f64>,
    pub user_rate_required: f64,
    pub ok: bool,
}

impl ConstraintReport {
    pub const MARGIN_TOL: f64 = 1e-6;

    pub fn build(
        relay_rate: f64,
        relay_rate_required: f64,
        user_rates: Vec<f64>,
        user_rate_required: f64,
    ) -> Self {
        ConstraintReport {
            relay_rate,
            relay_rate_required,
            user_rates,
            user_rate_required,
            ok: false,
        }
        .finish()
    }

    pub fn relay_margin(&self) -> f64 {
        self.relay_rate - self.relay_rate_required
    }

    pub fn user_margins(&self) -> Vec<f64> {
        self.user_rates.iter().map(|r| r - self.user_rate_required).collect()
    }

    pub fn min_margin(&self) -> f64 {
        self.user_margins()
            .into_iter()
            .fold(self.relay_margin(), f64::min)
    }

    fn finish(mut self) -> Self {
        self.ok = self.min_margin() >= -Self::MARGIN_TOL;
        self
    }
}

/// Residual second-phase SINR target: eta_k = max(0, 2^{2 R_th} - 1 -
/// gamma_{k,1}), the part of the combined-QoS target the relay link must
/// still deliver after the direct BS link's contribution.
pub fn compute_eta(
    ch: &ChannelSet,
    theta1: &PhaseVector,
    w: &DMatrix<Complex64>,
    r_th: f64,
    k: usize,
) -> Result<f64> {
    if k >= ch.num_users() {
        return Err(Error::Dimension(format!("user index {k} out of range")));
    }
    let eff = effective_channels(ch, theta1, theta1)?;
    let gamma1 = first_phase_sinr(&eff, w, ch.noise_power, k);
    Ok(eta_from_gamma(gamma1, r_th))
}

fn eta_from_gamma(gamma1: f64, r_th: f64) -> f64 {
    ((2f64).powf(2.0 * r_th) - 1.0 - gamma1).max(0.0)
}

fn first_phase_sinr(eff: &EffectiveChannels, w: &DMatrix<Complex64>, noise: f64, k: usize) -> f64 {
    let zero_u = DMatrix::zeros(eff.h_ri[k].len(), w.ncols());
    hd_user_snrs(eff, w, &zero_u, noise, k).0
}

/// One decoupled solve of (W, U) for fixed phase matrices: W meets the relay
/// rate 2K R_th by SVD + water-filling, U meets the residual targets eta_k by
/// the configured relay solver. Returns the precoders and the duty-cycled
/// total power.
pub fn solve_precoders_half_duplex(
    ch: &ChannelSet,
    r_th: f64,
    options: &SolverOptions,
    theta1: &PhaseVector,
    theta2: &PhaseVector,
) -> Result<(Precoders, f64)> {
    let k = ch.num_users();
    let eff = effective_channels(ch, theta1, theta2)?;
    let relay_target = 2.0 * k as f64 * r_th;
    let (w, _) = svd_waterfilling(&eff.h_tir, ch.noise_power, relay_target, k)?;

    let targets: Vec<f64> = (0..k)
        .map(|j| eta_from_gamma(first_phase_sinr(&eff, &w, ch.noise_power, j), r_th))
        .collect();
    let noise = vec![ch.noise_power; k];
    let u = match options.relay_solver {
        RelaySolver::Duality => duality_beamforming(&eff.h_ri, &noise, &targets)?,
        RelaySolver::Zf => zero_forcing(&eff.h_ri, &noise, &targets)?,
    };
    let pre = Precoders { w, u };
    let power = 0.5 * pre.total_power();
    Ok((pre, power))
}

/// Alternating minimization over W, U, Theta1, Theta2. Theta1 gets two
/// candidates per outer iteration, one maximizing the relay-rate surrogate
/// and one maximizing the users' combined direct-link signal blocks; the
/// cheaper is kept. Every phase update is reverted if it would raise the
/// total power, so the power history is non-increasing.
pub fn solve_half_duplex(
    ch: &ChannelSet,
    r_th: f64,
    options: &SolverOptions,
) -> Result<HalfDuplexSolution> {
    ch.validate()?;
    if r_th < 0.0 {
        return Err(Error::Domain("rate threshold must be >= 0".into()));
    }
    let l = ch.num_ris_elements();
    let mut theta1 = PhaseVector::identity(l);
    let mut theta2 = PhaseVector::identity(l);

    if r_th == 0.0 {
        let pre = Precoders {
            w: DMatrix::zeros(ch.num_bs_antennas(), ch.num_users()),
            u: DMatrix::zeros(ch.num_relay_antennas(), ch.num_users()),
        };
        return Ok(finish_solution(ch, pre, theta1, theta2, vec![0.0], true, 0));
    }

    let (mut pre, mut power) = solve_precoders_half_duplex(ch, r_th, options, &theta1, &theta2)?;
    let mut history = vec![power];
    let mut converged = false;
    let mut outer = 0;

    for _ in 0..options.max_outer {
        outer += 1;

        // Theta1: candidate from the relay-rate surrogate ...
        let surrogate = surrogate_relay_rate(ch, &theta1, &pre.w, ch.noise_power)?;
        let cand_a = linearized_phase_step(&surrogate, &theta1);
        // ... and from the users' direct-link quadratic blocks.
        let bs_blocks = coupling_blocks(ch, &pre.w, CouplingSide::Bs)?;
        let cand_b = fixed_point_phase(
            &bs_blocks.diagonal_sum(),
            &theta1,
            options.inner_tol,
            INNER_MAX_ITERS,
        )?
        .phase;
        let eval_a = solve_precoders_half_duplex(ch, r_th, options, &cand_a, &theta2);
        let eval_b = solve_precoders_half_duplex(ch, r_th, options, &cand_b, &theta2);
        if let Some((cand, cand_pre, cand_power)) = pick_candidate(
            [(cand_a, eval_a), (cand_b, eval_b)],
        ) {
            if cand_power <= power {
                theta1 = cand;
                pre = cand_pre;
                power = cand_power;
            }
        }

        // Theta2: fixed point on the relay -> user signal blocks.
        let relay_blocks = coupling_blocks(ch, &pre.u, CouplingSide::Relay)?;
        let cand = fixed_point_phase(
            &relay_blocks.diagonal_sum(),
            &theta2,
            options.inner_tol,
            INNER_MAX_ITERS,
        )?
        .phase;
        if let Ok((cand_pre, cand_power)) =
            solve_precoders_half_duplex(ch, r_th, options, &theta1, &cand)
        {
            if cand_power <= power {
                theta2 = cand;
                pre = cand_pre;
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

    // Closing refresh of W and U for the final phases.
    let (pre, power) = solve_precoders_half_duplex(ch, r_th, options, &theta1, &theta2)?;
    if power < *history.last().unwrap() {
        history.push(power);
    }
    Ok(finish_solution(ch, pre, theta1, theta2, history, converged, outer))
}

fn pick_candidate(
    candidates: [(PhaseVector, Result<(Precoders, f64)>); 2],
) -> Option<(PhaseVector, Precoders, f64)> {
    let mut best: Option<(PhaseVector, Precoders, f64)> = None;
    for (phase, eval) in candidates {
        if let Ok((pre, p)) = eval {
            if best.as_ref().map(|(_, _, bp)| p < *bp).unwrap_or(true) {
                best = Some((phase, pre, p));
            }
        }
    }
    best
}

fn finish_solution(
    ch: &ChannelSet,
    pre: Precoders,
    theta1: PhaseVector,
    theta2: PhaseVector,
    history: Vec<f64>,
    converged: bool,
    outer: usize,
) -> HalfDuplexSolution {
    let eff = effective_channels(ch, &theta1, &theta2).expect("phases sized during solve");
    let rr = relay_rate(&eff.h_tir, &pre.w, ch.noise_power);
    let user_rates = (0..ch.num_users())
        .map(|k| {
            let (g1, g2) = hd_user_snrs(&eff, &pre.w, &pre.u, ch.noise_power, k);
            (1.0 + g1 + g2).log2()
        })
        .collect();
    let total_power = 0.5 * pre.total_power();
    HalfDuplexSolution {
        precoders: pre,
        theta1,
        theta2,
        total_power,
        relay_rate: rr,
        user_rates,
        power_history: history,
        converged,
        outer_iterations: outer,
    }
}

/// Recomputes every rate in the solution from the channel set and reports
/// the constraint margins.
pub fn validate_half_duplex(
    ch: &ChannelSet,
    solution: &HalfDuplexSolution,
    r_th: f64,
) -> Result<ConstraintReport> {
    let eff = effective_channels(ch, &solution.theta1, &solution.theta2)?;
    let rr = relay_rate(&eff.h_tir, &solution.precoders.w, ch.noise_power);
    let user_rates: Vec<f64> = (0..ch.num_users())
        .map(|k| {
            let (g1, g2) = hd_user_snrs(&eff, &solution.precoders.w, &solution.precoders.u, ch.noise_power, k);
            (1.0 + g1 + g2).log2()
        })
        .collect();
    Ok(ConstraintReport::build(
        rr,
        2.0 * ch.num_users() as f64 * r_th,
        user_rates,
        2.0 * r_th,
    ))
}
