//! Single-phase relaying: the BS and the relay transmit simultaneously and
//! users decode the relay signal while treating the BS transmission as noise.
//! Minimizes tr(W W^H) + tr(U U^H) subject to R_R^FD >= K R_th and
//! R_k^FD >= R_th, with one shared phase matrix. Relay self-interference is
//! assumed perfectly cancelled and never enters the rates.

use nalgebra::DMatrix;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::half_duplex::{ConstraintReport, SolverOptions};
use crate::phases::PhaseVector;
use crate::precoding::{
    coupling_blocks, duality_beamforming, effective_channels, fd_user_sinr, fixed_point_phase,
    linearized_phase_step, relay_rate, surrogate_relay_rate, svd_waterfilling, zero_forcing,
    CouplingSide, Precoders, RelaySolver,
};

const INNER_MAX_ITERS: usize = 500;

#[derive(Debug, Clone)]
pub struct FullDuplexSolution {
    pub precoders: Precoders,
    pub theta: PhaseVector,
    /// tr(W W^H) + tr(U U^H), linear mW.
    pub total_power: f64,
    pub relay_rate: f64,
    /// R_k^FD = log2(1 + SINR_k) with the BS interference counted.
    pub user_rates: Vec<f64>,
    pub power_history: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
}

/// One decoupled solve of (W, U) for a fixed phase matrix. W meets the relay
/// rate K R_th; U meets the SINR target 2^{R_th} - 1 per user against the
/// effective noise nu_k = sum_i |h_TI,k^H w_i|^2 + sigma^2.
pub fn solve_precoders_full_duplex(
    ch: &ChannelSet,
    r_th: f64,
    options: &SolverOptions,
    theta: &PhaseVector,
) -> Result<(Precoders, f64)> {
    let k = ch.num_users();
    let eff = effective_channels(ch, theta, theta)?;
    let (w, _) = svd_waterfilling(&eff.h_tir, ch.noise_power, k as f64 * r_th, k)?;

    let eta = (2f64).powf(r_th) - 1.0;
    let noise: Vec<f64> = (0..k)
        .map(|j| {
            let bs: f64 = w
                .column_iter()
                .map(|wi| eff.h_ti[j].dotc(&wi).norm_sqr())
                .sum();
            bs + ch.noise_power
        })
        .collect();
    let targets = vec![eta; k];
    let u = match options.relay_solver {
        RelaySolver::Duality => duality_beamforming(&eff.h_ri, &noise, &targets)?,
        RelaySolver::Zf => zero_forcing(&eff.h_ri, &noise, &targets)?,
    };
    let pre = Precoders { w, u };
    let power = pre.total_power();
    Ok((pre, power))
}

/// Alternating minimization over W, U and the shared phase matrix. Two phase
/// candidates per outer iteration, one from the relay-rate surrogate and one
/// from the users' relay-link signal blocks; accept-guards keep the power
/// history non-increasing.
pub fn solve_full_duplex(
    ch: &ChannelSet,
    r_th: f64,
    options: &SolverOptions,
) -> Result<FullDuplexSolution> {
    ch.validate()?;
    if r_th < 0.0 {
        return Err(Error::Domain("rate threshold must be >= 0".into()));
    }
    let l = ch.num_ris_elements();
    let mut theta = PhaseVector::identity(l);

    if r_th == 0.0 {
        let pre = Precoders {
            w: DMatrix::zeros(ch.num_bs_antennas(), ch.num_users()),
            u: DMatrix::zeros(ch.num_relay_antennas(), ch.num_users()),
        };
        return Ok(finish_solution(ch, pre, theta, vec![0.0], true, 0));
    }

    let (mut pre, mut power) = solve_precoders_full_duplex(ch, r_th, options, &theta)?;
    let mut history = vec![power];
    let mut converged = false;
    let mut outer = 0;

    for _ in 0..options.max_outer {
        outer += 1;

        let surrogate = surrogate_relay_rate(ch, &theta, &pre.w, ch.noise_power)?;
        let cand_a = linearized_phase_step(&surrogate, &theta);
        let relay_blocks = coupling_blocks(ch, &pre.u, CouplingSide::Relay)?;
        let cand_b = fixed_point_phase(
            &relay_blocks.diagonal_sum(),
            &theta,
            options.inner_tol,
            INNER_MAX_ITERS,
        )?
        .phase;

        let mut best: Option<(PhaseVector, Precoders, f64)> = None;
        for cand in [cand_a, cand_b] {
            if let Ok((cand_pre, cand_power)) =
                solve_precoders_full_duplex(ch, r_th, options, &cand)
            {
                if best.as_ref().map(|(_, _, bp)| cand_power < *bp).unwrap_or(true) {
                    best = Some((cand, cand_pre, cand_power));
                }
            }
        }
        if let Some((cand, cand_pre, cand_power)) = best {
            if cand_power <= power {
                theta = cand;
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

    let (pre, power) = solve_precoders_full_duplex(ch, r_th, options, &theta)?;
    if power < *history.last().unwrap() {
        history.push(power);
    }
    Ok(finish_solution(ch, pre, theta, history, converged, outer))
}

fn finish_solution(
    ch: &ChannelSet,
    pre: Precoders,
    theta: PhaseVector,
    history: Vec<f64>,
    converged: bool,
    outer: usize,
) -> FullDuplexSolution {
    let eff = effective_channels(ch, &theta, &theta).expect("phase sized during solve");
    let rr = relay_rate(&eff.h_tir, &pre.w, ch.noise_power);
    let user_rates = (0..ch.num_users())
        .map(|k| (1.0 + fd_user_sinr(&eff, &pre.w, &pre.u, ch.noise_power, k)).log2())
        .collect();
    let total_power = pre.total_power();
    FullDuplexSolution {
        precoders: pre,
        theta,
        total_power,
        relay_rate: rr,
        user_rates,
        power_history: history,
        converged,
        outer_iterations: outer,
    }
}

/// Recomputes the relay rate and every user rate from the channel set and
/// reports the constraint margins against K R_th and R_th.
pub fn validate_full_duplex(
    ch: &ChannelSet,
    solution: &FullDuplexSolution,
    r_th: f64,
) -> Result<ConstraintReport> {
    let eff = effective_channels(ch, &solution.theta, &solution.theta)?;
    let rr = relay_rate(&eff.h_tir, &solution.precoders.w, ch.noise_power);
    let user_rates: Vec<f64> = (0..ch.num_users())
        .map(|k| {
            (1.0 + fd_user_sinr(&eff, &solution.precoders.w, &solution.precoders.u, ch.noise_power, k))
                .log2()
        })
        .collect();
    Ok(ConstraintReport::build(
        rr,
        ch.num_users() as f64 * r_th,
        user_rates,
        r_th,
    ))
}
