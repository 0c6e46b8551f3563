//! Discrete phase shifts: each element picks its phase from
//! F = {0, dt, ..., (2^b - 1) dt}, dt = 2pi / 2^b. A continuous solution is
//! quantized to the nearest levels, then refined one element at a time with a
//! full precoder re-solve per candidate level.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::full_duplex::solve_precoders_full_duplex;
use crate::half_duplex::{solve_precoders_half_duplex, SolverOptions};
use crate::phases::{DiscretePhaseConfig, PhaseVector};
use crate::precoding::Precoders;

/// Relaying protocol selector for the discrete search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplexMode {
    Hd,
    Fd,
}

#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub mode: DuplexMode,
    pub theta1: PhaseVector,
    /// Second phase matrix; present only in half-duplex mode.
    pub theta2: Option<PhaseVector>,
    pub precoders: Precoders,
    /// Duty-cycled in half-duplex mode, plain sum in full-duplex mode.
    pub total_power: f64,
    /// Number of full precoder re-solves performed.
    pub stage_solves: usize,
}

const DEFAULT_MAX_SWEEPS: usize = 3;

fn stage_power(
    ch: &ChannelSet,
    mode: DuplexMode,
    r_th: f64,
    options: &SolverOptions,
    t1: &PhaseVector,
    t2: &PhaseVector,
) -> Result<(Precoders, f64)> {
    match mode {
        DuplexMode::Hd => solve_precoders_half_duplex(ch, r_th, options, t1, t2),
        DuplexMode::Fd => solve_precoders_full_duplex(ch, r_th, options, t1),
    }
}

/// Coordinate descent over the discrete level set: quantizes `init1` (and
/// `init2` in half-duplex mode) to the nearest levels, then sweeps the 2L
/// (half-duplex) or L (full-duplex) elements in ascending index order,
/// trying every level with a full precoder re-solve and keeping the cheapest.
/// Sweeps repeat until one changes nothing or `DEFAULT_MAX_SWEEPS` is hit.
pub fn successive_refinement(
    ch: &ChannelSet,
    mode: DuplexMode,
    r_th: f64,
    b: u32,
    init1: &[f64],
    init2: Option<&[f64]>,
    options: &SolverOptions,
) -> Result<DiscreteSolution> {
    let l = ch.num_ris_elements();
    let cfg = DiscretePhaseConfig::new(b)?;
    if init1.len() != l {
        return Err(Error::Dimension(format!("init1 length {} vs L = {l}", init1.len())));
    }
    let mut phases1: Vec<f64> = init1.iter().map(|&t| cfg.quantize_angle(t)).collect();
    let mut phases2: Vec<f64> = match (mode, init2) {
        (DuplexMode::Hd, Some(p2)) if p2.len() == l => {
            p2.iter().map(|&t| cfg.quantize_angle(t)).collect()
        }
        (DuplexMode::Hd, _) => {
            return Err(Error::Config("half-duplex refinement needs a second init of length L".into()));
        }
        (DuplexMode::Fd, None) => Vec::new(),
        (DuplexMode::Fd, Some(_)) => {
            return Err(Error::Config("full-duplex refinement takes a single phase vector".into()));
        }
    };

    let levels = cfg.levels();
    let mut stage_solves = 0usize;
    let mut eval = |p1: &[f64], p2: &[f64]| -> Result<(Precoders, f64)> {
        let t1 = PhaseVector::from_phases(p1);
        let t2 = match mode {
            DuplexMode::Hd => PhaseVector::from_phases(p2),
            DuplexMode::Fd => t1.clone(),
        };
        stage_solves += 1;
        stage_power(ch, mode, r_th, options, &t1, &t2)
    };

    let (mut pre, mut power) = eval(&phases1, &phases2)?;
    for _ in 0..DEFAULT_MAX_SWEEPS {
        let mut changed = false;
        let element_count = match mode {
            DuplexMode::Hd => 2 * l,
            DuplexMode::Fd => l,
        };
        for e in 0..element_count {
            let (slot, idx) = if e < l { (0, e) } else { (1, e - l) };
            let mut current = if slot == 0 { phases1[idx] } else { phases2[idx] };
            for &level in &levels {
                if level == current {
                    continue;
                }
                if slot == 0 {
                    phases1[idx] = level;
                } else {
                    phases2[idx] = level;
                }
                let (cand_pre, cand_power) = eval(&phases1, &phases2)?;
                if cand_power < power {
                    pre = cand_pre;
                    power = cand_power;
                    current = level;
                    changed = true;
                } else {
                    // Revert to the best level seen so far for this element.
                    if slot == 0 {
                        phases1[idx] = current;
                    } else {
                        phases2[idx] = current;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let theta1 = PhaseVector::from_phases(&phases1);
    let theta2 = match mode {
        DuplexMode::Hd => Some(PhaseVector::from_phases(&phases2)),
        DuplexMode::Fd => None,
    };
    Ok(DiscreteSolution { mode, theta1, theta2, precoders: pre, total_power: power, stage_solves })
}

/// Exhaustive minimum over every discrete phase configuration, with a full
/// precoder solve per configuration. Refuses search spaces larger than 2^16
/// configurations (half-duplex enumerates both phase matrices jointly).
pub fn brute_force_oracle(
    ch: &ChannelSet,
    mode: DuplexMode,
    r_th: f64,
    b: u32,
    options: &SolverOptions,
) -> Result<DiscreteSolution> {
    let l = ch.num_ris_elements();
    let cfg = DiscretePhaseConfig::new(b)?;
    let vectors = match mode {
        DuplexMode::Hd => 2 * l,
        DuplexMode::Fd => l,
    };
    let total_bits = b as usize * vectors;
    if total_bits > 16 {
        return Err(Error::Config(format!(
            "brute force would enumerate 2^{total_bits} configurations (limit 2^16)"
        )));
    }
    let levels = cfg.levels();
    let num_levels = levels.len();
    let configs = num_levels.pow(vectors as u32);

    let mut best: Option<(Vec<f64>, Vec<f64>, Precoders, f64)> = None;
    let mut stage_solves = 0usize;
    for code in 0..configs {
        let mut digits = code;
        let mut all = Vec::with_capacity(vectors);
        for _ in 0..vectors {
            all.push(levels[digits % num_levels]);
            digits /= num_levels;
        }
        let (p1, p2) = all.split_at(l);
        let t1 = PhaseVector::from_phases(p1);
        let t2 = match mode {
            DuplexMode::Hd => PhaseVector::from_phases(p2),
            DuplexMode::Fd => t1.clone(),
        };
        stage_solves += 1;
        let (pre, power) = stage_power(ch, mode, r_th, options, &t1, &t2)?;
        if best.as_ref().map(|(_, _, _, bp)| power < *bp).unwrap_or(true) {
            best = Some((p1.to_vec(), p2.to_vec(), pre, power));
        }
    }
    let (p1, p2, pre, power) = best.expect("at least one configuration enumerated");
    Ok(DiscreteSolution {
        mode,
        theta1: PhaseVector::from_phases(&p1),
        theta2: match mode {
            DuplexMode::Hd => Some(PhaseVector::from_phases(&p2)),
            DuplexMode::Fd => None,
        },
        precoders: pre,
        total_power: power,
        stage_solves,
    })
}
