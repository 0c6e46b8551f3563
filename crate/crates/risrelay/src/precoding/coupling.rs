use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::phases::PhaseVector;

/// Which hop the quadratic lifting refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingSide {
    /// Blocks built from the BS precoder columns w_i (first hop, Theta1).
    Bs,
    /// Blocks built from the relay precoder columns u_i (second hop, Theta2).
    Relay,
}

/// Hermitian (L+1) x (L+1) lifting blocks expressing the per-user received
/// powers as quadratic forms of the lifted phase vector:
/// vbar^H B_{k,i} vbar + |b_{k,i}|^2 = |(h_eff,k^H) w_i|^2 when vbar realizes
/// the phase matrix with t = 1.
#[derive(Debug, Clone)]
pub struct CouplingBlocks {
    pub blocks: Vec<Vec<DMatrix<Complex64>>>,
    pub scalars: Vec<Vec<Complex64>>,
}

impl CouplingBlocks {
    /// Sum of the desired-signal blocks B_{k,k}, the fixed-point objective.
    pub fn diagonal_sum(&self) -> DMatrix<Complex64> {
        let dim = self.blocks[0][0].nrows();
        let mut s = DMatrix::zeros(dim, dim);
        for (k, row) in self.blocks.iter().enumerate() {
            s += &row[k];
        }
        s
    }

    /// vbar^H B_{k,i} vbar + |b_{k,i}|^2.
    pub fn received_power(&self, vbar: &DVector<Complex64>, k: usize, i: usize) -> f64 {
        vbar.dotc(&(&self.blocks[k][i] * vbar)).re + self.scalars[k][i].norm_sqr()
    }
}

/// Builds the K x K lifting blocks for the selected hop.
pub fn coupling_blocks(
    ch: &ChannelSet,
    beams: &DMatrix<Complex64>,
    side: CouplingSide,
) -> Result<CouplingBlocks> {
    let l = ch.num_ris_elements();
    let k_users = ch.num_users();
    let cols = beams.ncols();
    match side {
        CouplingSide::Bs if beams.nrows() != ch.num_bs_antennas() => {
            return Err(Error::Dimension("BS-side blocks need M-row beams".into()));
        }
        CouplingSide::Relay if beams.nrows() != ch.num_relay_antennas() => {
            return Err(Error::Dimension("relay-side blocks need N-row beams".into()));
        }
        _ => {}
    }

    let mut blocks = Vec::with_capacity(k_users);
    let mut scalars = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let mut row_blocks = Vec::with_capacity(cols);
        let mut row_scalars = Vec::with_capacity(cols);
        for i in 0..cols {
            let beam = beams.column(i);
            // a = diag(h_I,k^H) * H_hop * w_i ; b = h_direct,k^H * w_i.
            let (a_raw, b_raw): (DVector<Complex64>, Complex64) = match side {
                CouplingSide::Bs => {
                    let prop = &ch.h_ti * beam; // L-vector
                    let a = DVector::from_iterator(l, (0..l).map(|j| ch.h_i[k][j].conj() * prop[j]));
                    (a, ch.h_t[k].dotc(&beam))
                }
                CouplingSide::Relay => {
                    let prop = ch.h_ir.adjoint() * beam; // H_RI = H_IR^H
                    let a = DVector::from_iterator(l, (0..l).map(|j| ch.h_i[k][j].conj() * prop[j]));
                    (a, ch.h_r[k].dotc(&beam))
                }
            };
            // The lifted form uses coefficients e^{+j theta}, so the block is
            // built from the conjugated pair.
            let s = a_raw.map(|c| c.conj());
            let b = b_raw.conj();
            let mut block = DMatrix::zeros(l + 1, l + 1);
            block.view_mut((0, 0), (l, l)).copy_from(&(&s * s.adjoint()));
            for j in 0..l {
                block[(j, l)] = s[j] * b.conj();
                block[(l, j)] = b * s[j].conj();
            }
            row_blocks.push(block);
            row_scalars.push(b_raw);
        }
        blocks.push(row_blocks);
        scalars.push(row_scalars);
    }
    Ok(CouplingBlocks { blocks, scalars })
}

/// Result of the unit-modulus fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub phase: PhaseVector,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Maximizes vbar^H S0 vbar over per-entry unit-modulus vbar by iterating
/// vbar <- unt(S vbar), where S = S0 + delta I with diagonal loading
/// delta = max(0, -lambda_min(S0)) + eps. The loading makes S PSD (the
/// iteration's ascent guarantee needs it) and only adds a constant
/// delta (L+1) to the objective under the unit-modulus constraint.
pub fn fixed_point_phase(
    blocks_sum: &DMatrix<Complex64>,
    init: &PhaseVector,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointOutcome> {
    let dim = blocks_sum.nrows();
    if init.len() + 1 != dim {
        return Err(Error::Dimension("init length vs block dimension".into()));
    }
    let eigs = blocks_sum.symmetric_eigenvalues();
    let lam_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lam_max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = lam_max.abs().max(lam_min.abs());
    let delta = (-lam_min).max(0.0) + 1e-12 * scale;
    let s = blocks_sum + DMatrix::identity(dim, dim) * Complex64::new(delta, 0.0);

    let objective = |v: &DVector<Complex64>| v.dotc(&(blocks_sum * v)).re;

    let mut v = init.lifted();
    let mut best = v.clone();
    let mut best_obj = objective(&v);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        let sv = &s * &v;
        let next = DVector::from_iterator(
            dim,
            sv.iter().enumerate().map(|(i, c)| {
                if c.norm() == 0.0 {
                    v[i]
                } else {
                    c / c.norm()
                }
            }),
        );
        let delta_norm = (&next - &v).norm();
        v = next;
        let obj = objective(&v);
        if obj >= best_obj {
            best_obj = obj;
            best = v.clone();
        }
        if delta_norm <= tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointOutcome {
        phase: PhaseVector::from_lifted(&best),
        converged,
        iterations,
        objective: best_obj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, FadingParams, SystemGeometry};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_channel(seed: u64) -> ChannelSet {
        let g = SystemGeometry::users_center(3, 4, 2, 5);
        generate_scenario(&g, &FadingParams::default(), seed).unwrap()
    }

    fn random_beams(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1e-3
        })
    }

    #[test]
    fn zero_beam_zero_block() {
        let ch = small_channel(30);
        let beams = DMatrix::zeros(3, 2);
        let cb = coupling_blocks(&ch, &beams, CouplingSide::Bs).unwrap();
        assert_eq!(cb.blocks[0][0].norm(), 0.0);
        assert_eq!(cb.scalars[1][1].norm(), 0.0);
    }

    #[test]
    fn block_structure_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = small_channel(31);
        for side in [CouplingSide::Bs, CouplingSide::Relay] {
            let rows = match side {
                CouplingSide::Bs => 3,
                CouplingSide::Relay => 4,
            };
            let beams = random_beams(&mut rng, rows, 2);
            let cb = coupling_blocks(&ch, &beams, side).unwrap();
            for k in 0..2 {
                for i in 0..2 {
                    let b = &cb.blocks[k][i];
                    assert!((b - b.adjoint()).norm() <= 1e-12 * b.norm().max(1e-300));
                    assert_eq!(b[(5, 5)], Complex64::new(0.0, 0.0));
                    assert!(b.clone().svd(false, false).rank(b.norm() * 1e-10) <= 2);
                }
            }
        }
    }

    #[test]
    fn quadratic_form_matches_direct_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = small_channel(32);
        let w = random_beams(&mut rng, 3, 2);
        let u = random_beams(&mut rng, 4, 2);
        for (side, beams) in [(CouplingSide::Bs, &w), (CouplingSide::Relay, &u)] {
            let cb = coupling_blocks(&ch, beams, side).unwrap();
            for trial in 0..10 {
                let phases: Vec<f64> = (0..5)
                    .map(|j| ((trial * 5 + j) as f64 * 0.7) % std::f64::consts::TAU)
                    .collect();
                let pv = PhaseVector::from_phases(&phases);
                let vbar = pv.lifted();
                let coeffs = pv.reflection_coefficients();
                for k in 0..2 {
                    for i in 0..2 {
                        // Direct |(h_I,k^H Theta H + h_d^H) beam|^2.
                        let beam = beams.column(i).into_owned();
                        let prop = match side {
                            CouplingSide::Bs => &ch.h_ti * &beam,
                            CouplingSide::Relay => ch.h_ir.adjoint() * &beam,
                        };
                        let reflected: Complex64 = (0..5)
                            .map(|j| ch.h_i[k][j].conj() * coeffs[j] * prop[j])
                            .sum();
                        let direct = match side {
                            CouplingSide::Bs => ch.h_t[k].dotc(&beam),
                            CouplingSide::Relay => ch.h_r[k].dotc(&beam),
                        };
                        let expect = (reflected + direct).norm_sqr();
                        let got = cb.received_power(&vbar, k, i);
                        assert_relative_eq!(got, expect, max_relative = 1e-10, epsilon = 1e-30);
                    }
                }
            }
        }
    }

    #[test]
    fn single_element_block_by_hand() {
        // L = 1: the 2x2 block is the outer-product construction.
        let g = SystemGeometry::users_center(1, 1, 1, 1);
        let ch = generate_scenario(&g, &FadingParams::default(), 12).unwrap();
        let w = DMatrix::from_element(1, 1, Complex64::new(2.0, -1.0));
        let cb = coupling_blocks(&ch, &w, CouplingSide::Bs).unwrap();
        let a = (ch.h_i[0][0].conj() * ch.h_ti[(0, 0)] * w[(0, 0)]).conj();
        let b = ch.h_t[0].dotc(&w.column(0)).conj();
        let expect = DMatrix::from_row_slice(2, 2, &[
            a * a.conj(),
            a * b.conj(),
            b * a.conj(),
            Complex64::new(0.0, 0.0),
        ]);
        assert_relative_eq!((cb.blocks[0][0].clone() - expect).norm(), 0.0, epsilon = 1e-18);
    }

    #[test]
    fn positive_diagonal_matrix_is_fixed_point() {
        let dim = 4;
        let s = DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            (1..=dim).map(|i| Complex64::new(i as f64, 0.0)),
        ));
        let init = PhaseVector::from_phases(&[0.4, 1.7, 3.0]);
        let out = fixed_point_phase(&s, &init, 1e-9, 50).unwrap();
        assert!(out.converged);
        assert!((out.phase.lifted() - init.lifted()).norm() < 1e-9);
    }

    #[test]
    fn rank_one_converges_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dim = 4;
        let c = DVector::from_fn(dim, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let s = &c * c.adjoint();
        let init = PhaseVector::identity(dim - 1);
        let out = fixed_point_phase(&s, &init, 1e-9, 100).unwrap();
        assert!(out.converged);
        // Fixed point aligns phases with c.
        let v = out.phase.lifted();
        let inner = c.dotc(&v);
        assert_relative_eq!(inner.norm(), c.iter().map(|x| x.norm()).sum::<f64>(), max_relative = 1e-6);
    }

    #[test]
    fn objective_monotone_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ch = small_channel(33);
        let w = random_beams(&mut rng, 3, 2);
        let cb = coupling_blocks(&ch, &w, CouplingSide::Bs).unwrap();
        let s0 = cb.diagonal_sum();
        let eigs = s0.symmetric_eigenvalues();
        let lam_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let lam_max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let delta = (-lam_min).max(0.0) + 1e-12 * lam_max.abs().max(lam_min.abs());
        let s = &s0 + DMatrix::identity(6, 6) * Complex64::new(delta, 0.0);

        let mut v = PhaseVector::from_phases(&[0.1, 2.0, 4.1, 1.3, 5.2]).lifted();
        let mut prev = v.dotc(&(&s0 * &v)).re;
        for _ in 0..40 {
            let sv = &s * &v;
            v = DVector::from_iterator(6, sv.iter().map(|c| c / c.norm()));
            let obj = v.dotc(&(&s0 * &v)).re;
            assert!(obj >= prev - 1e-12 * prev.abs().max(1e-300));
            prev = obj;
        }
    }

    #[test]
    fn fixed_point_near_exhaustive_grid_optimum() {
        // L = 2 lifted search against a 16-level grid enumeration.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g = SystemGeometry::users_center(3, 4, 2, 2);
        let mut within = 0;
        let total = 100;
        for seed in 0..total {
            let ch = generate_scenario(&g, &FadingParams::default(), 400 + seed).unwrap();
            let w = random_beams(&mut rng, 3, 2);
            let cb = coupling_blocks(&ch, &w, CouplingSide::Bs).unwrap();
            let s0 = cb.diagonal_sum();
            let out = fixed_point_phase(&s0, &PhaseVector::identity(2), 1e-9, 300).unwrap();

            let levels = 16;
            let mut grid_best = f64::NEG_INFINITY;
            for i in 0..levels {
                for j in 0..levels {
                    let pv = PhaseVector::from_phases(&[
                        i as f64 * std::f64::consts::TAU / levels as f64,
                        j as f64 * std::f64::consts::TAU / levels as f64,
                    ]);
                    let v = pv.lifted();
                    grid_best = grid_best.max(v.dotc(&(&s0 * &v)).re);
                }
            }
            if out.objective >= grid_best * 0.98 {
                within += 1;
            }
        }
        assert!(within == total, "fixed point within 2% of grid optimum on {within}/{total}");
    }
}
