use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// BS precoder via SVD and water-filling: W = V_tilde * diag(sqrt(P)),
/// with the per-mode powers chosen so the sum rate over the active modes
/// meets `rate_target` (bits per symbol) exactly.
///
/// Uses at most min(M, N, K) eigenmodes of H_TIR H_TIR^H. The single-shot
/// water level is only valid when every mode stays active, so negative
/// allocations are clipped and the level recomputed on the survivors.
pub fn svd_waterfilling(
    h_tir: &DMatrix<Complex64>,
    noise_power: f64,
    rate_target: f64,
    num_users: usize,
) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let (n, m) = h_tir.shape();
    let k = num_users;
    if rate_target < 0.0 {
        return Err(Error::Domain("rate_target must be >= 0".into()));
    }
    if rate_target == 0.0 {
        return Ok((DMatrix::zeros(m, k), vec![0.0; k]));
    }

    let svd = h_tir.clone().svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .expect("requested right singular vectors");
    let mut modes: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s * s, i))
        .collect();
    modes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let max_modes = m.min(n).min(k);
    modes.truncate(max_modes);

    let floor = modes.first().map(|m| m.0).unwrap_or(0.0) * 1e-15;
    let mut active: Vec<(f64, usize)> = modes.into_iter().filter(|&(lam, _)| lam > floor).collect();
    if active.is_empty() {
        return Err(Error::Infeasible(
            "positive rate target on an all-zero channel".into(),
        ));
    }

    let ln2 = std::f64::consts::LN_2;
    loop {
        // mu solving sum log2(mu * lam / sigma^2) = rate_target over the
        // active set, computed in logs for range safety.
        let count = active.len() as f64;
        let ln_mu = (rate_target * ln2
            + active
                .iter()
                .map(|&(lam, _)| (noise_power / lam).ln())
                .sum::<f64>())
            / count;
        let mu = ln_mu.exp();
        let powers: Vec<f64> = active.iter().map(|&(lam, _)| mu - noise_power / lam).collect();
        if powers.iter().all(|&p| p > 0.0) {
            let mut w = DMatrix::zeros(m, k);
            let mut per_mode = vec![0.0; k];
            for (slot, (&(_, idx), &p)) in active.iter().zip(powers.iter()).enumerate() {
                let v: DVector<Complex64> = v_t.row(idx).adjoint();
                w.set_column(slot, &(v * Complex64::new(p.sqrt(), 0.0)));
                per_mode[slot] = p;
            }
            return Ok((w, per_mode));
        }
        // Drop the weakest mode and recompute the level.
        active.pop();
        if active.is_empty() {
            return Err(Error::Infeasible("water-filling active set emptied".into()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::relay_rate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_target_gives_zero_precoder() {
        let h = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        let (w, p) = svd_waterfilling(&h, 1.0, 0.0, 2).unwrap();
        assert_eq!(w.norm_squared(), 0.0);
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_closed_form() {
        // lambda = 1, sigma^2 = 1, target 2 bits -> P = 3.
        let h = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let (w, p) = svd_waterfilling(&h, 1.0, 2.0, 1).unwrap();
        assert_relative_eq!(p[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(w.norm_squared(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_two_mode_level() {
        // lambda1 = lambda2 = 1, sigma^2 = 1, target 4 -> mu = 4, P = 3 each.
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let (_, p) = svd_waterfilling(&h, 1.0, 4.0, 2).unwrap();
        assert_relative_eq!(p[0], 3.0, max_relative = 1e-10);
        assert_relative_eq!(p[1], 3.0, max_relative = 1e-10);
    }

    #[test]
    fn all_zero_channel_is_infeasible() {
        let h = DMatrix::zeros(3, 3);
        assert!(svd_waterfilling(&h, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn rate_constraint_met_with_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let h = DMatrix::from_fn(5, 5, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let target = 1.0 + (trial % 7) as f64;
            let sigma2 = 1e-3;
            let (w, p) = svd_waterfilling(&h, sigma2, target, 4).unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert_relative_eq!(relay_rate(&h, &w, sigma2), target, epsilon = 1e-9);
        }
    }

    #[test]
    fn dropping_smallest_active_mode_costs_power() {
        // Optimality spot check: forcing the weakest active mode out and
        // re-levelling on the rest cannot be cheaper.
        let lams = [4.0, 2.0, 1.0];
        let h = DMatrix::from_diagonal(&DVector::from_iterator(
            3,
            lams.iter().map(|&l| Complex64::new(f64::sqrt(l), 0.0)),
        ));
        let target = 6.0;
        let (_, p) = svd_waterfilling(&h, 1.0, target, 3).unwrap();
        let total: f64 = p.iter().sum();
        let active: Vec<f64> = p.iter().copied().filter(|&x| x > 0.0).collect();
        assert!(active.len() >= 2);
        // Restricted allocation over the strongest active.len()-1 modes.
        let restricted: Vec<f64> = lams[..active.len() - 1].to_vec();
        let ln2 = std::f64::consts::LN_2;
        let mu = ((target * ln2 + restricted.iter().map(|l| (1.0 / l).ln()).sum::<f64>())
            / restricted.len() as f64)
            .exp();
        let alt: f64 = restricted.iter().map(|l| mu - 1.0 / l).sum();
        assert!(alt > total);
    }

    proptest! {
        #[test]
        fn equality_and_nonnegativity_over_random_spectra(
            lams in proptest::collection::vec(1e-6f64..10.0, 1..6),
            target in 0.1f64..20.0,
        ) {
            let n = lams.len();
            let h = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                lams.iter().map(|&l| Complex64::new(l.sqrt(), 0.0)),
            ));
            let (w, p) = svd_waterfilling(&h, 1.0, target, n).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let rate = relay_rate(&h, &w, 1.0);
            prop_assert!((rate - target).abs() < 1e-9);
        }
    }
}
