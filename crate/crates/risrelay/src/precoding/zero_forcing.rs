use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Zero-forcing relay precoder: U = H^H (H H^H)^{-1} Q^{1/2} with
/// q_k = nu_k * eta_k, where H stacks the users' row channels. Requires
/// full row rank (K <= N).
pub fn zero_forcing(
    rows: &[DVector<Complex64>],
    per_user_noise: &[f64],
    targets: &[f64],
) -> Result<DMatrix<Complex64>> {
    let k = rows.len();
    if per_user_noise.len() != k || targets.len() != k {
        return Err(Error::Dimension("rows/noise/targets length mismatch".into()));
    }
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    if targets.iter().all(|&t| t <= 0.0) {
        return Ok(DMatrix::zeros(n, k));
    }
    if k > n {
        return Err(Error::Infeasible(format!("zero-forcing needs K <= N, got K={k}, N={n}")));
    }

    // H is K x N with rows h_k^H.
    let mut h = DMatrix::zeros(k, n);
    for (i, r) in rows.iter().enumerate() {
        h.row_mut(i).copy_from(&r.adjoint());
    }
    let gram = &h * h.adjoint();
    let pinv_part = gram
        .lu()
        .solve(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Infeasible("rank-deficient stacked channel matrix".into()))?;
    let base = h.adjoint() * pinv_part; // N x K, H * base = I

    let mut u = DMatrix::zeros(n, k);
    for i in 0..k {
        let q = per_user_noise[i] * targets[i].max(0.0);
        u.set_column(i, &(base.column(i) * Complex64::new(q.sqrt(), 0.0)));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::duality_beamforming;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn single_user_matches_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_vec(&mut rng, 4);
        let u_zf = zero_forcing(std::slice::from_ref(&h), &[0.7], &[1.9]).unwrap();
        let u_du = duality_beamforming(std::slice::from_ref(&h), &[0.7], &[1.9]).unwrap();
        assert_relative_eq!((u_zf - u_du).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn orthonormal_rows_closed_form() {
        // u_k = sqrt(3) * h_k, total power 3K.
        let k = 3;
        let rows: Vec<DVector<Complex64>> = (0..k)
            .map(|i| {
                let mut v = DVector::zeros(4);
                v[i] = Complex64::new(1.0, 0.0);
                v
            })
            .collect();
        let u = zero_forcing(&rows, &[1.0; 3], &[3.0; 3]).unwrap();
        for i in 0..k {
            let expect = &rows[i] * Complex64::new(3f64.sqrt(), 0.0);
            assert_relative_eq!((u.column(i).into_owned() - expect).norm(), 0.0, epsilon = 1e-12);
        }
        assert_relative_eq!(u.norm_squared(), 9.0, max_relative = 1e-12);
    }

    #[test]
    fn interference_is_nulled_and_targets_met() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let k = 3;
            let rows: Vec<_> = (0..k).map(|_| random_vec(&mut rng, 5)).collect();
            let noise: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
            let targets: Vec<f64> = (0..k).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect();
            let u = zero_forcing(&rows, &noise, &targets).unwrap();
            for i in 0..k {
                for j in 0..k {
                    let gain = rows[i].dotc(&u.column(j).into_owned()).norm();
                    if i != j {
                        assert!(gain <= 1e-9 * u.column(j).norm().max(1e-300));
                    }
                }
                let sinr = rows[i].dotc(&u.column(i).into_owned()).norm_sqr() / noise[i];
                assert_relative_eq!(sinr, targets[i], max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_vec(&mut rng, 4);
        let rows = vec![a.clone(), a.clone()];
        assert!(zero_forcing(&rows, &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zf_never_cheaper_than_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let k = 3;
            let rows: Vec<_> = (0..k).map(|_| random_vec(&mut rng, 5)).collect();
            let noise = vec![0.5; k];
            let targets: Vec<f64> = (0..k).map(|_| 0.5 + rng.random::<f64>()).collect();
            let u_zf = zero_forcing(&rows, &noise, &targets).unwrap();
            let u_du = duality_beamforming(&rows, &noise, &targets).unwrap();
            assert!(u_zf.norm_squared() >= u_du.norm_squared() - 1e-9);
        }
    }
}
