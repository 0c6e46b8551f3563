use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const BETA_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 500;

/// Downlink power-minimizing beamformer under per-user SINR targets via
/// uplink-downlink duality.
///
/// `rows[k]` is the column form of user k's row channel, `per_user_noise[k]`
/// its effective noise. Non-uniform noise is folded in by scaling row k with
/// 1 / sqrt(nu_k), which reduces to the uniform-noise fixed point verbatim.
/// Users with a zero target get a zero column and are excluded from the
/// power-coupling matrix.
pub fn duality_beamforming(
    rows: &[DVector<Complex64>],
    per_user_noise: &[f64],
    targets: &[f64],
) -> Result<DMatrix<Complex64>> {
    let k_total = rows.len();
    if per_user_noise.len() != k_total || targets.len() != k_total {
        return Err(Error::Dimension("rows/noise/targets length mismatch".into()));
    }
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut u = DMatrix::zeros(n, k_total);

    let active: Vec<usize> = (0..k_total).filter(|&k| targets[k] > 0.0).collect();
    if active.is_empty() {
        return Ok(u);
    }
    for &k in &active {
        if !targets[k].is_finite() || per_user_noise[k] <= 0.0 {
            return Err(Error::Domain("targets must be finite, noise positive".into()));
        }
    }

    // Equivalent uniform-noise problem with sigma^2 = 1.
    let scaled: Vec<DVector<Complex64>> = active
        .iter()
        .map(|&k| &rows[k] * Complex64::new(1.0 / per_user_noise[k].sqrt(), 0.0))
        .collect();
    let eta: Vec<f64> = active.iter().map(|&k| targets[k]).collect();
    let ka = active.len();

    // Virtual-uplink fixed point for the dual powers beta_k.
    let mut beta: Vec<f64> = scaled
        .iter()
        .zip(&eta)
        .map(|(h, &e)| e / h.norm_squared().max(1e-300))
        .collect();
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let chol = uplink_covariance(&scaled, &beta)
            .ok_or_else(|| Error::Infeasible("uplink covariance not positive definite".into()))?;
        let mut max_delta = 0.0f64;
        let mut next = beta.clone();
        for (j, h) in scaled.iter().enumerate() {
            let sol = chol.solve(h);
            let quad = h.dotc(&sol).re.max(1e-300);
            let b = 1.0 / ((1.0 + 1.0 / eta[j]) * quad);
            max_delta = max_delta.max((b - beta[j]).abs() / b.max(1e-300));
            next[j] = b;
        }
        beta = next;
        if max_delta <= BETA_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "duality fixed point did not reach {BETA_TOL:e} in {MAX_ITERS} iterations"
        )));
    }

    // Normalized downlink directions (MMSE receive directions of the dual
    // uplink), then the downlink power-coupling system.
    let chol = uplink_covariance(&scaled, &beta)
        .ok_or_else(|| Error::Infeasible("uplink covariance not positive definite".into()))?;
    let dirs: Vec<DVector<Complex64>> = scaled
        .iter()
        .map(|h| {
            let d = chol.solve(h);
            let nrm = d.norm();
            d / Complex64::new(nrm.max(1e-300), 0.0)
        })
        .collect();

    let mut d_mat = DMatrix::<f64>::zeros(ka, ka);
    for i in 0..ka {
        for j in 0..ka {
            let gain = scaled[i].dotc(&dirs[j]).norm_sqr();
            d_mat[(i, j)] = if i == j { gain / eta[i] } else { -gain };
        }
    }
    let q = d_mat
        .lu()
        .solve(&DVector::from_element(ka, 1.0))
        .ok_or_else(|| Error::Infeasible("power-coupling matrix is singular".into()))?;
    if q.iter().any(|&x| x < -1e-9 || !x.is_finite()) {
        return Err(Error::Infeasible("negative downlink power in duality solution".into()));
    }

    for (j, &k) in active.iter().enumerate() {
        let col = &dirs[j] * Complex64::new(q[j].max(0.0).sqrt(), 0.0);
        u.set_column(k, &col);
    }
    Ok(u)
}

fn uplink_covariance(
    scaled: &[DVector<Complex64>],
    beta: &[f64],
) -> Option<Cholesky<Complex64, nalgebra::Dyn>> {
    let n = scaled[0].len();
    let mut a = DMatrix::identity(n, n);
    for (h, &b) in scaled.iter().zip(beta) {
        a += h * h.adjoint() * Complex64::new(b, 0.0);
    }
    Cholesky::new(a)
}
