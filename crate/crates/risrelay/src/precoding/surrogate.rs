use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::phases::PhaseVector;

/// Tangent majorizer of the relay rate as a function of the first-hop
/// reflection coefficients: R_R(v) <= F + 2 Re{v^H x} + v^H Xbar v, with
/// equality at the expansion point.
#[derive(Debug, Clone)]
pub struct SurrogateData {
    pub f: f64,
    pub x: DVector<Complex64>,
    pub xbar: DMatrix<Complex64>,
}

impl SurrogateData {
    /// Evaluates the surrogate at the given reflection coefficients.
    pub fn evaluate(&self, coeffs: &DVector<Complex64>) -> f64 {
        let lin = 2.0 * coeffs.dotc(&self.x).re;
        let quad = coeffs.dotc(&(&self.xbar * coeffs)).re;
        self.f + lin + quad
    }
}

/// Builds the log-det linearization of the relay rate around `expansion`.
///
/// The concavity bound log|A| <= log|Z| + tr(Z^{-1}(A - Z)) holds in natural
/// log, so the trace terms carry a 1/ln2 factor when the rate is in bits.
/// The linear/quadratic decomposition in the reflection coefficients uses
/// tr(Theta M Theta^H P) = sum_{l,m} c_l M_{lm} conj(c_m) P_{ml}.
pub fn surrogate_relay_rate(
    ch: &ChannelSet,
    expansion: &PhaseVector,
    w: &DMatrix<Complex64>,
    noise_power: f64,
) -> Result<SurrogateData> {
    let l = ch.num_ris_elements();
    let n = ch.num_relay_antennas();
    if expansion.len() != l {
        return Err(Error::Dimension("expansion length vs L".into()));
    }
    expansion.validate()?;
    if w.norm_squared() == 0.0 {
        return Err(Error::Domain("surrogate expansion needs a nonzero BS precoder".into()));
    }
    let ln2 = std::f64::consts::LN_2;
    let inv_s2 = 1.0 / noise_power;

    let coeffs = expansion.reflection_coefficients();
    let mut scaled_ti = ch.h_ti.clone();
    for (i, mut row) in scaled_ti.row_iter_mut().enumerate() {
        row *= coeffs[i];
    }
    let h_hat = &ch.h_tr + &ch.h_ir * &scaled_ti;

    let hw = &h_hat * w;
    let z = DMatrix::identity(n, n) + (&hw * hw.adjoint()) * Complex64::new(inv_s2, 0.0);
    // Z = I + PSD is always Hermitian positive definite.
    let chol = Cholesky::new(z.clone())
        .ok_or_else(|| Error::Domain("relay-rate Gram matrix not positive definite".into()))?;
    let log2_det_z: f64 = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.re.ln())
            .sum::<f64>()
        / ln2;
    let z_inv = chol.inverse();

    let trw = &ch.h_tr * w; // N x K
    let f = log2_det_z
        + (z_inv.diagonal().iter().map(|d| d.re).sum::<f64>() - n as f64
            + inv_s2 * (trw.adjoint() * &z_inv * &trw).diagonal().iter().map(|d| d.re).sum::<f64>())
            / ln2;

    if l == 0 {
        return Ok(SurrogateData {
            f,
            x: DVector::zeros(0),
            xbar: DMatrix::zeros(0, 0),
        });
    }

    // Linear term: 2 Re{ sum_l c_l T_ll }, T = H_TI W W^H H_TR^H Z^{-1} H_IR.
    let tiw = &ch.h_ti * w; // L x K
    let t_mat = &tiw * (trw.adjoint() * &z_inv * &ch.h_ir); // L x L
    let scale = Complex64::new(inv_s2 / ln2, 0.0);
    let x = DVector::from_iterator(l, (0..l).map(|i| t_mat[(i, i)].conj() * scale));

    // Quadratic term: sum_{l,m} c_l M_{lm} conj(c_m) P_{ml} expressed as
    // v^H Xbar v with Xbar_{lm} = M_{ml} P_{lm} / (sigma^2 ln2).
    let m_mat = &tiw * tiw.adjoint(); // L x L
    let p_mat = ch.h_ir.adjoint() * &z_inv * &ch.h_ir; // L x L
    let xbar = DMatrix::from_fn(l, l, |r, c| m_mat[(c, r)] * p_mat[(r, c)] * scale);

    Ok(SurrogateData { f, x, xbar })
}

/// One majorize-maximize step for the relay-rate surrogate over unit-modulus
/// vectors: v_l = exp(j arg(q_l)) with q = x + (Xbar - lambda_max I) anchor.
/// Entries with q_l = 0 keep the anchor phase.
pub fn linearized_phase_step(surrogate: &SurrogateData, anchor: &PhaseVector) -> PhaseVector {
    let l = anchor.len();
    let anchor_c = anchor.reflection_coefficients();
    if l == 0 {
        return PhaseVector::identity(0);
    }
    let lam_max = surrogate
        .xbar
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = &surrogate.xbar - DMatrix::identity(l, l) * Complex64::new(lam_max, 0.0);
    let q = &surrogate.x + shifted * &anchor_c;

    let scale = q.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let tiny = scale * 1e-14;
    let v = DVector::from_iterator(
        l,
        q.iter().enumerate().map(|(i, c)| {
            if c.norm() <= tiny {
                anchor_c[i]
            } else {
                c / c.norm()
            }
        }),
    );
    PhaseVector { v, t: Complex64::new(1.0, 0.0) }
}
