use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::phases::PhaseVector;

/// Channels seen through the RIS, for fixed phase matrices.
///
/// `h_ri` and `h_ti` store column vectors whose adjoints are the row
/// channels h_{RI,k}^H and h_{TI,k}^H of the paper.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    /// BS -> relay through the RIS, N x M.
    pub h_tir: DMatrix<Complex64>,
    /// Relay -> user k through the RIS, N-vectors.
    pub h_ri: Vec<DVector<Complex64>>,
    /// BS -> user k through the RIS, M-vectors.
    pub h_ti: Vec<DVector<Complex64>>,
}

/// Composes the effective channels for the given phase configurations.
/// `theta_first` drives the first-hop links (BS side), `theta_second` the
/// relay -> user links; in full-duplex mode both are the same vector. The
/// relay -> RIS channel is the adjoint of the RIS -> relay channel
/// (reciprocity).
pub fn effective_channels(
    ch: &ChannelSet,
    theta_first: &PhaseVector,
    theta_second: &PhaseVector,
) -> Result<EffectiveChannels> {
    let l = ch.num_ris_elements();
    if theta_first.len() != l || theta_second.len() != l {
        return Err(Error::Dimension(format!(
            "phase vector length {} / {} vs L = {}",
            theta_first.len(),
            theta_second.len(),
            l
        )));
    }
    let c1 = theta_first.reflection_coefficients();
    let c2 = theta_second.reflection_coefficients();

    // H_TIR = H_TR + H_IR * Theta1 * H_TI
    let mut scaled_ti = ch.h_ti.clone();
    for (i, mut row) in scaled_ti.row_iter_mut().enumerate() {
        row *= c1[i];
    }
    let h_tir = &ch.h_tr + &ch.h_ir * scaled_ti;

    let mut h_ri = Vec::with_capacity(ch.num_users());
    let mut h_ti = Vec::with_capacity(ch.num_users());
    for k in 0..ch.num_users() {
        // Column form of h_{RI,k}^H = h_{I,k}^H Theta2 H_RI + h_{R,k}^H,
        // with H_RI = H_IR^H.
        let scaled_i2 = DVector::from_iterator(l, (0..l).map(|i| ch.h_i[k][i] * c2[i].conj()));
        h_ri.push(&ch.h_r[k] + &ch.h_ir * scaled_i2);
        // Column form of h_{TI,k}^H = h_{I,k}^H Theta1 H_TI + h_{T,k}^H.
        let scaled_i1 = DVector::from_iterator(l, (0..l).map(|i| ch.h_i[k][i] * c1[i].conj()));
        h_ti.push(&ch.h_t[k] + ch.h_ti.adjoint() * scaled_i1);
    }

    Ok(EffectiveChannels { h_tir, h_ri, h_ti })
}

/// Rate supportable by the relay, log2 det(I + H W W^H H^H / sigma^2),
/// in bits per symbol.
pub fn relay_rate(h_tir: &DMatrix<Complex64>, w: &DMatrix<Complex64>, noise_power: f64) -> f64 {
    let a = h_tir * w; // N x K
    // Nonzero eigenvalues of A A^H equal those of A^H A (K x K, smaller).
    let gram = a.adjoint() * &a;
    let eig = gram.symmetric_eigenvalues();
    eig.iter()
        .map(|&lam| (1.0 + lam.max(0.0) / noise_power).log2())
        .sum()
}

/// Half-duplex per-phase SINRs (gamma_{k,1}, gamma_{k,2}) at user k.
pub fn hd_user_snrs(
    eff: &EffectiveChannels,
    w: &DMatrix<Complex64>,
    u: &DMatrix<Complex64>,
    noise_power: f64,
    k: usize,
) -> (f64, f64) {
    let g1 = sinr_from_row(&eff.h_ti[k], w, k, 0.0, noise_power);
    let g2 = sinr_from_row(&eff.h_ri[k], u, k, 0.0, noise_power);
    (g1, g2)
}

/// Full-duplex SINR at user k: the relay signal is decoded while the BS
/// transmission is treated as noise.
pub fn fd_user_sinr(
    eff: &EffectiveChannels,
    w: &DMatrix<Complex64>,
    u: &DMatrix<Complex64>,
    noise_power: f64,
    k: usize,
) -> f64 {
    let bs_interference: f64 = w
        .column_iter()
        .map(|wi| eff.h_ti[k].dotc(&wi).norm_sqr())
        .sum();
    sinr_from_row(&eff.h_ri[k], u, k, bs_interference, noise_power)
}

/// |h^H b_k|^2 / (sum_{i != k} |h^H b_i|^2 + extra + sigma^2), with `h`
/// given in column form.
fn sinr_from_row(
    h: &DVector<Complex64>,
    beams: &DMatrix<Complex64>,
    k: usize,
    extra_noise: f64,
    noise_power: f64,
) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (i, b) in beams.column_iter().enumerate() {
        let p = h.dotc(&b).norm_sqr();
        if i == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (interference + extra_noise + noise_power)
}
