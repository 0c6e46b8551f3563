//! Channel generation for the BS-relay-RIS-users topology.
//!
//! Pathloss follows beta = C / d^alpha with separate LoS / NLoS constant
//! sets. The BS-relay, BS-RIS and relay-RIS links are Rician with a
//! deterministic geometric LoS component; all links towards the users are
//! Rayleigh. Generation is a pure function of (geometry, params, seed).

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar-array layout for the RIS, rows x cols elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaLayout {
    pub rows: usize,
    pub cols: usize,
}

/// Node placements and array layouts defining one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    /// BS antenna count.
    pub m: usize,
    /// Relay antenna count.
    pub n: usize,
    /// User count.
    pub k: usize,
    /// RIS element count.
    pub l: usize,
    pub bs_position: Vector3<f64>,
    pub relay_position: Vector3<f64>,
    pub ris_position: Vector3<f64>,
    pub user_circle_center: Vector3<f64>,
    /// Radius of the disk the users are drawn from, meters.
    pub user_circle_radius: f64,
    /// Element spacing as a fraction of the carrier wavelength. Only the
    /// deterministic LoS phase pattern depends on it.
    pub element_spacing: f64,
    pub ris_array: UpaLayout,
}

impl SystemGeometry {
    /// Default desk-scale layout: users on a disk of radius 35 m whose
    /// center is 300 m from the BS, relay at the disk center, RIS a few
    /// meters beside it.
    pub fn users_center(m: usize, n: usize, k: usize, l: usize) -> Self {
        Self::with_relay_at(m, n, k, l, Vector3::new(300.0, 0.0, 0.0))
    }

    /// Variant with the relay and RIS at the midpoint between the BS and
    /// the user-circle center.
    pub fn midpoint(m: usize, n: usize, k: usize, l: usize) -> Self {
        Self::with_relay_at(m, n, k, l, Vector3::new(150.0, 0.0, 0.0))
    }

    fn with_relay_at(m: usize, n: usize, k: usize, l: usize, relay: Vector3<f64>) -> Self {
        SystemGeometry {
            m,
            n,
            k,
            l,
            bs_position: Vector3::new(0.0, 0.0, 0.0),
            relay_position: relay,
            ris_position: relay + Vector3::new(0.0, 5.0, 0.0),
            user_circle_center: Vector3::new(300.0, 0.0, 0.0),
            user_circle_radius: 35.0,
            element_spacing: 0.5,
            ris_array: near_square_layout(l),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.n < 1 || self.k < 1 {
            return Err(Error::Domain("M, N, K must be >= 1".into()));
        }
        if self.k > self.n {
            return Err(Error::Domain(format!(
                "K = {} exceeds relay antenna count N = {} (zero-forcing infeasible)",
                self.k, self.n
            )));
        }
        if self.user_circle_radius <= 0.0 {
            return Err(Error::Domain("user_circle_radius must be > 0".into()));
        }
        if self.element_spacing <= 0.0 {
            return Err(Error::Domain("element_spacing must be > 0".into()));
        }
        if self.ris_array.rows * self.ris_array.cols != self.l {
            return Err(Error::Domain(format!(
                "UPA {}x{} does not hold L = {} elements",
                self.ris_array.rows, self.ris_array.cols, self.l
            )));
        }
        let nodes = [
            self.bs_position,
            self.relay_position,
            self.ris_position,
            self.user_circle_center,
        ];
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                // BS/relay/RIS must be pairwise separated; the circle center
                // may coincide with the relay or RIS (Fig. 2 layout).
                if i < 3 && j < 3 && (nodes[i] - nodes[j]).norm() <= 0.0 {
                    return Err(Error::Domain("coincident node positions".into()));
                }
            }
        }
        Ok(())
    }
}

/// Returns a rows x cols layout with rows * cols == l, as square as l allows.
pub fn near_square_layout(l: usize) -> UpaLayout {
    if l == 0 {
        return UpaLayout { rows: 0, cols: 1 };
    }
    let mut rows = (l as f64).sqrt().floor() as usize;
    while rows > 1 && l % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    UpaLayout { rows, cols: l / rows }
}

/// Pathloss and fading constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub gt_dbi: f64,
    pub gr_dbi: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub c_offset_los_db: f64,
    pub c_offset_nlos_db: f64,
    /// Rician K-factor, linear.
    pub rician_k: f64,
    /// Noise power sigma^2, linear milliwatts.
    pub noise_power: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        FadingParams {
            gt_dbi: 5.0,
            gr_dbi: 0.0,
            alpha_los: 2.2,
            alpha_nlos: 3.67,
            c_offset_los_db: 35.95,
            c_offset_nlos_db: 33.95,
            rician_k: 10.0,
            // -80 dBm
            noise_power: 1e-8,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_los <= 0.0 || self.alpha_nlos <= 0.0 {
            return Err(Error::Domain("pathloss exponents must be > 0".into()));
        }
        if self.rician_k < 0.0 {
            return Err(Error::Domain("rician_k must be >= 0".into()));
        }
        if self.noise_power <= 0.0 {
            return Err(Error::Domain("noise_power must be > 0".into()));
        }
        Ok(())
    }
}

/// One realization of all channels, immutable after creation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS -> relay, N x M.
    pub h_tr: DMatrix<Complex64>,
    /// BS -> RIS, L x M.
    pub h_ti: DMatrix<Complex64>,
    /// RIS -> relay, N x L. The relay -> RIS channel is its adjoint
    /// (reciprocity).
    pub h_ir: DMatrix<Complex64>,
    /// BS -> user k, stored as the column vector whose adjoint is the row
    /// channel h_{T,k}^H.
    pub h_t: Vec<DVector<Complex64>>,
    /// Relay -> user k, N-vectors.
    pub h_r: Vec<DVector<Complex64>>,
    /// RIS -> user k, L-vectors.
    pub h_i: Vec<DVector<Complex64>>,
    /// sigma^2, linear milliwatts.
    pub noise_power: f64,
}

impl ChannelSet {
    pub fn num_bs_antennas(&self) -> usize {
        self.h_tr.ncols()
    }

    pub fn num_relay_antennas(&self) -> usize {
        self.h_tr.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.h_t.len()
    }

    pub fn num_ris_elements(&self) -> usize {
        self.h_ti.nrows()
    }

    /// Copy with every RIS-adjacent channel zeroed. Used by the relay-only
    /// baseline and the dead-RIS equivalence checks.
    pub fn with_dead_ris(&self) -> ChannelSet {
        let l = self.num_ris_elements();
        let mut out = self.clone();
        out.h_ti = DMatrix::zeros(l, self.num_bs_antennas());
        out.h_ir = DMatrix::zeros(self.num_relay_antennas(), l);
        for h in &mut out.h_i {
            h.fill(Complex64::new(0.0, 0.0));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.num_relay_antennas(), self.num_bs_antennas());
        let l = self.num_ris_elements();
        if self.h_ti.ncols() != m || self.h_ir.nrows() != n || self.h_ir.ncols() != l {
            return Err(Error::Dimension("inconsistent channel matrix shapes".into()));
        }
        for k in 0..self.num_users() {
            if self.h_t[k].len() != m || self.h_r[k].len() != n || self.h_i[k].len() != l {
                return Err(Error::Dimension(format!("user {k} channel length mismatch")));
            }
        }
        let finite = |c: &Complex64| c.re.is_finite() && c.im.is_finite();
        let all_finite = self.h_tr.iter().all(finite)
            && self.h_ti.iter().all(finite)
            && self.h_ir.iter().all(finite)
            && self.h_t.iter().flat_map(|v| v.iter()).all(finite)
            && self.h_r.iter().flat_map(|v| v.iter()).all(finite)
            && self.h_i.iter().flat_map(|v| v.iter()).all(finite);
        if !all_finite {
            return Err(Error::Domain("non-finite channel entry".into()));
        }
        Ok(())
    }
}

/// Linear attenuation beta = C / d^alpha.
pub fn pathloss(distance: f64, los: bool, params: &FadingParams) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("non-positive distance {distance}")));
    }
    let (offset, alpha) = if los {
        (params.c_offset_los_db, params.alpha_los)
    } else {
        (params.c_offset_nlos_db, params.alpha_nlos)
    };
    let c = 10f64.powf((params.gt_dbi + params.gr_dbi - offset) / 10.0);
    Ok(c / distance.powf(alpha))
}

/// Array kinds used for the deterministic LoS component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrayGeometry {
    /// Uniform linear array along the global y-axis.
    Ula { elements: usize },
    /// Uniform planar array in the y-z plane.
    Upa(UpaLayout),
}

impl ArrayGeometry {
    fn element_count(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { elements } => elements,
            ArrayGeometry::Upa(u) => u.rows * u.cols,
        }
    }

    /// Steering vector for a plane wave along `dir`, spacing in wavelengths.
    fn steering(&self, dir: &Vector3<f64>, spacing: f64) -> DVector<Complex64> {
        let count = self.element_count();
        DVector::from_iterator(
            count,
            (0..count).map(|i| {
                let proj = match *self {
                    ArrayGeometry::Ula { .. } => i as f64 * dir.y,
                    ArrayGeometry::Upa(u) => {
                        let r = (i / u.cols.max(1)) as f64;
                        let c = (i % u.cols.max(1)) as f64;
                        r * dir.y + c * dir.z
                    }
                };
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * spacing * proj)
            }),
        )
    }
}

/// Deterministic unit-modulus LoS matrix (rx_count x tx_count): the outer
/// product of the receive and transmit steering vectors for the angle pair
/// implied by the node positions.
pub fn los_component(
    tx_array: ArrayGeometry,
    rx_array: ArrayGeometry,
    tx_position: &Vector3<f64>,
    rx_position: &Vector3<f64>,
    spacing: f64,
) -> Result<DMatrix<Complex64>> {
    let sep = rx_position - tx_position;
    let d = sep.norm();
    if d <= 0.0 {
        return Err(Error::Domain("coincident node positions".into()));
    }
    let dir = sep / d;
    let a_rx = rx_array.steering(&(-dir), spacing);
    let a_tx = tx_array.steering(&dir, spacing);
    Ok(&a_rx * a_tx.adjoint())
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

fn rayleigh_vector(rng: &mut ChaCha8Rng, len: usize, beta: f64) -> DVector<Complex64> {
    let scale = beta.sqrt();
    DVector::from_iterator(len, (0..len).map(|_| complex_gaussian(rng) * scale))
}

fn rician_matrix(
    rng: &mut ChaCha8Rng,
    los: &DMatrix<Complex64>,
    beta: f64,
    kappa: f64,
) -> DMatrix<Complex64> {
    let (rows, cols) = los.shape();
    let los_w = (kappa / (1.0 + kappa)).sqrt();
    let nlos_w = (1.0 / (1.0 + kappa)).sqrt();
    let scale = beta.sqrt();
    DMatrix::from_fn(rows, cols, |r, c| {
        scale * (los_w * los[(r, c)] + nlos_w * complex_gaussian(rng))
    })
}

/// Draws one seeded channel realization. Identical (geometry, params, seed)
/// yields a bit-identical `ChannelSet`.
pub fn generate_scenario(
    geometry: &SystemGeometry,
    params: &FadingParams,
    seed: u64,
) -> Result<ChannelSet> {
    geometry.validate()?;
    params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // User positions, uniform over the disk by area.
    let mut user_positions = Vec::with_capacity(geometry.k);
    for _ in 0..geometry.k {
        let u: f64 = rng.random();
        let phi: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let r = geometry.user_circle_radius * u.sqrt();
        user_positions.push(
            geometry.user_circle_center + Vector3::new(r * phi.cos(), r * phi.sin(), 0.0),
        );
    }

    let bs = ArrayGeometry::Ula { elements: geometry.m };
    let relay = ArrayGeometry::Ula { elements: geometry.n };
    let ris = ArrayGeometry::Upa(geometry.ris_array);
    let sp = geometry.element_spacing;
    let kappa = params.rician_k;

    let d_tr = (geometry.relay_position - geometry.bs_position).norm();
    let beta_tr = pathloss(d_tr, true, params)?;
    let los_tr = los_component(bs, relay, &geometry.bs_position, &geometry.relay_position, sp)?;
    let h_tr = rician_matrix(&mut rng, &los_tr, beta_tr, kappa);

    let (h_ti, h_ir) = if geometry.l > 0 {
        let d_ti = (geometry.ris_position - geometry.bs_position).norm();
        let beta_ti = pathloss(d_ti, true, params)?;
        let los_ti = los_component(bs, ris, &geometry.bs_position, &geometry.ris_position, sp)?;
        let h_ti = rician_matrix(&mut rng, &los_ti, beta_ti, kappa);

        let d_ir = (geometry.relay_position - geometry.ris_position).norm();
        let beta_ir = pathloss(d_ir, true, params)?;
        let los_ir = los_component(ris, relay, &geometry.ris_position, &geometry.relay_position, sp)?;
        let h_ir = rician_matrix(&mut rng, &los_ir, beta_ir, kappa);
        (h_ti, h_ir)
    } else {
        (
            DMatrix::zeros(0, geometry.m),
            DMatrix::zeros(geometry.n, 0),
        )
    };

    let mut h_t = Vec::with_capacity(geometry.k);
    let mut h_r = Vec::with_capacity(geometry.k);
    let mut h_i = Vec::with_capacity(geometry.k);
    for pos in &user_positions {
        let beta_t = pathloss((pos - geometry.bs_position).norm(), false, params)?;
        h_t.push(rayleigh_vector(&mut rng, geometry.m, beta_t));
        let beta_r = pathloss((pos - geometry.relay_position).norm(), false, params)?;
        h_r.push(rayleigh_vector(&mut rng, geometry.n, beta_r));
        if geometry.l > 0 {
            let beta_i = pathloss((pos - geometry.ris_position).norm(), false, params)?;
            h_i.push(rayleigh_vector(&mut rng, geometry.l, beta_i));
        } else {
            h_i.push(DVector::zeros(0));
        }
    }

    let set = ChannelSet {
        h_tr,
        h_ti,
        h_ir,
        h_t,
        h_r,
        h_i,
        noise_power: params.noise_power,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pathloss_matches_constants() {
        let p = FadingParams::default();
        // d = 1, LoS: beta is the constant C itself.
        let c_los = 10f64.powf(-3.095);
        assert_relative_eq!(pathloss(1.0, true, &p).unwrap(), c_los, max_relative = 1e-12);
        // d = 300, LoS.
        assert_relative_eq!(
            pathloss(300.0, true, &p).unwrap(),
            c_los / 300f64.powf(2.2),
            max_relative = 1e-12
        );
        assert!((pathloss(300.0, true, &p).unwrap() - 2.853e-9).abs() < 1e-11);
        // d = 35, NLoS.
        let c_nlos = 10f64.powf(-2.895);
        assert_relative_eq!(
            pathloss(35.0, false, &p).unwrap(),
            c_nlos / 35f64.powf(3.67),
            max_relative = 1e-12
        );
        assert!((pathloss(35.0, false, &p).unwrap() - 2.743e-9).abs() < 1e-11);
    }

    #[test]
    fn pathloss_rejects_nonpositive_distance() {
        let p = FadingParams::default();
        assert!(pathloss(0.0, true, &p).is_err());
        assert!(pathloss(-1.0, false, &p).is_err());
    }

    #[test]
    fn pathloss_strictly_decreasing() {
        let p = FadingParams::default();
        let mut prev = f64::INFINITY;
        for d in [1.0, 5.0, 50.0, 300.0, 2000.0] {
            let b = pathloss(d, true, &p).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn los_entries_unit_modulus() {
        let g = SystemGeometry::users_center(4, 3, 2, 6);
        let m = los_component(
            ArrayGeometry::Ula { elements: 4 },
            ArrayGeometry::Upa(g.ris_array),
            &g.bs_position,
            &g.ris_position,
            0.5,
        )
        .unwrap();
        assert_eq!(m.shape(), (6, 4));
        for e in m.iter() {
            assert_relative_eq!(e.norm(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn los_scalar_for_single_elements() {
        let m = los_component(
            ArrayGeometry::Ula { elements: 1 },
            ArrayGeometry::Ula { elements: 1 },
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(10.0, 3.0, 0.0),
            0.5,
        )
        .unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_relative_eq!(m[(0, 0)].norm(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn los_broadside_is_all_ones() {
        // Propagation along x, arrays along y/z: zero phase progression.
        let m = los_component(
            ArrayGeometry::Ula { elements: 5 },
            ArrayGeometry::Ula { elements: 3 },
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(100.0, 0.0, 0.0),
            0.5,
        )
        .unwrap();
        for e in m.iter() {
            assert_relative_eq!(e.re, 1.0, max_relative = 1e-12);
            assert!(e.im.abs() < 1e-12);
        }
    }

    #[test]
    fn los_coincident_positions_rejected() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(los_component(
            ArrayGeometry::Ula { elements: 2 },
            ArrayGeometry::Ula { elements: 2 },
            &p,
            &p,
            0.5
        )
        .is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let g = SystemGeometry::users_center(5, 5, 4, 12);
        let p = FadingParams::default();
        let a = generate_scenario(&g, &p, 42).unwrap();
        let b = generate_scenario(&g, &p, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&g, &p, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn huge_rician_k_collapses_to_los() {
        let g = SystemGeometry::users_center(3, 4, 1, 4);
        let mut p = FadingParams::default();
        p.rician_k = 1e12;
        let ch = generate_scenario(&g, &p, 7).unwrap();
        let beta = pathloss(
            (g.relay_position - g.bs_position).norm(),
            true,
            &p,
        )
        .unwrap();
        let los = los_component(
            ArrayGeometry::Ula { elements: 3 },
            ArrayGeometry::Ula { elements: 4 },
            &g.bs_position,
            &g.relay_position,
            g.element_spacing,
        )
        .unwrap();
        for (a, b) in ch.h_tr.iter().zip(los.iter()) {
            let expect = b * beta.sqrt();
            assert!((a - expect).norm() / expect.norm() < 1e-5);
        }
    }

    #[test]
    fn empirical_second_moment_matches_pathloss() {
        let g = SystemGeometry::users_center(1, 1, 1, 1);
        let p = FadingParams::default();
        let beta = pathloss(
            (g.relay_position - g.bs_position).norm(),
            true,
            &p,
        )
        .unwrap();
        let mut acc = 0.0;
        let draws = 10_000;
        for seed in 0..draws {
            let ch = generate_scenario(&g, &p, seed).unwrap();
            acc += ch.h_tr[(0, 0)].norm_sqr();
        }
        let mean = acc / draws as f64;
        assert!(
            (mean - beta).abs() / beta < 0.05,
            "mean {mean} vs beta {beta}"
        );
    }

    #[test]
    fn dead_ris_zeroes_reflected_links() {
        let g = SystemGeometry::users_center(3, 3, 2, 8);
        let ch = generate_scenario(&g, &FadingParams::default(), 1).unwrap();
        let dead = ch.with_dead_ris();
        assert!(dead.h_ti.iter().all(|c| c.norm() == 0.0));
        assert!(dead.h_ir.iter().all(|c| c.norm() == 0.0));
        assert!(dead.h_i.iter().all(|v| v.iter().all(|c| c.norm() == 0.0)));
        assert_eq!(dead.h_tr, ch.h_tr);
    }

    #[test]
    fn geometry_invariants_enforced() {
        let mut g = SystemGeometry::users_center(4, 3, 5, 8);
        assert!(g.validate().is_err()); // K > N
        g = SystemGeometry::users_center(4, 5, 4, 8);
        g.ris_array = UpaLayout { rows: 3, cols: 3 };
        assert!(g.validate().is_err()); // 3x3 != 8
    }
}
