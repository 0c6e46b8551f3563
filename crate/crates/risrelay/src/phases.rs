//! Unit-modulus reflection coefficients and the lifted auxiliary form used
//! by the phase optimizers.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

const TAU: f64 = 2.0 * PI;

/// L unit-modulus reflection coefficients plus the auxiliary lifting
/// element t. Only the relative phases v_l / t are physical; all quadratic
/// forms built on the lift are invariant to a common rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub v: DVector<Complex64>,
    pub t: Complex64,
}

impl PhaseVector {
    /// Identity phases: all coefficients 1, t = 1.
    pub fn identity(l: usize) -> Self {
        PhaseVector {
            v: DVector::from_element(l, Complex64::new(1.0, 0.0)),
            t: Complex64::new(1.0, 0.0),
        }
    }

    /// Lift explicit phase angles with t = 1.
    pub fn from_phases(phases: &[f64]) -> Self {
        PhaseVector {
            v: DVector::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p))),
            t: Complex64::new(1.0, 0.0),
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.len() == 0
    }

    /// The lifted (L+1)-vector [v; t].
    pub fn lifted(&self) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.len() + 1);
        out.rows_mut(0, self.len()).copy_from(&self.v);
        out[self.len()] = self.t;
        out
    }

    pub fn from_lifted(bar: &DVector<Complex64>) -> Self {
        let l = bar.len() - 1;
        PhaseVector {
            v: bar.rows(0, l).into_owned(),
            t: bar[l],
        }
    }

    /// Phase angles theta_l = arg(v_l) - arg(t), wrapped to [0, 2*pi).
    pub fn extract_phases(&self) -> Vec<f64> {
        let t_arg = self.t.arg();
        self.v
            .iter()
            .map(|c| (c.arg() - t_arg).rem_euclid(TAU))
            .collect()
    }

    /// Reflection coefficients e^{j theta_l} with the lift rotated out.
    pub fn reflection_coefficients(&self) -> DVector<Complex64> {
        let rot = self.t.conj();
        self.v.map(|c| {
            let z = c * rot;
            z / z.norm()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v.iter().chain(std::iter::once(&self.t)).all(|c| (c.norm() - 1.0).abs() < 1e-9);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain("phase vector entries must be unit modulus".into()))
        }
    }
}

/// Discrete phase set F = {0, dt, ..., (2^b - 1) dt}, dt = 2*pi / 2^b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretePhaseConfig {
    pub bits: u32,
}

impl DiscretePhaseConfig {
    pub fn new(bits: u32) -> Result<Self> {
        if bits < 1 {
            return Err(Error::Domain("bits per element must be >= 1".into()));
        }
        Ok(DiscretePhaseConfig { bits })
    }

    pub fn num_levels(&self) -> usize {
        1usize << self.bits
    }

    pub fn step(&self) -> f64 {
        TAU / self.num_levels() as f64
    }

    pub fn levels(&self) -> Vec<f64> {
        let dt = self.step();
        (0..self.num_levels()).map(|i| i as f64 * dt).collect()
    }

    /// Nearest level under circular distance. Exact midpoints round toward
    /// the lower level.
    pub fn quantize_angle(&self, theta: f64) -> f64 {
        let dt = self.step();
        let wrapped = theta.rem_euclid(TAU);
        let idx_f = wrapped / dt;
        let lower = idx_f.floor();
        let frac = idx_f - lower;
        let idx = if frac > 0.5 { lower + 1.0 } else { lower };
        (idx * dt).rem_euclid(TAU)
    }
}

/// Round each phase to the closest feasible discrete level.
pub fn quantize_phases(theta: &[f64], b: u32) -> Result<Vec<f64>> {
    let cfg = DiscretePhaseConfig::new(b)?;
    Ok(theta.iter().map(|&t| cfg.quantize_angle(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn all_ones_extracts_zero_phases() {
        let pv = PhaseVector::identity(4);
        assert!(pv.extract_phases().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn global_rotation_invariance() {
        let rot = Complex64::from_polar(1.0, PI / 3.0);
        let pv = PhaseVector {
            v: DVector::from_element(3, rot),
            t: rot,
        };
        for p in pv.extract_phases() {
            assert!(p.abs() < 1e-12 || (p - TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_examples() {
        // theta = 0.9 * dt with b = 2 rounds up to dt.
        let cfg = DiscretePhaseConfig::new(2).unwrap();
        let dt = cfg.step();
        assert_relative_eq!(cfg.quantize_angle(0.9 * dt), dt, max_relative = 1e-12);
        // Levels are fixed points.
        for lvl in cfg.levels() {
            assert_relative_eq!(cfg.quantize_angle(lvl), lvl, max_relative = 1e-12);
        }
        // Circular wrap: 2*pi - 0.1 with b = 1 is closer to 0 than to pi.
        let cfg1 = DiscretePhaseConfig::new(1).unwrap();
        assert_eq!(cfg1.quantize_angle(TAU - 0.1), 0.0);
        // Exact midpoint rounds toward the lower level.
        assert_eq!(cfg1.quantize_angle(PI / 2.0), 0.0);
    }

    proptest! {
        #[test]
        fn quantization_error_within_half_step(theta in 0.0..TAU, b in 1u32..4) {
            let cfg = DiscretePhaseConfig::new(b).unwrap();
            let q = cfg.quantize_angle(theta);
            let diff = (theta - q).rem_euclid(TAU);
            let circ = diff.min(TAU - diff);
            prop_assert!(circ <= cfg.step() / 2.0 + 1e-12);
        }

        #[test]
        fn extract_then_lift_preserves_coefficients(
            phases in proptest::collection::vec(0.0..TAU, 1..6),
            global in 0.0..TAU,
        ) {
            let rot = Complex64::from_polar(1.0, global);
            let pv = PhaseVector {
                v: DVector::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p) * rot)),
                t: rot,
            };
            let relifted = PhaseVector::from_phases(&pv.extract_phases());
            let a = pv.reflection_coefficients();
            let b = relifted.reflection_coefficients();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).norm() < 1e-9);
            }
        }
    }
}
