//! Second-order reduced dynamics: cumulant coefficients, expectation values, accessible
//! quantities and a time-domain Monte-Carlo oracle.

mod accessible;
mod cumulant;
mod monte_carlo;

pub use accessible::*;
pub use cumulant::*;
pub use monte_carlo::*;

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};
use crate::noise::SpectrumSet;
use crate::pauli::{self, Mat2};
use crate::quadrature::{merge_intervals, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    /// Qubit splitting Ω (rad/s).
    pub splitting: f64,
    /// Optional Ω_cut: integrals keep |ω| ≤ Ω_cut and |ω ∓ Ω| ≤ Ω_cut.
    pub cutoff: Option<f64>,
    pub quad: QuadratureSpec,
}

impl SystemConfig {
    pub fn new(splitting: f64) -> Result<Self> {
        let s = Self { splitting, cutoff: None, quad: QuadratureSpec::default() };
        s.validate()?;
        Ok(s)
    }

    pub fn with_cutoff(self, cutoff: f64) -> Result<Self> {
        let s = Self { cutoff: Some(cutoff), ..self };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.splitting.is_finite() && self.splitting >= 0.0) {
            return invalid(format!("splitting Ω = {} must be finite and ≥ 0", self.splitting));
        }
        if let Some(c) = self.cutoff {
            if !(c.is_finite() && c > 0.0) {
                return invalid(format!("cutoff {c} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Axis::X),
            1 => Ok(Axis::Y),
            2 => Ok(Axis::Z),
            _ => invalid(format!("axis index {i} out of range")),
        }
    }

    pub fn sigma(self) -> Mat2 {
        pauli::cartesian(self.index())
    }

    pub fn label(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

/// f^γ_α = ½tr[σ_α σ_γ σ_α σ_γ], with α = 0 the identity.
pub fn pauli_sign(gamma: Axis, alpha: Option<Axis>) -> f64 {
    match alpha {
        None => 1.0,
        Some(a) if a == gamma => 1.0,
        Some(_) => -1.0,
    }
}

/// Integration pieces for a spectrum evaluated at ω (and at −ω when `mirrored`).
pub(crate) fn integration_pieces(noise: &SpectrumSet, sys: &SystemConfig, mirrored: bool) -> Vec<(f64, f64)> {
    let mut iv = noise.support();
    if mirrored {
        let neg: Vec<_> = iv.iter().map(|&(a, b)| (-b, -a)).collect();
        iv.extend(neg);
    }
    let mut iv = merge_intervals(iv);
    if let Some(c) = sys.cutoff {
        let windows = merge_intervals(vec![(-c, c), (sys.splitting - c, sys.splitting + c), (-sys.splitting - c, -sys.splitting + c)]);
        iv = intersect(&iv, &windows);
    }
    let mut kinks = noise.kinks();
    if mirrored {
        let neg: Vec<f64> = kinks.iter().map(|k| -k).collect();
        kinks.extend(neg);
    }
    split_at(&iv, &kinks)
}

pub(crate) fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if hi > lo {
                out.push((lo, hi));
            }
        }
    }
    merge_intervals(out)
}

fn split_at(iv: &[(f64, f64)], kinks: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in iv {
        let mut lo = a;
        for &k in kinks.iter().filter(|&&k| k > a && k < b) {
            if k > lo {
                out.push((lo, k));
                lo = k;
            }
        }
        out.push((lo, b));
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

/// Initial panel width: the filter resolution 2π/T or the narrowest spectral feature.
pub(crate) fn panel_width(noise: &SpectrumSet, duration: f64) -> f64 {
    let f = 2.0 * PI / duration;
    noise.feature_scale().map_or(f, |s| f.min(s))
}

pub(crate) const INV_2PI: f64 = 1.0 / (2.0 * PI);

pub(crate) fn zero4() -> [C64; 4] {
    [C64::new(0.0, 0.0); 4]
}
