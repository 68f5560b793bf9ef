use num_complex::Complex64 as C64;

use super::{Axis, CumulantCoefficients, SystemConfig};
use crate::error::{QnsError, Result};
use crate::noise::SpectrumSet;
use crate::pauli::{self, Mat2};
use crate::pulse_control::PulseSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Prepare η_{±,α} = (I ± σ_α)/2, measure σ_γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeasurementSetting {
    pub prep: Axis,
    pub sign: Sign,
    pub observable: Axis,
}

impl MeasurementSetting {
    pub fn rho(&self) -> Mat2 {
        (pauli::identity() + self.prep.sigma().scale(self.sign.value())).scale(0.5)
    }

    /// The six preparations ±x, ±y, ±z for one observable.
    pub fn all_for(observable: Axis) -> [MeasurementSetting; 6] {
        std::array::from_fn(|k| MeasurementSetting {
            prep: Axis::ALL[k / 2],
            sign: if k % 2 == 0 { Sign::Plus } else { Sign::Minus },
            observable,
        })
    }
}

/// (cosh h, sinh h / h) for h² = `h2`, both even in h.
fn cosh_sinhc(h2: C64) -> (C64, C64) {
    if h2.norm() < 1e-8 {
        (1.0 + h2 / 2.0 + h2 * h2 / 24.0, 1.0 + h2 / 6.0 + h2 * h2 / 120.0)
    } else {
        let h = h2.sqrt();
        (h.cosh(), h.sinh() / h)
    }
}

/// e^{c₀I + v·σ} = e^{c₀}(cosh h I + (sinh h / h) v·σ), h² = v·v.
pub fn exp_pauli(c: &[C64; 4]) -> Result<Mat2> {
    let h2 = c[1] * c[1] + c[2] * c[2] + c[3] * c[3];
    let (ch, sc) = cosh_sinhc(h2);
    let e0 = c[0].exp();
    let m = pauli::pauli_compose(&[e0 * ch, e0 * sc * c[1], e0 * sc * c[2], e0 * sc * c[3]]);
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QnsError::NumericalFailure("non-finite cumulant exponential".into()));
    }
    Ok(m)
}

/// tr[e^{𝒞_γ} ρ σ_γ] before discarding the imaginary part.
pub fn expectation_complex(rho: &Mat2, coeffs: &CumulantCoefficients) -> Result<C64> {
    let e = exp_pauli(&coeffs.c)?;
    Ok((e * rho * coeffs.gamma.sigma()).trace())
}

/// tr[e^{𝒞_γ} ρ σ_γ] with the observable γ carried by `coeffs`.
pub fn expectation_value(rho: &Mat2, coeffs: &CumulantCoefficients) -> Result<f64> {
    let z = expectation_complex(rho, coeffs)?;
    if z.im.abs() > 1e-9 * (1.0 + z.re.abs()) {
        log::warn!("expectation value has imaginary part {:e}", z.im);
    }
    Ok(z.re)
}

/// M^{(γ)}_{±,α} = E(η_{+,α}) ± E(η_{−,α}), i.e. tr[e^{𝒞_γ}σ_γ] and tr[e^{𝒞_γ}σ_ασ_γ].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessibleM {
    pub gamma: Axis,
    /// M_{+,α} for α = x, y, z.
    pub plus: [C64; 3],
    /// M_{−,α} for α = x, y, z.
    pub minus: [C64; 3],
}

impl AccessibleM {
    pub fn get(&self, r: Sign, alpha: Axis) -> C64 {
        match r {
            Sign::Plus => self.plus[alpha.index()],
            Sign::Minus => self.minus[alpha.index()],
        }
    }

    /// From measured E(η_{+,α}) and E(η_{−,α}), indexed [α][0 = +, 1 = −].
    pub fn from_expectations(gamma: Axis, e: &[[f64; 2]; 3]) -> Self {
        Self {
            gamma,
            plus: std::array::from_fn(|a| C64::from(e[a][0] + e[a][1])),
            minus: std::array::from_fn(|a| C64::from(e[a][0] - e[a][1])),
        }
    }
}

pub fn m_from_coefficients(coeffs: &CumulantCoefficients) -> Result<AccessibleM> {
    let e = exp_pauli(&coeffs.c)?;
    let sg = coeffs.gamma.sigma();
    let plus = (e * sg).trace();
    Ok(AccessibleM {
        gamma: coeffs.gamma,
        plus: [plus; 3],
        minus: std::array::from_fn(|a| (e * pauli::cartesian(a) * sg).trace()),
    })
}

/// A single M^{(γ)}_{r,α} predicted for a sequence.
pub fn accessible_m(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
    gamma: Axis,
    r: Sign,
    alpha: Axis,
) -> Result<C64> {
    let c = super::second_cumulant_spherical(seq, noise, sys, gamma)?;
    Ok(m_from_coefficients(&c)?.get(r, alpha))
}

fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Inverts the M expressions for C_{γ,β}.
///
/// With K = 2e^{C_{γ,0}} sinh h / h: M_{+,α} = K C_{γ,γ}, M_{−,γ} = 2e^{C_{γ,0}} cosh h and
/// M_{−,α} = iε_{αγβ} K C_{γ,β} for α ≠ γ. Then e^{2C_{γ,0}} sinh²h = Σ/4 with
/// Σ = M_{+}² − Σ_{α≠γ} M_{−,α}², h = asinh√(sinh²h) on the principal branch, and
/// e^{C_{γ,0}} = M_{−,γ}/(2 cosh h) fixes the remaining sign. C_{γ,0} is the principal log.
pub fn extract_coefficients(m: &AccessibleM) -> Result<CumulantCoefficients> {
    let fail = |msg: String| Err(QnsError::ExtractionFailure(msg));
    let all = m.plus.iter().chain(&m.minus);
    if all.clone().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return fail("non-finite M values".into());
    }
    let g = m.gamma.index();
    let mp = m.plus.iter().sum::<C64>() / 3.0;
    let spread = m.plus.iter().map(|z| (z - mp).norm()).fold(0.0, f64::max);
    if spread > 1e-8 * (1.0 + mp.norm()) {
        return fail(format!("M_(+,α) values disagree by {spread:e}; they must be independent of α"));
    }
    let others: Vec<usize> = (0..3).filter(|&a| a != g).collect();
    let sigma = mp * mp - others.iter().map(|&a| m.minus[a] * m.minus[a]).sum::<C64>();
    let half = m.minus[g] / 2.0;
    let e2 = half * half - sigma / 4.0;
    if e2.norm() < 1e-300 {
        return fail("e^{2C_0} vanishes: the M set is inconsistent".into());
    }
    let q = sigma / (4.0 * e2);
    let h = q.sqrt().asinh();
    let (ch, sc) = cosh_sinhc(h * h);
    if ch.norm() < 1e-300 {
        return fail("cosh h vanishes; C_0 is undetermined".into());
    }
    let e0 = m.minus[g] / (2.0 * ch);
    if e0.norm() < 1e-300 {
        return fail("M_(−,γ) vanishes; C_0 is undetermined".into());
    }
    let k = 2.0 * e0 * sc;
    let mut c = [C64::new(0.0, 0.0); 4];
    c[0] = e0.ln();
    c[g + 1] = mp / k;
    for &b in &others {
        let a = 3 - g - b;
        let eps = levi_civita(a, g, b);
        c[b + 1] = m.minus[a] / (C64::new(0.0, eps) * k);
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return fail("non-finite extracted coefficients".into());
    }
    Ok(CumulantCoefficients { gamma: m.gamma, c })
}
