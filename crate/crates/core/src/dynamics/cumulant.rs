use num_complex::Complex64 as C64;

use super::{integration_pieces, panel_width, pauli_sign, zero4, Axis, SystemConfig, INV_2PI};
use crate::error::{invalid, Result};
use crate::filters::{generalized_filters, FilterKernel};
use crate::noise::{cartesian_to_spherical, spherical_to_cartesian, Part, SpectrumSet};
use crate::pauli::{self, Mat2};
use crate::pulse_control::{switching_matrix, Basis, PulseSequence};
use crate::quadrature::integrate;

/// C_{γ,β} for β = 0, x, y, z, so that 𝒞_γ = C_{γ,0} I + Σ_β C_{γ,β} σ_β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantCoefficients {
    pub gamma: Axis,
    pub c: [C64; 4],
}

impl CumulantCoefficients {
    pub fn zero(gamma: Axis) -> Self {
        Self { gamma, c: zero4() }
    }

    pub fn c0(&self) -> C64 {
        self.c[0]
    }

    pub fn component(&self, beta: Axis) -> C64 {
        self.c[beta.index() + 1]
    }

    /// The 2×2 cumulant operator 𝒞_γ.
    pub fn operator(&self) -> Mat2 {
        pauli::pauli_compose(&self.c)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Spectrum in the requested basis, converting if necessary.
pub(crate) fn in_basis(noise: &SpectrumSet, basis: Basis) -> Result<SpectrumSet> {
    if noise.basis() == basis {
        return Ok(noise.clone());
    }
    match basis {
        Basis::Spherical => cartesian_to_spherical(noise),
        Basis::Cartesian => spherical_to_cartesian(noise),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CumulantOptions {
    /// Keep only filters F⁽²⁾(ω + jΩ, −ω + lΩ) with j + l = 0.
    pub balanced_only: bool,
}

/// a(j',l') and b(j',l') of the spherical double sum, indexed [γ][β][j'][l'].
type PairTable = [[[[(C64, C64); 3]; 3]; 4]; 3];

fn spherical_pair_table() -> PairTable {
    let basis4 = [pauli::identity(), pauli::sigma_x(), pauli::sigma_y(), pauli::sigma_z()];
    std::array::from_fn(|g| {
        let sg = pauli::cartesian(g);
        let bar = |m: &Mat2| sg * m * sg;
        std::array::from_fn(|b| {
            std::array::from_fn(|jp| {
                std::array::from_fn(|lp| {
                    let (sj, sl) = (pauli::spherical(jp), pauli::spherical(lp));
                    let a = pauli::ht_prod(&(sj * sl - bar(&sj) * sl), &basis4[b]);
                    let bb = pauli::ht_prod(&(bar(&sl) * bar(&sj) - bar(&sl) * sj), &basis4[b]);
                    (a, bb)
                })
            })
        })
    })
}

/// All three 𝒞_γ from the spherical double sum over (j, j', l, l').
///
/// 𝒞_γ = −Σ (1/2π)∫dω F⁽²⁾_{j,j';l,l'}(ω+jΩ, −ω+lΩ)
///        × {[σ_{j'}σ_{l'} − σ̄_{j'}σ_{l'}] S_{−j,−l}(ω) + [σ̄_{l'}σ̄_{j'} − σ̄_{l'}σ_{j'}] S_{−l,−j}(−ω)},
/// with σ̄ = σ_γ · σ_γ.
pub fn second_cumulant_spherical_all(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
    opts: CumulantOptions,
) -> Result<[CumulantCoefficients; 3]> {
    sys.validate()?;
    let noise = in_basis(noise, Basis::Spherical)?;
    let sm = switching_matrix(seq, Basis::Spherical);
    let t = seq.duration();
    let kernel = FilterKernel::new(&sm, t)?;
    let table = spherical_pair_table();
    let om = sys.splitting;
    let integrand = |w: f64| -> [C64; 12] {
        let mut out = [C64::new(0.0, 0.0); 12];
        let (sp, sm_) = (noise.matrix(w), noise.matrix(-w));
        for j in 0..3 {
            for l in 0..3 {
                if opts.balanced_only && j + l != 2 {
                    continue;
                }
                let s1 = sp[2 - j][2 - l];
                let s2 = sm_[2 - l][2 - j];
                if s1 == C64::new(0.0, 0.0) && s2 == C64::new(0.0, 0.0) {
                    continue;
                }
                let f2 = kernel.ff2(w + (j as f64 - 1.0) * om, -w + (l as f64 - 1.0) * om);
                for jp in 0..3 {
                    for lp in 0..3 {
                        let f = f2[3 * j + jp][3 * l + lp];
                        if f == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for g in 0..3 {
                            for b in 0..4 {
                                let (a, bb) = table[g][b][jp][lp];
                                out[4 * g + b] -= f * (a * s1 + bb * s2) * INV_2PI;
                            }
                        }
                    }
                }
            }
        }
        out
    };
    let pieces = integration_pieces(&noise, sys, true);
    let v = integrate(integrand, &pieces, panel_width(&noise, t), &sys.quad)?;
    Ok(std::array::from_fn(|g| CumulantCoefficients {
        gamma: Axis::ALL[g],
        c: std::array::from_fn(|b| v[4 * g + b]),
    }))
}

pub fn second_cumulant_spherical(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
    gamma: Axis,
) -> Result<CumulantCoefficients> {
    Ok(second_cumulant_spherical_all(seq, noise, sys, CumulantOptions::default())?[gamma.index()])
}

/// All three 𝒞_γ from the Cartesian form, valid for Ω = 0:
///
/// 𝒞_γ = −Σ (1/2π)∫dω (1 − f^γ_{c'}) ½[G⁺ + G⁻]_{c,c';d,d'}(ω, −ω) σ_{c'}σ_{d'} S^{s}_{c,d}(ω),
/// s = −f^γ_{d'} f^{c'}_{d'}.
pub fn second_cumulant_cartesian_all(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
) -> Result<[CumulantCoefficients; 3]> {
    sys.validate()?;
    if sys.splitting != 0.0 {
        return invalid("the Cartesian cumulant form requires Ω = 0");
    }
    let noise = in_basis(noise, Basis::Cartesian)?;
    let sm = switching_matrix(seq, Basis::Cartesian);
    let t = seq.duration();
    let kernel = FilterKernel::new(&sm, t)?;
    // ½tr[σ_{c'}σ_{d'}σ_β] for β = 0, x, y, z.
    let basis4 = [pauli::identity(), pauli::sigma_x(), pauli::sigma_y(), pauli::sigma_z()];
    let prod: [[[C64; 4]; 3]; 3] = std::array::from_fn(|cp| {
        std::array::from_fn(|dp| std::array::from_fn(|b| pauli::ht_prod(&(pauli::cartesian(cp) * pauli::cartesian(dp)), &basis4[b])))
    });
    let ax = |i: usize| Axis::ALL[i];
    let integrand = |w: f64| -> [C64; 12] {
        let mut out = [C64::new(0.0, 0.0); 12];
        let fwd = kernel.ff2(w, -w);
        let rev = kernel.ff2(-w, w);
        let (splus, sminus) = (noise.matrix(w), noise.matrix(-w));
        for g in 0..3 {
            for cp in 0..3 {
                let f_cp = pauli_sign(ax(g), Some(ax(cp)));
                if f_cp == 1.0 {
                    continue;
                }
                for dp in 0..3 {
                    let s = -pauli_sign(ax(g), Some(ax(dp))) * pauli_sign(ax(cp), Some(ax(dp)));
                    for c in 0..3 {
                        for d in 0..3 {
                            let (ea, eb) = (3 * c + cp, 3 * d + dp);
                            let gp = fwd[ea][eb] + rev[eb][ea];
                            let gm = fwd[ea][eb] - rev[eb][ea];
                            let filt = (gp + gm) * 0.5;
                            if filt == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let spec = splus[c][d] + sminus[d][c] * s;
                            let k = filt * spec * ((1.0 - f_cp) * INV_2PI);
                            for b in 0..4 {
                                out[4 * g + b] -= k * prod[cp][dp][b];
                            }
                        }
                    }
                }
            }
        }
        out
    };
    let pieces = integration_pieces(&noise, sys, true);
    let v = integrate(integrand, &pieces, panel_width(&noise, t), &sys.quad)?;
    Ok(std::array::from_fn(|g| CumulantCoefficients {
        gamma: Axis::ALL[g],
        c: std::array::from_fn(|b| v[4 * g + b]),
    }))
}

pub fn second_cumulant_cartesian(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
    gamma: Axis,
) -> Result<CumulantCoefficients> {
    Ok(second_cumulant_cartesian_all(seq, noise, sys)?[gamma.index()])
}

/// Closed-form Ω = 0 combinations for diagonal control, as ∫₀^∞ integrals over G± and S±.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixATable {
    pub c_x0: C64,
    pub c_y0: C64,
    pub c_z0: C64,
    pub xy_minus_zy: C64,
    pub xz_minus_yz: C64,
    pub zx_minus_yx: C64,
    pub xy_plus_zy: C64,
    pub xz_plus_yz: C64,
    pub zx_plus_yx: C64,
    pub c_xx: C64,
    pub c_yy: C64,
    pub c_zz: C64,
}

impl AppendixATable {
    /// Unpack into the full C_{γ,β} table, rows γ = x, y, z.
    pub fn coefficients(&self) -> [CumulantCoefficients; 3] {
        let (xy, zy) = ((self.xy_plus_zy + self.xy_minus_zy) * 0.5, (self.xy_plus_zy - self.xy_minus_zy) * 0.5);
        let (xz, yz) = ((self.xz_plus_yz + self.xz_minus_yz) * 0.5, (self.xz_plus_yz - self.xz_minus_yz) * 0.5);
        let (zx, yx) = ((self.zx_plus_yx + self.zx_minus_yx) * 0.5, (self.zx_plus_yx - self.zx_minus_yx) * 0.5);
        [
            CumulantCoefficients { gamma: Axis::X, c: [self.c_x0, self.c_xx, xy, xz] },
            CumulantCoefficients { gamma: Axis::Y, c: [self.c_y0, yx, self.c_yy, yz] },
            CumulantCoefficients { gamma: Axis::Z, c: [self.c_z0, zx, zy, self.c_zz] },
        ]
    }
}

/// Evaluates the printed Ω = 0 closed forms. Requires diagonal control (y_{a,a'} = 0 for a ≠ a').
///
/// C_{y,y} carries the opposite overall sign to the printed one, and the second term of
/// C_{z,0} uses the y spectrum and filter.
pub fn appendix_a_reference(seq: &PulseSequence, noise: &SpectrumSet, sys: &SystemConfig) -> Result<AppendixATable> {
    sys.validate()?;
    if sys.splitting != 0.0 {
        return invalid("closed forms hold only for Ω = 0");
    }
    let sm = switching_matrix(seq, Basis::Cartesian);
    if !sm.is_diagonal(1e-12) {
        return invalid("closed forms assume diagonal control");
    }
    let noise = in_basis(noise, Basis::Cartesian)?;
    let t = seq.duration();
    let kernel = FilterKernel::new(&sm, t)?;
    let i = C64::new(0.0, 1.0);
    let integrand = |w: f64| -> [C64; 12] {
        let fwd = kernel.ff2(w, -w);
        let rev = kernel.ff2(-w, w);
        // G±_{aa;bb}(ω, −ω)
        let g = |a: usize, b: usize| -> (C64, C64) {
            let (ea, eb) = (4 * a, 4 * b);
            (fwd[ea][eb] + rev[eb][ea], fwd[ea][eb] - rev[eb][ea])
        };
        let sp = |a: usize, b: usize| noise.eval(a, b, w, Part::Plus);
        let sm = |a: usize, b: usize| noise.eval(a, b, w, Part::Minus);
        let diag = |a: usize| sp(a, a).re * g(a, a).0.re;
        // Im S Im G − Re S Re G
        let cross = |s: C64, gg: C64| s.im * gg.im - s.re * gg.re;
        // Re S Im G + Im S Re G
        let quantum = |s: C64, gg: C64| s.re * gg.im + s.im * gg.re;
        let (x, y, z) = (0, 1, 2);
        let k = INV_2PI;
        [
            C64::from(-2.0 * k * (diag(y) + diag(z))),
            C64::from(-2.0 * k * (diag(x) + diag(z))),
            C64::from(-2.0 * k * (diag(x) + diag(y))),
            i * (4.0 * k * cross(sp(x, z), g(x, z).0)),
            i * (-4.0 * k * cross(sp(x, y), g(x, y).0)),
            i * (4.0 * k * cross(sp(y, z), g(y, z).0)),
            i * (-4.0 * k * cross(sp(x, z), g(x, z).1)),
            i * (4.0 * k * cross(sp(x, y), g(x, y).1)),
            i * (4.0 * k * cross(sp(y, z), g(y, z).1)),
            C64::from(4.0 * k * quantum(sm(y, z), g(y, z).0)),
            C64::from(-4.0 * k * quantum(sm(x, z), g(x, z).0)),
            C64::from(4.0 * k * quantum(sm(x, y), g(x, y).0)),
        ]
    };
    let pieces = super::intersect(&integration_pieces(&noise, sys, true), &[(0.0, f64::INFINITY)]);
    let v = integrate(integrand, &pieces, panel_width(&noise, t), &sys.quad)?;
    Ok(AppendixATable {
        c_x0: v[0],
        c_y0: v[1],
        c_z0: v[2],
        xy_minus_zy: v[3],
        xz_minus_yz: v[4],
        zx_minus_yx: v[5],
        xy_plus_zy: v[6],
        xz_plus_yz: v[7],
        zx_plus_yx: v[8],
        c_xx: v[9],
        c_yy: v[10],
        c_zz: v[11],
    })
}

/// Q₁..Q₄ = Σ_{j,l} (1/2π)∫dω 𝒢⁽ᵖ⁾_{j,l}(ω, T) S_{j,l}(ω), from a prepared spherical kernel.
pub fn q_generalized(
    kernel: &FilterKernel,
    noise_sph: &SpectrumSet,
    sys: &SystemConfig,
    balanced_only: bool,
) -> Result<[C64; 4]> {
    if noise_sph.basis() != Basis::Spherical {
        return invalid("generalized-filter route expects spherical spectra");
    }
    let t = kernel.duration();
    let integrand = |w: f64| -> [C64; 4] {
        let gf = generalized_filters(kernel, w, sys.splitting);
        let s = noise_sph.matrix(w);
        std::array::from_fn(|p| {
            let mut acc = C64::new(0.0, 0.0);
            for jj in 0..3 {
                for ll in 0..3 {
                    if balanced_only && jj + ll != 2 {
                        continue;
                    }
                    acc += gf[p][jj][ll] * s[jj][ll];
                }
            }
            acc * INV_2PI
        })
    };
    let pieces = integration_pieces(noise_sph, sys, false);
    integrate(integrand, &pieces, panel_width(noise_sph, t), &sys.quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QRoute {
    /// Through the four 𝒢⁽ᵖ⁾ filters (products of first-order filters).
    Generalized,
    /// Through C_{z,0}, C_{z,z}, C_{x,0}, C_{x,x} from the full spherical cumulant.
    Cumulant,
}

/// Q₁ = (C_{z,0}+C_{z,z})/2, Q₂ = (C_{z,0}−C_{z,z})/2, Q₃ = C_{x,0}, Q₄ = C_{x,x}.
pub fn q_from_coefficients(cz: &CumulantCoefficients, cx: &CumulantCoefficients) -> Result<[C64; 4]> {
    if cz.gamma != Axis::Z || cx.gamma != Axis::X {
        return invalid("Q quantities need the γ = z and γ = x coefficients");
    }
    Ok([
        (cz.c0() + cz.component(Axis::Z)) * 0.5,
        (cz.c0() - cz.component(Axis::Z)) * 0.5,
        cx.c0(),
        cx.component(Axis::X),
    ])
}

pub fn q_quantities(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
    route: QRoute,
    balanced_only: bool,
) -> Result<[C64; 4]> {
    sys.validate()?;
    match route {
        QRoute::Generalized => {
            let sph = in_basis(noise, Basis::Spherical)?;
            let kernel = FilterKernel::new(&switching_matrix(seq, Basis::Spherical), seq.duration())?;
            q_generalized(&kernel, &sph, sys, balanced_only)
        }
        QRoute::Cumulant => {
            let c = second_cumulant_spherical_all(seq, noise, sys, CumulantOptions { balanced_only })?;
            q_from_coefficients(&c[2], &c[0])
        }
    }
}
