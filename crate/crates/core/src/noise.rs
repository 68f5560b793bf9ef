//! Multiaxis cross-spectra, their classical/quantum split, and classical trajectory synthesis.
//!
//! Convention: S_{a,b}(ω) = ∫dτ e^{−iωτ} ⟨B_a(τ)B_b(0)⟩, so that
//! S^±_{a,b}(ω) = S_{a,b}(ω) ± S_{b,a}(−ω) in either basis.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::pulse_control::Basis;

/// Gaussian tails beyond this many widths are treated as zero.
pub const GAUSSIAN_SUPPORT_WIDTHS: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Full,
    Plus,
    Minus,
}

/// Linear-interpolated complex table, zero outside its range.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    omega: Vec<f64>,
    values: Vec<C64>,
}

impl Table {
    pub fn new(omega: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if omega.len() != values.len() || omega.len() < 2 {
            return invalid("spectrum table needs ≥ 2 rows with matching lengths");
        }
        if omega.windows(2).any(|w| !(w[1] > w[0])) || omega.iter().any(|w| !w.is_finite()) {
            return invalid("spectrum table frequencies must be finite and strictly increasing");
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("spectrum table values must be finite");
        }
        Ok(Self { omega, values })
    }

    pub fn eval(&self, w: f64) -> C64 {
        let n = self.omega.len();
        if w < self.omega[0] || w > self.omega[n - 1] {
            return C64::new(0.0, 0.0);
        }
        let k = self.omega.partition_point(|&x| x <= w).clamp(1, n - 1);
        let (x0, x1) = (self.omega[k - 1], self.omega[k]);
        let t = (w - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    pub fn range(&self) -> (f64, f64) {
        (self.omega[0], self.omega[self.omega.len() - 1])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.omega
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// e^{−(ω−center)²/(2·width²)}.
    Gaussian { center: f64, width: f64 },
    Table(Arc<Table>),
}

impl Shape {
    fn eval(&self, w: f64) -> C64 {
        match self {
            Shape::Gaussian { center, width } => {
                let x = (w - center) / width;
                if x.abs() > GAUSSIAN_SUPPORT_WIDTHS {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new((-0.5 * x * x).exp(), 0.0)
                }
            }
            Shape::Table(t) => t.eval(w),
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Shape::Gaussian { center, width } => {
                (center - GAUSSIAN_SUPPORT_WIDTHS * width, center + GAUSSIAN_SUPPORT_WIDTHS * width)
            }
            Shape::Table(t) => t.range(),
        }
    }
}

/// One spectrum entry: Σ weight·shape(ω).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumEntry {
    pub terms: Vec<(C64, Shape)>,
}

impl SpectrumEntry {
    pub fn eval(&self, w: f64) -> C64 {
        self.terms.iter().map(|(c, s)| c * s.eval(w)).sum()
    }

    /// Merged intervals outside which the entry vanishes.
    pub fn support(&self) -> Vec<(f64, f64)> {
        crate::quadrature::merge_intervals(self.terms.iter().map(|(_, s)| s.support()).collect())
    }

    fn scaled(&self, c: C64) -> Self {
        Self { terms: self.terms.iter().map(|(w, s)| (w * c, s.clone())).collect() }
    }

    /// Merge terms sharing a shape; drop weights that cancel to rounding level.
    fn coalesce(&mut self) {
        let mut out: Vec<(C64, Shape, f64)> = Vec::new();
        for (c, s) in self.terms.drain(..) {
            match out.iter_mut().find(|(_, t, _)| *t == s) {
                Some((acc, _, mag)) => {
                    *acc += c;
                    *mag += c.norm();
                }
                None => out.push((c, s, c.norm())),
            }
        }
        self.terms = out.into_iter().filter(|(c, _, mag)| c.norm() > 1e-14 * mag).map(|(c, s, _)| (c, s)).collect();
    }
}

/// 3×3 matrix of cross-power spectral densities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSet {
    basis: Basis,
    entries: [[SpectrumEntry; 3]; 3],
}

impl SpectrumSet {
    pub fn new(basis: Basis, entries: [[SpectrumEntry; 3]; 3]) -> Self {
        Self { basis, entries }
    }

    pub fn zero(basis: Basis) -> Self {
        Self::new(basis, Default::default())
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn entry(&self, a: usize, b: usize) -> &SpectrumEntry {
        &self.entries[a][b]
    }

    pub fn entry_mut(&mut self, a: usize, b: usize) -> &mut SpectrumEntry {
        &mut self.entries[a][b]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|e| e.terms.iter().all(|(c, _)| c.norm() == 0.0))
    }

    /// S_{a,b}(ω), or its classical (+) / quantum (−) component.
    pub fn evaluate(&self, a: usize, b: usize, w: f64, part: Part) -> Result<C64> {
        if a > 2 || b > 2 {
            return invalid(format!("spectrum index pair ({a},{b}) out of range"));
        }
        Ok(self.eval(a, b, w, part))
    }

    pub(crate) fn eval(&self, a: usize, b: usize, w: f64, part: Part) -> C64 {
        match part {
            Part::Full => self.entries[a][b].eval(w),
            Part::Plus => self.entries[a][b].eval(w) + self.entries[b][a].eval(-w),
            Part::Minus => self.entries[a][b].eval(w) - self.entries[b][a].eval(-w),
        }
    }

    /// All nine S_{a,b}(ω).
    pub fn matrix(&self, w: f64) -> [[C64; 3]; 3] {
        std::array::from_fn(|a| std::array::from_fn(|b| self.entries[a][b].eval(w)))
    }

    /// Frequency intervals outside which every entry vanishes.
    pub fn support(&self) -> Vec<(f64, f64)> {
        crate::quadrature::merge_intervals(
            self.entries.iter().flatten().flat_map(|e| e.terms.iter().map(|(_, s)| s.support())).collect(),
        )
    }

    /// Smallest structural scale (Gaussian width or table spacing), for quadrature panel sizing.
    pub fn feature_scale(&self) -> Option<f64> {
        self.entries
            .iter()
            .flatten()
            .flat_map(|e| e.terms.iter())
            .map(|(_, s)| match s {
                Shape::Gaussian { width, .. } => *width,
                Shape::Table(t) => t.nodes().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
            })
            .reduce(f64::min)
    }

    /// Table nodes, which quadrature treats as breakpoints.
    pub fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self
            .entries
            .iter()
            .flatten()
            .flat_map(|e| e.terms.iter())
            .flat_map(|(_, s)| match s {
                Shape::Table(t) => t.nodes().to_vec(),
                _ => Vec::new(),
            })
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// S'_{a,b} = Σ u_{aα} u_{bβ} S_{α,β}.
    fn transformed(&self, u: &[[C64; 3]; 3], basis: Basis) -> Self {
        let entries = std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                let mut e = SpectrumEntry::default();
                for al in 0..3 {
                    for be in 0..3 {
                        let c = u[a][al] * u[b][be];
                        if c.norm() > 1e-15 {
                            e.terms.extend(self.entries[al][be].scaled(c).terms);
                        }
                    }
                }
                e.coalesce();
                e
            })
        });
        Self { basis, entries }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let entries = std::array::from_fn(|a| std::array::from_fn(|b| self.entries[a][b].scaled(C64::new(c, 0.0))));
        Self { basis: self.basis, entries }
    }
}

/// Rows u_j of B_j = Σ_α u_{jα}B_α, for j = −1, 0, +1.
fn spherical_rows() -> [[C64; 3]; 3] {
    let r = FRAC_1_SQRT_2;
    [
        [C64::new(r, 0.0), C64::new(0.0, -r), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(r, 0.0), C64::new(0.0, r), C64::new(0.0, 0.0)],
    ]
}

/// B_{±1} = (B_x ± iB_y)/√2, B₀ = B_z, without conjugation: S_{j,l} = Σ u_{jα}u_{lβ}S_{α,β}.
pub fn cartesian_to_spherical(set: &SpectrumSet) -> Result<SpectrumSet> {
    if set.basis != Basis::Cartesian {
        return invalid("cartesian_to_spherical expects a Cartesian spectrum set");
    }
    Ok(set.transformed(&spherical_rows(), Basis::Spherical))
}

pub fn spherical_to_cartesian(set: &SpectrumSet) -> Result<SpectrumSet> {
    if set.basis != Basis::Spherical {
        return invalid("spherical_to_cartesian expects a spherical spectrum set");
    }
    let r = FRAC_1_SQRT_2;
    let v = [
        [C64::new(r, 0.0), C64::new(0.0, 0.0), C64::new(r, 0.0)],
        [C64::new(0.0, r), C64::new(0.0, 0.0), C64::new(0.0, -r)],
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    ];
    Ok(set.transformed(&v, Basis::Cartesian))
}

/// Three-Gaussian model shared by all Cartesian entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTripleParams {
    pub amplitude: f64,
    pub width: f64,
    pub centers: [f64; 3],
    pub weights: [f64; 3],
}

impl GaussianTripleParams {
    /// A = 332, Δ/2π = 0.8 MHz, peaks at −Ω + 2π·0.81 MHz, 2π·0.8 MHz, Ω − 2π·0.81 MHz.
    pub fn reference_setup(splitting: f64) -> Self {
        let mhz = 2.0 * PI * 1e6;
        Self {
            amplitude: 332.0,
            width: 0.8 * mhz,
            centers: [-splitting + 0.81 * mhz, 0.8 * mhz, splitting - 0.81 * mhz],
            weights: [1.0, 0.7, 0.5],
        }
    }

    pub fn with_width(self, width: f64) -> Self {
        Self { width, ..self }
    }

    /// The scalar profile A·Σ w_k e^{−(ω−c_k)²/2Δ²}.
    pub fn profile(&self) -> SpectrumEntry {
        SpectrumEntry {
            terms: self
                .centers
                .iter()
                .zip(&self.weights)
                .filter(|(_, &w)| w != 0.0 && self.amplitude != 0.0)
                .map(|(&c, &w)| (C64::new(self.amplitude * w, 0.0), Shape::Gaussian { center: c, width: self.width }))
                .collect(),
        }
    }
}

/// Every Cartesian entry equal to the three-Gaussian profile.
pub fn gaussian_triple(p: &GaussianTripleParams) -> Result<SpectrumSet> {
    if !(p.width.is_finite() && p.width > 0.0) {
        return invalid("Gaussian width must be positive");
    }
    if !p.amplitude.is_finite() || p.centers.iter().any(|c| !c.is_finite()) {
        return invalid("Gaussian parameters must be finite");
    }
    let prof = p.profile();
    Ok(SpectrumSet::new(Basis::Cartesian, std::array::from_fn(|_| std::array::from_fn(|_| prof.clone()))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryViolation {
    pub relation: &'static str,
    pub a: usize,
    pub b: usize,
    pub omega: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymmetryReport {
    pub checked: usize,
    pub violations: Vec<SymmetryViolation>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks [S^±_{a,b}]* = S^±_{b̃,ã} = ±S^±_{ã,b̃}(−ω) on a grid (b̃ = b Cartesian, −b spherical).
pub fn validate_symmetries(set: &SpectrumSet, grid: &[f64], rel_tol: f64) -> SymmetryReport {
    let mut rep = SymmetryReport::default();
    let flip = |i: usize| match set.basis {
        Basis::Cartesian => i,
        Basis::Spherical => 2 - i,
    };
    let scale = grid
        .iter()
        .flat_map(|&w| set.matrix(w).into_iter().flatten())
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for &w in grid {
        for a in 0..3 {
            for b in 0..3 {
                for (part, sign, name_c, name_p) in [
                    (Part::Plus, 1.0, "conj S+", "parity S+"),
                    (Part::Minus, -1.0, "conj S-", "parity S-"),
                ] {
                    let s = set.eval(a, b, w, part);
                    // Cartesian: S_{b,a}; spherical: S_{−b,−a}.
                    let t = set.eval(flip(b), flip(a), w, part);
                    let u = set.eval(flip(a), flip(b), -w, part) * sign;
                    rep.checked += 2;
                    let m1 = (s.conj() - t).norm();
                    if m1 > rel_tol * scale {
                        rep.violations.push(SymmetryViolation { relation: name_c, a, b, omega: w, mismatch: m1 / scale });
                    }
                    let m2 = (t - u).norm();
                    if m2 > rel_tol * scale {
                        rep.violations.push(SymmetryViolation { relation: name_p, a, b, omega: w, mismatch: m2 / scale });
                    }
                }
            }
        }
    }
    rep
}

/// Real Gaussian vector process ζ_α(t) sampled at t = n·dt.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub values: Vec<[f64; 3]>,
}

impl NoiseTrajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |n| n as f64 * self.dt)
    }
}

/// Frequency-domain synthesis of stationary classical noise with cross-spectrum S⁺/2.
///
/// ⟨c_k c_k†⟩ = (Δω/2π)·S⁺(ω_k)/2 on a periodic grid of period N·dt; c_{−k} = c_k*.
#[derive(Debug, Clone)]
pub struct TrajectorySampler {
    dt: f64,
    n_fft: usize,
    n_out: usize,
    roots: Vec<Matrix3<C64>>,
}

impl TrajectorySampler {
    /// `period` ≥ duration sets the frequency resolution 2π/period.
    pub fn new(set: &SpectrumSet, duration: f64, dt: f64, period: f64) -> Result<Self> {
        if set.basis != Basis::Cartesian {
            return invalid("trajectory sampling expects Cartesian spectra");
        }
        if !(dt > 0.0 && duration >= 0.0 && period >= duration && dt.is_finite() && period.is_finite()) {
            return invalid("trajectory grid needs dt > 0 and period ≥ duration");
        }
        let n_fft = ((period / dt).ceil() as usize).max(8).next_power_of_two();
        let n_out = (duration / dt).round() as usize + 1;
        let dw = 2.0 * PI / (n_fft as f64 * dt);
        let mut roots = Vec::with_capacity(n_fft / 2);
        for k in 0..n_fft / 2 {
            let w = k as f64 * dw;
            let m = Matrix3::from_fn(|a, b| set.eval(a, b, w, Part::Plus) * (0.5 * dw / (2.0 * PI)));
            roots.push(hermitian_root(&m, w)?);
        }
        // k = 0 must be real symmetric for a real process.
        roots[0] = roots[0].map(|z| C64::new(z.re, 0.0));
        Ok(Self { dt, n_fft, n_out, roots })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n_out
    }

    pub fn is_empty(&self) -> bool {
        self.n_out == 0
    }

    /// Trajectory `index` of the stream seeded by `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> NoiseTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let n = self.n_fft;
        let mut spec: [Vec<C64>; 3] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        for (k, l) in self.roots.iter().enumerate() {
            let c: Vector3<C64> = if k == 0 {
                let v = Vector3::new(g(), g(), g()).map(|x| C64::new(x, 0.0));
                l * v
            } else {
                let v = Vector3::from_fn(|_, _| C64::new(g(), g()) * FRAC_1_SQRT_2);
                l * v
            };
            for a in 0..3 {
                spec[a][k] = c[a];
                if k > 0 {
                    spec[a][n - k] = c[a].conj();
                }
            }
        }
        let fft = FftPlanner::new().plan_fft_inverse(n);
        for s in spec.iter_mut() {
            fft.process(s);
        }
        let values = (0..self.n_out).map(|i| [spec[0][i].re, spec[1][i].re, spec[2][i].re]).collect();
        NoiseTrajectory { dt: self.dt, values }
    }
}

fn hermitian_root(m: &Matrix3<C64>, w: f64) -> Result<Matrix3<C64>> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    if (m - h).norm() > 1e-9 * h.norm().max(f64::MIN_POSITIVE) {
        return invalid(format!("classical spectral matrix not Hermitian at ω = {w:e}"));
    }
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut d = Matrix3::zeros();
    for i in 0..3 {
        let lam = eig.eigenvalues[i];
        if lam < -1e-9 * top.max(f64::MIN_POSITIVE) {
            return invalid(format!("classical spectral matrix not positive semidefinite at ω = {w:e}"));
        }
        d[(i, i)] = C64::new(lam.max(0.0).sqrt(), 0.0);
    }
    Ok(eig.eigenvectors * d)
}

/// `count` trajectories over [0, duration] with per-trajectory streams derived from `seed`.
pub fn sample_classical_trajectories(
    set: &SpectrumSet,
    duration: f64,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<NoiseTrajectory>> {
    let period = default_period(set, duration);
    let s = TrajectorySampler::new(set, duration, dt, period)?;
    Ok((0..count as u64).into_par_iter().map(|i| s.sample(seed, i)).collect())
}

/// Period long enough that correlations wrapped around the synthesis period have decayed.
pub fn default_period(set: &SpectrumSet, duration: f64) -> f64 {
    let corr = set.feature_scale().map_or(0.0, |s| 12.0 / s);
    (2.0 * duration).max(duration + corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mhz(x: f64) -> f64 {
        2.0 * PI * 1e6 * x
    }

    fn reference() -> (GaussianTripleParams, SpectrumSet) {
        let p = GaussianTripleParams::reference_setup(2.0 * PI * 27e9);
        (p, gaussian_triple(&p).unwrap())
    }

    fn classical_xyz() -> SpectrumSet {
        let mut s = SpectrumSet::zero(Basis::Cartesian);
        let g = |c: f64, w: f64| Shape::Gaussian { center: c, width: w };
        for (a, amp) in [(0, 1.0), (1, 0.6), (2, 2.0)] {
            s.entry_mut(a, a).terms = vec![(C64::new(amp, 0.0), g(0.0, 3.0)), (C64::new(0.3 * amp, 0.0), g(5.0, 1.0)), (C64::new(0.3 * amp, 0.0), g(-5.0, 1.0))];
        }
        s
    }

    #[test]
    fn classical_model_has_no_quantum_part() {
        let s = classical_xyz();
        for w in [-4.0, 0.0, 1.3, 6.0] {
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(s.evaluate(a, b, w, Part::Minus).unwrap(), C64::new(0.0, 0.0));
                    let full = s.evaluate(a, b, w, Part::Full).unwrap();
                    let plus = s.evaluate(a, b, w, Part::Plus).unwrap();
                    assert!((plus - full * 2.0).norm() < 1e-15);
                }
            }
        }
        assert!(s.evaluate(3, 0, 0.0, Part::Full).is_err());
    }

    #[test]
    fn reference_model_at_center_peak() {
        let (p, s) = reference();
        let w = p.centers[1];
        let v = s.evaluate(0, 0, w, Part::Full).unwrap();
        // The ±Ω peaks are ~10⁴ widths away and contribute nothing.
        assert_relative_eq!(v.re, 0.7 * 332.0, max_relative = 1e-15);
        let w0 = 0.0;
        let expect = 0.7 * 332.0 * (-0.5 * (0.8f64 / 0.8).powi(2)).exp();
        assert_relative_eq!(s.evaluate(2, 1, w0, Part::Full).unwrap().re, expect, max_relative = 1e-12);
    }

    #[test]
    fn quantum_part_parity() {
        let (_, s) = reference();
        for w in [mhz(0.3), mhz(1.7), mhz(27e3) - mhz(0.5)] {
            for a in 0..3 {
                for b in 0..3 {
                    let m = s.eval(a, b, w, Part::Minus);
                    let mm = s.eval(b, a, -w, Part::Minus);
                    assert!((mm + m.conj()).norm() < 1e-12 * (1.0 + m.norm()));
                }
            }
        }
        assert!(s.eval(2, 2, mhz(0.8), Part::Minus).norm() > 1.0);
    }

    #[test]
    fn spherical_examples() {
        let (_, s) = reference();
        let sph = cartesian_to_spherical(&s).unwrap();
        let w = mhz(0.5);
        let m = s.matrix(w);
        let ms = sph.matrix(w);
        assert!((ms[1][1] - m[2][2]).norm() < 1e-12);
        // All-equal real entries: S_{+1,−1} = (S_xx + S_yy)/2.
        assert!((ms[2][0] - (m[0][0] + m[1][1]) * 0.5).norm() < 1e-12 * m[0][0].norm());
        assert!((ms[0][2] - (m[0][0] + m[1][1]) * 0.5).norm() < 1e-12 * m[0][0].norm());

        let mut z = SpectrumSet::zero(Basis::Cartesian);
        z.entry_mut(2, 2).terms = vec![(C64::new(1.0, 0.0), Shape::Gaussian { center: 0.0, width: 1.0 })];
        let zs = cartesian_to_spherical(&z).unwrap().matrix(0.2);
        for a in 0..3 {
            for b in 0..3 {
                if (a, b) != (1, 1) {
                    assert_eq!(zs[a][b].norm(), 0.0);
                }
            }
        }
        assert!(cartesian_to_spherical(&sph).is_err());
    }

    #[test]
    fn basis_round_trip() {
        let mut s = classical_xyz();
        s.entry_mut(0, 2).terms = vec![(C64::new(0.2, 0.4), Shape::Gaussian { center: 1.0, width: 2.0 })];
        s.entry_mut(2, 0).terms = vec![(C64::new(0.2, -0.4), Shape::Gaussian { center: 1.0, width: 2.0 })];
        let back = spherical_to_cartesian(&cartesian_to_spherical(&s).unwrap()).unwrap();
        for w in [-3.0, 0.0, 0.7, 4.4] {
            let (a, b) = (s.matrix(w), back.matrix(w));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a[i][j] - b[i][j]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_triple_basic() {
        let (p, _) = reference();
        let zero = gaussian_triple(&GaussianTripleParams { amplitude: 0.0, ..p }).unwrap();
        assert!(zero.is_zero());
        assert_eq!(zero.evaluate(0, 0, p.centers[0], Part::Full).unwrap(), C64::new(0.0, 0.0));
        assert!(gaussian_triple(&p.with_width(0.0)).is_err());
        let (_, s) = reference();
        assert_relative_eq!(s.eval(1, 1, p.centers[0], Part::Full).re, 332.0, max_relative = 1e-15);
        assert_relative_eq!(s.eval(1, 1, p.centers[2], Part::Full).re, 166.0, max_relative = 1e-15);
    }

    #[test]
    fn symmetry_validation() {
        let (p, s) = reference();
        let grid: Vec<f64> = (-40..=40).map(|k| p.centers[2] * k as f64 / 40.0).chain((-40..=40).map(|k| mhz(0.1) * k as f64)).collect();
        assert!(validate_symmetries(&s, &grid, 1e-9).passed());
        assert!(validate_symmetries(&cartesian_to_spherical(&s).unwrap(), &grid, 1e-9).passed());
        assert!(validate_symmetries(&SpectrumSet::zero(Basis::Cartesian), &grid, 1e-9).passed());
        let mut bad = s.clone();
        bad.entry_mut(0, 1).terms.push((C64::new(0.0, 50.0), Shape::Gaussian { center: 0.0, width: mhz(1.0) }));
        let rep = validate_symmetries(&bad, &grid, 1e-9);
        assert!(!rep.passed());
        assert!(rep.violations.iter().any(|v| v.relation.starts_with("conj") && (v.a, v.b) == (0, 1)));
    }

    #[test]
    fn table_interpolation() {
        let t = Table::new(vec![0.0, 1.0, 3.0], vec![C64::new(0.0, 0.0), C64::new(2.0, 1.0), C64::new(0.0, 0.0)]).unwrap();
        assert_eq!(t.eval(0.5), C64::new(1.0, 0.5));
        assert_eq!(t.eval(2.0), C64::new(1.0, 0.5));
        assert_eq!(t.eval(-0.1), C64::new(0.0, 0.0));
        assert_eq!(t.eval(3.1), C64::new(0.0, 0.0));
        assert!(Table::new(vec![0.0, 0.0], vec![C64::new(0.0, 0.0); 2]).is_err());
    }

    #[test]
    fn zero_spectrum_gives_zero_trajectories() {
        let z = SpectrumSet::zero(Basis::Cartesian);
        let tr = sample_classical_trajectories(&z, 1.0, 0.01, 3, 7).unwrap();
        assert!(tr.iter().all(|t| t.values.iter().all(|v| v == &[0.0; 3])));
        assert_eq!(tr[0].values.len(), 101);
    }

    #[test]
    fn non_psd_rejected() {
        let mut s = SpectrumSet::zero(Basis::Cartesian);
        let g = Shape::Gaussian { center: 0.0, width: 1.0 };
        s.entry_mut(0, 0).terms = vec![(C64::new(1.0, 0.0), g.clone())];
        s.entry_mut(0, 1).terms = vec![(C64::new(3.0, 0.0), g.clone())];
        s.entry_mut(1, 0).terms = vec![(C64::new(3.0, 0.0), g)];
        assert!(sample_classical_trajectories(&s, 1.0, 0.05, 1, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = classical_xyz();
        let a = sample_classical_trajectories(&s, 2.0, 0.05, 2, 11).unwrap();
        let b = sample_classical_trajectories(&s, 2.0, 0.05, 2, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
