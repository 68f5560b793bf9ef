use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use super::{harmonic_ratio, ExperimentDesign, QRecord, SUPPRESSION_THRESHOLD};
use crate::error::{invalid, QnsError, Result};
use crate::filters::{generalized_filters, FilterKernel};
use crate::noise::{cartesian_to_spherical, spherical_to_cartesian, Part, SpectrumSet};
use crate::pulse_control::{switching_matrix, Basis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Component {
    Re,
    Im,
}

/// Where the ground truth of a reconstructed spectrum comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TruthSource {
    /// S_{j,l}(ω), j, l ∈ {−1, 0, 1}.
    Spherical { j: i32, l: i32 },
    /// S±_{ab}(ω) in the Cartesian basis.
    Cartesian { a: usize, b: usize, part: CartesianPart },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CartesianPart {
    Plus,
    Minus,
}

/// One unknown spectrum: its grid center and the parity/component parts it may carry.
///
/// S(c + kω₀) = Σ_parts sgn(k)^{odd}·(1 or i)·u_{|k|}; parts not listed are fixed at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSpec {
    pub id: String,
    pub center: f64,
    pub parts: Vec<(Parity, Component)>,
    pub truth: TruthSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WindowMode {
    /// Balanced spectra only; requires ΩMT_c above the suppression threshold.
    LargeSplitting { splitting: f64 },
    /// All nine spectra; requires ΩT_c = 2πm for every cycle time.
    Synchronized { splitting: f64 },
    ZeroSplitting,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionWindow {
    pub omega0: f64,
    pub k_max: usize,
    pub mode: WindowMode,
    pub spectra: Vec<SpectrumSpec>,
}

pub fn spherical_id(j: i32, l: i32) -> String {
    format!("S_{{{j},{l}}}")
}

impl ReconstructionWindow {
    pub fn new(omega0: f64, k_max: usize, mode: WindowMode, spectra: Vec<SpectrumSpec>) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return invalid("ω₀ must be positive");
        }
        if k_max < 1 {
            return invalid("window needs K ≥ 1");
        }
        if spectra.is_empty() || spectra.iter().any(|s| s.parts.is_empty()) {
            return invalid("window needs at least one spectrum with at least one part");
        }
        Ok(Self { omega0, k_max, mode, spectra })
    }

    /// S_{−1,1}, S_{0,0}, S_{1,−1} centered at −Ω, 0, +Ω; real with even and odd parts.
    pub fn large_splitting(omega0: f64, k_max: usize, splitting: f64) -> Result<Self> {
        let spectra = (-1..=1)
            .map(|j| SpectrumSpec {
                id: spherical_id(j, -j),
                center: j as f64 * splitting,
                parts: vec![(Parity::Even, Component::Re), (Parity::Odd, Component::Re)],
                truth: TruthSource::Spherical { j, l: -j },
            })
            .collect();
        Self::new(omega0, k_max, WindowMode::LargeSplitting { splitting }, spectra)
    }

    /// All nine S_{j,l}; imbalanced ones complex.
    ///
    /// 𝒢_{j,l} peaks at jΩ and at −lΩ, so an imbalanced S_{j,l} gets a grid at each of the two
    /// centers (ids `S_{j,l}@cΩ`); balanced ones get the single grid at jΩ.
    pub fn synchronized(omega0: f64, k_max: usize, splitting: f64) -> Result<Self> {
        let mut spectra = Vec::new();
        for j in -1..=1 {
            for l in -1..=1 {
                let truth = TruthSource::Spherical { j, l };
                if j + l == 0 {
                    spectra.push(SpectrumSpec {
                        id: spherical_id(j, l),
                        center: j as f64 * splitting,
                        parts: vec![(Parity::Even, Component::Re), (Parity::Odd, Component::Re)],
                        truth,
                    });
                    continue;
                }
                for c in [j, -l] {
                    spectra.push(SpectrumSpec {
                        id: format!("{}@{c}Ω", spherical_id(j, l)),
                        center: c as f64 * splitting,
                        parts: vec![
                            (Parity::Even, Component::Re),
                            (Parity::Odd, Component::Re),
                            (Parity::Even, Component::Im),
                            (Parity::Odd, Component::Im),
                        ],
                        truth,
                    });
                }
            }
        }
        Self::new(omega0, k_max, WindowMode::Synchronized { splitting }, spectra)
    }

    pub fn half_width(&self) -> f64 {
        self.k_max as f64 * self.omega0
    }

    /// Grid {center + kω₀ : |k| ≤ K} of spectrum `s`.
    pub fn grid(&self, s: usize) -> Vec<f64> {
        let c = self.spectra[s].center;
        let k = self.k_max as i64;
        (-k..=k).map(|i| c + i as f64 * self.omega0).collect()
    }
}

/// Ground-truth evaluator for every `TruthSource`.
#[derive(Debug, Clone)]
pub struct TruthModel {
    spherical: SpectrumSet,
    cartesian: SpectrumSet,
}

impl TruthModel {
    pub fn new(noise: &SpectrumSet) -> Result<Self> {
        let (spherical, cartesian) = match noise.basis() {
            Basis::Spherical => (noise.clone(), spherical_to_cartesian(noise)?),
            Basis::Cartesian => (cartesian_to_spherical(noise)?, noise.clone()),
        };
        Ok(Self { spherical, cartesian })
    }

    pub fn spherical(&self) -> &SpectrumSet {
        &self.spherical
    }

    pub fn cartesian(&self) -> &SpectrumSet {
        &self.cartesian
    }

    pub fn value(&self, src: &TruthSource, w: f64) -> C64 {
        match *src {
            TruthSource::Spherical { j, l } => self.spherical.eval((j + 1) as usize, (l + 1) as usize, w, Part::Full),
            TruthSource::Cartesian { a, b, part } => {
                let p = if part == CartesianPart::Plus { Part::Plus } else { Part::Minus };
                self.cartesian.eval(a, b, w, p)
            }
        }
    }

    /// Intervals outside which the truth vanishes.
    pub fn support(&self, src: &TruthSource) -> Vec<(f64, f64)> {
        match *src {
            TruthSource::Spherical { j, l } => self.spherical.entry((j + 1) as usize, (l + 1) as usize).support(),
            TruthSource::Cartesian { a, b, .. } => {
                let mut iv = self.cartesian.entry(a, b).support();
                iv.extend(self.cartesian.entry(b, a).support().iter().map(|&(lo, hi)| (-hi, -lo)));
                crate::quadrature::merge_intervals(iv)
            }
        }
    }
}

/// Indices k with center + k·step inside any interval.
pub(crate) fn harmonics_in(intervals: &[(f64, f64)], center: f64, step: f64) -> Vec<i64> {
    let mut ks: Vec<i64> = intervals
        .iter()
        .flat_map(|&(a, b)| ((a - center) / step).ceil() as i64..=((b - center) / step).floor() as i64)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Unknown {
    pub spectrum: usize,
    pub k: usize,
    pub parity: Parity,
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowLabel {
    pub experiment: usize,
    pub sequence_id: String,
    pub cycle_time: f64,
    /// Q_p index, or a channel index for the zero-splitting protocol.
    pub quantity: usize,
    pub component: Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ImbalanceHandling {
    /// Imbalanced terms dropped; smallest ΩMT_c in the design.
    Dropped { min_omega_t: f64 },
    /// Imbalanced spectra kept as unknowns on the synchronized comb.
    Kept,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssemblyDiagnostics {
    pub imbalance: ImbalanceHandling,
    /// max_rows Σ_{|k|>K}|a·S| over max_rows Σ_{|k|≤K}|a·S| for the reference model.
    pub tail_bound: Option<f64>,
    /// Condition number of the row-equilibrated matrix.
    pub condition_number: f64,
    pub dropped_rows: usize,
}

/// Real least-squares system; rows are equilibrated to unit norm.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub unknowns: Vec<Unknown>,
    pub rows: Vec<RowLabel>,
    /// Norm each row was divided by.
    pub row_scales: Vec<f64>,
    pub window: ReconstructionWindow,
    pub diagnostics: AssemblyDiagnostics,
}

impl LinearSystem {
    /// Unknown vector of a known model: parity parts of its values on the window grids.
    pub fn truth_vector(&self, truth: &TruthModel) -> DVector<f64> {
        let w = &self.window;
        DVector::from_iterator(
            self.unknowns.len(),
            self.unknowns.iter().map(|u| {
                let spec = &w.spectra[u.spectrum];
                let off = u.k as f64 * w.omega0;
                let (p, m) = (truth.value(&spec.truth, spec.center + off), truth.value(&spec.truth, spec.center - off));
                let part = if u.parity == Parity::Even { (p + m) * 0.5 } else { (p - m) * 0.5 };
                if u.component == Component::Re {
                    part.re
                } else {
                    part.im
                }
            }),
        )
    }

    /// ‖Ax − b‖/‖b‖ at the model's own grid values; the comb and truncation error of the system.
    pub fn closure_residual(&self, truth: &TruthModel) -> f64 {
        let x = self.truth_vector(truth);
        (&self.a * x - &self.b).norm() / self.b.norm().max(f64::MIN_POSITIVE)
    }
}

/// Rows whose coefficient norm falls below this fraction of the largest are discarded.
const NEGLIGIBLE_ROW: f64 = 1e-8;

pub(crate) struct SystemBuilder {
    window: ReconstructionWindow,
    unknowns: Vec<Unknown>,
    index: HashMap<Unknown, usize>,
    rows: Vec<(RowLabel, Vec<f64>, f64)>,
    /// (dropped, retained) contributions per equation.
    tails: Vec<(f64, f64)>,
}

impl SystemBuilder {
    pub(crate) fn new(window: ReconstructionWindow) -> Self {
        let mut unknowns = Vec::new();
        for (s, spec) in window.spectra.iter().enumerate() {
            for k in 0..=window.k_max {
                for &(parity, component) in &spec.parts {
                    if k == 0 && parity == Parity::Odd {
                        continue;
                    }
                    unknowns.push(Unknown { spectrum: s, k, parity, component });
                }
            }
        }
        let index = unknowns.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        Self { window, unknowns, index, rows: Vec::new(), tails: Vec::new() }
    }

    /// Adds coef·S_s(c + kω₀) to a complex row held as (re, im) coefficient vectors.
    pub(crate) fn add_term(&self, re: &mut [f64], im: &mut [f64], s: usize, k: i64, coef: C64) {
        let ka = k.unsigned_abs() as usize;
        for &(parity, component) in &self.window.spectra[s].parts {
            if parity == Parity::Odd && k == 0 {
                continue;
            }
            let sign = if parity == Parity::Odd && k < 0 { -1.0 } else { 1.0 };
            let phase = if component == Component::Re { C64::new(sign, 0.0) } else { C64::new(0.0, sign) };
            let c = coef * phase;
            let i = self.index[&Unknown { spectrum: s, k: ka, parity, component }];
            re[i] += c.re;
            im[i] += c.im;
        }
    }

    pub(crate) fn zero_row(&self) -> Vec<f64> {
        vec![0.0; self.unknowns.len()]
    }

    /// Pushes the Re and Im parts of a complex equation.
    pub(crate) fn push_complex(&mut self, label: RowLabel, re: Vec<f64>, im: Vec<f64>, rhs: C64, tail: Option<(f64, f64)>) {
        self.rows.push((RowLabel { component: Component::Re, ..label.clone() }, re, rhs.re));
        self.rows.push((RowLabel { component: Component::Im, ..label }, im, rhs.im));
        if let Some(t) = tail {
            self.tails.push(t);
        }
    }

    pub(crate) fn push_real(&mut self, label: RowLabel, coefs: Vec<f64>, rhs: f64, tail: Option<(f64, f64)>) {
        self.rows.push((label, coefs, rhs));
        if let Some(t) = tail {
            self.tails.push(t);
        }
    }

    pub(crate) fn finish(self, imbalance: ImbalanceHandling) -> Result<LinearSystem> {
        let norms: Vec<f64> = self.rows.iter().map(|r| r.1.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let max = norms.iter().copied().fold(0.0, f64::max);
        if max == 0.0 || !max.is_finite() {
            return Err(QnsError::SolverFailure("assembled system has no informative rows".into()));
        }
        let keep: Vec<usize> = (0..self.rows.len()).filter(|&i| norms[i] > NEGLIGIBLE_ROW * max).collect();
        let n = self.unknowns.len();
        let mut a = DMatrix::zeros(keep.len(), n);
        let mut b = DVector::zeros(keep.len());
        let mut labels = Vec::with_capacity(keep.len());
        let mut scales = Vec::with_capacity(keep.len());
        for (r, &i) in keep.iter().enumerate() {
            let (label, coefs, rhs) = &self.rows[i];
            if !rhs.is_finite() {
                return invalid(format!("non-finite measurement in row for {}", label.sequence_id));
            }
            for (c, v) in coefs.iter().enumerate() {
                a[(r, c)] = v / norms[i];
            }
            b[r] = rhs / norms[i];
            labels.push(label.clone());
            scales.push(norms[i]);
        }
        let tail_bound = (!self.tails.is_empty()).then(|| {
            let dropped = self.tails.iter().map(|t| t.0).fold(0.0, f64::max);
            let retained = self.tails.iter().map(|t| t.1).fold(0.0, f64::max);
            if retained > 0.0 {
                dropped / retained
            } else {
                0.0
            }
        });
        let condition_number = condition_number(&a)?;
        Ok(LinearSystem {
            a,
            b,
            unknowns: self.unknowns,
            rows: labels,
            row_scales: scales,
            window: self.window,
            diagnostics: AssemblyDiagnostics { imbalance, tail_bound, condition_number, dropped_rows: self.rows.len() - keep.len() },
        })
    }
}

/// Thin SVD A = U·diag(σ)·Vᵀ.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

fn square_svd(r: &DMatrix<f64>) -> Option<ThinSvd> {
    let scale = r.norm().max(f64::MIN_POSITIVE);
    let check = |s: &ThinSvd, target: &DMatrix<f64>| (&s.u * DMatrix::from_diagonal(&s.sigma) * &s.v_t - target).norm() <= 1e-11 * scale;
    let direct = r.clone().svd(true, true);
    let d = ThinSvd { u: direct.u?, sigma: direct.singular_values, v_t: direct.v_t? };
    if check(&d, r) {
        return Some(d);
    }
    // The implicit-shift iteration occasionally stalls on one orientation but not the other.
    let t = r.transpose().svd(true, true);
    let d = ThinSvd { u: t.v_t?.transpose(), sigma: t.singular_values, v_t: t.u?.transpose() };
    check(&d, r).then_some(d)
}

/// SVD through a QR reduction to a square factor, with a reconstruction check.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let fail = || QnsError::NumericalFailure("SVD did not reproduce the matrix".into());
    if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let s = square_svd(&qr.r()).ok_or_else(fail)?;
        Ok(ThinSvd { u: qr.q() * s.u, sigma: s.sigma, v_t: s.v_t })
    } else {
        let qr = a.transpose().qr();
        // A = Rᵀ Qᵀ
        let s = square_svd(&qr.r().transpose()).ok_or_else(fail)?;
        Ok(ThinSvd { u: s.u, sigma: s.sigma, v_t: s.v_t * qr.q().transpose() })
    }
}

/// σ_max/σ_min, infinite when rank deficient by shape or exact zeros.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() < a.ncols() || a.ncols() == 0 {
        return Ok(f64::INFINITY);
    }
    let sv = thin_svd(a)?.sigma;
    let (max, min) = (sv.max(), sv.min());
    Ok(if min <= 0.0 { f64::INFINITY } else { max / min })
}

/// Builds the comb-discretized system for Q_p records on a large-splitting or synchronized window.
///
/// Row (experiment, p): Q_p ≈ (M/T_c) Σ_{J,L} Σ_{k'} 𝒢⁽ᵖ⁾_{J,L}(c_J + k'nω₀; T_c) S_{J,L}(c_J + k'nω₀)
/// with T_c = T_max/n and single-cycle filters. With `reference`, the harmonics beyond K are
/// summed against it to bound the truncation.
pub fn assemble_system(
    design: &ExperimentDesign,
    records: &[QRecord],
    window: &ReconstructionWindow,
    reference: Option<&SpectrumSet>,
) -> Result<LinearSystem> {
    let splitting = match window.mode {
        WindowMode::LargeSplitting { splitting } | WindowMode::Synchronized { splitting } => splitting,
        WindowMode::ZeroSplitting => return invalid("zero-splitting windows are assembled by the zero-splitting protocol"),
    };
    let omega = design.system.splitting;
    if (splitting - omega).abs() > 1e-12 * omega.abs().max(1.0) {
        return invalid(format!("window splitting {splitting:e} differs from design splitting {omega:e}"));
    }
    let t_grid = 2.0 * PI / window.omega0;
    let mut spec_slots = Vec::with_capacity(window.spectra.len());
    for s in &window.spectra {
        match s.truth {
            TruthSource::Spherical { j, l } => spec_slots.push(((j + 1) as usize, (l + 1) as usize)),
            TruthSource::Cartesian { .. } => return invalid(format!("{} is not a spherical spectrum", s.id)),
        }
    }
    let mut min_omega_t = f64::INFINITY;
    let mut harmonics = Vec::with_capacity(design.experiments.len());
    for e in &design.experiments {
        let tc = e.sequence.cycle_time();
        let n = harmonic_ratio(t_grid, tc).ok_or_else(|| {
            QnsError::InvalidInput(format!("window grid 2π/ω₀ = {t_grid:e} is not commensurate with T_c = {tc:e} ({})", e.sequence_id))
        })?;
        harmonics.push(n);
        min_omega_t = min_omega_t.min(omega * e.sequence.duration());
        if let WindowMode::Synchronized { .. } = window.mode {
            let m = omega * tc / (2.0 * PI);
            if (m - m.round()).abs() > super::COMMENSURATE_TOL * m.max(1.0) {
                return invalid(format!(
                    "{}: ΩT_c/2π = {m} is not an integer; imbalanced terms can be neither dropped nor synchronized",
                    e.sequence_id
                ));
            }
        }
    }
    let imbalance = match window.mode {
        WindowMode::LargeSplitting { .. } => {
            if min_omega_t <= SUPPRESSION_THRESHOLD {
                return invalid(format!(
                    "ΩMT_c = {min_omega_t:e} ≤ {SUPPRESSION_THRESHOLD:e}: imbalanced filters are not negligible; \
                     use the synchronized window (ΩT_c = 2πm) instead"
                ));
            }
            ImbalanceHandling::Dropped { min_omega_t }
        }
        _ => ImbalanceHandling::Kept,
    };
    let truth = reference.map(TruthModel::new).transpose()?;
    let k_max = window.k_max as i64;
    let mut builder = SystemBuilder::new(window.clone());
    for rec in records {
        let e = design
            .experiments
            .get(rec.experiment)
            .ok_or_else(|| QnsError::InvalidInput(format!("record refers to missing experiment {}", rec.experiment)))?;
        let n = harmonics[rec.experiment] as i64;
        let tc = e.sequence.cycle_time();
        let single = e.sequence.with_cycle(tc, 1)?;
        let kernel = FilterKernel::new(&switching_matrix(&single, Basis::Spherical), tc)?;
        let weight = e.sequence.repetitions() as f64 / tc;
        for &p in &e.quantities {
            let mut re = builder.zero_row();
            let mut im = builder.zero_row();
            let mut retained = 0.0;
            let mut dropped = 0.0;
            for (s, spec) in window.spectra.iter().enumerate() {
                let (jj, ll) = spec_slots[s];
                let step = n as f64 * window.omega0;
                let inner = k_max / n;
                let mut kps: Vec<i64> = (-inner..=inner).collect();
                if let Some(t) = &truth {
                    // Harmonics inside another grid of the same spectrum are retained there.
                    let covered = |k: i64| {
                        let w = spec.center + (k * n) as f64 * window.omega0;
                        window.spectra.iter().enumerate().any(|(o, other)| {
                            o != s && spec_slots[o] == spec_slots[s] && (w - other.center).abs() <= window.half_width() + 1e-9 * window.omega0
                        })
                    };
                    kps.extend(
                        harmonics_in(&t.support(&spec.truth), spec.center, step)
                            .into_iter()
                            .filter(|&k| k.abs() > inner && !covered(k)),
                    );
                }
                for kp in kps {
                    let k = kp * n;
                    let w = spec.center + k as f64 * window.omega0;
                    let coef = generalized_filters(&kernel, w, omega)[p - 1][jj][ll] * weight;
                    let inside = k.abs() <= k_max;
                    if inside {
                        builder.add_term(&mut re, &mut im, s, k, coef);
                    }
                    if let Some(t) = &truth {
                        let v = (coef * t.value(&spec.truth, w)).norm();
                        if inside {
                            retained += v;
                        } else {
                            dropped += v;
                        }
                    }
                }
            }
            let label = RowLabel {
                experiment: rec.experiment,
                sequence_id: rec.sequence_id.clone(),
                cycle_time: tc,
                quantity: p,
                component: Component::Re,
            };
            let tail = truth.as_ref().map(|_| (dropped, retained));
            builder.push_complex(label, re, im, rec.q[p - 1], tail);
        }
    }
    builder.finish(imbalance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regularization {
    /// λ = 0, falling back to 1e−6·‖A‖² when the condition number exceeds 1e8.
    Auto,
    Fixed(f64),
}

pub const AUTO_CONDITION_LIMIT: f64 = 1e8;
pub const AUTO_LAMBDA_FACTOR: f64 = 1e-6;
/// Condition number treated as numerically singular for unregularized solves.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    pub id: String,
    pub omega: Vec<f64>,
    pub s_hat: Vec<C64>,
    pub s_true: Option<Vec<C64>>,
}

impl SpectrumEstimate {
    /// √(Σ|ŝ−s|²/Σ|s|²) over grid points with |s| > `threshold`·peak|s|.
    pub fn relative_rms(&self, threshold: f64) -> Option<f64> {
        let truth = self.s_true.as_ref()?;
        let peak = truth.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return None;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (h, t) in self.s_hat.iter().zip(truth) {
            if t.norm() > threshold * peak {
                num += (h - t).norm_sqr();
                den += t.norm_sqr();
            }
        }
        Some((num / den).sqrt())
    }

    pub fn peak(&self) -> f64 {
        self.s_hat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionResult {
    pub estimates: Vec<SpectrumEstimate>,
    pub solution: Vec<f64>,
    /// ‖Ax − b‖ of the equilibrated system.
    pub residual_norm: f64,
    pub condition_number: f64,
    pub lambda: f64,
    /// ‖x_SVD − x_QR‖/‖x_SVD‖ when λ = 0 and the system is overdetermined.
    pub qr_discrepancy: Option<f64>,
}

impl ReconstructionResult {
    pub fn attach_truth(&mut self, truth: &TruthModel, window: &ReconstructionWindow) {
        for (est, spec) in self.estimates.iter_mut().zip(&window.spectra) {
            est.s_true = Some(est.omega.iter().map(|&w| truth.value(&spec.truth, w)).collect());
        }
    }

    pub fn estimate(&self, id: &str) -> Option<&SpectrumEstimate> {
        self.estimates.iter().find(|e| e.id == id)
    }

    /// Largest per-spectrum relative RMS.
    pub fn max_relative_rms(&self, threshold: f64) -> Option<f64> {
        self.estimates.iter().map(|e| e.relative_rms(threshold)).collect::<Option<Vec<_>>>().map(|v| v.into_iter().fold(0.0, f64::max))
    }

    /// Relative RMS pooled over all spectra and all grid points.
    pub fn pooled_relative_rms(&self) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for e in &self.estimates {
            for (h, t) in e.s_hat.iter().zip(e.s_true.as_ref()?) {
                num += (h - t).norm_sqr();
                den += t.norm_sqr();
            }
        }
        (den > 0.0).then(|| (num / den).sqrt())
    }
}

fn qr_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb)
}

/// Least-squares (λ = 0) or Tikhonov solution of the equilibrated system via the SVD.
pub fn solve_spectra(system: &LinearSystem, reg: Regularization) -> Result<ReconstructionResult> {
    let (a, b) = (&system.a, &system.b);
    let n = a.ncols();
    let svd = thin_svd(a)?;
    let sv = &svd.sigma;
    let smax = sv.max();
    let cond = system.diagnostics.condition_number;
    let lambda = match reg {
        Regularization::Fixed(l) if !(l.is_finite() && l >= 0.0) => return invalid(format!("λ = {l} must be finite and ≥ 0")),
        Regularization::Fixed(l) => l,
        Regularization::Auto if cond > AUTO_CONDITION_LIMIT => AUTO_LAMBDA_FACTOR * smax * smax,
        Regularization::Auto => 0.0,
    };
    if lambda == 0.0 && cond > SINGULAR_CONDITION {
        return Err(QnsError::SolverFailure(format!(
            "system is numerically singular (condition number {cond:e}); use λ > 0 or a richer design"
        )));
    }
    let (u, vt) = (&svd.u, &svd.v_t);
    let mut x = DVector::zeros(n);
    for (i, &s) in sv.iter().enumerate() {
        if s <= 0.0 {
            continue;
        }
        let f = s / (s * s + lambda) * u.column(i).dot(b);
        x += vt.row(i).transpose() * f;
    }
    let qr_discrepancy = (lambda == 0.0 && a.nrows() >= n)
        .then(|| qr_solve(a, b))
        .flatten()
        .map(|xq| (&x - xq).norm() / x.norm().max(f64::MIN_POSITIVE));
    let residual_norm = (a * &x - b).norm();
    let estimates = unpack(system, &x);
    Ok(ReconstructionResult {
        estimates,
        solution: x.iter().copied().collect(),
        residual_norm,
        condition_number: cond,
        lambda,
        qr_discrepancy,
    })
}

/// Spectrum values on each grid from the parity/component unknowns.
fn unpack(system: &LinearSystem, x: &DVector<f64>) -> Vec<SpectrumEstimate> {
    let w = &system.window;
    let k_max = w.k_max as i64;
    let mut out: Vec<SpectrumEstimate> = w
        .spectra
        .iter()
        .enumerate()
        .map(|(s, spec)| SpectrumEstimate {
            id: spec.id.clone(),
            omega: w.grid(s),
            s_hat: vec![C64::new(0.0, 0.0); 2 * w.k_max + 1],
            s_true: None,
        })
        .collect();
    for (i, u) in system.unknowns.iter().enumerate() {
        let phase = if u.component == Component::Re { C64::new(x[i], 0.0) } else { C64::new(0.0, x[i]) };
        let est = &mut out[u.spectrum];
        for k in [u.k as i64, -(u.k as i64)] {
            if k == 0 && u.k != 0 {
                continue;
            }
            let sign = if u.parity == Parity::Odd && k < 0 { -1.0 } else { 1.0 };
            est.s_hat[(k + k_max) as usize] += phase * sign;
            if u.k == 0 {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemConfig;
    use crate::noise::{Shape, SpectrumEntry};
    use crate::reconstruction::{simulate_measurements, Experiment};
    use crate::pulse_control::builtin_sequence;

    fn system_from(a: DMatrix<f64>, b: DVector<f64>) -> LinearSystem {
        let spec = SpectrumSpec {
            id: "s".into(),
            center: 0.0,
            parts: vec![(Parity::Even, Component::Re)],
            truth: TruthSource::Spherical { j: 0, l: 0 },
        };
        let k = a.ncols() - 1;
        let window = ReconstructionWindow::new(1.0, k, WindowMode::ZeroSplitting, vec![spec]).unwrap();
        let mut builder = SystemBuilder::new(window);
        assert_eq!(builder.unknowns.len(), a.ncols());
        for r in 0..a.nrows() {
            let label = RowLabel { experiment: r, sequence_id: "t".into(), cycle_time: 1.0, quantity: 1, component: Component::Re };
            builder.push_real(label, a.row(r).iter().copied().collect(), b[r], None);
        }
        builder.finish(ImbalanceHandling::NotApplicable).unwrap()
    }

    #[test]
    fn square_system_exact_recovery() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.2, -0.7, 2.0]);
        let x = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let sys = system_from(a.clone(), &a * &x);
        let r = solve_spectra(&sys, Regularization::Fixed(0.0)).unwrap();
        for i in 0..3 {
            assert!((r.solution[i] - x[i]).abs() < 1e-9);
        }
        assert!(r.residual_norm < 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = DMatrix::from_fn(12, 4, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() + if i == j { 2.0 } else { 0.0 });
        let b = DVector::from_fn(12, |i, _| (i as f64 * 0.9).cos());
        let sys = system_from(a, b);
        let r = solve_spectra(&sys, Regularization::Fixed(0.0)).unwrap();
        // Independent route: Cholesky on AᵀA of the equilibrated system.
        let ata = sys.a.transpose() * &sys.a;
        let atb = sys.a.transpose() * &sys.b;
        let xn = ata.cholesky().unwrap().solve(&atb);
        for i in 0..4 {
            assert!((r.solution[i] - xn[i]).abs() < 1e-9 * xn.norm());
        }
        assert!(r.qr_discrepancy.unwrap() < 1e-9);
    }

    #[test]
    fn tikhonov_matches_regularized_normal_equations() {
        let a = DMatrix::from_fn(8, 3, |i, j| ((i + 2 * j) as f64).cos());
        let b = DVector::from_fn(8, |i, _| i as f64 * 0.1);
        let sys = system_from(a, b);
        let lam = 0.3;
        let r = solve_spectra(&sys, Regularization::Fixed(lam)).unwrap();
        let m = sys.a.transpose() * &sys.a + DMatrix::identity(3, 3) * lam;
        let xn = m.lu().solve(&(sys.a.transpose() * &sys.b)).unwrap();
        for i in 0..3 {
            assert!((r.solution[i] - xn[i]).abs() < 1e-10, "{} vs {}", r.solution[i], xn[i]);
        }
        assert!(solve_spectra(&sys, Regularization::Fixed(-1.0)).is_err());
    }

    #[test]
    fn thin_svd_reproduces_rank_deficient_matrices() {
        for (m, n) in [(8, 3), (3, 8), (5, 5)] {
            let mut a = DMatrix::from_fn(m, n, |i, j| ((i + 2 * j) as f64).cos());
            for r in 0..m {
                let s = a.row(r).norm();
                a.row_mut(r).scale_mut(1.0 / s);
            }
            let s = thin_svd(&a).unwrap();
            let back = &s.u * DMatrix::from_diagonal(&s.sigma) * &s.v_t;
            assert!((back - &a).norm() < 1e-12 * a.norm());
            let ata = a.transpose() * &a;
            let mut ev: Vec<f64> = ata.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
            ev.sort_by(|x, y| y.total_cmp(x));
            let mut sv: Vec<f64> = s.sigma.iter().copied().collect();
            sv.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in sv.iter().zip(&ev) {
                assert!((x - y).abs() < 1e-7, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn singular_requires_regularization() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        let sys = system_from(a, DVector::from_vec(vec![1.0, 2.0, -1.0]));
        assert!(matches!(solve_spectra(&sys, Regularization::Fixed(0.0)), Err(QnsError::SolverFailure(_))));
        let r = solve_spectra(&sys, Regularization::Auto).unwrap();
        assert!(r.lambda > 0.0);
    }

    #[test]
    fn unpack_applies_parity() {
        let spec = SpectrumSpec {
            id: "s".into(),
            center: 0.0,
            parts: vec![(Parity::Even, Component::Re), (Parity::Odd, Component::Im)],
            truth: TruthSource::Spherical { j: 0, l: 0 },
        };
        let window = ReconstructionWindow::new(1.0, 1, WindowMode::ZeroSplitting, vec![spec]).unwrap();
        let builder = SystemBuilder::new(window);
        assert_eq!(builder.unknowns.len(), 3);
        let sys = LinearSystem {
            a: DMatrix::zeros(0, 3),
            b: DVector::zeros(0),
            unknowns: builder.unknowns.clone(),
            rows: vec![],
            row_scales: vec![],
            window: builder.window.clone(),
            diagnostics: AssemblyDiagnostics {
                imbalance: ImbalanceHandling::NotApplicable,
                tail_bound: None,
                condition_number: 1.0,
                dropped_rows: 0,
            },
        };
        let est = unpack(&sys, &DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(est[0].s_hat, vec![C64::new(2.0, -3.0), C64::new(1.0, 0.0), C64::new(2.0, 3.0)]);
    }

    fn gauss(c: f64, w: f64) -> SpectrumEntry {
        SpectrumEntry { terms: vec![(C64::new(1.0, 0.0), Shape::Gaussian { center: c, width: w })] }
    }

    #[test]
    fn synchronized_window_puts_imbalanced_spectra_on_both_lobes() {
        let w = ReconstructionWindow::synchronized(2.0 * PI, 4, 100.0).unwrap();
        assert_eq!(w.spectra.len(), 3 + 2 * 6);
        let lobes: Vec<f64> = w.spectra.iter().filter(|s| s.truth == TruthSource::Spherical { j: 1, l: 1 }).map(|s| s.center).collect();
        assert_eq!(lobes, vec![100.0, -100.0]);
        let mixed: Vec<f64> = w.spectra.iter().filter(|s| s.truth == TruthSource::Spherical { j: 0, l: 1 }).map(|s| s.center).collect();
        assert_eq!(mixed, vec![0.0, -100.0]);
    }

    #[test]
    fn assembly_rejects_incommensurate_grid_and_small_omega_t() {
        let sys = SystemConfig::new(2000.0).unwrap();
        let d = ExperimentDesign::six_sequence_campaign(1.0, 20, 2, sys, None).unwrap();
        let rec = vec![];
        let w = ReconstructionWindow::large_splitting(2.0 * PI / 0.7, 4, 2000.0).unwrap();
        assert!(matches!(assemble_system(&d, &rec, &w, None), Err(QnsError::InvalidInput(_))));
        let slow = SystemConfig::new(5.0).unwrap();
        let d = ExperimentDesign::six_sequence_campaign(1.0, 20, 2, slow, None).unwrap();
        let w = ReconstructionWindow::large_splitting(2.0 * PI, 4, 5.0).unwrap();
        assert!(matches!(assemble_system(&d, &rec, &w, None), Err(QnsError::InvalidInput(_))));
        let w = ReconstructionWindow::synchronized(2.0 * PI, 4, 5.0).unwrap();
        assert!(matches!(assemble_system(&d, &rec, &w, None), Err(QnsError::InvalidInput(_))));
    }

    #[test]
    fn single_cycle_time_is_rank_deficient() {
        let omega = 2.0 * PI * 400.0;
        let sys = SystemConfig::new(omega).unwrap();
        let ex: Vec<Experiment> = (1..=6)
            .map(|id| Experiment {
                sequence_id: format!("U{id}"),
                sequence: builtin_sequence(id, 1.0, 20).unwrap(),
                quantities: if id <= 3 { vec![1, 2] } else { vec![3, 4] },
            })
            .collect();
        let d = ExperimentDesign::new(1.0, ex, None, sys).unwrap();
        let mut noise = SpectrumSet::zero(Basis::Spherical);
        *noise.entry_mut(1, 1) = gauss(3.0, 4.0);
        let rec = simulate_measurements(&d, &noise, 0).unwrap();
        let w = ReconstructionWindow::large_splitting(2.0 * PI, 8, omega).unwrap();
        let s = assemble_system(&d, &rec, &w, None).unwrap();
        assert_eq!(s.unknowns.len(), 51);
        assert!(s.a.nrows() < s.unknowns.len());
        assert!(s.diagnostics.condition_number.is_infinite());
    }
}
