use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::{
    harmonic_ratio, harmonics_in, solve_spectra, CartesianPart, Component, Experiment, ExperimentDesign, ImbalanceHandling,
    LinearSystem, Parity, ReconstructionResult, ReconstructionWindow, Regularization, RowLabel, SpectrumSpec, SystemBuilder,
    TruthModel, TruthSource, WindowMode, SINGULAR_CONDITION,
};
use crate::dynamics::{second_cumulant_cartesian_all, CumulantCoefficients, SystemConfig};
use crate::error::{invalid, QnsError, Result};
use crate::filters::FilterKernel;
use crate::noise::SpectrumSet;
use crate::pulse_control::{builtin_sequence, switching_matrix, Basis, Pulse, PulseSequence};

/// Which spectrum combination an Ω = 0 channel isolates.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ChannelKind {
    /// C_{γ,0} = −2Σ_{a≠γ} ∫₀^∞ S⁺_aa G⁺_{aa;aa}.
    SelfSum { gamma: usize },
    /// (C_{a,c} − C_{d,c})/i = s·∫₀^∞ Re[S⁺_ab G⁺_{aa;bb}].
    CrossPlus { a: usize, b: usize, sign: f64 },
    /// C_{γ,γ} = s·∫₀^∞ Im[S⁻_ab G⁺_{aa;bb}].
    CrossMinus { a: usize, b: usize, sign: f64 },
}

const CHANNELS: [ChannelKind; 9] = [
    ChannelKind::SelfSum { gamma: 0 },
    ChannelKind::SelfSum { gamma: 1 },
    ChannelKind::SelfSum { gamma: 2 },
    ChannelKind::CrossPlus { a: 0, b: 2, sign: -4.0 },
    ChannelKind::CrossPlus { a: 0, b: 1, sign: 4.0 },
    ChannelKind::CrossPlus { a: 1, b: 2, sign: -4.0 },
    ChannelKind::CrossMinus { a: 1, b: 2, sign: 4.0 },
    ChannelKind::CrossMinus { a: 0, b: 2, sign: -4.0 },
    ChannelKind::CrossMinus { a: 0, b: 1, sign: 4.0 },
];

/// Measured value of a channel from the full C_{γ,β} table (rows γ = x, y, z).
fn channel_value(kind: ChannelKind, c: &[CumulantCoefficients; 3]) -> f64 {
    let i = C64::new(0.0, 1.0);
    let comp = |g: usize, b: usize| c[g].c[b + 1];
    match kind {
        ChannelKind::SelfSum { gamma } => c[gamma].c0().re,
        // C_{x,y} − C_{z,y}, C_{x,z} − C_{y,z}, C_{z,x} − C_{y,x}
        ChannelKind::CrossPlus { a: 0, b: 2, .. } => ((comp(0, 1) - comp(2, 1)) / i).re,
        ChannelKind::CrossPlus { a: 0, b: 1, .. } => ((comp(0, 2) - comp(1, 2)) / i).re,
        ChannelKind::CrossPlus { .. } => ((comp(2, 0) - comp(1, 0)) / i).re,
        ChannelKind::CrossMinus { a: 1, b: 2, .. } => comp(0, 0).re,
        ChannelKind::CrossMinus { a: 0, b: 2, .. } => comp(1, 1).re,
        ChannelKind::CrossMinus { .. } => comp(2, 2).re,
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// S⁺_xx, S⁺_yy, S⁺_zz, then S⁺ and S⁻ for the xz, xy, yz pairs.
fn zero_splitting_spectra() -> Vec<SpectrumSpec> {
    let mut out = Vec::new();
    for a in 0..3 {
        out.push(SpectrumSpec {
            id: format!("S+_{}{}", AXES[a], AXES[a]),
            center: 0.0,
            parts: vec![(Parity::Even, Component::Re)],
            truth: TruthSource::Cartesian { a, b: a, part: CartesianPart::Plus },
        });
    }
    for (a, b) in [(0, 2), (0, 1), (1, 2)] {
        out.push(SpectrumSpec {
            id: format!("S+_{}{}", AXES[a], AXES[b]),
            center: 0.0,
            parts: vec![(Parity::Even, Component::Re), (Parity::Odd, Component::Im)],
            truth: TruthSource::Cartesian { a, b, part: CartesianPart::Plus },
        });
        out.push(SpectrumSpec {
            id: format!("S-_{}{}", AXES[a], AXES[b]),
            center: 0.0,
            parts: vec![(Parity::Odd, Component::Re), (Parity::Even, Component::Im)],
            truth: TruthSource::Cartesian { a, b, part: CartesianPart::Minus },
        });
    }
    out
}

fn spectrum_index(a: usize, b: usize, plus: bool) -> usize {
    if a == b {
        return a;
    }
    let pair = match (a, b) {
        (0, 2) => 0,
        (0, 1) => 1,
        _ => 2,
    };
    3 + 2 * pair + usize::from(!plus)
}

/// Diagonal π-pulse cycles: symmetric and asymmetric placements about each axis, two-axis cycles and U₄.
pub fn zero_splitting_sequences(cycle_time: f64, repetitions: usize) -> Result<Vec<(String, PulseSequence)>> {
    let mut out = Vec::new();
    let pulse = |axis: usize, at: f64| match axis {
        0 => Pulse::x(PI, at),
        1 => Pulse::y(PI, at),
        _ => Pulse::z(PI, at),
    };
    for (axis, name) in [(0, "X"), (1, "Y"), (2, "Z")] {
        out.push((format!("{name}2"), PulseSequence::new(vec![pulse(axis, 0.25)?, pulse(axis, 0.75)?], cycle_time, repetitions)?));
        out.push((format!("{name}A"), PulseSequence::new(vec![pulse(axis, 0.25)?, pulse(axis, 0.5)?], cycle_time, repetitions)?));
    }
    // Two-axis cycles with off-grid pulse times; dyadic placements leave F_aa(hω_c)F_bb(−hω_c)
    // real at every harmonic, which hides the odd cross-spectrum parts.
    for (a, b, name) in [(0, 2, "XZ"), (0, 1, "XY"), (1, 2, "YZ")] {
        let pulses = vec![pulse(a, 0.2)?, pulse(b, 0.45)?, pulse(a, 0.7)?, pulse(b, 1.0)?];
        out.push((name.to_string(), PulseSequence::new(pulses, cycle_time, repetitions)?));
    }
    out.push(("U4".into(), builtin_sequence(4, cycle_time, repetitions)?));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ZeroSplittingParams {
    pub t_max: f64,
    pub repetitions: usize,
    pub n_max: usize,
    pub k_max: usize,
    /// Cycle templates; each is rescaled to T_c = T_max/n with M repetitions.
    pub sequences: Vec<(String, PulseSequence)>,
    pub system: SystemConfig,
    pub regularization: Regularization,
}

impl ZeroSplittingParams {
    pub fn with_default_sequences(t_max: f64, repetitions: usize, n_max: usize, k_max: usize) -> Result<Self> {
        Ok(Self {
            t_max,
            repetitions,
            n_max,
            k_max,
            sequences: zero_splitting_sequences(t_max, 1)?,
            system: SystemConfig::new(0.0)?,
            regularization: Regularization::Auto,
        })
    }

    pub fn design(&self) -> Result<ExperimentDesign> {
        let mut ex = Vec::new();
        for (id, seq) in &self.sequences {
            for n in 1..=self.n_max {
                ex.push(Experiment {
                    sequence_id: id.clone(),
                    sequence: seq.with_cycle(self.t_max / n as f64, self.repetitions)?,
                    quantities: Vec::new(),
                });
            }
        }
        ExperimentDesign::new(self.t_max, ex, None, self.system)
    }
}

#[derive(Debug, Clone)]
pub struct ZeroSplittingOutcome {
    pub design: ExperimentDesign,
    /// C_{γ,β} per experiment, rows γ = x, y, z.
    pub coefficients: Vec<[CumulantCoefficients; 3]>,
    pub system: LinearSystem,
    pub result: ReconstructionResult,
}

/// Simulates the Ω = 0 campaign and assembles the channel equations.
pub fn assemble_zero_splitting(
    noise: &SpectrumSet,
    params: &ZeroSplittingParams,
) -> Result<(ExperimentDesign, Vec<[CumulantCoefficients; 3]>, LinearSystem, TruthModel)> {
    if params.system.splitting != 0.0 {
        return invalid("zero-splitting protocol requires Ω = 0");
    }
    for (id, seq) in &params.sequences {
        if !switching_matrix(seq, Basis::Cartesian).is_diagonal(1e-12) {
            return invalid(format!("{id}: zero-splitting channels need diagonal control"));
        }
    }
    let design = params.design()?;
    let coefficients: Vec<[CumulantCoefficients; 3]> = design
        .experiments
        .par_iter()
        .map(|e| second_cumulant_cartesian_all(&e.sequence, noise, &params.system))
        .collect::<Result<_>>()?;
    let omega0 = 2.0 * PI / params.t_max;
    let window = ReconstructionWindow::new(omega0, params.k_max, WindowMode::ZeroSplitting, zero_splitting_spectra())?;
    let truth = TruthModel::new(noise)?;
    let mut builder = SystemBuilder::new(window.clone());
    let k_max = params.k_max as i64;
    for (idx, (e, c)) in design.experiments.iter().zip(&coefficients).enumerate() {
        let tc = e.sequence.cycle_time();
        let n = harmonic_ratio(params.t_max, tc).expect("design checked commensurability") as i64;
        let single = e.sequence.with_cycle(tc, 1)?;
        let kernel = FilterKernel::new(&switching_matrix(&single, Basis::Cartesian), tc)?;
        let weight = e.sequence.repetitions() as f64 / tc;
        for (ch, &kind) in CHANNELS.iter().enumerate() {
            let mut re = builder.zero_row();
            let mut im = builder.zero_row();
            // (spectrum, G⁺ pair, prefactor); all terms of a channel share the Re or Im projection.
            let terms: Vec<(usize, usize, usize, f64)> = match kind {
                ChannelKind::SelfSum { gamma } => (0..3).filter(|&a| a != gamma).map(|a| (spectrum_index(a, a, true), a, a, -2.0)).collect(),
                ChannelKind::CrossPlus { a, b, sign } => vec![(spectrum_index(a, b, true), a, b, sign)],
                ChannelKind::CrossMinus { a, b, sign } => vec![(spectrum_index(a, b, false), a, b, sign)],
            };
            let use_im = matches!(kind, ChannelKind::CrossMinus { .. });
            let (mut retained, mut dropped) = (0.0, 0.0);
            for &(s, a, b, pref) in &terms {
                let spec = &window.spectra[s];
                let step = n as f64 * omega0;
                let inner = k_max / n;
                let mut hs: Vec<i64> = (0..=inner).collect();
                hs.extend(harmonics_in(&truth.support(&spec.truth), 0.0, step).into_iter().filter(|&h| h > inner));
                for h in hs {
                    let k = h * n;
                    let w = k as f64 * omega0;
                    let g = kernel.ff1(w)[4 * a] * kernel.ff1(-w)[4 * b];
                    let half = if h == 0 { 0.5 } else { 1.0 };
                    let coef = g * (pref * half * weight);
                    if k <= k_max {
                        builder.add_term(&mut re, &mut im, s, k, coef);
                    }
                    let prod = coef * truth.value(&spec.truth, w);
                    let v = if use_im { prod.im.abs() } else { prod.re.abs() };
                    if k <= k_max {
                        retained += v;
                    } else {
                        dropped += v;
                    }
                }
            }
            let label = RowLabel {
                experiment: idx,
                sequence_id: e.sequence_id.clone(),
                cycle_time: tc,
                quantity: ch,
                component: Component::Re,
            };
            let coefs = if use_im { im } else { re };
            builder.push_real(label, coefs, channel_value(kind, c), Some((dropped, retained)));
        }
    }
    let system = builder.finish(ImbalanceHandling::NotApplicable)?;
    Ok((design, coefficients, system, truth))
}

/// Reconstructs S⁺ self and cross spectra and S⁻ cross spectra at Ω = 0 from the channel
/// combinations that involve only G⁺ filters.
pub fn run_protocol_zero_splitting(noise: &SpectrumSet, params: &ZeroSplittingParams) -> Result<ZeroSplittingOutcome> {
    let (design, coefficients, system, truth) = assemble_zero_splitting(noise, params)?;
    let window = system.window.clone();
    let cond = system.diagnostics.condition_number;
    if cond > SINGULAR_CONDITION {
        return Err(QnsError::SolverFailure(format!(
            "insufficient sequence diversity: condition number {cond:e}; add sequences with different switching symmetry"
        )));
    }
    let mut result = solve_spectra(&system, params.regularization)?;
    result.attach_truth(&truth, &window);
    Ok(ZeroSplittingOutcome { design, coefficients, system, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::appendix_a_reference;
    use crate::noise::{Shape, SpectrumEntry};

    fn gauss(amp: C64, c: f64, w: f64) -> SpectrumEntry {
        SpectrumEntry { terms: vec![(amp, Shape::Gaussian { center: c, width: w })] }
    }

    fn params() -> ZeroSplittingParams {
        ZeroSplittingParams::with_default_sequences(1.0, 20, 6, 6).unwrap()
    }

    /// Hermitian multiaxis model: S_ba(ω) = conj S_ab(ω).
    fn hermitian_noise() -> SpectrumSet {
        let mut noise = SpectrumSet::zero(Basis::Cartesian);
        for a in 0..3 {
            *noise.entry_mut(a, a) = gauss(C64::new(1.0 + a as f64, 0.0), 0.5 * a as f64, 3.0);
        }
        for ((a, b), amp, c, w) in [((0, 2), C64::new(0.3, 0.2), 1.0, 2.0), ((0, 1), C64::new(-0.2, 0.1), 2.0, 2.0), ((1, 2), C64::new(0.0, 0.3), -1.0, 3.0)] {
            *noise.entry_mut(a, b) = gauss(amp, c, w);
            *noise.entry_mut(b, a) = gauss(amp.conj(), c, w);
        }
        noise
    }

    #[test]
    fn channel_map_matches_closed_forms() {
        let sys = SystemConfig::new(0.0).unwrap();
        let noise = hermitian_noise();
        let i = C64::new(0.0, 1.0);
        for (id, seq) in zero_splitting_sequences(1.0, 3).unwrap() {
            let c = second_cumulant_cartesian_all(&seq, &noise, &sys).unwrap();
            let t = appendix_a_reference(&seq, &noise, &sys).unwrap();
            let expect = [
                t.c_x0.re,
                t.c_y0.re,
                t.c_z0.re,
                (t.xy_minus_zy / i).re,
                (t.xz_minus_yz / i).re,
                (t.zx_minus_yx / i).re,
                t.c_xx.re,
                t.c_yy.re,
                t.c_zz.re,
            ];
            for (kind, e) in CHANNELS.iter().zip(expect) {
                let v = channel_value(*kind, &c);
                assert!((v - e).abs() < 1e-8 * e.abs().max(1e-3), "{id} {kind:?}: {v} vs {e}");
            }
        }
    }

    #[test]
    fn dephasing_only() {
        let mut noise = SpectrumSet::zero(Basis::Cartesian);
        *noise.entry_mut(2, 2) = gauss(C64::new(1.0, 0.0), 2.0 * PI * 1.5, 2.0 * PI * 1.2);
        let out = run_protocol_zero_splitting(&noise, &params()).unwrap();
        let r = &out.result;
        let zz = r.estimate("S+_zz").unwrap();
        assert!(zz.relative_rms(0.05).unwrap() < 0.1, "{:?}", zz.relative_rms(0.05));
        let peak = zz.peak();
        for e in &r.estimates {
            if e.id != "S+_zz" {
                assert!(e.peak() < 0.02 * peak, "{} peak {}", e.id, e.peak());
            }
        }
    }

    #[test]
    fn odd_quantum_cross_spectrum_from_c_yy() {
        let mut noise = SpectrumSet::zero(Basis::Cartesian);
        let w = 2.0 * PI * 1.2;
        for a in 0..3 {
            *noise.entry_mut(a, a) = gauss(C64::new(1.0, 0.0), 0.0, w);
        }
        // S_xz = S_zx with odd real part: S⁻_xz(ω) = S_xz(ω) − S_zx(−ω) is odd and real.
        let c = 2.0 * PI * 1.5;
        let odd = SpectrumEntry {
            terms: vec![
                (C64::new(0.4, 0.0), Shape::Gaussian { center: c, width: w }),
                (C64::new(-0.4, 0.0), Shape::Gaussian { center: -c, width: w }),
            ],
        };
        *noise.entry_mut(0, 2) = odd.clone();
        *noise.entry_mut(2, 0) = odd;
        let out = run_protocol_zero_splitting(&noise, &params()).unwrap();
        let s = out.result.estimate("S-_xz").unwrap();
        let truth = s.s_true.as_ref().unwrap();
        assert!(truth.iter().any(|z| z.norm() > 0.5), "S⁻_xz should be present");
        assert!(s.relative_rms(0.05).unwrap() < 0.1, "{:?}", s.relative_rms(0.05));
    }

    #[test]
    fn single_sequence_lacks_diversity() {
        let mut p = params();
        p.sequences.truncate(1);
        let noise = SpectrumSet::zero(Basis::Cartesian);
        assert!(matches!(run_protocol_zero_splitting(&noise, &p), Err(QnsError::SolverFailure(_))));
    }

    #[test]
    fn rejects_nonzero_splitting_and_tilted_control() {
        let mut p = params();
        p.system = SystemConfig::new(1.0).unwrap();
        let noise = SpectrumSet::zero(Basis::Cartesian);
        assert!(matches!(run_protocol_zero_splitting(&noise, &p), Err(QnsError::InvalidInput(_))));
        let mut p = params();
        p.sequences.push(("U6".into(), builtin_sequence(6, 1.0, 1).unwrap()));
        assert!(matches!(run_protocol_zero_splitting(&noise, &p), Err(QnsError::InvalidInput(_))));
    }

    #[test]
    fn cross_channel_sees_only_plus_xz() {
        // Changing everything except S⁺_xz leaves C_{x,y} − C_{z,y} unchanged.
        let seq = zero_splitting_sequences(1.0, 2).unwrap().remove(6).1;
        let sys = SystemConfig::new(0.0).unwrap();
        let a = hermitian_noise();
        let mut b = a.clone();
        for k in 0..3 {
            b.entry_mut(k, k).terms.push((C64::new(2.0, 0.0), Shape::Gaussian { center: 0.3 * k as f64, width: 2.5 }));
        }
        b.entry_mut(0, 1).terms.push((C64::new(0.5, 0.5), Shape::Gaussian { center: 1.0, width: 1.0 }));
        b.entry_mut(1, 0).terms.push((C64::new(0.5, -0.5), Shape::Gaussian { center: 1.0, width: 1.0 }));
        // i·r(ω) on S_xz and −i·r(ω) on S_zx with r even: S⁺_xz unchanged, S⁻_xz shifted by 2i·r.
        b.entry_mut(0, 2).terms.push((C64::new(0.0, 0.7), Shape::Gaussian { center: 0.0, width: 1.5 }));
        b.entry_mut(2, 0).terms.push((C64::new(0.0, -0.7), Shape::Gaussian { center: 0.0, width: 1.5 }));
        let ca = second_cumulant_cartesian_all(&seq, &a, &sys).unwrap();
        let cb = second_cumulant_cartesian_all(&seq, &b, &sys).unwrap();
        let va = channel_value(CHANNELS[3], &ca);
        let vb = channel_value(CHANNELS[3], &cb);
        assert!(va.abs() > 1e-3);
        assert!((va - vb).abs() < 1e-9 * va.abs(), "{va} vs {vb}");
        assert!((channel_value(CHANNELS[7], &ca) - channel_value(CHANNELS[7], &cb)).abs() > 1e-3);
    }
}
