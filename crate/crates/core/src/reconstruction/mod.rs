//! Measurement campaigns, comb-discretized linear systems and spectral reconstruction.

mod protocols;
mod system;
mod zero_splitting;

pub use protocols::*;
pub use system::*;
pub use zero_splitting::*;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::dynamics::{
    expectation_value, extract_coefficients, q_from_coefficients, q_generalized, second_cumulant_spherical_all, AccessibleM, Axis,
    CumulantOptions, MeasurementSetting, SystemConfig,
};
use crate::error::{invalid, Result};
use crate::filters::FilterKernel;
use crate::noise::{cartesian_to_spherical, SpectrumSet};
use crate::pulse_control::{builtin_sequence, switching_matrix, Basis, PulseSequence};

/// Relative tolerance for T_c = T_max/n and ΩT_c = 2πm checks.
pub const COMMENSURATE_TOL: f64 = 1e-9;

/// ΩT above which imbalanced filters are dropped.
pub const SUPPRESSION_THRESHOLD: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct Experiment {
    pub sequence_id: String,
    pub sequence: PulseSequence,
    /// Assigned Q_p indices, p ∈ 1..=4.
    pub quantities: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentDesign {
    /// Longest cycle time; every T_c equals T_max/n.
    pub t_max: f64,
    pub experiments: Vec<Experiment>,
    /// None is the exact (infinite-shot) limit.
    pub shots: Option<u64>,
    pub system: SystemConfig,
}

/// n with T_c = t_max/n, if it is an integer within tolerance.
pub fn harmonic_ratio(t_max: f64, cycle_time: f64) -> Option<usize> {
    let r = t_max / cycle_time;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= COMMENSURATE_TOL * r).then_some(n as usize)
}

impl ExperimentDesign {
    pub fn new(t_max: f64, experiments: Vec<Experiment>, shots: Option<u64>, system: SystemConfig) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return invalid("T_max must be positive");
        }
        if experiments.is_empty() {
            return invalid("design has no experiments");
        }
        if shots == Some(0) {
            return invalid("shot count must be positive");
        }
        system.validate()?;
        for e in &experiments {
            if harmonic_ratio(t_max, e.sequence.cycle_time()).is_none() {
                return invalid(format!(
                    "{}: T_c = {:e} is not T_max/n for T_max = {t_max:e}",
                    e.sequence_id,
                    e.sequence.cycle_time()
                ));
            }
            if e.quantities.iter().any(|&p| !(1..=4).contains(&p)) {
                return invalid(format!("{}: quantity indices must be in 1..4", e.sequence_id));
            }
        }
        Ok(Self { t_max, experiments, shots, system })
    }

    /// U₁–U₃ with Q₁, Q₂ and U₄–U₆ with Q₃, Q₄, each at T_c = T_max/n for n = 1..n_max.
    pub fn six_sequence_campaign(t_max: f64, repetitions: usize, n_max: usize, system: SystemConfig, shots: Option<u64>) -> Result<Self> {
        let mut ex = Vec::new();
        for id in 1..=6 {
            for n in 1..=n_max {
                ex.push(Experiment {
                    sequence_id: format!("U{id}"),
                    sequence: builtin_sequence(id, t_max / n as f64, repetitions)?,
                    quantities: if id <= 3 { vec![1, 2] } else { vec![3, 4] },
                });
            }
        }
        Self::new(t_max, ex, shots, system)
    }
}

/// Q₁..Q₄ measured (or predicted) for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct QRecord {
    pub experiment: usize,
    pub sequence_id: String,
    pub cycle_time: f64,
    pub repetitions: usize,
    pub q: [C64; 4],
}

/// Estimated expectation from `shots` binary outcomes of ±1 with mean `e`.
fn sample_expectation(e: f64, shots: u64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let p = (0.5 * (1.0 + e)).clamp(0.0, 1.0);
    let b = Binomial::new(shots, p).map_err(|err| crate::QnsError::NumericalFailure(err.to_string()))?;
    Ok(2.0 * b.sample(rng) as f64 / shots as f64 - 1.0)
}

/// Q values with binomial shot noise on the twelve underlying expectation values.
fn noisy_q(seq: &PulseSequence, noise: &SpectrumSet, sys: &SystemConfig, shots: u64, rng: &mut ChaCha8Rng) -> Result<[C64; 4]> {
    let c = second_cumulant_spherical_all(seq, noise, sys, CumulantOptions::default())?;
    let mut measured = Vec::with_capacity(2);
    for gamma in [Axis::Z, Axis::X] {
        let mut e = [[0.0; 2]; 3];
        for s in MeasurementSetting::all_for(gamma) {
            let exact = expectation_value(&s.rho(), &c[gamma.index()])?;
            e[s.prep.index()][usize::from(s.sign == crate::dynamics::Sign::Minus)] = sample_expectation(exact, shots, rng)?;
        }
        let mut m = AccessibleM::from_expectations(gamma, &e);
        // Each M_{+,α} estimates the same tr[e^𝒞σ_γ]; pool them.
        let mean = m.plus.iter().sum::<C64>() / 3.0;
        m.plus = [mean; 3];
        measured.push(extract_coefficients(&m)?);
    }
    q_from_coefficients(&measured[0], &measured[1])
}

/// Q₁..Q₄ for every experiment; exact values from the generalized-filter integrals, or
/// shot-sampled values when the design has a finite shot count.
pub fn simulate_measurements(design: &ExperimentDesign, noise: &SpectrumSet, seed: u64) -> Result<Vec<QRecord>> {
    let sph = match noise.basis() {
        Basis::Spherical => noise.clone(),
        Basis::Cartesian => cartesian_to_spherical(noise)?,
    };
    let sys = &design.system;
    design
        .experiments
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let q = match design.shots {
                None => {
                    let kernel = FilterKernel::new(&switching_matrix(&e.sequence, Basis::Spherical), e.sequence.duration())?;
                    q_generalized(&kernel, &sph, sys, false)?
                }
                Some(n) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    noisy_q(&e.sequence, &sph, sys, n, &mut rng)?
                }
            };
            Ok(QRecord {
                experiment: i,
                sequence_id: e.sequence_id.clone(),
                cycle_time: e.sequence.cycle_time(),
                repetitions: e.sequence.repetitions(),
                q,
            })
        })
        .collect()
}
