use std::f64::consts::PI;

use serde::Serialize;

use super::{
    assemble_system, simulate_measurements, solve_spectra, ExperimentDesign, LinearSystem, QRecord, ReconstructionResult,
    ReconstructionWindow, Regularization, TruthModel, SUPPRESSION_THRESHOLD,
};
use crate::dynamics::SystemConfig;
use crate::error::{invalid, Result};
use crate::filters::FilterKernel;
use crate::noise::{gaussian_triple, GaussianTripleParams, SpectrumSet};
use crate::pulse_control::{builtin_sequence, switching_matrix, Basis};

/// Fraction of the peak above which a spectrum counts as present (support edge, error mask).
pub const SIGNIFICANT_FRACTION: f64 = 0.05;
/// Fraction of the peak that must be inside the window to avoid a truncation warning.
pub const TAIL_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeSplittingParams {
    pub splitting: f64,
    /// Longest cycle time; ω₀ = 2π/T_max.
    pub t_max: f64,
    pub repetitions: usize,
    /// Cycle times T_max/n for n = 1..n_max.
    pub n_max: usize,
    pub k_max: usize,
    pub shots: Option<u64>,
    pub seed: u64,
    pub regularization: Regularization,
}

impl LargeSplittingParams {
    /// Ω/2π = 27 GHz, T_max = 2.4 μs, n = 1..8, M = 20, K = 8, exact measurements.
    pub fn reference_setup() -> Self {
        Self {
            splitting: 2.0 * PI * 27e9,
            t_max: 2.4e-6,
            repetitions: 20,
            n_max: 8,
            k_max: 8,
            shots: None,
            seed: 0,
            regularization: Regularization::Auto,
        }
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI / self.t_max
    }

    pub fn system(&self) -> Result<SystemConfig> {
        SystemConfig::new(self.splitting)
    }

    pub fn design(&self) -> Result<ExperimentDesign> {
        ExperimentDesign::six_sequence_campaign(self.t_max, self.repetitions, self.n_max, self.system()?, self.shots)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub design: ExperimentDesign,
    pub records: Vec<QRecord>,
    pub system: LinearSystem,
    pub result: ReconstructionResult,
}

/// Simulates the six-sequence campaign on `noise`, then reconstructs S_{−1,1}, S_{0,0}, S_{1,−1}.
pub fn run_protocol_large_splitting(noise: &SpectrumSet, params: &LargeSplittingParams) -> Result<ProtocolOutcome> {
    let design = params.design()?;
    let shortest = params.t_max / params.n_max as f64 * params.repetitions as f64;
    let omega_t = params.splitting * shortest;
    if omega_t <= SUPPRESSION_THRESHOLD {
        return invalid(format!(
            "ΩMT_c = {omega_t:e} ≤ {SUPPRESSION_THRESHOLD:e}; imbalanced filters are not suppressed. \
             Choose cycle times with ΩT_c = 2πm and use the synchronized window"
        ));
    }
    let records = simulate_measurements(&design, noise, params.seed)?;
    let window = ReconstructionWindow::large_splitting(params.omega0(), params.k_max, params.splitting)?;
    let system = assemble_system(&design, &records, &window, Some(noise))?;
    let mut result = solve_spectra(&system, params.regularization)?;
    result.attach_truth(&TruthModel::new(noise)?, &window);
    Ok(ProtocolOutcome { design, records, system, result })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub width: f64,
    /// Relative RMS error pooled over the three windows.
    pub error: f64,
    /// Worst per-spectrum relative RMS on points above 5% of peak.
    pub masked_error: f64,
    pub tail_bound: Option<f64>,
    /// Largest offset from any window center where the truth still exceeds 1% of its peak.
    pub support_edge: f64,
    pub tail_warning: bool,
}

/// Δ/2π = 2.4, 4.0, 8.0 MHz.
pub fn default_study_widths() -> Vec<f64> {
    [2.4, 4.0, 8.0].iter().map(|m| 2.0 * PI * m * 1e6).collect()
}

/// Furthest offset from the window centers at which |S| ≥ `fraction`·peak for a balanced spectrum.
fn support_edge(noise: &SpectrumSet, window: &ReconstructionWindow, fraction: f64) -> Result<f64> {
    let truth = TruthModel::new(noise)?;
    let mut edge: f64 = 0.0;
    for spec in &window.spectra {
        let iv = truth.support(&spec.truth);
        let pts: Vec<f64> = iv
            .iter()
            .flat_map(|&(a, b)| {
                let n = 4000;
                (0..=n).map(move |i| a + (b - a) * i as f64 / n as f64)
            })
            .collect();
        let vals: Vec<f64> = pts.iter().map(|&w| truth.value(&spec.truth, w).norm()).collect();
        let peak = vals.iter().copied().fold(0.0, f64::max);
        // Only points belonging to this window count; neighbours belong to other spectra.
        let near: f64 = window.spectra.iter().map(|s| (s.center - spec.center).abs()).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        for (w, v) in pts.iter().zip(&vals) {
            let off = (w - spec.center).abs();
            if *v >= fraction * peak && off < 0.5 * near {
                edge = edge.max(off);
            }
        }
    }
    Ok(edge)
}

/// Runs the large-splitting protocol for the three-Gaussian model at each width, with the
/// window fixed by `params`.
pub fn bandwidth_study(base: &GaussianTripleParams, widths: &[f64], params: &LargeSplittingParams) -> Result<Vec<BandwidthRow>> {
    let window = ReconstructionWindow::large_splitting(params.omega0(), params.k_max, params.splitting)?;
    let mut rows = Vec::with_capacity(widths.len());
    for &width in widths {
        let noise = gaussian_triple(&base.with_width(width))?;
        let out = run_protocol_large_splitting(&noise, params)?;
        let edge = support_edge(&noise, &window, TAIL_WARNING_FRACTION)?;
        let warn = edge > window.half_width();
        if warn {
            log::warn!(
                "Δ = {width:e}: spectrum exceeds 1% of peak {edge:e} rad/s from a window center, beyond Kω₀ = {:e}; truncation tail not negligible",
                window.half_width()
            );
        }
        rows.push(BandwidthRow {
            width,
            error: out.result.pooled_relative_rms().unwrap_or(f64::NAN),
            masked_error: out.result.max_relative_rms(SIGNIFICANT_FRACTION).unwrap_or(f64::NAN),
            tail_bound: out.system.diagnostics.tail_bound,
            support_edge: edge,
            tail_warning: warn,
        });
    }
    Ok(rows)
}

/// max|imbalanced F⁽²⁾| / max|balanced F⁽²⁾| over a band of ω around 0 and ±Ω, for the
/// built-in sequences at the given cycle time and repetitions.
///
/// Balanced entries are F⁽²⁾_{j,j';l,l'}(ω+jΩ, −ω+lΩ) with j + l = 0; the rest are imbalanced.
pub fn imbalance_ratio(splitting: f64, cycle_time: f64, repetitions: usize, half_band: f64, points: usize) -> Result<f64> {
    if points < 2 || !(half_band > 0.0) {
        return invalid("band needs a positive half-width and at least two points");
    }
    let (mut bal, mut imb) = (0.0f64, 0.0f64);
    for id in 1..=6 {
        let seq = builtin_sequence(id, cycle_time, repetitions)?;
        let kernel = FilterKernel::new(&switching_matrix(&seq, Basis::Spherical), seq.duration())?;
        for center in [-splitting, 0.0, splitting] {
            for i in 0..points {
                let w = center - half_band + 2.0 * half_band * i as f64 / (points - 1) as f64;
                for j in 0..3usize {
                    for l in 0..3usize {
                        let sj = (j as f64 - 1.0) * splitting;
                        let sl = (l as f64 - 1.0) * splitting;
                        let f = kernel.ff2(w + sj, -w + sl);
                        let mut m = 0.0f64;
                        for jp in 0..3 {
                            for lp in 0..3 {
                                m = m.max(f[3 * j + jp][3 * l + lp].norm());
                            }
                        }
                        if j + l == 2 {
                            bal = bal.max(m);
                        } else {
                            imb = imb.max(m);
                        }
                    }
                }
            }
        }
    }
    Ok(imb / bal)
}
