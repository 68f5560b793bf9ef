use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::{cumulant::in_basis, MeasurementSetting, SystemConfig};
use crate::error::{invalid, QnsError, Result};
use crate::noise::{default_period, NoiseTrajectory, Part, SpectrumSet, TrajectorySampler};
use crate::pauli::{self, Mat2};
use crate::pulse_control::{switching_matrix, Basis, PulseSequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub trajectories: usize,
    /// Coarse step; the reported estimate uses dt/2 and the dt run serves as the halving check.
    pub dt: f64,
    pub seed: u64,
    /// Largest accepted |mean(dt) − mean(dt/2)| per setting.
    pub halving_tol: f64,
}

impl McOptions {
    pub fn new(trajectories: usize, dt: f64, seed: u64) -> Self {
        Self { trajectories, dt, seed, halving_tol: 2e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub setting: MeasurementSetting,
    pub mean: f64,
    pub std_err: f64,
    /// mean(dt) − mean(dt/2).
    pub halving_shift: f64,
}

/// One propagation interval with constant control frame.
struct Interval {
    start: f64,
    width: f64,
    control: Mat2,
}

fn check_classical(noise: &SpectrumSet) -> Result<()> {
    let mut peak = 0.0f64;
    let mut worst = 0.0f64;
    for (a, b) in noise.support() {
        for k in 0..=200 {
            let w = a + (b - a) * k as f64 / 200.0;
            for i in 0..3 {
                for j in 0..3 {
                    peak = peak.max(noise.eval(i, j, w, Part::Full).norm());
                    worst = worst.max(noise.eval(i, j, w, Part::Minus).norm());
                }
            }
        }
    }
    if worst > 1e-9 * peak {
        return invalid(format!("Monte-Carlo oracle needs classical noise; quantum part reaches {:e} of peak", worst / peak));
    }
    Ok(())
}

/// Four-point Lagrange interpolation on the uniform trajectory grid.
fn interp(tr: &NoiseTrajectory, t: f64) -> [f64; 3] {
    let n = tr.values.len();
    let x = t / tr.dt;
    let i = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
    let u = x - i as f64;
    let w = [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ];
    std::array::from_fn(|a| (0..4).map(|k| w[k] * tr.values[i - 1 + k][a]).sum())
}

/// exp(−iBτ) for traceless Hermitian B, using B² = |n|² I.
fn step(b: &Mat2, tau: f64) -> Mat2 {
    let n2 = pauli::ht_prod(b, b).re.max(0.0);
    let n = n2.sqrt();
    let th = n * tau;
    let sc = if th.abs() < 1e-8 { tau * (1.0 - th * th / 6.0) } else { th.sin() / n };
    pauli::identity().scale(th.cos()) - b * C64::new(0.0, sc)
}

fn propagate(tr: &NoiseTrajectory, intervals: &[Interval], splitting: f64, dt: f64) -> Mat2 {
    let sig = [pauli::sigma_x(), pauli::sigma_y(), pauli::sigma_z()];
    let mut u = pauli::identity();
    for iv in intervals {
        let n = (iv.width / dt).ceil().max(1.0) as usize;
        let h = iv.width / n as f64;
        for k in 0..n {
            let t = iv.start + (k as f64 + 0.5) * h;
            let z = interp(tr, t);
            let a = sig[0].scale(z[0]) + sig[1].scale(z[1]) + sig[2].scale(z[2]);
            let r = pauli::rotation([0.0, 0.0, 1.0], -splitting * t);
            let b = iv.control.adjoint() * r * a * r.adjoint() * iv.control;
            u = step(&b, h) * u;
        }
    }
    u
}

/// Averages tr[U ρ U† σ_γ] over classical Gaussian noise trajectories.
///
/// The toggling-frame Hamiltonian is U_c(t)† e^{iΩtσ_z/2}(Σ_α ζ_α(t)σ_α)e^{−iΩtσ_z/2} U_c(t); each
/// step is an exact 2×2 exponential at the step midpoint. All settings share the trajectories.
pub fn monte_carlo_oracle(
    seq: &PulseSequence,
    noise: &SpectrumSet,
    sys: &SystemConfig,
    settings: &[MeasurementSetting],
    opts: &McOptions,
) -> Result<Vec<McEstimate>> {
    sys.validate()?;
    let noise = in_basis(noise, Basis::Cartesian)?;
    check_classical(&noise)?;
    if opts.trajectories < 2 {
        return invalid("Monte-Carlo oracle needs at least two trajectories");
    }
    let sm = switching_matrix(seq, Basis::Cartesian);
    let bps = sm.breakpoints();
    let gap = bps.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mut dt_max = gap / 20.0;
    if sys.splitting > 0.0 {
        dt_max = dt_max.min(2.0 * PI / (20.0 * sys.splitting));
    }
    if !(opts.dt > 0.0 && opts.dt <= dt_max * (1.0 + 1e-12)) {
        return invalid(format!("dt = {:e} must be positive and ≤ {dt_max:e}", opts.dt));
    }
    let intervals: Vec<Interval> = bps
        .windows(2)
        .map(|w| Ok(Interval { start: w[0], width: w[1] - w[0], control: seq.control_propagator_at(0.5 * (w[0] + w[1]))? }))
        .collect::<Result<_>>()?;
    let t = seq.duration();
    let sampler = TrajectorySampler::new(&noise, t + 2.0 * opts.dt, opts.dt / 4.0, default_period(&noise, t))?;
    let obs: Vec<(Mat2, Mat2)> = settings.iter().map(|s| (s.rho(), s.observable.sigma())).collect();
    let per_traj: Vec<(Vec<f64>, Vec<f64>)> = (0..opts.trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let tr = sampler.sample(opts.seed, i);
            let coarse = propagate(&tr, &intervals, sys.splitting, opts.dt);
            let fine = propagate(&tr, &intervals, sys.splitting, opts.dt / 2.0);
            let ev = |u: &Mat2| -> Vec<f64> { obs.iter().map(|(rho, o)| (u * rho * u.adjoint() * o).trace().re).collect() };
            (ev(&fine), ev(&coarse))
        })
        .collect();
    let n = per_traj.len() as f64;
    let mut out = Vec::with_capacity(settings.len());
    for (k, s) in settings.iter().enumerate() {
        let mean = per_traj.iter().map(|p| p.0[k]).sum::<f64>() / n;
        let coarse = per_traj.iter().map(|p| p.1[k]).sum::<f64>() / n;
        let var = per_traj.iter().map(|p| (p.0[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let shift = coarse - mean;
        if shift.abs() > opts.halving_tol {
            return Err(QnsError::NumericalFailure(format!(
                "step halving changed the mean by {shift:e} (> {:e}); reduce dt",
                opts.halving_tol
            )));
        }
        out.push(McEstimate { setting: *s, mean, std_err: (var / n).sqrt(), halving_shift: shift });
    }
    Ok(out)
}
