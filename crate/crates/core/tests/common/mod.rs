//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use qns_core::pulse_control::{Basis, Pulse, PulseSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random cycle of 1..=max_pulses arbitrary rotations at distinct times in (0, 1].
pub fn random_sequence(rng: &mut ChaCha8Rng, max_pulses: usize, cycle_time: f64, reps: usize) -> PulseSequence {
    let n = rng.random_range(1..=max_pulses);
    let mut times: Vec<f64> = Vec::new();
    while times.len() < n {
        let t: f64 = rng.random_range(0.05..=1.0);
        if times.iter().all(|&s| (s - t).abs() > 0.02) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    let pulses = times
        .iter()
        .map(|&t| {
            let th = [rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
            Pulse::new(th, t).unwrap()
        })
        .collect();
    PulseSequence::new(pulses, cycle_time, reps).unwrap()
}

/// Pulse instants over the whole sequence plus 0 and T.
pub fn pulse_times(seq: &PulseSequence) -> Vec<f64> {
    let tc = seq.cycle_time();
    let mut t = vec![0.0];
    for m in 0..seq.repetitions() {
        for p in seq.pulses() {
            t.push((m as f64 + p.at()) * tc);
        }
    }
    t.push(seq.duration());
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * tc);
    t
}

/// y_{a,a'}(t) = ½tr[U†σ_a U σ_{a'}†] straight from the control propagator.
pub fn y_at(seq: &PulseSequence, basis: Basis, a: usize, ap: usize, t: f64) -> C64 {
    let u = seq.control_propagator_at(t).unwrap();
    let m = u.adjoint() * basis.op(a) * u * basis.op(ap).adjoint();
    (m[(0, 0)] + m[(1, 1)]) * 0.5
}

fn simpson_rec<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, fa: C64, fm: C64, fb: C64, whole: C64, tol: f64, depth: u32) -> C64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, tol: f64) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    // Start from a few panels so oscillatory integrands are not undersampled.
    let n = 16;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = h / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_rec(&f, x0, x1, f0, fm, f1, whole, tol / n as f64, 40)
        })
        .sum()
}

/// ∫₀^T y(t) e^{iωt} dt, integrating each constant-control interval separately.
pub fn ff1_oracle(seq: &PulseSequence, basis: Basis, a: usize, ap: usize, w: f64) -> C64 {
    let t = pulse_times(seq);
    t.windows(2)
        .map(|s| {
            let y = y_at(seq, basis, a, ap, 0.5 * (s[0] + s[1]));
            y * simpson(|x| C64::from_polar(1.0, w * x), s[0], s[1], 1e-14)
        })
        .sum()
}

/// ∫₀^T dt₁ y_A(t₁)e^{iωt₁} ∫₀^{t₁} dt₂ y_B(t₂)e^{iω't₂} by nested quadrature.
pub fn ff2_oracle(seq: &PulseSequence, basis: Basis, ea: (usize, usize), eb: (usize, usize), w: f64, wp: f64) -> C64 {
    let t = pulse_times(seq);
    let yb: Vec<C64> = t.windows(2).map(|s| y_at(seq, basis, eb.0, eb.1, 0.5 * (s[0] + s[1]))).collect();
    let inner = |t1: f64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, s) in t.windows(2).enumerate() {
            if s[0] >= t1 {
                break;
            }
            acc += yb[k] * simpson(|x| C64::from_polar(1.0, wp * x), s[0], s[1].min(t1), 1e-12);
        }
        acc
    };
    t.windows(2)
        .map(|s| {
            let ya = y_at(seq, basis, ea.0, ea.1, 0.5 * (s[0] + s[1]));
            ya * simpson(|x| C64::from_polar(1.0, w * x) * inner(x), s[0], s[1], 1e-10)
        })
        .sum()
}

/// Composite Simpson with `n` (even) panels, for smooth integrands.
pub fn simpson_fixed<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, n: usize) -> C64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}

pub fn rel_err(a: C64, b: C64, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

/// Random multiaxis Cartesian model with S_{b,a}(ω) = S_{a,b}(ω)* pointwise; asymmetric in ω,
/// so both classical and quantum parts are present.
pub fn random_hermitian_noise(rng: &mut ChaCha8Rng, scale: f64, width: f64) -> qns_core::noise::SpectrumSet {
    use qns_core::noise::{Shape, SpectrumSet};
    let mut s = SpectrumSet::zero(Basis::Cartesian);
    for a in 0..3 {
        for b in a..3 {
            let mut terms = Vec::new();
            for _ in 0..2 {
                let c = rng.random_range(-3.0..3.0) * width;
                let w = C64::new(rng.random_range(0.2..1.0), if a == b { 0.0 } else { rng.random_range(-0.5..0.5) });
                let w = if a == b { w } else { w * 0.4 };
                terms.push((w * scale, Shape::Gaussian { center: c, width }));
            }
            if a != b {
                s.entry_mut(b, a).terms = terms.iter().map(|(w, sh)| (w.conj(), sh.clone())).collect();
            }
            s.entry_mut(a, b).terms = terms;
        }
    }
    s
}

/// Random cycle of π pulses about x, y or z (diagonal Cartesian control).
pub fn random_pi_sequence(rng: &mut ChaCha8Rng, cycle_time: f64, reps: usize) -> PulseSequence {
    let n = rng.random_range(1..=4);
    let mut times: Vec<f64> = Vec::new();
    while times.len() < n {
        let t: f64 = rng.random_range(0.05..=1.0);
        if times.iter().all(|&s| (s - t).abs() > 0.03) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    let pulses = times
        .iter()
        .map(|&t| match rng.random_range(0..3) {
            0 => Pulse::x(PI, t).unwrap(),
            1 => Pulse::y(PI, t).unwrap(),
            _ => Pulse::z(PI, t).unwrap(),
        })
        .collect();
    PulseSequence::new(pulses, cycle_time, reps).unwrap()
}
