//! Instantaneous pulse control, toggling-frame propagators and switching functions.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};
use crate::pauli::{self, Mat2};

/// Relative time tolerance for breakpoint alignment, in units of T_c.
pub const TIME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Indices 0,1,2 = x,y,z.
    Cartesian,
    /// Indices 0,1,2 = j ∈ {−1,0,+1}.
    Spherical,
}

impl Basis {
    pub fn op(self, i: usize) -> Mat2 {
        match self {
            Basis::Cartesian => pauli::cartesian(i),
            Basis::Spherical => pauli::spherical(i),
        }
    }

    pub fn label(self, i: usize) -> &'static str {
        match self {
            Basis::Cartesian => ["x", "y", "z"][i],
            Basis::Spherical => ["-1", "0", "+1"][i],
        }
    }
}

/// exp(−iσ_xθ_x/2)·exp(−iσ_yθ_y/2)·exp(−iσ_zθ_z/2).
pub fn compose_pulse(theta: [f64; 3]) -> Result<Mat2> {
    if theta.iter().any(|t| !t.is_finite()) {
        return invalid(format!("non-finite pulse angle {theta:?}"));
    }
    Ok(pauli::rotation([1.0, 0.0, 0.0], theta[0])
        * pauli::rotation([0.0, 1.0, 0.0], theta[1])
        * pauli::rotation([0.0, 0.0, 1.0], theta[2]))
}

/// An instantaneous pulse at a fixed fraction of the cycle time.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    at: f64,
    unitary: Mat2,
    angles: Option<[f64; 3]>,
}

impl Pulse {
    /// `at` is the application time as a fraction of T_c, in [0, 1].
    pub fn new(theta: [f64; 3], at: f64) -> Result<Self> {
        check_fraction(at)?;
        Ok(Self { at, unitary: compose_pulse(theta)?, angles: Some(theta) })
    }

    pub fn from_unitary(unitary: Mat2, at: f64) -> Result<Self> {
        check_fraction(at)?;
        if unitary.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
            || !pauli::is_unitary(&unitary, 1e-10)
        {
            return invalid("pulse matrix is not unitary");
        }
        Ok(Self { at, unitary, angles: None })
    }

    pub fn x(theta: f64, at: f64) -> Result<Self> {
        Self::new([theta, 0.0, 0.0], at)
    }

    pub fn y(theta: f64, at: f64) -> Result<Self> {
        Self::new([0.0, theta, 0.0], at)
    }

    pub fn z(theta: f64, at: f64) -> Result<Self> {
        Self::new([0.0, 0.0, theta], at)
    }

    pub fn at(&self) -> f64 {
        self.at
    }

    pub fn unitary(&self) -> &Mat2 {
        &self.unitary
    }

    /// Rotation angles, when the pulse was built from them.
    pub fn angles(&self) -> Option<[f64; 3]> {
        self.angles
    }
}

fn check_fraction(at: f64) -> Result<()> {
    if !at.is_finite() || !(-TIME_TOL..=1.0 + TIME_TOL).contains(&at) {
        return invalid(format!("pulse time fraction {at} outside [0, 1]"));
    }
    Ok(())
}

/// One control cycle of timed pulses, repeated `repetitions` times.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pulses: Vec<Pulse>,
    cycle_time: f64,
    repetitions: usize,
}

impl PulseSequence {
    pub fn new(mut pulses: Vec<Pulse>, cycle_time: f64, repetitions: usize) -> Result<Self> {
        if !(cycle_time.is_finite() && cycle_time > 0.0) {
            return invalid(format!("cycle time must be positive, got {cycle_time}"));
        }
        if repetitions == 0 {
            return invalid("repetitions must be at least 1");
        }
        pulses.sort_by(|a, b| a.at.total_cmp(&b.at));
        for w in pulses.windows(2) {
            if w[1].at - w[0].at <= TIME_TOL {
                return invalid(format!("simultaneous pulses at t/T_c = {}", w[0].at));
            }
        }
        for p in &mut pulses {
            p.at = p.at.clamp(0.0, 1.0);
        }
        Ok(Self { pulses, cycle_time, repetitions })
    }

    pub fn free(cycle_time: f64, repetitions: usize) -> Result<Self> {
        Self::new(Vec::new(), cycle_time, repetitions)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn cycle_time(&self) -> f64 {
        self.cycle_time
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn duration(&self) -> f64 {
        self.cycle_time * self.repetitions as f64
    }

    pub fn with_cycle(&self, cycle_time: f64, repetitions: usize) -> Result<Self> {
        Self::new(self.pulses.clone(), cycle_time, repetitions)
    }

    /// Product of all pulses in one cycle, latest on the left.
    pub fn cycle_unitary(&self) -> Mat2 {
        self.pulses.iter().fold(pauli::identity(), |u, p| p.unitary * u)
    }

    /// True when the cycle product is a global phase, so switching functions are T_c-periodic.
    pub fn is_periodic(&self) -> bool {
        let u = self.cycle_unitary();
        let off = u[(0, 1)].norm() + u[(1, 0)].norm();
        off < 1e-12 && (u[(0, 0)] - u[(1, 1)]).norm() < 1e-12
    }

    pub fn control_propagator_at(&self, t: f64) -> Result<Mat2> {
        let total = self.duration();
        let tol = TIME_TOL * self.cycle_time;
        if !t.is_finite() || t < -tol || t > total + tol {
            return invalid(format!("time {t} outside [0, {total}]"));
        }
        let x = (t / self.cycle_time).max(0.0);
        let mut full = (x + TIME_TOL).floor() as usize;
        full = full.min(self.repetitions);
        let cycle = self.cycle_unitary();
        let mut u = pauli::identity();
        for _ in 0..full {
            u = cycle * u;
        }
        if full < self.repetitions {
            let r = x - full as f64;
            for p in self.pulses.iter().filter(|p| p.at <= r + TIME_TOL) {
                u = p.unitary * u;
            }
        }
        Ok(u)
    }

    /// Distinct absolute pulse instants with the propagator right after each, over [0, T].
    fn timeline(&self) -> Vec<(f64, Mat2)> {
        let tol = TIME_TOL * self.cycle_time;
        let mut out: Vec<(f64, Mat2)> = Vec::new();
        let mut u = pauli::identity();
        for m in 0..self.repetitions {
            // Cycle boundaries are always breakpoints so every cycle has the same intervals.
            let start = m as f64 * self.cycle_time;
            if m > 0 && out.last().is_none_or(|last| start - last.0 > tol) {
                out.push((start, u));
            }
            for p in &self.pulses {
                let t = (m as f64 + p.at) * self.cycle_time;
                u = p.unitary * u;
                match out.last_mut() {
                    Some(last) if t - last.0 <= tol => last.1 = u,
                    _ => out.push((t, u)),
                }
            }
        }
        out
    }
}

/// Adjoint-representation matrix y_{a,a'} = ½tr[U†σ_a U σ_{a'}†].
pub fn adjoint_matrix(u: &Mat2, basis: Basis) -> Matrix3<C64> {
    let ops: [Mat2; 3] = [basis.op(0), basis.op(1), basis.op(2)];
    let ud = u.adjoint();
    Matrix3::from_fn(|a, ap| pauli::ht_prod(&(ud * ops[a] * u), &ops[ap].adjoint()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleInfo {
    pub intervals: usize,
    pub cycle_time: f64,
    pub repetitions: usize,
}

/// Piecewise-constant switching functions over [0, M·T_c].
#[derive(Debug, Clone)]
pub struct SwitchingMatrix {
    basis: Basis,
    breakpoints: Vec<f64>,
    values: Vec<Matrix3<C64>>,
    cycle: Option<CycleInfo>,
}

pub fn switching_matrix(seq: &PulseSequence, basis: Basis) -> SwitchingMatrix {
    let total = seq.duration();
    let tol = TIME_TOL * seq.cycle_time;
    let mut breakpoints = vec![0.0];
    let mut values = Vec::new();
    let mut current = adjoint_matrix(&pauli::identity(), basis);
    for (t, u) in seq.timeline() {
        if t > breakpoints[breakpoints.len() - 1] + tol {
            breakpoints.push(t.min(total));
            values.push(current);
        }
        current = adjoint_matrix(&u, basis);
    }
    if total > breakpoints[breakpoints.len() - 1] + tol {
        breakpoints.push(total);
        values.push(current);
    }
    let cycle = if seq.is_periodic() && values.len() % seq.repetitions == 0 {
        Some(CycleInfo {
            intervals: values.len() / seq.repetitions,
            cycle_time: seq.cycle_time,
            repetitions: seq.repetitions,
        })
    } else {
        None
    };
    SwitchingMatrix { basis, breakpoints, values, cycle }
}

/// One scalar switching function y(t) as (start, width, value) segments.
#[derive(Debug, Clone)]
pub struct Segments {
    pub starts: Vec<f64>,
    pub widths: Vec<f64>,
    pub values: Vec<C64>,
}

impl SwitchingMatrix {
    /// Build directly from breakpoints and per-interval matrices (no cycle structure).
    pub fn from_parts(basis: Basis, breakpoints: Vec<f64>, values: Vec<Matrix3<C64>>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return invalid("breakpoints must have one more entry than values");
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("breakpoints must start at 0 and increase strictly");
        }
        Ok(Self { basis, breakpoints, values, cycle: None })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Matrix3<C64>] {
        &self.values
    }

    pub fn duration(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn cycle(&self) -> Option<CycleInfo> {
        self.cycle
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|v| (0..3).all(|a| (0..3).all(|b| a == b || v[(a, b)].norm() <= tol)))
    }

    /// y_{a,a'}(t) on the interval containing t (right-continuous).
    pub fn value_at(&self, a: usize, ap: usize, t: f64) -> C64 {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        let k = k.clamp(1, self.values.len());
        self.values[k - 1][(a, ap)]
    }

    /// Segments of y_{a,a'} restricted to [0, t_end].
    pub fn segments(&self, a: usize, ap: usize, t_end: f64) -> Segments {
        let mut s = Segments { starts: Vec::new(), widths: Vec::new(), values: Vec::new() };
        for (k, v) in self.values.iter().enumerate() {
            let t0 = self.breakpoints[k];
            if t0 >= t_end {
                break;
            }
            let t1 = self.breakpoints[k + 1].min(t_end);
            s.starts.push(t0);
            s.widths.push(t1 - t0);
            s.values.push(v[(a, ap)]);
        }
        s
    }

    /// Segments of the first cycle only.
    pub fn cycle_segments(&self, a: usize, ap: usize) -> Option<Segments> {
        let c = self.cycle?;
        let mut s = self.segments(a, ap, c.cycle_time);
        s.starts.truncate(c.intervals);
        s.widths.truncate(c.intervals);
        s.values.truncate(c.intervals);
        Some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymmetryKind {
    Periodic,
    Displacement { symmetric: bool },
    Mirror { symmetric: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetrySpec {
    pub kind: SymmetryKind,
    pub tau: f64,
    pub tolerance: f64,
}

/// Checks a comb-enabling symmetry of y_{a,a'} at time scale τ.
pub fn check_symmetry(sm: &SwitchingMatrix, entry: (usize, usize), spec: &SymmetrySpec) -> Result<bool> {
    let total = sm.duration();
    let tau = spec.tau;
    if !(tau.is_finite() && tau > 0.0) || spec.tolerance < 0.0 {
        return invalid("symmetry time scale must be positive and tolerance non-negative");
    }
    if tau > total * (1.0 + TIME_TOL) {
        return invalid(format!("time scale {tau} exceeds switching-matrix duration {total}"));
    }
    let (a, ap) = entry;
    if a > 2 || ap > 2 {
        return invalid("entry index out of range");
    }
    // Domain of t and the map t ↦ partner(t), with the required sign.
    let (lo, hi, sign): (f64, f64, f64) = match spec.kind {
        SymmetryKind::Periodic => (0.0, total - tau, 1.0),
        SymmetryKind::Displacement { symmetric } => (0.0, tau / 2.0, if symmetric { 1.0 } else { -1.0 }),
        SymmetryKind::Mirror { symmetric } => (0.0, tau / 2.0, if symmetric { 1.0 } else { -1.0 }),
    };
    let (first, partner): (fn(f64, f64) -> f64, fn(f64, f64) -> f64) = match spec.kind {
        SymmetryKind::Periodic => (|t, _| t, |t, tau| t + tau),
        SymmetryKind::Displacement { .. } => (|t, _| t, |t, tau| t + tau / 2.0),
        SymmetryKind::Mirror { .. } => (|t, tau| tau / 2.0 - t, |t, tau| t + tau / 2.0),
    };
    if hi <= lo {
        return Ok(true);
    }
    // Refine [lo, hi] so both t and its partner stay inside single intervals.
    let mut cuts = vec![lo, hi];
    for &b in sm.breakpoints() {
        let pulled = match spec.kind {
            SymmetryKind::Periodic => [b, b - tau],
            SymmetryKind::Displacement { .. } => [b, b - tau / 2.0],
            SymmetryKind::Mirror { .. } => [tau / 2.0 - b, b - tau / 2.0],
        };
        cuts.extend(pulled.into_iter().filter(|&c| c > lo && c < hi));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= TIME_TOL * total);
    let scale = sm.values().iter().map(|v| v[(a, ap)].norm()).fold(0.0, f64::max).max(1.0);
    for w in cuts.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let lhs = sm.value_at(a, ap, first(t, tau));
        let rhs = sm.value_at(a, ap, partner(t, tau));
        if (lhs - rhs * sign).norm() > spec.tolerance * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Tilted version of `seq`: the propagator right after each interior pulse is R times the original one.
pub fn apply_frame_tilt(seq: &PulseSequence, tilt: &Mat2) -> Result<PulseSequence> {
    if (tilt - pauli::identity()).iter().all(|z| z.norm() < 1e-15) {
        return Ok(seq.clone());
    }
    let r = *tilt;
    let rd = r.adjoint();
    let mut out = Vec::with_capacity(seq.pulses.len() + 2);
    let has_start = seq.pulses.first().is_some_and(|p| p.at <= TIME_TOL);
    let has_end = seq.pulses.last().is_some_and(|p| p.at >= 1.0 - TIME_TOL);
    if !has_start {
        out.push(Pulse::from_unitary(r, 0.0)?);
    }
    for p in &seq.pulses {
        let u = if p.at <= TIME_TOL {
            r * p.unitary
        } else if p.at >= 1.0 - TIME_TOL {
            p.unitary * rd
        } else {
            r * p.unitary * rd
        };
        out.push(Pulse::from_unitary(u, p.at)?);
    }
    if !has_end {
        out.push(Pulse::from_unitary(rd, 1.0)?);
    }
    PulseSequence::new(out, seq.cycle_time, seq.repetitions)
}

/// The [π/4]_x tilt used by the built-in tilted sequences.
pub fn default_tilt() -> Mat2 {
    pauli::rotation([1.0, 0.0, 0.0], FRAC_PI_4)
}

/// Built-in sequences U₁…U₆.
pub fn builtin_sequence(id: usize, cycle_time: f64, repetitions: usize) -> Result<PulseSequence> {
    let pulses = match id {
        1 => vec![Pulse::z(PI, 0.25)?, Pulse::z(PI, 0.75)?],
        2 => vec![
            Pulse::z(FRAC_PI_2, 0.25)?,
            Pulse::z(FRAC_PI_2, 0.5)?,
            Pulse::z(FRAC_PI_2, 0.75)?,
            Pulse::z(FRAC_PI_2, 1.0)?,
        ],
        3 => vec![Pulse::z(FRAC_PI_2, 0.5)?, Pulse::z(3.0 * FRAC_PI_2, 1.0)?],
        4 => vec![Pulse::y(PI, 0.25)?, Pulse::z(PI, 0.5)?, Pulse::y(PI, 0.75)?, Pulse::z(PI, 1.0)?],
        5 => vec![Pulse::z(PI, 0.25)?, Pulse::y(PI, 0.5)?, Pulse::x(PI, 1.0)?],
        6 => vec![Pulse::z(PI, 0.25)?, Pulse::z(PI, 0.5)?, Pulse::z(PI, 0.75)?, Pulse::z(PI, 1.0)?],
        _ => return invalid(format!("built-in sequence id {id} not in 1..6")),
    };
    let seq = PulseSequence::new(pulses, cycle_time, repetitions)?;
    if id >= 5 {
        apply_frame_tilt(&seq, &default_tilt())
    } else {
        Ok(seq)
    }
}

/// Parses "U1".."U6".
pub fn builtin_by_name(name: &str, cycle_time: f64, repetitions: usize) -> Result<PulseSequence> {
    match name.trim().strip_prefix(['U', 'u']).and_then(|s| s.parse::<usize>().ok()) {
        Some(id) => builtin_sequence(id, cycle_time, repetitions),
        None => invalid(format!("unknown built-in sequence {name:?}")),
    }
}
