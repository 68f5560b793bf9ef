//! Time-domain Monte-Carlo versus the second-order cumulant prediction.

use num_complex::Complex64 as C64;
use qns_core::dynamics::{
    expectation_value, monte_carlo_oracle, second_cumulant_spherical_all, Axis, CumulantOptions, McOptions,
    MeasurementSetting, SystemConfig,
};
use qns_core::noise::{Shape, SpectrumSet};
use qns_core::pulse_control::{builtin_sequence, Basis};

fn g(c: f64, w: f64) -> Shape {
    Shape::Gaussian { center: c, width: w }
}

/// Classical (S⁻ = 0) positive multiaxis model with peaks at 0 and ±`shift`.
fn classical(scale: f64, shift: f64) -> SpectrumSet {
    let mut s = SpectrumSet::zero(Basis::Cartesian);
    let sym = |a: f64, c: f64, w: f64| -> Vec<(C64, Shape)> {
        let mut t = vec![(C64::new(a, 0.0), g(0.0, w)), (C64::new(0.6 * a, 0.0), g(2.0, w)), (C64::new(0.6 * a, 0.0), g(-2.0, w))];
        if c != 0.0 {
            t.push((C64::new(0.6 * a, 0.0), g(c, w)));
            t.push((C64::new(0.6 * a, 0.0), g(-c, w)));
        }
        t
    };
    s.entry_mut(0, 0).terms = sym(1.0 * scale, shift, 3.0);
    s.entry_mut(1, 1).terms = sym(0.8 * scale, shift, 3.0);
    s.entry_mut(2, 2).terms = sym(1.2 * scale, shift, 3.0);
    // Real even cross-spectrum.
    s.entry_mut(0, 2).terms = vec![(C64::new(0.3 * scale, 0.0), g(0.0, 3.0))];
    s.entry_mut(2, 0).terms = vec![(C64::new(0.3 * scale, 0.0), g(0.0, 3.0))];
    // Imaginary odd cross-spectrum.
    s.entry_mut(0, 1).terms = vec![(C64::new(0.0, 0.2 * scale), g(2.0, 3.0)), (C64::new(0.0, -0.2 * scale), g(-2.0, 3.0))];
    s.entry_mut(1, 0).terms = vec![(C64::new(0.0, -0.2 * scale), g(2.0, 3.0)), (C64::new(0.0, 0.2 * scale), g(-2.0, 3.0))];
    if shift != 0.0 {
        s.entry_mut(0, 1).terms.extend([(C64::new(0.0, 0.4 * scale), g(shift, 3.0)), (C64::new(0.0, -0.4 * scale), g(-shift, 3.0))]);
        s.entry_mut(1, 0).terms.extend([(C64::new(0.0, -0.4 * scale), g(shift, 3.0)), (C64::new(0.0, 0.4 * scale), g(-shift, 3.0))]);
    }
    s
}

fn compare(seq_id: usize, splitting: f64, dt: f64, trajectories: usize) {
    let seq = builtin_sequence(seq_id, 1.0, 2).unwrap();
    let sys = SystemConfig::new(splitting).unwrap();
    let base = classical(1.0, splitting);
    let c = second_cumulant_spherical_all(&seq, &base, &sys, CumulantOptions::default()).unwrap();
    let peak = c.iter().map(|c| c.max_abs()).fold(0.0, f64::max);
    let noise = base.scaled(0.1 / peak);
    let c = second_cumulant_spherical_all(&seq, &noise, &sys, CumulantOptions::default()).unwrap();
    for gamma in [Axis::X, Axis::Z] {
        let settings = MeasurementSetting::all_for(gamma);
        let mc = monte_carlo_oracle(&seq, &noise, &sys, &settings, &McOptions::new(trajectories, dt, 99)).unwrap();
        for e in mc {
            let pred = expectation_value(&e.setting.rho(), &c[gamma.index()]).unwrap();
            let tol = (3.0 * e.std_err).max(1e-2);
            assert!(
                (e.mean - pred).abs() < tol,
                "U{seq_id} Ω={splitting} {:?}: MC {} ± {} vs cumulant {pred}",
                e.setting,
                e.mean,
                e.std_err
            );
        }
    }
}

#[test]
fn multiaxis_zero_splitting() {
    compare(6, 0.0, 0.01, 3000);
}

#[test]
fn multiaxis_with_splitting() {
    compare(4, 20.0, 0.01, 3000);
}
