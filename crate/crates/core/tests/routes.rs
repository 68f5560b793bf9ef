//! Independent evaluation routes for the cumulant and the Q quantities.

mod common;

use std::f64::consts::PI;

use common::{random_hermitian_noise, random_sequence, rng};
use qns_core::dynamics::{
    expectation_complex, q_quantities, second_cumulant_spherical_all, CumulantOptions, MeasurementSetting, QRoute, SystemConfig,
};
use qns_core::noise::{gaussian_triple, GaussianTripleParams};
use qns_core::pulse_control::builtin_sequence;

#[test]
fn u1_three_gaussian_routes_agree() {
    let om = 2.0 * PI * 27e9;
    let noise = gaussian_triple(&GaussianTripleParams::reference_setup(om)).unwrap();
    let sys = SystemConfig::new(om).unwrap();
    let seq = builtin_sequence(1, 2.4e-6, 20).unwrap();
    let a = q_quantities(&seq, &noise, &sys, QRoute::Generalized, false).unwrap();
    let b = q_quantities(&seq, &noise, &sys, QRoute::Cumulant, false).unwrap();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for k in 0..4 {
        assert!((a[k] - b[k]).norm() < 1e-7 * scale, "Q{}: {} vs {}", k + 1, a[k], b[k]);
    }
}

#[test]
fn hermitian_noise_gives_real_expectations() {
    let mut r = rng(21);
    for (i, om) in [0.0, 0.0, 15.0, 30.0].into_iter().enumerate() {
        let noise = random_hermitian_noise(&mut r, 0.05, 2.0);
        let seq = random_sequence(&mut r, 3, 1.0, 1 + i % 3);
        let sys = SystemConfig::new(om).unwrap();
        let c = second_cumulant_spherical_all(&seq, &noise, &sys, CumulantOptions::default()).unwrap();
        for cg in &c {
            for s in MeasurementSetting::all_for(cg.gamma) {
                let e = expectation_complex(&s.rho(), cg).unwrap();
                assert!(e.im.abs() < 1e-9, "Ω = {om}, {s:?}: {e}");
            }
        }
    }
}
