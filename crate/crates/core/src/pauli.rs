//! Pauli and spherical operator bases.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

pub type Mat2 = Matrix2<C64>;

const O: C64 = C64::new(0.0, 0.0);
const R: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn identity() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(O, R, R, O)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(O, -I, I, O)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(R, O, O, -R)
}

/// Cartesian Pauli matrices indexed 0,1,2 = x,y,z.
pub fn cartesian(i: usize) -> Mat2 {
    match i {
        0 => sigma_x(),
        1 => sigma_y(),
        2 => sigma_z(),
        _ => panic!("cartesian index {i} out of range"),
    }
}

/// Spherical operators indexed 0,1,2 = j ∈ {−1,0,+1}: σ_{±1} = (σ_x ± iσ_y)/√2, σ_0 = σ_z.
pub fn spherical(i: usize) -> Mat2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match i {
        0 => (sigma_x() - sigma_y() * I).scale(s),
        1 => sigma_z(),
        2 => (sigma_x() + sigma_y() * I).scale(s),
        _ => panic!("spherical index {i} out of range"),
    }
}

/// j ∈ {−1,0,1} for spherical slot i.
pub fn sph_j(i: usize) -> i32 {
    i as i32 - 1
}

/// Spherical slot of −j.
pub fn sph_neg(i: usize) -> usize {
    2 - i
}

pub fn half_trace(m: &Mat2) -> C64 {
    (m[(0, 0)] + m[(1, 1)]) * 0.5
}

/// ½tr[A B].
pub fn ht_prod(a: &Mat2, b: &Mat2) -> C64 {
    half_trace(&(a * b))
}

/// Pauli-basis coefficients (c0, cx, cy, cz) with m = c0 I + Σ c_α σ_α.
pub fn pauli_decompose(m: &Mat2) -> [C64; 4] {
    [
        half_trace(m),
        ht_prod(m, &sigma_x()),
        ht_prod(m, &sigma_y()),
        ht_prod(m, &sigma_z()),
    ]
}

pub fn pauli_compose(c: &[C64; 4]) -> Mat2 {
    identity() * c[0] + sigma_x() * c[1] + sigma_y() * c[2] + sigma_z() * c[3]
}

pub fn is_unitary(u: &Mat2, tol: f64) -> bool {
    let d = u.adjoint() * u - identity();
    d.iter().all(|z| z.norm() <= tol)
}

/// exp(−i θ n·σ / 2) for a unit axis n.
pub fn rotation(axis: [f64; 3], theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let n = sigma_x().scale(axis[0]) + sigma_y().scale(axis[1]) + sigma_z().scale(axis[2]);
    identity().scale(c) - n * C64::new(0.0, s)
}
