//! Composite Gauss–Legendre quadrature with panel refinement.

use num_complex::Complex64 as C64;

use crate::error::{QnsError, Result};

/// Nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub order: usize,
    pub check_order: usize,
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { order: 16, check_order: 12, rel_tol: 1e-8, max_refinements: 6 }
    }
}

/// Merge overlapping intervals.
pub fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.retain(|(a, b)| b > a);
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Panels of width ≤ `width` covering `pieces`.
fn panels(pieces: &[(f64, f64)], width: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in pieces {
        let n = ((b - a) / width).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        out.extend((0..n).map(|k| (a + k as f64 * h, if k + 1 == n { b } else { a + (k + 1) as f64 * h })));
    }
    out
}

fn rule_on(panels: &[(f64, f64)], order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity(panels.len() * order);
    for &(a, b) in panels {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        nodes.extend(x.iter().zip(&w).map(|(xi, wi)| (c + r * xi, r * wi)));
    }
    nodes
}

/// ∫ f over `pieces`, returning a vector of N complex integrals.
///
/// Panels start at width `panel`; the `order`-point result is accepted once it agrees with
/// the `check_order`-point result on the same panels, relative to ∫|f|; otherwise panels
/// are halved.
pub fn integrate<const N: usize, F>(f: F, pieces: &[(f64, f64)], panel: f64, spec: &QuadratureSpec) -> Result<[C64; N]>
where
    F: Fn(f64) -> [C64; N] + Sync,
{
    let zero = [C64::new(0.0, 0.0); N];
    if pieces.is_empty() {
        return Ok(zero);
    }
    // Returns the integral and Σ w·|f|, the scale for the relative error test.
    let eval = |nodes: &[(f64, f64)]| -> ([C64; N], f64) {
        let mut acc = zero;
        let mut mass = 0.0;
        for &(x, w) in nodes {
            let v = f(x);
            for (a, vi) in acc.iter_mut().zip(v) {
                *a += vi * w;
                mass += vi.norm() * w.abs();
            }
        }
        (acc, mass)
    };
    let norm = |v: &[C64; N]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut width = panel;
    let mut last_err = f64::NAN;
    for _ in 0..=spec.max_refinements {
        let ps = panels(pieces, width);
        let (hi, scale) = eval(&rule_on(&ps, spec.order));
        let (lo, _) = eval(&rule_on(&ps, spec.check_order));
        let diff: [C64; N] = std::array::from_fn(|i| hi[i] - lo[i]);
        last_err = norm(&diff);
        if last_err <= spec.rel_tol * scale || scale < 1e-300 {
            return Ok(hi);
        }
        width *= 0.5;
    }
    Err(QnsError::NumericalFailure(format!(
        "quadrature did not converge: estimated error {last_err:e} after {} refinements",
        spec.max_refinements
    )))
}
