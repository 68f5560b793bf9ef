//! Closed-form filter functions for piecewise-constant switching functions.
//!
//! Entries are addressed by a flat index `3·a + a'` into the 3×3 switching matrix.

use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};
use crate::pulse_control::{SwitchingMatrix, TIME_TOL};

const SERIES_EPS: f64 = 1e-8;

/// (e^{ix} − 1)/(ix), continuous at 0.
pub fn phi1(x: f64) -> C64 {
    if x.abs() < SERIES_EPS {
        return C64::new(1.0 - x * x / 6.0, x / 2.0);
    }
    let s = (0.5 * x).sin();
    C64::new(x.sin() / x, 2.0 * s * s / x)
}

/// ψ_n(a) = ∫₀¹ uⁿ e^{iau} du for n = 0..=N.
fn psi_table<const N: usize>(a: f64) -> [C64; N] {
    let mut out = [C64::new(0.0, 0.0); N];
    if a.abs() < 1.0 {
        for (n, o) in out.iter_mut().enumerate() {
            let mut term = C64::new(1.0, 0.0);
            let mut sum = C64::new(0.0, 0.0);
            for m in 0..40 {
                let add = term / (n + m + 1) as f64;
                sum += add;
                if add.norm() < 1e-18 {
                    break;
                }
                term *= C64::new(0.0, a) / (m + 1) as f64;
            }
            *o = sum;
        }
    } else {
        let e = C64::from_polar(1.0, a);
        let ia = C64::new(0.0, a);
        out[0] = phi1(a);
        for n in 1..N {
            out[n] = (e - out[n - 1] * n as f64) / ia;
        }
    }
    out
}

/// J(ω, ω', h) = ∫₀ʰ ds e^{iωs} ∫₀ˢ du e^{iω'u}.
pub fn nested_block(w: f64, wp: f64, h: f64) -> C64 {
    let a = w * h;
    let b = wp * h;
    if b.abs() >= 1e-3 {
        return (phi1(a + b) - phi1(a)) * h * h / C64::new(0.0, b);
    }
    let psi = psi_table::<6>(a);
    let mut term = C64::new(1.0, 0.0);
    let mut sum = C64::new(0.0, 0.0);
    for m in 0..5 {
        // (ib)^m / (m+1)!
        sum += term * psi[m + 1] / (m + 1) as f64;
        term *= C64::new(0.0, b) / (m + 1) as f64;
    }
    sum * h * h
}

/// Σ_{k<m} e^{ikx}.
pub fn geometric_sum(x: f64, m: usize) -> C64 {
    let step = C64::from_polar(1.0, x);
    let mut z = C64::new(1.0, 0.0);
    let mut sum = C64::new(0.0, 0.0);
    for _ in 0..m {
        sum += z;
        z *= step;
    }
    sum
}

/// Σ_{k1<m} e^{ik1·x} Σ_{k2<k1} e^{ik2·y}.
fn ordered_double_sum(x: f64, y: f64, m: usize) -> C64 {
    let (sx, sy) = (C64::from_polar(1.0, x), C64::from_polar(1.0, y));
    let (mut zx, mut zy) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let mut inner = C64::new(0.0, 0.0);
    let mut sum = C64::new(0.0, 0.0);
    for _ in 0..m {
        sum += zx * inner;
        inner += zy;
        zx *= sx;
        zy *= sy;
    }
    sum
}

/// sin²(MωT_c/2)/sin²(ωT_c/2), equal to M² on harmonics.
pub fn comb_ratio(w: f64, cycle_time: f64, m: usize) -> f64 {
    let x = w * cycle_time;
    let s = (0.5 * x).sin();
    if s.abs() < 1e-3 {
        return geometric_sum(x, m).norm_sqr();
    }
    let n = (0.5 * m as f64 * x).sin();
    n * n / (s * s)
}

pub type Entry = (usize, usize);

fn flat(e: Entry) -> usize {
    3 * e.0 + e.1
}

/// Switching functions of one matrix prepared for repeated filter evaluation over [0, T].
///
/// When the matrix is T_c-periodic and T = m·T_c, only one cycle is stored and the
/// repetitions are summed exactly as geometric series.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    starts: Vec<f64>,
    widths: Vec<f64>,
    values: Vec<[C64; 9]>,
    reps: usize,
    cycle: f64,
}

impl FilterKernel {
    pub fn new(sm: &SwitchingMatrix, t: f64) -> Result<Self> {
        let total = sm.duration();
        if !(t.is_finite() && t > 0.0) || t > total * (1.0 + TIME_TOL) {
            return invalid(format!("filter duration {t} outside (0, {total}]"));
        }
        let t = t.min(total);
        let mut window = t;
        let mut reps = 1;
        if let Some(c) = sm.cycle() {
            let m = (t / c.cycle_time).round();
            if m >= 1.0 && (t - m * c.cycle_time).abs() <= TIME_TOL * t {
                window = c.cycle_time;
                reps = m as usize;
            }
        }
        let mut k = FilterKernel { starts: Vec::new(), widths: Vec::new(), values: Vec::new(), reps, cycle: window };
        let bps = sm.breakpoints();
        for (i, v) in sm.values().iter().enumerate() {
            let t0 = bps[i];
            if t0 >= window * (1.0 - TIME_TOL) {
                break;
            }
            let t1 = bps[i + 1].min(window);
            k.starts.push(t0);
            k.widths.push(t1 - t0);
            let mut vals = [C64::new(0.0, 0.0); 9];
            for (n, slot) in vals.iter_mut().enumerate() {
                *slot = v[(n / 3, n % 3)];
            }
            k.values.push(vals);
        }
        Ok(k)
    }

    pub fn duration(&self) -> f64 {
        self.cycle * self.reps as f64
    }

    /// Per-interval weights e^{iωs_k} h_k φ₁(ωh_k).
    fn weights(&self, w: f64) -> impl Iterator<Item = C64> + '_ {
        self.starts
            .iter()
            .zip(&self.widths)
            .map(move |(&s, &h)| C64::from_polar(h, w * s) * phi1(w * h))
    }

    fn ff1_cycle(&self, w: f64) -> [C64; 9] {
        let mut out = [C64::new(0.0, 0.0); 9];
        for (wk, v) in self.weights(w).zip(&self.values) {
            for n in 0..9 {
                out[n] += v[n] * wk;
            }
        }
        out
    }

    /// F⁽¹⁾ for all nine entries.
    pub fn ff1(&self, w: f64) -> [C64; 9] {
        let mut out = self.ff1_cycle(w);
        if self.reps > 1 {
            let g = geometric_sum(w * self.cycle, self.reps);
            out.iter_mut().for_each(|z| *z *= g);
        }
        out
    }

    pub fn ff1_entry(&self, e: Entry, w: f64) -> C64 {
        self.ff1(w)[flat(e)]
    }

    fn ff2_cycle(&self, w: f64, wp: f64) -> Box<[[C64; 9]; 9]> {
        let mut out = Box::new([[C64::new(0.0, 0.0); 9]; 9]);
        let mut cum = [C64::new(0.0, 0.0); 9];
        for (k, (&s, &h)) in self.starts.iter().zip(&self.widths).enumerate() {
            let wa = C64::from_polar(h, w * s) * phi1(w * h);
            let wb = C64::from_polar(h, wp * s) * phi1(wp * h);
            let blk = C64::from_polar(1.0, (w + wp) * s) * nested_block(w, wp, h);
            let v = &self.values[k];
            for a in 0..9 {
                let ya = v[a];
                if ya == C64::new(0.0, 0.0) {
                    continue;
                }
                let (ta, tb) = (ya * wa, ya * blk);
                let row = &mut out[a];
                for b in 0..9 {
                    row[b] += ta * cum[b] + tb * v[b];
                }
            }
            for b in 0..9 {
                cum[b] += v[b] * wb;
            }
        }
        out
    }

    /// F⁽²⁾_{A;B}(ω, ω') for all 81 entry pairs, indexed [A][B].
    pub fn ff2(&self, w: f64, wp: f64) -> Box<[[C64; 9]; 9]> {
        let mut out = self.ff2_cycle(w, wp);
        if self.reps > 1 {
            let same = geometric_sum((w + wp) * self.cycle, self.reps);
            let cross = ordered_double_sum(w * self.cycle, wp * self.cycle, self.reps);
            let fa = self.ff1_cycle(w);
            let fb = self.ff1_cycle(wp);
            for a in 0..9 {
                for b in 0..9 {
                    out[a][b] = out[a][b] * same + fa[a] * fb[b] * cross;
                }
            }
        }
        out
    }

    pub fn ff2_entry(&self, ea: Entry, eb: Entry, w: f64, wp: f64) -> C64 {
        self.ff2(w, wp)[flat(ea)][flat(eb)]
    }

    /// (G⁺, G⁻) = F⁽²⁾_{A;B}(ω,ω') ± F⁽²⁾_{B;A}(ω',ω).
    pub fn g_entry(&self, ea: Entry, eb: Entry, w: f64, wp: f64) -> (C64, C64) {
        let f = self.ff2_entry(ea, eb, w, wp);
        let s = self.ff2_entry(eb, ea, wp, w);
        (f + s, f - s)
    }
}

pub fn first_order_ff(sm: &SwitchingMatrix, e: Entry, w: f64, t: f64) -> Result<C64> {
    check_entry(e)?;
    Ok(FilterKernel::new(sm, t)?.ff1_entry(e, w))
}

pub fn second_order_ff(sm: &SwitchingMatrix, ea: Entry, eb: Entry, w: f64, wp: f64, t: f64) -> Result<C64> {
    check_entry(ea)?;
    check_entry(eb)?;
    Ok(FilterKernel::new(sm, t)?.ff2_entry(ea, eb, w, wp))
}

pub fn g_filters(sm: &SwitchingMatrix, ea: Entry, eb: Entry, w: f64, wp: f64, t: f64) -> Result<(C64, C64)> {
    check_entry(ea)?;
    check_entry(eb)?;
    Ok(FilterKernel::new(sm, t)?.g_entry(ea, eb, w, wp))
}

fn check_entry(e: Entry) -> Result<()> {
    if e.0 > 2 || e.1 > 2 {
        return invalid(format!("entry {e:?} out of range"));
    }
    Ok(())
}

/// Coefficients κ_p(j',l') of G⁺_{j,j';l,l'} in 𝒢⁽ᵖ⁾_{−j,−l}, slots j'+1, l'+1.
pub fn generalized_weights(p: usize) -> Result<[[f64; 3]; 3]> {
    let r2 = std::f64::consts::SQRT_2;
    let mut k = [[0.0; 3]; 3];
    match p {
        1 => k[2][0] = -2.0,
        2 => k[0][2] = -2.0,
        3 => {
            k[1][1] = -2.0;
            for (jp, lp) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
                k[jp][lp] = ((jp as f64) - 1.0) * ((lp as f64) - 1.0);
            }
        }
        4 => {
            for jp in 0..3 {
                for lp in 0..3 {
                    if (jp as i32 + lp as i32 - 2).abs() == 1 {
                        k[jp][lp] = -r2 * (lp as f64 - jp as f64);
                    }
                }
            }
        }
        _ => return invalid(format!("generalized filter index {p} not in 1..4")),
    }
    Ok(k)
}

/// 𝒢⁽ᵖ⁾_{J,L}(ω, T) for p = 1..4 and spectrum slots J, L (index = j + 1).
///
/// 𝒢⁽ᵖ⁾_{−j,−l}(ω) = Σ_{j',l'} κ_p(j',l') G⁺_{j,j';l,l'}(ω + jΩ, −ω + lΩ), with G⁺ = F⁽¹⁾·F⁽¹⁾.
pub fn generalized_filters(kernel: &FilterKernel, w: f64, splitting: f64) -> [[[C64; 3]; 3]; 4] {
    let shift = |j: usize| (j as f64 - 1.0) * splitting;
    let fa: [[C64; 9]; 3] = std::array::from_fn(|j| kernel.ff1(w + shift(j)));
    let fb: [[C64; 9]; 3] = std::array::from_fn(|l| kernel.ff1(-w + shift(l)));
    let weights: [[[f64; 3]; 3]; 4] = std::array::from_fn(|p| generalized_weights(p + 1).unwrap());
    let mut out = [[[C64::new(0.0, 0.0); 3]; 3]; 4];
    for j in 0..3 {
        for l in 0..3 {
            for (p, kp) in weights.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for jp in 0..3 {
                    for lp in 0..3 {
                        if kp[jp][lp] != 0.0 {
                            acc += fa[j][3 * j + jp] * fb[l][3 * l + lp] * kp[jp][lp];
                        }
                    }
                }
                out[p][2 - j][2 - l] = acc;
            }
        }
    }
    out
}

/// Single 𝒢⁽ᵖ⁾_{j,l}(ω, T) with j, l ∈ {−1, 0, 1}.
pub fn generalized_filter(sm: &SwitchingMatrix, p: usize, j: i32, l: i32, w: f64, t: f64, splitting: f64) -> Result<C64> {
    generalized_weights(p)?;
    if j.abs() > 1 || l.abs() > 1 {
        return invalid(format!("spherical indices ({j},{l}) out of range"));
    }
    let k = FilterKernel::new(sm, t)?;
    Ok(generalized_filters(&k, w, splitting)[p - 1][(j + 1) as usize][(l + 1) as usize])
}

/// (𝓔[G], 𝓞[G]) from G(ω) and G(−ω).
pub fn parity_components(g_w: C64, g_minus_w: C64) -> (C64, C64) {
    ((g_w + g_minus_w) * 0.5, (g_w - g_minus_w) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalancedEstimate {
    pub o_plus: f64,
    pub o_minus: f64,
    pub alpha: f64,
    pub bound: f64,
}

/// Upper bound on |𝓘(o₊, o₋)| over the triangular (t₋, t₊) domain of duration T.
pub fn imbalanced_bound(o_plus: f64, o_minus: f64, t: f64) -> Result<ImbalancedEstimate> {
    if o_plus == 0.0 {
        return invalid("o₊ = 0 is the balanced case; the imbalance bound does not apply");
    }
    if !(o_plus.is_finite() && o_minus.is_finite() && t > 0.0) {
        return invalid("imbalance bound needs finite o± and T > 0");
    }
    let alpha = if o_minus == 0.0 { f64::INFINITY } else { o_plus / o_minus };
    let x = o_plus * t;
    let bound = if (alpha.abs() - 1.0).abs() < 1e-12 {
        t * t * (1.0 / (x * x) + (1.0 / (2.0 * x)).abs())
    } else if alpha.is_infinite() {
        4.0 / (o_plus * o_plus)
    } else {
        let s = (alpha / (1.0 + alpha)).abs()
            + (2.0 * alpha * alpha / (alpha * alpha - 1.0)).abs()
            + (alpha / (alpha - 1.0)).abs();
        s / (o_plus * o_plus)
    };
    Ok(ImbalancedEstimate { o_plus, o_minus, alpha, bound })
}
