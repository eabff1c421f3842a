//! Gaussian-approximation density evolution for Gray-mapped QPSK bit channels.

use std::sync::OnceLock;

use super::degree::DegreeDistribution;
use crate::error::{Error, Result};
use crate::quad::integrate;

const LX_MIN: f64 = -18.420680743952367; // ln 1e-8
const LX_MAX: f64 = 3.912023005428146; // ln 50
const TABLE: usize = 4096;

struct PhiTable {
    ln_phi: Vec<f64>,
}

fn phi_exact(x: f64) -> f64 {
    // 1 - E tanh(u/2) = E 2/(1+e^u), u ~ N(x, 2x)
    let s = (2.0 * x).sqrt();
    let f = |z: f64| {
        let u = x + s * z;
        let t = if u > 0.0 { 2.0 * (-u).exp() / (1.0 + (-u).exp()) } else { 2.0 / (1.0 + u.exp()) };
        t * (-0.5 * z * z).exp()
    };
    let lo = -(x / s + 14.0);
    integrate(f, lo, 14.0, 1e-16) / (2.0 * std::f64::consts::PI).sqrt()
}

fn table() -> &'static PhiTable {
    static T: OnceLock<PhiTable> = OnceLock::new();
    T.get_or_init(|| {
        let ln_phi = (0..TABLE)
            .map(|i| {
                let lx = LX_MIN + (LX_MAX - LX_MIN) * i as f64 / (TABLE - 1) as f64;
                phi_exact(lx.exp()).ln()
            })
            .collect();
        PhiTable { ln_phi }
    })
}

fn phi_asym(x: f64) -> f64 {
    (std::f64::consts::PI / x).sqrt() * (-x / 4.0).exp() * (1.0 - 10.0 / (7.0 * x))
}

/// `phi(x) = 1 - E tanh(u/2)`, `u ~ N(x, 2x)`; equals the bit MMSE of an LLR with mean `x`.
pub fn ga_phi(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lx = x.ln();
    if lx < LX_MIN {
        return 1.0 - 0.5 * x;
    }
    if lx >= LX_MAX {
        // matched to the table edge so the join is continuous
        let edge = table().ln_phi[TABLE - 1].exp() / phi_asym(LX_MAX.exp());
        return phi_asym(x) * edge;
    }
    let t = (lx - LX_MIN) / (LX_MAX - LX_MIN) * (TABLE - 1) as f64;
    // cubic Lagrange through four neighbours
    let i = (t.floor() as usize).clamp(1, TABLE - 3);
    let f = t - i as f64;
    let tb = &table().ln_phi;
    let (a, b, c, d) = (tb[i - 1], tb[i], tb[i + 1], tb[i + 2]);
    let v = -f * (f - 1.0) * (f - 2.0) / 6.0 * a + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * b
        - (f + 1.0) * f * (f - 2.0) / 2.0 * c
        + (f + 1.0) * f * (f - 1.0) / 6.0 * d;
    v.exp()
}

/// Inverse of [`ga_phi`] on `(0, 1]`.
pub fn ga_phi_inv(y: f64) -> f64 {
    if y >= 1.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return f64::INFINITY;
    }
    let tb = &table().ln_phi;
    let ly = y.ln();
    let lx_at = |i: usize| LX_MIN + (LX_MAX - LX_MIN) * i as f64 / (TABLE - 1) as f64;
    if ly >= tb[0] {
        return 2.0 * (1.0 - y);
    }
    if ly <= tb[TABLE - 1] {
        // asymptotic region, rarely reached
        let (mut lo, mut hi) = (LX_MAX, LX_MAX + 2.0);
        while ga_phi(hi.exp()) > y {
            hi += 2.0;
            if hi > 12.0 {
                return hi.exp();
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ga_phi(mid.exp()) > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return (0.5 * (lo + hi)).exp();
    }
    // table values decrease; find the bracketing cell, then refine by secant in (ln x, ln phi)
    let i = tb.partition_point(|&v| v > ly).clamp(1, TABLE - 1) - 1;
    let (mut x0, mut x1) = (lx_at(i), lx_at(i + 1));
    let (mut f0, mut f1) = (tb[i] - ly, tb[i + 1] - ly);
    for _ in 0..4 {
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        let f2 = ga_phi(x2.exp()).ln() - ly;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        if f1.abs() < 1e-14 {
            break;
        }
    }
    x1.exp()
}

/// Message mean beyond which the decoder is treated as converged.
const M_DONE: f64 = 400.0;

/// GA-DE fixed point of the check-to-variable mean for channel LLR mean `m0`.
pub fn ga_check_mean(dd: &DegreeDistribution, m0: f64, max_iters: usize) -> f64 {
    check_mean_from(dd, m0, 0.0, max_iters)
}

// `start` must not exceed the least fixed point; the iteration is monotone from below
fn check_mean_from(dd: &DegreeDistribution, m0: f64, start: f64, max_iters: usize) -> f64 {
    let lam: Vec<(f64, f64)> = dd.lambda().iter().map(|(&d, &f)| (d as f64, f)).collect();
    let mu: Vec<(f64, f64)> = dd.mu().iter().map(|(&d, &f)| (d as f64, f)).collect();
    let mut mc = start;
    for _ in 0..max_iters {
        let s: f64 = lam.iter().map(|&(d, f)| f * ga_phi(m0 + (d - 1.0) * mc)).sum();
        let next: f64 = mu.iter().map(|&(d, f)| f * ga_phi_inv(1.0 - (1.0 - s).powf(d - 1.0))).sum();
        if !next.is_finite() || next > M_DONE {
            return M_DONE;
        }
        if (next - mc).abs() <= 1e-10 * next.max(1e-12) {
            return next;
        }
        mc = next;
    }
    mc
}

/// GA-DE decoder MMSE curve for Gray QPSK at each `rho` (APP symbol error).
pub fn ga_curve(dd: &DegreeDistribution, rho: &[f64]) -> Result<Vec<f64>> {
    if rho.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::Parameter("rho grid must be finite and non-negative".into()));
    }
    let nodes = dd.var_node_fractions();
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]));
    let mut out = vec![1.0; rho.len()];
    // the check mean grows with rho, so each fixed point seeds the next
    let mut mc = 0.0;
    for i in order {
        let r = rho[i];
        if r == 0.0 {
            continue;
        }
        let m0 = 2.0 * r;
        mc = if mc >= M_DONE { M_DONE } else { check_mean_from(dd, m0, mc, 4000) };
        out[i] = nodes.iter().map(|(&d, &f)| f * ga_phi(m0 + d as f64 * mc)).sum::<f64>();
    }
    Ok(out)
}

/// GA threshold in per-bit SNR `rho` (smallest rho where the curve reaches `floor`).
pub fn ga_threshold_rho(dd: &DegreeDistribution, lo: f64, hi: f64, floor: f64) -> f64 {
    let ok = |r: f64| ga_curve(dd, &[r]).map(|v| v[0] <= floor).unwrap_or(false);
    if !ok(hi) {
        return f64::INFINITY;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-6 * b {
        let m = 0.5 * (a + b);
        if ok(m) {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::bpsk_mmse;

    #[test]
    fn phi_matches_bpsk_mmse() {
        for g in [0.05, 0.3, 1.0, 3.0, 8.0] {
            let a = ga_phi(2.0 * g);
            let b = bpsk_mmse(g);
            assert!((a - b).abs() < 1e-6 * b.max(1e-3), "{g}: {a} {b}");
        }
    }

    #[test]
    fn phi_inverse_round_trip() {
        for x in [1e-6, 1e-3, 0.1, 1.0, 10.0, 45.0, 80.0] {
            let y = ga_phi(x);
            assert!((ga_phi_inv(y) - x).abs() < 1e-6 * x.max(1e-3), "{x}");
        }
    }

    #[test]
    fn phi_continuous_at_table_edge() {
        let x = LX_MAX.exp();
        assert!((ga_phi(x * (1.0 - 1e-9)) / ga_phi(x * (1.0 + 1e-9)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn regular_threshold_close_to_known() {
        // GA threshold of (3,6): sigma_GA = 0.8747 (per-bit SNR 1/sigma^2)
        let dd = DegreeDistribution::regular(3, 6).unwrap();
        let r = ga_threshold_rho(&dd, 0.5, 3.0, 1e-9);
        let sigma = (1.0 / r).sqrt();
        assert!((sigma - 0.8747).abs() < 0.003, "{sigma}");
    }

    #[test]
    fn curve_shape() {
        let dd = DegreeDistribution::regular(3, 6).unwrap();
        let grid: Vec<f64> = (0..60).map(|i| 0.05 * i as f64).collect();
        let c = ga_curve(&dd, &grid).unwrap();
        assert_eq!(c[0], 1.0);
        assert!(c.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*c.last().unwrap() < 1e-9);
        for (r, v) in grid.iter().zip(&c).skip(1) {
            assert!(*v <= bpsk_mmse(*r) + 1e-9);
        }
    }
}
