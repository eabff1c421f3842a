//! Quadrature and root bracketing used throughout.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

/// Gauss–Hermite rule for the weight `exp(-t^2)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn build_hermite(n: usize) -> HermiteRule {
    // Golub–Welsch for starting nodes, then Newton on the orthonormal recurrence
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let mut start: Vec<f64> = jac.symmetric_eigenvalues().iter().copied().collect();
    start.sort_by(|a, b| b.total_cmp(a));
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, &z0) in start.iter().enumerate() {
        let mut z = z0;
        let mut pp = 0.0;
        for _ in 0..50 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = if pp.is_finite() { 2.0 / (pp * pp) } else { 0.0 };
    }
    HermiteRule { nodes: x, weights: w }
}

/// Cached Gauss–Hermite rule of order `n`.
pub fn hermite(n: usize) -> Arc<HermiteRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HermiteRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(build_hermite(n)))
        .clone()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        let scaled = tol * (hi - lo) / (b - a);
        if err <= scaled.max(1e-15 * val.abs()) || depth >= 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// Bisection for the sign change of `f` on `[lo, hi]`, `f(lo)` and `f(hi)` of opposite sign
/// (or zero). Returns the bracket midpoint once it is narrower than `xtol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let flo = f(lo);
    let lo_neg = flo <= 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid == lo || mid == hi {
            break;
        }
        if (f(mid) <= 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for &n in &[16, 64, 256, 512] {
            let r = hermite(n);
            let s0: f64 = r.weights.iter().sum();
            let s2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
            let s4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
            let sp = std::f64::consts::PI.sqrt();
            assert!((s0 - sp).abs() < 1e-12, "n={n} s0={s0}");
            assert!((s2 - sp / 2.0).abs() < 1e-12);
            assert!((s4 - 0.75 * sp).abs() < 1e-11);
        }
    }

    #[test]
    fn kronrod_integrates_smooth_and_kinked() {
        let v = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((v - (0.045 + 0.245)).abs() < 1e-11);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let r = bisect(|x| 1.0 - x, 0.0, 3.0, 1e-14);
        assert!((r - 1.0).abs() < 1e-13);
    }
}
