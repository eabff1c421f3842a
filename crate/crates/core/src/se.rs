//! Transfer functions, fixed points, constrained capacities and achievable rates.

use crate::channel::{ChannelMatrix, SnrPoint};
use crate::constellation::{MmseCurve, MmseFn};
use crate::error::{Error, Result};
use crate::quad::{bisect, integrate};

const SCAN_HALF: usize = 2048;
const V_FLOOR: f64 = 1e-14;
const G_TOL: f64 = 1e-13;

/// Channel-side transfer functions for one spectrum at one SNR.
#[derive(Debug, Clone)]
pub struct TransferPair {
    s: Vec<f64>,
    n: usize,
    snr: SnrPoint,
    phi_one: f64,
    upper: f64,
}

impl TransferPair {
    /// `spectrum` holds the singular values, `n` the number of transmit columns.
    pub fn new(spectrum: &[f64], n: usize, snr: SnrPoint) -> Result<Self> {
        if spectrum.is_empty() || spectrum.iter().all(|&e| e == 0.0) {
            return Err(Error::Model("spectrum has rank 0".into()));
        }
        if spectrum.len() > n {
            return Err(Error::Parameter(format!("rank {} exceeds N={n}", spectrum.len())));
        }
        let s: Vec<f64> = spectrum.iter().filter(|&&e| e > 0.0).map(|e| snr.snr * e * e).collect();
        let upper = s.iter().sum::<f64>() / n as f64;
        let mut pair = TransferPair { s, n, snr, phi_one: 0.0, upper };
        pair.phi_one = pair.phi_l(1.0);
        // phi_L must not increase in v
        let mut prev = pair.upper;
        for k in 0..=64 {
            let v = (k as f64 / 64.0).max(1e-12);
            let p = pair.phi_l(v);
            if p > prev * (1.0 + 1e-10) + 1e-300 {
                return Err(Error::Model(format!("phi_L increases at v={v}: {prev} -> {p}")));
            }
            prev = p;
        }
        Ok(pair)
    }

    pub fn from_channel(ch: &ChannelMatrix, snr: SnrPoint) -> Result<Self> {
        Self::new(ch.spectrum(), ch.n(), snr)
    }

    pub fn snr(&self) -> SnrPoint {
        self.snr
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `phi_L(0)`, equal to snr for a trace-normalized channel.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn phi_one(&self) -> f64 {
        self.phi_one
    }

    /// `(1/N) tr[(snr A^H A + rho I)^-1]`.
    pub fn omega_l(&self, rho: f64) -> f64 {
        let t = self.s.len();
        let mut acc: f64 = self.s.iter().map(|s| 1.0 / (s + rho)).sum();
        if self.n > t {
            acc += (self.n - t) as f64 / rho;
        }
        acc / self.n as f64
    }

    /// `phi_L(v) = 1/Omega_L(1/v) - 1/v`, in a cancellation-free form.
    pub fn phi_l(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return self.upper;
        }
        let u = 1.0 / v;
        let num: f64 = self.s.iter().map(|s| s / (s + u)).sum::<f64>() / self.n as f64;
        num / self.omega_l(u)
    }

    pub fn phi_l_inverse(&self, rho: f64) -> f64 {
        if rho < self.phi_one {
            return 1.0;
        }
        if rho >= self.upper {
            return 0.0;
        }
        if self.upper - self.phi_one <= 1e-14 * self.upper {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if self.phi_l(mid) > rho {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn varphi_l(&self, rho: f64) -> f64 {
        if rho < self.phi_one {
            return 1.0 / (1.0 + rho);
        }
        let v = self.phi_l_inverse(rho);
        if v <= 0.0 {
            0.0
        } else {
            v / (1.0 + rho * v)
        }
    }

    /// Scan parameter: `[0,1]` sweeps rho up to phi_L(1), `(1,2]` sweeps v log-spaced
    /// from 1 to 1e-14, `(2,3]` closes the gap to v = 0. Returns `(rho, g)`.
    fn scan_point(&self, omega: &dyn MmseFn, t: f64) -> (f64, f64) {
        if t <= 1.0 {
            // Omega_S <= 1/(1+rho) for unit-power inputs; positive values here are quadrature noise
            let rho = t * self.phi_one;
            return (rho, (omega.mmse(rho) - 1.0 / (1.0 + rho)).min(0.0));
        }
        let v = if t <= 2.0 { (V_FLOOR.ln() * (t - 1.0)).exp() } else { V_FLOOR * (3.0 - t) };
        let rho = self.phi_l(v);
        let vp = if v > 0.0 { self.omega_l(1.0 / v) } else { 0.0 };
        (rho, omega.mmse(rho) - vp)
    }
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    rho: f64,
    upward: bool,
}

struct Scan {
    crossings: Vec<Crossing>,
    degenerate: bool,
}

fn scan(pair: &TransferPair, omega: &dyn MmseFn) -> Scan {
    let mut ts: Vec<f64> = (0..=SCAN_HALF).map(|k| k as f64 / SCAN_HALF as f64).collect();
    ts.extend((1..=SCAN_HALF).map(|k| 1.0 + k as f64 / SCAN_HALF as f64));
    ts.push(3.0);
    let gs: Vec<f64> = ts.iter().map(|&t| pair.scan_point(omega, t).1).collect();
    let degenerate = pair.phi_one > 0.0 && gs[1..=SCAN_HALF].iter().all(|g| g.abs() <= G_TOL);
    let mut crossings = Vec::new();
    for k in 1..ts.len() {
        let above_prev = gs[k - 1] > G_TOL;
        let above = gs[k] > G_TOL;
        if above_prev != above {
            let t = bisect(
                |t| if pair.scan_point(omega, t).1 > G_TOL { 1.0 } else { -1.0 },
                ts[k - 1],
                ts[k],
                1e-16,
            );
            crossings.push(Crossing { rho: pair.scan_point(omega, t).0, upward: above });
        }
    }
    Scan { crossings, degenerate }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub rho_star: f64,
    pub v_star: f64,
    /// `Omega_S(rho*) - varphi_L(rho*)`.
    pub residual: f64,
    /// `rho*` sits at `phi_L(0)` (curve never rose above the channel curve).
    pub boundary: bool,
    /// The two curves coincide below `phi_L(1)`.
    pub degenerate: bool,
    /// More than one crossing was seen; all candidates are listed in `candidates`.
    pub non_unique: bool,
    pub candidates: Vec<f64>,
}

pub fn find_fixed_point(pair: &TransferPair, omega: &dyn MmseFn) -> FixedPoint {
    let sc = scan(pair, omega);
    let ups: Vec<f64> = sc.crossings.iter().filter(|c| c.upward).map(|c| c.rho).collect();
    let rho_star = ups.first().copied().unwrap_or(pair.upper);
    let om = omega.mmse(rho_star);
    let v_star = if om > 0.0 { 1.0 / (1.0 / om - rho_star) } else { 0.0 };
    FixedPoint {
        rho_star,
        v_star,
        residual: om - pair.varphi_l(rho_star),
        boundary: rho_star >= pair.upper * (1.0 - 1e-12),
        degenerate: sc.degenerate,
        non_unique: ups.len() > 1,
        candidates: ups,
    }
}

#[derive(Debug, Clone)]
pub struct CapacityReport {
    pub sum_capacity_nats: f64,
    pub per_antenna_nats: f64,
    pub fixed_point: FixedPoint,
    pub snr: SnrPoint,
}

impl CapacityReport {
    pub fn per_antenna_bits(&self) -> f64 {
        self.per_antenna_nats / std::f64::consts::LN_2
    }
}

/// `sum ln(1/v* + s_i) + (N - T) ln(1/v*)`.
pub fn log_det_b(pair: &TransferPair, v_star: f64) -> f64 {
    let u = 1.0 / v_star;
    let t = pair.s.len();
    pair.s.iter().map(|s| (u + s).ln()).sum::<f64>() + (pair.n - t) as f64 * u.ln()
}

pub fn sum_capacity(pair: &TransferPair, omega: &dyn MmseFn, fp: &FixedPoint) -> Result<CapacityReport> {
    if !(fp.v_star > 0.0 && fp.v_star.is_finite()) {
        return Err(Error::Model(format!("invalid fixed point: v* = {}", fp.v_star)));
    }
    let om = omega.mmse(fp.rho_star);
    let n = pair.n as f64;
    let total = log_det_b(pair, fp.v_star) + n * (om.ln() + omega.area(0.0, fp.rho_star));
    Ok(CapacityReport {
        sum_capacity_nats: total,
        per_antenna_nats: total / n,
        fixed_point: fp.clone(),
        snr: pair.snr,
    })
}

/// Fixed point plus capacity in one call.
pub fn capacity(pair: &TransferPair, omega: &dyn MmseFn) -> Result<CapacityReport> {
    let fp = find_fixed_point(pair, omega);
    sum_capacity(pair, omega, &fp)
}

/// Both expressions of the measurement MMSE at the fixed point:
/// `rho* Omega_S(rho*)/snr` and `(1 - u* Omega_L(u*))/snr` with `u* = 1/v*`.
pub fn measurement_mmse(pair: &TransferPair, omega: &dyn MmseFn, fp: &FixedPoint) -> (f64, f64) {
    let snr = pair.snr.snr;
    let a = fp.rho_star * omega.mmse(fp.rho_star) / snr;
    let u = 1.0 / fp.v_star;
    let b = pair.s.iter().map(|s| s / (s + u)).sum::<f64>() / pair.n as f64 / snr;
    (a, b)
}

/// Per-antenna capacity via the integral of the measurement MMSE over `[0, snr]`
/// (composite Simpson on `nodes` intervals).
pub fn capacity_by_immse(spectrum: &[f64], n: usize, omega: &dyn MmseFn, snr: f64, nodes: usize) -> Result<f64> {
    let nodes = nodes + nodes % 2;
    let h = snr / nodes as f64;
    let mut acc = 0.0;
    for k in 0..=nodes {
        let s = (k as f64 * h).max(snr * 1e-12);
        let pair = TransferPair::new(spectrum, n, SnrPoint::from_linear(s)?)?;
        let fp = find_fixed_point(&pair, omega);
        let (val, _) = measurement_mmse(&pair, omega, &fp);
        let w = if k == 0 || k == nodes { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * val;
    }
    Ok(acc * h / 3.0)
}

/// Capacity of the columns `cols` of `ch` (all other users known), in nats.
pub fn group_capacity(ch: &ChannelMatrix, snr: SnrPoint, omega: &dyn MmseFn, cols: &[usize]) -> Result<f64> {
    if cols.is_empty() {
        return Err(Error::Parameter("empty column subset".into()));
    }
    let mut sorted = cols.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let pair = if sorted.len() == ch.n() {
        TransferPair::from_channel(ch, snr)?
    } else {
        let sub = ch.columns(&sorted)?;
        let sv = sub.singular_values();
        let mut e: Vec<f64> = sv.iter().copied().filter(|&x| x > 1e-12 * sv.max()).collect();
        e.sort_by(|a, b| b.total_cmp(a));
        TransferPair::new(&e, sorted.len(), snr)?
    };
    Ok(capacity(&pair, omega)?.sum_capacity_nats)
}

fn varphi_area(pair: &TransferPair, a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    let cut = pair.phi_one.min(b);
    if a < cut {
        acc += ((1.0 + cut) / (1.0 + a)).ln();
    }
    let lo = a.max(pair.phi_one);
    let hi = b.min(pair.upper);
    if hi > lo {
        acc += integrate(|r| pair.varphi_l(r), lo, hi, 1e-12);
    }
    acc
}

/// `int_0^inf min(Omega_S, varphi_L) d rho`, nats per antenna.
pub fn achievable_avg_rate(pair: &TransferPair, omega: &dyn MmseFn) -> f64 {
    let sc = scan(pair, omega);
    let mut brk = vec![0.0, pair.phi_one, pair.upper];
    brk.extend(sc.crossings.iter().map(|c| c.rho));
    brk.sort_by(|a, b| a.total_cmp(b));
    brk.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1e-300));
    let mut acc = 0.0;
    for w in brk.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        if omega.mmse(mid) <= pair.varphi_l(mid) {
            acc += omega.area(a, b);
        } else {
            acc += varphi_area(pair, a, b);
        }
    }
    acc
}

/// Turbo-LMMSE rate `int_0^inf [Omega_S(r) - Omega_S(r + phi_L(Omega_S(r)))] dr`, nats per antenna.
/// For a discrete constellation the first term integrates to `ln|S|`; the difference form also
/// covers the Gaussian sentinel.
pub fn turbo_lmmse_rate(pair: &TransferPair, omega: &dyn MmseFn) -> f64 {
    let f = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let r = t / (1.0 - t);
        let o = omega.mmse(r);
        let d = o - omega.mmse(r + pair.phi_l(o));
        d / ((1.0 - t) * (1.0 - t))
    };
    integrate(f, 0.0, 1.0, 1e-12)
}

/// Rate carried by a decoder transfer curve; the curve must vanish at its last node.
pub fn code_rate_from_curve(curve: &MmseCurve) -> Result<f64> {
    let last = *curve.values().last().unwrap();
    if last != 0.0 || curve.is_exact_gaussian() {
        return Err(Error::Contract(format!(
            "curve does not vanish beyond its last node (last value {last})"
        )));
    }
    Ok(curve.integral(0.0, *curve.rho().last().unwrap()))
}

/// SNR (dB) at which per-antenna capacity reaches `target_nats`, by bisection on `[lo_db, hi_db]`.
pub fn limit_snr_db(spectrum: &[f64], n: usize, omega: &dyn MmseFn, target_nats: f64, lo_db: f64, hi_db: f64) -> Result<f64> {
    let cap = |db: f64| -> Result<f64> {
        let pair = TransferPair::new(spectrum, n, SnrPoint::from_db(db)?)?;
        Ok(capacity(&pair, omega)?.per_antenna_nats)
    };
    if cap(lo_db)? > target_nats || cap(hi_db)? < target_nats {
        return Err(Error::Numeric(format!("target capacity not bracketed by [{lo_db}, {hi_db}] dB")));
    }
    let (mut lo, mut hi) = (lo_db, hi_db);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if cap(mid)? < target_nats {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pointwise envelope `min(Omega_S, varphi_L)` on a grid, as a curve vanishing at `phi_L(0)`.
pub fn envelope_curve(pair: &TransferPair, omega: &dyn MmseFn, grid: &[f64]) -> Result<MmseCurve> {
    let mut rho: Vec<f64> = grid.iter().copied().filter(|&r| r < pair.upper).collect();
    rho.push(pair.upper);
    let vals = rho
        .iter()
        .map(|&r| if r >= pair.upper { 0.0 } else { omega.mmse(r).min(pair.varphi_l(r)) })
        .collect();
    MmseCurve::new(rho, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_ill_conditioned, geometric_spectrum};
    use crate::constellation::{Constellation, Modulation};

    fn gauss() -> MmseCurve {
        MmseCurve::gaussian()
    }

    fn qpsk() -> MmseCurve {
        Constellation::new(Modulation::Qpsk).default_curve().unwrap()
    }

    fn k10(db: f64) -> TransferPair {
        let e = geometric_spectrum(333, 500, 10.0).unwrap();
        TransferPair::new(&e, 500, SnrPoint::from_db(db).unwrap()).unwrap()
    }

    #[test]
    fn identity_channel_branches() {
        let p = TransferPair::new(&[1.0; 4], 4, SnrPoint::from_linear(3.0).unwrap()).unwrap();
        assert_eq!(p.phi_l_inverse(2.9), 1.0);
        assert_eq!(p.phi_l_inverse(3.1), 0.0);
        assert_eq!(p.varphi_l(0.0), 1.0);
        assert_eq!(p.varphi_l(3.0 + 1e-9), 0.0);
        let area = achievable_avg_rate(&p, &gauss());
        assert!((area - 4f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn inverse_round_trip() {
        let p = k10(2.85);
        let rho = p.phi_l(0.5);
        assert!((p.phi_l_inverse(rho) - 0.5).abs() < 1e-9);
        assert_eq!(p.phi_l_inverse(1.5 * p.snr().snr), 0.0);
    }

    #[test]
    fn varphi_below_awgn_and_continuous() {
        let p = k10(4.0);
        let mut prev = f64::INFINITY;
        for k in 0..400 {
            let r = 3.0 * k as f64 / 400.0;
            let v = p.varphi_l(r);
            assert!(v <= 1.0 / (1.0 + r) + 1e-15);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        let a = p.phi_one();
        assert!((p.varphi_l(a * (1.0 - 1e-12)) - p.varphi_l(a * (1.0 + 1e-12))).abs() < 1e-9);
    }

    #[test]
    fn gaussian_identity_is_degenerate_boundary() {
        let p = TransferPair::new(&[1.0; 4], 4, SnrPoint::from_linear(5.0).unwrap()).unwrap();
        let fp = find_fixed_point(&p, &gauss());
        assert!(fp.degenerate && fp.boundary);
        assert!((fp.rho_star - 5.0).abs() < 1e-12);
        let c = sum_capacity(&p, &gauss(), &fp).unwrap();
        assert!((c.per_antenna_nats - 6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn qpsk_fixed_point_residual_and_statics() {
        let om = qpsk();
        let fp = find_fixed_point(&k10(2.85), &om);
        assert!(!fp.non_unique && !fp.boundary);
        assert!(fp.residual.abs() < 1e-8);
        let fp2 = find_fixed_point(&k10(3.5), &om);
        assert!(fp2.rho_star > fp.rho_star);
    }

    #[test]
    fn gaussian_capacity_is_log_det() {
        let ch = gen_ill_conditioned(20, 30, 7.0, 2).unwrap();
        for db in [0.0, 10.0] {
            let p = TransferPair::from_channel(&ch, SnrPoint::from_db(db).unwrap()).unwrap();
            let c = capacity(&p, &gauss()).unwrap();
            let snr = p.snr().snr;
            let ld: f64 = ch.spectrum().iter().map(|e| (1.0 + snr * e * e).ln()).sum();
            assert!((c.sum_capacity_nats - ld).abs() / ld < 1e-9);
        }
    }

    #[test]
    fn log_det_two_routes() {
        use nalgebra::DMatrix;
        use num_complex::Complex64;
        let ch = gen_ill_conditioned(12, 16, 5.0, 8).unwrap();
        let p = TransferPair::from_channel(&ch, SnrPoint::from_db(3.0).unwrap()).unwrap();
        let v = 0.37;
        let a = ch.entries();
        let b = a.adjoint() * a * Complex64::new(p.snr().snr, 0.0)
            + DMatrix::<Complex64>::identity(16, 16) * Complex64::new(1.0 / v, 0.0);
        let dense: f64 = b.cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum();
        assert!((dense - log_det_b(&p, v)).abs() < 1e-9 * dense.abs());
    }

    #[test]
    fn measurement_mmse_routes_agree() {
        let om = qpsk();
        let p = k10(2.85);
        let fp = find_fixed_point(&p, &om);
        let (a, b) = measurement_mmse(&p, &om, &fp);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn group_capacity_full_set_and_gaussian_logdet() {
        let ch = gen_ill_conditioned(10, 14, 6.0, 4).unwrap();
        let snr = SnrPoint::from_db(4.0).unwrap();
        let om = qpsk();
        let all: Vec<usize> = (0..14).collect();
        let full = capacity(&TransferPair::from_channel(&ch, snr).unwrap(), &om).unwrap();
        assert_eq!(group_capacity(&ch, snr, &om, &all).unwrap(), full.sum_capacity_nats);
        let half: Vec<usize> = (0..7).collect();
        let g = group_capacity(&ch, snr, &gauss(), &half).unwrap();
        let sub = ch.columns(&half).unwrap();
        let ld: f64 = sub.singular_values().iter().map(|e| (1.0 + snr.snr * e * e).ln()).sum();
        assert!((g - ld).abs() < 1e-6 * ld);
        let gq = group_capacity(&ch, snr, &om, &half).unwrap();
        assert!(gq <= full.sum_capacity_nats);
    }

    #[test]
    fn rate_equals_capacity_qpsk() {
        let om = qpsk();
        for db in [0.0, 2.85, 6.0] {
            let p = k10(db);
            let c = capacity(&p, &om).unwrap();
            let r = achievable_avg_rate(&p, &om);
            assert!((c.per_antenna_nats - r).abs() < 1e-6, "{db}: {} vs {r}", c.per_antenna_nats);
        }
    }

    #[test]
    fn low_snr_fixed_point_not_at_origin() {
        let om = qpsk();
        for db in [-30.0, -20.0, -10.0, -6.0] {
            let p = k10(db);
            let fp = find_fixed_point(&p, &om);
            assert!(fp.rho_star >= p.phi_one() * (1.0 - 1e-9), "{db}: rho* {}", fp.rho_star);
            let (a, b) = measurement_mmse(&p, &om, &fp);
            assert!((a - b).abs() < 1e-8, "{db}: {a} vs {b}");
        }
    }

    #[test]
    fn turbo_rate_ordering_and_gaussian_equality() {
        let om = qpsk();
        let p = k10(2.85);
        assert!(turbo_lmmse_rate(&p, &om) < achievable_avg_rate(&p, &om) - 1e-4);
        let g = gauss();
        let d = turbo_lmmse_rate(&p, &g) - achievable_avg_rate(&p, &g);
        assert!(d.abs() < 1e-8, "{d}");
        let tiny = k10(-60.0);
        assert!(turbo_lmmse_rate(&tiny, &om) < 1e-5);
    }

    #[test]
    fn code_rate_cases() {
        let c = Constellation::new(Modulation::Qpsk).tabulate_mmse(0.0, 400.0, 800).unwrap();
        let mut vals = c.values().to_vec();
        *vals.last_mut().unwrap() = 0.0;
        let trunc = MmseCurve::new(c.rho().to_vec(), vals).unwrap();
        let bits = code_rate_from_curve(&trunc).unwrap() / std::f64::consts::LN_2;
        assert!((bits - 2.0).abs() < 1e-3, "{bits}");
        let zero = MmseCurve::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(code_rate_from_curve(&zero).unwrap(), 0.0);
        let short = Constellation::new(Modulation::Qpsk).tabulate_mmse(0.0, 10.0, 32).unwrap();
        assert!(code_rate_from_curve(&short).is_err());

        let om = qpsk();
        let p = k10(2.85);
        let grid = crate::constellation::log_grid(0.0, p.upper(), 4000);
        let env = envelope_curve(&p, &om, &grid).unwrap();
        let r = code_rate_from_curve(&env).unwrap();
        let c = capacity(&p, &om).unwrap().per_antenna_nats;
        assert!((r - c).abs() < 1e-4);
    }
}
