//! Signal constellations, their MMSE functions and soft demapping.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{hermite, integrate};

const GH_START: usize = 16;
const GH_CAP: usize = 128;
const PLANE: f64 = 8.7;
const GH_AGREE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Qpsk,
    Psk8,
    Qam16,
    Gaussian,
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "8psk" => Ok(Modulation::Psk8),
            "16qam" => Ok(Modulation::Qam16),
            "gaussian" | "gauss" => Ok(Modulation::Gaussian),
            other => Err(Error::Parameter(format!("unknown modulation {other:?}"))),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Psk8 => "8psk",
            Modulation::Qam16 => "16qam",
            Modulation::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

/// Unit-power constellation with a Gray labeling, or the Gaussian sentinel (no points).
#[derive(Debug, Clone)]
pub struct Constellation {
    name: String,
    points: Vec<Complex64>,
    labels: Vec<u32>,
    by_label: Vec<usize>,
    bits: usize,
    orbits: Vec<(usize, f64)>,
}

fn gray(k: u32) -> u32 {
    k ^ (k >> 1)
}

impl Constellation {
    pub fn new(m: Modulation) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (points, labels) = match m {
            Modulation::Gaussian => (vec![], vec![]),
            Modulation::Qpsk => (
                vec![
                    Complex64::new(h, h),
                    Complex64::new(h, -h),
                    Complex64::new(-h, h),
                    Complex64::new(-h, -h),
                ],
                vec![0, 1, 2, 3],
            ),
            Modulation::Psk8 => {
                let pts = (0..8)
                    .map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / 4.0))
                    .collect();
                (pts, (0..8).map(gray).collect())
            }
            Modulation::Qam16 => {
                // two Gray bits per axis, first bit selects the sign (0 = positive)
                let level = |b: u32| match b {
                    0b00 => 3.0,
                    0b01 => 1.0,
                    0b11 => -1.0,
                    _ => -3.0,
                };
                let s = 1.0 / 10f64.sqrt();
                let mut pts = Vec::new();
                let mut lab = Vec::new();
                for l in 0..16u32 {
                    pts.push(Complex64::new(level(l >> 2) * s, level(l & 3) * s));
                    lab.push(l);
                }
                (pts, lab)
            }
        };
        Self::from_points(&m.to_string(), points, labels).expect("built-in constellation is valid")
    }

    /// Custom constellation. Requires unit average power, power-of-two size and a label permutation.
    pub fn from_points(name: &str, points: Vec<Complex64>, labels: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Ok(Constellation {
                name: name.into(),
                points,
                labels,
                by_label: vec![],
                bits: 0,
                orbits: vec![],
            });
        }
        let q = points.len();
        if !q.is_power_of_two() || q < 2 {
            return Err(Error::Parameter(format!("constellation size {q} is not a power of two")));
        }
        let p: f64 = points.iter().map(|s| s.norm_sqr()).sum::<f64>() / q as f64;
        if (p - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("constellation power {p} != 1")));
        }
        if labels.len() != q {
            return Err(Error::Parameter("label count mismatch".into()));
        }
        let mut by_label = vec![usize::MAX; q];
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= q || by_label[l as usize] != usize::MAX {
                return Err(Error::Parameter("labels are not a permutation".into()));
            }
            by_label[l as usize] = i;
        }
        let orbits = rotation_orbits(&points);
        Ok(Constellation {
            name: name.into(),
            bits: q.trailing_zeros() as usize,
            points,
            labels,
            by_label,
            orbits,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_gaussian(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    /// `ln |S|`; infinite for the Gaussian sentinel.
    pub fn entropy_nats(&self) -> f64 {
        if self.is_gaussian() {
            f64::INFINITY
        } else {
            (self.points.len() as f64).ln()
        }
    }

    /// Per-sample error term `|sum_l p_l (s_k - s_l)|^2` at noise `z = a + ib`, summed over
    /// rotation-orbit representatives `k` with their weights.
    fn error_term(&self, sr: f64, a: f64, b: f64, logs: &mut [f64]) -> f64 {
        let q = self.points.len();
        let mut total = 0.0;
        for &(k, wk) in &self.orbits {
            let sk = self.points[k];
            let mut mx = f64::NEG_INFINITY;
            for l in 0..q {
                let d = (sk - self.points[l]) * sr;
                let re = a + d.re;
                let im = b + d.im;
                logs[l] = -(re * re + im * im);
                mx = mx.max(logs[l]);
            }
            let mut norm = 0.0;
            let mut num = Complex64::new(0.0, 0.0);
            for l in 0..q {
                let p = (logs[l] - mx).exp();
                norm += p;
                num += (sk - self.points[l]) * p;
            }
            total += wk * (num / norm).norm_sqr();
        }
        total
    }

    fn mmse_at_order(&self, rho: f64, order: usize) -> f64 {
        let rule = hermite(order);
        let sr = rho.sqrt();
        let mut logs = vec![0.0; self.points.len()];
        let mut acc = 0.0;
        for (ia, &ta) in rule.nodes.iter().enumerate() {
            let wa = rule.weights[ia];
            for (ib, &tb) in rule.nodes.iter().enumerate() {
                let w = wa * rule.weights[ib];
                if w < 1e-300 {
                    continue;
                }
                acc += w * self.error_term(sr, ta, tb, &mut logs);
            }
        }
        acc / (std::f64::consts::PI * self.points.len() as f64)
    }

    /// Real and imaginary level sets when the constellation is a Cartesian product.
    fn axes(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let uniq = |it: Vec<f64>| {
            let mut v = it;
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            v
        };
        let re = uniq(self.points.iter().map(|p| p.re).collect());
        let im = uniq(self.points.iter().map(|p| p.im).collect());
        if re.len() * im.len() != self.points.len() {
            return None;
        }
        Some((re, im))
    }

    /// Nested adaptive Gauss–Kronrod over the truncated noise plane; used once the
    /// Hermite rule stops converging (the integrand sharpens like `tanh(rho ...)`).
    fn mmse_adaptive(&self, rho: f64) -> f64 {
        let sr = rho.sqrt();
        let q = self.points.len();
        let inner = |a: f64| {
            let mut logs = vec![0.0; q];
            let ea = (-a * a).exp();
            ea * integrate(|b| (-b * b).exp() * self.error_term(sr, a, b, &mut logs), -PLANE, PLANE, 1e-13)
        };
        integrate(inner, -PLANE, PLANE, 1e-12) / (std::f64::consts::PI * q as f64)
    }

    /// `Omega_S(rho)`; adaptive 2-D Gauss–Hermite for discrete constellations.
    pub fn mmse_of(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::Parameter(format!("rho must be >= 0, got {rho}")));
        }
        if self.is_gaussian() {
            return Ok(1.0 / (1.0 + rho));
        }
        if rho == 0.0 || rho.is_infinite() {
            let mean: Complex64 = self.points.iter().sum::<Complex64>() / self.points.len() as f64;
            return Ok(if rho == 0.0 { 1.0 - mean.norm_sqr() } else { 0.0 });
        }
        let mut order = GH_START;
        let mut prev = self.mmse_at_order(rho, order);
        while order < GH_CAP {
            order *= 2;
            let cur = self.mmse_at_order(rho, order);
            if (cur - prev).abs() <= GH_AGREE {
                return Ok(cur.clamp(0.0, 1.0));
            }
            prev = cur;
        }
        let a = match self.axes() {
            Some((re, im)) => pam_mmse(&re, rho) + pam_mmse(&im, rho),
            None => self.mmse_adaptive(rho),
        };
        if !a.is_finite() || (a - prev).abs() > 1e-4 {
            return Err(Error::Numeric(format!("MMSE quadrature did not converge at rho={rho}")));
        }
        Ok(a.clamp(0.0, 1.0))
    }

    pub fn tabulate_mmse(&self, rho_min: f64, rho_max: f64, points: usize) -> Result<MmseCurve> {
        if !(rho_min >= 0.0 && rho_max > rho_min) || points < 16 {
            return Err(Error::Parameter(format!(
                "bad tabulation range [{rho_min}, {rho_max}] with {points} points"
            )));
        }
        let grid = log_grid(rho_min, rho_max, points);
        if self.is_gaussian() {
            let vals = grid.iter().map(|r| 1.0 / (1.0 + r)).collect();
            let mut c = MmseCurve::new(grid, vals)?;
            c.exact_gaussian = true;
            return Ok(c);
        }
        let vals: Vec<f64> = grid.iter().map(|&r| self.mmse_of(r)).collect::<Result<_>>()?;
        for i in 1..vals.len() {
            if vals[i] > vals[i - 1] + GH_AGREE {
                return Err(Error::Numeric(format!(
                    "tabulated MMSE increases at rho={} ({} -> {})",
                    grid[i],
                    vals[i - 1],
                    vals[i]
                )));
            }
        }
        // differences within quadrature tolerance are folded into a running minimum
        let mut out = vals.clone();
        for i in 1..out.len() {
            out[i] = out[i].min(out[i - 1]);
        }
        MmseCurve::new(grid, out)
    }

    /// Default high-resolution table used by the analysis layer (cached per built-in name).
    pub fn default_curve(&self) -> Result<MmseCurve> {
        static CACHE: OnceLock<Mutex<HashMap<String, MmseCurve>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let builtin = self.name.parse::<Modulation>().is_ok_and(|m| {
            let b = Constellation::new(m);
            b.points == self.points && b.labels == self.labels
        });
        if builtin {
            if let Some(c) = cache.lock().unwrap().get(&self.name) {
                return Ok(c.clone());
            }
        }
        let c = self.tabulate_mmse(0.0, 1e3, 512)?;
        if builtin {
            cache.lock().unwrap().insert(self.name.clone(), c.clone());
        }
        Ok(c)
    }

    pub fn posterior_mean_var(&self, r: Complex64, rho: f64) -> (Complex64, f64) {
        if self.is_gaussian() {
            return (r * (rho / (1.0 + rho)), 1.0 / (1.0 + rho));
        }
        let mut mx = f64::NEG_INFINITY;
        let logs: Vec<f64> = self
            .points
            .iter()
            .map(|&s| {
                let l = -rho * (r - s).norm_sqr();
                mx = mx.max(l);
                l
            })
            .collect();
        let mut norm = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for (l, &s) in logs.iter().zip(&self.points) {
            let p = (l - mx).exp();
            norm += p;
            mean += s * p;
            second += p * s.norm_sqr();
        }
        mean /= norm;
        (mean, (second / norm - mean.norm_sqr()).max(0.0))
    }

    /// Exact per-bit LLRs `ln P(b=0|r)/P(b=1|r)`, most significant label bit first.
    pub fn bit_llrs(&self, r: Complex64, rho: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.bits];
        self.bit_llrs_into(r, rho, &mut out);
        out
    }

    pub fn bit_llrs_into(&self, r: Complex64, rho: f64, out: &mut [f64]) {
        let q = self.points.len();
        let mut logs = [0.0f64; 64];
        let mut mx = f64::NEG_INFINITY;
        for i in 0..q {
            logs[i] = -rho * (r - self.points[i]).norm_sqr();
            mx = mx.max(logs[i]);
        }
        for (j, o) in out.iter_mut().enumerate().take(self.bits) {
            let shift = self.bits - 1 - j;
            let mut m0 = f64::NEG_INFINITY;
            let mut m1 = f64::NEG_INFINITY;
            for i in 0..q {
                if (self.labels[i] >> shift) & 1 == 0 {
                    m0 = m0.max(logs[i]);
                } else {
                    m1 = m1.max(logs[i]);
                }
            }
            let mut s0 = 0.0;
            let mut s1 = 0.0;
            for i in 0..q {
                if (self.labels[i] >> shift) & 1 == 0 {
                    s0 += (logs[i] - m0).exp();
                } else {
                    s1 += (logs[i] - m1).exp();
                }
            }
            *o = (m0 + s0.ln()) - (m1 + s1.ln());
        }
    }

    /// Gray-maps bits (length a multiple of bits/symbol) to symbols.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if self.is_gaussian() {
            return Err(Error::Parameter("Gaussian sentinel has no bit mapping".into()));
        }
        if bits.len() % self.bits != 0 {
            return Err(Error::Parameter(format!(
                "{} bits is not a multiple of {} bits/symbol",
                bits.len(),
                self.bits
            )));
        }
        Ok(bits
            .chunks(self.bits)
            .map(|c| {
                let l = c.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
                self.points[self.by_label[l as usize]]
            })
            .collect())
    }

    /// Symbol posterior mean and variance when each label bit has an independent LLR prior.
    pub fn symbol_stats_from_llrs(&self, llrs: &[f64]) -> (Complex64, f64) {
        let q = self.points.len();
        let mut logs = [0.0f64; 64];
        let mut mx = f64::NEG_INFINITY;
        for i in 0..q {
            let mut lp = 0.0;
            for (j, &l) in llrs.iter().enumerate().take(self.bits) {
                let b = (self.labels[i] >> (self.bits - 1 - j)) & 1;
                let x = if b == 0 { l } else { -l };
                // ln sigma(x), stable on both tails
                lp += if x > 0.0 { -(-x).exp().ln_1p() } else { x - x.exp().ln_1p() };
            }
            logs[i] = lp;
            mx = mx.max(lp);
        }
        let mut norm = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for i in 0..q {
            let p = (logs[i] - mx).exp();
            norm += p;
            mean += self.points[i] * p;
            second += p * self.points[i].norm_sqr();
        }
        mean /= norm;
        (mean, (second / norm - mean.norm_sqr()).max(0.0))
    }
}

fn rotation_orbits(points: &[Complex64]) -> Vec<(usize, f64)> {
    let q = points.len();
    let contains = |z: Complex64| points.iter().position(|p| (p - z).norm() < 1e-9);
    let mut order = 1;
    for cand in [q, 8, 4, 2] {
        if cand <= 1 {
            continue;
        }
        let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / cand as f64);
        if points.iter().all(|&p| contains(p * rot).is_some()) {
            order = cand;
            break;
        }
    }
    let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / order as f64);
    let mut seen = vec![false; q];
    let mut orbits = Vec::new();
    for i in 0..q {
        if seen[i] {
            continue;
        }
        let mut z = points[i];
        let mut size = 0;
        for _ in 0..order {
            if let Some(j) = contains(z) {
                if !seen[j] {
                    seen[j] = true;
                    size += 1;
                }
            }
            z *= rot;
        }
        orbits.push((i, size as f64));
    }
    orbits
}

/// Error energy of one real axis with uniform levels `levels` under per-axis noise
/// density `exp(-a^2)/sqrt(pi)` scaled by `1/sqrt(rho)`.
fn pam_mmse(levels: &[f64], rho: f64) -> f64 {
    let sr = rho.sqrt();
    let q = levels.len();
    let mut total = 0.0;
    for &xk in levels {
        let mut logs = vec![0.0; q];
        let f = |a: f64| {
            let mut mx = f64::NEG_INFINITY;
            for (l, &xl) in levels.iter().enumerate() {
                let t = a + sr * (xk - xl);
                logs[l] = -t * t;
                mx = mx.max(logs[l]);
            }
            let mut norm = 0.0;
            let mut num = 0.0;
            for (l, &xl) in levels.iter().enumerate() {
                let p = (logs[l] - mx).exp();
                norm += p;
                num += (xk - xl) * p;
            }
            (-a * a).exp() * (num / norm).powi(2)
        };
        total += integrate(f, -PLANE, PLANE, 1e-14);
    }
    total / (q as f64 * std::f64::consts::PI.sqrt())
}

/// `[0] ++ logspace` when `rho_min == 0`, plain logspace otherwise.
pub fn log_grid(rho_min: f64, rho_max: f64, points: usize) -> Vec<f64> {
    let (lo, count, zero) = if rho_min == 0.0 {
        ((rho_max * 1e-5).min(1e-4), points - 1, true)
    } else {
        (rho_min, points, false)
    };
    let (a, b) = (lo.ln(), rho_max.ln());
    let mut g: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    g[count - 1] = rho_max;
    if zero {
        g.insert(0, 0.0);
    }
    g
}

/// Anything that evaluates an MMSE-type transfer function and its integral.
pub trait MmseFn {
    fn mmse(&self, rho: f64) -> f64;

    fn area(&self, a: f64, b: f64) -> f64 {
        integrate(|r| self.mmse(r), a, b, 1e-12)
    }
}

impl<F: Fn(f64) -> f64> MmseFn for F {
    fn mmse(&self, rho: f64) -> f64 {
        self(rho)
    }
}

/// Tabulated non-increasing map `rho -> mmse`, linear in `ln rho` between positive nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseCurve {
    rho: Vec<f64>,
    values: Vec<f64>,
    exact_gaussian: bool,
}

impl MmseCurve {
    pub fn new(rho: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if rho.is_empty() || rho.len() != values.len() {
            return Err(Error::Parameter("curve grid and values must be non-empty and equal length".into()));
        }
        if rho[0] < 0.0 || rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("curve grid must be non-negative and strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= -1e-12 && **v <= 1.0 + 1e-9)) {
            return Err(Error::Parameter(format!("curve value {v} outside [0,1]")));
        }
        Ok(MmseCurve { rho, values, exact_gaussian: false })
    }

    /// Closed-form `1/(1+rho)` carried with a nominal grid for export.
    pub fn gaussian() -> Self {
        Constellation::new(Modulation::Gaussian).tabulate_mmse(0.0, 1e3, 512).unwrap()
    }

    pub fn is_exact_gaussian(&self) -> bool {
        self.exact_gaussian
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    fn segment(&self, rho: f64) -> usize {
        match self.rho.binary_search_by(|x| x.total_cmp(&rho)) {
            Ok(i) => i.min(self.rho.len() - 2),
            Err(i) => i - 1,
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        if self.exact_gaussian {
            return 1.0 / (1.0 + rho);
        }
        let n = self.rho.len();
        if n == 1 || rho <= self.rho[0] {
            return self.values[0];
        }
        if rho >= self.rho[n - 1] {
            return self.values[n - 1];
        }
        let k = self.segment(rho);
        let (p, q) = (self.rho[k], self.rho[k + 1]);
        let (vp, vq) = (self.values[k], self.values[k + 1]);
        let t = if p == 0.0 { rho / q } else { (rho / p).ln() / (q / p).ln() };
        vp + (vq - vp) * t
    }

    fn piece(p: f64, x: f64, vp: f64, vx: f64) -> f64 {
        let h = x - p;
        if h <= 0.0 {
            return 0.0;
        }
        if p == 0.0 || x / p < 1.0 + 1e-9 {
            return 0.5 * (vp + vx) * h;
        }
        vp * h + (vx - vp) * (x - h / (x / p).ln())
    }

    /// Exact integral of the interpolant over `[0, x]`.
    fn cumulative(&self, x: f64) -> f64 {
        if self.exact_gaussian {
            return x.ln_1p();
        }
        let n = self.rho.len();
        let mut acc = self.values[0] * x.min(self.rho[0]);
        if x <= self.rho[0] {
            return acc;
        }
        for k in 0..n - 1 {
            let (p, q) = (self.rho[k], self.rho[k + 1]);
            if x <= p {
                break;
            }
            let end = x.min(q);
            let vend = if end == q { self.values[k + 1] } else { self.eval(end) };
            acc += Self::piece(p, end, self.values[k], vend);
        }
        if x > self.rho[n - 1] {
            acc += self.values[n - 1] * (x - self.rho[n - 1]);
        }
        acc
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.cumulative(b) - self.cumulative(a)
    }

    /// Zeroes the trailing run of values at or below `floor`.
    pub fn with_vanishing_tail(&self, floor: f64) -> MmseCurve {
        let mut v = self.values.clone();
        for x in v.iter_mut().rev() {
            if *x <= floor {
                *x = 0.0;
            } else {
                break;
            }
        }
        MmseCurve { rho: self.rho.clone(), values: v, exact_gaussian: false }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_with(path, None)
    }

    /// CSV with optional `stderr,trials` columns.
    pub fn write_csv_with(&self, path: &Path, extra: Option<(&[f64], &[usize])>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        match extra {
            None => w.write_record(["rho", "mmse"]).map_err(csv_err)?,
            Some(_) => w.write_record(["rho", "mmse", "stderr", "trials"]).map_err(csv_err)?,
        }
        for i in 0..self.rho.len() {
            let mut rec = vec![format!("{:.17e}", self.rho[i]), format!("{:.17e}", self.values[i])];
            if let Some((se, tr)) = extra {
                rec.push(format!("{:.6e}", se[i]));
                rec.push(tr[i].to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.get(0) != Some("rho") || headers.get(1) != Some("mmse") {
            return Err(Error::Format(format!("expected header rho,mmse in {}", path.display())));
        }
        let mut rho = Vec::new();
        let mut val = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Format(format!("row {}: missing column", i + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", i + 2)))
            };
            rho.push(parse(0)?);
            val.push(parse(1)?);
        }
        MmseCurve::new(rho, val).map_err(|e| Error::Format(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

impl MmseFn for MmseCurve {
    fn mmse(&self, rho: f64) -> f64 {
        self.eval(rho)
    }

    fn area(&self, a: f64, b: f64) -> f64 {
        self.integral(a, b)
    }
}

/// Real BPSK MMSE `1 - E tanh(g + sqrt(g) u)`, `u ~ N(0,1)`.
pub fn bpsk_mmse(gamma: f64) -> f64 {
    let f = |u: f64| (-0.5 * u * u).exp() * (1.0 - (gamma + gamma.sqrt() * u).tanh());
    integrate(f, -12.5, 12.5, 1e-14) / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn qpsk() -> Constellation {
        Constellation::new(Modulation::Qpsk)
    }

    #[test]
    fn unit_power_and_gray() {
        for m in [Modulation::Qpsk, Modulation::Psk8, Modulation::Qam16] {
            let c = Constellation::new(m);
            let p: f64 = c.points().iter().map(|s| s.norm_sqr()).sum::<f64>() / c.points().len() as f64;
            assert!((p - 1.0).abs() < 1e-14);
            // nearest neighbours differ in exactly one bit
            let pts = c.points();
            let dmin = (0..pts.len())
                .flat_map(|i| (0..pts.len()).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| (pts[i] - pts[j]).norm())
                .fold(f64::INFINITY, f64::min);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if i != j && (pts[i] - pts[j]).norm() < dmin + 1e-9 {
                        assert_eq!((c.label(i) ^ c.label(j)).count_ones(), 1, "{m}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_non_unit_power() {
        let pts = vec![Complex64::new(2.0, 0.0), Complex64::new(-2.0, 0.0)];
        assert!(Constellation::from_points("x", pts, vec![0, 1]).is_err());
    }

    #[test]
    fn mmse_at_zero_and_gaussian() {
        for m in [Modulation::Qpsk, Modulation::Psk8, Modulation::Qam16] {
            assert!((Constellation::new(m).mmse_of(0.0).unwrap() - 1.0).abs() < 1e-14);
        }
        let g = Constellation::new(Modulation::Gaussian);
        for &r in &[0.0, 0.3, 5.0] {
            assert_eq!(g.mmse_of(r).unwrap(), 1.0 / (1.0 + r));
        }
    }

    #[test]
    fn qpsk_matches_one_dimensional_tanh_integral() {
        let c = qpsk();
        for &r in &[0.05, 0.5, 1.0, 3.0, 10.0, 30.0] {
            let a = c.mmse_of(r).unwrap();
            let b = bpsk_mmse(r);
            assert!((a - b).abs() < 1e-8, "rho={r}: {a} vs {b}");
        }
    }

    #[test]
    fn qpsk_total_area_is_two_bits() {
        let c = qpsk();
        let curve = c.tabulate_mmse(0.0, 200.0, 600).unwrap();
        let area = curve.integral(0.0, 200.0);
        assert!((area - 2.0 * 2f64.ln()).abs() < 2e-4, "{area}");
    }

    #[test]
    fn plane_and_product_routes_agree() {
        let c = Constellation::new(Modulation::Qam16);
        for &r in &[2.0, 15.0] {
            let (re, im) = c.axes().unwrap();
            let a = pam_mmse(&re, r) + pam_mmse(&im, r);
            let b = c.mmse_adaptive(r);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(Constellation::new(Modulation::Psk8).axes().is_none());
    }

    #[test]
    fn larger_constellation_has_larger_mmse() {
        let q = qpsk().mmse_of(100.0).unwrap();
        let s = Constellation::new(Modulation::Qam16).mmse_of(100.0).unwrap();
        assert!(s > q);
    }

    #[test]
    fn tabulation_interpolation_error() {
        let c = qpsk();
        let curve = c.tabulate_mmse(0.0, 1e3, 512).unwrap();
        assert!(curve.is_monotone(0.0));
        for &r in &[0.0123, 0.37, 1.91, 7.7, 23.0] {
            let d = c.mmse_of(r).unwrap();
            assert!((curve.eval(r) - d).abs() < 1e-4);
        }
        let g = Constellation::new(Modulation::Gaussian).tabulate_mmse(0.0, 10.0, 32).unwrap();
        for (r, v) in g.rho().iter().zip(g.values()) {
            assert_eq!(*v, 1.0 / (1.0 + r));
        }
    }

    #[test]
    fn posterior_edge_cases() {
        let c = qpsk();
        let p = c.points()[2];
        let (m, v) = c.posterior_mean_var(p, 1e6);
        assert!((m - p).norm() < 1e-9 && v < 1e-6);
        let (m, v) = c.posterior_mean_var(Complex64::new(0.0, 0.0), 3.0);
        assert!(m.norm() < 1e-15 && (v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn posterior_variance_averages_to_mmse() {
        let c = qpsk();
        let rho: f64 = 2.0;
        let mut rng = crate::rng::stream_rng(5, crate::rng::Stream::Noise, 0);
        let n = 40_000;
        let sd = (0.5 / rho).sqrt();
        let mut vs = Vec::with_capacity(n);
        for _ in 0..n {
            let x = c.points()[rng.random_range(0..4)];
            let z = Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sd;
            vs.push(c.posterior_mean_var(x + z, rho).1);
        }
        let mean = vs.iter().sum::<f64>() / n as f64;
        let var = vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - c.mmse_of(rho).unwrap()).abs() < 3.0 * se);
    }

    #[test]
    fn llr_sign_and_symmetry() {
        let c = qpsk();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let l = c.bit_llrs(Complex64::new(h, h), 50.0);
        assert!(l.iter().all(|&x| x > 20.0));
        for m in [Modulation::Qpsk, Modulation::Psk8] {
            let l = Constellation::new(m).bit_llrs(Complex64::new(0.0, 0.0), 3.0);
            assert!(l.iter().all(|&x| x.abs() < 1e-12), "{m}: {l:?}");
        }
    }

    #[test]
    fn llr_entropy_matches_mutual_information() {
        // for Gray QPSK the two bits are independent, so sum of bit entropies = H(x|r) = 2 bits - I
        let c = qpsk();
        let rho: f64 = 1.0;
        let curve = c.tabulate_mmse(0.0, 1.0, 400).unwrap();
        let i_bits = curve.integral(0.0, rho) / 2f64.ln();
        let mut rng = crate::rng::stream_rng(6, crate::rng::Stream::Noise, 0);
        let n = 40_000;
        let sd = (0.5 / rho).sqrt();
        let mut acc = Vec::with_capacity(n);
        for _ in 0..n {
            let x = c.points()[rng.random_range(0..4)];
            let z = Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sd;
            let h: f64 = c
                .bit_llrs(x + z, rho)
                .iter()
                .map(|&l| {
                    let p = 1.0 / (1.0 + (-l).exp());
                    let q = 1.0 - p;
                    -(p * p.max(1e-300).log2() + q * q.max(1e-300).log2())
                })
                .sum();
            acc.push(h);
        }
        let mean = acc.iter().sum::<f64>() / n as f64;
        let sd_h = (acc.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - (2.0 - i_bits)).abs() < 4.0 * sd_h / (n as f64).sqrt() + 1e-3);
    }

    #[test]
    fn modulate_and_symbol_stats() {
        let c = Constellation::new(Modulation::Qam16);
        let bits = [1u8, 0, 0, 1];
        let s = c.modulate(&bits).unwrap()[0];
        let llrs: Vec<f64> = bits.iter().map(|&b| if b == 0 { 40.0 } else { -40.0 }).collect();
        let (m, v) = c.symbol_stats_from_llrs(&llrs);
        assert!((m - s).norm() < 1e-12 && v < 1e-12);
        let (m, v) = c.symbol_stats_from_llrs(&[0.0; 4]);
        assert!(m.norm() < 1e-14 && (v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn curve_integral_is_exact_for_interpolant() {
        let c = MmseCurve::new(vec![0.0, 0.5, 2.0, 8.0], vec![1.0, 0.6, 0.3, 0.0]).unwrap();
        let numeric = integrate(|r| c.eval(r), 0.0, 8.0, 1e-12);
        assert!((c.integral(0.0, 8.0) - numeric).abs() < 1e-10);
        assert!((c.integral(0.7, 3.1) - integrate(|r| c.eval(r), 0.7, 3.1, 1e-12)).abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let c = qpsk().tabulate_mmse(0.0, 10.0, 20).unwrap();
        c.write_csv(&p).unwrap();
        assert_eq!(MmseCurve::read_csv(&p).unwrap(), c);
    }
}
