//! Iterative block receivers: MU-OAMP/VAMP with APP decoders and the Turbo-LMMSE baseline.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{CMat, ChannelMatrix, SnrPoint};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::ldpc::{LdpcCode, SpaDecoder};

/// Orthogonalization coefficients above this magnitude trigger damping.
pub const C_GUARD: f64 = 1e3;
pub const DAMPING: f64 = 0.7;
const V_DONE: f64 = 1e-13;

/// LMMSE detector for one channel realization, factored once.
#[derive(Debug, Clone)]
pub struct LinearDetector {
    u_h: CMat,
    v_t: CMat,
    v: CMat,
    sv: Vec<f64>,
    n: usize,
    m: usize,
    snr: f64,
}

impl LinearDetector {
    pub fn new(a: &ChannelMatrix, snr: SnrPoint) -> Self {
        let f = a.decompose();
        LinearDetector {
            u_h: f.u.adjoint(),
            v: f.v_t.adjoint(),
            v_t: f.v_t,
            sv: f.sv,
            n: a.n(),
            m: a.m(),
            snr: snr.snr,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `(1/N) tr[(snr A^H A + rho I)^-1]`.
    pub fn omega_l(&self, rho: f64) -> f64 {
        let t = self.sv.len();
        let mut acc: f64 = self.sv.iter().map(|e| 1.0 / (self.snr * e * e + rho)).sum();
        acc += (self.n - t) as f64 / rho;
        acc / self.n as f64
    }

    /// `[snr A^H A + I/v_s]^-1 [snr A^H y + s/v_s]` for every column, and its per-entry MSE.
    pub fn lmmse(&self, y: &CMat, s: &CMat, v_s: f64) -> Result<(CMat, f64)> {
        if y.nrows() != self.m || s.nrows() != self.n || y.ncols() != s.ncols() {
            return Err(Error::Parameter(format!(
                "block shapes {}x{} / {}x{} do not match a {}x{} channel",
                y.nrows(),
                y.ncols(),
                s.nrows(),
                s.ncols(),
                self.m,
                self.n
            )));
        }
        if !(v_s > 0.0) {
            return Err(Error::Numeric(format!("v_s must be positive, got {v_s}")));
        }
        let u = 1.0 / v_s;
        // work in the right singular basis: s + V diag(snr e / (snr e^2 + u)) (U^H y - e V^H s)
        let mut z = &self.u_h * y;
        let vs = &self.v_t * s;
        for (i, &e) in self.sv.iter().enumerate() {
            let g = self.snr * e / (self.snr * e * e + u);
            for j in 0..z.ncols() {
                z[(i, j)] = (z[(i, j)] - vs[(i, j)] * e) * g;
            }
        }
        Ok((s + &self.v * z, self.omega_l(u)))
    }
}

/// Returns `c raw + (1 - c) input` with `c = v / (v - omega)`, the coefficient, and whether
/// damping replaced the combination.
pub fn orthogonalize(raw: &CMat, input: &CMat, v: f64, omega: f64) -> Result<(CMat, f64, bool)> {
    let d = v - omega;
    if d.abs() <= 1e-12 * v.abs() {
        return Err(Error::Numeric(format!("orthogonalization denominator vanished (v={v}, omega={omega})")));
    }
    let c = v / d;
    if c.abs() > C_GUARD {
        return Ok((raw * Complex64::new(DAMPING, 0.0) + input * Complex64::new(1.0 - DAMPING, 0.0), c, true));
    }
    Ok((raw * Complex64::new(c, 0.0) + input * Complex64::new(1.0 - c, 0.0), c, false))
}

/// Which codeword symbols sit on which antenna: user `u` in group `g` spreads its
/// symbols antenna-major over its antennas and `slots` channel uses.
#[derive(Debug, Clone)]
pub struct Layout {
    pub slots: usize,
    pub users: Vec<UserMap>,
    pub n_antennas: usize,
}

#[derive(Debug, Clone)]
pub struct UserMap {
    pub group: usize,
    pub antennas: Vec<usize>,
}

impl Layout {
    /// Consecutive antennas; `group_antennas[g]` must be a multiple of `per_user`.
    pub fn uniform(group_antennas: &[usize], per_user: usize, slots: usize) -> Result<Self> {
        if per_user == 0 || slots == 0 {
            return Err(Error::Parameter("antennas per user and slots must be positive".into()));
        }
        let mut users = Vec::new();
        let mut next = 0;
        for (g, &na) in group_antennas.iter().enumerate() {
            if na % per_user != 0 {
                return Err(Error::Parameter(format!("group {g}: {na} antennas not divisible by {per_user}")));
            }
            for _ in 0..na / per_user {
                users.push(UserMap { group: g, antennas: (next..next + per_user).collect() });
                next += per_user;
            }
        }
        Ok(Layout { slots, users, n_antennas: next })
    }

    pub fn groups(&self) -> usize {
        self.users.iter().map(|u| u.group + 1).max().unwrap_or(0)
    }

    pub fn symbols_per_user(&self, u: usize) -> usize {
        self.users[u].antennas.len() * self.slots
    }

    /// Places per-user symbol streams into an `N x L` block.
    pub fn scatter(&self, per_user: &[Vec<Complex64>]) -> Result<CMat> {
        if per_user.len() != self.users.len() {
            return Err(Error::Parameter(format!("{} streams for {} users", per_user.len(), self.users.len())));
        }
        let mut x = CMat::zeros(self.n_antennas, self.slots);
        for (u, syms) in per_user.iter().enumerate() {
            if syms.len() != self.symbols_per_user(u) {
                return Err(Error::Parameter(format!("user {u}: {} symbols, expected {}", syms.len(), self.symbols_per_user(u))));
            }
            for (j, &s) in syms.iter().enumerate() {
                x[(self.users[u].antennas[j / self.slots], j % self.slots)] = s;
            }
        }
        Ok(x)
    }

    pub fn gather(&self, x: &CMat, u: usize) -> Vec<Complex64> {
        let um = &self.users[u];
        (0..self.symbols_per_user(u)).map(|j| x[(um.antennas[j / self.slots], j % self.slots)]).collect()
    }

    fn put(&self, x: &mut CMat, u: usize, vals: &[Complex64]) {
        let um = &self.users[u];
        for (j, &s) in vals.iter().enumerate() {
            x[(um.antennas[j / self.slots], j % self.slots)] = s;
        }
    }

    fn check(&self, codes: &[&LdpcCode], cons: &Constellation) -> Result<()> {
        if codes.len() < self.groups() {
            return Err(Error::Parameter(format!("{} codes for {} groups", codes.len(), self.groups())));
        }
        for (u, um) in self.users.iter().enumerate() {
            let need = self.symbols_per_user(u) * cons.bits_per_symbol();
            if codes[um.group].n() != need {
                return Err(Error::Parameter(format!(
                    "user {u}: code length {} but {} antennas x {} slots carry {need} bits",
                    codes[um.group].n(),
                    um.antennas.len(),
                    self.slots
                )));
            }
        }
        Ok(())
    }
}

/// Nonlinear stage of the loop.
pub enum Denoiser<'a> {
    /// Symbol-by-symbol posterior mean over the constellation (no code).
    Symbol,
    /// Unit-variance Gaussian prior.
    Gaussian,
    /// Demapper plus sum-product decoding per user.
    Coded { codes: Vec<&'a LdpcCode>, layout: &'a Layout, inner_iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverKind {
    /// A-posteriori decoder output with orthogonalization.
    OampVamp,
    /// Extrinsic decoder output, no orthogonalization.
    TurboLmmse,
}

#[derive(Debug, Clone, Copy)]
pub struct ReceiverConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig { max_iters: 30, tol: 1e-6 }
    }
}

/// Transmitted block, used only for diagnostics.
pub struct Truth<'a> {
    pub x: &'a CMat,
    pub bits: Option<&'a [Vec<u8>]>,
}

#[derive(Debug, Clone, Default)]
pub struct TraceRow {
    pub iteration: usize,
    pub v_s: f64,
    pub v_r: f64,
    /// `(1/NL) ||r - x||^2` when the truth is known.
    pub emp_v_r: Option<f64>,
    pub emp_v_s: Option<f64>,
    /// Normalized correlation between the LD input and output errors.
    pub corr_ld: Option<f64>,
    pub group_ber: Vec<f64>,
    pub group_var: Vec<f64>,
    pub damped: bool,
}

#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    /// Hard decisions per user (coded denoiser only).
    pub bits: Vec<Vec<u8>>,
    pub estimate: CMat,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub diverged: bool,
    pub events: Vec<String>,
}

impl ReceiverOutput {
    pub fn trace_csv(&self) -> String {
        let g = self.trace.first().map_or(0, |t| t.group_ber.len());
        let mut s = String::from("iteration,v_s,v_r");
        for i in 0..g {
            let _ = write!(s, ",ber_{}", i + 1);
        }
        s.push('\n');
        for t in &self.trace {
            let _ = write!(s, "{},{:e},{:e}", t.iteration, t.v_s, t.v_r);
            for b in &t.group_ber {
                let _ = write!(s, ",{b:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.trace_csv())?;
        Ok(())
    }
}

fn err_power(a: &CMat, x: &CMat) -> f64 {
    a.iter().zip(x.iter()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>() / a.len() as f64
}

fn err_corr(a: &CMat, b: &CMat, x: &CMat) -> f64 {
    let mut cross = Complex64::new(0.0, 0.0);
    let (mut pa, mut pb) = (0.0, 0.0);
    for ((p, q), t) in a.iter().zip(b.iter()).zip(x.iter()) {
        let (ea, eb) = (p - t, q - t);
        cross += ea.conj() * eb;
        pa += ea.norm_sqr();
        pb += eb.norm_sqr();
    }
    if pa == 0.0 || pb == 0.0 {
        0.0
    } else {
        cross.norm() / (pa * pb).sqrt()
    }
}

struct NldOut {
    mean: CMat,
    var: f64,
    group_var: Vec<f64>,
    bits: Vec<Vec<u8>>,
    all_ok: bool,
}

fn denoise(
    den: &Denoiser,
    kind: ReceiverKind,
    cons: &Constellation,
    r: &CMat,
    rho: f64,
) -> Result<NldOut> {
    match den {
        Denoiser::Gaussian => {
            // the extrinsic message of an uncoded Gaussian prior is the prior itself
            let (g, v) = match kind {
                ReceiverKind::OampVamp => (rho / (1.0 + rho), 1.0 / (1.0 + rho)),
                ReceiverKind::TurboLmmse => (0.0, 1.0),
            };
            Ok(NldOut { mean: r * Complex64::new(g, 0.0), var: v, group_var: vec![v], bits: vec![], all_ok: false })
        }
        Denoiser::Symbol => {
            if kind == ReceiverKind::TurboLmmse {
                let v = cons.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / cons.points().len() as f64;
                return Ok(NldOut { mean: CMat::zeros(r.nrows(), r.ncols()), var: v, group_var: vec![v], bits: vec![], all_ok: false });
            }
            let mut mean = CMat::zeros(r.nrows(), r.ncols());
            let mut acc = 0.0;
            for (o, &z) in mean.iter_mut().zip(r.iter()) {
                let (m, v) = cons.posterior_mean_var(z, rho);
                *o = m;
                acc += v;
            }
            let v = acc / r.len() as f64;
            Ok(NldOut { mean, var: v, group_var: vec![v], bits: vec![], all_ok: false })
        }
        Denoiser::Coded { codes, layout, inner_iters } => {
            let bps = cons.bits_per_symbol();
            let per_user: Vec<(Vec<Complex64>, f64, Vec<u8>, bool)> = (0..layout.users.len())
                .into_par_iter()
                .map(|u| {
                    let code = codes[layout.users[u].group];
                    let rs = layout.gather(r, u);
                    let mut ch = vec![0.0; rs.len() * bps];
                    for (j, &z) in rs.iter().enumerate() {
                        cons.bit_llrs_into(z, rho, &mut ch[j * bps..(j + 1) * bps]);
                    }
                    let out = SpaDecoder::new(code, *inner_iters).decode(&ch);
                    let msg: Vec<f64> = match kind {
                        ReceiverKind::OampVamp => out.posterior.clone(),
                        ReceiverKind::TurboLmmse => out.posterior.iter().zip(&ch).map(|(p, c)| p - c).collect(),
                    };
                    let mut means = Vec::with_capacity(rs.len());
                    let mut vsum = 0.0;
                    for j in 0..rs.len() {
                        let (m, v) = cons.symbol_stats_from_llrs(&msg[j * bps..(j + 1) * bps]);
                        means.push(m);
                        vsum += v;
                    }
                    (means, vsum, out.bits, out.converged)
                })
                .collect();
            let mut mean = CMat::zeros(r.nrows(), r.ncols());
            let g = layout.groups();
            let mut gsum = vec![0.0; g];
            let mut gcnt = vec![0usize; g];
            let mut bits = Vec::with_capacity(per_user.len());
            let mut all_ok = true;
            for (u, (m, vs, b, ok)) in per_user.into_iter().enumerate() {
                layout.put(&mut mean, u, &m);
                let grp = layout.users[u].group;
                gsum[grp] += vs;
                gcnt[grp] += m.len();
                bits.push(b);
                all_ok &= ok;
            }
            let total: usize = gcnt.iter().sum();
            let var = gsum.iter().sum::<f64>() / total as f64;
            let group_var = gsum.iter().zip(&gcnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
            Ok(NldOut { mean, var, group_var, bits, all_ok })
        }
    }
}

/// Runs the LD/NLD loop on one received block `y` (`M x L`).
pub fn run_receiver(
    det: &LinearDetector,
    y: &CMat,
    cons: &Constellation,
    den: &Denoiser,
    kind: ReceiverKind,
    cfg: &ReceiverConfig,
    truth: Option<&Truth>,
) -> Result<ReceiverOutput> {
    if let Denoiser::Coded { codes, layout, .. } = den {
        if layout.n_antennas != det.n() || layout.slots != y.ncols() {
            return Err(Error::Parameter(format!(
                "layout covers {} antennas x {} slots, block is {} x {}",
                layout.n_antennas,
                layout.slots,
                det.n(),
                y.ncols()
            )));
        }
        layout.check(codes, cons)?;
    }
    if cfg.max_iters == 0 {
        return Err(Error::Parameter("max_iters must be positive".into()));
    }
    let l = y.ncols();
    let mut s = CMat::zeros(det.n(), l);
    let mut v_s = 1.0f64;
    let mut trace = Vec::new();
    let mut events = Vec::new();
    let mut bits = Vec::new();
    let (mut converged, mut diverged) = (false, false);
    let mut rising = 0usize;
    let mut prev_vr = f64::INFINITY;

    for it in 1..=cfg.max_iters {
        let mut row = TraceRow { iteration: it, ..Default::default() };
        let (f, omega) = det.lmmse(y, &s, v_s)?;
        // both receivers combine the LMMSE output extrinsically
        let (r, c_l, damped_l) = orthogonalize(&f, &s, v_s, omega)?;
        if damped_l {
            events.push(format!("iteration {it}: LD coefficient {c_l:.3e} damped"));
        }
        let v_r = 1.0 / (1.0 / omega - 1.0 / v_s);
        if !(v_r > 0.0 && v_r.is_finite()) {
            return Err(Error::Numeric(format!("iteration {it}: LD output variance {v_r}")));
        }
        if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric(format!("iteration {it}: non-finite LD message")));
        }
        if let Some(t) = truth {
            row.emp_v_r = Some(err_power(&r, t.x));
            row.corr_ld = Some(err_corr(&s, &r, t.x));
        }
        let rho = 1.0 / v_r;
        let nld = denoise(den, kind, cons, &r, rho)?;
        if !nld.bits.is_empty() {
            bits = nld.bits;
        }
        row.group_var = nld.group_var;
        let (s_new, v_new) = match kind {
            ReceiverKind::TurboLmmse => (nld.mean, nld.var),
            ReceiverKind::OampVamp => {
                if nld.var <= V_DONE {
                    (nld.mean, 0.0)
                } else {
                    let (m, c_c, damped) = orthogonalize(&nld.mean, &r, v_r, nld.var)?;
                    if damped {
                        events.push(format!("iteration {it}: NLD coefficient {c_c:.3e} damped"));
                        row.damped = true;
                    }
                    let inv = 1.0 / nld.var - rho;
                    let v = if damped || inv <= 0.0 { v_s.max(nld.var) } else { 1.0 / inv };
                    (m, v)
                }
            }
        };
        row.damped |= damped_l;
        row.v_r = v_r;
        row.v_s = v_new;
        if let Some(t) = truth {
            row.emp_v_s = Some(err_power(&s_new, t.x));
            if let (Some(tb), false) = (t.bits, bits.is_empty()) {
                if let Denoiser::Coded { layout, .. } = den {
                    let g = layout.groups();
                    let mut e = vec![0usize; g];
                    let mut n = vec![0usize; g];
                    for (u, (b, tr)) in bits.iter().zip(tb).enumerate() {
                        let grp = layout.users[u].group;
                        e[grp] += b.iter().zip(tr).filter(|(a, c)| a != c).count();
                        n[grp] += tr.len();
                    }
                    row.group_ber = e.iter().zip(&n).map(|(&e, &n)| e as f64 / n.max(1) as f64).collect();
                }
            }
        }
        trace.push(row);
        let change = (v_new - v_s).abs() / v_s.max(1e-300);
        s = s_new;
        v_s = v_new;
        if nld.all_ok || v_s <= V_DONE {
            converged = true;
            break;
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
        if v_r > prev_vr {
            rising += 1;
            if rising >= 3 {
                diverged = true;
                events.push(format!("iteration {it}: v_r rose three times in a row"));
                break;
            }
        } else {
            rising = 0;
        }
        prev_vr = v_r;
    }
    Ok(ReceiverOutput { bits, estimate: s, trace, converged, diverged, events })
}

pub fn mu_oamp_vamp(
    det: &LinearDetector,
    y: &CMat,
    cons: &Constellation,
    den: &Denoiser,
    cfg: &ReceiverConfig,
    truth: Option<&Truth>,
) -> Result<ReceiverOutput> {
    run_receiver(det, y, cons, den, ReceiverKind::OampVamp, cfg, truth)
}

pub fn turbo_lmmse(
    det: &LinearDetector,
    y: &CMat,
    cons: &Constellation,
    den: &Denoiser,
    cfg: &ReceiverConfig,
    truth: Option<&Truth>,
) -> Result<ReceiverOutput> {
    run_receiver(det, y, cons, den, ReceiverKind::TurboLmmse, cfg, truth)
}

/// State-evolution trajectory of the uncoded loop: `(v_s, v_r)` per iteration.
pub fn se_trajectory(pair: &crate::se::TransferPair, omega: &dyn crate::constellation::MmseFn, iters: usize) -> Vec<(f64, f64)> {
    let mut v_s = 1.0;
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let rho = pair.phi_l(v_s);
        let o = omega.mmse(rho);
        let inv = 1.0 / o - rho;
        let v_new = if inv > 0.0 { 1.0 / inv } else { 0.0 };
        out.push((v_new, 1.0 / rho));
        v_s = v_new;
        if v_s <= V_DONE {
            break;
        }
    }
    out
}

/// `y = A x + n` with `n ~ CN(0, 1/snr)` per entry.
pub fn transmit<R: rand::Rng>(a: &CMat, x: &CMat, snr: SnrPoint, rng: &mut R) -> CMat {
    let sd = (0.5 / snr.snr).sqrt();
    let mut y = a * x;
    for z in y.iter_mut() {
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        *z += Complex64::new(re * sd, im * sd);
    }
    y
}
