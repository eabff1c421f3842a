//! Right-unitarily-invariant channel matrices and their spectra.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub type CMat = DMatrix<Complex64>;

const MAGIC: &[u8; 8] = b"GMUCHAN1";

/// Linear and dB views of one SNR value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPoint {
    pub snr: f64,
    pub snr_db: f64,
}

impl SnrPoint {
    pub fn from_db(db: f64) -> Result<Self> {
        if !db.is_finite() {
            return Err(Error::Parameter(format!("snr_db must be finite, got {db}")));
        }
        Ok(SnrPoint { snr: 10f64.powf(db / 10.0), snr_db: db })
    }

    pub fn from_linear(snr: f64) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::Parameter(format!("snr must be positive, got {snr}")));
        }
        Ok(SnrPoint { snr, snr_db: 10.0 * snr.log10() })
    }
}

/// Thin singular factors `A = U diag(e) Vt`, `U` is M×T and `Vt` is T×N.
#[derive(Debug, Clone)]
pub struct Factors {
    pub u: CMat,
    pub sv: Vec<f64>,
    pub v_t: CMat,
}

#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    entries: CMat,
    spectrum: Vec<f64>,
    factors: Option<Factors>,
}

impl ChannelMatrix {
    /// Wraps an arbitrary matrix; the spectrum comes from its SVD. No normalization is applied.
    pub fn from_entries(entries: CMat) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::Parameter("empty channel matrix".into()));
        }
        let f = thin_svd(&entries);
        Ok(ChannelMatrix { spectrum: f.sv.clone(), entries, factors: Some(f) })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn rank(&self) -> usize {
        self.spectrum.len()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Singular factors; reuses generation-time factors when available.
    pub fn decompose(&self) -> Factors {
        match &self.factors {
            Some(f) => f.clone(),
            None => thin_svd(&self.entries),
        }
    }

    /// Sub-matrix formed by the listed columns.
    pub fn columns(&self, idx: &[usize]) -> Result<CMat> {
        let n = self.n();
        if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
            return Err(Error::Parameter(format!("column {bad} out of range (N={n})")));
        }
        Ok(self.entries.select_columns(idx.iter()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.rank() + 16 * self.m() * self.n());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.m() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n() as u32).to_le_bytes());
        for e in &self.spectrum {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for i in 0..self.m() {
            for j in 0..self.n() {
                let z = self.entries[(i, j)];
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |len: usize, what: &str| -> Result<&[u8]> {
            if pos + len > bytes.len() {
                return Err(Error::Format(format!(
                    "truncated file: need {len} bytes for {what} at byte {pos}, file has {}",
                    bytes.len()
                )));
            }
            let s = &bytes[pos..pos + len];
            pos += len;
            Ok(s)
        };
        if take(8, "magic")? != MAGIC {
            return Err(Error::Format("bad magic bytes (expected GMUCHAN1)".into()));
        }
        let m = u32::from_le_bytes(take(4, "M")?.try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(take(4, "N")?.try_into().unwrap()) as usize;
        if m == 0 || n == 0 {
            return Err(Error::Format(format!("invalid dimensions {m}x{n}")));
        }
        let t = m.min(n);
        let mut spectrum = Vec::with_capacity(t);
        for _ in 0..t {
            spectrum.push(f64::from_le_bytes(take(8, "spectrum")?.try_into().unwrap()));
        }
        let mut entries = CMat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let re = f64::from_le_bytes(take(8, "entry")?.try_into().unwrap());
                let im = f64::from_le_bytes(take(8, "entry")?.try_into().unwrap());
                entries[(i, j)] = Complex64::new(re, im);
            }
        }
        if pos != bytes.len() {
            return Err(Error::Format(format!(
                "dimension mismatch: {} trailing bytes after byte {pos}",
                bytes.len() - pos
            )));
        }
        validate_spectrum(&spectrum)?;
        Ok(ChannelMatrix { entries, spectrum, factors: None })
    }

    pub fn save_spectrum_txt(&self, path: &Path) -> Result<()> {
        let mut s = format!("# {} {}\n", self.m(), self.n());
        for e in &self.spectrum {
            s.push_str(&format!("{e:.17e}\n"));
        }
        fs::write(path, s)?;
        Ok(())
    }
}

/// Spectrum-only view loaded from the text variant: `(M, N, e)`.
pub fn load_spectrum_txt(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty spectrum file".into()))?;
    let dims: Vec<usize> = header
        .trim_start_matches('#')
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad header {header:?}: {e}")))?;
    if dims.len() != 2 || !header.starts_with('#') {
        return Err(Error::Format(format!("bad header {header:?}, expected '# M N'")));
    }
    let mut e = Vec::new();
    for (k, l) in lines.enumerate() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        e.push(l.parse::<f64>().map_err(|err| Error::Format(format!("line {}: {err}", k + 2)))?);
    }
    if e.len() != dims[0].min(dims[1]) {
        return Err(Error::Format(format!(
            "expected {} values, found {}",
            dims[0].min(dims[1]),
            e.len()
        )));
    }
    validate_spectrum(&e)?;
    Ok((dims[0], dims[1], e))
}

fn validate_spectrum(e: &[f64]) -> Result<()> {
    if e.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Format("spectrum has negative or non-finite values".into()));
    }
    if e.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Format("spectrum not sorted non-increasing".into()));
    }
    Ok(())
}

fn thin_svd(a: &CMat) -> Factors {
    let svd = a.clone().svd(true, true);
    let t = a.nrows().min(a.ncols());
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let u0 = svd.u.unwrap();
    let vt0 = svd.v_t.unwrap();
    let u = u0.select_columns(order.iter());
    let v_t = vt0.select_rows(order.iter());
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    Factors { u, sv, v_t }
}

/// Geometric singular-value profile with `e_i / e_{i+1} = kappa^(1/T)` and `sum e_i^2 = N`.
pub fn geometric_spectrum(m: usize, n: usize, kappa: f64) -> Result<Vec<f64>> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter(format!("invalid dimensions {m}x{n}")));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::Parameter(format!("kappa must be >= 1, got {kappa}")));
    }
    let t = m.min(n);
    let ratio = kappa.powf(1.0 / t as f64);
    let raw: Vec<f64> = (0..t).map(|i| ratio.powi(-(i as i32))).collect();
    let s2: f64 = raw.iter().map(|x| x * x).sum();
    let scale = (n as f64 / s2).sqrt();
    Ok(raw.into_iter().map(|x| x * scale).collect())
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * h, im * h)
    })
}

/// Haar-distributed unitary via QR with the diagonal phase fix.
pub fn haar_unitary<R: Rng>(dim: usize, rng: &mut R) -> CMat {
    let qr = gaussian_matrix(dim, dim, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn gen_ill_conditioned(m: usize, n: usize, kappa: f64, seed: u64) -> Result<ChannelMatrix> {
    let e = geometric_spectrum(m, n, kappa)?;
    let mut rng = stream_rng(seed, Stream::Channel, 0);
    let t = e.len();
    let u_full = haar_unitary(m, &mut rng);
    let v_full = haar_unitary(n, &mut rng);
    let u = u_full.columns(0, t).into_owned();
    let v_t = v_full.rows(0, t).into_owned();
    let mut us = u.clone();
    for (j, ej) in e.iter().enumerate() {
        for i in 0..m {
            us[(i, j)] *= *ej;
        }
    }
    let entries = &us * &v_t;
    Ok(ChannelMatrix { entries, spectrum: e.clone(), factors: Some(Factors { u, sv: e, v_t }) })
}

pub fn gen_iid_gaussian(m: usize, n: usize, seed: u64) -> Result<ChannelMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter(format!("invalid dimensions {m}x{n}")));
    }
    let mut rng = stream_rng(seed, Stream::Channel, 1);
    let mut a = gaussian_matrix(m, n, &mut rng);
    let fro2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    a *= Complex64::new((n as f64 / fro2).sqrt(), 0.0);
    let f = thin_svd(&a);
    let s2: f64 = f.sv.iter().map(|x| x * x).sum();
    let fix = (n as f64 / s2).sqrt();
    let sv: Vec<f64> = f.sv.iter().map(|x| x * fix).collect();
    Ok(ChannelMatrix { entries: a, spectrum: sv.clone(), factors: Some(Factors { sv, ..f }) })
}

/// `(1/N) tr[(snr A^H A + rho I)^-1]` from the spectrum.
pub fn omega_l(spectrum: &[f64], n: usize, snr: f64, rho: f64) -> Result<f64> {
    let t = spectrum.len();
    if rho < 0.0 {
        return Err(Error::Parameter(format!("rho must be >= 0, got {rho}")));
    }
    if rho == 0.0 && (t < n || spectrum.iter().any(|&e| e == 0.0)) {
        return Err(Error::Numeric("singular trace at rho = 0 with rank-deficient channel".into()));
    }
    let mut acc: f64 = spectrum.iter().map(|e| 1.0 / (snr * e * e + rho)).sum();
    if t < n {
        acc += (n - t) as f64 / rho;
    }
    Ok(acc / n as f64)
}
