use std::path::Path;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::decoder::SpaDecoder;
use super::degree::DegreeDistribution;
use super::graph::{build_graph, LdpcCode};
use crate::constellation::{Constellation, MmseCurve};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Decoder iteration cap used during measurement.
pub const MEASURE_ITERS: usize = 200;
/// Iterations without syndrome progress before a measurement decode gives up.
pub const STALL_WINDOW: usize = 25;

#[derive(Debug, Clone)]
pub struct TransferCurveEstimate {
    pub curve: MmseCurve,
    pub stderr: Vec<f64>,
    pub trials: Vec<usize>,
    /// Fraction of trials whose decoder satisfied every check.
    pub converged: Vec<f64>,
    pub mean_iterations: Vec<f64>,
}

impl TransferCurveEstimate {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.curve.write_csv_with(path, Some((&self.stderr, &self.trials)))
    }

    /// Adjacent nodes that rise by more than `k` combined standard errors.
    pub fn monotonicity_violations(&self, k: f64) -> Vec<usize> {
        let v = self.curve.values();
        (1..v.len())
            .filter(|&i| v[i] - v[i - 1] > k * (self.stderr[i].powi(2) + self.stderr[i - 1].powi(2)).sqrt() + 1e-15)
            .collect()
    }
}

/// One trial: per-symbol mean squared APP error and convergence flag.
fn trial(code: &LdpcCode, cons: &Constellation, rho: f64, seed: u64, index: u64) -> (f64, bool, usize) {
    let bits = cons.bits_per_symbol();
    let cw = code.random_codeword(&mut stream_rng(seed, Stream::Data, index));
    let x = cons.modulate(&cw).expect("length checked by caller");
    let mut rng = stream_rng(seed, Stream::Noise, index);
    let mut llr = vec![0.0; code.n()];
    if rho > 0.0 {
        let nd = Normal::new(0.0, (0.5 / rho).sqrt()).unwrap();
        for (s, out) in x.iter().zip(llr.chunks_mut(bits)) {
            let r = s + Complex64::new(nd.sample(&mut rng), nd.sample(&mut rng));
            cons.bit_llrs_into(r, rho, out);
        }
    }
    let out = SpaDecoder::new(code, MEASURE_ITERS).with_stall_window(STALL_WINDOW).with_saturation(true).decode(&llr);
    let mut err = 0.0;
    for (s, l) in x.iter().zip(out.posterior.chunks(bits)) {
        let (m, _) = cons.symbol_stats_from_llrs(l);
        err += (s - m).norm_sqr();
    }
    (err / x.len() as f64, out.converged, out.iterations)
}

/// Measures the APP decoder MMSE curve of one code instance on `r = x + rho^{-1/2} z`.
pub fn measure_code_curve(
    code: &LdpcCode,
    cons: &Constellation,
    rho_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TransferCurveEstimate> {
    if cons.is_gaussian() {
        return Err(Error::Parameter("coded curves need a discrete constellation".into()));
    }
    if code.n() % cons.bits_per_symbol() != 0 {
        return Err(Error::Parameter(format!(
            "code length {} is not a multiple of {} bits/symbol",
            code.n(),
            cons.bits_per_symbol()
        )));
    }
    if trials == 0 || rho_grid.is_empty() {
        return Err(Error::Parameter("need at least one trial and one grid node".into()));
    }
    let mut grid: Vec<f64> = Vec::with_capacity(rho_grid.len() + 1);
    if rho_grid[0] > 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(rho_grid);
    let mut vals = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    let mut tr = Vec::with_capacity(grid.len());
    let mut conv = Vec::with_capacity(grid.len());
    let mut iters = Vec::with_capacity(grid.len());
    for (i, &rho) in grid.iter().enumerate() {
        if rho == 0.0 {
            vals.push(1.0);
            se.push(0.0);
            tr.push(0);
            conv.push(0.0);
            iters.push(0.0);
            continue;
        }
        let res: Vec<(f64, bool, usize)> = (0..trials)
            .into_par_iter()
            .map(|t| trial(code, cons, rho, seed, ((i as u64) << 32) | t as u64))
            .collect();
        let mean = res.iter().map(|r| r.0).sum::<f64>() / trials as f64;
        let var = if trials > 1 {
            res.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
        } else {
            0.0
        };
        vals.push(mean.clamp(0.0, 1.0));
        se.push((var / trials as f64).sqrt());
        tr.push(trials);
        conv.push(res.iter().filter(|r| r.1).count() as f64 / trials as f64);
        iters.push(res.iter().map(|r| r.2 as f64).sum::<f64>() / trials as f64);
    }
    Ok(TransferCurveEstimate { curve: MmseCurve::new(grid, vals)?, stderr: se, trials: tr, converged: conv, mean_iterations: iters })
}

/// Builds a length-`n` code and measures its curve.
pub fn measure_transfer_curve(
    dd: &DegreeDistribution,
    cons: &Constellation,
    rho_grid: &[f64],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<TransferCurveEstimate> {
    let code = build_graph(dd, n, seed)?;
    measure_code_curve(&code, cons, rho_grid, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Modulation;
    use crate::ldpc::ga_curve;

    #[test]
    fn regular_curve_properties() {
        let dd = DegreeDistribution::regular(3, 6).unwrap();
        let q = Constellation::new(Modulation::Qpsk);
        let om = q.default_curve().unwrap();
        let grid: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
        let est = measure_transfer_curve(&dd, &q, &grid, 2000, 40, 3).unwrap();
        let v = est.curve.values();
        assert_eq!(v[0], 1.0);
        assert!(*v.last().unwrap() < 1e-9);
        for (r, x) in est.curve.rho().iter().zip(v).skip(1) {
            assert!(*x < om.eval(*r), "decoding gain at {r}");
        }
        assert!(est.monotonicity_violations(2.0).is_empty());
        // GA surrogate tracks the measured curve away from the waterfall
        let ga = ga_curve(&dd, est.curve.rho()).unwrap();
        for (k, r) in est.curve.rho().iter().enumerate() {
            if *r <= 0.75 {
                assert!((ga[k] - v[k]).abs() < 0.02, "{r}: {} {}", ga[k], v[k]);
            }
        }
    }

    #[test]
    fn infinite_rho_limit_and_length_check() {
        let dd = DegreeDistribution::regular(3, 6).unwrap();
        let q = Constellation::new(Modulation::Qpsk);
        let est = measure_transfer_curve(&dd, &q, &[20.0], 1000, 4, 1).unwrap();
        assert!(est.curve.values()[1] < 1e-12);
        let p8 = Constellation::new(Modulation::Psk8);
        assert!(matches!(measure_transfer_curve(&dd, &p8, &[1.0], 1000, 1, 1), Err(Error::Parameter(_))));
    }
}
