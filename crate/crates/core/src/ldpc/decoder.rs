use super::graph::LdpcCode;

use std::sync::OnceLock;

/// Message magnitude cap.
pub const LLR_CLAMP: f64 = 36.0;

const PHI_STEP: f64 = 1.0 / 256.0;
const PHI_TOP: f64 = 40.0;
const PHI_CAP: f64 = 50.0;
// linear interpolation is poor near the log singularity
const PHI_EXACT_BELOW: f64 = 0.25;

fn phi_exact(x: f64) -> f64 {
    if x <= 0.0 {
        return PHI_CAP;
    }
    let q = (-x).exp();
    (q.ln_1p() - (-(-x).exp_m1()).ln()).min(PHI_CAP)
}

fn phi_table() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| (0..=(PHI_TOP / PHI_STEP) as usize + 1).map(|i| phi_exact(i as f64 * PHI_STEP)).collect())
}

/// `phi(x) = -ln tanh(x/2)`, self-inverse on `x > 0`; zero beyond 40.
#[inline]
fn phi(x: f64, tb: &[f64]) -> f64 {
    if x < PHI_EXACT_BELOW {
        return phi_exact(x);
    }
    if x >= PHI_TOP {
        return 0.0;
    }
    let t = x * (1.0 / PHI_STEP);
    let i = t as usize;
    let f = t - i as f64;
    tb[i] + f * (tb[i + 1] - tb[i])
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub bits: Vec<u8>,
    /// A-posteriori LLRs, positive favouring bit 0.
    pub posterior: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding sum-product decoder with reusable message buffers.
pub struct SpaDecoder<'a> {
    code: &'a LdpcCode,
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    max_iters: usize,
    stall: usize,
    saturate: bool,
}

impl<'a> SpaDecoder<'a> {
    pub fn new(code: &'a LdpcCode, max_iters: usize) -> Self {
        let e = code.edges();
        SpaDecoder { code, v2c: vec![0.0; e], c2v: vec![0.0; e], max_iters, stall: usize::MAX, saturate: false }
    }

    /// Stop after `window` iterations without a drop in syndrome weight.
    pub fn with_stall_window(mut self, window: usize) -> Self {
        self.stall = window.max(1);
        self
    }

    /// On parity success, report the posterior as `+-LLR_CLAMP` of the decoded word.
    pub fn with_saturation(mut self, on: bool) -> Self {
        self.saturate = on;
        self
    }

    pub fn decode(&mut self, llr: &[f64]) -> DecodeOutput {
        let code = self.code;
        let n = code.n();
        assert_eq!(llr.len(), n, "llr length must equal code length");
        let (cptr, evar, vptr, vedges) = (code.check_ptr(), code.edge_var(), code.var_ptr(), code.var_edges());
        for (e, &v) in evar.iter().enumerate() {
            self.v2c[e] = llr[v as usize].clamp(-LLR_CLAMP, LLR_CLAMP);
        }
        let mut post: Vec<f64> = llr.iter().map(|x| x.clamp(-LLR_CLAMP, LLR_CLAMP)).collect();
        let mut bits: Vec<u8> = post.iter().map(|&x| (x < 0.0) as u8).collect();
        let tb = phi_table();
        let mut best_w = usize::MAX;
        let mut since = 0usize;
        let mut it = 0usize;
        let mut converged = false;
        loop {
            it += 1;
            // check pass; the syndrome of the current hard decisions comes for free
            let mut w = 0usize;
            for c in 0..code.m() {
                let (a, b) = (cptr[c] as usize, cptr[c + 1] as usize);
                let mut sum = 0.0f64;
                let mut neg = false;
                let mut parity = 0u8;
                for e in a..b {
                    let m = self.v2c[e];
                    parity ^= bits[evar[e] as usize];
                    neg ^= m < 0.0;
                    let p = phi(m.abs(), tb);
                    self.c2v[e] = p;
                    sum += p;
                }
                w += parity as usize;
                for e in a..b {
                    let out = phi(sum - self.c2v[e], tb);
                    let flip = neg ^ (self.v2c[e] < 0.0);
                    self.c2v[e] = if flip { -out } else { out };
                }
            }
            if w == 0 {
                converged = true;
                break;
            }
            if w < best_w {
                best_w = w;
                since = 0;
            } else {
                since += 1;
                if since >= self.stall {
                    break;
                }
            }
            if it > self.max_iters {
                break;
            }
            for v in 0..n {
                let (a, b) = (vptr[v] as usize, vptr[v + 1] as usize);
                let mut tot = llr[v].clamp(-LLR_CLAMP, LLR_CLAMP);
                for &e in &vedges[a..b] {
                    tot += self.c2v[e as usize];
                }
                for &e in &vedges[a..b] {
                    self.v2c[e as usize] = (tot - self.c2v[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
                post[v] = tot;
                bits[v] = (tot < 0.0) as u8;
            }
        }
        let it = it.min(self.max_iters);
        if converged && self.saturate {
            for (p, &b) in post.iter_mut().zip(&bits) {
                *p = if b == 0 { LLR_CLAMP } else { -LLR_CLAMP };
            }
        }
        DecodeOutput { bits, posterior: post, converged, iterations: it }
    }
}

pub fn spa_decode(code: &LdpcCode, llr: &[f64], max_iters: usize) -> DecodeOutput {
    SpaDecoder::new(code, max_iters).decode(llr)
}

#[cfg(test)]
mod tests {
    use super::super::{build_graph, DegreeDistribution};
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_converges_in_one() {
        let code = build_graph(&DegreeDistribution::regular(3, 6).unwrap(), 512, 4).unwrap();
        let cw = code.random_codeword(&mut stream_rng(1, Stream::Data, 0));
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 0 { 40.0 } else { -40.0 }).collect();
        let out = spa_decode(&code, &llr, 200);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.bits, cw);
    }

    #[test]
    fn zero_input_stays_zero() {
        let code = build_graph(&DegreeDistribution::regular(3, 6).unwrap(), 512, 4).unwrap();
        let out = spa_decode(&code, &vec![0.0; 512], 10);
        assert!(out.posterior.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn phi_table_accuracy() {
        let tb = phi_table();
        for x in [1e-3, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 30.0] {
            let (a, b) = (phi(x, tb), phi_exact(x));
            assert!((a - b).abs() < 2e-3 * b.max(1e-3), "{x}: {a} {b}");
        }
        assert!((phi(phi(0.7, tb), tb) - 0.7).abs() < 1e-4);
    }

    fn bpsk_ber(code: &LdpcCode, ebn0_db: f64, frames: usize) -> f64 {
        let r = code.rate();
        let sigma = (1.0 / (2.0 * r * 10f64.powf(ebn0_db / 10.0))).sqrt();
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut errs = 0usize;
        let mut dec = SpaDecoder::new(code, 200);
        for f in 0..frames {
            let mut rng = stream_rng(17, Stream::Noise, f as u64);
            let cw = code.random_codeword(&mut stream_rng(17, Stream::Data, f as u64));
            let llr: Vec<f64> = cw
                .iter()
                .map(|&b| {
                    let x = if b == 0 { 1.0 } else { -1.0 };
                    2.0 * (x + noise.sample(&mut rng)) / (sigma * sigma)
                })
                .collect();
            let out = dec.decode(&llr);
            errs += out.bits.iter().zip(&cw).filter(|(a, b)| a != b).count();
        }
        errs as f64 / (frames * code.n()) as f64
    }

    #[test]
    fn regular_waterfall_near_threshold() {
        // BP threshold of (3,6) on BPSK-AWGN: sigma* = 0.8809, Eb/N0 = 1.10 dB.
        // waterfall taken as the BER 1e-2 crossing
        let code = build_graph(&DegreeDistribution::regular(3, 6).unwrap(), 10_000, 11).unwrap();
        let above = bpsk_ber(&code, 1.10 + 0.25, 20);
        let below = bpsk_ber(&code, 1.10 - 0.25, 10);
        assert!(above < 1e-2, "{above}");
        assert!(below > 1e-2, "{below}");
    }
}
