use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::degree::DegreeDistribution;
use super::gade::ga_curve;
use super::transfer::measure_transfer_curve;
use crate::constellation::{Constellation, MmseCurve, Modulation};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Differential-evolution search over variable-degree fractions with `mu` held fixed.
#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub mu: BTreeMap<usize, f64>,
    /// Allowed variable degrees.
    pub degrees: Vec<usize>,
    pub population: usize,
    pub generations: usize,
    pub f: f64,
    pub cr: f64,
    /// Fitness nodes across the target support.
    pub grid: usize,
    /// Relative clearance demanded below the target, e.g. 0.02.
    pub margin: f64,
    pub floor: f64,
    /// Candidates re-scored by Monte-Carlo; 0 skips re-scoring.
    pub finalists: usize,
    pub n_eval: usize,
    pub trials_eval: usize,
    pub seed: u64,
}

impl OptimizeConfig {
    pub fn new(mu: BTreeMap<usize, f64>, dv_max: usize) -> Self {
        OptimizeConfig {
            mu,
            degrees: (2..=dv_max.max(2)).collect(),
            population: 40,
            generations: 120,
            f: 0.6,
            cr: 0.8,
            grid: 48,
            margin: 0.0,
            floor: 1e-6,
            finalists: 0,
            n_eval: 10_000,
            trials_eval: 20,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub dd: DegreeDistribution,
    pub rate: f64,
    pub feasible: bool,
    /// Worst violation of the target under GA-DE (negative means clearance).
    pub ga_excess: f64,
    /// Same under Monte-Carlo re-measurement, when run.
    pub mc_excess: Option<f64>,
}

struct Scorer {
    grid: Vec<f64>,
    bound: Vec<f64>,
}

impl Scorer {
    fn new(target: &MmseCurve, cfg: &OptimizeConfig) -> Result<Self> {
        let (rho, vals) = (target.rho(), target.values());
        if rho.len() < 2 {
            return Err(Error::Parameter("target needs at least two nodes".into()));
        }
        if !target.is_monotone(1e-9) {
            return Err(Error::Parameter("target curve must be non-increasing".into()));
        }
        let end_idx = vals.iter().position(|&v| v <= cfg.floor).unwrap_or(rho.len() - 1).max(1);
        let end = rho[end_idx];
        let start = rho.iter().copied().find(|&r| r > 0.0).unwrap_or(end).min(end);
        let nodes = cfg.grid.max(2);
        let mut grid: Vec<f64> = (0..nodes).map(|i| start + (end - start) * i as f64 / (nodes - 1) as f64).collect();
        grid.extend(rho[..=end_idx].iter().copied().filter(|&r| r > 0.0));
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup();
        let bound = grid
            .iter()
            .map(|&r| {
                let t = target.eval(r);
                if t <= cfg.floor {
                    cfg.floor
                } else {
                    (1.0 - cfg.margin) * t
                }
            })
            .collect();
        Ok(Scorer { grid, bound })
    }

    fn excess(&self, curve: &[f64]) -> f64 {
        curve.iter().zip(&self.bound).map(|(c, b)| c - b).fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Member {
    w: Vec<f64>,
    rate: f64,
    excess: f64,
    score: f64,
}

const PENALTY: f64 = 100.0;

fn to_dd(w: &[f64], degrees: &[usize], mu: &BTreeMap<usize, f64>) -> Result<DegreeDistribution> {
    let s: f64 = w.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Parameter("empty weight vector".into()));
    }
    let lambda = degrees.iter().zip(w).filter(|(_, &x)| x > 0.0).map(|(&d, &x)| (d, x / s)).collect();
    DegreeDistribution::new(lambda, mu.clone())
}

fn evaluate(w: Vec<f64>, cfg: &OptimizeConfig, sc: &Scorer) -> Member {
    let scored = to_dd(&w, &cfg.degrees, &cfg.mu).and_then(|dd| {
        let rate = dd.design_rate();
        let curve = ga_curve(&dd, &sc.grid)?;
        Ok((rate, sc.excess(&curve)))
    });
    match scored {
        Ok((rate, excess)) if rate > 0.0 => {
            let score = -rate + PENALTY * excess.max(0.0);
            Member { w, rate, excess, score }
        }
        _ => Member { w, rate: 0.0, excess: f64::INFINITY, score: f64::INFINITY },
    }
}

fn better(a: &Member, b: &Member) -> bool {
    a.score < b.score
}

/// Searches `lambda` so the GA-DE curve stays below `target`, maximizing design rate.
pub fn optimize_degrees(target: &MmseCurve, cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    let k = cfg.degrees.len();
    if k == 0 || cfg.degrees.iter().any(|&d| d < 2) {
        return Err(Error::Parameter("variable degrees must be >= 2".into()));
    }
    if cfg.population < 4 {
        return Err(Error::Parameter("population must be at least 4".into()));
    }
    if !(cfg.f > 0.0 && cfg.f <= 2.0 && (0.0..=1.0).contains(&cfg.cr)) {
        return Err(Error::Parameter("F must lie in (0,2] and CR in [0,1]".into()));
    }
    let sc = Scorer::new(target, cfg)?;
    let mut rng = stream_rng(cfg.seed, Stream::Optimizer, 0);

    // corners first, then uniform draws on the simplex
    let mut init: Vec<Vec<f64>> = (0..k.min(cfg.population / 2))
        .map(|i| {
            let mut w = vec![0.0; k];
            w[i] = 1.0;
            w
        })
        .collect();
    while init.len() < cfg.population {
        init.push((0..k).map(|_| Exp1.sample(&mut rng)).collect::<Vec<f64>>());
    }
    let mut pop: Vec<Member> = init.into_par_iter().map(|w| evaluate(w, cfg, &sc)).collect();

    for g in 0..cfg.generations {
        let mut grng = stream_rng(cfg.seed, Stream::Optimizer, 1 + g as u64);
        let trials: Vec<Vec<f64>> = (0..pop.len())
            .map(|i| {
                let pick = |rng: &mut rand_chacha::ChaCha8Rng, not: &[usize]| loop {
                    let j = rng.random_range(0..pop.len());
                    if !not.contains(&j) {
                        break j;
                    }
                };
                let a = pick(&mut grng, &[i]);
                let b = pick(&mut grng, &[i, a]);
                let c = pick(&mut grng, &[i, a, b]);
                let forced = grng.random_range(0..k);
                let mut y = pop[i].w.clone();
                for j in 0..k {
                    if j == forced || grng.random::<f64>() < cfg.cr {
                        y[j] = (pop[a].w[j] + cfg.f * (pop[b].w[j] - pop[c].w[j])).max(0.0);
                    }
                }
                if y.iter().all(|&x| x == 0.0) {
                    y = pop[i].w.clone();
                }
                let s: f64 = y.iter().sum();
                y.iter_mut().for_each(|x| *x /= s);
                y
            })
            .collect();
        let next: Vec<Member> = trials.into_par_iter().map(|w| evaluate(w, cfg, &sc)).collect();
        for (i, m) in next.into_iter().enumerate() {
            if !better(&pop[i], &m) {
                pop[i] = m;
            }
        }
    }

    pop.sort_by(|a, b| a.score.total_cmp(&b.score));
    if cfg.finalists == 0 {
        let best = &pop[0];
        return Ok(OptimizeResult {
            dd: to_dd(&best.w, &cfg.degrees, &cfg.mu)?,
            rate: best.rate,
            feasible: best.excess <= 0.0,
            ga_excess: best.excess,
            mc_excess: None,
        });
    }

    let qpsk = Constellation::new(Modulation::Qpsk);
    let mut best: Option<OptimizeResult> = None;
    for (i, m) in pop.iter().filter(|m| m.excess <= 0.0).take(cfg.finalists).enumerate() {
        let dd = to_dd(&m.w, &cfg.degrees, &cfg.mu)?;
        let est = measure_transfer_curve(&dd, &qpsk, &sc.grid, cfg.n_eval, cfg.trials_eval, cfg.seed ^ (i as u64 + 1))?;
        let measured: Vec<f64> = sc.grid.iter().map(|&r| est.curve.eval(r)).collect();
        let mc = sc.excess(&measured);
        let cand = OptimizeResult { dd, rate: m.rate, feasible: mc <= 0.0, ga_excess: m.excess, mc_excess: Some(mc) };
        let replace = match &best {
            None => true,
            Some(b) => (cand.feasible, cand.rate) > (b.feasible, b.rate) && (cand.feasible || !b.feasible),
        };
        if replace {
            best = Some(cand);
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let m = &pop[0];
            Ok(OptimizeResult {
                dd: to_dd(&m.w, &cfg.degrees, &cfg.mu)?,
                rate: m.rate,
                feasible: false,
                ga_excess: m.excess,
                mc_excess: None,
            })
        }
    }
}
