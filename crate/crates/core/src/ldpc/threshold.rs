use crate::constellation::MmseFn;
use crate::error::{Error, Result};
use crate::se::TransferPair;

#[derive(Debug, Clone, Copy)]
pub struct ThresholdConfig {
    pub lo_db: f64,
    pub hi_db: f64,
    pub resolution_db: f64,
    /// Decoder MMSE treated as error-free.
    pub floor: f64,
    pub grid: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { lo_db: 0.0, hi_db: 12.0, resolution_db: 0.01, floor: 1e-6, grid: 4000 }
    }
}

/// Antenna-weighted average of group curves.
pub struct WeightedCurves<'a> {
    pub curves: Vec<(&'a dyn MmseFn, f64)>,
}

impl MmseFn for WeightedCurves<'_> {
    fn mmse(&self, rho: f64) -> f64 {
        self.curves.iter().map(|(c, w)| w * c.mmse(rho)).sum()
    }

    fn area(&self, a: f64, b: f64) -> f64 {
        self.curves.iter().map(|(c, w)| w * c.area(a, b)).sum()
    }
}

/// Whether the decoder curve stays strictly below `varphi_L` from `phi_L(1)` until it reaches `floor`.
pub fn curves_clear(avg: &dyn MmseFn, pair: &TransferPair, floor: f64, grid: usize, extra_nodes: &[f64]) -> bool {
    let (a, b) = (pair.phi_one(), pair.upper());
    let mut pts: Vec<f64> = (0..grid).map(|i| a + (b - a) * i as f64 / grid as f64).collect();
    pts.extend(extra_nodes.iter().copied().filter(|&r| r >= a && r < b));
    pts.sort_by(|x, y| x.total_cmp(y));
    for r in pts {
        let v = avg.mmse(r);
        if v <= floor {
            return true;
        }
        if v >= pair.varphi_l(r) {
            return false;
        }
    }
    avg.mmse(b) <= floor
}

/// Smallest snr (dB, to `resolution_db`) at which the averaged curves clear the channel curve.
/// Returns `+inf` when they do not clear even at `hi_db`.
pub fn se_threshold<F>(
    curves: &[(&dyn MmseFn, f64)],
    extra_nodes: &[f64],
    pair_at: F,
    cfg: &ThresholdConfig,
) -> Result<f64>
where
    F: Fn(f64) -> Result<TransferPair>,
{
    if curves.is_empty() {
        return Err(Error::Parameter("no curves".into()));
    }
    let wsum: f64 = curves.iter().map(|c| c.1).sum();
    if (wsum - 1.0).abs() > 1e-9 || curves.iter().any(|c| c.1 < 0.0) {
        return Err(Error::Parameter(format!("group weights must be non-negative and sum to 1, got {wsum}")));
    }
    let avg = WeightedCurves { curves: curves.to_vec() };
    let clear = |db: f64| -> Result<bool> { Ok(curves_clear(&avg, &pair_at(db)?, cfg.floor, cfg.grid, extra_nodes)) };
    if !clear(cfg.hi_db)? {
        return Ok(f64::INFINITY);
    }
    if clear(cfg.lo_db)? {
        return Ok(cfg.lo_db);
    }
    let (mut lo, mut hi) = (cfg.lo_db, cfg.hi_db);
    while hi - lo > cfg.resolution_db {
        let mid = 0.5 * (lo + hi);
        if clear(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{geometric_spectrum, SnrPoint};
    use crate::constellation::{Constellation, MmseCurve, Modulation};
    use crate::se::{envelope_curve, find_fixed_point};

    fn factory(kappa: f64) -> impl Fn(f64) -> Result<TransferPair> {
        let e = geometric_spectrum(333, 500, kappa).unwrap();
        move |db| TransferPair::new(&e, 500, SnrPoint::from_db(db)?)
    }

    #[test]
    fn envelope_threshold_is_design_snr() {
        let om = Constellation::new(Modulation::Qpsk).default_curve().unwrap();
        for (kappa, db) in [(10.0, 2.85), (50.0, 5.23)] {
            let pair = factory(kappa)(db).unwrap();
            let fp = find_fixed_point(&pair, &om);
            let mut grid: Vec<f64> = (0..=3000).map(|i| pair.upper() * i as f64 / 3000.0).collect();
            grid.push(fp.rho_star);
            grid.sort_by(|a, b| a.total_cmp(b));
            grid.dedup();
            let env = envelope_curve(&pair, &om, &grid).unwrap();
            let cfg = ThresholdConfig { lo_db: db - 1.0, hi_db: db + 1.0, ..Default::default() };
            let t = se_threshold(&[(&env, 1.0)], &grid, factory(kappa), &cfg).unwrap();
            assert!((t - db).abs() <= 0.011, "{kappa}: {t}");
        }
    }

    #[test]
    fn never_clearing_is_infinite() {
        let flat = MmseCurve::new(vec![0.0, 100.0], vec![1.0, 1.0]).unwrap();
        let cfg = ThresholdConfig { lo_db: 0.0, hi_db: 6.0, ..Default::default() };
        assert_eq!(se_threshold(&[(&flat, 1.0)], &[], factory(10.0), &cfg).unwrap(), f64::INFINITY);
    }

    #[test]
    fn margin_keeps_feasibility() {
        let om = Constellation::new(Modulation::Qpsk).default_curve().unwrap();
        let pair = factory(10.0)(3.2).unwrap();
        let grid: Vec<f64> = (0..=2000).map(|i| pair.upper() * i as f64 / 2000.0).collect();
        let env = envelope_curve(&pair, &om, &grid).unwrap();
        let f = factory(10.0);
        let mut was = false;
        for k in 0..40 {
            let db = 2.5 + 0.05 * k as f64;
            let now = curves_clear(&env, &f(db).unwrap(), 1e-6, 4000, &grid);
            assert!(!was || now, "{db}");
            was = now;
        }
        assert!(was);
    }
}
