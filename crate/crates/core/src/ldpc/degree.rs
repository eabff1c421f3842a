use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Edge-perspective degree distribution pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    lambda: BTreeMap<usize, f64>,
    mu: BTreeMap<usize, f64>,
}

/// Published tables are rounded to four decimals.
const SUM_SLACK: f64 = 2e-3;

fn normalize(side: &str, m: BTreeMap<usize, f64>) -> Result<BTreeMap<usize, f64>> {
    if m.is_empty() {
        return Err(Error::Parameter(format!("{side}: no degrees")));
    }
    for (&d, &f) in &m {
        if d < 2 {
            return Err(Error::Parameter(format!("{side}: degree {d} < 2")));
        }
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Error::Parameter(format!("{side}: fraction {f} for degree {d}")));
        }
    }
    let s: f64 = m.values().sum();
    if (s - 1.0).abs() > SUM_SLACK {
        return Err(Error::Parameter(format!("{side}: fractions sum to {s}")));
    }
    Ok(m.into_iter().filter(|(_, f)| *f > 0.0).map(|(d, f)| (d, f / s)).collect())
}

impl DegreeDistribution {
    /// Validates and renormalizes; sums must already be within 2e-3 of one.
    pub fn new(lambda: BTreeMap<usize, f64>, mu: BTreeMap<usize, f64>) -> Result<Self> {
        let dd = DegreeDistribution { lambda: normalize("lambda", lambda)?, mu: normalize("mu", mu)? };
        let r = dd.design_rate();
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Parameter(format!("design rate {r} outside (0,1)")));
        }
        Ok(dd)
    }

    pub fn from_pairs(lambda: &[(usize, f64)], mu: &[(usize, f64)]) -> Result<Self> {
        Self::new(lambda.iter().copied().collect(), mu.iter().copied().collect())
    }

    pub fn regular(dv: usize, dc: usize) -> Result<Self> {
        Self::from_pairs(&[(dv, 1.0)], &[(dc, 1.0)])
    }

    pub fn lambda(&self) -> &BTreeMap<usize, f64> {
        &self.lambda
    }

    pub fn mu(&self) -> &BTreeMap<usize, f64> {
        &self.mu
    }

    pub fn max_var_degree(&self) -> usize {
        *self.lambda.keys().next_back().unwrap()
    }

    pub fn max_check_degree(&self) -> usize {
        *self.mu.keys().next_back().unwrap()
    }

    fn inv_mean(m: &BTreeMap<usize, f64>) -> f64 {
        m.iter().map(|(&d, &f)| f / d as f64).sum()
    }

    pub fn design_rate(&self) -> f64 {
        1.0 - Self::inv_mean(&self.mu) / Self::inv_mean(&self.lambda)
    }

    /// Node-perspective variable fractions.
    pub fn var_node_fractions(&self) -> BTreeMap<usize, f64> {
        let s = Self::inv_mean(&self.lambda);
        self.lambda.iter().map(|(&d, &f)| (d, f / d as f64 / s)).collect()
    }

    pub fn check_node_fractions(&self) -> BTreeMap<usize, f64> {
        let s = Self::inv_mean(&self.mu);
        self.mu.iter().map(|(&d, &f)| (d, f / d as f64 / s)).collect()
    }

    /// Average number of edges per variable node.
    pub fn mean_var_degree(&self) -> f64 {
        1.0 / Self::inv_mean(&self.lambda)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lambda = BTreeMap::new();
        let mut mu = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Format(format!("line {}: {what}: `{}`", ln + 1, raw.trim()));
            if f.len() != 3 {
                return Err(bad("expected `v|c degree fraction`"));
            }
            let d: usize = f[1].parse().map_err(|_| bad("bad degree"))?;
            let x: f64 = f[2].parse().map_err(|_| bad("bad fraction"))?;
            let side = match f[0] {
                "v" => &mut lambda,
                "c" => &mut mu,
                _ => return Err(bad("side must be v or c")),
            };
            if side.insert(d, x).is_some() {
                return Err(bad("duplicate degree"));
            }
        }
        Self::new(lambda, mu).map_err(|e| match e {
            Error::Parameter(m) => Error::Format(m),
            o => o,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (d, f) in &self.lambda {
            writeln!(s, "v {d} {f}").unwrap();
        }
        for (d, f) in &self.mu {
            writeln!(s, "c {d} {f}").unwrap();
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            o => o,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
