use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use super::degree::DegreeDistribution;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Tanner graph plus a systematic-form encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    check_ptr: Vec<u32>,
    edge_var: Vec<u32>,
    var_ptr: Vec<u32>,
    var_edges: Vec<u32>,
    pivots: Vec<usize>,
    free: Vec<usize>,
    parity_rows: Vec<Vec<u64>>,
}

fn largest_remainder(targets: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let have: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(have)) {
        out[i] += 1;
    }
    out
}

/// Node-count histograms `(variable, check)` for a length-`n` code.
pub fn node_counts(dd: &DegreeDistribution, n: usize) -> Result<(BTreeMap<usize, usize>, BTreeMap<usize, usize>)> {
    let vf = dd.var_node_fractions();
    let vdeg: Vec<usize> = vf.keys().copied().collect();
    let vt: Vec<f64> = vf.values().map(|f| f * n as f64).collect();
    let vc = largest_remainder(&vt, n);
    let edges: usize = vdeg.iter().zip(&vc).map(|(d, c)| d * c).sum();
    let cf = dd.check_node_fractions();
    let cdeg: Vec<usize> = cf.keys().copied().collect();
    let inv: f64 = dd.mu().iter().map(|(&d, &f)| f / d as f64).sum();
    let m = (edges as f64 * inv).round() as usize;
    if m == 0 {
        return Err(Error::Construction(format!("n={n} gives no check nodes")));
    }
    let ct: Vec<f64> = cf.values().map(|f| f * m as f64).collect();
    let cc = largest_remainder(&ct, m);
    let mut checks: BTreeMap<usize, usize> = cdeg.iter().copied().zip(cc.iter().copied()).filter(|(_, c)| *c > 0).collect();
    let placed: usize = checks.iter().map(|(d, c)| d * c).sum();
    // spread the edge mismatch as +-1 over checks of the most common degree
    let mut delta = edges as i64 - placed as i64;
    if delta != 0 {
        let (&d0, _) = checks.iter().max_by_key(|(_, &c)| c).unwrap();
        let step: i64 = delta.signum();
        let nd = (d0 as i64 + step) as usize;
        if nd < 2 {
            return Err(Error::Construction("cannot balance edge counts".into()));
        }
        while delta != 0 {
            let c = checks.get_mut(&d0).unwrap();
            if *c == 0 {
                return Err(Error::Construction(format!("cannot balance {delta} edges at n={n}")));
            }
            *c -= 1;
            *checks.entry(nd).or_insert(0) += 1;
            delta -= step;
        }
        checks.retain(|_, c| *c > 0);
    }
    let vars: BTreeMap<usize, usize> = vdeg.into_iter().zip(vc).filter(|(_, c)| *c > 0).collect();
    if let Some((&d, _)) = vars.iter().next_back() {
        if d > m {
            return Err(Error::Construction(format!("variable degree {d} exceeds {m} checks")));
        }
    }
    if checks.keys().next_back().is_some_and(|&d| d > n) {
        return Err(Error::Construction("check degree exceeds code length".into()));
    }
    Ok((vars, checks))
}

const PEG_DEPTH: usize = 8;

/// Progressive edge growth with BFS depth cap, then GF(2) elimination for the encoder.
pub fn build_graph(dd: &DegreeDistribution, n: usize, seed: u64) -> Result<LdpcCode> {
    let (vh, ch) = node_counts(dd, n)?;
    let mut rng = stream_rng(seed, Stream::CodeGraph, n as u64);
    let mut vdeg: Vec<usize> = vh.iter().flat_map(|(&d, &c)| std::iter::repeat_n(d, c)).collect();
    let mut cap: Vec<usize> = ch.iter().flat_map(|(&d, &c)| std::iter::repeat_n(d, c)).collect();
    vdeg.shuffle(&mut rng);
    cap.shuffle(&mut rng);
    let m = cap.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vdeg[b].cmp(&vdeg[a]).then(a.cmp(&b)));

    let mut vadj: Vec<Vec<u32>> = vdeg.iter().map(|&d| Vec::with_capacity(d)).collect();
    let mut cadj: Vec<Vec<u32>> = cap.iter().map(|&d| Vec::with_capacity(d)).collect();
    let mut cstamp = vec![0u32; m];
    let mut vstamp = vec![0u32; n];
    let mut stamp = 0u32;
    let mut frontier: Vec<u32> = Vec::new();
    let mut next: Vec<u32> = Vec::new();
    let mut open = m;

    // lowest fill ratio first so every check keeps a share of each variable degree
    let pick = |cands: &mut dyn Iterator<Item = usize>, cadj: &Vec<Vec<u32>>, cap: &Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng| -> Option<usize> {
        let mut best: Option<usize> = None;
        let mut ties = 0u32;
        for c in cands {
            match best {
                None => {
                    best = Some(c);
                    ties = 1;
                }
                Some(b) => {
                    let lc = cadj[c].len() * cap[b];
                    let lb = cadj[b].len() * cap[c];
                    if lc < lb {
                        best = Some(c);
                        ties = 1;
                    } else if lc == lb {
                        ties += 1;
                        if rng.random_range(0..ties) == 0 {
                            best = Some(c);
                        }
                    }
                }
            }
        }
        best
    };

    for &v in &order {
        for k in 0..vdeg[v] {
            stamp += 1;
            let chosen = if k == 0 {
                pick(&mut (0..m).filter(|&c| cadj[c].len() < cap[c]), &cadj, &cap, &mut rng)
            } else {
                vstamp[v] = stamp;
                frontier.clear();
                let mut reached_open = 0usize;
                for &c in &vadj[v] {
                    if cstamp[c as usize] != stamp {
                        cstamp[c as usize] = stamp;
                        frontier.push(c);
                        if cadj[c as usize].len() < cap[c as usize] {
                            reached_open += 1;
                        }
                    }
                }
                let mut depth = 1;
                let mut last_level: Vec<u32> = frontier.clone();
                loop {
                    if reached_open == open || depth >= PEG_DEPTH {
                        break;
                    }
                    next.clear();
                    let mut gained_open = 0usize;
                    for &c in &frontier {
                        for &u in &cadj[c as usize] {
                            if vstamp[u as usize] == stamp {
                                continue;
                            }
                            vstamp[u as usize] = stamp;
                            for &c2 in &vadj[u as usize] {
                                if cstamp[c2 as usize] != stamp {
                                    cstamp[c2 as usize] = stamp;
                                    next.push(c2);
                                    if cadj[c2 as usize].len() < cap[c2 as usize] {
                                        gained_open += 1;
                                    }
                                }
                            }
                        }
                    }
                    if next.is_empty() {
                        break;
                    }
                    if reached_open + gained_open == open {
                        // everything open is now reached: take the farthest level
                        last_level = next.clone();
                        reached_open += gained_open;
                        break;
                    }
                    reached_open += gained_open;
                    std::mem::swap(&mut frontier, &mut next);
                    last_level.clone_from(&frontier);
                    depth += 1;
                }
                if reached_open < open {
                    pick(&mut (0..m).filter(|&c| cstamp[c] != stamp && cadj[c].len() < cap[c]), &cadj, &cap, &mut rng)
                } else {
                    let own: Vec<u32> = vadj[v].clone();
                    pick(
                        &mut last_level
                            .iter()
                            .map(|&c| c as usize)
                            .filter(|&c| cadj[c].len() < cap[c] && !own.contains(&(c as u32))),
                        &cadj,
                        &cap,
                        &mut rng,
                    )
                }
            };
            let c = chosen.ok_or_else(|| {
                Error::Construction(format!("no admissible check for variable {v} (edge {k} of {})", vdeg[v]))
            })?;
            vadj[v].push(c as u32);
            cadj[c].push(v as u32);
            if cadj[c].len() == cap[c] {
                open -= 1;
            }
        }
    }
    LdpcCode::from_adjacency(n, cadj)
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl LdpcCode {
    /// Builds the code from check-node adjacency lists.
    pub fn from_adjacency(n: usize, cadj: Vec<Vec<u32>>) -> Result<Self> {
        let m = cadj.len();
        let mut check_ptr = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        check_ptr.push(0u32);
        for row in &cadj {
            for &v in row {
                if v as usize >= n {
                    return Err(Error::Construction(format!("variable {v} out of range")));
                }
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len() as u32);
        }
        let mut deg = vec![0u32; n];
        for &v in &edge_var {
            deg[v as usize] += 1;
        }
        let mut var_ptr = vec![0u32; n + 1];
        for v in 0..n {
            var_ptr[v + 1] = var_ptr[v] + deg[v];
        }
        let mut fill = var_ptr.clone();
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize] as usize] = e as u32;
            fill[v as usize] += 1;
        }
        let mut code = LdpcCode {
            n,
            m,
            check_ptr,
            edge_var,
            var_ptr,
            var_edges,
            pivots: vec![],
            free: vec![],
            parity_rows: vec![],
        };
        code.build_encoder();
        Ok(code)
    }

    fn build_encoder(&mut self) {
        let (n, m) = (self.n, self.m);
        let w = words(n);
        let mut rows: Vec<Vec<u64>> = (0..m)
            .map(|c| {
                let mut r = vec![0u64; w];
                for &v in self.check_vars(c) {
                    r[v as usize / 64] ^= 1 << (v % 64);
                }
                r
            })
            .collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            if rank == m {
                break;
            }
            let (wi, bit) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (rank..m).find(|&r| rows[r][wi] & bit != 0) else { continue };
            rows.swap(rank, p);
            let (head, tail) = rows.split_at_mut(rank);
            let (prow, tail) = tail.split_first_mut().unwrap();
            let prow = &*prow;
            for r in head.iter_mut().chain(tail.iter_mut()) {
                if r[wi] & bit != 0 {
                    for (a, b) in r.iter_mut().zip(prow.iter()) {
                        *a ^= *b;
                    }
                }
            }
            pivots.push(col);
            rank += 1;
        }
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let fw = words(free.len());
        self.parity_rows = rows[..rank]
            .iter()
            .map(|r| {
                let mut out = vec![0u64; fw];
                for (j, &f) in free.iter().enumerate() {
                    if r[f / 64] >> (f % 64) & 1 == 1 {
                        out[j / 64] |= 1 << (j % 64);
                    }
                }
                out
            })
            .collect();
        self.pivots = pivots;
        self.free = free;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Information length `n - rank(H)`.
    pub fn k(&self) -> usize {
        self.free.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn edges(&self) -> usize {
        self.edge_var.len()
    }

    pub fn check_vars(&self, c: usize) -> &[u32] {
        &self.edge_var[self.check_ptr[c] as usize..self.check_ptr[c + 1] as usize]
    }

    pub(crate) fn check_ptr(&self) -> &[u32] {
        &self.check_ptr
    }

    pub(crate) fn edge_var(&self) -> &[u32] {
        &self.edge_var
    }

    pub(crate) fn var_ptr(&self) -> &[u32] {
        &self.var_ptr
    }

    pub(crate) fn var_edges(&self) -> &[u32] {
        &self.var_edges
    }

    pub fn var_degree(&self, v: usize) -> usize {
        (self.var_ptr[v + 1] - self.var_ptr[v]) as usize
    }

    pub fn check_degree(&self, c: usize) -> usize {
        (self.check_ptr[c + 1] - self.check_ptr[c]) as usize
    }

    pub fn var_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for v in 0..self.n {
            *h.entry(self.var_degree(v)).or_insert(0) += 1;
        }
        h
    }

    pub fn check_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for c in 0..self.m {
            *h.entry(self.check_degree(c)).or_insert(0) += 1;
        }
        h
    }

    /// Systematic encoding of `k` information bits.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::Parameter(format!("expected {} info bits, got {}", self.k(), info.len())));
        }
        let mut packed = vec![0u64; words(info.len())];
        let mut cw = vec![0u8; self.n];
        for (j, (&b, &f)) in info.iter().zip(&self.free).enumerate() {
            if b & 1 == 1 {
                packed[j / 64] |= 1 << (j % 64);
                cw[f] = 1;
            }
        }
        for (row, &p) in self.parity_rows.iter().zip(&self.pivots) {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[p] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    /// Number of unsatisfied checks.
    pub fn syndrome_weight(&self, bits: &[u8]) -> usize {
        (0..self.m)
            .filter(|&c| self.check_vars(c).iter().fold(0u8, |a, &v| a ^ bits[v as usize]) & 1 == 1)
            .count()
    }

    pub fn random_codeword<R: Rng>(&self, rng: &mut R) -> Vec<u8> {
        let info: Vec<u8> = (0..self.k()).map(|_| rng.random::<bool>() as u8).collect();
        self.encode(&info).expect("length matches")
    }
}

/// Shortest cycle length of the Tanner graph (`None` if acyclic).
pub fn girth(code: &LdpcCode) -> Option<usize> {
    let (n, m) = (code.n(), code.m());
    let total = n + m;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for c in 0..m {
        for &v in code.check_vars(c) {
            adj[v as usize].push(n + c);
            adj[n + c].push(v as usize);
        }
    }
    let mut best = usize::MAX;
    let mut dist = vec![usize::MAX; total];
    let mut parent = vec![usize::MAX; total];
    let mut touched = Vec::new();
    for s in 0..n {
        for &t in &touched {
            dist[t] = usize::MAX;
            parent[t] = usize::MAX;
        }
        touched.clear();
        dist[s] = 0;
        touched.push(s);
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if 2 * dist[u] + 1 >= best {
                break;
            }
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u;
                    touched.push(w);
                    q.push_back(w);
                } else if parent[u] != w {
                    best = best.min(dist[u] + dist[w] + 1);
                }
            }
        }
    }
    (best != usize::MAX).then_some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_counts_exact() {
        let dd = DegreeDistribution::regular(3, 6).unwrap();
        let (v, c) = node_counts(&dd, 1024).unwrap();
        assert_eq!(v, BTreeMap::from([(3, 1024)]));
        assert_eq!(c, BTreeMap::from([(6, 512)]));
        let code = build_graph(&dd, 1024, 1).unwrap();
        assert_eq!(code.var_histogram(), v);
        assert_eq!(code.check_histogram(), c);
    }

    #[test]
    fn peg_girth_at_least_six() {
        let code = build_graph(&DegreeDistribution::regular(3, 6).unwrap(), 1024, 7).unwrap();
        assert!(girth(&code).unwrap() >= 6);
    }

    #[test]
    fn girth_oracle_on_known_graphs() {
        // 4-cycle: two variables sharing two checks
        let c = LdpcCode::from_adjacency(2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(girth(&c), Some(4));
        let tree = LdpcCode::from_adjacency(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        assert_eq!(girth(&tree), None);
        let six = LdpcCode::from_adjacency(3, vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
        assert_eq!(girth(&six), Some(6));
    }

    #[test]
    fn codewords_satisfy_parity() {
        let dd = DegreeDistribution::from_pairs(&[(2, 0.3), (3, 0.4), (8, 0.3)], &[(6, 0.5), (7, 0.5)]).unwrap();
        let code = build_graph(&dd, 600, 3).unwrap();
        let mut rng = stream_rng(9, Stream::Data, 0);
        for _ in 0..100 {
            let cw = code.random_codeword(&mut rng);
            assert_eq!(code.syndrome_weight(&cw), 0);
        }
        assert!((code.rate() - dd.design_rate()).abs() < 0.01);
    }

    #[test]
    fn histograms_track_targets() {
        let dd = DegreeDistribution::from_pairs(
            &[(2, 0.3122), (14, 0.0843), (15, 0.2491), (110, 0.2089), (1000, 0.1455)],
            &[(8, 0.6), (25, 0.4)],
        )
        .unwrap();
        let n = 10_000;
        let (vh, _) = node_counts(&dd, n).unwrap();
        for (d, f) in dd.var_node_fractions() {
            let got = *vh.get(&d).unwrap_or(&0) as f64;
            assert!((got - f * n as f64).abs() <= 1.0, "degree {d}");
        }
        let code = build_graph(&dd, n, 2).unwrap();
        assert_eq!(code.var_histogram(), vh);
        assert!((code.rate() - dd.design_rate()).abs() < 0.002, "{} vs {}", code.rate(), dd.design_rate());
    }

    #[test]
    fn infeasible_length_is_construction_error() {
        let dd = DegreeDistribution::from_pairs(&[(2, 0.5), (300, 0.5)], &[(8, 1.0)]).unwrap();
        assert!(matches!(build_graph(&dd, 200, 1), Err(Error::Construction(_))));
    }
}
