//! Group-asymmetric rate allocation from the aggregate envelope.

use std::path::Path;

use crate::channel::{ChannelMatrix, SnrPoint};
use crate::constellation::{MmseCurve, MmseFn};
use crate::error::{Error, Result};
use crate::se::{code_rate_from_curve, find_fixed_point, FixedPoint, TransferPair};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    gammas: Vec<f64>,
    c_star: f64,
    antennas: Vec<usize>,
    users: Vec<usize>,
}

impl GroupPlan {
    pub fn new(gammas: Vec<f64>, c_star: f64, antennas: Vec<usize>, users: Vec<usize>) -> Result<Self> {
        let g = gammas.len();
        if g == 0 || antennas.len() != g || users.len() != g {
            return Err(Error::Parameter("gammas, antennas and users must have one entry per group".into()));
        }
        if gammas.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::Parameter(format!("gammas must be positive: {gammas:?}")));
        }
        if !(c_star >= 1.0 && c_star.is_finite()) {
            return Err(Error::Parameter(format!("c* must be >= 1, got {c_star}")));
        }
        if antennas.iter().any(|&a| a == 0) || users.iter().zip(&antennas).any(|(&u, &a)| u == 0 || a % u != 0) {
            return Err(Error::Parameter("every group needs antennas divisible among its users".into()));
        }
        Ok(GroupPlan { gammas, c_star, antennas, users })
    }

    /// Two groups with `b = gamma_1 / gamma_2` (group 1 rises with b).
    pub fn two_group(b: f64, c_star: f64, antennas: [usize; 2], users: [usize; 2]) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Parameter(format!("b must be positive, got {b}")));
        }
        Self::new(vec![1.0, 1.0 / b], c_star, antennas.to_vec(), users.to_vec())
    }

    /// `c* = 1/Omega_S(rho*)` from a fixed point.
    pub fn c_star_of(fp: &FixedPoint, omega: &dyn MmseFn) -> f64 {
        1.0 / omega.mmse(fp.rho_star)
    }

    pub fn groups(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn antennas(&self) -> &[usize] {
        &self.antennas
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn total_antennas(&self) -> usize {
        self.antennas.iter().sum()
    }

    fn weights(&self) -> Vec<f64> {
        let n = self.total_antennas() as f64;
        self.antennas.iter().map(|&a| a as f64 / n).collect()
    }
}

/// Per-group variances with antenna-weighted mean `v`, tied by `gamma_i(1/v_i - c*) = gamma_g(1/v_g - c*)`.
pub fn split_variances(v: f64, plan: &GroupPlan) -> Result<Vec<f64>> {
    let g = plan.groups();
    if v == 0.0 {
        return Ok(vec![0.0; g]);
    }
    if !(v > 0.0 && v <= 1.0 + 1e-12) {
        return Err(Error::Allocation(format!("variance {v} outside (0,1]")));
    }
    let cs = plan.c_star;
    let b: Vec<f64> = plan.gammas.iter().map(|gi| plan.gammas[0] / gi).collect();
    let w = plan.weights();
    if b.iter().all(|&x| (x - 1.0).abs() < 1e-15) {
        return Ok(vec![v; g]);
    }
    let map = |v0: f64| -> Vec<f64> { b.iter().map(|&bi| 1.0 / (bi / v0 + (1.0 - bi) * cs)).collect() };
    let zeta = |v0: f64| -> f64 { map(v0).iter().zip(&w).map(|(x, wi)| x * wi).sum() };
    let mut vmax = f64::INFINITY;
    for &bi in &b {
        if bi > 1.0 {
            vmax = vmax.min(bi / ((bi - 1.0) * cs));
        }
    }
    let hi0 = if vmax.is_finite() { vmax * (1.0 - 1e-14) } else { 1e12 };
    let z_hi = zeta(hi0);
    if !(z_hi >= v) {
        return Err(Error::Allocation(format!(
            "no anchor variance reaches mean {v} (max reachable {z_hi}) for gammas {:?}",
            plan.gammas
        )));
    }
    let (mut lo, mut hi) = ((v * 1e-30).ln(), hi0.ln());
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if zeta(mid.exp()) < v {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let out = map((0.5 * (lo + hi)).exp());
    if out.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::Allocation(format!("infeasible split for v={v}: {out:?}")));
    }
    Ok(out)
}

/// Per-group curves on a shared grid together with the envelope and the `Omega_S` cap.
#[derive(Debug, Clone)]
pub struct GroupCurves {
    pub rho: Vec<f64>,
    pub envelope: Vec<f64>,
    pub cap: Vec<f64>,
    pub groups: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl GroupCurves {
    pub fn group_curve(&self, g: usize) -> Result<MmseCurve> {
        MmseCurve::new(self.rho.clone(), self.groups[g].iter().map(|x| x.clamp(0.0, 1.0)).collect())
    }

    pub fn envelope_curve(&self) -> Result<MmseCurve> {
        MmseCurve::new(self.rho.clone(), self.envelope.clone())
    }

    /// Largest `|sum_g w_g v_g - envelope|` over the grid.
    pub fn mean_residual(&self) -> f64 {
        (0..self.rho.len())
            .map(|k| {
                let m: f64 = self.groups.iter().zip(&self.weights).map(|(c, w)| c[k] * w).sum();
                (m - self.envelope[k]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `v_g - Omega_S` over groups and nodes.
    pub fn cap_excess(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for c in &self.groups {
            for k in 0..self.rho.len() {
                worst = worst.max(c[k] - self.cap[k]);
            }
        }
        worst
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        let mut head = vec!["rho".to_string(), "envelope".to_string()];
        head.extend((1..=self.groups.len()).map(|g| format!("v_{g}")));
        w.write_record(&head).map_err(|e| Error::Format(e.to_string()))?;
        for k in 0..self.rho.len() {
            let mut rec = vec![format!("{:.12e}", self.rho[k]), format!("{:.12e}", self.envelope[k])];
            rec.extend(self.groups.iter().map(|c| format!("{:.12e}", c[k])));
            w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn linspace_into(out: &mut Vec<f64>, a: f64, b: f64, count: usize) {
    for i in 0..count {
        let x = a + (b - a) * i as f64 / count as f64;
        if out.last().is_none_or(|&l| x > l) {
            out.push(x);
        }
    }
}

/// Grid on `[0, end]` that places every breakpoint as a node; nodes spread by segment length.
pub fn breakpoint_grid(breaks: &[f64], end: f64, nodes: usize) -> Vec<f64> {
    let mut b: Vec<f64> = breaks.iter().copied().filter(|&x| x > 0.0 && x < end).collect();
    b.push(0.0);
    b.push(end);
    b.sort_by(|x, y| x.total_cmp(y));
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * end);
    let mut out = Vec::with_capacity(nodes + b.len());
    for w in b.windows(2) {
        let share = ((w[1] - w[0]) / end * nodes as f64).ceil() as usize;
        linspace_into(&mut out, w[0], w[1], share.max(16));
    }
    out.push(end);
    out
}

/// Raw per-group curves: equal to `Omega_S` below the fixed point, split from `varphi_L` above.
pub fn build_group_curves(pair: &TransferPair, omega: &dyn MmseFn, plan: &GroupPlan, nodes: usize) -> Result<GroupCurves> {
    if plan.total_antennas() != pair.n() {
        return Err(Error::Parameter(format!(
            "plan covers {} antennas, channel has {}",
            plan.total_antennas(),
            pair.n()
        )));
    }
    let fp = find_fixed_point(pair, omega);
    let rho = breakpoint_grid(&[fp.rho_star, pair.phi_one()], pair.upper(), nodes);
    let mut envelope = Vec::with_capacity(rho.len());
    let mut cap = Vec::with_capacity(rho.len());
    let mut groups = vec![Vec::with_capacity(rho.len()); plan.groups()];
    for &r in &rho {
        let om = omega.mmse(r);
        let split = if r >= pair.upper() {
            envelope.push(0.0);
            vec![0.0; plan.groups()]
        } else if r <= fp.rho_star {
            let e = om.min(pair.varphi_l(r));
            envelope.push(e);
            vec![e; plan.groups()]
        } else {
            let e = om.min(pair.varphi_l(r));
            envelope.push(e);
            split_variances(e, plan)?
        };
        cap.push(om);
        for (g, x) in split.into_iter().enumerate() {
            groups[g].push(x);
        }
    }
    Ok(GroupCurves { rho, envelope, cap, groups, weights: plan.weights() })
}

fn check_monotone(c: &GroupCurves) -> Result<()> {
    for (g, curve) in c.groups.iter().enumerate() {
        for k in 1..curve.len() {
            if curve[k] > curve[k - 1] + 1e-12 + 1e-9 * curve[k - 1] {
                return Err(Error::Allocation(format!(
                    "group {} curve increases at rho={:.6} ({:.9e} -> {:.9e})",
                    g + 1,
                    c.rho[k],
                    curve[k - 1],
                    curve[k]
                )));
            }
        }
    }
    Ok(())
}

/// Clip every group to the `Omega_S` cap, spreading the clipped mass over groups with headroom.
pub fn adjust_curves(raw: &GroupCurves) -> Result<GroupCurves> {
    let mut out = raw.clone();
    let g = out.groups.len();
    for k in 0..out.rho.len() {
        let cap = out.cap[k];
        for _round in 0..(4 * g + 4) {
            let mut excess = 0.0;
            for i in 0..g {
                if out.groups[i][k] > cap {
                    excess += out.weights[i] * (out.groups[i][k] - cap);
                    out.groups[i][k] = cap;
                }
            }
            if excess <= 0.0 {
                break;
            }
            let room: f64 = (0..g).filter(|&i| out.groups[i][k] < cap).map(|i| out.weights[i]).sum();
            if room <= 0.0 {
                if excess > 1e-13 {
                    return Err(Error::Allocation(format!(
                        "envelope exceeds the Omega_S cap at rho={} (excess {excess:e})",
                        out.rho[k]
                    )));
                }
                break;
            }
            let delta = excess / room;
            for i in 0..g {
                if out.groups[i][k] < cap {
                    out.groups[i][k] += delta;
                }
            }
        }
    }
    check_monotone(&out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRate {
    pub group: usize,
    pub antennas: usize,
    pub users: usize,
    /// Area under the group curve (nats per antenna).
    pub code_rate_nats: f64,
    pub rate_nats: f64,
    pub rate_bits: f64,
    pub per_user_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTuple {
    pub groups: Vec<GroupRate>,
    pub sum_nats: f64,
    pub sum_bits: f64,
}

impl RateTuple {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        w.write_record(["group", "antennas", "rate_bits"]).map_err(|e| Error::Format(e.to_string()))?;
        for g in &self.groups {
            w.write_record([g.group.to_string(), g.antennas.to_string(), format!("{:.6}", g.rate_bits)])
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn group_rate_tuple(curves: &GroupCurves, plan: &GroupPlan) -> Result<RateTuple> {
    if curves.groups.len() != plan.groups() {
        return Err(Error::Parameter("curve/plan group count mismatch".into()));
    }
    let mut groups = Vec::new();
    for g in 0..plan.groups() {
        let r = code_rate_from_curve(&curves.group_curve(g)?)?;
        let a = plan.antennas[g];
        let rate = a as f64 * r;
        groups.push(GroupRate {
            group: g + 1,
            antennas: a,
            users: plan.users[g],
            code_rate_nats: r,
            rate_nats: rate,
            rate_bits: rate / LN2,
            per_user_bits: rate / LN2 / plan.users[g] as f64,
        });
    }
    let sum_nats = groups.iter().map(|g| g.rate_nats).sum::<f64>();
    Ok(RateTuple { groups, sum_nats, sum_bits: sum_nats / LN2 })
}

/// Build, adjust and integrate in one call.
pub fn allocate(pair: &TransferPair, omega: &dyn MmseFn, plan: &GroupPlan, nodes: usize) -> Result<(GroupCurves, RateTuple)> {
    let raw = build_group_curves(pair, omega, plan, nodes)?;
    let adj = adjust_curves(&raw)?;
    let t = group_rate_tuple(&adj, plan)?;
    Ok((adj, t))
}

/// Extreme point of the two-group region where group 1 (columns `group1`) is decoded as if alone.
pub fn extreme_point_curves(
    ch: &ChannelMatrix,
    snr: SnrPoint,
    omega: &dyn MmseFn,
    group1: &[usize],
    nodes: usize,
) -> Result<GroupCurves> {
    let n = ch.n();
    let n1 = group1.len();
    if n1 == 0 || n1 >= n {
        return Err(Error::Parameter("group 1 must be a proper non-empty column subset".into()));
    }
    let full = TransferPair::from_channel(ch, snr)?;
    let sub = ch.columns(group1)?;
    let sv = sub.singular_values();
    let mut e: Vec<f64> = sv.iter().copied().filter(|&x| x > 1e-12 * sv.max()).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    let part = TransferPair::new(&e, n1, snr)?;
    let fp_full = find_fixed_point(&full, omega);
    let fp_part = find_fixed_point(&part, omega);
    let end = full.upper().max(part.upper());
    let rho = breakpoint_grid(
        &[fp_full.rho_star, fp_part.rho_star, full.phi_one(), part.phi_one(), full.upper(), part.upper()],
        end,
        nodes,
    );
    let w1 = n1 as f64 / n as f64;
    let w2 = 1.0 - w1;
    let (mut env, mut cap, mut g1, mut g2) = (vec![], vec![], vec![], vec![]);
    for &r in &rho {
        let om = omega.mmse(r);
        let ev = if r >= full.upper() { 0.0 } else { om.min(full.varphi_l(r)) };
        let a = if r >= part.upper() { 0.0 } else { om.min(part.varphi_l(r)) };
        let b = (ev - w1 * a) / w2;
        if b < -1e-12 {
            return Err(Error::Allocation(format!(
                "extreme point unreachable: complement negative ({b:e}) at rho={r}"
            )));
        }
        env.push(ev);
        cap.push(om);
        g1.push(a);
        g2.push(b.max(0.0));
    }
    Ok(GroupCurves { rho, envelope: env, cap, groups: vec![g1, g2], weights: vec![w1, w2] })
}
