use gmimo::allocation::{allocate, split_variances, GroupPlan};
use gmimo::channel::{gen_ill_conditioned, geometric_spectrum, omega_l, SnrPoint};
use gmimo::constellation::{Constellation, MmseCurve, Modulation};
use gmimo::ldpc::DegreeDistribution;
use gmimo::receiver::{orthogonalize, Layout};
use gmimo::se::{find_fixed_point, TransferPair};
use gmimo::sim::apply_csi_error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn qpsk_curve() -> &'static MmseCurve {
    static C: OnceLock<MmseCurve> = OnceLock::new();
    C.get_or_init(|| Constellation::new(Modulation::Qpsk).default_curve().unwrap())
}

fn k10_spectrum() -> &'static [f64] {
    static S: OnceLock<Vec<f64>> = OnceLock::new();
    S.get_or_init(|| geometric_spectrum(100, 150, 10.0).unwrap())
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn interpolated_curve_never_increases(
        steps in prop::collection::vec(0.0f64..0.2, 3..20),
        gaps in prop::collection::vec(0.01f64..2.0, 20),
        probes in prop::collection::vec(0.0f64..1.0, 2..10),
    ) {
        let mut rho = vec![0.0];
        let mut vals = vec![1.0];
        for (i, s) in steps.iter().enumerate() {
            rho.push(rho[i] + gaps[i]);
            vals.push((vals[i] - s).max(0.0));
        }
        let end = *rho.last().unwrap();
        let curve = MmseCurve::new(rho, vals).unwrap();
        let mut xs: Vec<f64> = probes.iter().map(|p| p * end * 1.2).collect();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            prop_assert!(curve.eval(w[1]) <= curve.eval(w[0]) + 1e-15);
        }
    }

    #[test]
    fn discrete_mmse_strictly_decreasing(m in 0usize..3, a in 0.01f64..20.0, d in 0.01f64..5.0) {
        let c = Constellation::new([Modulation::Qpsk, Modulation::Psk8, Modulation::Qam16][m]);
        let (x, y) = (c.mmse_of(a).unwrap(), c.mmse_of(a + d).unwrap());
        prop_assert!(y < x, "{} {} -> {} {}", a, x, a + d, y);
    }

    #[test]
    fn omega_l_decreases_in_rho_and_snr(
        kappa in 1.5f64..60.0, snr in 0.1f64..200.0, rho in 0.0f64..20.0, d in 0.01f64..5.0,
    ) {
        let e = geometric_spectrum(20, 30, kappa).unwrap();
        let base = omega_l(&e, 30, snr, rho).unwrap();
        prop_assert!(omega_l(&e, 30, snr, rho + d).unwrap() < base);
        prop_assert!(omega_l(&e, 30, snr * (1.0 + d), rho).unwrap() < base);
    }

    #[test]
    fn varphi_below_awgn_and_equal_early(db in -2.0f64..12.0, rho in 0.0f64..30.0) {
        let pair = TransferPair::new(k10_spectrum(), 150, SnrPoint::from_db(db).unwrap()).unwrap();
        let v = pair.varphi_l(rho);
        let awgn = 1.0 / (1.0 + rho);
        prop_assert!(v <= awgn + 1e-12);
        if rho < pair.phi_one() * 0.999 {
            prop_assert!((v - awgn).abs() < 1e-12);
        }
    }

    #[test]
    fn split_keeps_weighted_mean(v in 1e-4f64..1.0, b in 0.05f64..1e3, cs in 1.0f64..3.0) {
        let plan = GroupPlan::two_group(b, cs, [60, 40], [1, 1]).unwrap();
        if let Ok(s) = split_variances(v, &plan) {
            let m = 0.6 * s[0] + 0.4 * s[1];
            prop_assert!((m - v).abs() < 1e-9 * v.max(1e-3), "{s:?} vs {v}");
            prop_assert!(s.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn degree_text_round_trip(
        lam in prop::collection::btree_map(2usize..30, 0.01f64..1.0, 1..6),
        mu in prop::collection::btree_map(2usize..40, 0.01f64..1.0, 1..4),
    ) {
        let ls: f64 = lam.values().sum();
        let ms: f64 = mu.values().sum();
        let dd = DegreeDistribution::new(
            lam.iter().map(|(&d, &w)| (d, w / ls)).collect(),
            mu.iter().map(|(&d, &w)| (d, w / ms)).collect(),
        );
        prop_assume!(dd.is_ok());
        let dd = dd.unwrap();
        let back = DegreeDistribution::parse(&dd.to_text()).unwrap();
        prop_assert!((back.design_rate() - dd.design_rate()).abs() < 1e-12);
        prop_assert_eq!(back.lambda().len(), dd.lambda().len());
    }

    #[test]
    fn orthogonalize_is_affine(v in 0.05f64..1.0, frac in 0.05f64..0.95, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let omega = v * frac;
        let raw = DMatrix::from_element(3, 1, Complex64::new(a, b));
        let input = DMatrix::from_element(3, 1, Complex64::new(b, a));
        let (out, c, _) = orthogonalize(&raw, &input, v, omega).unwrap();
        let want = c * raw[(0, 0)] + (1.0 - c) * input[(0, 0)];
        prop_assert!((out[(1, 0)] - want).norm() < 1e-9 * (1.0 + want.norm()));
        if c.abs() <= 1e3 {
            prop_assert!((c - v / (v - omega)).abs() < 1e-12 * c.abs());
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn generated_channel_has_unit_column_energy(m in 2usize..24, extra in 0usize..24, kappa in 1.0f64..80.0, seed in 0u64..1000) {
        let n = m + extra;
        let ch = gen_ill_conditioned(m, n, kappa, seed).unwrap();
        let s: f64 = ch.spectrum().iter().map(|e| e * e).sum();
        prop_assert!((s - n as f64).abs() / (n as f64) < 1e-12);
        let fro: f64 = ch.entries().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((fro - n as f64).abs() / (n as f64) < 1e-9);
    }

    #[test]
    fn omega_l_depends_on_spectrum_only(kappa in 1.5f64..30.0, s1 in 0u64..500, rho in 0.01f64..10.0) {
        let a = gen_ill_conditioned(12, 18, kappa, s1).unwrap();
        let b = gen_ill_conditioned(12, 18, kappa, s1 + 1).unwrap();
        let snr = SnrPoint::from_db(5.0).unwrap();
        let (x, y) = (
            TransferPair::from_channel(&a, snr).unwrap().omega_l(rho),
            TransferPair::from_channel(&b, snr).unwrap().omega_l(rho),
        );
        prop_assert!((x - y).abs() < 1e-12 * x);
    }

    #[test]
    fn csi_error_energy(stdvar in 0.05f64..1.0, seed in 0u64..1000) {
        let a = gen_ill_conditioned(40, 60, 10.0, 7).unwrap();
        let noisy = apply_csi_error(&a, stdvar, seed).unwrap();
        let e2: f64 = (noisy.entries() - a.entries()).iter().map(|z| z.norm_sqr()).sum::<f64>() / 2400.0;
        // 2400 chi-square(2) draws: relative sd about 2%
        prop_assert!((e2 / (stdvar * stdvar) - 1.0).abs() < 0.1, "{}", e2 / (stdvar * stdvar));
    }

    #[test]
    fn allocation_keeps_mean_and_cap(db in 1.0f64..8.0, lb in -1.0f64..3.0) {
        let pair = TransferPair::new(k10_spectrum(), 150, SnrPoint::from_db(db).unwrap()).unwrap();
        let om = qpsk_curve();
        let fp = find_fixed_point(&pair, om);
        let plan = GroupPlan::two_group(10f64.powf(lb), GroupPlan::c_star_of(&fp, om), [75, 75], [1, 1]).unwrap();
        let (curves, rates) = allocate(&pair, om, &plan, 600).unwrap();
        prop_assert!(curves.mean_residual() < 1e-9, "{}", curves.mean_residual());
        prop_assert!(curves.cap_excess() <= 1e-12, "{}", curves.cap_excess());
        for g in &curves.groups {
            prop_assert!(g.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
        prop_assert!(rates.groups.iter().all(|r| r.rate_bits >= 0.0));
    }

    #[test]
    fn posterior_variance_averages_to_mmse(rho in 0.05f64..10.0, seed in 0u64..100) {
        use rand::Rng;
        let c = Constellation::new(Modulation::Qpsk);
        let mut rng = gmimo::rng::stream_rng(seed, gmimo::rng::Stream::Measurement, 0);
        let sd = (0.5 / rho).sqrt();
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let i = rng.random_range(0..4);
            let z: (f64, f64) = (rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal));
            let r = c.points()[i] + Complex64::new(z.0 * sd, z.1 * sd);
            acc += c.posterior_mean_var(r, rho).1;
        }
        let want = c.mmse_of(rho).unwrap();
        prop_assert!((acc / n as f64 - want).abs() < 0.03 * want + 1e-3, "{} vs {}", acc / n as f64, want);
    }

    #[test]
    fn layout_scatter_gather(users in 1usize..5, per_user in 1usize..4, slots in 1usize..6) {
        let ants = users * per_user;
        let lay = Layout::uniform(&[ants], per_user, slots).unwrap();
        let data: Vec<Vec<Complex64>> = (0..users)
            .map(|u| (0..per_user * slots).map(|j| Complex64::new(u as f64, j as f64)).collect())
            .collect();
        let x = lay.scatter(&data).unwrap();
        prop_assert_eq!(x.nrows(), ants);
        for (u, d) in data.iter().enumerate() {
            prop_assert_eq!(&lay.gather(&x, u), d);
        }
    }
}
