//! Monte-Carlo BER experiments: encode, modulate, transmit, detect, count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{gen_iid_gaussian, gen_ill_conditioned, CMat, ChannelMatrix, SnrPoint};
use crate::constellation::{Constellation, Modulation};
use crate::error::{Error, Result};
use crate::ldpc::{build_graph, measure_code_curve, se_threshold, DegreeDistribution, LdpcCode, ThresholdConfig};
use crate::constellation::MmseFn;
use crate::receiver::{run_receiver, Denoiser, Layout, LinearDetector, ReceiverConfig, ReceiverKind};
use crate::rng::{stream_rng, Stream};
use crate::se::TransferPair;

/// Trials run together before the stopping rule is checked; fixed so results do not
/// depend on the worker count.
const BATCH: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub m: usize,
    pub n: usize,
    /// Condition number; absent means IID Gaussian entries.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "one")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default = "qpsk")]
    pub constellation: String,
    pub group_antennas: Vec<usize>,
    pub antennas_per_user: usize,
    /// One degree-distribution file per group, relative to the config file.
    pub degree_files: Vec<PathBuf>,
    pub code_length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub snr_db: Vec<f64>,
    #[serde(default = "thirty")]
    pub max_iters: usize,
    #[serde(default = "fifty")]
    pub inner_iters: usize,
    #[serde(default = "twenty")]
    pub trial_budget: usize,
    #[serde(default = "hundred")]
    pub error_events: usize,
    #[serde(default)]
    pub csi_error_stdvar: f64,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "both")]
    pub receivers: Vec<String>,
}

fn one() -> u64 {
    1
}
fn qpsk() -> String {
    "qpsk".into()
}
fn thirty() -> usize {
    30
}
fn fifty() -> usize {
    50
}
fn twenty() -> usize {
    20
}
fn hundred() -> usize {
    100
}
fn both() -> Vec<String> {
    vec!["oamp".into(), "turbo".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSpec,
    pub system: SystemSpec,
    pub run: RunSpec,
    /// Directory that relative degree files resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub const DESK_PRESET: &str = r#"
[channel]
m = 43
n = 64
kappa = 10.0
seed = 1

[system]
constellation = "qpsk"
group_antennas = [32, 32]
antennas_per_user = 8
degree_files = ["k10_sym.dd", "k10_sym.dd"]
code_length = 10000

[run]
snr_db = [4.0, 4.5, 5.0, 5.5, 6.0]
max_iters = 30
inner_iters = 50
trial_budget = 20
error_events = 100
csi_error_stdvar = 0.0
seed = 1
receivers = ["oamp", "turbo"]
"#;

pub const FULL_PRESET: &str = r#"
[channel]
m = 333
n = 500
kappa = 10.0
seed = 1

[system]
constellation = "qpsk"
group_antennas = [250, 250]
antennas_per_user = 250
degree_files = ["k10_sym.dd", "k10_sym.dd"]
code_length = 100000

[run]
snr_db = [3.0, 3.5, 4.0]
max_iters = 30
inner_iters = 50
trial_budget = 10
error_events = 100
csi_error_stdvar = 0.0
seed = 1
receivers = ["oamp", "turbo"]
"#;

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn preset(name: &str, base_dir: &Path) -> Result<Self> {
        match name {
            "desk" => Self::from_toml(DESK_PRESET, base_dir),
            "full" => Self::from_toml(FULL_PRESET, base_dir),
            other => Err(Error::Config(format!("unknown preset {other:?} (desk|full)"))),
        }
    }

    pub fn modulation(&self) -> Result<Modulation> {
        self.system.constellation.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn bits_per_symbol(&self) -> Result<usize> {
        Ok(Constellation::new(self.modulation()?).bits_per_symbol())
    }

    /// Channel uses per codeword.
    pub fn slots(&self) -> Result<usize> {
        let per = self.bits_per_symbol()? * self.system.antennas_per_user;
        Ok(self.system.code_length / per.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let cfgerr = |m: String| Err(Error::Config(m));
        let (c, s, r) = (&self.channel, &self.system, &self.run);
        if c.m == 0 || c.n == 0 {
            return cfgerr(format!("channel dimensions {}x{}", c.m, c.n));
        }
        if let Some(k) = c.kappa {
            if !(k >= 1.0 && k.is_finite()) {
                return cfgerr(format!("kappa must be >= 1, got {k}"));
            }
        }
        let m = self.modulation()?;
        if m == Modulation::Gaussian {
            return cfgerr("coded experiments need a discrete constellation".into());
        }
        if s.group_antennas.is_empty() || s.group_antennas.iter().sum::<usize>() != c.n {
            return cfgerr(format!("group antennas {:?} must sum to N={}", s.group_antennas, c.n));
        }
        if s.degree_files.len() != s.group_antennas.len() {
            return cfgerr(format!("{} degree files for {} groups", s.degree_files.len(), s.group_antennas.len()));
        }
        if s.antennas_per_user == 0 || s.group_antennas.iter().any(|&g| g % s.antennas_per_user != 0) {
            return cfgerr(format!("group antennas {:?} not divisible by {} per user", s.group_antennas, s.antennas_per_user));
        }
        let per = Constellation::new(m).bits_per_symbol() * s.antennas_per_user;
        if s.code_length == 0 || s.code_length % per != 0 {
            return cfgerr(format!("code length {} not divisible by antennas/user x bits/symbol = {per}", s.code_length));
        }
        if r.snr_db.is_empty() || r.snr_db.iter().any(|x| !x.is_finite()) {
            return cfgerr("snr_db sweep must be non-empty and finite".into());
        }
        if r.trial_budget == 0 || r.max_iters == 0 || r.inner_iters == 0 {
            return cfgerr("trial_budget, max_iters and inner_iters must be positive".into());
        }
        if !(r.csi_error_stdvar >= 0.0 && r.csi_error_stdvar.is_finite()) {
            return cfgerr(format!("csi_error_stdvar must be >= 0, got {}", r.csi_error_stdvar));
        }
        for name in &r.receivers {
            receiver_kind(name)?;
        }
        Ok(())
    }

    pub fn channel_matrix(&self) -> Result<ChannelMatrix> {
        let c = &self.channel;
        match c.kappa {
            Some(k) => gen_ill_conditioned(c.m, c.n, k, c.seed),
            None => gen_iid_gaussian(c.m, c.n, c.seed),
        }
    }

    pub fn degree_distributions(&self) -> Result<Vec<DegreeDistribution>> {
        self.system.degree_files.iter().map(|f| DegreeDistribution::load(&self.base_dir.join(f))).collect()
    }

    /// One code per group, built once per experiment.
    pub fn build_codes(&self) -> Result<Vec<LdpcCode>> {
        self.degree_distributions()?
            .iter()
            .enumerate()
            .map(|(g, dd)| build_graph(dd, self.system.code_length, self.run.seed.wrapping_add(g as u64)))
            .collect()
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::uniform(&self.system.group_antennas, self.system.antennas_per_user, self.slots()?)
    }
}

fn receiver_kind(name: &str) -> Result<ReceiverKind> {
    match name {
        "oamp" => Ok(ReceiverKind::OampVamp),
        "turbo" => Ok(ReceiverKind::TurboLmmse),
        other => Err(Error::Config(format!("unknown receiver {other:?} (oamp|turbo)"))),
    }
}

fn receiver_name(k: ReceiverKind) -> &'static str {
    match k {
        ReceiverKind::OampVamp => "oamp",
        ReceiverKind::TurboLmmse => "turbo",
    }
}

/// Receiver-side channel `A + E`, `E` IID complex Gaussian with per-entry std `stdvar`.
pub fn apply_csi_error(a: &ChannelMatrix, stdvar: f64, seed: u64) -> Result<ChannelMatrix> {
    if !(stdvar >= 0.0 && stdvar.is_finite()) {
        return Err(Error::Parameter(format!("stdvar must be >= 0, got {stdvar}")));
    }
    if stdvar == 0.0 {
        return Ok(a.clone());
    }
    let mut rng = stream_rng(seed, Stream::CsiError, 0);
    let sd = stdvar * std::f64::consts::FRAC_1_SQRT_2;
    let e = CMat::from_fn(a.m(), a.n(), |_, _| {
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        Complex64::new(re * sd, im * sd)
    });
    ChannelMatrix::from_entries(a.entries() + e)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BerRecord {
    pub receiver: String,
    pub snr_db: f64,
    pub ber: f64,
    pub group_ber: Vec<f64>,
    pub group_bler: Vec<f64>,
    pub trials: usize,
    pub error_events: usize,
    pub bits: usize,
    pub seconds: f64,
}

pub fn write_ber_csv(records: &[BerRecord], path: &Path) -> Result<()> {
    let g = records.first().map_or(0, |r| r.group_ber.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut head: Vec<String> = vec!["receiver".into(), "snr_db".into(), "ber".into()];
    head.extend((1..=g).map(|i| format!("ber_g{i}")));
    head.extend((1..=g).map(|i| format!("bler_g{i}")));
    head.extend(["trials", "error_events", "bits", "seconds"].map(String::from));
    w.write_record(&head).map_err(|e| Error::Io(e.into()))?;
    for r in records {
        let mut row = vec![r.receiver.clone(), format!("{}", r.snr_db), format!("{:e}", r.ber)];
        row.extend(r.group_ber.iter().map(|x| format!("{x:e}")));
        row.extend(r.group_bler.iter().map(|x| format!("{x:e}")));
        row.extend([r.trials.to_string(), r.error_events.to_string(), r.bits.to_string(), format!("{:.3}", r.seconds)]);
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Run manifest: the resolved config, every seed, and the build description.
pub fn manifest_json(cfg: &ExperimentConfig) -> Result<String> {
    let describe = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(&cfg.base_dir)
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into());
    let v = serde_json::json!({
        "config": cfg,
        "seeds": {
            "channel": cfg.channel.seed,
            "run": cfg.run.seed,
            "code_graphs": (0..cfg.system.group_antennas.len()).map(|g| cfg.run.seed.wrapping_add(g as u64)).collect::<Vec<_>>(),
        },
        "git_describe": describe,
        "crate_version": env!("CARGO_PKG_VERSION"),
    });
    serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))
}

struct TrialCounts {
    errors: Vec<usize>,
    bits: Vec<usize>,
    block_errors: Vec<usize>,
    blocks: Vec<usize>,
}

/// Everything fixed across trials of one experiment.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub channel: ChannelMatrix,
    pub rx_channel: ChannelMatrix,
    pub codes: Vec<LdpcCode>,
    pub layout: Layout,
    pub cons: Constellation,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let channel = cfg.channel_matrix()?;
        let rx_channel = apply_csi_error(&channel, cfg.run.csi_error_stdvar, cfg.run.seed)?;
        Ok(Prepared {
            cfg: cfg.clone(),
            rx_channel,
            channel,
            codes: cfg.build_codes()?,
            layout: cfg.layout()?,
            cons: Constellation::new(cfg.modulation()?),
        })
    }

    fn trial(&self, kind: ReceiverKind, det: &LinearDetector, snr: SnrPoint, snr_idx: usize, t: usize) -> Result<TrialCounts> {
        let seed = self.cfg.run.seed;
        let g = self.layout.groups();
        let words: Vec<Vec<u8>> = self
            .layout
            .users
            .iter()
            .enumerate()
            .map(|(u, um)| self.codes[um.group].random_codeword(&mut stream_rng(seed, Stream::Data, ((t as u64) << 20) | u as u64)))
            .collect();
        let syms: Vec<Vec<Complex64>> = words.iter().map(|w| self.cons.modulate(w)).collect::<Result<_>>()?;
        let x = self.layout.scatter(&syms)?;
        let mut rng = stream_rng(seed, Stream::Noise, ((snr_idx as u64) << 32) | t as u64);
        let y = crate::receiver::transmit(self.channel.entries(), &x, snr, &mut rng);
        let codes: Vec<&LdpcCode> = self.codes.iter().collect();
        let den = Denoiser::Coded { codes, layout: &self.layout, inner_iters: self.cfg.run.inner_iters };
        let rc = ReceiverConfig { max_iters: self.cfg.run.max_iters, tol: 1e-6 };
        let out = run_receiver(det, &y, &self.cons, &den, kind, &rc, None)?;
        let mut c = TrialCounts { errors: vec![0; g], bits: vec![0; g], block_errors: vec![0; g], blocks: vec![0; g] };
        for (u, (b, w)) in out.bits.iter().zip(&words).enumerate() {
            let grp = self.layout.users[u].group;
            let e = b.iter().zip(w).filter(|(a, c)| a != c).count();
            c.errors[grp] += e;
            c.bits[grp] += w.len();
            c.block_errors[grp] += (e > 0) as usize;
            c.blocks[grp] += 1;
        }
        Ok(c)
    }

    /// One snr point for one receiver, under the event-driven stopping rule.
    pub fn run_point(&self, kind: ReceiverKind, snr_db: f64, snr_idx: usize) -> Result<BerRecord> {
        let start = Instant::now();
        let snr = SnrPoint::from_db(snr_db)?;
        let det = LinearDetector::new(&self.rx_channel, snr);
        let g = self.layout.groups();
        let mut tot = TrialCounts { errors: vec![0; g], bits: vec![0; g], block_errors: vec![0; g], blocks: vec![0; g] };
        let mut trials = 0usize;
        let budget = self.cfg.run.trial_budget;
        while trials < budget && tot.errors.iter().sum::<usize>() < self.cfg.run.error_events {
            let hi = (trials + BATCH).min(budget);
            let batch: Vec<TrialCounts> = (trials..hi)
                .into_par_iter()
                .map(|t| self.trial(kind, &det, snr, snr_idx, t).map_err(|e| Error::Trial { trial: t, source: Box::new(e) }))
                .collect::<Result<_>>()?;
            for c in batch {
                for i in 0..g {
                    tot.errors[i] += c.errors[i];
                    tot.bits[i] += c.bits[i];
                    tot.block_errors[i] += c.block_errors[i];
                    tot.blocks[i] += c.blocks[i];
                }
            }
            trials = hi;
        }
        let bits: usize = tot.bits.iter().sum();
        let errs: usize = tot.errors.iter().sum();
        Ok(BerRecord {
            receiver: receiver_name(kind).into(),
            snr_db,
            ber: errs as f64 / bits.max(1) as f64,
            group_ber: tot.errors.iter().zip(&tot.bits).map(|(&e, &b)| e as f64 / b.max(1) as f64).collect(),
            group_bler: tot.block_errors.iter().zip(&tot.blocks).map(|(&e, &b)| e as f64 / b.max(1) as f64).collect(),
            trials,
            error_events: errs,
            bits,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Sweeps every snr point for every configured receiver.
pub fn run_ber(cfg: &ExperimentConfig) -> Result<Vec<BerRecord>> {
    let prep = Prepared::new(cfg)?;
    let mut out = Vec::new();
    for name in &cfg.run.receivers {
        let kind = receiver_kind(name)?;
        for (i, &db) in cfg.run.snr_db.iter().enumerate() {
            out.push(prep.run_point(kind, db, i)?);
        }
    }
    Ok(out)
}

/// SE threshold of the experiment's own codes on its own channel spectrum, from
/// Monte-Carlo measured curves.
pub fn desk_se_threshold(prep: &Prepared, rho_grid: &[f64], trials: usize, seed: u64) -> Result<f64> {
    let mut curves = Vec::new();
    for code in &prep.codes {
        curves.push(measure_code_curve(code, &prep.cons, rho_grid, trials, seed)?.curve);
    }
    let n = prep.cfg.channel.n as f64;
    let weighted: Vec<(&dyn MmseFn, f64)> = curves
        .iter()
        .zip(&prep.cfg.system.group_antennas)
        .map(|(c, &a)| (c as &dyn MmseFn, a as f64 / n))
        .collect();
    let spectrum = prep.channel.spectrum().to_vec();
    let nn = prep.cfg.channel.n;
    se_threshold(&weighted, rho_grid, |db| TransferPair::new(&spectrum, nn, SnrPoint::from_db(db)?), &ThresholdConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixtures() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
    }

    fn small(seed: u64) -> ExperimentConfig {
        let text = r#"
[channel]
m = 12
n = 16
kappa = 10.0
seed = 3

[system]
group_antennas = [8, 8]
antennas_per_user = 4
degree_files = ["regular_3_6.dd", "regular_3_6.dd"]
code_length = 1000

[run]
snr_db = [30.0]
trial_budget = 3
"#;
        let mut c = ExperimentConfig::from_toml(text, &fixtures()).unwrap();
        c.run.seed = seed;
        c
    }

    #[test]
    fn presets_parse_and_validate() {
        let d = ExperimentConfig::preset("desk", &fixtures()).unwrap();
        assert_eq!((d.channel.m, d.channel.n, d.system.code_length), (43, 64, 10_000));
        assert_eq!(d.slots().unwrap(), 625);
        let p = ExperimentConfig::preset("full", &fixtures()).unwrap();
        assert_eq!((p.channel.m, p.channel.n, p.system.code_length), (333, 500, 100_000));
        assert!(matches!(ExperimentConfig::preset("huge", &fixtures()), Err(Error::Config(_))));
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let base = small(1);
        let mut c = base.clone();
        c.system.code_length = 1001;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.run.snr_db.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.system.group_antennas = vec![8, 4];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base;
        c.run.receivers = vec!["map".into()];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[channel]\nm = 1", Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn high_snr_is_error_free_and_reproducible() {
        let cfg = small(7);
        let a = run_ber(&cfg).unwrap();
        let b = run_ber(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ber, 0.0);
            assert_eq!(x.trials, 3);
            assert_eq!(x.bits, 3 * 4 * 1000);
            assert_eq!((x.group_ber.clone(), x.trials, x.error_events), (y.group_ber.clone(), y.trials, y.error_events));
        }
    }

    #[test]
    fn csi_error_energy() {
        let ch = gen_ill_conditioned(40, 60, 10.0, 1).unwrap();
        assert_eq!(apply_csi_error(&ch, 0.0, 1).unwrap().entries(), ch.entries());
        let sd = 0.004;
        let p = apply_csi_error(&ch, sd, 1).unwrap();
        let e: f64 = (p.entries() - ch.entries()).iter().map(|z| z.norm_sqr()).sum::<f64>() / (40.0 * 60.0);
        // 2400 draws of an exponential variable: relative sd about 2%
        assert!((e / (sd * sd) - 1.0).abs() < 0.08, "{}", e / (sd * sd));
    }

    #[test]
    fn csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(2);
        let recs = vec![BerRecord {
            receiver: "oamp".into(),
            snr_db: 3.0,
            ber: 1e-3,
            group_ber: vec![1e-3, 1e-3],
            group_bler: vec![0.5, 0.5],
            trials: 2,
            error_events: 16,
            bits: 16000,
            seconds: 0.5,
        }];
        let p = dir.path().join("ber_results.csv");
        write_ber_csv(&recs, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("receiver,snr_db,ber,ber_g1,ber_g2,bler_g1,bler_g2,trials,error_events,bits,seconds"));
        let m: serde_json::Value = serde_json::from_str(&manifest_json(&cfg).unwrap()).unwrap();
        assert_eq!(m["seeds"]["run"], 2);
        assert_eq!(m["config"]["channel"]["m"], 12);
    }
}
