use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmimo::allocation::{allocate, GroupPlan};
use gmimo::channel::{gen_iid_gaussian, gen_ill_conditioned, load_spectrum_txt, ChannelMatrix, SnrPoint};
use gmimo::constellation::{Constellation, MmseCurve, MmseFn, Modulation};
use gmimo::ldpc::{
    measure_transfer_curve, optimize_degrees, se_threshold, DegreeDistribution, OptimizeConfig, ThresholdConfig,
};
use gmimo::se::{achievable_avg_rate, capacity, find_fixed_point, turbo_lmmse_rate, TransferPair};
use gmimo::sim::{manifest_json, run_ber, write_ber_csv, ExperimentConfig};
use gmimo::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Parser)]
#[command(name = "gmimo", version, about = "Multi-user MIMO capacity, rate allocation, LDPC curve matching and iterative detection")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Top,
}

#[derive(Subcommand)]
enum Top {
    /// Channel matrices.
    #[command(subcommand)]
    Chan(ChanCmd),
    /// Constellation MMSE.
    #[command(subcommand)]
    Mmse(MmseCmd),
    /// Capacity and achievable rates.
    #[command(subcommand)]
    Se(SeCmd),
    /// Group rate allocation.
    #[command(subcommand)]
    Alloc(AllocCmd),
    /// LDPC ensembles.
    #[command(subcommand)]
    Code(CodeCmd),
    /// Link-level simulation.
    #[command(subcommand)]
    Ber(BerCmd),
}

#[derive(Subcommand)]
enum ChanCmd {
    /// Generate a channel and write chan.bin and spectrum.txt.
    Gen(ChanGen),
}

#[derive(Args)]
struct ChanGen {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// Condition number of the geometric spectrum.
    #[arg(long, conflicts_with = "iid")]
    kappa: Option<f64>,
    /// IID Gaussian entries instead of a geometric spectrum.
    #[arg(long)]
    iid: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MmseCmd {
    /// Print the MMSE at one rho, or tabulate a curve into DIR/mmse_curve.csv.
    Curve(MmseCurveArgs),
}

#[derive(Args)]
struct MmseCurveArgs {
    #[arg(long = "mod")]
    modulation: String,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    rho_min: f64,
    #[arg(long, default_value_t = 1e3)]
    rho_max: f64,
    #[arg(long, default_value_t = 512)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SnrArgs {
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// A:B:STEP in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_sweep: Option<String>,
}

#[derive(Subcommand)]
enum SeCmd {
    /// Constrained sum capacity per antenna.
    Capacity(SeCommon),
    /// Two-group rate tuples over b values, written to DIR/rate_region.csv.
    Region(RegionArgs),
    /// Turbo-LMMSE rate next to the OAMP/VAMP achievable rate.
    TurboRate(SeCommon),
}

#[derive(Args)]
struct SeCommon {
    #[arg(long)]
    channel: PathBuf,
    #[arg(long = "mod")]
    modulation: String,
    #[command(flatten)]
    snr: SnrArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    channel: PathBuf,
    #[arg(long = "mod")]
    modulation: String,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    /// Comma-separated b values.
    #[arg(long, value_delimiter = ',', default_value = "0.2,1,2.5,100")]
    b: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AllocCmd {
    /// Per-group target curves and rates for one allocation.
    Plan(AllocArgs),
}

#[derive(Args)]
struct AllocArgs {
    #[arg(long)]
    channel: PathBuf,
    #[arg(long = "mod")]
    modulation: String,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    /// Number of equal-size groups.
    #[arg(long, default_value_t = 2)]
    groups: usize,
    /// Two-group asymmetry gamma_1/gamma_2.
    #[arg(long, conflicts_with = "gammas")]
    b: Option<f64>,
    /// Comma-separated gammas, one per group.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CodeCmd {
    /// Design rate of each distribution.
    Rate(CodeRateArgs),
    /// Monte-Carlo decoder MMSE curve.
    Measure(MeasureArgs),
    /// SE threshold of group codes on a channel.
    Threshold(ThresholdArgs),
    /// Differential-evolution search of variable degrees against a target curve.
    Optimize(OptimizeArgs),
}

#[derive(Args)]
struct CodeRateArgs {
    #[arg(long, num_args = 1.., required = true)]
    dd: Vec<PathBuf>,
    #[arg(long = "mod", default_value = "qpsk")]
    modulation: String,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    dd: PathBuf,
    #[arg(long = "mod", default_value = "qpsk")]
    modulation: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// A:B:STEP rho grid.
    #[arg(long, default_value = "0.15:3.0:0.15")]
    rho_sweep: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    /// One file per group; groups are weighted equally unless --weights is given.
    #[arg(long, num_args = 1.., required = true)]
    dd: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    channel: PathBuf,
    #[arg(long = "mod", default_value = "qpsk")]
    modulation: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value = "0.15:3.0:0.15")]
    rho_sweep: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Target curve CSV (rho,value).
    #[arg(long)]
    target: PathBuf,
    /// Fixed check degrees, e.g. "8:0.6,25:0.4".
    #[arg(long)]
    mu: String,
    #[arg(long, default_value_t = 30)]
    dv_max: usize,
    #[arg(long, default_value_t = 40)]
    population: usize,
    #[arg(long, default_value_t = 120)]
    generations: usize,
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Finalists re-scored by Monte-Carlo (0 disables).
    #[arg(long, default_value_t = 0)]
    finalists: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BerCmd {
    /// BER sweep from a TOML config or a named preset.
    Run(BerArgs),
}

#[derive(Args)]
struct BerArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// desk or full; degree files resolve against --fixtures.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "fixtures")]
    fixtures: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_sweep: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad sweep {s:?}: {e}")))?;
    let [a, b, step] = parts[..] else {
        return Err(Error::Config(format!("sweep {s:?} must be A:B:STEP")));
    };
    if !(step > 0.0) || b < a {
        return Err(Error::Config(format!("sweep {s:?} needs STEP > 0 and B >= A")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| a + step * i as f64).collect())
}

fn snr_list(s: &SnrArgs) -> Result<Vec<f64>> {
    match (&s.snr_db, &s.snr_sweep) {
        (Some(x), None) => Ok(vec![*x]),
        (None, Some(sw)) => parse_sweep(sw),
        _ => Err(Error::Config("give exactly one of --snr-db or --snr-sweep".into())),
    }
}

fn modulation(s: &str) -> Result<Constellation> {
    let m: Modulation = s.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    Ok(Constellation::new(m))
}

/// Channel file or spectrum text; returns `(N, spectrum, full matrix if present)`.
fn load_channel(path: &Path) -> Result<(usize, Vec<f64>, Option<ChannelMatrix>)> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"GMUCHAN1") {
        let ch = ChannelMatrix::from_bytes(&bytes)?;
        Ok((ch.n(), ch.spectrum().to_vec(), Some(ch)))
    } else {
        let (_, n, e) = load_spectrum_txt(path)?;
        Ok((n, e, None))
    }
}

fn prepare_out(dir: &Path, manifest: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn manifest(cmd: &str, args: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "command": cmd,
        "args": args,
        "argv": std::env::args().collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn chan_gen(a: &ChanGen) -> Result<()> {
    let ch = match (a.kappa, a.iid) {
        (Some(k), false) => gen_ill_conditioned(a.m, a.n, k, a.seed)?,
        (None, true) => gen_iid_gaussian(a.m, a.n, a.seed)?,
        _ => return Err(Error::Config("give --kappa K or --iid".into())),
    };
    prepare_out(&a.out, manifest("chan gen", serde_json::json!({"m": a.m, "n": a.n, "kappa": a.kappa, "iid": a.iid, "seed": a.seed})))?;
    ch.save(&a.out.join("chan.bin"))?;
    ch.save_spectrum_txt(&a.out.join("spectrum.txt"))?;
    println!("wrote {}", a.out.join("chan.bin").display());
    Ok(())
}

fn mmse_curve(a: &MmseCurveArgs) -> Result<()> {
    let c = modulation(&a.modulation)?;
    if let Some(r) = a.rho {
        println!("{}", c.mmse_of(r)?);
        return Ok(());
    }
    let out = a.out.as_ref().ok_or_else(|| Error::Config("give --rho or --out".into()))?;
    let curve = c.tabulate_mmse(a.rho_min, a.rho_max, a.points)?;
    prepare_out(out, manifest("mmse curve", serde_json::json!({"mod": a.modulation, "rho_min": a.rho_min, "rho_max": a.rho_max, "points": a.points})))?;
    curve.write_csv(&out.join("mmse_curve.csv"))?;
    Ok(())
}

fn se_capacity(a: &SeCommon) -> Result<()> {
    let c = modulation(&a.modulation)?;
    let om = c.default_curve()?;
    let (n, e, _) = load_channel(&a.channel)?;
    let snrs = snr_list(&a.snr)?;
    let mut rows = Vec::new();
    for &db in &snrs {
        let pair = TransferPair::new(&e, n, SnrPoint::from_db(db)?)?;
        let rep = if c.is_gaussian() { capacity(&pair, &gmimo::constellation::MmseCurve::gaussian())? } else { capacity(&pair, &om)? };
        let bits = rep.per_antenna_bits();
        println!("{db}\t{bits:.6}");
        rows.push((db, bits));
    }
    if let Some(out) = &a.out {
        prepare_out(out, manifest("se capacity", serde_json::json!({"channel": a.channel, "mod": a.modulation, "snr_db": snrs})))?;
        let mut s = String::from("snr_db,per_antenna_bits\n");
        for (db, b) in rows {
            s.push_str(&format!("{db},{b:.10}\n"));
        }
        fs::write(out.join("capacity_vs_snr.csv"), s)?;
    }
    Ok(())
}

fn omega_for(c: &Constellation) -> Result<MmseCurve> {
    if c.is_gaussian() {
        Ok(MmseCurve::gaussian())
    } else {
        c.default_curve()
    }
}

fn se_turbo(a: &SeCommon) -> Result<()> {
    let c = modulation(&a.modulation)?;
    let om = omega_for(&c)?;
    let (n, e, _) = load_channel(&a.channel)?;
    let snrs = snr_list(&a.snr)?;
    let mut s = String::from("snr_db,oamp_bits,turbo_bits\n");
    for &db in &snrs {
        let pair = TransferPair::new(&e, n, SnrPoint::from_db(db)?)?;
        let (o, t) = (achievable_avg_rate(&pair, &om) / LN2, turbo_lmmse_rate(&pair, &om) / LN2);
        println!("{db}\toamp {o:.6}\tturbo {t:.6}");
        s.push_str(&format!("{db},{o:.10},{t:.10}\n"));
    }
    if let Some(out) = &a.out {
        prepare_out(out, manifest("se turbo-rate", serde_json::json!({"channel": a.channel, "mod": a.modulation, "snr_db": snrs})))?;
        fs::write(out.join("turbo_rate.csv"), s)?;
    }
    Ok(())
}

fn two_group_plan(pair: &TransferPair, om: &MmseCurve, n: usize, gammas: Vec<f64>) -> Result<GroupPlan> {
    let g = gammas.len();
    if g == 0 || n % g != 0 {
        return Err(Error::Config(format!("{n} antennas cannot be split into {g} equal groups")));
    }
    let fp = find_fixed_point(pair, om);
    let cs = GroupPlan::c_star_of(&fp, om);
    GroupPlan::new(gammas, cs, vec![n / g; g], vec![1; g])
}

fn se_region(a: &RegionArgs) -> Result<()> {
    let c = modulation(&a.modulation)?;
    let om = omega_for(&c)?;
    let (n, e, _) = load_channel(&a.channel)?;
    let pair = TransferPair::new(&e, n, SnrPoint::from_db(a.snr_db)?)?;
    prepare_out(&a.out, manifest("se region", serde_json::json!({"channel": a.channel, "mod": a.modulation, "snr_db": a.snr_db, "b": a.b})))?;
    let mut s = String::from("b,R1_bits,R2_bits\n");
    for &b in &a.b {
        if !(b > 0.0) {
            return Err(Error::Config(format!("b must be positive, got {b}")));
        }
        let plan = two_group_plan(&pair, &om, n, vec![1.0, 1.0 / b])?;
        let (_, rt) = allocate(&pair, &om, &plan, a.nodes)?;
        let (r1, r2) = (rt.groups[0].rate_bits, rt.groups[1].rate_bits);
        println!("b={b}\t{r1:.3}\t{r2:.3}");
        s.push_str(&format!("{b},{r1:.6},{r2:.6}\n"));
    }
    fs::write(a.out.join("rate_region.csv"), s)?;
    Ok(())
}

fn alloc_plan(a: &AllocArgs) -> Result<()> {
    let c = modulation(&a.modulation)?;
    let om = omega_for(&c)?;
    let (n, e, _) = load_channel(&a.channel)?;
    let pair = TransferPair::new(&e, n, SnrPoint::from_db(a.snr_db)?)?;
    let gammas = match (&a.gammas, a.b) {
        (Some(g), None) => g.clone(),
        (None, Some(b)) if a.groups == 2 => vec![1.0, 1.0 / b],
        (None, Some(_)) => return Err(Error::Config("--b needs --groups 2".into())),
        (None, None) => vec![1.0; a.groups],
        _ => unreachable!(),
    };
    if gammas.len() != a.groups {
        return Err(Error::Config(format!("{} gammas for {} groups", gammas.len(), a.groups)));
    }
    let plan = two_group_plan(&pair, &om, n, gammas.clone())?;
    prepare_out(&a.out, manifest("alloc plan", serde_json::json!({"channel": a.channel, "mod": a.modulation, "snr_db": a.snr_db, "gammas": gammas})))?;
    let (curves, rt) = allocate(&pair, &om, &plan, a.nodes)?;
    curves.write_csv(&a.out.join("group_curves.csv"))?;
    rt.write_csv(&a.out.join("rates.csv"))?;
    for g in &rt.groups {
        println!("group {}\tantennas {}\trate {:.3} bits", g.group, g.antennas, g.rate_bits);
    }
    println!("sum\t{:.3} bits", rt.sum_bits);
    Ok(())
}

fn code_rate(a: &CodeRateArgs) -> Result<()> {
    let c = modulation(&a.modulation)?;
    for p in &a.dd {
        let dd = DegreeDistribution::load(p)?;
        let r = dd.design_rate();
        println!("{}\t{r:.6}\t{:.6} bits/symbol", p.display(), r * c.bits_per_symbol() as f64);
    }
    Ok(())
}

fn code_measure(a: &MeasureArgs) -> Result<()> {
    let c = modulation(&a.modulation)?;
    let dd = DegreeDistribution::load(&a.dd)?;
    let grid = parse_sweep(&a.rho_sweep)?;
    prepare_out(&a.out, manifest("code measure", serde_json::json!({"dd": a.dd, "mod": a.modulation, "n": a.n, "trials": a.trials, "rho": grid, "seed": a.seed})))?;
    let est = measure_transfer_curve(&dd, &c, &grid, a.n, a.trials, a.seed)?;
    est.write_csv(&a.out.join("code_curve.csv"))?;
    for (r, v) in est.curve.rho().iter().zip(est.curve.values()) {
        println!("{r:.4}\t{v:.6}");
    }
    Ok(())
}

fn code_threshold(a: &ThresholdArgs) -> Result<()> {
    let c = modulation(&a.modulation)?;
    let (n, e, _) = load_channel(&a.channel)?;
    let grid = parse_sweep(&a.rho_sweep)?;
    let g = a.dd.len();
    let weights = a.weights.clone().unwrap_or_else(|| vec![1.0 / g as f64; g]);
    if weights.len() != g {
        return Err(Error::Config(format!("{} weights for {g} groups", weights.len())));
    }
    if let Some(out) = &a.out {
        prepare_out(out, manifest("code threshold", serde_json::json!({"dd": a.dd, "weights": weights, "channel": a.channel, "n": a.n, "trials": a.trials, "rho": grid, "seed": a.seed})))?;
    }
    let mut curves = Vec::new();
    for (i, p) in a.dd.iter().enumerate() {
        let dd = DegreeDistribution::load(p)?;
        let est = measure_transfer_curve(&dd, &c, &grid, a.n, a.trials, a.seed.wrapping_add(i as u64))?;
        if let Some(out) = &a.out {
            est.write_csv(&out.join(format!("code_curve_{}.csv", i + 1)))?;
        }
        curves.push(est.curve);
    }
    let wc: Vec<(&dyn MmseFn, f64)> = curves.iter().zip(&weights).map(|(c, &w)| (c as &dyn MmseFn, w)).collect();
    let th = se_threshold(&wc, &grid, |db| TransferPair::new(&e, n, SnrPoint::from_db(db)?), &ThresholdConfig::default())?;
    println!("{th:.2}");
    Ok(())
}

fn parse_mu(s: &str) -> Result<BTreeMap<usize, f64>> {
    s.split(',')
        .map(|kv| {
            let (d, f) = kv.split_once(':').ok_or_else(|| Error::Config(format!("bad --mu entry {kv:?}")))?;
            let d = d.trim().parse::<usize>().map_err(|e| Error::Config(format!("{kv:?}: {e}")))?;
            let f = f.trim().parse::<f64>().map_err(|e| Error::Config(format!("{kv:?}: {e}")))?;
            Ok((d, f))
        })
        .collect()
}

fn code_optimize(a: &OptimizeArgs) -> Result<()> {
    let target = MmseCurve::read_csv(&a.target)?;
    let mut cfg = OptimizeConfig::new(parse_mu(&a.mu)?, a.dv_max);
    cfg.population = a.population;
    cfg.generations = a.generations;
    cfg.margin = a.margin;
    cfg.finalists = a.finalists;
    cfg.n_eval = a.n;
    cfg.seed = a.seed;
    prepare_out(&a.out, manifest("code optimize", serde_json::json!({"target": a.target, "mu": a.mu, "dv_max": a.dv_max, "population": a.population, "generations": a.generations, "margin": a.margin, "finalists": a.finalists, "seed": a.seed})))?;
    let res = optimize_degrees(&target, &cfg)?;
    res.dd.save(&a.out.join("optimized.dd"))?;
    println!("rate {:.6}\tfeasible {}\tga_excess {:.3e}", res.rate, res.feasible, res.ga_excess);
    if !res.feasible {
        eprintln!("warning: no feasible candidate found; best effort written");
    }
    Ok(())
}

fn ber_run(a: &BerArgs) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(p), None) => ExperimentConfig::load(p)?,
        (None, Some(name)) => ExperimentConfig::preset(name, &a.fixtures)?,
        _ => return Err(Error::Config("give --config PATH or --preset NAME".into())),
    };
    if let Some(s) = a.seed {
        cfg.run.seed = s;
    }
    if let Some(sw) = &a.snr_sweep {
        cfg.run.snr_db = parse_sweep(sw)?;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("manifest.json"), manifest_json(&cfg)?)?;
    let recs = run_ber(&cfg)?;
    write_ber_csv(&recs, &a.out.join("ber_results.csv"))?;
    for r in &recs {
        println!("{}\t{:.2} dB\tBER {:.3e}\ttrials {}", r.receiver, r.snr_db, r.ber, r.trials);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Top::Chan(ChanCmd::Gen(a)) => chan_gen(a),
        Top::Mmse(MmseCmd::Curve(a)) => mmse_curve(a),
        Top::Se(SeCmd::Capacity(a)) => se_capacity(a),
        Top::Se(SeCmd::Region(a)) => se_region(a),
        Top::Se(SeCmd::TurboRate(a)) => se_turbo(a),
        Top::Alloc(AllocCmd::Plan(a)) => alloc_plan(a),
        Top::Code(CodeCmd::Rate(a)) => code_rate(a),
        Top::Code(CodeCmd::Measure(a)) => code_measure(a),
        Top::Code(CodeCmd::Threshold(a)) => code_threshold(a),
        Top::Code(CodeCmd::Optimize(a)) => code_optimize(a),
        Top::Ber(BerCmd::Run(a)) => ber_run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
