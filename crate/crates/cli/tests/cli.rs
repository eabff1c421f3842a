use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmimo")).args(args).output().expect("spawn gmimo")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn small_channel(dir: &Path) -> PathBuf {
    let out = dir.join("ch");
    let o = gmimo(&["chan", "gen", "--m", "40", "--n", "60", "--kappa", "10", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("chan.bin")
}

#[test]
fn gaussian_mmse_at_unit_rho() {
    let o = gmimo(&["mmse", "curve", "--mod", "gaussian", "--rho", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0.5");
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = gmimo(&["se", "capacity", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn bad_modulation_and_missing_file_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let ch = small_channel(tmp.path());
    let o = gmimo(&["se", "capacity", "--channel", ch.to_str().unwrap(), "--mod", "64apsk", "--snr-db", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gmimo(&["se", "capacity", "--channel", "/nonexistent/chan.bin", "--mod", "qpsk", "--snr-db", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gmimo(&["se", "capacity", "--channel", ch.to_str().unwrap(), "--mod", "qpsk", "--snr-sweep", "3:1:0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn model_error_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // a (3,6) graph cannot be built on four bits
    let dd = fixtures().join("regular_3_6.dd");
    let out = tmp.path().join("m");
    let o = gmimo(&[
        "code", "measure", "--dd", dd.to_str().unwrap(), "--n", "4", "--trials", "1", "--rho-sweep", "1:1:1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn negative_gamma_is_parameter_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ch = small_channel(tmp.path());
    let out = tmp.path().join("al");
    let o = gmimo(&[
        "alloc", "plan", "--channel", ch.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "3", "--gammas", "1,-50",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capacity_sweep_writes_manifest_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let ch = small_channel(tmp.path());
    let out = tmp.path().join("cap");
    let o = gmimo(&["se", "capacity", "--channel", ch.to_str().unwrap(), "--mod", "qpsk", "--snr-sweep", "0:4:1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(out.join("manifest.json").exists());
    let csv = std::fs::read_to_string(out.join("capacity_vs_snr.csv")).unwrap();
    let vals: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 5);
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
    assert!(vals.iter().all(|&v| v > 0.0 && v < 2.0));
}

#[test]
fn spectrum_text_and_binary_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let ch = small_channel(tmp.path());
    let spec = ch.with_file_name("spectrum.txt");
    let a = gmimo(&["se", "turbo-rate", "--channel", ch.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "2"]);
    let b = gmimo(&["se", "turbo-rate", "--channel", spec.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn region_rows_share_the_sum_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let ch = small_channel(tmp.path());
    let out = tmp.path().join("reg");
    let o = gmimo(&[
        "se", "region", "--channel", ch.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "3", "--b", "0.5,1,4", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("rate_region.csv")).unwrap();
    assert!(csv.starts_with("b,R1_bits,R2_bits"));
    let sums: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum())
        .collect();
    assert_eq!(sums.len(), 3);
    assert!(sums.iter().all(|s| (s - sums[0]).abs() < 0.05), "{sums:?}");
}

#[test]
fn code_rate_reports_design_rate() {
    let dd = fixtures().join("regular_3_6.dd");
    let o = gmimo(&["code", "rate", "--dd", dd.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.500000"));
}

#[test]
fn ber_run_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let dd = fixtures().join("regular_3_6.dd");
    std::fs::write(
        &cfg,
        format!(
            r#"
[channel]
m = 12
n = 16
kappa = 4.0
seed = 2

[system]
constellation = "qpsk"
group_antennas = [16]
antennas_per_user = 4
degree_files = ["{}"]
code_length = 1000

[run]
snr_db = [20.0]
trial_budget = 2
error_events = 10
receivers = ["oamp"]
"#,
            dd.display()
        ),
    )
    .unwrap();
    let out = tmp.path().join("ber");
    let o = gmimo(&["ber", "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
    let csv = std::fs::read_to_string(out.join("ber_results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("oamp,20"));
}

#[test]
fn ber_run_rejects_unknown_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[channel]\nm = 4\nn = 4\nseed = 1\nbogus = 3\n").unwrap();
    let o = gmimo(&["ber", "run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
