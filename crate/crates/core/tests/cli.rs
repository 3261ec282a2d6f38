use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nlsic::experiment::CSV_HEADER;
use nlsic::nn::load_checkpoint;

fn nlsic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlsic")).args(args).output().expect("running nlsic")
}

fn ok(args: &[&str]) -> String {
    let out = nlsic(args);
    assert!(out.status.success(), "nlsic {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const FBA: &str = r#"
seed = 3
snr_db = [0.0, 6.0]
n = 200
n_blk = 2
stages = 2

[channel]
fiber_length = 0.0
truncate = 2

[modulation]
family = "pam"
m = 4

[equalizer]
kind = "fba"
"#;

const NN: &str = r#"
seed = 3
snr_db = [6.0]
n = 64
n_blk = 2
stages = 2

[channel]
fiber_length = 0.0
truncate = 2

[equalizer]
kind = "nn"
l_y = 4
l_ic = 2
hidden = [4]

[equalizer.train]
n_batch = 4
n_iter = 3
t_rnn = 8
norm_samples = 200
chunks = 2
"#;

#[test]
fn oracle_check_passes() {
    let out = ok(&["oracle-check", "--instances", "10", "--seed", "4"]);
    assert!(out.starts_with("10 instances"), "{out}");
    let fail = nlsic(&["oracle-check", "--instances", "3", "--tolerance", "-1"]);
    assert!(!fail.status.success());
}

#[test]
fn simulate_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fba.toml", FBA);
    let out = ok(&["simulate", "-c", &cfg, "--snr", "5", "--n", "7"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "position,symbol,x_re,x_im,sample,y_re,y_im");
    assert_eq!(lines.len(), 1 + 7 * 2);
    assert!(lines[1].starts_with("0,") && lines[14].starts_with("6,"));
    assert_eq!(out, ok(&["simulate", "-c", &cfg, "--snr", "5", "--n", "7"]));
    assert_ne!(out, ok(&["simulate", "-c", &cfg, "--snr", "5", "--n", "7", "--seed", "9"]));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fba.toml", FBA);
    let path = dir.path().join("rates.csv");
    ok(&["sweep", "-c", &cfg, "-o", path.to_str().unwrap()]);
    let csv = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[3].starts_with("0,PAM,4,2,avg,fba,"));
    assert!(lines.iter().skip(1).all(|l| l.contains(",200,2,3,")));
    ok(&["sweep", "-c", &cfg, "-o", path.to_str().unwrap()]);
    assert_eq!(csv, fs::read_to_string(&path).unwrap());
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "nn.toml", NN);
    let ck = dir.path().join("net.nlsic");
    let ck_s = ck.to_str().unwrap();
    let out = nlsic(&["train", "-c", &cfg, "--snr", "6", "--checkpoint", ck_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage 2"));
    let loaded = load_checkpoint(&ck).unwrap();
    assert_eq!(loaded.equalizer.stages(), 2);
    assert_eq!(loaded.snr_db, Some(6.0));

    let csv = ok(&["evaluate", "-c", &cfg, "--snr", "6", "--checkpoint", ck_s]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("6,PAM,4,2,1,nn,"));

    let warm = dir.path().join("warm.nlsic");
    ok(&["train", "-c", &cfg, "--snr", "6", "--checkpoint", warm.to_str().unwrap(), "--init", ck_s]);
    assert!(load_checkpoint(&warm).is_ok());
}

#[test]
fn reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let missing = nlsic(&["sweep", "-c", dir.path().join("none.toml").to_str().unwrap()]);
    assert!(!missing.status.success());
    let cfg = write(dir.path(), "bad.toml", "n = 10\nbogus = 1\n");
    assert!(!nlsic(&["sweep", "-c", &cfg]).status.success());
    let fba = write(dir.path(), "fba.toml", FBA);
    let train = nlsic(&["train", "-c", &fba, "--snr", "0", "--checkpoint", "x.nlsic"]);
    assert!(String::from_utf8_lossy(&train.stderr).contains("nn equalizer"));
    let nn = write(dir.path(), "nn.toml", NN);
    assert!(!nlsic(&["evaluate", "-c", &nn, "--snr", "0"]).status.success());
}
