use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memstpn::device::DeviceCharacterization;
use memstpn::envs::{EnvConfig, MiniPongConfig};
use memstpn::network::{run_episode, Policy};
use memstpn::seed::derive_seed;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_memstpn"));
    c.env_remove("MEMSTPN_OUT");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32, category: &str) -> String {
    let out = run(dir, args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
    assert!(stderr.starts_with(&format!("error[{category}]")), "{stderr}");
    stderr
}

const RECALL: &str = r#"schema_version = 1
seed = 5
[env]
kind = "sequence_recall"
delay = 3
[agent]
n_out = 8
[agent.encoder]
kind = "dense"
width = 8
[train]
total_steps = 1500
n_workers = 1
rollout_len = 10
"#;

const PONG: &str = r#"schema_version = 1
seed = 11
[env]
kind = "mini_pong"
points_to_win = 3
opponent_speed = 0.01
hide_velocity = true
[train]
total_steps = 0
n_workers = 1
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn zero_step_training_writes_initial_checkpoint_and_empty_curve() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", &RECALL.replace("total_steps = 1500", "total_steps = 0"));
    ok(tmp.path(), &["train", "--config", "c.toml", "--out", "run"]);
    let run = tmp.path().join("run");
    assert_eq!(fs::read_to_string(run.join("reward_curve.csv")).unwrap(), "step,seed,reward\n");
    let ckpt = json(&run.join("checkpoint.json"));
    assert_eq!(ckpt["format"], "memstpn-agent");
    assert_eq!(ckpt["payload"]["env_steps"], 0);
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_device_file_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let text = RECALL.replace(
        "[env]",
        "[device]\ncharacterization = \"no/such/grid.csv\"\n[env]",
    );
    let text = text.replace("n_out = 8", "n_out = 8\ndevice_mode = true");
    write_config(tmp.path(), "c.toml", &text);
    let err = fails(tmp.path(), &["train", "--config", "c.toml", "--out", "run"], 2, "config");
    assert!(err.contains("no/such/grid.csv"), "{err}");
}

#[test]
fn config_errors_report_line_and_field() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", &RECALL.replace("rollout_len = 10", "rollout_len = 10\nrolout = 3"));
    let err = fails(tmp.path(), &["train", "--config", "c.toml"], 2, "config");
    assert!(err.contains("line 15") && err.contains("rolout"), "{err}");
    write_config(tmp.path(), "v.toml", &RECALL.replace("schema_version = 1", "schema_version = 2"));
    fails(tmp.path(), &["train", "--config", "v.toml"], 2, "config");
}

#[test]
fn same_seed_single_worker_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", RECALL);
    ok(tmp.path(), &["train", "--config", "c.toml", "--out", "a", "--log-every", "0"]);
    ok(tmp.path(), &["train", "--config", "c.toml", "--out", "b", "--log-every", "0"]);
    for f in ["reward_curve.csv", "checkpoint.json", "updates.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let curve = fs::read_to_string(tmp.path().join("a/reward_curve.csv")).unwrap();
    assert!(curve.lines().count() > 100);

    ok(tmp.path(), &["train", "--config", "c.toml", "--out", "c", "--seed", "6", "--log-every", "0"]);
    let other = fs::read(tmp.path().join("c/reward_curve.csv")).unwrap();
    assert_ne!(other, curve.as_bytes());
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", RECALL);
    ok(tmp.path(), &["train", "--config", "c.toml", "--out", "a", "--lambda-range", "0,0", "--log-every", "0"]);
    let manifest = json(&tmp.path().join("a/manifest.json"));
    let text = manifest["config"].as_str().unwrap();
    assert!(text.contains("lambda_range = [0.0, 0.0]"), "{text}");
    let hash = manifest["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    write_config(tmp.path(), "again.toml", text);
    ok(tmp.path(), &["train", "--config", "again.toml", "--out", "b", "--log-every", "0"]);
    assert_eq!(
        fs::read(tmp.path().join("a/reward_curve.csv")).unwrap(),
        fs::read(tmp.path().join("b/reward_curve.csv")).unwrap()
    );
    assert_eq!(json(&tmp.path().join("b/manifest.json"))["config_sha256"].as_str().unwrap(), hash);
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", &RECALL.replace("total_steps = 1500", "total_steps = 0"));
    let out = bin()
        .current_dir(tmp.path())
        .env("MEMSTPN_OUT", tmp.path().join("root"))
        .args(["train", "--config", "c.toml"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let runs: Vec<_> = fs::read_dir(tmp.path().join("root")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].as_ref().unwrap().file_name().into_string().unwrap();
    assert!(name.starts_with("train-"), "{name}");
}

#[test]
fn bad_flags_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", RECALL);
    let out = run(tmp.path(), &["train", "--config", "c.toml", "--lambda-range", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["energy", "--synthetic-worst-case", "--precision", "fp8"]);
    assert_eq!(out.status.code(), Some(2));
    fails(tmp.path(), &["train", "--config", "c.toml", "--lambda-range", "0.9,0.1"], 2, "config");
}

fn untrained_pong(tmp: &Path) {
    write_config(tmp, "pong.toml", PONG);
    ok(tmp, &["train", "--config", "pong.toml", "--out", "init", "--log-every", "0"]);
}

#[test]
fn eval_with_no_episodes_writes_empty_outputs() {
    let tmp = TempDir::new().unwrap();
    untrained_pong(tmp.path());
    ok(tmp.path(), &["eval", "--checkpoint", "init/checkpoint.json", "--episodes", "0", "--out", "ev"]);
    let ev = tmp.path().join("ev");
    let csv = fs::read_to_string(ev.join("episodes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(!ev.join("trace_000.json").exists());
    assert_eq!(json(&ev.join("summary.json"))["episodes"], 0);
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn untrained_agent_plays_near_the_random_baseline() {
    let tmp = TempDir::new().unwrap();
    untrained_pong(tmp.path());
    let n = 60;
    ok(
        tmp.path(),
        &["eval", "--checkpoint", "init/checkpoint.json", "--episodes", &n.to_string(), "--policy", "sample", "--out", "ev"],
    );
    let ev = tmp.path().join("ev");
    let mut rdr = csv::Reader::from_path(ev.join("episodes.csv")).unwrap();
    let rows: Vec<(usize, f64, usize)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), n);

    // Every trace holds one step per environment step, and the G(t) series
    // covers the whole episode.
    for &(k, _, steps) in &rows {
        let trace = json(&ev.join(format!("trace_{k:03}.json")));
        assert_eq!(trace["steps"].as_array().unwrap().len(), steps);
        let series = fs::read_to_string(ev.join(format!("g_series_{k:03}.csv"))).unwrap();
        assert_eq!(series.lines().count(), steps + 1);
    }

    // Uniform-random baseline, measured with the library on other seeds.
    let cfg = EnvConfig::MiniPong(MiniPongConfig {
        points_to_win: 3,
        opponent_speed: 0.01,
        hide_velocity: true,
        ..MiniPongConfig::default()
    });
    let ckpt: memstpn::checkpoint::AgentCheckpoint =
        memstpn::checkpoint::load(&tmp.path().join("init/checkpoint.json")).unwrap();
    let mut env = cfg.build();
    let baseline: Vec<f64> = (0..200u64)
        .map(|k| {
            let seed = derive_seed(99, "baseline", k);
            run_episode(&ckpt.model, env.as_mut(), seed, Policy::Uniform { seed: k }, None, &mut |_| {})
                .unwrap()
                .reward
        })
        .collect();
    let (base, base_se) = mean_se(&baseline);
    let rewards: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (mean, se) = mean_se(&rewards);
    let tol = 3.0 * (se * se + base_se * base_se).sqrt();
    assert!((mean - base).abs() <= tol, "untrained {mean} ± {se} vs baseline {base} ± {base_se}");
}

#[test]
fn eval_rejects_incompatible_environment() {
    let tmp = TempDir::new().unwrap();
    untrained_pong(tmp.path());
    write_config(tmp.path(), "recall.toml", RECALL);
    fails(
        tmp.path(),
        &["eval", "--checkpoint", "init/checkpoint.json", "--config", "recall.toml", "--episodes", "1"],
        4,
        "shape",
    );
}

#[test]
fn full_scale_worst_case_energy() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(tmp.path(), &["energy", "--synthetic-worst-case", "--out", "en"]);
    assert!(stdout.contains("169984 synapses x 6826 steps"), "{stdout}");
    let rep = json(&tmp.path().join("en/report.json"));
    let total = rep["memristor"]["total_mj"].as_f64().unwrap();
    assert!((36.0..=37.0).contains(&total), "{total}");
    assert!(rep["memristor"]["decay_mj"].as_f64().unwrap() / total > 0.99);
    let gpu = rep["gpu"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["precision"] == "fp16" && r["mode"] == "optimal")
        .unwrap();
    let opt = gpu["totals"]["total_mj"].as_f64().unwrap();
    assert!((opt - 3463.9).abs() / 3463.9 < 1e-3, "{opt}");
    let series = fs::read_to_string(tmp.path().join("en/series.csv")).unwrap();
    assert_eq!(series.lines().count(), 6827);
    let hist = fs::read_to_string(tmp.path().join("en/histograms.csv")).unwrap();
    assert!(hist.starts_with("quantity,bin_lo,bin_hi,count\n"));
}

#[test]
fn empty_trace_gives_zero_report() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("t.json"), r#"{"w":[0.0,1.0],"lambda":[0.5,0.5],"steps":[]}"#).unwrap();
    ok(tmp.path(), &["energy", "--trace", "t.json", "--out", "en"]);
    let rep = json(&tmp.path().join("en/report.json"));
    assert_eq!(rep["memristor"]["total_mj"].as_f64(), Some(0.0));
    assert!(rep["ratio_optimal_fp16"].is_null());
    assert!(rep["gpu"].as_array().unwrap().iter().all(|r| r["totals"]["total_mj"] == 0.0));
}

#[test]
fn malformed_traces_fail_as_data_errors() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.json"), "{\"w\": [0.0], \"lambda\": [0.5]").unwrap();
    fails(tmp.path(), &["energy", "--trace", "bad.json", "--out", "en"], 9, "data");
    fs::write(tmp.path().join("oob.json"), r#"{"w":[0.0],"lambda":[0.5],"steps":[[[3,1.0]]]}"#).unwrap();
    fails(tmp.path(), &["energy", "--trace", "oob.json", "--out", "en"], 9, "data");
}

#[test]
fn eval_trace_replays_through_energy() {
    let tmp = TempDir::new().unwrap();
    untrained_pong(tmp.path());
    ok(tmp.path(), &["eval", "--checkpoint", "init/checkpoint.json", "--episodes", "1", "--out", "ev"]);
    ok(
        tmp.path(),
        &["energy", "--trace", "ev/trace_000.json", "--scenario", "from-lambda", "--bias-mode", "instantaneous", "--out", "en"],
    );
    let rep = json(&tmp.path().join("en/report.json"));
    assert!(rep["memristor"]["total_mj"].as_f64().unwrap() > 0.0);
    assert!(rep["pulse_events"].as_u64().unwrap() > 0);
}

#[test]
fn sigmoid_fit_recovers_default_parameters() {
    let tmp = TempDir::new().unwrap();
    let dc = DeviceCharacterization::default();
    let mut text = String::from("v_bias,lambda\n");
    for k in 0..=24 {
        let v = -0.6 + 0.05 * k as f64;
        text += &format!("{v},{}\n", dc.sigmoid.eval(v));
    }
    fs::write(tmp.path().join("s.csv"), text).unwrap();
    ok(tmp.path(), &["device", "fit", "--kind", "sigmoid", "--csv", "s.csv", "--out", "fit"]);
    let fit = json(&tmp.path().join("fit/fit.json"));
    let p = &fit["params"];
    let truth = dc.sigmoid;
    for (name, t) in [("l", truth.l), ("k", truth.k), ("lambda0", truth.lambda0)] {
        let got = p[name].as_f64().unwrap();
        assert!((got - t).abs() <= 1e-3 * t.abs(), "{name}: {got} vs {t}");
    }
    assert!(p["v0"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(fit["residuals"].as_array().unwrap().len(), 25);
}

#[test]
fn power_law_fit_and_rank_deficient_data() {
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("delta_f,energy_pj\n");
    for k in 1..=10 {
        let df = 0.5 * k as f64;
        text += &format!("{df},{}\n", 30.0 * df.powf(1.52));
    }
    fs::write(tmp.path().join("p.csv"), text).unwrap();
    let out = ok(tmp.path(), &["device", "fit", "--kind", "power-law", "--csv", "p.csv"]);
    assert!(out.contains("c = 30.000000 pJ, alpha = 1.520000"), "{out}");
    fs::write(tmp.path().join("flat.csv"), "v_bias,lambda\n0.1,0.5\n0.1,0.5\n0.1,0.5\n0.1,0.5\n").unwrap();
    fails(tmp.path(), &["device", "fit", "--kind", "sigmoid", "--csv", "flat.csv"], 8, "fit");
}

#[test]
fn pulse_plan_for_ten_nanosiemens() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(ok(tmp.path(), &["device", "pulse-plan", "--target-ns", "10"]).trim(), "3 V, 100 µs");
    fails(tmp.path(), &["device", "pulse-plan", "--target-ns", "500"], 3, "device");
}

#[test]
fn simulated_pulse_decays_back_within_a_second() {
    let tmp = TempDir::new().unwrap();
    let csv = ok(tmp.path(), &["device", "simulate", "--voltage", "3.5", "--width-us", "500", "--v-bias", "-0.6", "--duration-s", "2"]);
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1])
        })
        .collect();
    let baseline = 12.0;
    assert!(rows[0].1 > baseline * 1.5, "pulse visible at t = 0");
    let at_1s = rows.iter().find(|r| r.0 >= 1.0 - 1e-9).unwrap();
    assert!((at_1s.1 - baseline).abs() <= 0.05 * baseline, "{at_1s:?}");
}
