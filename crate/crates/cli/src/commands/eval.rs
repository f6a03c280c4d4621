use std::path::PathBuf;

use memstpn::checkpoint::{self, AgentCheckpoint};
use memstpn::energy::SynapseTrace;
use memstpn::network::{run_episode, AgentModel, Policy};
use memstpn::seed::derive_seed;
use serde::Serialize;

use crate::commands::train::CONFIG_FILE;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, create_file, output_dir, write_file, Manifest};
use crate::{EvalArgs, PolicyArg};

pub const EPISODES_FILE: &str = "episodes.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn trace_file(k: usize) -> String {
    format!("trace_{k:03}.json")
}

pub fn g_series_file(k: usize) -> String {
    format!("g_series_{k:03}.csv")
}

#[derive(Serialize)]
struct EpisodeRow {
    episode: usize,
    seed: u64,
    reward: f64,
    steps: usize,
    most_active_synapse: Option<usize>,
}

#[derive(Serialize)]
struct GRow {
    t: usize,
    synapse: usize,
    g_sim: f64,
    g_ns: f64,
    delta_f: f64,
}

#[derive(Serialize)]
struct Summary {
    episodes: usize,
    mean_reward: Option<f64>,
    std_error: Option<f64>,
    mean_steps: Option<f64>,
}

fn check_compatible(model: &AgentModel, obs_dim: usize, n_actions: usize) -> memstpn::Result<()> {
    for (context, expected, got) in [
        ("checkpoint observation width vs environment", model.config.obs_dim, obs_dim),
        ("checkpoint action count vs environment", model.config.n_actions, n_actions),
    ] {
        if expected != got {
            return Err(memstpn::Error::DimensionMismatch { context, expected, got });
        }
    }
    Ok(())
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let config_path = match &args.config {
        Some(p) => p.clone(),
        None => {
            let beside = args
                .checkpoint
                .parent()
                .map(|d| d.join(CONFIG_FILE))
                .unwrap_or_else(|| PathBuf::from(CONFIG_FILE));
            if !beside.is_file() {
                return Err(CliError::Usage(format!(
                    "no --config given and {} does not exist",
                    beside.display()
                )));
            }
            beside
        }
    };
    let mut cfg = ExperimentConfig::load(&config_path)?;
    args.overrides.apply(&mut cfg);
    cfg.validate(&config_path)?;
    let dc = cfg.characterization()?;
    let ckpt: AgentCheckpoint = checkpoint::load(&args.checkpoint)?;
    let mut model = ckpt.model;
    if let Some(m) = args.overrides.device_mode {
        model.config.core.device_mode = m == crate::OnOff::On;
    }
    let mut env = cfg.env.build();
    check_compatible(&model, env.observation_dim(), env.n_actions())?;

    let digest = cfg.digest();
    let dir = output_dir(args.out.as_deref(), None, "eval", &digest[..12]);
    create_dir(&dir)?;
    let mut manifest = Manifest::new("eval", Some(&cfg));
    manifest.input(&config_path)?;
    manifest.input(&args.checkpoint)?;

    let mut rows = Vec::with_capacity(args.episodes);
    let mut outputs = vec![EPISODES_FILE.to_string(), SUMMARY_FILE.to_string()];
    let n_in = model.config.core.n_in;
    for k in 0..args.episodes {
        let seed = derive_seed(cfg.seed, "eval", k as u64);
        let policy = match args.policy {
            PolicyArg::Greedy => Policy::Greedy,
            PolicyArg::Sample => Policy::Sample {
                seed: derive_seed(cfg.seed, "eval-actions", k as u64),
            },
        };
        let mut trace = SynapseTrace::for_layer(&model.core, &model.config.core);
        let summary = run_episode(&model, env.as_mut(), seed, policy, args.max_steps, &mut |r| {
            trace.push_dense(&r.step.delta_f)
        })?;
        let active = trace.most_active_synapse();
        let name = trace_file(k);
        write_file(&dir, &name, serde_json::to_string(&trace).map_err(memstpn::Error::from)?.as_bytes())?;
        outputs.push(name);

        // Replaying with the same seeds retraces the episode exactly.
        if let Some(s) = active {
            let (i, j) = (s / n_in, s % n_in);
            let mut g_rows = Vec::with_capacity(summary.steps);
            run_episode(&model, env.as_mut(), seed, policy, args.max_steps, &mut |r| {
                let g = r.step.g[[i, j]];
                g_rows.push(GRow {
                    t: r.t,
                    synapse: s,
                    g_sim: g,
                    g_ns: dc.map_to_meas(g),
                    delta_f: r.step.delta_f[[i, j]],
                })
            })?;
            let name = g_series_file(k);
            let mut w = csv::Writer::from_writer(create_file(&dir, &name)?);
            for r in &g_rows {
                w.serialize(r).map_err(memstpn::Error::from)?;
            }
            w.flush().map_err(|e| CliError::io(dir.join(&name), e))?;
            outputs.push(name);
        }
        eprintln!("episode {k}: reward {:.3} in {} steps", summary.reward, summary.steps);
        rows.push(EpisodeRow {
            episode: k,
            seed,
            reward: summary.reward,
            steps: summary.steps,
            most_active_synapse: active,
        });
    }

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create_file(&dir, EPISODES_FILE)?);
    w.write_record(["episode", "seed", "reward", "steps", "most_active_synapse"])
        .map_err(memstpn::Error::from)?;
    for r in &rows {
        w.serialize(r).map_err(memstpn::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(dir.join(EPISODES_FILE), e))?;
    drop(w);

    let summary = summarize(&rows);
    let text = serde_json::to_string_pretty(&summary).map_err(memstpn::Error::from)?;
    write_file(&dir, SUMMARY_FILE, text.as_bytes())?;
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let path = manifest.write(&dir, &names)?;
    match summary.mean_reward {
        Some(m) => println!(
            "{} episodes, mean reward {m:.3} ± {:.3}",
            summary.episodes,
            summary.std_error.unwrap_or(0.0)
        ),
        None => println!("no episodes"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn summarize(rows: &[EpisodeRow]) -> Summary {
    let n = rows.len();
    if n == 0 {
        return Summary {
            episodes: 0,
            mean_reward: None,
            std_error: None,
            mean_steps: None,
        };
    }
    let mean = rows.iter().map(|r| r.reward).sum::<f64>() / n as f64;
    let se = (n > 1).then(|| {
        let var = rows.iter().map(|r| (r.reward - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Summary {
        episodes: n,
        mean_reward: Some(mean),
        std_error: se,
        mean_steps: Some(rows.iter().map(|r| r.steps as f64).sum::<f64>() / n as f64),
    }
}
