use memstpn::checkpoint::{self, AgentCheckpoint};
use memstpn::envs::Environment;
use memstpn::network::{init_model, train_model, write_reward_curve, Progress, UpdateMetrics};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, create_file, output_dir, write_file, Manifest};
use crate::TrainArgs;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REWARD_FILE: &str = "reward_curve.csv";
pub const UPDATES_FILE: &str = "updates.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Serialize)]
struct UpdateRow {
    update: usize,
    env_steps: u64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    grad_norm: f64,
    lr: f64,
}

impl UpdateRow {
    fn new(p: &Progress) -> Self {
        let m: &UpdateMetrics = p.metrics;
        UpdateRow {
            update: p.update,
            env_steps: p.env_steps,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            entropy: m.entropy,
            grad_norm: m.grad_norm,
            lr: m.lr,
        }
    }
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg);
    cfg.validate(&args.config)?;
    cfg.characterization()?;
    let train = cfg.train_config();
    let agent = cfg.agent_config()?;

    let digest = cfg.digest();
    let dir = output_dir(args.out.as_deref(), cfg.out.as_deref(), "train", &digest[..12]);
    create_dir(&dir)?;
    let mut manifest = Manifest::new("train", Some(&cfg));
    manifest.input(&args.config)?;
    if let Some(p) = &cfg.device.characterization {
        manifest.input(p)?;
    }

    let env = cfg.env.clone();
    let factory = move |_: usize| -> memstpn::Result<Box<dyn Environment>> { Ok(env.build()) };
    let model = init_model(&agent, &train)?;
    eprintln!(
        "training {} parameters for {} steps with {} worker(s)",
        model.n_params(),
        train.total_steps,
        train.n_workers
    );
    let mut rows = Vec::new();
    let log_every = args.log_every;
    let mut observer = |p: &Progress| {
        rows.push(UpdateRow::new(p));
        if log_every > 0 && p.update % log_every == 0 {
            eprintln!(
                "step {:>9}  update {:>6}  episodes {:>5}  policy {:+.4}  value {:.4}  entropy {:.4}  lr {:.3e}",
                p.env_steps, p.update, p.episodes, p.metrics.policy_loss, p.metrics.value_loss, p.metrics.entropy, p.metrics.lr
            );
        }
    };
    let outcome = train_model(&factory, model, &train, &mut observer)?;

    let ckpt = AgentCheckpoint {
        model: outcome.model,
        env_steps: outcome.env_steps,
        train: Some(train),
    };
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &ckpt)?;
    write_reward_curve(create_file(&dir, REWARD_FILE)?, &outcome.reward_curve)?;
    let mut w = csv::Writer::from_writer(create_file(&dir, UPDATES_FILE)?);
    for r in &rows {
        w.serialize(r).map_err(memstpn::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(dir.join(UPDATES_FILE), e))?;
    drop(w);
    write_file(&dir, CONFIG_FILE, cfg.to_toml().as_bytes())?;
    let path = manifest.write(&dir, &[CHECKPOINT_FILE, REWARD_FILE, UPDATES_FILE, CONFIG_FILE])?;

    let episodes = outcome.reward_curve.len();
    if episodes > 0 {
        let tail = &outcome.reward_curve[episodes - episodes.div_ceil(10)..];
        let mean = tail.iter().map(|p| p.reward).sum::<f64>() / tail.len() as f64;
        println!("{episodes} episodes, mean reward of the last {} = {mean:.3}", tail.len());
    } else {
        println!("no completed episodes");
    }
    println!("wrote {}", path.display());
    Ok(())
}
