use std::path::{Path, PathBuf};

use memstpn::energy::{
    ledger_histograms, replay_trace, report, write_histograms_csv, write_series_csv, EnergyLedger, NetworkScale,
    ReplayOptions, SeriesScope, SynapseTrace,
};
use memstpn::Error;

use crate::config::{ExperimentConfig, Scenario, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, create_file, output_dir, write_file, Manifest};
use crate::EnergyArgs;

pub const REPORT_FILE: &str = "report.json";
pub const HISTOGRAM_FILE: &str = "histograms.csv";
pub const SERIES_FILE: &str = "series.csv";

/// Update-free trace of the full-size network for one game, every synapse
/// at `G = 0` and the slowest decay.
pub fn synthetic_trace(scale: NetworkScale, lambda: f64) -> SynapseTrace {
    let n = scale.n_synapses as usize;
    SynapseTrace {
        w: vec![0.0; n],
        lambda: vec![lambda; n],
        steps: vec![Vec::new(); scale.n_steps as usize],
    }
}

fn read_trace(path: &Path) -> CliResult<SynapseTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let trace: SynapseTrace = serde_json::from_str(&text)
        .map_err(|e| Error::MalformedTrace(format!("{}: {e}", path.display())))?;
    trace.validate()?;
    Ok(trace)
}

fn default_config() -> ExperimentConfig {
    let text = format!("schema_version = {SCHEMA_VERSION}\n[env]\nkind = \"mini_pong\"\n");
    ExperimentConfig::parse(&text, Path::new("<defaults>")).expect("default config parses")
}

pub fn run(args: &EnergyArgs) -> CliResult<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => default_config(),
    };
    args.overrides.apply(&mut cfg);
    if let Some(s) = args.scenario {
        cfg.energy.scenario = s;
    }
    if let Some(b) = args.bias_mode {
        cfg.energy.bias_mode = b.into();
    }
    if let Some(b) = args.bins {
        cfg.energy.histogram_bins = b;
    }
    cfg.validate(args.config.as_deref().unwrap_or(Path::new("<defaults>")))?;
    let dc = cfg.characterization()?;
    let gpu = cfg.gpu_model()?;
    let e = &cfg.energy;

    let trace = match &args.trace {
        Some(p) => read_trace(p)?,
        None => synthetic_trace(NetworkScale::default(), dc.lambda_range.1),
    };
    let scale = if args.full_scale {
        NetworkScale::default()
    } else {
        NetworkScale {
            n_synapses: trace.n_synapses() as u64,
            n_steps: trace.len() as u64,
        }
    };
    let mut ledger = match e.scenario {
        Scenario::WorstCase => EnergyLedger::new(trace.n_synapses(), e.step_duration_s, dc.v_bias_range.1)?,
        Scenario::FromLambda => EnergyLedger::from_lambda(&dc, &trace.lambda, e.step_duration_s)?,
    };
    let opts = ReplayOptions {
        bias_mode: e.bias_mode,
        precision: e.precision,
        gpu_mode: e.gpu_mode,
        scope: args.synapse.map_or(SeriesScope::All, SeriesScope::Synapse),
    };
    let series = replay_trace(&trace, &mut ledger, &dc, &gpu, &opts)?;
    let rep = report(&ledger, &gpu, scale)?;

    let tag = match &args.trace {
        Some(p) => format!("{}-{}", cfg.digest(), p.display()),
        None => format!("{}-synthetic", cfg.digest()),
    };
    let tag = crate::config::sha256_hex(tag.as_bytes());
    let dir = output_dir(args.out.as_deref(), None, "energy", &tag[..12]);
    create_dir(&dir)?;
    let mut manifest = Manifest::new("energy", Some(&cfg));
    for p in [args.config.as_ref(), args.trace.as_ref()].into_iter().flatten() {
        manifest.input(p)?;
    }
    write_file(&dir, REPORT_FILE, (rep.to_json()? + "\n").as_bytes())?;
    write_histograms_csv(create_file(&dir, HISTOGRAM_FILE)?, &ledger_histograms(&ledger, e.histogram_bins)?)?;
    write_series_csv(create_file(&dir, SERIES_FILE)?, &series)?;
    let path: PathBuf = manifest.write(&dir, &[REPORT_FILE, HISTOGRAM_FILE, SERIES_FILE])?;

    println!(
        "memristor: {:.4} mJ (pulses {:.4}, bias {:.4}) over {} synapses x {} steps",
        rep.memristor.total_mj,
        rep.memristor.delta_f_mj,
        rep.memristor.decay_mj,
        trace.n_synapses(),
        trace.len()
    );
    for row in &rep.gpu {
        println!(
            "gpu {} {}: {:.4} mJ",
            row.precision.name(),
            row.mode.name(),
            row.totals.total_mj
        );
    }
    if let Some(r) = rep.ratio_optimal_fp16 {
        println!("ratio gpu(optimal, fp16) / memristor: {r:.2}");
    }
    println!("wrote {}", path.display());
    Ok(())
}
