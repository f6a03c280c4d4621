use std::io::Write;
use std::path::{Path, PathBuf};

use memstpn::device::{fit_power_law, fit_sigmoid, simulate_protocol, Protocol, ProtocolPulse, SynapseState};
use memstpn::Error;
use serde::Serialize;

use crate::config::{load_characterization, sha256_hex};
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, create_file, write_file, Manifest, OUT_ENV};
use crate::{DeviceCommand, FitKind, SimulateArgs};

pub const FIT_FILE: &str = "fit.json";
pub const PLAN_FILE: &str = "pulse_plan.json";
pub const SIMULATION_FILE: &str = "g_t.csv";

/// Device tools print to stdout and write files only when an output
/// directory is requested, by flag or through the environment.
fn optional_dir(flag: Option<&Path>, command: &str, tag: &str) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(OUT_ENV).map(|root| PathBuf::from(root).join(format!("device-{command}-{tag}")))
    })
}

/// First two numeric columns of a headed CSV.
pub fn read_pairs(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::from)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let field = |k: usize| -> CliResult<f64> {
            let s = rec.get(k).unwrap_or("");
            s.parse::<f64>().map_err(|_| {
                CliError::Core(Error::InvalidData(format!(
                    "{}: record {}: column {} is not a number: {s:?}",
                    path.display(),
                    line + 1,
                    k + 1
                )))
            })
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

#[derive(Serialize)]
struct PulsePlan {
    target_ns: f64,
    voltage: f64,
    width_us: f64,
    energy_pj: f64,
}

pub fn run(cmd: &DeviceCommand) -> CliResult<()> {
    match cmd {
        DeviceCommand::Fit { kind, csv, out } => fit(*kind, csv, out.as_deref()),
        DeviceCommand::PulsePlan {
            target_ns,
            characterization,
            out,
        } => pulse_plan(*target_ns, characterization.as_deref(), out.as_deref()),
        DeviceCommand::Simulate(a) => simulate(a),
    }
}

fn fit(kind: FitKind, csv: &Path, out: Option<&Path>) -> CliResult<()> {
    let points = read_pairs(csv)?;
    let json = match kind {
        FitKind::Sigmoid => {
            let f = fit_sigmoid(&points, None)?;
            let p = &f.params;
            println!(
                "sigmoid: l = {:.6}, k = {:.6}, v0 = {:.6}, lambda0 = {:.6}",
                p.l, p.k, p.v0, p.lambda0
            );
            println!("rmse {:.3e} after {} iterations", f.rmse, f.iterations);
            serde_json::to_string_pretty(&f)
        }
        FitKind::PowerLaw => {
            let f = fit_power_law(&points)?;
            println!("power law: c = {:.6} pJ, alpha = {:.6}", f.c_pj, f.alpha);
            println!("rmse {:.3e} pJ", f.rmse);
            serde_json::to_string_pretty(&f)
        }
    }
    .map_err(Error::from)?;
    println!("residuals:");
    let parsed: serde_json::Value = serde_json::from_str(&json).map_err(Error::from)?;
    if let Some(res) = parsed["residuals"].as_array() {
        for (r, (x, y)) in res.iter().zip(&points) {
            println!("  {x} {y} {}", r.as_f64().unwrap_or(f64::NAN));
        }
    }
    let tag = sha256_hex(json.as_bytes());
    if let Some(dir) = optional_dir(out, "fit", &tag[..12]) {
        create_dir(&dir)?;
        let mut m = Manifest::new("device fit", None);
        m.input(csv)?;
        write_file(&dir, FIT_FILE, json.as_bytes())?;
        m.write(&dir, &[FIT_FILE])?;
    }
    Ok(())
}

fn pulse_plan(target_ns: f64, grid: Option<&Path>, out: Option<&Path>) -> CliResult<()> {
    let dc = load_characterization(grid)?;
    let (voltage, width_us) = dc.select_pulse(target_ns)?;
    let plan = PulsePlan {
        target_ns,
        voltage,
        width_us,
        energy_pj: dc.pulse_grid.energy_pj(voltage, width_us)?,
    };
    println!("{voltage} V, {width_us} µs");
    let json = serde_json::to_string_pretty(&plan).map_err(Error::from)?;
    if let Some(dir) = optional_dir(out, "pulse-plan", &sha256_hex(json.as_bytes())[..12]) {
        create_dir(&dir)?;
        let mut m = Manifest::new("device pulse-plan", None);
        if let Some(p) = grid {
            m.input(p)?;
        }
        write_file(&dir, PLAN_FILE, json.as_bytes())?;
        m.write(&dir, &[PLAN_FILE])?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let dc = load_characterization(a.characterization.as_deref())?;
    let protocol = match &a.protocol {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str::<Protocol>(&text).map_err(|e| CliError::config(p, e.to_string()))?
        }
        None => Protocol {
            pulses: vec![ProtocolPulse {
                t_s: a.pulse_at_s,
                voltage: a.voltage,
                width_us: a.width_us,
            }],
            v_bias: a.v_bias,
            duration_s: a.duration_s,
            dt_s: a.dt_s,
        },
    };
    let start = SynapseState::new(a.w_ns.unwrap_or(dc.g_min_ns), 0.0, &dc)?;
    let samples = simulate_protocol(&dc, start, &protocol)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for s in &samples {
            w.serialize(s).map_err(Error::from)?;
        }
        w.flush().map_err(|e| CliError::io("<memory>", e))?;
    }
    let tag = sha256_hex(&buf);
    match optional_dir(a.out.as_deref(), "simulate", &tag[..12]) {
        Some(dir) => {
            create_dir(&dir)?;
            let mut m = Manifest::new("device simulate", None);
            if let Some(p) = &a.protocol {
                m.input(p)?;
            }
            create_file(&dir, SIMULATION_FILE)?
                .write_all(&buf)
                .map_err(|e| CliError::io(dir.join(SIMULATION_FILE), e))?;
            let path = m.write(&dir, &[SIMULATION_FILE])?;
            println!("{} samples, wrote {}", samples.len(), path.display());
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| CliError::io("<stdout>", e))?,
    }
    Ok(())
}
