//! `hosm`: run the triple-integrator scenarios, synthesize gains, sweep initial
//! conditions and check certificates from JSON scenario documents.
//!
//! Exit codes: 0 success, 1 configuration error, 2 validation failure, 3 divergence.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hosm_core::scenario::{
    self, dump_config, load_config, resolve, run_simulate, run_sweep, run_synth, run_verify, sweep_spec, LoadOptions,
    ScenarioConfig,
};
use hosm_core::sim::write_sweep_csv;
use hosm_core::Error;
use serde::Serialize;

const EXIT_CONFIG: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "hosm", version, about = "Homogeneous sliding-mode controllers for perturbed integrator chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize gains for the scenario's order and exponent and verify them.
    Synth(Common),
    /// Simulate one trajectory and write its CSV and summary.
    Simulate(Common),
    /// Simulate a family of initial conditions and record settling times.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `log:LO:HI:N[@SEED]` or `list:G1,G2,...[@SEED]`; overrides sweep.z0_spec.
        #[arg(long)]
        z0_spec: Option<String>,
    },
    /// Check the sign hypotheses and the Lyapunov decay for the scenario's law.
    Verify(Common),
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to expand before the document is merged.
    #[arg(long)]
    preset: Option<String>,
    /// Dotted-path override, e.g. `--set sim.dt=1e-5`; repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set chain.order=N`.
    #[arg(long)]
    order: Option<usize>,
    /// Shorthand for `--set chain.kappa=K`.
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
    /// Shorthand for `--set seed=S`; takes precedence over HOSM_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides outputs.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved scenario as JSON and exit without running it.
    #[arg(long)]
    dump_config: bool,
}

enum Failure {
    Config(String),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Synthesis(_) | Error::NotSettled => Failure::Validation(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o error: {e}"))
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let text = match &common.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = common.overrides.clone();
    if let Some(r) = common.order {
        overrides.push(format!("chain.order={r}"));
    }
    if let Some(k) = common.kappa {
        overrides.push(format!("chain.kappa={k:?}"));
    }
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    let opts = LoadOptions {
        preset: common.preset.clone(),
        env_seed: std::env::var("HOSM_SEED").ok(),
        overrides,
    };
    Ok(load_config(text.as_deref(), &opts)?)
}

fn out_dir(common: &Common, cfg: &ScenarioConfig) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir));
    fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Failure::from(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), |v| format!("{v:.6}"))
}

fn dump_if_requested(common: &Common, cfg: &ScenarioConfig) -> bool {
    if common.dump_config {
        print!("{}", dump_config(cfg));
    }
    common.dump_config
}

fn cmd_synth(common: &Common) -> Result<u8, Failure> {
    let cfg = load(common)?;
    if dump_if_requested(common, &cfg) {
        return Ok(0);
    }
    let report = run_synth(&cfg)?;
    let path = out_dir(common, &cfg)?.join("synth_report.json");
    write_json(&path, &report)?;
    println!("order {} c {:.6}", report.order, report.c);
    for s in &report.stages {
        println!("  stage {}: k = {:.6e}  l = {:.6e}", s.i, s.k.value, s.l);
    }
    println!("eta_min {:.6e}  C lower bound {:.6e}", report.eta_min, report.c_lower_bound);
    println!("validation {}  -> {}", if report.passed { "passed" } else { "FAILED" }, path.display());
    Ok(if report.passed { 0 } else { EXIT_VALIDATION })
}

fn cmd_simulate(common: &Common) -> Result<u8, Failure> {
    let cfg = load(common)?;
    if dump_if_requested(common, &cfg) {
        return Ok(0);
    }
    let res = resolve(&cfg)?;
    let (traj, summary) = run_simulate(&res)?;
    let dir = out_dir(common, &cfg)?;
    let stride = cfg.outputs.csv_stride;
    write_atomic(&dir.join("trajectory.csv"), |w| traj.write_csv(w, stride))?;
    write_json(&dir.join("simulate_summary.json"), &summary)?;
    println!(
        "settling {}  limit |u| {}  max |u| {:.6}  chatter {}  branch flips {}{}",
        fmt_opt(summary.settling_time),
        fmt_opt(summary.limit_amplitude),
        summary.max_amplitude,
        summary.chatter_count,
        summary.branch_flips,
        if summary.diverged { "  DIVERGED" } else { "" }
    );
    Ok(if summary.diverged { EXIT_DIVERGED } else { 0 })
}

fn cmd_sweep(common: &Common, z0_spec: Option<&str>) -> Result<u8, Failure> {
    let cfg = load(common)?;
    let (text, spec) = sweep_spec(&cfg, z0_spec)?;
    if dump_if_requested(common, &cfg) {
        return Ok(0);
    }
    let res = resolve(&cfg)?;
    let (entries, summary) = run_sweep(&res, &text, &spec)?;
    let dir = out_dir(common, &cfg)?;
    write_atomic(&dir.join("sweep.csv"), |w| write_sweep_csv(w, &entries))?;
    write_json(&dir.join("sweep_summary.json"), &summary)?;
    println!(
        "{} runs  max settling {}  unsettled {}  diverged {}",
        summary.count,
        fmt_opt(summary.max_settling_time),
        summary.unsettled,
        summary.diverged
    );
    if let Some(c) = &summary.certificate {
        println!(
            "fixed-time bound {} (E {:.6e}, C_outer {:.6e}, C_inner {:.6e}){}",
            fmt_opt(c.bound),
            c.e,
            c.c_outer,
            c.c_inner,
            c.note.as_ref().map_or(String::new(), |n| format!(": {n}"))
        );
    }
    Ok(if summary.diverged == summary.count { EXIT_DIVERGED } else { 0 })
}

fn cmd_verify(common: &Common) -> Result<u8, Failure> {
    let cfg = load(common)?;
    if dump_if_requested(common, &cfg) {
        return Ok(0);
    }
    let res = resolve(&cfg)?;
    let report = run_verify(&res)?;
    let path = out_dir(common, &cfg)?.join("verify_report.json");
    write_json(&path, &report)?;
    for b in &report.branches {
        let h = &b.hypotheses;
        let d = &b.decay;
        println!(
            "kappa {:.6}: dV/dz_r*omega worst {:.3e} [{}]  decay worst {:.3e} C {:.3e} (lower bound {}) [{}]",
            b.kappa,
            h.worst_product,
            if h.passed { "ok" } else { "FAIL" },
            d.worst_scaled_vdot,
            d.c_estimate,
            fmt_opt(d.c_lower_bound),
            if d.passed { "ok" } else { "FAIL" }
        );
        for v in h.violations.iter().chain(&h.implication_violations) {
            eprintln!("  hypothesis violation at {:?}: {:.3e}", v.z, v.value);
        }
        for v in &d.violations {
            eprintln!("  decay violation at {:?}: {:.3e}", v.z, v.scaled_vdot);
        }
    }
    println!("{} -> {}", if report.passed { "passed" } else { "FAILED" }, path.display());
    Ok(if report.passed { 0 } else { EXIT_VALIDATION })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep { common, z0_spec } => cmd_sweep(common, z0_spec.as_deref()),
        Command::Verify(c) => cmd_verify(c),
        Command::Presets => {
            for p in scenario::PRESETS {
                println!("{p}");
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
