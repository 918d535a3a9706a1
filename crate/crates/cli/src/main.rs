use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hyperion_core::experiment::{
    load_report, preset, preset_names, render_report, run_experiment, run_sweep, RunConfig, SweepAxis,
};
use hyperion_core::hyperion::{
    hyperion_report, BodyParams, DustParams, DEFAULT_MEAN_PREFACTOR, DEFAULT_NORM_PREFACTOR,
};
use hyperion_core::io::CsvTable;
use hyperion_core::orbit::{build_orbit_table, OrbitParams};

const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "hyperion", version, about = "Quantum and classical tumbling of a tidally driven rotor")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunOpts {
    /// Path to a TOML config, or the name of a built-in preset.
    config: String,

    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory. Defaults to `<output root>/<experiment>`.
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Root for default output directories.
    #[arg(long, env = "HYPERION_OUTPUT_ROOT", default_value = DEFAULT_OUTPUT_ROOT)]
    output_root: PathBuf,

    /// Override a config value, e.g. `--set system.beta=0.025`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment into an output bundle.
    Run(RunOpts),
    /// Run a parameter sweep; each point gets its own bundle.
    Sweep {
        #[command(flatten)]
        opts: RunOpts,
        /// Swept axis `path=v1,v2,...`; repeatable. Replaces the axes in the config.
        #[arg(long = "axis", value_name = "PATH=VALUES")]
        axes: Vec<String>,
        /// Pair axis values index by index instead of taking the Cartesian product.
        #[arg(long)]
        listed: bool,
    },
    /// Verify a run or sweep directory and summarize it.
    Report {
        dir: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Exit with status 2 when an expectation or fit fails.
        #[arg(long)]
        strict: bool,
    },
    /// Physical parameters of Hyperion and the predicted quantum-classical differences.
    HyperionReport {
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = DEFAULT_MEAN_PREFACTOR)]
        mean_prefactor: f64,
        #[arg(long, default_value_t = DEFAULT_NORM_PREFACTOR)]
        norm_prefactor: f64,
    },
    /// Tabulate the orbit `tau, r_over_a, theta` over one period as CSV.
    OrbitDump {
        #[arg(long, short, default_value_t = 0.1)]
        e: f64,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
}

fn load_config(opts: &RunOpts) -> Result<RunConfig> {
    let path = Path::new(&opts.config);
    let mut cfg = if path.exists() {
        RunConfig::load(path)?
    } else if preset_names().any(|n| n == opts.config) {
        preset(&opts.config)?
    } else {
        bail!("`{}` is neither a config file nor a preset", opts.config);
    };
    for o in &opts.overrides {
        let axis = SweepAxis::parse(o)?;
        if axis.values.len() != 1 {
            bail!("--set {o}: expected a single value");
        }
        cfg = cfg.with_override(&axis.path, &axis.values[0])?;
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(opts: &RunOpts, cfg: &RunConfig) -> PathBuf {
    opts.out.clone().unwrap_or_else(|| opts.output_root.join(&cfg.experiment))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(opts) => {
            let cfg = load_config(&opts)?;
            let dir = out_dir(&opts, &cfg);
            let outcome = run_experiment(&cfg, &dir)?;
            println!("wrote {}", dir.display());
            let report = load_report(&dir)?;
            print!("{}", render_report(&report));
            log::info!("{} files, {:.1} s", outcome.manifest.files.len(), outcome.summary.runtime_seconds);
        }
        Command::Sweep { opts, axes, listed } => {
            let cfg = load_config(&opts)?;
            let dir = out_dir(&opts, &cfg);
            let (axes, listed) = if axes.is_empty() {
                let section = cfg.sweep.as_ref().context("config has no [sweep] section and no --axis was given")?;
                let axes = section
                    .axes
                    .iter()
                    .map(|(path, values)| SweepAxis {
                        path: path.clone(),
                        values: values.clone(),
                    })
                    .collect();
                (axes, section.listed || listed)
            } else {
                (axes.iter().map(|a| SweepAxis::parse(a)).collect::<Result<Vec<_>, _>>()?, listed)
            };
            run_sweep(&cfg, &axes, listed, &dir)?;
            println!("wrote {}", dir.display());
            print!("{}", render_report(&load_report(&dir)?));
        }
        Command::Report { dir, json, strict } => {
            let report = load_report(&dir).with_context(|| format!("reading {}", dir.display()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", render_report(&report));
            }
            if strict && !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::HyperionReport {
            json,
            mean_prefactor,
            norm_prefactor,
        } => {
            let r = hyperion_report(&BodyParams::hyperion(), &DustParams::saturn(), mean_prefactor, norm_prefactor)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                let [i1, i2, i3] = r.moments_of_inertia;
                println!("Hyperion");
                println!("  axes (semi, m)            {} {} {}", r.body.r1, r.body.r2, r.body.r3);
                println!("  moments of inertia        {i1:.3e} {i2:.3e} {i3:.3e} kg m^2");
                println!("  alpha                     {:.4}", r.alpha);
                println!("  beta                      {:.3e}", r.beta);
                println!("  beta (I3 = 2.1e29)        {:.3e}", r.beta_rounded_i3);
                println!("Dust environment");
                println!("  rms speed                 {:.3e} m/s", r.rms_speed);
                println!("  mean free path            {:.3e} m", r.mean_free_path);
                println!("  viscosity                 {:.3e} Pa s", r.viscosity);
                println!("  momentum diffusion D      {:.3e}", r.diffusion);
                println!("Predictions");
                println!(
                    "  max <Jz> difference       {:.1e}  ({} beta^(2/3))",
                    r.predicted_mean_difference, r.mean_prefactor
                );
                println!(
                    "  max |qm-cl|_1             {:.1e}  ({} (beta^2/D)^(1/6))",
                    r.predicted_one_norm, r.norm_prefactor
                );
                for n in &r.notes {
                    println!("note: {n}");
                }
            }
        }
        Command::OrbitDump { e, samples, out } => {
            let table = build_orbit_table(&OrbitParams { e, n_samples: samples })?;
            let mut csv = CsvTable::new("orbit", &["tau", "r_over_a", "theta"]);
            for ((t, r), th) in table.tau_grid().into_iter().zip(table.r_over_a_samples()).zip(table.theta_samples()) {
                csv.push(vec![t, *r, *th]);
            }
            match out {
                Some(path) => {
                    csv.write(&path)?;
                }
                None => print!("{}", String::from_utf8(csv.to_bytes())?),
            }
        }
        Command::Presets => {
            for name in preset_names() {
                let cfg = preset(name)?;
                println!("{name:<24} {}", cfg.description);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
