// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spin_feedback::experiments::io::load_trace;
use spin_feedback::experiments::run::{
    span_reports, write_outputs, OutputPaths, DEFAULT_SPAN_DEPTH,
};
use spin_feedback::experiments::{
    check, replay_scenario, run_scenario, run_sweep, ScenarioConfig, Summary, SweepSpec,
};
use spin_feedback::Error;

#[derive(Parser)]
#[command(
    name = "spinfb",
    version,
    about = "Lyapunov feedback tracking for coupled spin-1/2 systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Rescales the traceless norm after every step.
    #[arg(long)]
    renormalize: bool,
    /// Suppresses the report on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the closed loop and writes trajectory, trace, FID and summary.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Strong-regularity and bracket-span diagnostics.
    Check {
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPAN_DEPTH)]
        depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Bracket-span report only.
    Span {
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPAN_DEPTH)]
        depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// One-parameter sweep, one CSV row per grid value.
    Sweep {
        config: PathBuf,
        sweep: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Applies a recorded control trace to the scenario in open loop.
    Replay {
        config: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stability { .. } | Error::NonFinite { .. } => 3,
        Error::Internal(_) => 1,
        _ => 2,
    }
}

fn load(path: &Path, common: &Common) -> spin_feedback::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.renormalize {
        cfg.integrator.renormalize = true;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> spin_feedback::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn write_json(path: &Path, json: &str) -> spin_feedback::Result<()> {
    std::fs::write(path, format!("{json}\n")).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn print_summary(s: &Summary) {
    println!("scenario      {}", s.name);
    println!("spins         {}", s.n_spins);
    println!("samples       {} (T = {})", s.samples, s.t_final);
    println!("V(0)          {:.6e}", s.v0);
    println!("V(T)          {:.6e}  (ratio {:.3e})", s.vt, s.v_ratio);
    for (m, (lo, hi)) in s.min_u.iter().zip(&s.max_u).enumerate() {
        println!("u_{}           [{:.4e}, {:.4e}]", m + 1, lo, hi);
    }
    println!("norm drift    {:.3e}", s.norm_drift);
    println!(
        "FID rms error {:.4e} (uncontrolled {:.4e})",
        s.fid_rms_error, s.uncontrolled_fid_rms_error
    );
    println!(
        "singular      antipodal={} equatorial={:?} margin={:.3e}",
        s.singularity.antipodal_product,
        s.singularity.equatorial_pair,
        s.singularity.near_singular_margin
    );
    for w in &s.warnings {
        println!("warning: {w}");
    }
}

fn run(cli: Cli) -> spin_feedback::Result<()> {
    match cli.command {
        Command::Simulate { config, common } => {
            let sc = load(&config, &common)?.build()?;
            let out = run_scenario(&sc)?;
            ensure_dir(&common.out_dir)?;
            let written = write_outputs(&out, &OutputPaths::new(&sc, &common.out_dir, ""))?;
            if !common.quiet {
                print_summary(&out.summary);
                for p in written {
                    println!("wrote {}", p.display());
                }
            }
        }
        Command::Check {
            config,
            depth,
            common,
        } => {
            let sc = load(&config, &common)?.build()?;
            let report = check(&sc, depth)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            ensure_dir(&common.out_dir)?;
            write_json(
                &common.out_dir.join(format!("{}_check.json", sc.name)),
                &json,
            )?;
            if !common.quiet {
                println!("{json}");
            }
        }
        Command::Span {
            config,
            depth,
            common,
        } => {
            let sc = load(&config, &common)?.build()?;
            let spans = span_reports(&sc, depth)?;
            let json = serde_json::to_string_pretty(&spans).expect("report serializes");
            ensure_dir(&common.out_dir)?;
            write_json(
                &common.out_dir.join(format!("{}_span.json", sc.name)),
                &json,
            )?;
            if !common.quiet {
                println!("{json}");
            }
        }
        Command::Sweep {
            config,
            sweep,
            common,
        } => {
            let cfg = load(&config, &common)?;
            let spec = SweepSpec::load(&sweep)?;
            let table = run_sweep(&cfg, &spec)?;
            ensure_dir(&common.out_dir)?;
            let path = common.out_dir.join(format!("{}_sweep.csv", cfg.name));
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            std::fs::write(&path, &buf).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            if !common.quiet {
                print!("{}", String::from_utf8_lossy(&buf));
                println!("wrote {}", path.display());
            }
        }
        Command::Replay {
            config,
            trace,
            common,
        } => {
            let sc = load(&config, &common)?.build()?;
            let trace = load_trace(&trace)?;
            let out = replay_scenario(&sc, &trace)?;
            ensure_dir(&common.out_dir)?;
            let written = write_outputs(&out, &OutputPaths::new(&sc, &common.out_dir, "_replay"))?;
            if !common.quiet {
                print_summary(&out.summary);
                for p in written {
                    println!("wrote {}", p.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
