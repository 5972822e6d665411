use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hasel_sense::calibration::Mapping;
use hasel_sense::config::Config;
use hasel_sense::estimation::FeatureKind;
use hasel_sense::evaluation::output::{
    write_joint_run, write_mux_demo, write_noise_bench, write_report_set, write_scenario_run,
    write_simulation,
};
use hasel_sense::evaluation::{
    calibrate, run_joint_session, run_mux_demo, run_noise_bench, run_scenario, run_sweep, simulate,
    write_atomic, write_report_csv, EvalReport, JointRunOptions, JointSession,
};
use hasel_sense::Result;

/// Simulate capacitive self-sensing of HASEL actuators and score
/// displacement estimators.
#[derive(Debug, Parser)]
#[command(name = "hasel-sense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario once and write traces, truth and features.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Noise seed (defaults to scenario.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the scenario's calibration map and write it.
    Calibrate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate, then score a fresh pass.
    Run {
        config: PathBuf,
        #[arg(long)]
        method: Option<FeatureKind>,
        #[arg(long)]
        mapping: Option<Mapping>,
        /// Directory for the report, maps, features and estimates.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score both methods over the configured actuation frequencies.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ripple-only RMS noise on v_h, v_c and v_k.
    NoiseBench {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Several actuators read through one multiplexed front end.
    MuxDemo {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated four-joint tracking session.
    Joints {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_reports(reports: &[EvalReport]) -> Result<()> {
    write_report_csv(reports, std::io::stdout().lock())
}

fn announce(files: Vec<PathBuf>) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, out, seed } => {
            let cfg = Config::load(&config)?;
            let p = cfg.pipeline()?;
            let s = cfg.scenario()?;
            let sim = simulate(&p, &s, seed.unwrap_or(s.seed))?;
            announce(write_simulation(&out, &sim)?);
        }
        Command::Calibrate { config, out } => {
            let cfg = Config::load(&config)?;
            let (map, obs) = calibrate(&cfg.pipeline()?, &cfg.scenario()?)?;
            write_atomic(&out, |w| map.write(w))?;
            eprintln!(
                "{} {} map from {} windows, wrote {}",
                map.kind(),
                map.mapping(),
                obs.truth.len(),
                out.display()
            );
        }
        Command::Run {
            config,
            method,
            mapping,
            out,
        } => {
            let cfg = Config::load(&config)?;
            let p = cfg.pipeline()?;
            let mut s = cfg.scenario()?;
            s.method = method.unwrap_or(s.method);
            s.mapping = mapping.unwrap_or(s.mapping);
            let run = run_scenario(&p, &s)?;
            print_reports(&run.reports)?;
            if let Some(dir) = out {
                announce(write_scenario_run(&dir, &run)?);
            }
        }
        Command::Sweep { config, out } => {
            let cfg = Config::load(&config)?;
            let p = cfg.pipeline()?;
            let s = cfg.scenario()?;
            let reports = run_sweep(
                &p,
                &s,
                &cfg.frequencies()?,
                &[FeatureKind::Voltage, FeatureKind::Impedance],
                &[s.mapping],
            )?;
            print_reports(&reports)?;
            if let Some(dir) = out {
                announce(write_report_set(&dir, &reports)?);
            }
        }
        Command::NoiseBench { config, out } => {
            let cfg = Config::load(&config)?;
            let p = cfg.pipeline()?;
            let s = cfg.scenario()?;
            let nb = run_noise_bench(&p, &cfg.noise_bench()?, s.seed, s.negate_drive)?;
            println!("rms_vk_v,{:.6}", nb.rms_vk);
            println!("rms_vc_v,{:.6}", nb.rms_vc);
            println!("rms_vh_v,{:.6}", nb.rms_vh);
            println!("rms_vh_ideal_cmrr_v,{:.6}", nb.rms_vh_ideal);
            println!("reduction_vk_over_vh,{:.3}", nb.reduction());
            if let Some(dir) = out {
                announce(write_noise_bench(&dir, &nb)?);
            }
        }
        Command::MuxDemo { config, out } => {
            let cfg = Config::load(&config)?;
            let demo = run_mux_demo(&cfg.pipeline()?, &cfg.scenario()?, &cfg.mux_plan()?)?;
            print_reports(std::slice::from_ref(&demo.report))?;
            for c in &demo.report.channels {
                eprintln!("{}: {:.3} Hz", c.label, c.update_rate_hz);
            }
            if let Some(dir) = out {
                announce(write_mux_demo(&dir, &demo)?);
            }
        }
        Command::Joints { config, out } => {
            let cfg = Config::load(&config)?;
            let p = cfg.pipeline()?;
            let s = cfg.scenario()?;
            let setup = cfg.joint_setup()?;
            let plan = cfg.mux_plan()?;
            let fs = p.circuit.fs;
            let calib = JointSession::calibration(&setup, fs, p.warmup_s + setup.calib_duration_s);
            let eval = JointSession::gait(fs, p.warmup_s + setup.eval_duration_s);
            let opts = JointRunOptions {
                method: s.method,
                mapping: s.mapping,
                seed: s.seed,
                negate_drive: s.negate_drive,
            };
            let jr = run_joint_session(&p, &setup, &calib, &eval, &plan, &opts)?;
            print_reports(std::slice::from_ref(&jr.report))?;
            for c in &jr.report.channels {
                eprintln!("{}: {:.3} Hz", c.label, c.update_rate_hz);
            }
            if let Some(dir) = out {
                announce(write_joint_run(&dir, &jr)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

