use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spinsweep_cli::{
    cmd_calibrate, cmd_decay, cmd_fit, cmd_gtemp, cmd_levels, cmd_lz, cmd_transmission, exit_code,
    Ctx, FitKind, PopulationSource,
};

#[derive(Parser)]
#[command(
    name = "spinsweep",
    version,
    about = "Large-spin ensemble and cavity simulator"
)]
struct Cli {
    /// TOML configuration; the shipped Gd:YVO4 set when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy levels against field.
    Levels {
        #[arg(long, default_value_t = 0.0)]
        b_min: f64,
        #[arg(long, default_value_t = 100.0)]
        b_max: f64,
        #[arg(long, default_value_t = 1001)]
        steps: usize,
    },
    /// Up/down sweep with Landau-Zener transfer and probe couplings.
    Lz,
    /// Couplings against temperature.
    Gtemp {
        #[arg(long, default_value_t = 0.02)]
        t_min: f64,
        #[arg(long, default_value_t = 0.2)]
        t_max: f64,
        #[arg(long, default_value_t = 19)]
        steps: usize,
    },
    /// |S21| map around a mode's probe resonance.
    Transmission {
        #[arg(long)]
        mode: String,
        /// Defaults to the probe field minus 1 mT.
        #[arg(long)]
        b_min: Option<f64>,
        #[arg(long)]
        b_max: Option<f64>,
        #[arg(long, default_value_t = 201)]
        b_steps: usize,
        /// Defaults to f0 minus 15 MHz.
        #[arg(long)]
        f_min: Option<f64>,
        #[arg(long)]
        f_max: Option<f64>,
        #[arg(long, default_value_t = 301)]
        f_steps: usize,
        /// Population of the probed level: `up` (frozen) or `down` (after the sweep).
        #[arg(long, default_value = "up")]
        state: PopulationSource,
    },
    /// Pumped decay traces and their time constants for every configured power.
    Decay,
    /// Fit a map, spectrum or decay trace CSV.
    Fit {
        #[arg(long)]
        kind: FitKind,
        #[arg(long)]
        data: PathBuf,
        /// Mode label; the mode nearest the data's frequency range when omitted.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Fit crystal-field coefficients to anchors.
    Calibrate {
        #[arg(long)]
        anchors: PathBuf,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn run(cli: Cli) -> spinsweep::Result<()> {
    let ctx = Ctx::load(cli.config.as_deref())?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Levels {
            b_min,
            b_max,
            steps,
        } => {
            cmd_levels(&ctx, b_min, b_max, steps, out)?;
        }
        Command::Lz => {
            let s = cmd_lz(&ctx, out)?;
            for p in &s.probes {
                let ratio = p
                    .ratio_down_up
                    .map_or("n/a".to_string(), |r| format!("{r:.9}"));
                println!(
                    "{} {}: g_up = {:.4} MHz, g_down = {:.4} MHz, ratio = {ratio}",
                    p.mode,
                    p.lower,
                    p.g_up_ghz * 1e3,
                    p.g_down_ghz * 1e3
                );
            }
        }
        Command::Gtemp {
            t_min,
            t_max,
            steps,
        } => {
            cmd_gtemp(&ctx, t_min, t_max, steps, out)?;
        }
        Command::Transmission {
            mode,
            b_min,
            b_max,
            b_steps,
            f_min,
            f_max,
            f_steps,
            state,
        } => {
            let cfg = &ctx.config;
            let m = cfg.mode(&mode)?;
            let b0 = cfg
                .modes
                .iter()
                .find(|x| x.label == mode)
                .and_then(|x| x.probe.as_ref())
                .map_or(0.0, |p| p.field_mt);
            let b = (
                b_min.unwrap_or((b0 - 1.0).max(0.0)),
                b_max.unwrap_or(b0 + 1.0),
                b_steps,
            );
            let f = (
                f_min.unwrap_or(m.f0_ghz - 0.015),
                f_max.unwrap_or(m.f0_ghz + 0.015),
                f_steps,
            );
            cmd_transmission(&ctx, &mode, b, f, state, out)?;
        }
        Command::Decay => {
            let r = cmd_decay(&ctx, out)?;
            for p in &r.powers {
                match &p.analysis {
                    Some(a) => println!(
                        "P = {:e} W: tau_i = {:.4} s, tau_f = {:.4} s, T* = {:.4} s",
                        p.p_inc_w, a.tau_i, a.tau_f, a.t_star
                    ),
                    None => println!(
                        "P = {:e} W: {}",
                        p.p_inc_w,
                        p.error.as_deref().unwrap_or("no analysis")
                    ),
                }
            }
        }
        Command::Fit { kind, data, mode } => {
            let r = cmd_fit(&ctx, kind, &data, mode.as_deref(), out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("serializable")
            );
        }
        Command::Calibrate { anchors } => {
            let r = cmd_calibrate(&ctx, &anchors, out)?;
            for a in &r.anchors {
                println!("target {:.6} predicted {:.6}", a.target, a.predicted);
            }
        }
        Command::ShowConfig => print!("{}", ctx.config.to_toml_string()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
