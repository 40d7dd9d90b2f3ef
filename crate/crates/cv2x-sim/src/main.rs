//! Thin command-line front end: load or build run configurations, execute
//! the campaign, print a one-line summary per run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cv2x_sim::{build_preset, list_presets, parse_config, run_campaign, RunConfig, SimError};

#[derive(Parser, Debug)]
#[command(
    name = "cv2x-sim",
    about = "C-V2X Mode 4 sidelink MAC simulator with pluggable congestion control"
)]
struct Args {
    /// Run configuration file (flat key = value sections).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in experiment preset (see --list-presets).
    #[arg(long)]
    preset: Option<String>,

    /// Comma-separated seeds, overriding the configuration.
    #[arg(long)]
    seeds: Option<String>,

    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Emit the full per-event grant trace into grants.csv.
    #[arg(long)]
    trace_grants: bool,

    /// Emit the per-subframe channel trace (channel.csv; large).
    #[arg(long)]
    trace_channel: bool,

    /// Apply the reduced desk-scale scenario (100 vehicles, 20 s).
    #[arg(long)]
    desk_scale: bool,

    /// List the available presets and exit.
    #[arg(long)]
    list_presets: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: Args) -> Result<(), SimError> {
    if args.list_presets {
        for (name, description) in list_presets() {
            println!("{name:<8} {description}");
        }
        return Ok(());
    }

    let mut base = match &args.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seeds) = &args.seeds {
        base.seeds = seeds
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| SimError::config("seeds", format!("invalid seed `{s}`")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(out) = args.out {
        base.output_dir = out;
    }
    base.trace_grants |= args.trace_grants;
    base.trace_channel |= args.trace_channel;
    if args.desk_scale {
        base.apply_desk_scale();
    }

    let configs = match &args.preset {
        Some(name) => build_preset(name, &base).ok_or_else(|| {
            SimError::config("preset", format!("unknown preset `{name}` (try --list-presets)"))
        })?,
        None => vec![base],
    };

    let outputs = run_campaign(&configs)?;
    println!(
        "{:<20} {:>4} {:>9} {:>9} {:>9} {:>8} {:>8}",
        "mechanism", "seed", "mean_cbr", "pdr_0_300", "ipg_ms", "aware", "gamma"
    );
    for o in &outputs {
        println!(
            "{:<20} {:>4} {:>9.3} {:>9} {:>9} {:>8} {:>8}",
            o.label,
            o.seed,
            o.mean_cbr,
            o.pdr
                .mean_pdr_over(0.0, 300.0)
                .map_or("-".into(), |p| format!("{p:.3}")),
            o.ipg.mean_ms().map_or("-".into(), |m| format!("{m:.0}")),
            o.awareness
                .mean()
                .map_or("-".into(), |a| format!("{:.1}%", a * 100.0)),
            o.gamma.total,
        );
    }
    println!(
        "results written under {}",
        configs[0].output_dir.display()
    );
    Ok(())
}
