//! `rilab`: experiment runner for random interlacement occupation fields.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::{Config, ConfigError};
use crate::emit::Emitter;

#[derive(Parser, Debug)]
#[command(name = "rilab", version, about = "Random interlacement occupation-field experiments")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Also simulate and check backward halves of sampled trajectories.
    #[arg(long, global = true)]
    paranoid: bool,
    /// Use the small excursion scales instead of the asymptotic ones.
    #[arg(long, global = true)]
    toy_scale: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Green function g(x) by quadrature.
    Green {
        #[arg(long)]
        d: Option<usize>,
        /// Comma-separated coordinates, padded with zeros.
        #[arg(long, default_value = "0")]
        x: String,
    },
    /// Discrete capacity of A_N and Brownian capacity of A.
    Capacity,
    /// Equilibrium measure and harmonic potential of A_N.
    Equilibrium,
    /// One interlacement ensemble on the box B(0, MN).
    Sample,
    /// Occupation field at level u on the box.
    Occupation,
    /// Disconnection probability at the configured levels.
    Disconnect,
    /// Occupation profile conditioned on disconnection.
    Condition,
    /// Perturbation and Dirichlet identities of the gauge function.
    GaugeVerify {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        support: Option<u32>,
    },
    /// Single-site Laplace transform and mean against samples.
    LaplaceVerify,
    /// Exponential tail bound against samples.
    BoundVerify,
    /// Distances of one sampled field to the profile and to u Leb.
    Distance,
    /// Conditioned vs unconditioned distance to the profile.
    ProfileDistance,
    /// Excursion counts between D_z and the boundary of U_z.
    Excursions,
    /// Capacity comparisons for separated boxes.
    AppendixA,
    /// Summary of all runs under the output directory.
    Report,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Green { .. } => "green",
            Cmd::Capacity => "capacity",
            Cmd::Equilibrium => "equilibrium",
            Cmd::Sample => "sample",
            Cmd::Occupation => "occupation",
            Cmd::Disconnect => "disconnect",
            Cmd::Condition => "condition",
            Cmd::GaugeVerify { .. } => "gauge-verify",
            Cmd::LaplaceVerify => "laplace-verify",
            Cmd::BoundVerify => "bound-verify",
            Cmd::Distance => "distance",
            Cmd::ProfileDistance => "profile-distance",
            Cmd::Excursions => "excursions",
            Cmd::AppendixA => "appendix-a",
            Cmd::Report => "report",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Cmd::GaugeVerify { trials, support } = &cli.cmd {
        cfg.gauge.trials = trials.unwrap_or(cfg.gauge.trials);
        cfg.gauge.support = support.unwrap_or(cfg.gauge.support);
    }
    if let Cmd::Green { d: Some(d), .. } = &cli.cmd {
        if !(3..=6).contains(d) {
            return Err(ConfigError(vec![format!("d: dimension {d} unsupported (need 3..=6)")]).into());
        }
    }
    cfg.resolve();
    cfg.validate()?;
    let threads = cli.threads.unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let name = cli.cmd.name();
    let mut em = Emitter::new(cli.out_dir.join(name), cfg.seed)?;
    let ctx = Ctx {
        cfg: &cfg,
        seed: cfg.seed,
        paranoid: cli.paranoid,
        toy_scale: cli.toy_scale,
        out_dir: &cli.out_dir,
    };
    let out = match &cli.cmd {
        Cmd::Green { d, x } => commands::green_cmd(&ctx, &mut em, d.unwrap_or(cfg.d), x),
        Cmd::Capacity => commands::capacity(&ctx, &mut em),
        Cmd::Equilibrium => commands::equilibrium_cmd(&ctx, &mut em),
        Cmd::Sample => commands::sample(&ctx, &mut em),
        Cmd::Occupation => commands::occupation(&ctx, &mut em),
        Cmd::Disconnect => commands::disconnect(&ctx, &mut em),
        Cmd::Condition => commands::condition(&ctx, &mut em),
        Cmd::GaugeVerify { .. } => commands::gauge_verify(&ctx, &mut em, cfg.gauge.trials, cfg.gauge.support),
        Cmd::LaplaceVerify => commands::laplace_verify(&ctx, &mut em),
        Cmd::BoundVerify => commands::bound_verify(&ctx, &mut em),
        Cmd::Distance => commands::distance(&ctx, &mut em),
        Cmd::ProfileDistance => commands::profile_distance(&ctx, &mut em),
        Cmd::Excursions => commands::excursions(&ctx, &mut em),
        Cmd::AppendixA => commands::appendix_a(&ctx, &mut em),
        Cmd::Report => commands::report(&ctx, &mut em),
    }?;
    let args: Vec<String> = std::env::args().skip(1).collect();
    em.finish(
        name,
        args,
        &cfg,
        out.backends,
        out.tolerances,
        (rayon::current_num_threads(), cli.paranoid, cli.toy_scale),
        out.pass,
    )?;
    Ok(out.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("{c}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
