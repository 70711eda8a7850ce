use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use twomode_core::fitting::{PopulationStrategy, Spectator};
use twomode_core::fock::Mode;
use twomode_core::interferometer::CircuitKind;
use twomode_core::sideband::{Kernel, SidebandKind};

mod commands;
mod config;
mod error;
mod output;

use commands::{Context, OffresArgs};
use error::CliError;

/// Two-mode phonon interferometry: fringes, sensitivity, fits and calibration.
#[derive(Parser, Debug)]
#[command(name = "twomode", version)]
struct Cli {
    /// Output directory (default: $TWOMODE_OUT_DIR, then the current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use the `1 − cos(β√n)` readout kernel for two-mode squeezed probes.
    #[arg(long, global = true, alias = "paper-literal")]
    single_cosine: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Su2,
    #[value(name = "su11_single")]
    Su11Single,
    #[value(name = "su11_two")]
    Su11Two,
    All,
}

impl KindArg {
    fn kind(self) -> Option<CircuitKind> {
        match self {
            KindArg::Su2 => Some(CircuitKind::Su2),
            KindArg::Su11Single => Some(CircuitKind::Su11Single),
            KindArg::Su11Two => Some(CircuitKind::Su11Two),
            KindArg::All => None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    A,
    B,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SidebandArg {
    Red,
    Blue,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Joint,
    Coordinate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpectatorArg {
    Vacuum,
    Correlated,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a phase sweep from a TOML experiment file.
    Fringe {
        #[arg(long)]
        config: PathBuf,
    },
    /// Best phase sensitivity of each circuit against the bounds.
    Sensitivity {
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 3.04, 5.0])]
        nbar: Vec<f64>,
        /// Also optimize the readout pulse area.
        #[arg(long)]
        optimize_beta: bool,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        beta: f64,
    },
    /// Thermal marginals of a two-mode squeezed state and their separation by a 50/50 beamsplitter.
    VerifyTms {
        #[arg(long, default_value_t = 3.04)]
        nbar: f64,
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Fit a measured fringe (CSV with phi_rad, p_down and optional shots).
    FitFringe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_enum)]
        readout_mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        readout_kind: Option<SidebandArg>,
    },
    /// Fit Fock populations to a blue-sideband Rabi curve (CSV with t_seconds, p_down and optional shots).
    FitFock {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n_max: usize,
        /// Sideband Rabi frequency (rad/s) for a resonant fit.
        #[arg(long, conflicts_with_all = ["eta_a", "eta_b", "omega_carrier", "delta_1", "delta_2"])]
        omega_sb: Option<f64>,
        #[arg(long, requires_all = ["eta_b", "omega_carrier", "delta_1", "delta_2"])]
        eta_a: Option<f64>,
        #[arg(long)]
        eta_b: Option<f64>,
        /// Carrier Rabi frequency (rad/s).
        #[arg(long)]
        omega_carrier: Option<f64>,
        /// Sideband detuning from mode a (rad/s).
        #[arg(long, allow_hyphen_values = true)]
        delta_1: Option<f64>,
        /// Sideband detuning from mode b (rad/s).
        #[arg(long, allow_hyphen_values = true)]
        delta_2: Option<f64>,
        #[arg(long, value_enum, default_value = "vacuum")]
        spectator: SpectatorArg,
        #[arg(long, value_enum, default_value = "joint")]
        strategy: StrategyArg,
    },
    /// Find the beamsplitter drive amplitude that maximizes fringe contrast.
    CalibrateBs {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Mixing angle per unit drive amplitude.
        #[arg(long, default_value_t = 1.0)]
        mix_per_amplitude: f64,
        #[arg(long, default_value_t = 0.1)]
        grid_start: f64,
        #[arg(long, default_value_t = 1.5)]
        grid_stop: f64,
        #[arg(long, default_value_t = 29)]
        grid_points: usize,
    },
    /// Quantum Cramér-Rao bounds and the standard quantum limit.
    Bounds {
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 3.04, 5.0])]
        nbar: Vec<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context {
        out: cli.out,
        kernel: if cli.single_cosine { Kernel::SingleCosine } else { Kernel::Corrected },
    };
    let out = match cli.command {
        Command::Fringe { config } => commands::fringe(&ctx, &config)?,
        Command::Sensitivity {
            kind,
            nbar,
            optimize_beta,
            beta,
        } => commands::sensitivity(&ctx, kind.kind(), &nbar, optimize_beta, beta)?,
        Command::VerifyTms { nbar, cutoff } => commands::verify_tms(&ctx, nbar, cutoff)?,
        Command::FitFringe {
            data,
            kind,
            beta,
            readout_mode,
            readout_kind,
        } => {
            let kind = kind
                .kind()
                .ok_or_else(|| CliError::config("fit-fringe needs a single circuit kind"))?;
            let mode = readout_mode.map(|m| match m {
                ModeArg::A => Mode::A,
                ModeArg::B => Mode::B,
            });
            let sb = readout_kind.map(|k| match k {
                SidebandArg::Red => SidebandKind::Red,
                SidebandArg::Blue => SidebandKind::Blue,
            });
            commands::fit_fringe(&ctx, &data, kind, commands::default_readout(mode, sb, beta))?
        }
        Command::FitFock {
            data,
            n_max,
            omega_sb,
            eta_a,
            eta_b,
            omega_carrier,
            delta_1,
            delta_2,
            spectator,
            strategy,
        } => {
            let strategy = match strategy {
                StrategyArg::Joint => PopulationStrategy::Joint,
                StrategyArg::Coordinate => PopulationStrategy::Coordinate,
            };
            let offres = match (eta_a, eta_b, omega_carrier, delta_1, delta_2) {
                (Some(eta_a), Some(eta_b), Some(omega_carrier), Some(delta_1), Some(delta_2)) => Some(OffresArgs {
                    eta_a,
                    eta_b,
                    omega_carrier,
                    delta_1,
                    delta_2,
                    spectator: match spectator {
                        SpectatorArg::Vacuum => Spectator::Vacuum,
                        SpectatorArg::Correlated => Spectator::Correlated,
                    },
                }),
                _ => None,
            };
            commands::fit_fock(&ctx, &data, n_max, omega_sb, strategy, offres)?
        }
        Command::CalibrateBs {
            alpha,
            mix_per_amplitude,
            grid_start,
            grid_stop,
            grid_points,
        } => commands::calibrate_bs(&ctx, alpha, mix_per_amplitude, grid_start, grid_stop, grid_points)?,
        Command::Bounds { kind, nbar } => {
            let (out, table) = commands::bounds(&ctx, kind.kind(), &nbar)?;
            print!("{table}");
            out
        }
    };
    for path in &out.written {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
