use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jqfsim::{output, Command, Overrides, ProfileSource};

/// Simulates a transmon qubit protected by a Josephson quantum filter.
#[derive(Parser)]
#[command(name = "jqfsim", version)]
struct Cli {
    /// JSON run config layered over the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Profile name, looked up in $JQFSIM_PROFILE_DIR then among the bundled ones.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Reflection spectrum of the JQF alone.
    SpectrumJqf,
    /// Reflection spectrum of the qubit alone, with a weak-probe fit.
    SpectrumQubit,
    /// Thermally mixed readout-resonator reflection.
    SpectrumResonator,
    /// Energy relaxation from |1>.
    T1,
    /// Ramsey fringes with an artificial detuning.
    Ramsey,
    /// Hahn echo.
    Echo,
    /// Rabi oscillation under a square pulse with Gaussian edges.
    Rabi,
    /// T1, T2E, T2*, p_th, frequency shift and external rate against JQF detuning.
    SweepDetuning,
    /// Rabi frequency and decay against photon flux.
    SweepAmplitude,
    /// Rabi error per cycle against JQF anharmonicity.
    SweepAnharmonicity,
    /// Rabi frequency against the T1 bound over JQF detuning.
    Tradeoff,
    /// Clifford randomized benchmarking.
    Rb,
    /// Fit a model to a CSV file.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        /// exponential, damped-sinusoid, rb, linear, reflection-qubit, reflection-resonator
        #[arg(long)]
        model: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { out: cli.out.clone(), seed: cli.seed, threads: cli.threads };
    let profiles = ProfileSource::from_env();
    let (cmd, fit_args) = match cli.command {
        Sub::SpectrumJqf => (Command::SpectrumJqf, None),
        Sub::SpectrumQubit => (Command::SpectrumQubit, None),
        Sub::SpectrumResonator => (Command::SpectrumResonator, None),
        Sub::T1 => (Command::T1, None),
        Sub::Ramsey => (Command::Ramsey, None),
        Sub::Echo => (Command::Echo, None),
        Sub::Rabi => (Command::Rabi, None),
        Sub::SweepDetuning => (Command::SweepDetuning, None),
        Sub::SweepAmplitude => (Command::SweepAmplitude, None),
        Sub::SweepAnharmonicity => (Command::SweepAnharmonicity, None),
        Sub::Tradeoff => (Command::Tradeoff, None),
        Sub::Rb => (Command::Rb, None),
        Sub::Fit { input, model } => (Command::Fit, Some((input, model))),
    };
    let fit = fit_args.map(|(input, model)| jqfsim::FitArgs {
        input: input.map(|p| p.display().to_string()),
        model,
    });
    match jqfsim::execute(cmd, cli.profile.as_deref(), cli.config.as_deref(), &overrides, &profiles, fit.as_ref()) {
        Ok(dir) => {
            println!("{}", dir.join(format!("{}.csv", cmd.name())).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = output::to_json(&e.to_json());
            eprint!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
