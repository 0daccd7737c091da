mod output;

use std::f64::consts::TAU;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use halfbox::bohm::IntegratorConfig;
use halfbox::experiments::{
    conditional_density_grid, defaults, density_grid, derive_seed, detect_bit,
    run_signalling_protocol, run_two_time_measurement, trajectory_fan, Decision, ExperimentConfig,
    TwoTimeProtocol,
};
use halfbox::sampling::Lambda;
use halfbox::{correlation_analytic, operator_correlation, Axis, Error, Side, StateMatrix};

use output::{emit, Format, Table};

#[derive(Parser)]
#[command(
    name = "halfbox",
    version,
    about = "Measurement experiments on an entangled pair in a box"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-time sign correlation: closed form, operator algebra and Monte Carlo.
    Correlation(CorrelationArgs),
    /// Data behind figures 1 to 3.
    Figures(FigureArgs),
    /// One-bit transmission trials with a KS detector on the receiving side.
    Signal(SignalArgs),
}

#[derive(Args, Clone, Copy, Serialize)]
struct Common {
    /// Basis size for collapsed-state evolution.
    #[arg(long = "basis", default_value_t = defaults::BASIS_SIZE)]
    basis_size: usize,
    /// Smaller basis combined with the main one in correlation estimates; 0 disables.
    #[arg(long = "coarse-basis", default_value_t = defaults::COARSE_BASIS_SIZE)]
    coarse_basis_size: usize,
    #[arg(long, default_value_t = defaults::ENSEMBLE_REL_TOL)]
    rel_tol: f64,
    #[arg(long, default_value_t = defaults::ENSEMBLE_ABS_TOL)]
    abs_tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl Common {
    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            basis_size: self.basis_size,
            coarse_basis_size: (self.coarse_basis_size > 0).then_some(self.coarse_basis_size),
            integrator: IntegratorConfig {
                rel_tol: self.rel_tol,
                abs_tol: self.abs_tol,
                ..IntegratorConfig::default()
            },
        }
    }
}

#[derive(Args, Serialize)]
struct CorrelationArgs {
    #[arg(long)]
    s: f64,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = defaults::WALKERS)]
    walkers: usize,
    #[arg(long, default_value_t = defaults::SEED)]
    seed: u64,
    /// Measure coordinate 2 first instead of coordinate 1.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    first_axis: u8,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct FigureArgs {
    /// Figure id: 1, 2 or 3.
    which: String,
    /// Grid points per axis (figures 1 and 2).
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Time samples after the start (figures 2 and 3).
    #[arg(long, default_value_t = 120)]
    steps: usize,
    /// Final time (figures 2 and 3).
    #[arg(long, default_value_t = TAU)]
    horizon: f64,
    /// Number of trajectories (figure 3).
    #[arg(long, default_value_t = 9)]
    trajectories: usize,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct SignalArgs {
    /// Knowledge multiplier: const, sin or upper.
    #[arg(long, default_value = "const")]
    lambda: String,
    /// Bits sent by the transmitter, one protocol run per bit and trial.
    #[arg(long, default_value = "01")]
    bits: String,
    #[arg(long, default_value_t = defaults::READ_TIME)]
    read_time: f64,
    #[arg(long, default_value_t = defaults::WALKERS)]
    walkers: usize,
    #[arg(long, default_value_t = defaults::TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = defaults::SEED)]
    seed: u64,
    #[arg(long, default_value_t = defaults::ALPHA)]
    alpha: f64,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(format!("serialization failed: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn write(text: String, out: &Option<PathBuf>) -> Outcome {
    emit(&text, out.as_deref()).map_err(|e| Failure::Runtime(format!("cannot write output: {e}")))
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    command: &'a str,
    #[serde(flatten)]
    args: &'a T,
}

#[derive(Serialize)]
struct CorrelationRecord {
    s: f64,
    t: f64,
    analytic: f64,
    operator: f64,
    mc_value: f64,
    mc_stderr: f64,
    walkers: usize,
    failed: usize,
}

fn cmd_correlation(args: &CorrelationArgs) -> Outcome {
    let cfg = args.common.experiment();
    let proto = TwoTimeProtocol {
        s: args.s,
        t: args.t,
        first_axis: Axis::from_index(args.first_axis)?,
        walkers: args.walkers,
        seed: args.seed,
    };
    let est = run_two_time_measurement(&proto, &cfg)?;
    let singlet = StateMatrix::singlet(cfg.basis_size)?;
    let record = CorrelationRecord {
        s: args.s,
        t: args.t,
        analytic: correlation_analytic(args.s, args.t),
        operator: operator_correlation(&singlet, args.s, args.t, cfg.basis_size)?,
        mc_value: est.value,
        mc_stderr: est.stderr,
        walkers: est.walkers,
        failed: est.failed,
    };
    let table = Table {
        config: &Tagged {
            command: "correlation",
            args,
        },
        columns: &[
            "s",
            "t",
            "analytic",
            "operator",
            "mc_value",
            "mc_stderr",
            "walkers",
            "failed",
        ],
        records: &[record],
    };
    write(table.render(args.common.format)?, &args.out)
}

#[derive(Serialize)]
struct DensityRecord {
    x1: f64,
    x2: f64,
    density: f64,
}

#[derive(Serialize)]
struct SheetRecord {
    sheet: &'static str,
    t: f64,
    x2: f64,
    density: f64,
}

#[derive(Serialize)]
struct PathRecord {
    id: usize,
    t: f64,
    x1: f64,
    x2: f64,
}

fn cmd_figures(args: &FigureArgs) -> Outcome {
    let cfg = ExperimentConfig {
        coarse_basis_size: None,
        ..args.common.experiment()
    };
    cfg.validate()?;
    let config = Tagged {
        command: "figures",
        args,
    };
    let format = args.common.format;
    let text = match args.which.as_str() {
        "1" => {
            let (x, rows) = density_grid(&StateMatrix::singlet(cfg.basis_size)?, args.points)?;
            let mut records = Vec::with_capacity(x.len() * x.len());
            for (x1, row) in x.iter().zip(&rows) {
                for (x2, d) in x.iter().zip(row) {
                    records.push(DensityRecord {
                        x1: *x1,
                        x2: *x2,
                        density: *d,
                    });
                }
            }
            Table {
                config: &config,
                columns: &["x1", "x2", "density"],
                records: &records,
            }
            .render(format)?
        }
        "2" => {
            if !(args.horizon > 0.0) || args.steps == 0 {
                return Err(Failure::Config(
                    "figure 2 needs a positive horizon and steps".into(),
                ));
            }
            let times: Vec<f64> = (0..=args.steps)
                .map(|k| args.horizon * k as f64 / args.steps as f64)
                .collect();
            let grid = conditional_density_grid(&times, args.points, cfg.basis_size)?;
            let mut records = Vec::new();
            let sheets = [
                ("plus", grid.side(Side::Plus)),
                ("minus", grid.side(Side::Minus)),
                ("mixture", &grid.mixture[..]),
            ];
            for (name, sheet) in sheets {
                for (t, row) in grid.times.iter().zip(sheet) {
                    for (x2, d) in grid.x.iter().zip(row) {
                        records.push(SheetRecord {
                            sheet: name,
                            t: *t,
                            x2: *x2,
                            density: *d,
                        });
                    }
                }
            }
            Table {
                config: &config,
                columns: &["sheet", "t", "x2", "density"],
                records: &records,
            }
            .render(format)?
        }
        "3" => {
            let fan = trajectory_fan(
                Side::Plus,
                args.trajectories,
                args.horizon,
                args.steps,
                &cfg,
            )?;
            let mut records = Vec::new();
            for (id, path) in fan.paths.iter().enumerate() {
                for (t, p) in fan.times.iter().zip(path) {
                    records.push(PathRecord {
                        id,
                        t: *t,
                        x1: p.x1,
                        x2: p.x2,
                    });
                }
            }
            Table {
                config: &config,
                columns: &["id", "t", "x1", "x2"],
                records: &records,
            }
            .render(format)?
        }
        other => {
            return Err(Failure::Config(format!(
                "unknown figure id '{other}' (expected 1, 2 or 3)"
            )))
        }
    };
    write(text, &args.out)
}

#[derive(Serialize)]
struct TrialRecord {
    trial: usize,
    position: usize,
    bit: u8,
    ks_statistic: f64,
    p_value: f64,
    detected: bool,
    power_estimate: f64,
}

#[derive(Serialize)]
struct SignalSummary<'a> {
    #[serde(flatten)]
    config: Tagged<'a, SignalArgs>,
    /// detection rate on transmitted ones
    power: f64,
    /// detection rate on transmitted zeros
    false_alarm_rate: f64,
}

fn parse_bits(bits: &str) -> Result<Vec<u8>, Failure> {
    if bits.is_empty() {
        return Err(Failure::Config("at least one bit is required".into()));
    }
    bits.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Failure::Config(format!(
                "bits must be 0 or 1, found '{other}'"
            ))),
        })
        .collect()
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

/// Each trial and bit position compares a fresh bit-0 reference run with
/// the run for the transmitted bit; every run has its own derived seed.
fn cmd_signal(args: &SignalArgs) -> Outcome {
    let lambda = Lambda::parse(&args.lambda)?;
    let bits = parse_bits(&args.bits)?;
    if args.trials == 0 {
        return Err(Failure::Config("need at least one trial".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Config("alpha must lie in (0, 1)".into()));
    }
    let cfg = args.common.experiment();
    cfg.validate()?;
    let mut records = Vec::with_capacity(args.trials * bits.len());
    let mut tag = 0u64;
    for trial in 0..args.trials {
        for (position, &bit) in bits.iter().enumerate() {
            let reference = run_signalling_protocol(
                lambda,
                0,
                args.read_time,
                args.walkers,
                derive_seed(args.seed, tag),
                &cfg,
            )?;
            let sent = run_signalling_protocol(
                lambda,
                bit,
                args.read_time,
                args.walkers,
                derive_seed(args.seed, tag + 1),
                &cfg,
            )?;
            tag += 2;
            let report = detect_bit(&reference, &sent, args.alpha)?;
            records.push(TrialRecord {
                trial,
                position,
                bit,
                ks_statistic: report.ks_statistic,
                p_value: report.p_value,
                detected: report.decision == Decision::Detected,
                power_estimate: f64::NAN,
            });
        }
    }
    let count = |b: u8| {
        let rows = records.iter().filter(|r| r.bit == b);
        (rows.clone().filter(|r| r.detected).count(), rows.count())
    };
    let (hits1, ones) = count(1);
    let (hits0, zeros) = count(0);
    let power = rate(hits1, ones);
    for r in &mut records {
        r.power_estimate = power;
    }
    let summary = SignalSummary {
        config: Tagged {
            command: "signal",
            args,
        },
        power,
        false_alarm_rate: rate(hits0, zeros),
    };
    eprintln!(
        "power {power:.4} over {ones} transmitted ones; false alarms {:.4} over {zeros} zeros",
        summary.false_alarm_rate
    );
    let table = Table {
        config: &summary,
        columns: &[
            "trial",
            "position",
            "bit",
            "ks_statistic",
            "p_value",
            "detected",
            "power_estimate",
        ],
        records: &records,
    };
    write(table.render(args.common.format)?, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Correlation(a) => cmd_correlation(a),
        Command::Figures(a) => cmd_figures(a),
        Command::Signal(a) => cmd_signal(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
