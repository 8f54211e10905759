//! `mangle`: run the world-counting experiments and write their tables.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use mangle_core::branching::{binary_event, binomial_ensemble};
use mangle_core::coherence_toy::{init_two_worlds, random_hamiltonian, toy_trajectory, write_toy_csv};
use mangle_core::dynamics::{
    dynamics_table, mangling_onset, time_grid, write_dynamics_csv, CoherenceModel, Onset, PopulationSpec, RegionMode,
};
use mangle_core::experiment::{
    born_window, emit_figure1, frequency_lines, line_crossing, short_digest, unmangled_frequency_histogram, CountModel,
    ExperimentConfig, FrequencyLine,
};
use mangle_core::lognormal::LognormalSpec;
use mangle_core::mangling::{
    analytic_outcome_shares, outcome_shares, power_law_shares, write_shares_csv, Shape, TransitionRegion,
};
use mangle_core::numerics::ln_to_log10;
use mangle_core::Error;

use output::{Artifact, Format};

const EXIT_HELP: &str = "\
Exit status:
  0  success
  1  output could not be written
  2  usage error or invalid parameter
  3  numerical failure (no convergence, no bracket, step too large, indeterminate)
  4  empty result domain (no unmangled worlds, lines that never cross)

Errors print one line to stderr: error kind=<kind> status=<n> message=<json string>.

Output goes to --out, else to <MANGLE_OUT_DIR>/<subcommand>.<csv|json>, else to stdout.
The first line of every artifact records the tool version and a digest of the run configuration.";

#[derive(Parser, Debug)]
#[command(name = "mangle", version, about = "World counting under mangling: experiment driver", after_help = EXIT_HELP)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    /// Read the subcommand and its flags from a `key = value` run file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Artifact format
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    format: Format,

    /// Output file
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Directory for artifacts when --out is not given
    #[arg(long, env = "MANGLE_OUT_DIR", global = true)]
    out_dir: Option<PathBuf>,

    /// Seed for randomized constructions
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solid and dashed lines of counted frequency against world size
    Figure1(ExperimentArgs),
    /// Where the line of a reference frequency crosses the other lines
    Crossings {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Reference frequency (default: the counted frequency closest to p)
        #[arg(long)]
        reference: Option<f64>,
    },
    /// Range of cutoffs for which the Born line beats both window edges
    BornWindow {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value_t = 0.65)]
        window_low: f64,
        #[arg(long, default_value_t = 0.75)]
        window_high: f64,
    },
    /// Unmangled worlds per counted frequency under a sharp cutoff
    Histogram {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Cutoff joint log size (`-inf` disables mangling)
        #[arg(long, allow_hyphen_values = true, conflicts_with = "cutoff_z", required_unless_present = "cutoff_z")]
        cutoff: Option<f64>,
        /// Cutoff in spreads from the joint median measure
        #[arg(long, allow_hyphen_values = true)]
        cutoff_z: Option<f64>,
    },
    /// Outcome shares of unmangled worlds for one binary event over a background
    Shares(SharesArgs),
    /// Median, spread, coherence race and rate selection over time
    Dynamics(DynamicsArgs),
    /// Two-world block density matrix evolution
    ToyCoherence(ToyArgs),
    /// Exact world classes after n binary events
    Enumerate {
        #[arg(long, default_value_t = 20)]
        n: u64,
        #[arg(long, default_value_t = 0.7)]
        p: f64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CountArg {
    Exact,
    Gaussian,
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    /// Counted events
    #[arg(long, default_value_t = 100)]
    n_counted: u64,
    /// Uncounted background events
    #[arg(long, default_value_t = 10_000)]
    n_background: u64,
    /// Weight of the counted outcome
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    /// Weight for background events (default: p)
    #[arg(long)]
    p_background: Option<f64>,
    /// Comma-separated counted frequencies to draw
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9])]
    frequencies: Vec<f64>,
    /// Binomial count evaluation
    #[arg(long, value_enum, default_value_t = CountArg::Exact)]
    count_model: CountArg,
}

impl ExperimentArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_counted: self.n_counted,
            n_background: self.n_background,
            p: self.p,
            p_background: self.p_background,
            frequencies: self.frequencies.clone(),
            count_model: match self.count_model {
                CountArg::Exact => CountModel::Exact,
                CountArg::Gaussian => CountModel::Gaussian,
            },
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ShapeArg {
    Step,
    Linear,
    Logistic,
}

#[derive(Args, Debug, Clone)]
struct RegionArgs {
    /// Width of the transition region in ln m
    #[arg(long, default_value_t = 0.0)]
    width: f64,
    #[arg(long, value_enum, default_value_t = ShapeArg::Step)]
    shape: ShapeArg,
    /// Logistic scale in ln m (logistic shape only)
    #[arg(long, default_value_t = 1.0)]
    logistic_scale: f64,
}

impl RegionArgs {
    fn shape(&self) -> Shape {
        match self.shape {
            ShapeArg::Step => Shape::Step,
            ShapeArg::Linear => Shape::LinearInLog,
            ShapeArg::Logistic => Shape::Logistic {
                scale: self.logistic_scale,
            },
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SharesMethod {
    /// Class-by-class sum over the binomial background
    Exact,
    /// Quadrature over the lognormal background
    Analytic,
    /// Pure power law with the local slope at the cutoff
    PowerLaw,
}

#[derive(Args, Debug, Clone)]
struct SharesArgs {
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    #[arg(long, default_value_t = 10_000)]
    n_background: u64,
    #[arg(long)]
    p_background: Option<f64>,
    /// Region center in background spreads from the median measure
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    z: f64,
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, value_enum, default_value_t = SharesMethod::Exact)]
    method: SharesMethod,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RegionModeArg {
    /// Centered on the combined median measure at each time
    Track,
    /// Fixed at --cutoff
    Fixed,
}

#[derive(Args, Debug, Clone)]
struct DynamicsArgs {
    #[arg(long, default_value_t = 1.0)]
    rate_slow: f64,
    #[arg(long, default_value_t = 2.0)]
    rate_fast: f64,
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    /// Initial coherence epsilon_0
    #[arg(long, default_value_t = 0.5)]
    coherence_initial: f64,
    /// Exponential decay rate of coherence
    #[arg(long, default_value_t = 1.0)]
    decay_rate: f64,
    /// Coherence floor
    #[arg(long, default_value_t = 1e-20)]
    coherence_floor: f64,
    /// Use a power-law tail with this exponent instead of a floor
    #[arg(long)]
    tail_exponent: Option<f64>,
    /// Time at which the power-law tail takes over
    #[arg(long, default_value_t = 10.0)]
    tail_crossover: f64,
    /// z-score of the small world in the coherence race
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    z: f64,
    #[arg(long, default_value_t = 1e4)]
    horizon: f64,
    /// Number of geometrically spaced times after t = 0
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, value_enum, default_value_t = RegionModeArg::Track)]
    region_mode: RegionModeArg,
    /// Fixed cutoff log size (fixed region mode)
    #[arg(long, allow_hyphen_values = true, required_if_eq("region_mode", "fixed"))]
    cutoff: Option<f64>,
    #[command(flatten)]
    region: RegionArgs,
}

#[derive(Args, Debug, Clone)]
struct ToyArgs {
    #[arg(long, default_value_t = 4)]
    dl: usize,
    #[arg(long, default_value_t = 4)]
    ds: usize,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 1e-1)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Record every n-th step
    #[arg(long, default_value_t = 1)]
    every: usize,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Figure1(_) => "figure1",
            Command::Crossings { .. } => "crossings",
            Command::BornWindow { .. } => "born-window",
            Command::Histogram { .. } => "histogram",
            Command::Shares(_) => "shares",
            Command::Dynamics(_) => "dynamics",
            Command::ToyCoherence(_) => "toy-coherence",
            Command::Enumerate { .. } => "enumerate",
        }
    }
}

enum Failure {
    Core(Error),
    Usage(String),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Core(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Failure {
        Failure::Core(Error::Csv(e))
    }
}

impl Failure {
    fn classify(&self) -> (&'static str, u8) {
        match self {
            Failure::Usage(_) => ("usage", 2),
            Failure::Io(_) | Failure::Core(Error::Io(_)) | Failure::Core(Error::Csv(_)) => ("io", 1),
            Failure::Core(e) if e.is_numerical() => ("numerical", 3),
            Failure::Core(e) if e.is_empty_domain() => ("empty-domain", 4),
            Failure::Core(_) => ("invalid-parameter", 2),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Usage(m) => m.clone(),
            Failure::Io(e) => e.to_string(),
        }
    }
}

fn csv_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.into_error()))
}

fn sci(x: f64) -> String {
    format!("{x:.14e}")
}

fn joint_spec(config: &ExperimentConfig) -> Result<LognormalSpec, Error> {
    let counted = LognormalSpec::from_binary(config.n_counted, config.p)?;
    if config.n_background == 0 {
        return Ok(counted);
    }
    Ok(counted.compose(&LognormalSpec::from_binary(config.n_background, config.background_p())?))
}

fn run_command(command: &Command, seed: u64) -> Result<Artifact, Failure> {
    match command {
        Command::Figure1(args) => {
            let mut buf = Vec::new();
            emit_figure1(&args.config(), &mut buf)?;
            Ok(Artifact::new(buf))
        }
        Command::Crossings { experiment, reference } => {
            let config = experiment.config();
            config.validate()?;
            let reference = reference.unwrap_or_else(|| config.born_frequency());
            let base = FrequencyLine::new(&config, config.counted_up(reference)?)?;
            let mut rows = Vec::new();
            for line in frequency_lines(&config)? {
                if line.counted_up == base.counted_up {
                    continue;
                }
                let (size, log10) = match line_crossing(&base, &line) {
                    Ok(s) => (sci(s), sci(ln_to_log10(s))),
                    Err(Error::NoCrossing(_)) => (String::new(), String::new()),
                    Err(e) => return Err(e.into()),
                };
                rows.push(vec![format!("{:?}", base.f), format!("{:?}", line.f), size, log10]);
            }
            Ok(Artifact::new(csv_rows(&["f_reference", "f", "log_size", "log10_size"], rows)?))
        }
        Command::BornWindow {
            experiment,
            window_low,
            window_high,
        } => {
            let w = born_window(&experiment.config(), *window_low, *window_high)?;
            let row = vec![
                format!("{window_low:?}"),
                format!("{window_high:?}"),
                sci(w.lower),
                sci(w.upper),
                sci(w.span_ln),
                sci(w.span_log10),
            ];
            let header = ["window_low", "window_high", "lower", "upper", "span_ln", "span_log10"];
            Ok(Artifact::new(csv_rows(&header, [row])?))
        }
        Command::Histogram {
            experiment,
            cutoff,
            cutoff_z,
        } => {
            let config = experiment.config();
            config.validate()?;
            let cutoff = match (cutoff, cutoff_z) {
                (Some(c), _) => *c,
                (None, Some(z)) => joint_spec(&config)?.log_m_at_z(*z),
                (None, None) => return Err(Failure::Usage("histogram needs --cutoff or --cutoff-z".into())),
            };
            let h = unmangled_frequency_histogram(&config, cutoff)?;
            let mut buf = Vec::new();
            h.write_csv(&mut buf)?;
            Ok(Artifact::new(buf)
                .note(format!("cutoff={cutoff:?}"))
                .note(format!("modal_f={:?}", h.modal_f())))
        }
        Command::Shares(args) => {
            let event = binary_event(args.p)?;
            let pb = args.p_background.unwrap_or(args.p);
            let spec = LognormalSpec::from_binary(args.n_background, pb)?;
            let region = TransitionRegion::at_z(&spec, args.z, args.region.width, args.region.shape())?;
            let shares = match args.method {
                SharesMethod::Exact => outcome_shares(&event, &binomial_ensemble(args.n_background, pb)?, &region)?,
                SharesMethod::Analytic => analytic_outcome_shares(&event, spec.worlds(), &region)?,
                SharesMethod::PowerLaw => power_law_shares(-2.0 - args.z / spec.sigma(), &event)?,
            };
            let mut buf = Vec::new();
            write_shares_csv(&shares, &mut buf)?;
            Ok(Artifact::new(buf).note(format!("sigma={:?}", spec.sigma())))
        }
        Command::Dynamics(args) => {
            let slow = PopulationSpec::from_binary(args.rate_slow, args.p)?;
            let fast = PopulationSpec::from_binary(args.rate_fast, args.p)?;
            let model = match args.tail_exponent {
                Some(k) => CoherenceModel::power_tail(args.coherence_initial, args.decay_rate, args.tail_crossover, k)?,
                None => CoherenceModel::floor(args.coherence_initial, args.decay_rate, args.coherence_floor)?,
            };
            let mode = match args.region_mode {
                RegionModeArg::Track => RegionMode::TrackCombined {
                    width: args.region.width,
                    shape: args.region.shape(),
                },
                RegionModeArg::Fixed => {
                    let cutoff = args
                        .cutoff
                        .ok_or_else(|| Failure::Usage("fixed region mode needs --cutoff".into()))?;
                    RegionMode::Fixed(TransitionRegion::around(cutoff, args.region.width, args.region.shape())?)
                }
            };
            let grid = time_grid(args.horizon.min(1.0), args.horizon, args.points)?;
            let rows = dynamics_table(&slow, &fast, &model, args.z, mode, &grid)?;
            let onset = match mangling_onset(&slow, &model, args.z, args.horizon) {
                Ok(Onset::At(t)) => format!("{t:?}"),
                Ok(Onset::Never) => "never".into(),
                Err(Error::Indeterminate(_)) => "indeterminate".into(),
                Err(e) => return Err(e.into()),
            };
            let mut buf = Vec::new();
            write_dynamics_csv(&rows, &mut buf)?;
            Ok(Artifact::new(buf).note(format!("onset={onset}")))
        }
        Command::ToyCoherence(args) => {
            let state = init_two_worlds(args.dl, args.ds, args.delta, args.epsilon, seed)?;
            let h = random_hamiltonian(args.dl, args.ds, seed)?;
            let rows = toy_trajectory(&state, &h, args.dt, args.steps, args.every)?;
            let mut buf = Vec::new();
            write_toy_csv(&rows, &mut buf)?;
            Ok(Artifact::new(buf))
        }
        Command::Enumerate { n, p } => {
            let mut buf = Vec::new();
            binomial_ensemble(*n, *p)?.write_csv(&mut buf)?;
            Ok(Artifact::new(buf))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let command = cli
        .command
        .as_ref()
        .ok_or_else(|| Failure::Usage("no subcommand given".into()))?;
    let digest = short_digest(&format!("{command:?}|format={:?}|seed={}", cli.format, cli.seed));
    let artifact = run_command(command, cli.seed)?;
    let bytes = output::render(&artifact, &digest, cli.format)?;
    let path = output::destination(cli.out.as_deref(), cli.out_dir.as_deref(), command.name(), cli.format);
    output::write(&bytes, path.as_deref()).map_err(Failure::Io)
}

fn report(failure: &Failure) -> ExitCode {
    let (kind, status) = failure.classify();
    eprintln!(
        "error kind={kind} status={status} message={}",
        serde_json::Value::String(failure.message())
    );
    ExitCode::from(status)
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let mut cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(path) = cli.config.take() {
        let args = match config::load(&path) {
            Ok(args) => args,
            Err(message) => return report(&Failure::Usage(message)),
        };
        let from_file = Cli::try_parse_from(&args).unwrap_or_else(|e| e.exit());
        // Output settings given on the command line override the run file.
        let given = |id: &str| matches.value_source(id) == Some(ValueSource::CommandLine);
        cli = Cli {
            config: None,
            format: if given("format") { cli.format } else { from_file.format },
            out: if given("out") { cli.out } else { from_file.out },
            out_dir: if given("out_dir") { cli.out_dir } else { from_file.out_dir },
            seed: if given("seed") { cli.seed } else { from_file.seed },
            command: from_file.command,
        };
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => report(&failure),
    }
}
