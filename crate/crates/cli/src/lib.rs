//! Command-line driver for `kernlin`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Every error
//! goes to standard error prefixed with `error:`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kernlin::dataio::{self, csv_table, Dataset, Scheme};
use kernlin::linear_model::{self, LinearModel, TrainConfig};
use kernlin::montecarlo::{self, Figure, FigureGrid, SimConfig};
use kernlin::variance_theory as theory;
use kernlin::{kernel_matrix, transform, CenterVector, GcwsConfig, KernelKind, RbfParams, RffConfig, SparseVector};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kernlin",
    version,
    about = "GMM and RBF kernel linearization: GCWS and normalized random Fourier features"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sign-split each row into a nonnegative vector of twice the dimension.
    Transform(IoArgs),
    /// Kernel matrix of a dataset in LIBSVM precomputed-kernel format.
    Kernel(KernelArgs),
    /// Hash a dataset into GCWS one-hot features or (normalized) Fourier features.
    Hash(HashArgs),
    /// Monte Carlo bias, variance and MSE of the RBF estimators.
    Simulate(SimulateArgs),
    /// CSV data behind the variance figures.
    Figure(FigureArgs),
    /// Train a linear classifier.
    Train(TrainArgs),
    /// Accuracy of a trained model on a dataset.
    Eval(EvalArgs),
    /// Accuracy over a grid of k, b, C and seeds, as tidy CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct IoArgs {
    /// LIBSVM input (`-` for stdin, `.gz` accepted).
    #[arg(default_value = "-")]
    input: String,
    /// Output path (`-` for stdout).
    #[arg(short, long, default_value = "-")]
    output: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelChoice {
    Gmm,
    Rbf,
    Linear,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, value_enum)]
    kind: KernelChoice,
    /// RBF bandwidth; required for `--kind rbf`.
    #[arg(long)]
    gamma: Option<f64>,
    /// Scale rows to unit l2 norm first (required input form for rbf and linear).
    #[arg(long)]
    normalize_input: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeChoice {
    Gcws,
    Nrff,
}

#[derive(Debug, Args)]
struct HashArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, value_enum)]
    scheme: SchemeChoice,
    /// Number of samples.
    #[arg(long)]
    k: usize,
    /// Bits of i* kept per GCWS sample.
    #[arg(long, default_value_t = 8)]
    b: u32,
    /// RBF bandwidth; required for nrff.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// gcws: one-hot entries of 1 instead of 1/sqrt(k). nrff: plain RFF.
    #[arg(long)]
    no_normalize: bool,
    /// Scale rows to unit l2 norm before hashing.
    #[arg(long)]
    normalize_input: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimModel {
    /// Plain and normalized RFF on correlated Gaussian pairs.
    Rff,
    /// GCWS collision counts drawn as Binomial(k, g(rho)).
    Binomial,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long)]
    gamma: f64,
    /// Ascending sample counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16,128,1024")]
    k_grid: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_enum, default_value = "rff")]
    model: SimModel,
    #[arg(short, long, default_value = "-")]
    output: String,
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// 1: V_n/V; 2: simulated MSE vs k; 3: relative variance vs E; 4: V_n/V_g.
    #[arg(long)]
    which: String,
    /// Correlation for figure 2.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Bandwidths: the figure-2 value, or the curves of figures 1, 3 and 4.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "16,128,1024")]
    k_grid: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long, default_value = "-")]
    output: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(default_value = "-")]
    input: String,
    /// Where to write the model.
    #[arg(long)]
    model: String,
    #[arg(long = "c", short = 'C', default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(default_value = "-")]
    input: String,
    #[arg(long)]
    model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SweepScheme {
    Gcws,
    Nrff,
    /// Raw features, unit-normalized.
    Linear,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Training data.
    input: String,
    /// Held-out data; without it every round(1/test-fraction)-th row is held out.
    #[arg(long)]
    test: Option<String>,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gcws")]
    schemes: Vec<SweepScheme>,
    #[arg(long, value_delimiter = ',', default_value = "16,64,256")]
    k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    b_list: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    c_list: Vec<f64>,
    /// Each seed drives both hashing and shuffling.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// RBF bandwidth for nrff.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(short, long, default_value = "-")]
    output: String,
}

enum Failure {
    Usage(String),
    Data(kernlin::Error),
}

impl From<kernlin::Error> for Failure {
    fn from(e: kernlin::Error) -> Self {
        match e {
            kernlin::Error::OutOfDomain { .. }
            | kernlin::Error::InvalidConfig(_)
            | kernlin::Error::UnknownFigure(_) => Failure::Usage(e.to_string()),
            e => Failure::Data(e),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_dataset(path: &str) -> CliResult<Dataset> {
    if path == "-" {
        Ok(dataio::parse_libsvm(io::stdin().lock())?)
    } else {
        Ok(dataio::read_libsvm_file(Path::new(path))?)
    }
}

fn open_output(path: &str) -> CliResult<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn write_text(path: &str, text: &str) -> CliResult<()> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn normalized(ds: &Dataset) -> Dataset {
    let (n, zero) = dataio::normalize_dataset(ds);
    if !zero.is_empty() {
        log::warn!("rows left at zero: {zero:?}");
    }
    n
}

fn cmd_transform(a: &IoArgs) -> CliResult<()> {
    let ds = read_dataset(&a.input)?;
    let mu = CenterVector::zeros(ds.dim());
    let rows = ds
        .rows()
        .iter()
        .map(|(y, x)| Ok((*y, transform(x, &mu)?.to_sparse())))
        .collect::<kernlin::Result<Vec<_>>>()?;
    let out = Dataset::with_dim(rows, 2 * ds.dim())?;
    dataio::write_libsvm(&out, open_output(&a.output)?)?;
    Ok(())
}

fn cmd_kernel(a: &KernelArgs) -> CliResult<()> {
    let mut ds = read_dataset(&a.io.input)?;
    if a.normalize_input {
        ds = normalized(&ds);
    }
    let kind = match a.kind {
        KernelChoice::Gmm => KernelKind::Gmm,
        KernelChoice::Linear => KernelKind::Linear,
        KernelChoice::Rbf => {
            let g = a.gamma.ok_or_else(|| usage("--kind rbf requires --gamma"))?;
            KernelKind::Rbf(RbfParams::new(g)?)
        }
    };
    let xs: Vec<SparseVector> = ds.rows().iter().map(|(_, x)| x.clone()).collect();
    let km = kernel_matrix(&xs, kind)?;
    let labels: Vec<f64> = ds.labels().collect();
    dataio::write_precomputed_kernel(&labels, &km, open_output(&a.io.output)?)?;
    Ok(())
}

fn scheme_of(a: &HashArgs) -> CliResult<Scheme> {
    Ok(match a.scheme {
        SchemeChoice::Gcws => Scheme::Gcws(GcwsConfig::new(a.k, a.b, a.seed)?.with_normalize_output(!a.no_normalize)),
        SchemeChoice::Nrff => {
            let g = a.gamma.ok_or_else(|| usage("--scheme nrff requires --gamma"))?;
            Scheme::Rff(RffConfig::new(a.k, g, a.seed)?.with_normalize(!a.no_normalize))
        }
    })
}

fn cmd_hash(a: &HashArgs) -> CliResult<()> {
    let scheme = scheme_of(a)?;
    let mut ds = read_dataset(&a.io.input)?;
    if a.normalize_input {
        ds = normalized(&ds);
    }
    let out = dataio::hash_dataset(&ds, &scheme)?;
    dataio::write_libsvm(&out, open_output(&a.io.output)?)?;
    Ok(())
}

#[derive(Serialize)]
struct SimRow {
    rho: f64,
    gamma: f64,
    k: usize,
    estimator: montecarlo::Estimator,
    reps: usize,
    target: f64,
    mean: f64,
    bias: f64,
    variance: f64,
    mse: f64,
    theory_variance: f64,
}

fn sim_config(a: &SimArgs) -> CliResult<SimConfig> {
    Ok(SimConfig::new(a.rho, a.gamma, a.k_grid.clone(), a.reps, a.seed)?)
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg = sim_config(&a.sim)?;
    let (rho, gamma) = (cfg.rho, cfg.gamma);
    let stats = match a.model {
        SimModel::Rff => montecarlo::simulate_rff(&cfg)?,
        SimModel::Binomial => montecarlo::simulate_gcws_binomial(&cfg)?,
    };
    let rows = stats
        .into_iter()
        .map(|s| {
            use montecarlo::Estimator::*;
            let v = match s.estimator {
                Rff => theory::v_rff(rho, gamma)?,
                Nrff => theory::v_nrff(rho, gamma)?,
                GcwsRbf => theory::v_gcws_rbf(rho, gamma)?,
                GcwsGmm => {
                    let g = theory::g_of_rho(rho)?;
                    g * (1.0 - g)
                }
            };
            Ok(SimRow {
                rho,
                gamma,
                k: s.k,
                estimator: s.estimator,
                reps: s.reps,
                target: s.target,
                mean: s.mean,
                bias: s.bias,
                variance: s.variance,
                mse: s.mse,
                theory_variance: v / s.k as f64,
            })
        })
        .collect::<kernlin::Result<Vec<_>>>()?;
    write_text(&a.output, &csv_table(&rows)?)
}

fn cmd_figure(a: &FigureArgs) -> CliResult<()> {
    let which: Figure = a.which.parse().map_err(|e: kernlin::Error| usage(e.to_string()))?;
    let mut grid = FigureGrid::default();
    if which == Figure::MseVsK {
        let (Some(rho), [gamma], Some(seed)) = (a.rho, a.gamma.as_slice(), a.seed) else {
            return Err(usage("figure 2 requires --rho, a single --gamma and --seed"));
        };
        grid.sim = Some(SimConfig::new(rho, *gamma, a.k_grid.clone(), a.reps, seed)?);
    } else if !a.gamma.is_empty() {
        grid.gammas = a.gamma.clone();
    }
    write_text(&a.output, &montecarlo::emit_figure_data(which, &grid)?)
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let cfg = TrainConfig::new(a.c, a.epochs, a.seed)?;
    let ds = read_dataset(&a.input)?;
    let model = linear_model::train(&ds, &cfg)?;
    let acc = linear_model::evaluate(&model, &ds)?;
    log::info!("training accuracy {acc}");
    let mut out = open_output(&a.model)?;
    model.save(&mut out)?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let model = LinearModel::load(dataio::open_input(Path::new(&a.model))?)?;
    let ds = read_dataset(&a.input)?;
    let acc = linear_model::evaluate(&model, &ds)?;
    write_text("-", &format!("accuracy {acc}\n"))
}

#[derive(Serialize)]
struct SweepRow {
    scheme: SweepScheme,
    k: Option<usize>,
    b: Option<u32>,
    #[serde(rename = "C")]
    c: f64,
    seed: u64,
    accuracy: f64,
}

fn fit_score(train: &Dataset, test: &Dataset, c: f64, epochs: usize, seed: u64) -> kernlin::Result<f64> {
    let model = linear_model::train(train, &TrainConfig::new(c, epochs, seed)?)?;
    let test = Dataset::with_dim(test.rows().to_vec(), model.dim().max(test.dim()))?;
    linear_model::evaluate(&model, &test)
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    if a.seeds.is_empty() {
        return Err(usage("--seeds is required"));
    }
    let full = read_dataset(&a.input)?;
    let (train, test) = match &a.test {
        Some(p) => (full, read_dataset(p)?),
        None => {
            if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
                return Err(usage("--test-fraction must lie in (0, 1)"));
            }
            kernlin::synth::interleaved_split(&full, a.test_fraction)
        }
    };
    let dim = train.dim().max(test.dim());
    let train = Dataset::with_dim(train.rows().to_vec(), dim)?;
    let test = Dataset::with_dim(test.rows().to_vec(), dim)?;
    let (train_n, test_n) = (normalized(&train), normalized(&test));
    let mut rows = Vec::new();
    for &scheme in &a.schemes {
        for &seed in &a.seeds {
            let configs: Vec<(Option<usize>, Option<u32>, Option<Scheme>)> = match scheme {
                SweepScheme::Linear => vec![(None, None, None)],
                SweepScheme::Gcws => a
                    .k_list
                    .iter()
                    .flat_map(|&k| a.b_list.iter().map(move |&b| (k, b)))
                    .map(|(k, b)| Ok((Some(k), Some(b), Some(Scheme::Gcws(GcwsConfig::new(k, b, seed)?)))))
                    .collect::<kernlin::Result<_>>()?,
                SweepScheme::Nrff => a
                    .k_list
                    .iter()
                    .map(|&k| Ok((Some(k), None, Some(Scheme::Rff(RffConfig::new(k, a.gamma, seed)?)))))
                    .collect::<kernlin::Result<_>>()?,
            };
            for (k, b, sch) in configs {
                let (tr, te) = match (&sch, scheme) {
                    (None, _) => (train_n.clone(), test_n.clone()),
                    (Some(s), SweepScheme::Gcws) => (dataio::hash_dataset(&train, s)?, dataio::hash_dataset(&test, s)?),
                    (Some(s), _) => (dataio::hash_dataset(&train_n, s)?, dataio::hash_dataset(&test_n, s)?),
                };
                for &c in &a.c_list {
                    let accuracy = fit_score(&tr, &te, c, a.epochs, seed)?;
                    rows.push(SweepRow {
                        scheme,
                        k,
                        b,
                        c,
                        seed,
                        accuracy,
                    });
                }
            }
        }
    }
    write_text(&a.output, &csv_table(&rows)?)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Transform(a) => cmd_transform(a),
        Command::Kernel(a) => cmd_kernel(a),
        Command::Hash(a) => cmd_hash(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Figure(a) => cmd_figure(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.trim_start_matches("error: ");
            eprint!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(usage(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        // downstream reader closed early, as in `kernlin ... | head`
        Err(Failure::Data(kernlin::Error::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
