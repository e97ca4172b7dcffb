mod study;
mod validate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contact_star::asymptotics::{capacity_estimate, ek_time};
use contact_star::chain::{build_reduced_chain, parse_rational, Mode, ModelParams, State};
use contact_star::numerics::{HpScalar, Precision, PrecisionPolicy, DEFAULT_PRECISION};
use contact_star::potential::{
    adjoint_chain, capacity, capacity_test_objects, direct_hitting_time, with_stationary, TestObjectOptions,
};
use contact_star::qsd::qsd_by_recurrence;
use contact_star::sim::{estimate_mean, SimConfig};
use contact_star::Error;
use rug::Rational;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "contact-star",
    version,
    about = "Extinction times, capacities and quasi-stationary measures of the contact process on a star"
)]
struct Cli {
    /// Print informational log messages to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the restricted stationary measure (u, v) of the regenerative chain.
    Qsd(QsdArgs),
    /// Mean extinction time from a given state.
    Extinction(ExtinctionArgs),
    /// Capacity between (0,0) and (1,target).
    Capacity(CapacityArgs),
    /// Convergence study over a grid of (lambda, N).
    Study(study::StudyArgs),
    /// Run the built-in invariant suites.
    Validate(validate::ValidateArgs),
}

#[derive(clap::Args)]
struct QsdArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = rational)]
    lambda: Rational,
    #[arg(long, value_parser = rational, default_value = "1")]
    alpha: Rational,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision_bits: Precision,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct ExtinctionArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = rational)]
    lambda: Rational,
    /// Starting state as `hub,count`; defaults to all infected.
    #[arg(long, value_parser = state)]
    from: Option<State>,
    #[arg(long, value_enum, default_value_t = ExtinctionMethod::Exact)]
    method: ExtinctionMethod,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision_bits: Precision,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtinctionMethod {
    Exact,
    Formula,
    Simulate,
}

#[derive(clap::Args)]
struct CapacityArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = rational)]
    lambda: Rational,
    #[arg(long, value_parser = rational, default_value = "1")]
    alpha: Rational,
    #[arg(long)]
    target: usize,
    #[arg(long, value_enum, default_value_t = CapacityMethod::Exact)]
    method: CapacityMethod,
    /// Lower edge of the admissible target window, as a fraction of N.
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision_bits: Precision,
}

#[derive(Clone, Copy, ValueEnum)]
enum CapacityMethod {
    Exact,
    Asymptotic,
    Dirichlet,
    Thomson,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn state(s: &str) -> Result<State, String> {
    let (hub, count) = s.split_once(',').ok_or_else(|| format!("expected `hub,count`, got {s:?}"))?;
    let hub: u8 = hub.trim().parse().map_err(|_| format!("bad hub status {hub:?}"))?;
    let count: usize = count.trim().parse().map_err(|_| format!("bad count {count:?}"))?;
    if hub > 1 {
        return Err(format!("hub status must be 0 or 1, got {hub}"));
    }
    Ok(State::new(hub, count))
}

/// Everything that ends a command early, with its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Io(io::Error),
    Validation(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(io::Error::other(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e {
                Error::InvalidParams(_) | Error::Parse(_) | Error::StateOutOfRange(_) => 2,
                Error::PrecisionExhausted { .. } => 3,
                Error::SimulationInfeasible(_) | Error::Window { .. } | Error::Infeasible(_) => 4,
                _ => 1,
            },
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(Error::Window { n, lo, hi }) => {
                format!("target {n} is outside the admissible window [{lo}, {hi}] for the test objects")
            }
            Failure::Core(e) => e.to_string(),
            Failure::Io(e) => e.to_string(),
            Failure::Validation(k) => format!("{k} check(s) failed"),
        }
    }
}

pub fn output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("json value"))?;
    Ok(())
}

fn cmd_qsd(args: QsdArgs) -> Result<(), Failure> {
    let params = ModelParams::new(args.n, args.lambda, args.alpha)?;
    let policy = PrecisionPolicy::new(args.precision_bits, PrecisionPolicy::default().target_rel_tol)?;
    let measure = qsd_by_recurrence(&params, &policy)?;
    let mut out = output(args.out.as_ref())?;
    match args.format {
        Format::Csv => measure.write_csv(&mut out)?,
        Format::Json => writeln!(out, "{}", measure.to_json())?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_extinction(args: ExtinctionArgs) -> Result<(), Failure> {
    let params = ModelParams::with_lambda(args.n, args.lambda)?;
    let from = args.from.unwrap_or(params.all_infected());
    if from.n > params.n {
        return Err(Failure::Usage(format!("count {} exceeds N = {}", from.n, params.n)));
    }
    let prec = args.precision_bits;
    let common = json!({
        "N": params.n,
        "lambda": params.lambda.to_string(),
        "from": format!("{},{}", from.hub, from.n),
    });
    let mut doc = match args.method {
        ExtinctionMethod::Exact => {
            let chain = build_reduced_chain::<HpScalar>(&params, Mode::Absorbing, prec);
            let t = direct_hitting_time(&chain, from.index(params.n), &[params.extinct().index(params.n)])?;
            json!({ "method": "exact", "value": t.to_decimal(), "log10": t.log10(), "precision_bits": prec })
        }
        ExtinctionMethod::Formula => {
            let ek = ek_time(&params, prec)?;
            json!({
                "method": "formula",
                "value": ek.gamma_form.value.to_decimal(),
                "log10": ek.gamma_form.log10(),
                "beta_form": ek.beta_form.value.to_decimal(),
                "relative_gap": ek.relative_gap(),
                "precision_bits": prec,
            })
        }
        ExtinctionMethod::Simulate => {
            let config = SimConfig::new(params.clone(), Some(from), args.seed, args.samples)?;
            let est = estimate_mean(&config)?;
            json!({
                "method": "simulate",
                "value": est.mean,
                "se": est.se,
                "ci95": [est.ci95.0, est.ci95.1],
                "samples": est.n,
                "seed": est.seed,
            })
        }
    };
    merge(&mut doc, common);
    print_json(&doc)
}

fn cmd_capacity(args: CapacityArgs) -> Result<(), Failure> {
    let params = ModelParams::new(args.n, args.lambda, args.alpha)?;
    if args.target > params.n {
        return Err(Failure::Usage(format!("target {} exceeds N = {}", args.target, params.n)));
    }
    let prec = args.precision_bits;
    let mut doc = match args.method {
        CapacityMethod::Exact => {
            let chain = with_stationary(build_reduced_chain::<HpScalar>(&params, Mode::Regenerative, prec))?;
            let (a, b) = ([0], [State::new(1, args.target).index(params.n)]);
            let cap = capacity(&chain, &a, &b)?;
            let adj = capacity(&adjoint_chain(&chain)?, &a, &b)?;
            json!({ "method": "exact", "value": cap.to_decimal(), "log10": cap.log10(), "adjoint": adj.to_decimal() })
        }
        CapacityMethod::Asymptotic => {
            let est = capacity_estimate(&params, args.eps, prec)?;
            let (lo, hi) = est.window.expect("capacity estimate carries its window");
            if args.target < lo || args.target > hi {
                log::warn!("target {} lies outside the window [{lo}, {hi}] where the estimate applies", args.target);
            }
            json!({ "method": "asymptotic", "value": est.value.to_decimal(), "log10": est.log10(), "window": [lo, hi] })
        }
        CapacityMethod::Dirichlet | CapacityMethod::Thomson => {
            let opts = TestObjectOptions { eps: args.eps, ..TestObjectOptions::default() };
            let objects = capacity_test_objects(&params, args.target, &opts, prec)?;
            let bracket = objects.bracket(&params, prec)?;
            let (name, value) = match args.method {
                CapacityMethod::Dirichlet => ("dirichlet", bracket.dirichlet),
                _ => ("thomson", bracket.thomson),
            };
            json!({
                "method": name,
                "value": value.to_decimal(),
                "log10": value.log10(),
                "exact_trace": bracket.exact.to_decimal(),
                "ratio": (&value / &bracket.exact).to_f64(),
                "mass_F": objects.mass_f.to_decimal(),
                "R1": objects.r1,
                "R2": objects.r2,
            })
        }
    };
    merge(
        &mut doc,
        json!({
            "N": params.n,
            "lambda": params.lambda.to_string(),
            "alpha": params.alpha.to_string(),
            "target": format!("1,{}", args.target),
        }),
    );
    print_json(&doc)
}

fn merge(doc: &mut serde_json::Value, extra: serde_json::Value) {
    if let (Some(d), serde_json::Value::Object(e)) = (doc.as_object_mut(), extra) {
        d.extend(e);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Qsd(a) => cmd_qsd(a),
        Command::Extinction(a) => cmd_extinction(a),
        Command::Capacity(a) => cmd_capacity(a),
        Command::Study(a) => study::run(a),
        Command::Validate(a) => validate::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
