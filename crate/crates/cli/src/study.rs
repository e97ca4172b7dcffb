use std::path::PathBuf;
use std::time::Instant;

use contact_star::asymptotics::{capacity_estimate, ek_time};
use contact_star::chain::{build_reduced_chain, parse_rational, Mode, ModelParams, State};
use contact_star::numerics::{HpScalar, Precision, DEFAULT_PRECISION};
use contact_star::potential::{capacity, direct_hitting_time, with_stationary};
use contact_star::Result;
use rayon::prelude::*;
use rug::Rational;

use crate::{output, Failure};

#[derive(clap::Args)]
pub struct StudyArgs {
    /// Comma-separated infection rates.
    #[arg(long, default_value = "0.5,1,2")]
    lambda_list: String,
    /// Comma-separated star sizes.
    #[arg(long, default_value = "50,100,200,400,800")]
    n_list: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Add a runtime_ms column (makes the output run-dependent).
    #[arg(long)]
    timings: bool,
    /// Capacity target `(1, ⌊fN⌋)`.
    #[arg(long, default_value_t = 0.3)]
    target_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision_bits: Precision,
}

struct Row {
    n: usize,
    lambda: String,
    exact_time: String,
    ek_time: String,
    ratio: String,
    cap_exact: String,
    cap_asym: String,
    cap_ratio: String,
    runtime_ms: u128,
    errors: String,
}

struct Values {
    exact: HpScalar,
    ek: HpScalar,
    cap: HpScalar,
    cap_asym: HpScalar,
}

fn compute(params: &ModelParams, fraction: f64, prec: Precision) -> Result<Values> {
    let n = params.n;
    let absorbing = build_reduced_chain::<HpScalar>(params, Mode::Absorbing, prec);
    let exact = direct_hitting_time(&absorbing, params.all_infected().index(n), &[0])?;
    let ek = ek_time(params, prec)?.gamma_form.value;
    let regen = with_stationary(build_reduced_chain::<HpScalar>(params, Mode::Regenerative, prec))?;
    let target = State::new(1, (fraction * n as f64).floor() as usize).index(n);
    let cap = capacity(&regen, &[0], &[target])?;
    let cap_asym = capacity_estimate(params, fraction, prec)?.value;
    Ok(Values { exact, ek, cap, cap_asym })
}

fn row(lambda: &str, value: &Rational, n: usize, fraction: f64, prec: Precision) -> Row {
    let start = Instant::now();
    let result = ModelParams::with_lambda(n, value.clone()).and_then(|p| compute(&p, fraction, prec));
    let mut row = Row {
        n,
        lambda: lambda.to_string(),
        exact_time: String::new(),
        ek_time: String::new(),
        ratio: String::new(),
        cap_exact: String::new(),
        cap_asym: String::new(),
        cap_ratio: String::new(),
        runtime_ms: 0,
        errors: String::new(),
    };
    match result {
        Ok(v) => {
            row.exact_time = v.exact.to_decimal();
            row.ek_time = v.ek.to_decimal();
            row.ratio = (&v.exact / &v.ek).to_f64().to_string();
            row.cap_exact = v.cap.to_decimal();
            row.cap_asym = v.cap_asym.to_decimal();
            row.cap_ratio = (&v.cap / &v.cap_asym).to_f64().to_string();
        }
        Err(e) => row.errors = e.to_string(),
    }
    row.runtime_ms = start.elapsed().as_millis();
    row
}

fn parse_list<T>(
    s: &str,
    what: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> std::result::Result<Vec<(String, T)>, Failure> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if items.is_empty() {
        return Err(Failure::Usage(format!("{what} must not be empty")));
    }
    items
        .into_iter()
        .map(|x| parse(x).map(|v| (x.to_string(), v)).ok_or_else(|| Failure::Usage(format!("bad {what} entry {x:?}"))))
        .collect()
}

pub fn run(args: StudyArgs) -> std::result::Result<(), Failure> {
    let mut lambdas = parse_list(&args.lambda_list, "lambda-list", |x| parse_rational(x).ok())?;
    let mut sizes = parse_list(&args.n_list, "n-list", |x| x.parse::<usize>().ok())?;
    lambdas.sort_by(|a, b| a.1.cmp(&b.1));
    lambdas.dedup_by(|a, b| a.1 == b.1);
    sizes.sort_by_key(|s| s.1);
    sizes.dedup_by_key(|s| s.1);
    if !(args.target_fraction > 0.0 && args.target_fraction < 1.0) {
        return Err(Failure::Usage("target-fraction must lie in (0, 1)".into()));
    }

    let grid: Vec<(&str, &Rational, usize)> =
        lambdas.iter().flat_map(|(s, l)| sizes.iter().map(move |(_, n)| (s.as_str(), l, *n))).collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build().map_err(|e| Failure::Usage(e.to_string()))?;
    let rows: Vec<Row> = pool.install(|| {
        grid.par_iter().map(|&(s, l, n)| row(s, l, n, args.target_fraction, args.precision_bits)).collect()
    });

    let mut w =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(output(args.out.as_ref())?);
    let mut header =
        vec!["N", "lambda", "exact_time", "ek_time", "ratio", "cap_exact", "cap_asym", "cap_ratio", "errors"];
    if args.timings {
        header.push("runtime_ms");
    }
    w.write_record(&header)?;
    for r in &rows {
        let n = r.n.to_string();
        let mut rec = vec![
            n.as_str(),
            &r.lambda,
            &r.exact_time,
            &r.ek_time,
            &r.ratio,
            &r.cap_exact,
            &r.cap_asym,
            &r.cap_ratio,
            &r.errors,
        ];
        let ms = r.runtime_ms.to_string();
        if args.timings {
            rec.push(&ms);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
