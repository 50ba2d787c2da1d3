//! `nestcop`: evaluate, fit, sample, check and benchmark nested Archimedean
//! copula models from JSON model files and CSV pseudo-observations.
//!
//! Exit codes: 0 success, 1 input error, 2 evaluation error, 3 fit did not
//! converge (the result is still written).

use clap::{Args, Parser, Subcommand, ValueEnum};
use nestcop::bell::{EdgePath, EvalOptions};
use nestcop::bench::{bench_topology, log_log_slope, Topology};
use nestcop::data::Dataset;
use nestcop::fit::{fit_mle, FitOptions};
use nestcop::generators::Family;
use nestcop::grad::{log_densities, log_densities_with_gradient_opts};
use nestcop::sample::rosenblatt_nested;
use nestcop::tree::{CopulaTree, NodeSpec};
use nestcop::validity::validity_report;
use nestcop::{Error, Result};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nestcop", version, about = "Nested Archimedean copula densities, fitting and sampling")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomised commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-likelihood of a dataset, optionally with gradient and per-row values.
    Eval(EvalArgs),
    /// Censored maximum-likelihood fit starting from the model's parameters.
    Fit(FitArgs),
    /// Draw pseudo-observations from the model.
    Sample(SampleArgs),
    /// Nesting-validity diagnostics for every edge.
    Check(CheckArgs),
    /// Time single-observation densities over dimensions.
    Bench(BenchArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Include the gradient in the free parameters.
    #[arg(long)]
    grad: bool,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    log_domain: Toggle,
    /// Include every row's log-density.
    #[arg(long)]
    per_row: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Skip the observed-information standard errors.
    #[arg(long)]
    no_se: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of rows.
    #[arg(long, short)]
    n: usize,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    /// Data whose edge arguments join the check grid.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PathArg::Auto)]
    edge_path: PathArg,
}

#[derive(Args)]
struct BenchArgs {
    /// fixed_k, sqrt_d, two_sector or chain.
    #[arg(long, default_value = "fixed_k")]
    topology: String,
    #[arg(long, default_value = "clayton")]
    family: String,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 400])]
    d: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Auto,
    Implicit,
    Explicit,
}

impl From<PathArg> for EdgePath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Auto => EdgePath::Auto,
            PathArg::Implicit => EdgePath::Implicit,
            PathArg::Explicit => EdgePath::Explicit,
        }
    }
}

fn load_model(path: &Path) -> Result<CopulaTree> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let spec = NodeSpec::from_json(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    CopulaTree::from_spec(&spec)
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load(path).map_err(|e| match e {
        Error::Io(e) => Error::Input(format!("{}: {e}", path.display())),
        e => e,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Input(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn eval(a: &EvalArgs, out: &Option<PathBuf>) -> Result<ExitCode> {
    let tree = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    let opts = match a.log_domain {
        Toggle::On => EvalOptions::default(),
        Toggle::Off => EvalOptions::raw(),
    };
    let p = tree.params();
    let (rows, grad) = if a.grad {
        let rows = log_densities_with_gradient_opts(&tree, &data, p, &opts)?;
        let mut g = vec![0.0; p.len()];
        for (_, gi) in &rows {
            for (s, x) in g.iter_mut().zip(gi) {
                *s -= x;
            }
        }
        (rows.into_iter().map(|r| r.0).collect::<Vec<_>>(), Some(g))
    } else {
        (log_densities(&tree, &data, p, &opts)?, None)
    };
    let nll = -rows.iter().sum::<f64>();
    let mut report = json!({ "n": data.n(), "d": data.dim(), "param_names": tree.param_names(), "params": p, "nll": nll });
    if let Some(g) = grad {
        report["nll_gradient"] = json!(g);
    }
    if a.per_row {
        report["log_densities"] = json!(rows);
    }
    emit(out, &pretty(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn fit(a: &FitArgs, out: &Option<PathBuf>) -> Result<ExitCode> {
    let tree = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    let mut opts = FitOptions { standard_errors: !a.no_se, ..Default::default() };
    if let Some(k) = a.max_iter {
        opts.optimizer.max_iter = k;
    }
    let r = fit_mle(&tree, &data, tree.params(), &opts)?;
    let fitted = tree.to_spec_with(&r.params);
    let mut report = serde_json::to_value(&r)?;
    report["model"] = serde_json::to_value(&fitted)?;
    emit(out, &pretty(&report))?;
    Ok(if r.converged { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn sample(a: &SampleArgs, seed: u64, out: &Option<PathBuf>) -> Result<ExitCode> {
    let tree = load_model(&a.model)?;
    if a.n == 0 {
        return Err(Error::Input("--n must be positive".into()));
    }
    let rows = rosenblatt_nested(&tree, a.n, seed)?;
    let mut buf = format!("# seed={seed}\n").into_bytes();
    Dataset::from_rows(&rows)?.write_csv(&mut buf)?;
    emit(out, &String::from_utf8(buf).expect("csv is utf-8"))?;
    Ok(ExitCode::SUCCESS)
}

fn check(a: &CheckArgs, out: &Option<PathBuf>) -> Result<ExitCode> {
    let tree = load_model(&a.model)?;
    let data = a.data.as_deref().map(load_data).transpose()?;
    let report = validity_report(&tree, data.as_ref(), a.edge_path.into())?;
    let mut v = serde_json::to_value(&report)?;
    v["violations"] = serde_json::to_value(tree.validate())?;
    emit(out, &pretty(&v))?;
    Ok(ExitCode::SUCCESS)
}

fn bench(a: &BenchArgs, out: &Option<PathBuf>) -> Result<ExitCode> {
    let top: Topology = a.topology.parse()?;
    let family: Family = a.family.parse()?;
    if a.reps == 0 || a.d.is_empty() {
        return Err(Error::Input("bench needs --reps ≥ 1 and at least one --d".into()));
    }
    let rows = bench_topology(top, family, &a.d, a.reps)?;
    let mut text = String::from("d,median_ms\n");
    for r in &rows {
        text += &format!("{},{}\n", r.d, r.median_ms);
    }
    emit(out, &text)?;
    if rows.len() > 1 {
        eprintln!("log-log slope: {:.3}", log_log_slope(&rows));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| Error::Input(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Eval(a) => eval(a, &cli.out),
        Command::Fit(a) => fit(a, &cli.out),
        Command::Sample(a) => sample(a, cli.seed, &cli.out),
        Command::Check(a) => check(a, &cli.out),
        Command::Bench(a) => bench(a, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 1 } else { 2 })
        }
    }
}
