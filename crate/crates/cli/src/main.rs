//! `trielab`: command-line front end to the markov-trie library.

mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use markov_trie::clt::{
    contraction_iterate, run_standardized, standardized_uniform_cloud, Initial, SimulationConfig,
    Standardization,
};
use markov_trie::moments::{compute_moment_table, error_term_table};
use markov_trie::poisson::{check_variance_decomposition, functional_equation_residual, window};
use markov_trie::source::{derive_seed, generate_strings};
use markov_trie::spectral::SpectralConstants;
use markov_trie::trie::{build_trie, default_max_depth};
use markov_trie::verify::{self, Preset, Status};
use markov_trie::{Error, MarkovChain, Symbol};
use serde::Serialize;
use serde_json::{json, Value};

use manifest::{emit, g17, Csv, RunManifest};

#[derive(Parser)]
#[command(
    name = "trielab",
    version,
    about = "Tries over Markov sources: exact moments, Poisson identities and CLT experiments"
)]
struct Cli {
    /// Print a structured JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy, Debug, Serialize)]
struct ChainArgs {
    /// Probability that a string starts with 0.
    #[arg(long, default_value_t = 0.5)]
    mu0: f64,
    #[arg(long, default_value_t = 0.6)]
    p00: f64,
    #[arg(long, default_value_t = 0.7)]
    p11: f64,
}

impl ChainArgs {
    fn chain(&self) -> Result<MarkovChain, Error> {
        MarkovChain::new(self.mu0, self.p00, self.p11)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Entropy rate, eigenvalue derivatives, variance constant and contraction factor.
    Analyze(AnalyzeArgs),
    /// Trie construction over simulated strings.
    #[command(subcommand)]
    Trie(TrieCommand),
    /// Exact moment table as CSV.
    Oracle(OracleArgs),
    /// Residuals of the Poisson mean equation and variance decomposition as CSV.
    PoissonCheck(PoissonArgs),
    /// Sample and standardize path lengths.
    Simulate(SimulateArgs),
    /// Iterate the resampled fixed-point map from uniform clouds.
    Contraction(ContractionArgs),
    /// Run the end-to-end scorecard.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Subcommand)]
enum TrieCommand {
    /// Shape statistics of one trie.
    Stats(TrieStatsArgs),
}

#[derive(Args, Debug, Serialize)]
struct TrieStatsArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Depth cap; defaults to 128 * ceil(log2(n + 2)).
    #[arg(long)]
    max_depth: Option<usize>,
    /// Also write the depth histogram as CSV (depth,count).
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 1024)]
    n_max: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PoissonArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,50,200,1000")]
    lambdas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum StandardizeArg {
    Oracle,
    Asymptotic,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum InitialArg {
    /// First symbols drawn with probability mu0 of a 0.
    Chain,
    /// Every string starts with 0.
    Zero,
    /// Every string starts with 1.
    One,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StandardizeArg::Asymptotic)]
    standardize: StandardizeArg,
    #[arg(long, value_enum, default_value_t = InitialArg::Chain)]
    initial: InitialArg,
    /// Write the standardized samples, one per line.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Worker threads; 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Debug, Serialize)]
struct ContractionArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum PresetArg {
    Quick,
    Full,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, value_enum, default_value_t = PresetArg::Quick)]
    preset: PresetArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Verification(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidChain { .. }
            | Error::InvalidConfig(_)
            | Error::BadExponent(_)
            | Error::SymmetricChain => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("i/o: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn print_json(v: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("reports serialize")
    );
}

/// Adds `chain` and `manifest` keys to a report object.
fn decorate(mut report: Value, chain: &MarkovChain, manifest: &RunManifest) -> Value {
    let obj = report.as_object_mut().expect("reports are objects");
    obj.insert(
        "chain".into(),
        serde_json::to_value(chain).expect("chain serializes"),
    );
    obj.insert("manifest".into(), manifest.to_json());
    report
}

/// CSV artifacts go to `--out` (or stdout); with `--json` the summary takes stdout.
fn finish_csv(
    json: bool,
    out: Option<&PathBuf>,
    csv: &Csv,
    chain: &MarkovChain,
    mut manifest: RunManifest,
) -> Outcome {
    if json && out.is_none() {
        return Err(Failure::Usage("--json needs --out for CSV output".into()));
    }
    if let Some(p) = out {
        manifest.output(p);
    }
    manifest.finish();
    emit(out, &csv.render(&manifest))?;
    if json {
        print_json(&decorate(json!({ "rows": csv.len() }), chain, &manifest));
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let mut manifest = RunManifest::start("analyze", args, None);
    let c = SpectralConstants::compute(&chain);
    manifest.finish();
    if json {
        let report = serde_json::to_value(&c).expect("constants serialize");
        print_json(&decorate(report, &chain, &manifest));
    } else {
        println!("H = {}\nH0 = {}\nH1 = {}", g17(c.h), g17(c.h0), g17(c.h1));
        println!("pi = ({}, {})", g17(c.pi0), g17(c.pi1));
        println!(
            "lambda'(-1) = {}\nlambda''(-1) = {}",
            g17(c.lambda_dot),
            g17(c.lambda_ddot)
        );
        println!("sigma2 = {}", g17(c.sigma2));
        println!(
            "xi(3) = {}\ncondition (multivariate) holds = {}",
            g17(c.xi_s3),
            c.cond39
        );
        if let Some(w) = &c.warning {
            println!("warning: {w}");
        }
    }
    Ok(())
}

fn trie_stats(args: &TrieStatsArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let mut manifest = RunManifest::start("trie stats", args, Some(args.seed));
    let mut strings = generate_strings(&chain, args.n, args.seed, None);
    let trie = build_trie(
        &mut strings,
        args.max_depth.unwrap_or_else(|| default_max_depth(args.n)),
    )?;
    let stats = trie.stats();
    if let Some(p) = &args.histogram_csv {
        manifest.output(p);
    }
    manifest.finish();
    if let Some(p) = &args.histogram_csv {
        let mut csv = Csv::new(&["depth", "count"]);
        for (d, c) in &stats.depth_histogram {
            csv.row(vec![d.to_string(), c.to_string()]);
        }
        emit(Some(p), &csv.render(&manifest))?;
    }
    if json {
        let report = serde_json::to_value(&stats).expect("stats serialize");
        print_json(&decorate(report, &chain, &manifest));
    } else {
        println!(
            "n = {}\nepl = {}\nsize = {}\nheight = {}",
            stats.n, stats.epl, stats.size, stats.height
        );
        println!("split path length = {}", trie.split_path_length());
    }
    Ok(())
}

fn oracle(args: &OracleArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let manifest = RunManifest::start("oracle", args, None);
    let table = compute_moment_table(&chain, args.n_max)?;
    // The error terms need an asymmetric chain; their columns stay empty otherwise.
    let f = error_term_table(&table).ok();
    let mut csv = Csv::new(&["n", "nu0", "nu1", "var0", "var1", "f0", "f1"]);
    for n in 0..=args.n_max {
        let fi = |i| f.as_ref().map(|t| g17(t.f(i, n))).unwrap_or_default();
        csv.row(vec![
            n.to_string(),
            g17(table.nu(Symbol::Zero, n)),
            g17(table.nu(Symbol::One, n)),
            g17(table.var(Symbol::Zero, n)),
            g17(table.var(Symbol::One, n)),
            fi(Symbol::Zero),
            fi(Symbol::One),
        ]);
    }
    finish_csv(json, args.out.as_ref(), &csv, &chain, manifest)
}

fn poisson_check(args: &PoissonArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let manifest = RunManifest::start("poisson-check", args, None);
    if let Some(bad) = args.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Failure::Usage(format!(
            "lambda must be positive, got {bad}"
        )));
    }
    let top = args.lambdas.iter().copied().fold(1.0, f64::max);
    let table = compute_moment_table(&chain, window(top).1 + 2)?;
    let mut csv = Csv::new(&["lambda", "i", "mean_residual", "variance_residual"]);
    for &l in &args.lambdas {
        for i in Symbol::BOTH {
            csv.row(vec![
                g17(l),
                i.index().to_string(),
                g17(functional_equation_residual(&table, i, l)?),
                g17(check_variance_decomposition(&table, i, l)?),
            ]);
        }
    }
    finish_csv(json, args.out.as_ref(), &csv, &chain, manifest)
}

fn simulate(args: &SimulateArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let mut manifest = RunManifest::start("simulate", args, Some(args.seed));
    let initial = match args.initial {
        InitialArg::Chain => Initial::Chain,
        InitialArg::Zero => Initial::Delta(Symbol::Zero),
        InitialArg::One => Initial::Delta(Symbol::One),
    };
    let standardization = match args.standardize {
        StandardizeArg::Oracle => Standardization::Oracle,
        StandardizeArg::Asymptotic => Standardization::Asymptotic,
    };
    let config = SimulationConfig::new(chain, args.n, args.m, args.seed)
        .with_initial(initial)
        .with_standardization(standardization)
        .with_threads(args.threads);
    config.validate()?;
    let table = compute_moment_table(&chain, args.n)?;
    let run = run_standardized(&config, &table)?;
    if let Some(p) = &args.samples {
        manifest.output(p);
    }
    manifest.finish();
    if let Some(p) = &args.samples {
        let mut csv = Csv::new(&[]);
        for x in run.standardized.samples() {
            csv.row(vec![g17(*x)]);
        }
        emit(Some(p), &csv.render(&manifest))?;
    }
    let s = run.summary;
    let pass = json!({
        "ks_le_0_05": s.ks <= 0.05,
        "mean_ok": run.flags.map(|f| f.mean_ok),
        "variance_ok": run.flags.map(|f| f.variance_ok),
    });
    if json {
        let report = json!({
            "config": config,
            "center": run.center,
            "scale": run.scale,
            "oracle_sd": run.oracle_sd,
            "mean": s.mean,
            "var": s.variance,
            "skew": s.skewness,
            "kurt": s.excess_kurtosis,
            "ks": s.ks,
            "pass": pass,
        });
        print_json(&decorate(report, &chain, &manifest));
    } else {
        println!(
            "center = {}\nscale = {} (exact sd {})",
            g17(run.center),
            g17(run.scale),
            g17(run.oracle_sd)
        );
        println!("mean = {}\nvar = {}", g17(s.mean), g17(s.variance));
        println!(
            "skew = {}\nkurt = {}\nks = {}",
            g17(s.skewness),
            g17(s.excess_kurtosis),
            g17(s.ks)
        );
        if let Some(f) = run.flags {
            println!("mean_ok = {}\nvariance_ok = {}", f.mean_ok, f.variance_ok);
        }
    }
    Ok(())
}

fn contraction(args: &ContractionArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let manifest = RunManifest::start("contraction", args, Some(args.seed));
    if args.m == 0 {
        return Err(Failure::Usage("--m must be positive".into()));
    }
    let (steps, _, _) = contraction_iterate(
        standardized_uniform_cloud(args.m, derive_seed(args.seed, 0)),
        standardized_uniform_cloud(args.m, derive_seed(args.seed, 1)),
        &chain,
        args.iters,
        derive_seed(args.seed, 2),
    )?;
    let mut csv = Csv::new(&["iteration", "ks0", "ks1"]);
    for s in &steps {
        csv.row(vec![s.iteration.to_string(), g17(s.ks0), g17(s.ks1)]);
    }
    finish_csv(json, args.out.as_ref(), &csv, &chain, manifest)
}

fn verify_cmd(args: &VerifyArgs, json: bool) -> Outcome {
    let chain = args.chain.chain()?;
    let mut manifest = RunManifest::start("verify", args, Some(args.seed));
    let preset = match args.preset {
        PresetArg::Quick => Preset::Quick,
        PresetArg::Full => Preset::Full,
    };
    let card = verify::run(&chain, preset, args.seed)?;
    manifest.finish();
    if json {
        let mut report = serde_json::to_value(&card).expect("scorecard serializes");
        let obj = report.as_object_mut().expect("object");
        obj.insert("all_pass".into(), card.all_pass().into());
        obj.insert(
            "first_failure".into(),
            card.first_failure()
                .map(|i| Value::from(i.name.clone()))
                .unwrap_or(Value::Null),
        );
        print_json(&decorate(report, &chain, &manifest));
    } else {
        for item in &card.items {
            let tag = match item.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skipped => "SKIP",
            };
            println!("{tag} {}: {}", item.name, item.detail);
        }
    }
    match card.first_failure() {
        Some(item) => Err(Failure::Verification(format!(
            "{} failed: {}",
            item.name, item.detail
        ))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    let outcome = match &cli.command {
        Command::Analyze(a) => analyze(a, json),
        Command::Trie(TrieCommand::Stats(a)) => trie_stats(a, json),
        Command::Oracle(a) => oracle(a, json),
        Command::PoissonCheck(a) => poisson_check(a, json),
        Command::Simulate(a) => simulate(a, json),
        Command::Contraction(a) => contraction(a, json),
        Command::Verify(a) => verify_cmd(a, json),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
