//! `modmark`: generate, verify, and batch-check Markov map instances.
//!
//! Exit codes: 0 success, 1 some verdict failed, 2 bad flags or malformed input,
//! 3 a generator did not converge (output still written), 4 inconsistent shapes.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use modmark_core::generators::{GenKind, GenParams, GenSpec};
use modmark_core::instance::InstanceFile;
use modmark_core::numsub::DEFAULT_BASE_TOL;
use modmark_core::verify::{run_instance, InstanceInfo, SuiteConfig, VerifyConfig};
use modmark_core::{generate, run_suite, verify_channel, Error};

const TOL_ENV: &str = "MODMARK_TOL";

#[derive(Parser)]
#[command(
    name = "modmark",
    version,
    about = "Modular theory checks for Markov maps between finite-dimensional algebras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance file.
    Gen(GenArgs),
    /// Run every residual check on an instance file.
    Verify(VerifyArgs),
    /// Generate and verify a batch of instances.
    Suite(SuiteArgs),
    /// Pretty-print an instance file.
    Show(ShowArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: GenKind,
    /// Block sizes of the algebra, e.g. `2` or `2,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator parameters as JSON, e.g. `{"c":[[1,0.5],[0.5,1]]}`.
    #[arg(long)]
    params: Option<String>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 8)]
    t_samples: usize,
    #[arg(long, default_value_t = 16)]
    z_samples: usize,
    /// Range of real exponents as `a:b`.
    #[arg(long, default_value = "-1:1", allow_hyphen_values = true)]
    s_range: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Comma-separated algebras; blocks within one algebra joined by `+`, e.g. `2,3,2+2`.
    #[arg(long, default_value = "2,3,4,2+2,3+1")]
    dims: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<GenKind>>,
    #[arg(long)]
    json: bool,
    /// Directory for per-instance files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShowArgs {
    file: PathBuf,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn usage(err: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            err: err.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConvergence => 3,
            Error::ShapeMismatch(_) => 4,
            _ => 2,
        };
        Failure { code, err: e.into() }
    }
}

fn base_tol() -> Result<f64, Failure> {
    match std::env::var(TOL_ENV) {
        Ok(v) => {
            let t: f64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::usage(anyhow::anyhow!("{TOL_ENV}='{v}' is not a number")))?;
            if !(t.is_finite() && t > 0.0) {
                return Err(Failure::usage(anyhow::anyhow!("{TOL_ENV} must be positive")));
            }
            Ok(t)
        }
        Err(_) => Ok(DEFAULT_BASE_TOL),
    }
}

fn parse_s_range(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::usage(anyhow::anyhow!("--s-range expects a:b, got '{s}'"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(bad());
    }
    Ok((a, b))
}

fn parse_suite_dims(s: &str) -> Result<Vec<Vec<usize>>, Failure> {
    s.split(',')
        .map(|alg| {
            alg.split('+')
                .map(|d| d.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Failure::usage(anyhow::anyhow!("bad --dims entry '{alg}'")))
        })
        .collect()
}

fn load(path: &Path) -> Result<InstanceFile, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::usage)?;
    Ok(InstanceFile::from_json(&text)?)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::usage)
}

fn cmd_gen(args: GenArgs) -> Result<u8, Failure> {
    let tol = base_tol()?;
    let params: GenParams = match &args.params {
        Some(p) => serde_json::from_str(p)
            .context("parsing --params")
            .map_err(Failure::usage)?,
        None => GenParams::default(),
    };
    let spec = GenSpec {
        kind: args.kind,
        dims: args.dims,
        seed: args.seed,
        params,
    };
    let g = generate(&spec)?;
    write(&args.output, &InstanceFile::from_generated(&g).to_json())?;
    let check = g.channel.check_markov_with(tol);
    print!("{}", output::gen_summary(&g, &check, &args.output));
    Ok(if g.flagged { 3 } else { 0 })
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, Failure> {
    let tol = base_tol()?;
    let s_range = parse_s_range(&args.s_range)?;
    let file = load(&args.file)?;
    let ch = file.to_channel()?;
    let cfg = VerifyConfig::with_counts(args.t_samples, args.z_samples, s_range, tol);
    let mut info = InstanceInfo::for_channel(args.file.display().to_string(), &ch);
    info.seed = file.metadata.seed.unwrap_or(0);
    info.kind = file.metadata.genspec.as_ref().map(|g| g.kind);
    info.genspec = file.metadata.genspec.clone();
    info.flagged = file.metadata.flagged;

    let check = ch.check_markov_with(tol);
    if !check.is_ucp_state_preserving() {
        if args.json {
            println!("{}", output::json_markov_rejection(&info, &check));
        } else {
            println!(
                "{}: not unital cp state-preserving: {}",
                info.id,
                check.failure_summary()
            );
        }
        return Ok(1);
    }
    let report = verify_channel(&ch, info, &cfg)?;
    if args.json {
        println!("{}", output::json_report(&report));
    } else {
        print!("{}", output::report_table(&report));
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_suite(args: SuiteArgs) -> Result<u8, Failure> {
    let tol = base_tol()?;
    let kinds = args
        .kinds
        .unwrap_or_else(|| GenKind::ALL.iter().copied().filter(|k| k.is_markov()).collect());
    let config = SuiteConfig {
        trials: args.trials,
        dims: parse_suite_dims(&args.dims)?,
        seed: args.seed,
        kinds,
        verify: VerifyConfig {
            base_tol: tol,
            ..VerifyConfig::default()
        },
    };
    if config.trials == 0 {
        return Err(Failure::usage(anyhow::anyhow!("--trials must be at least 1")));
    }
    let report = run_suite(&config)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::usage)?;
        for i in 0..config.trials {
            let (rep, g) = run_instance(&config, i)?;
            write(
                &dir.join(format!("{}.json", rep.instance.id)),
                &InstanceFile::from_generated(&g).to_json(),
            )?;
        }
    }
    if args.json {
        println!("{}", output::json_suite(&report));
    } else {
        print!("{}", output::suite_table(&report));
    }
    Ok(if report.ok() { 0 } else { 1 })
}

fn cmd_show(args: ShowArgs) -> Result<u8, Failure> {
    let file = load(&args.file)?;
    let ch = file.to_channel()?;
    print!("{}", output::show(&file, &ch));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Show(a) => cmd_show(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
