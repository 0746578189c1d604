use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use hypwin::adversaries::BobSpec;
use hypwin::conformal::{Ifs1d, IfsSpec};
use hypwin::dynamics::{Chain, MapSequence, MapSpec};
use hypwin::experiment::{run_experiment, verify_trace, ExperimentSpec};
use hypwin::game::{replay, AbortKind, Trace};
use hypwin::strategies::{constants_a, constants_b, Verification, DEFAULT_N_CAP};
use hypwin::targets::TargetSpec;
use hypwin::{Error, NumericMode, Scalar};

/// Exit codes.
const OK: u8 = 0;
const FAILED: u8 = 1;
const INVALID: u8 = 2;
const PRECISION: u8 = 3;

#[derive(Parser)]
#[command(name = "hypwin", version, about = "Hyperplane absolute game experiments")]
#[command(after_help = "Exit codes: 0 ok, 1 verification failed, 2 invalid spec, 3 precision exhausted.\n\
Default ball precision comes from HYPWIN_PRECISION (bits, default 512).")]
struct Cli {
    /// Numeric mode when a spec names none: rational, bigfloat or bigfloat:<bits>.
    #[arg(long, global = true, default_value = "rational")]
    mode: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play the game an experiment spec describes; writes trace.json and verify.json.
    Run(RunArgs),
    /// Re-check a recorded trace against its spec; writes verify.json.
    Verify(VerifyArgs),
    /// Replay a trace through the legality checker and print the result.
    Replay(ReplayArgs),
    /// Cylinders, certified constants, IFS subsystems and parameter sweeps.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    /// Overrides Bob's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for trace.json and verify.json when the spec names no paths.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    spec: PathBuf,
    trace: PathBuf,
    #[arg(long, default_value = "verify.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    trace: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Analyze {
    /// Cylinder table. CSV columns: word (dot-separated symbols), lo, hi, length.
    Cylinders {
        /// Map spec as inline JSON or a file path.
        #[arg(long)]
        map: String,
        #[arg(long)]
        depth: usize,
        /// Time at which the words start.
        #[arg(long, default_value_t = 1)]
        start: usize,
        /// Largest symbol listed for infinite alphabets.
        #[arg(long, default_value_t = 16)]
        max_symbol: i64,
    },
    /// Strategy constants as JSON.
    Constants {
        #[arg(long)]
        map: String,
        #[arg(long)]
        gamma: String,
        #[arg(long, value_enum)]
        assumption: Assumption,
        /// Target spec as inline JSON or a file path.
        #[arg(long, default_value = r#"{"kind":"identity"}"#)]
        target: String,
        #[arg(long, default_value_t = DEFAULT_N_CAP)]
        n_cap: usize,
    },
    /// IFS subsystem report. CSV columns: r, lambda, kept, delta_sep, count_bound, moran,
    /// mass_max_ratio, mass_violations.
    Subsystem {
        /// IFS spec as inline JSON or a file path.
        #[arg(long)]
        ifs: String,
        /// Scales, e.g. 1/729; repeat for several.
        #[arg(long = "r", required = true)]
        scales: Vec<String>,
        /// Random intervals for the mass distribution check; 0 skips it.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// γ × Bob-policy grid over one spec. CSV columns: cell, gamma, policy, seed, rounds,
    /// stages, min_covered, min_horizon, passed. Bob's λ is set to γ.
    Sweep {
        spec: PathBuf,
        /// Comma-separated γ values.
        #[arg(long)]
        gammas: String,
        /// Comma-separated policies: random, greedy.
        #[arg(long, default_value = "random")]
        policies: String,
        /// Seeds 0..seeds per cell.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Assumption {
    A,
    B,
}

/// Failure carrying its exit code.
struct Fail {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        let (code, kind) = match &e {
            Error::Indeterminate(_) => (PRECISION, "precision"),
            e if e.is_spec_error() => (INVALID, "spec"),
            Error::UnsupportedAssumption(_) | Error::CertificateTooWeak(_) | Error::Precondition(_) => {
                (INVALID, "unsupported")
            }
            Error::Io(_) => (INVALID, "io"),
            _ => (FAILED, "runtime"),
        };
        Fail { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Fail {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Fail {
        Error::from(e).into()
    }
}

impl From<csv::Error> for Fail {
    fn from(e: csv::Error) -> Fail {
        Fail { code: FAILED, kind: "io", message: e.to_string() }
    }
}

fn spec_fail(message: impl Into<String>) -> Fail {
    Fail { code: INVALID, kind: "spec", message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", json!({"error": {"kind": f.kind, "message": f.message, "exit_code": f.code}}));
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Fail> {
    let mode: NumericMode = cli.mode.parse().map_err(|_| spec_fail(format!("unknown mode {}", cli.mode)))?;
    match &cli.command {
        Command::Run(a) => cmd_run(a, mode),
        Command::Verify(a) => cmd_verify(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Analyze(a) => cmd_analyze(a, mode),
    }
}

/// Inline JSON when it looks like an object, otherwise a file path.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T, Fail> {
    let text = if arg.trim_start().starts_with('{') { arg.to_string() } else { fs::read_to_string(arg)? };
    Ok(serde_json::from_str(&text)?)
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, Fail> {
    Ok(ExperimentSpec::from_json(&fs::read_to_string(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Fail> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn resolve(base: &Path, named: Option<&String>, out_dir: &Path, default: &str) -> PathBuf {
    match named {
        Some(p) if Path::new(p).is_relative() => base.join(p),
        Some(p) => PathBuf::from(p),
        None => out_dir.join(default),
    }
}

/// Exit code for a finished game.
fn outcome_code(trace: &Trace, verification: Option<&Verification>) -> u8 {
    if trace.abort.as_ref().is_some_and(|a| a.kind == AbortKind::Precision) {
        return PRECISION;
    }
    match verification {
        Some(v) if !v.passed => FAILED,
        _ => OK,
    }
}

fn summary(trace: &Trace, v: Option<&Verification>) -> serde_json::Value {
    json!({
        "rounds": trace.rounds.len(),
        "final_radius": trace.final_radius.to_f64(),
        "abort": trace.abort.as_ref().map(|a| &a.message),
        "strategy": v.map(|v| &v.strategy),
        "stages_completed": v.map(|v| v.stages_completed),
        "covered": v.map(|v| v.covered.len()),
        "delta": v.and_then(|v| v.delta.as_ref()).map(Scalar::to_f64),
        "min_covered": v.and_then(|v| v.min_covered.as_ref()).map(Scalar::to_f64),
        "min_horizon": v.and_then(|v| v.min_horizon),
        "passed": v.map(|v| v.passed),
    })
}

fn cmd_run(a: &RunArgs, mode: NumericMode) -> Result<u8, Fail> {
    let mut spec = load_spec(&a.spec)?;
    if a.seed.is_some() {
        spec.seed = a.seed;
    }
    let base = a.spec.parent().unwrap_or(Path::new("."));
    let out = run_experiment(&spec, mode, Some(base))?;
    fs::create_dir_all(&a.out_dir)?;
    let trace_path = resolve(base, spec.output.trace.as_ref(), &a.out_dir, "trace.json");
    let verify_path = resolve(base, spec.output.verify.as_ref(), &a.out_dir, "verify.json");
    write_json(&trace_path, &out.trace)?;
    write_json(&verify_path, &out.verification)?;
    let v = out.verification.as_ref();
    let mut s = summary(&out.trace, v);
    s["trace"] = json!(trace_path);
    s["verify"] = json!(verify_path);
    println!("{s}");
    Ok(outcome_code(&out.trace, v))
}

fn cmd_verify(a: &VerifyArgs) -> Result<u8, Fail> {
    let spec = load_spec(&a.spec)?;
    let trace: Trace = serde_json::from_str(&fs::read_to_string(&a.trace)?)?;
    let base = a.spec.parent().unwrap_or(Path::new("."));
    let v = verify_trace(&spec, &trace, Some(base))?;
    write_json(&a.out, &v)?;
    println!("{}", summary(&trace, v.as_ref()));
    Ok(outcome_code(&trace, v.as_ref()))
}

fn cmd_replay(a: &ReplayArgs) -> Result<u8, Fail> {
    let trace: Trace = serde_json::from_str(&fs::read_to_string(&a.trace)?)?;
    let again = replay(&trace)?;
    let text = serde_json::to_string_pretty(&again)?;
    match &a.out {
        Some(p) => fs::write(p, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    if text != serde_json::to_string_pretty(&trace)? {
        return Err(Fail { code: FAILED, kind: "replay", message: "replay differs from the recorded trace".into() });
    }
    Ok(OK)
}

fn cmd_analyze(a: &Analyze, mode: NumericMode) -> Result<u8, Fail> {
    match a {
        Analyze::Cylinders { map, depth, start, max_symbol } => {
            let spec: MapSpec = json_arg(map)?;
            let seq = spec.build(mode)?;
            if *start == 0 {
                return Err(spec_fail("times start at 1"));
            }
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["word", "lo", "hi", "length"])?;
            let mut rows = Vec::new();
            cylinders(&seq, seq.root(*start), *depth, *max_symbol, &mut rows)?;
            for c in rows {
                let (lo, hi) = c.interval()?;
                let word: Vec<String> = c.word.iter().map(|s| s.to_string()).collect();
                w.write_record([word.join("."), lo.to_string(), hi.to_string(), (&hi - &lo).to_string()])?;
            }
            w.flush()?;
            Ok(OK)
        }
        Analyze::Constants { map, gamma, assumption, target, n_cap } => {
            let spec: MapSpec = json_arg(map)?;
            let seq = spec.build(mode)?;
            let gamma: Scalar = gamma.parse().map_err(Error::from)?;
            let target: TargetSpec = json_arg(target)?;
            let c1 = target.build(None)?.lipschitz;
            let value = match assumption {
                Assumption::A => serde_json::to_value(constants_a(&seq, &c1, &gamma, *n_cap)?)?,
                Assumption::B => serde_json::to_value(constants_b(&seq, &c1, &gamma, *n_cap)?)?,
            };
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(OK)
        }
        Analyze::Subsystem { ifs, scales, samples, seed } => {
            let spec: IfsSpec = json_arg(ifs)?;
            let ifs = Ifs1d::from_spec(&spec)?;
            let rows = scales
                .par_iter()
                .map(|r| subsystem_row(&ifs, r, *samples, *seed))
                .collect::<Result<Vec<_>, Fail>>()?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record([
                "r", "lambda", "kept", "delta_sep", "count_bound", "moran", "mass_max_ratio", "mass_violations",
            ])?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
            Ok(OK)
        }
        Analyze::Sweep { spec, gammas, policies, seeds } => cmd_sweep(spec, gammas, policies, *seeds, mode),
    }
}

fn cylinders(seq: &MapSequence, chain: Chain, depth: usize, cap: i64, out: &mut Vec<Chain>) -> Result<(), Fail> {
    if chain.depth() == depth {
        out.push(chain);
        return Ok(());
    }
    let time = chain.start + chain.depth();
    let symbols = seq.at(time).symbols_meeting(&chain.img.0, &chain.img.1)?.list(cap);
    for s in symbols {
        if let Some(next) = chain.extend(seq, s)? {
            cylinders(seq, next, depth, cap, out)?;
        }
    }
    Ok(())
}

fn subsystem_row(ifs: &Ifs1d, r: &str, samples: usize, seed: u64) -> Result<Vec<String>, Fail> {
    let scale: Scalar = r.parse().map_err(Error::from)?;
    let exact = scale.exact().ok_or_else(|| spec_fail("scales must be exact"))?;
    let sub = ifs.subsystem(exact)?;
    let dim = sub.dimension(ifs)?;
    let (ratio, violations) = if samples > 0 && sub.kept.len() > 1 {
        let m = sub.mass_distribution_check(ifs, samples, seed)?;
        (m.max_ratio.to_string(), m.violations.to_string())
    } else {
        (String::new(), String::new())
    };
    Ok(vec![
        scale.to_string(),
        sub.lambda.len().to_string(),
        sub.kept.len().to_string(),
        sub.delta_sep.map(|d| Scalar::from(d).to_string()).unwrap_or_default(),
        dim.count_bound.to_string(),
        dim.moran.to_string(),
        ratio,
        violations,
    ])
}

fn cmd_sweep(path: &Path, gammas: &str, policies: &str, seeds: u64, mode: NumericMode) -> Result<u8, Fail> {
    let template = load_spec(path)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let gammas = gammas
        .split(',')
        .map(|g| g.trim().parse::<Scalar>().map_err(|e| Fail::from(Error::from(e))))
        .collect::<Result<Vec<_>, _>>()?;
    let policies: Vec<&str> = policies.split(',').map(str::trim).collect();
    if let Some(p) = policies.iter().find(|p| !matches!(**p, "random" | "greedy")) {
        return Err(spec_fail(format!("unknown policy {p}")));
    }
    let mut cells = Vec::new();
    for g in &gammas {
        for p in &policies {
            for s in 0..seeds {
                cells.push((g.clone(), *p, s));
            }
        }
    }
    // Each cell runs alone; collect keeps cell order.
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, (g, p, s))| {
            let mut spec = template.clone();
            spec.gamma = g.clone();
            spec.seed = Some(*s);
            spec.bob = match *p {
                "greedy" => BobSpec::Greedy { lambda: g.clone(), seed: *s, horizon: 10, candidates: 16 },
                _ => BobSpec::Random { lambda: g.clone(), seed: *s },
            };
            let out = run_experiment(&spec, mode, Some(&base))?;
            let v = out.verification.as_ref();
            Ok(vec![
                i.to_string(),
                g.to_string(),
                p.to_string(),
                s.to_string(),
                out.trace.rounds.len().to_string(),
                v.map(|v| v.stages_completed.to_string()).unwrap_or_default(),
                v.and_then(|v| v.min_covered.as_ref()).map(|m| m.to_f64().to_string()).unwrap_or_default(),
                v.and_then(|v| v.min_horizon).map(|m| m.to_string()).unwrap_or_default(),
                v.map(|v| v.passed.to_string()).unwrap_or_default(),
            ])
        })
        .collect::<Result<Vec<_>, Fail>>()?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["cell", "gamma", "policy", "seed", "rounds", "stages", "min_covered", "min_horizon", "passed"])?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(OK)
}
