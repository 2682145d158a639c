//! Command-line front end.
//!
//! Results go to standard output as one JSON object per line. Exit codes:
//! 0 success, 1 I/O failure, 2 invalid input, 3 cross-check failure under
//! `--strict`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classify::{classify, explain, ClassifyOptions};
use crate::invariants::InvariantSet;
use crate::mat2::{Mat2, Vec2};
use crate::normal_form::{check_normal_form, normalize};
use crate::simulate::{adversarial_greedy, guas_probe, Sample};
use crate::worst_traj::{default_start, parallel_set, worst_trajectory};

pub const SCHEMA: u32 = 1;
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CROSS_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "swstab", version, about = "Stability of planar switched linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide the stability case of each pair and attach a certificate.
    Classify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tol: Tolerances,
        /// Skip the numeric quadratic Lyapunov witness search.
        #[arg(long)]
        no_witness: bool,
        /// Add a human-readable explanation to each record.
        #[arg(long)]
        explain: bool,
    },
    /// Print the invariants of each pair.
    Invariants {
        #[command(flatten)]
        input: Input,
    },
    /// Reduce each pair to normal form.
    NormalForm {
        #[command(flatten)]
        input: Input,
        /// Verify the result and report the first violated property.
        #[arg(long)]
        check: bool,
    },
    /// Build the worst trajectory of an S4 pair.
    WorstTrajectory {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 1)]
        revolutions: usize,
        /// Starting point on the parallel set, e.g. "[1, 0.5]".
        #[arg(long)]
        x0: Option<String>,
        /// Samples per arc in the CSV export.
        #[arg(long, default_value_t = 200)]
        per_arc: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Search for diverging trajectories with random and greedy switching.
    Probe {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, env = "SWSTAB_SEED")]
        seed: Option<u64>,
        /// Export the greedy adversary's trajectory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check JSON-lines output of this tool for consistency.
    Validate {
        /// File to check; standard input when absent.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// First matrix as a row-major JSON array, e.g. "[[-1,0],[0,-2]]".
    #[arg(long, requires = "a2", conflicts_with = "file")]
    a1: Option<String>,
    #[arg(long, requires = "a1")]
    a2: Option<String>,
    /// JSON job file: {"pairs": [{"A1": …, "A2": …}], "options": {…}}.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Stop at the first failing pair and escalate cross-check failures.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct Tolerances {
    #[arg(long)]
    s3_band: Option<f64>,
    #[arg(long)]
    r_band: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct RawPair {
    #[serde(rename = "A1")]
    a1: [[f64; 2]; 2],
    #[serde(rename = "A2")]
    a2: [[f64; 2]; 2],
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default)]
struct FileOptions {
    #[serde(alias = "s3-band")]
    s3_band: Option<f64>,
    #[serde(alias = "r-band")]
    r_band: Option<f64>,
    #[serde(alias = "cross-check-tol")]
    cross_check_tol: Option<f64>,
    seed: Option<u64>,
    trials: Option<usize>,
    horizon: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct JobFile {
    pairs: Vec<RawPair>,
    #[serde(default)]
    options: FileOptions,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Pair {
    #[serde(rename = "A1")]
    a1: Mat2,
    #[serde(rename = "A2")]
    a2: Mat2,
}

struct Job {
    pairs: Vec<std::result::Result<Pair, String>>,
    options: FileOptions,
    strict: bool,
}

fn parse_matrix(text: &str, name: &str) -> std::result::Result<Mat2, String> {
    let rows: [[f64; 2]; 2] =
        serde_json::from_str(text).map_err(|e| format!("{name}: expected a 2×2 array: {e}"))?;
    Mat2::from_rows(rows).map_err(|e| format!("{name}: {e}"))
}

fn load(input: &Input) -> std::result::Result<Job, String> {
    if let (Some(a1), Some(a2)) = (&input.a1, &input.a2) {
        let pair = parse_matrix(a1, "A1")
            .and_then(|a1| parse_matrix(a2, "A2").map(|a2| Pair { a1, a2 }));
        return Ok(Job {
            pairs: vec![pair],
            options: FileOptions::default(),
            strict: input.strict,
        });
    }
    let Some(path) = &input.file else {
        return Err("give either --a1 and --a2, or --file".into());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let job: JobFile =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let pairs = job
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a1 = Mat2::from_rows(p.a1).map_err(|e| format!("pair {i}, A1: {e}"))?;
            let a2 = Mat2::from_rows(p.a2).map_err(|e| format!("pair {i}, A2: {e}"))?;
            Ok(Pair { a1, a2 })
        })
        .collect();
    Ok(Job {
        pairs,
        options: job.options,
        strict: input.strict,
    })
}

enum Outcome {
    Record(Value),
    Invalid(String),
    CrossCheck(Value),
}

fn error_record(index: usize, msg: &str) -> Value {
    json!({ "schema": SCHEMA, "index": index, "error": msg })
}

fn record(pair: &Pair, body: Value) -> Value {
    let mut v = json!({ "schema": SCHEMA, "A1": pair.a1, "A2": pair.a2 });
    if let (Value::Object(out), Value::Object(extra)) = (&mut v, body) {
        out.extend(extra);
    }
    v
}

/// Runs `f` over every pair in parallel and emits records in input order.
fn batch<F>(job: &Job, out: &mut dyn Write, err: &mut dyn Write, f: F) -> i32
where
    F: Fn(usize, &Pair) -> Outcome + Sync,
{
    let outcomes: Vec<Outcome> = job
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| match p {
            Ok(pair) => f(i, pair),
            Err(msg) => Outcome::Invalid(msg.clone()),
        })
        .collect();
    let mut code = EXIT_OK;
    for (i, o) in outcomes.into_iter().enumerate() {
        let line = match o {
            Outcome::Record(v) => v,
            Outcome::CrossCheck(v) => {
                if job.strict {
                    code = code.max(EXIT_CROSS_CHECK);
                }
                v
            }
            Outcome::Invalid(msg) => {
                let _ = writeln!(err, "pair {i}: {msg}");
                code = code.max(EXIT_INPUT);
                error_record(i, &msg)
            }
        };
        if writeln!(out, "{line}").is_err() {
            return EXIT_IO;
        }
        if job.strict && code != EXIT_OK {
            break;
        }
    }
    code
}

fn write_csv(path: &Path, samples: &[Sample]) -> std::io::Result<()> {
    let mut s = String::from("t,x1,x2,u,norm\n");
    for p in samples {
        let n = p.x[0].hypot(p.x[1]);
        s.push_str(&format!("{},{},{},{},{}\n", p.t, p.x[0], p.x[1], p.u, n));
    }
    fs::write(path, s)
}

fn classify_options(job: &Job, tol: &Tolerances, no_witness: bool) -> ClassifyOptions {
    let d = ClassifyOptions::default();
    ClassifyOptions {
        s3_band: tol.s3_band.or(job.options.s3_band).unwrap_or(d.s3_band),
        r_band: tol.r_band.or(job.options.r_band).unwrap_or(d.r_band),
        cross_check_tol: job.options.cross_check_tol.unwrap_or(d.cross_check_tol),
        witness: !no_witness,
        boundary_warn: d.boundary_warn,
    }
}

fn classify_record(pair: &Pair, opts: &ClassifyOptions, with_explain: bool) -> Outcome {
    match classify(&pair.a1, &pair.a2, opts) {
        Ok(v) => {
            let mut body = json!({
                "case": v.case,
                "invariants": v.invariants,
                "certificate": v.certificate,
                "flags": v.flags,
            });
            if with_explain {
                body["explanation"] = json!(explain(&v).to_string());
            }
            let rec = record(pair, body);
            if v.has_cross_check_failure() {
                Outcome::CrossCheck(rec)
            } else {
                Outcome::Record(rec)
            }
        }
        Err(e) => Outcome::Invalid(e.to_string()),
    }
}

fn parse_point(text: &str) -> std::result::Result<Vec2, String> {
    let v: [f64; 2] =
        serde_json::from_str(text).map_err(|e| format!("x0: expected [x, y]: {e}"))?;
    if v.iter().all(|x| x.is_finite()) && v != [0.0, 0.0] {
        Ok(v)
    } else {
        Err("x0 must be finite and nonzero".into())
    }
}

/// Appends `-<index>` to the file stem when a batch has several pairs.
fn indexed_path(path: &Path, index: usize, count: usize) -> PathBuf {
    if count <= 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{index}.{ext}"),
        None => format!("{stem}-{index}"),
    };
    path.with_file_name(name)
}

fn validate(file: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match file {
        Some(p) => fs::read_to_string(p),
        None => std::io::read_to_string(std::io::stdin()),
    };
    let text = match text {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_IO;
        }
    };
    let mut code = EXIT_OK;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let problems = validate_line(line);
        if !problems.is_empty() {
            code = EXIT_INPUT;
        }
        let rec = json!({
            "schema": SCHEMA,
            "line": i + 1,
            "valid": problems.is_empty(),
            "problems": problems,
        });
        if writeln!(out, "{rec}").is_err() {
            return EXIT_IO;
        }
    }
    code
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn validate_line(line: &str) -> Vec<String> {
    let v: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return vec![format!("not JSON: {e}")],
    };
    let mut problems = Vec::new();
    if v.get("schema").and_then(Value::as_u64) != Some(SCHEMA as u64) {
        problems.push(format!("schema must be {SCHEMA}"));
    }
    if v.get("error").is_some() {
        problems.push("record carries an error".into());
        return problems;
    }
    let pair: std::result::Result<RawPair, _> = serde_json::from_value(v.clone());
    let pair = match pair.map_err(|e| e.to_string()).and_then(|p| {
        Ok(Pair {
            a1: Mat2::from_rows(p.a1).map_err(|e| e.to_string())?,
            a2: Mat2::from_rows(p.a2).map_err(|e| e.to_string())?,
        })
    }) {
        Ok(p) => p,
        Err(e) => {
            problems.push(format!("A1/A2: {e}"));
            return problems;
        }
    };
    if let Some(stored) = v.get("invariants") {
        match (
            serde_json::from_value::<InvariantSet>(stored.clone()),
            InvariantSet::compute(&pair.a1, &pair.a2),
        ) {
            (Ok(s), Ok(f)) => {
                let fields = [
                    ("gamma", s.gamma, f.gamma),
                    ("delta1", s.delta1, f.delta1),
                    ("delta2", s.delta2, f.delta2),
                    ("tau1", s.tau1, f.tau1),
                    ("tau2", s.tau2, f.tau2),
                    ("kappa", s.kappa, f.kappa),
                    ("big_delta", s.big_delta, f.big_delta),
                    ("det1", s.det1, f.det1),
                    ("det2", s.det2, f.det2),
                    ("tr12", s.tr12, f.tr12),
                ];
                for (name, a, b) in fields {
                    if !close(a, b) {
                        problems.push(format!("{name}: stored {a}, recomputed {b}"));
                    }
                }
            }
            (Err(e), _) => problems.push(format!("invariants: {e}")),
            (_, Err(e)) => problems.push(format!("invariants: {e}")),
        }
    }
    if let Some(case) = v.get("case").and_then(Value::as_str) {
        let opts = ClassifyOptions {
            witness: false,
            ..ClassifyOptions::default()
        };
        match classify(&pair.a1, &pair.a2, &opts) {
            Ok(verdict) if verdict.case.as_str() == case => {}
            Ok(verdict) => problems.push(format!("case: stored {case}, recomputed {}", verdict.case)),
            Err(e) => problems.push(format!("case: {e}")),
        }
    }
    problems
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    if let Command::Validate { file } = &cli.command {
        return validate(file.as_deref(), out, err);
    }
    let input = match &cli.command {
        Command::Classify { input, .. }
        | Command::Invariants { input }
        | Command::NormalForm { input, .. }
        | Command::WorstTrajectory { input, .. }
        | Command::Probe { input, .. } => input,
        Command::Validate { .. } => unreachable!("handled above"),
    };
    let job = match load(input) {
        Ok(j) => j,
        Err(msg) => {
            let _ = writeln!(err, "{msg}");
            return EXIT_INPUT;
        }
    };
    match &cli.command {
        Command::Classify {
            tol,
            no_witness,
            explain,
            ..
        } => {
            let opts = classify_options(&job, tol, *no_witness);
            batch(&job, out, err, |_, p| classify_record(p, &opts, *explain))
        }
        Command::Invariants { .. } => batch(&job, out, err, |_, p| {
            match InvariantSet::compute(&p.a1, &p.a2) {
                Ok(inv) => {
                    let inv = if inv.s4_holds() {
                        inv.clone().with_return_ratio().unwrap_or(inv)
                    } else {
                        inv
                    };
                    Outcome::Record(record(p, json!({ "invariants": inv })))
                }
                Err(e) => Outcome::Invalid(e.to_string()),
            }
        }),
        Command::NormalForm { check, .. } => batch(&job, out, err, |_, p| {
            match normalize(&p.a1, &p.a2) {
                Ok(nf) => {
                    let mut body = json!({ "normal_form": nf });
                    if *check {
                        body["check"] = match check_normal_form(&nf, &p.a1, &p.a2, 1e-8) {
                            Ok(()) => json!("ok"),
                            Err(what) => json!(what),
                        };
                    }
                    Outcome::Record(record(p, body))
                }
                Err(e) => Outcome::Invalid(e.to_string()),
            }
        }),
        Command::WorstTrajectory {
            revolutions,
            x0,
            per_arc,
            csv,
            ..
        } => {
            let x0 = match x0.as_deref().map(parse_point).transpose() {
                Ok(x) => x,
                Err(msg) => {
                    let _ = writeln!(err, "{msg}");
                    return EXIT_INPUT;
                }
            };
            let count = job.pairs.len();
            let io_failed = std::sync::atomic::AtomicBool::new(false);
            let code = batch(&job, out, err, |i, p| {
                let traj = parallel_set(&p.a1, &p.a2).and_then(|ps| {
                    worst_trajectory(&p.a1, &p.a2, x0.unwrap_or_else(|| default_start(&ps)), *revolutions)
                });
                match traj {
                    Ok(w) => {
                        if let Some(path) = csv {
                            let samples: Vec<Sample> = w
                                .samples(&p.a1, &p.a2, *per_arc)
                                .into_iter()
                                .map(|(t, x, u)| Sample { t, x, u })
                                .collect();
                            if write_csv(&indexed_path(path, i, count), &samples).is_err() {
                                io_failed.store(true, std::sync::atomic::Ordering::Relaxed);
                            }
                        }
                        Outcome::Record(record(p, json!({ "worst_trajectory": w })))
                    }
                    Err(e) => Outcome::Invalid(e.to_string()),
                }
            });
            if io_failed.into_inner() {
                let _ = writeln!(err, "could not write CSV output");
                return EXIT_IO;
            }
            code
        }
        Command::Probe {
            trials,
            horizon,
            seed,
            csv,
            ..
        } => {
            let trials = trials.or(job.options.trials).unwrap_or(256);
            let horizon = horizon.or(job.options.horizon).unwrap_or(50.0);
            let seed = seed.or(job.options.seed).unwrap_or(0);
            let count = job.pairs.len();
            let io_failed = std::sync::atomic::AtomicBool::new(false);
            let code = batch(&job, out, err, |i, p| {
                match guas_probe(&p.a1, &p.a2, trials, horizon, seed) {
                    Ok(rep) => {
                        if let Some(path) = csv {
                            let dwell = 1e-3 / p.a1.norm().max(p.a2.norm());
                            let g = adversarial_greedy(&p.a1, &p.a2, [1.0, 0.0], dwell, horizon);
                            if write_csv(&indexed_path(path, i, count), &g.samples).is_err() {
                                io_failed.store(true, std::sync::atomic::Ordering::Relaxed);
                            }
                        }
                        Outcome::Record(record(p, json!({ "probe": rep })))
                    }
                    Err(e) => Outcome::Invalid(e.to_string()),
                }
            });
            if io_failed.into_inner() {
                let _ = writeln!(err, "could not write CSV output");
                return EXIT_IO;
            }
            code
        }
        Command::Validate { .. } => unreachable!("handled above"),
    }
}
