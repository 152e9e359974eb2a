//! `etrust`: solve, certify and probe extended trust-region problems from
//! JSON files. Reports go to standard output as JSON; failures go to standard
//! error as a JSON object with a nonzero exit code.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use etrust::certify::{self, CertifyOptions, OptimalityCertificate};
use etrust::linalg::DEFAULT_EIG_TOL;
use etrust::oracle::{self, OracleOptions, ProbeOptions};
use etrust::problem::{check_dimension_condition, check_slater};
use etrust::relaxation::{self, RelaxationOptions};
use etrust::robust::{self, RobustOptions, ScenarioOptions};
use etrust::sdp::SolveOptions;
use etrust::{io, Error};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "etrust",
    version,
    about = "Extended trust-region problems: SDP relaxation, certificates, robust models"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalFlags {
    /// Relative tolerance of the conic solver.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Eigenvalue clustering tolerance for the dimension condition.
    #[arg(long = "eig-tol", global = true)]
    eig_tol: Option<f64>,
    /// Stationarity and complementarity tolerance of certificates.
    #[arg(long = "cert-tol", global = true)]
    cert_tol: Option<f64>,
    /// Add wall-clock timings to the report (makes it nondeterministic).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the semidefinite relaxation and extract a certified minimizer.
    Solve { file: PathBuf },
    /// Report the dimension condition and the Slater condition.
    Check { file: PathBuf },
    /// Verify a global-optimality certificate at a given point.
    Certify {
        file: PathBuf,
        /// Comma-separated point.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        /// Comma-separated multipliers, ball first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        lambda: Vec<f64>,
    },
    /// Search for multipliers proving f ≥ 0 (or f + ε ≥ 0) on the feasible set.
    Slemma {
        file: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Robust least squares under matrix uncertainty.
    Rlsp {
        file: PathBuf,
        /// Sampled scenarios used to validate the solution.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Robust second-order-cone program.
    Rsocp { file: PathBuf },
    /// Brute-force global minimum at small dimension.
    Oracle { file: PathBuf },
    /// Probe the joint range of (f, g₀, …, g_m) for convexity.
    Probe {
        file: PathBuf,
        #[arg(long, default_value_t = 1000)]
        midpoints: usize,
        /// Overrides ETR_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Timings {
    parse_ms: f64,
    compute_ms: f64,
}

#[derive(Serialize)]
struct Report {
    command: Vec<String>,
    version: &'static str,
    input: InputDigest,
    seed: u64,
    result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e {
                Error::InvalidInput(_) | Error::Precondition { .. } => 2,
                Error::Infeasible(_) => 3,
                Error::SolverFailure { .. }
                | Error::Unbounded(_)
                | Error::Extraction { .. }
                | Error::EpsilonTooSmall { .. } => 1,
            },
        }
    }

    fn to_json(&self) -> Value {
        let (kind, mut extra) = match self {
            Failure::Usage(_) => ("invalid_input", json!({})),
            Failure::Core(e) => match e {
                Error::InvalidInput(_) => ("invalid_input", json!({})),
                Error::SolverFailure { residual, .. } => ("solver_failure", json!({ "residual": residual })),
                Error::Infeasible(_) => ("infeasible", json!({})),
                Error::Unbounded(_) => ("unbounded", json!({})),
                Error::Extraction {
                    best, max_violation, ..
                } => ("extraction", json!({ "best": best, "max_violation": max_violation })),
                Error::Precondition { max_violation, .. } => {
                    ("precondition", json!({ "max_violation": max_violation }))
                }
                Error::EpsilonTooSmall {
                    requested,
                    smallest_feasible,
                } => (
                    "epsilon_too_small",
                    json!({ "requested": requested, "smallest_feasible": smallest_feasible }),
                ),
            },
        };
        let message = match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        };
        let obj = extra.as_object_mut().expect("object");
        obj.insert("kind".into(), kind.into());
        obj.insert("message".into(), message.into());
        obj.insert("exit_code".into(), self.exit_code().into());
        json!({ "error": extra })
    }
}

struct Settings {
    /// Solver tolerance from the command line, if any.
    tol: Option<f64>,
    sdp: SolveOptions,
    eig_tol: f64,
    certify: CertifyOptions,
}

impl Settings {
    fn from_flags(g: &GlobalFlags) -> Result<Self, Failure> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(t) if !(t.is_finite() && t > 0.0) => {
                Err(Failure::Usage(format!("--{name} must be a positive number")))
            }
            _ => Ok(v),
        };
        let tol = positive("tol", g.tol)?;
        let mut sdp = SolveOptions::default();
        if let Some(t) = tol {
            sdp.tol = t;
        }
        let mut certify = CertifyOptions::default();
        if let Some(t) = positive("cert-tol", g.cert_tol)? {
            certify.kkt_tol = t;
            certify.complementarity_tol = t;
        }
        Ok(Self {
            tol,
            sdp,
            eig_tol: positive("eig-tol", g.eig_tol)?.unwrap_or(DEFAULT_EIG_TOL),
            certify,
        })
    }

    fn relaxation(&self) -> RelaxationOptions {
        RelaxationOptions {
            sdp: self.sdp,
            eig_tol: self.eig_tol,
        }
    }

    fn robust(&self) -> RobustOptions {
        let mut opts = RobustOptions::default();
        if let Some(t) = self.tol {
            opts.sdp.tol = t;
        }
        opts
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports are serializable")
}

fn env_seed() -> Result<u64, Failure> {
    match std::env::var("ETR_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("ETR_SEED must be a nonnegative integer, got {s:?}"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<String, Failure> {
    let settings = Settings::from_flags(&cli.global)?;
    let seed = match &cli.command {
        Command::Probe { seed: Some(s), .. } => *s,
        _ => env_seed()?,
    };
    let file = match &cli.command {
        Command::Solve { file }
        | Command::Check { file }
        | Command::Certify { file, .. }
        | Command::Slemma { file, .. }
        | Command::Rlsp { file, .. }
        | Command::Rsocp { file }
        | Command::Oracle { file }
        | Command::Probe { file, .. } => file.clone(),
    };
    let started = Instant::now();
    let text =
        std::fs::read_to_string(&file).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", file.display())))?;
    let digest = Sha256::digest(text.as_bytes());
    let input = InputDigest {
        path: file.display().to_string(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    };
    let parse_ms = started.elapsed().as_secs_f64() * 1e3;
    let compute = Instant::now();

    let result = match &cli.command {
        Command::Solve { .. } => {
            let p = io::parse_problem(&text)?;
            let rel = relaxation::solve_relaxation_with(&p, &settings.relaxation())?;
            let certificate = if rel.candidate_feasible {
                Some(certify::certify_relaxation_with(&p, &rel, &settings.certify)?)
            } else {
                None
            };
            json!({
                "dimension_condition": to_value(&rel.dimension_condition),
                "slater": to_value(p.check_slater()),
                "relaxation": to_value(&rel),
                "certificate": to_value(certificate),
            })
        }
        Command::Check { .. } => {
            let (f, c) = io::parse_problem_parts(&text)?;
            json!({
                "dimension_condition": to_value(check_dimension_condition(&f, &c, settings.eig_tol)?),
                "slater": to_value(check_slater(&c)),
            })
        }
        Command::Certify { x, lambda, .. } => {
            let p = io::parse_problem(&text)?;
            let cert = OptimalityCertificate::new(lambda.clone())?;
            let x = DVector::from_vec(x.clone());
            let verdict = certify::verify_global_optimality_with(&p, &x, &cert, &settings.certify)?;
            json!({
                "objective": p.objective().eval(&x),
                "verdict": to_value(verdict),
            })
        }
        Command::Slemma { epsilon, .. } => {
            let (f, c) = io::parse_problem_parts(&text)?;
            match epsilon {
                Some(eps) => json!({ "asymptotic": to_value(certify::asymptotic_certificate(&f, &c, *eps)?) }),
                None => json!({ "slemma": to_value(certify::slemma_certificate(&f, &c)?) }),
            }
        }
        Command::Rlsp { samples, .. } => {
            let u = io::parse_rlsp(&text)?;
            let sol = robust::solve_rlsp_with(&u, &settings.robust())?;
            let x = DVector::from_vec(sol.x.clone());
            let worst = robust::worst_case_residual(&x, &u)?;
            let scenarios = robust::scenario_max_residual(
                &x,
                &u,
                &ScenarioOptions {
                    samples: *samples,
                    seed,
                    ..ScenarioOptions::default()
                },
            )?;
            json!({
                "solution": to_value(&sol),
                "worst_case_residual": worst,
                "scenarios": to_value(scenarios),
            })
        }
        Command::Rsocp { .. } => {
            let p = io::parse_rsocp(&text)?;
            let sol = robust::solve_rsocp_with(&p, &settings.robust())?;
            let x = DVector::from_vec(sol.x.clone());
            let checks = p
                .constraints()
                .iter()
                .map(|c| {
                    Ok(json!({
                        "d_squared": c.d * c.d,
                        "worst_case_residual": robust::worst_case_residual(&x, &c.uncertainty)?,
                    }))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            json!({ "solution": to_value(&sol), "constraints": checks })
        }
        Command::Oracle { .. } => {
            let p = io::parse_problem(&text)?;
            json!({ "oracle": to_value(oracle::brute_force_min(&p, &OracleOptions::default())?) })
        }
        Command::Probe { midpoints, .. } => {
            let (f, c) = io::parse_problem_parts(&text)?;
            if c.dim() > 3 {
                return Err(Failure::Usage(format!(
                    "probe needs dimension at most 3, got {}",
                    c.dim()
                )));
            }
            let opts = ProbeOptions {
                num_midpoints: *midpoints,
                seed,
                seed_pairs: vec![],
            };
            let r = oracle::convexity_probe(&f, &c, &opts)?;
            json!({
                "tested": r.tested,
                "violation_count": r.violations.len(),
                "indeterminate": r.indeterminate,
                "violations": to_value(&r.violations),
            })
        }
    };

    let report = Report {
        command: argv,
        version: env!("CARGO_PKG_VERSION"),
        input,
        seed,
        result,
        timings: cli.global.timings.then(|| Timings {
            parse_ms,
            compute_ms: compute.elapsed().as_secs_f64() * 1e3,
        }),
    };
    Ok(serde_json::to_string_pretty(&report).expect("serializable"))
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let f = Failure::Usage(e.to_string().trim().to_string());
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.exit_code());
        }
    };
    match run(cli, argv) {
        Ok(out) => {
            // A closed pipe downstream is not our failure.
            let _ = writeln!(std::io::stdout(), "{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
