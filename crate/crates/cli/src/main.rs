//! Command line for the impulse control solver.
//!
//! Every command reads one JSON run configuration.  Artifacts land in the
//! directory given by `--out`, the `IMPULSE_OUT_DIR` variable, or the working
//! directory, and are named after the config file stem.  Exit codes: 0 on
//! success, 2 on configuration errors, 3 on numeric failures, 4 when an
//! artifact belongs to a different model than the config.

mod config;

use clap::{Parser, Subcommand};
use config::{certificate_from_section, CertificateSection, ConfigError, RunConfig};
use impulse_core::numerics::{interpolate, ValueField};
use impulse_core::policy::{extract_policy, Policy};
use impulse_core::sim::{evaluate_mc, sim_path, SimOpts, Trajectory};
use impulse_core::solver::{
    backward_induction, check_certificate, qvi_residuals, CertificateReport, QviReport,
};
use impulse_core::oracle::DiscreteInstance;
use impulse_core::{ModelSpec, State};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "impulse", version, about = "Impulse control under an unknown reaction parameter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $IMPULSE_OUT_DIR, then the working directory)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulation commands
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the configured time refinement level
    #[arg(long, global = true)]
    level: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dynamic program; write the value field and a report
    Solve,
    /// Solve and write the argmax policy table
    Policy {
        /// Suboptimality budget recorded in the policy
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Draw trajectories under a stored policy and write them as CSV
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        /// Number of paths (default: 10)
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Monte Carlo estimate of a stored policy's mean gain
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        /// Value field used as the performance reference
        #[arg(long)]
        field: Option<PathBuf>,
        /// Number of paths (default: config `evaluate.paths`)
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Residual and certificate checks
    Check {
        /// Stored value field to test against the variational system
        #[arg(long)]
        field: Option<PathBuf>,
        /// Candidate comparison function (JSON, same shape as the config
        /// `certificate` section)
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Residual violation tolerance (default: config `solver.qvi_tolerance`)
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Compare the solver against exact enumeration (frozen models only)
    OracleCompare {
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
}

enum CliError {
    Config(String),
    Numeric(String),
    Hash(String),
}

impl CliError {
    fn exit(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Hash(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Hash(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit())
        }
    }
}

struct Workspace {
    cfg: RunConfig,
    out_dir: PathBuf,
    stem: String,
    seed: u64,
    level: Option<u32>,
}

impl Workspace {
    fn artifact(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}.{suffix}", self.stem))
    }

    fn spec(&self) -> Result<ModelSpec, CliError> {
        Ok(self.cfg.build_model()?)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // ignored if a pool already exists; results never depend on it
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(config_path)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("IMPULSE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Numeric(format!("cannot create {}: {e}", out_dir.display())))?;
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let ws = Workspace {
        cfg,
        out_dir,
        stem,
        seed: cli.seed.unwrap_or(0),
        level: cli.level,
    };
    match cli.command {
        Command::Solve => cmd_solve(&ws),
        Command::Policy { epsilon } => cmd_policy(&ws, epsilon),
        Command::Simulate { policy, paths } => cmd_simulate(&ws, &policy, paths),
        Command::Evaluate {
            policy,
            field,
            paths,
        } => cmd_evaluate(&ws, &policy, field.as_deref(), paths),
        Command::Check {
            field,
            certificate,
            tolerance,
        } => cmd_check(&ws, field.as_deref(), certificate.as_deref(), tolerance),
        Command::OracleCompare { tolerance } => cmd_oracle_compare(&ws, tolerance),
    }
}

fn digest_tag(digest: &str) -> [u8; 16] {
    let mut tag = [0u8; 16];
    let bytes = digest.as_bytes();
    let n = bytes.len().min(16);
    tag[..n].copy_from_slice(&bytes[..n]);
    tag
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(numeric)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display())))
}

fn solve_field(
    ws: &Workspace,
    spec: &ModelSpec,
) -> Result<(impulse_core::GridSpec, impulse_core::SolveReport, f64), CliError> {
    let grids = ws.cfg.build_grids(spec, ws.level)?;
    let opts = ws.cfg.solver_opts();
    let t0 = Instant::now();
    let report = backward_induction(spec, &grids, &opts).map_err(numeric)?;
    let wall = t0.elapsed().as_secs_f64();
    Ok((grids, report, wall))
}

fn start_value(
    ws: &Workspace,
    spec: &ModelSpec,
    field: &ValueField,
) -> Result<f64, CliError> {
    let prior = ws.cfg.prior()?;
    interpolate(
        field,
        spec,
        &State::new(0.0, ws.cfg.initial.x0.clone()),
        &prior,
        ws.cfg.solver.clamp,
    )
    .map_err(numeric)
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    model_hash: &'a str,
    level: u32,
    nodes: (usize, usize, usize),
    start_value: f64,
    /// Largest per-slice update during the backward sweep.
    slice_max_update: &'a [f64],
    residuals: &'a QviReport,
}

fn cmd_solve(ws: &Workspace) -> Result<(), CliError> {
    let spec = ws.spec()?;
    let (grids, report, wall) = solve_field(ws, &spec)?;
    let opts = ws.cfg.solver_opts();
    let qvi = qvi_residuals(&report.field, &spec, &opts, ws.cfg.solver.qvi_tolerance)
        .map_err(numeric)?;
    let v0 = start_value(ws, &spec, &report.field)?;
    let digest = spec.digest();

    let field_path = ws.artifact("field.bin");
    let mut f = BufWriter::new(File::create(&field_path).map_err(numeric)?);
    report
        .field
        .write_binary(&mut f, &digest_tag(&digest))
        .map_err(numeric)?;
    f.flush().map_err(numeric)?;

    let report_path = ws.artifact("solve.json");
    write_json(
        &report_path,
        &SolveArtifact {
            model_hash: &digest,
            level: grids.level,
            nodes: grids.node_counts(),
            start_value: v0,
            slice_max_update: &report.slice_max_update,
            residuals: &qvi,
        },
    )?;

    println!("start value: {v0:.12e}");
    println!("field: {}", field_path.display());
    println!("report: {}", report_path.display());
    eprintln!("solved in {wall:.2}s");
    Ok(())
}

#[derive(Serialize)]
struct PolicyArtifact<'a> {
    model_hash: &'a str,
    epsilon: f64,
    tie_break: &'a str,
    nodes: usize,
    wait_nodes: usize,
    action_counts: Vec<usize>,
    start_value: f64,
}

fn cmd_policy(ws: &Workspace, epsilon: Option<f64>) -> Result<(), CliError> {
    let spec = ws.spec()?;
    let (_, report, wall) = solve_field(ws, &spec)?;
    let epsilon = epsilon.unwrap_or(ws.cfg.evaluate.epsilon);
    let policy = extract_policy(&report, &spec, epsilon).map_err(numeric)?;
    let v0 = start_value(ws, &spec, &report.field)?;

    let mut action_counts = vec![0usize; spec.actions.len()];
    let mut wait_nodes = 0usize;
    for &c in &report.choices {
        if c == 0 {
            wait_nodes += 1;
        } else {
            action_counts[c as usize - 1] += 1;
        }
    }

    let policy_path = ws.artifact("policy.bin");
    let mut f = BufWriter::new(File::create(&policy_path).map_err(numeric)?);
    policy.write_binary(&mut f).map_err(numeric)?;
    f.flush().map_err(numeric)?;

    let digest = spec.digest();
    let report_path = ws.artifact("policy.json");
    write_json(
        &report_path,
        &PolicyArtifact {
            model_hash: &digest,
            epsilon,
            tie_break: policy.tie_break(),
            nodes: report.choices.len(),
            wait_nodes,
            action_counts,
            start_value: v0,
        },
    )?;

    println!("start value: {v0:.12e}");
    println!("policy: {}", policy_path.display());
    println!("report: {}", report_path.display());
    eprintln!("solved in {wall:.2}s");
    Ok(())
}

fn load_policy(path: &Path, spec: &ModelSpec) -> Result<Policy, CliError> {
    let mut r = BufReader::new(
        File::open(path)
            .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?,
    );
    let policy = Policy::read_binary(&mut r)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if policy.model_hash() != spec.digest() {
        return Err(CliError::Hash(format!(
            "policy {} was extracted for model {}, config builds {}",
            path.display(),
            policy.model_hash(),
            spec.digest()
        )));
    }
    Ok(policy)
}

fn load_field(path: &Path, spec: &ModelSpec) -> Result<ValueField, CliError> {
    let mut r = BufReader::new(
        File::open(path)
            .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?,
    );
    let (field, tag) = ValueField::read_binary(&mut r)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if tag != digest_tag(&spec.digest()) {
        return Err(CliError::Hash(format!(
            "field {} belongs to a different model than the config",
            path.display()
        )));
    }
    Ok(field)
}

fn cmd_simulate(ws: &Workspace, policy_path: &Path, paths: Option<usize>) -> Result<(), CliError> {
    let spec = ws.spec()?;
    let policy = load_policy(policy_path, &spec)?;
    let prior = ws.cfg.prior()?;
    let paths = paths.unwrap_or(10);
    if paths == 0 {
        return Err(CliError::Config("--paths must be at least 1".into()));
    }
    let sim_opts = SimOpts {
        euler_substeps: ws.cfg.solver.euler_substeps,
    };
    let k = spec.param_count();

    let csv_path = ws.artifact("paths.csv");
    let mut w = BufWriter::new(File::create(&csv_path).map_err(numeric)?);
    writeln!(w, "{}", Trajectory::csv_header(spec.dimension, k)).map_err(numeric)?;
    for p in 0..paths {
        let traj = sim_path(
            &spec,
            &policy,
            &ws.cfg.initial.x0,
            &prior,
            ws.seed,
            p as u64,
            ws.cfg.evaluate.true_param,
            &sim_opts,
        )
        .map_err(numeric)?;
        traj.append_csv(&mut w, p as u64, k).map_err(numeric)?;
    }
    w.flush().map_err(numeric)?;

    println!("paths: {paths}");
    println!("csv: {}", csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluateArtifact<'a> {
    model_hash: &'a str,
    mean: f64,
    std_error: f64,
    paths: usize,
    seed: u64,
    epsilon: f64,
    bias_budget: f64,
    /// Solved value at the start node when a field was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    band_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    band_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_band: Option<bool>,
}

fn cmd_evaluate(
    ws: &Workspace,
    policy_path: &Path,
    field_path: Option<&Path>,
    paths: Option<usize>,
) -> Result<(), CliError> {
    let spec = ws.spec()?;
    let policy = load_policy(policy_path, &spec)?;
    let prior = ws.cfg.prior()?;
    let paths = paths.unwrap_or(ws.cfg.evaluate.paths);
    if paths == 0 {
        return Err(CliError::Config("--paths must be at least 1".into()));
    }
    let sim_opts = SimOpts {
        euler_substeps: ws.cfg.solver.euler_substeps,
    };
    let est = evaluate_mc(
        &spec,
        &policy,
        &ws.cfg.initial.x0,
        &prior,
        ws.seed,
        paths,
        ws.cfg.evaluate.true_param,
        &sim_opts,
    )
    .map_err(numeric)?;

    let epsilon = policy.epsilon().max(ws.cfg.evaluate.epsilon);
    let bias = ws.cfg.evaluate.bias_budget;
    let mut reference_value = None;
    let mut band_low = None;
    let mut band_high = None;
    let mut within_band = None;
    if let Some(fp) = field_path {
        let field = load_field(fp, &spec)?;
        let v0 = start_value(ws, &spec, &field)?;
        let lo = v0 - epsilon - 3.0 * est.std_error;
        let hi = v0 + bias + 3.0 * est.std_error;
        reference_value = Some(v0);
        band_low = Some(lo);
        band_high = Some(hi);
        within_band = Some(est.mean >= lo && est.mean <= hi);
    }

    let digest = spec.digest();
    let report_path = ws.artifact("evaluate.json");
    write_json(
        &report_path,
        &EvaluateArtifact {
            model_hash: &digest,
            mean: est.mean,
            std_error: est.std_error,
            paths: est.paths,
            seed: est.seed,
            epsilon,
            bias_budget: bias,
            reference_value,
            band_low,
            band_high,
            within_band,
        },
    )?;

    println!("mean gain: {:.12e}", est.mean);
    println!("std error: {:.6e} over {} paths", est.std_error, est.paths);
    if let (Some(lo), Some(hi), Some(ok)) = (band_low, band_high, within_band) {
        println!(
            "band [{lo:.6e}, {hi:.6e}]: {}",
            if ok { "inside" } else { "OUTSIDE" }
        );
    }
    println!("report: {}", report_path.display());
    Ok(())
}

#[derive(Serialize)]
struct CheckArtifact<'a> {
    model_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    residuals: Option<&'a QviReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<&'a CertificateReport>,
}

fn cmd_check(
    ws: &Workspace,
    field_path: Option<&Path>,
    certificate_path: Option<&Path>,
    tolerance: Option<f64>,
) -> Result<(), CliError> {
    let spec = ws.spec()?;
    let grids = ws.cfg.build_grids(&spec, ws.level)?;
    let opts = ws.cfg.solver_opts();

    let qvi = match field_path {
        Some(fp) => {
            let field = load_field(fp, &spec)?;
            let tol = tolerance.unwrap_or(ws.cfg.solver.qvi_tolerance);
            Some(qvi_residuals(&field, &spec, &opts, tol).map_err(numeric)?)
        }
        None => None,
    };

    let cert_report = {
        let section: Option<CertificateSection> = match certificate_path {
            Some(cp) => {
                let text = std::fs::read_to_string(cp)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cp.display())))?;
                Some(serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("malformed certificate {}: {e}", cp.display()))
                })?)
            }
            None => ws.cfg.certificate.clone(),
        };
        match section {
            Some(s) => {
                let cert = certificate_from_section(&s)?;
                Some(check_certificate(&cert, &spec, &grids, &opts).map_err(numeric)?)
            }
            None => None,
        }
    };

    if qvi.is_none() && cert_report.is_none() {
        return Err(CliError::Config(
            "check needs --field, --certificate, or a certificate section in the config".into(),
        ));
    }

    if let Some(q) = &qvi {
        println!(
            "residuals: min {:.3e}, max {:.3e}, violations {} of {} (tolerance {:.1e})",
            q.all.min, q.all.max, q.all.violations, q.all.nodes, q.tolerance
        );
        println!(
            "obstacle side: min {:.3e} over {} nodes",
            q.obstacle.min, q.obstacle.nodes
        );
    }
    if let Some(c) = &cert_report {
        for cond in &c.conditions {
            let status = match cond.passed {
                None => "not checked".to_string(),
                Some(true) => format!("PASS margin {:+.6e}", cond.margin.unwrap_or(f64::NAN)),
                Some(false) => format!("FAIL margin {:+.6e}", cond.margin.unwrap_or(f64::NAN)),
            };
            println!("{}: {status}", cond.name);
        }
        println!("certificate accepted: {}", c.accepted);
    }

    let digest = spec.digest();
    let report_path = ws.artifact("check.json");
    write_json(
        &report_path,
        &CheckArtifact {
            model_hash: &digest,
            residuals: qvi.as_ref(),
            certificate: cert_report.as_ref(),
        },
    )?;
    println!("report: {}", report_path.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleArtifact<'a> {
    model_hash: &'a str,
    nodes_compared: usize,
    max_abs_diff: f64,
    tolerance: f64,
    pass: bool,
}

fn cmd_oracle_compare(ws: &Workspace, tolerance: f64) -> Result<(), CliError> {
    let spec = ws.spec()?;
    let grids = ws.cfg.build_grids(&spec, ws.level)?;
    let opts = ws.cfg.solver_opts();
    let (inst, _) = DiscreteInstance::from_model(
        &spec,
        grids.level,
        &ws.cfg.initial.x0,
        opts.kernel_resolution,
    )
    .map_err(|e| CliError::Config(format!("model not enumerable: {e}")))?;
    let report = backward_induction(&spec, &grids, &opts).map_err(numeric)?;
    let prior = ws.cfg.prior()?;

    let beliefs = inst.reachable_beliefs(&prior);
    let mut worst = 0.0f64;
    let mut nodes = 0usize;
    for &(t, s) in &inst.decision_nodes {
        let state = State::new(inst.times[t], inst.states[s].clone());
        for m in &beliefs {
            let exact = inst.exact_value(t, s, m).map_err(numeric)?;
            let solved = interpolate(&report.field, &spec, &state, m, ws.cfg.solver.clamp)
                .map_err(numeric)?;
            worst = worst.max((solved - exact).abs());
            nodes += 1;
        }
    }
    let pass = worst <= tolerance;

    let digest = spec.digest();
    let report_path = ws.artifact("oracle.json");
    write_json(
        &report_path,
        &OracleArtifact {
            model_hash: &digest,
            nodes_compared: nodes,
            max_abs_diff: worst,
            tolerance,
            pass,
        },
    )?;

    println!(
        "enumeration vs solver: max |diff| {worst:.3e} over {nodes} nodes: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("report: {}", report_path.display());
    if pass {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "solver diverges from enumeration by {worst:.3e} (tolerance {tolerance:.1e})"
        )))
    }
}
