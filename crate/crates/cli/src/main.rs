use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use minqds_cli::config::LambdaEntry;
use minqds_cli::{configured_stages, run_scenario, write_artifacts, ScenarioConfig, ScenarioReport, Stage, DEMO_SCENARIO};

/// Conservativity diagnostics for quantum dynamical semigroups on finite truncations.
///
/// Exit status: 0 on completion, 2 when a hypothesis is refuted (certificate
/// check failed, model rejected, dissipation inequality violated), 1 on
/// structural errors (bad config, i/o, numerical failure).
#[derive(Parser)]
#[command(name = "minqds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML)
    #[arg(long, global = true, env = "MINQDS_CONFIG")]
    config: Option<PathBuf>,
    /// Root seed, overrides `seed`
    #[arg(long, global = true, env = "MINQDS_SEED")]
    seed: Option<u64>,
    /// Output directory, overrides `out` (default minqds-out/<name>)
    #[arg(long, global = true, env = "MINQDS_OUT")]
    out: Option<PathBuf>,
    /// Comma-separated λ values, overrides `resolvent.lambdas`
    #[arg(long, global = true, env = "MINQDS_LAMBDA", value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Tolerance for the Condition A classification and dominance checks
    #[arg(long, global = true, env = "MINQDS_TOL")]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Classify the dissipation defect G + G* + ΣL*L
    CheckA,
    /// Iterate Q_λⁿ(I) for each λ and classify the limit
    Defect,
    /// Neumann resolvent R_λ(I), optionally against a Laplace quadrature
    Resolve,
    /// Run the configured sufficient-condition certificate
    Certify,
    /// Time evolution of the identity and Picard iterates
    Evolve,
    /// Compare with the classical counterpart of the model
    OracleCompare,
    /// Grid refinement study over `sweep.n_points`
    Sweep,
    /// Packaged scalar demo, all stages
    Demo,
    /// Every stage configured in the scenario file
    Run,
}

fn stages(cmd: Command, cfg: &ScenarioConfig) -> Vec<Stage> {
    match cmd {
        Command::CheckA => vec![Stage::CheckA],
        Command::Defect => vec![Stage::CheckA, Stage::Defect],
        Command::Resolve => vec![Stage::CheckA, Stage::Resolve],
        Command::Certify => vec![Stage::CheckA, Stage::Certify],
        Command::Evolve => vec![Stage::CheckA, Stage::Evolve],
        Command::OracleCompare => vec![Stage::CheckA, Stage::Oracle],
        Command::Sweep => vec![Stage::CheckA, Stage::Sweep],
        Command::Demo | Command::Run => configured_stages(cfg),
    }
}

fn summary(r: &ScenarioReport) {
    if let Some(m) = &r.model {
        println!("model      {} (dim {})", m.label, m.dim);
    }
    if let Some(msg) = &r.rejected {
        println!("rejected   {msg}");
    }
    if let Some(a) = &r.condition_a {
        println!("condition  {:?}, |D| = {:.3e}", a.classification, a.defect_norm);
    }
    for d in &r.defects {
        println!("defect     lambda = {:.6} -> {:?}, defect {:.3e} after {} terms", d.lambda, d.verdict, d.defect, d.terms);
    }
    for v in &r.resolvents {
        println!("resolve    lambda = {:.6}: {} terms, |lambda R(I)| = {:.6}", v.lambda, v.terms_used, v.lambda_r_identity_norm);
    }
    if let Some(c) = &r.certificate {
        println!("certify    {} -> {:?}, b = {:?}", c.theorem.name(), c.verdict, c.b_estimate);
    }
    if let Some(e) = &r.evolution {
        println!("evolve     max |T_t(I)| - 1 = {:.3e}", e.max_norm_excess);
    }
    if let Some(o) = &r.oracle {
        println!("oracle     {} agree = {}", o.classical_kind, o.agree);
    }
    for w in &r.sweep {
        println!("sweep      n = {} h = {:.5} b = {:?} |D| = {:.3e}", w.n_points, w.h, w.b_estimate, w.defect_norm);
    }
    for msg in &r.refutations {
        println!("REFUTED    {msg}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut cfg, base) = match (cli.command, &cli.config) {
        (Command::Demo, None) => match ScenarioConfig::parse(DEMO_SCENARIO) {
            Ok(c) => (c, PathBuf::from(".")),
            Err(e) => {
                eprintln!("error: packaged demo: {e}");
                return ExitCode::from(1);
            }
        },
        (_, Some(path)) => match ScenarioConfig::load(path) {
            Ok(c) => (c, path.parent().map(Path::to_path_buf).unwrap_or_default()),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        (_, None) => {
            eprintln!("error: --config PATH (or MINQDS_CONFIG) is required");
            return ExitCode::from(1);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(ls) = &cli.lambda {
        cfg.resolvent.lambdas = ls.iter().map(|&l| LambdaEntry::Value(l)).collect();
    }
    if let Some(t) = cli.tol {
        cfg.tolerances.condition_a = t;
        cfg.tolerances.dominance = t;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(cfg.out.clone().unwrap_or_else(|| format!("minqds-out/{}", cfg.name))));

    let report = match run_scenario(&cfg, &stages(cli.command, &cfg), &base) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    summary(&report);
    match write_artifacts(&report, &out) {
        Ok(files) => println!("wrote      {} files to {}", files.len(), out.display()),
        Err(e) => {
            eprintln!("error: writing artifacts to {}: {e}", out.display());
            return ExitCode::from(1);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
