//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
//! Diagnostics go to stderr; stdout only carries progress lines.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::mdp::PolicyIterationOptions;
use crate::provisioner::{
    build_state_index, compare_policies, greedy_policy, mdp_policy_with, ProvisioningSpec,
    SolvedProvisioning,
};
use crate::results::{real, write_results, RunMetadata};
use crate::scenario::{load_scenario, spec_hash};
use crate::sim::{generate_trace, simulate, summarize, GENERATOR_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "vcloud-mdp",
    version,
    about = "MDP vs. greedy VM provisioning on a static RSU network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the scenario MDP and write the optimal policy and values.
    Solve(CommonArgs),
    /// Simulate one or both policies over seeded demand traces.
    Simulate(CommonArgs),
    /// Solve, simulate both policies and summarize the comparison.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyChoice {
    Mdp,
    Greedy,
    Both,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyChoice::Both)]
    policy: PolicyChoice,
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    /// Comma-separated trace seeds.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Demand level of the first epoch (defaults to the first level).
    #[arg(long)]
    initial_level: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Discount factor overriding the scenario's.
    #[arg(long)]
    gamma: Option<f64>,
    /// Residual bound for policy evaluation.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Validation(m) | Self::Io(m) => m,
        }
    }
}

fn invalid(e: impl ToString) -> Failure {
    Failure::Validation(e.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.code()
        }
    }
}

struct Prepared {
    spec: ProvisioningSpec,
    initial_level: String,
}

fn prepare(args: &CommonArgs) -> Result<Prepared, Failure> {
    let spec = load_scenario(&args.scenario).map_err(|e| {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            invalid(format!("{}: {e}", args.scenario.display()))
        }
    })?;
    let spec = match args.gamma {
        Some(gamma) => spec
            .with_discount(gamma)
            .map_err(|e| invalid(format!("--gamma: {e}")))?,
        None => spec,
    };
    if !(args.tolerance > 0.0 && args.tolerance.is_finite()) {
        return Err(invalid(format!(
            "--tolerance must be positive, got {}",
            args.tolerance
        )));
    }
    if args.epochs == 0 {
        return Err(invalid("--epochs must be at least 1"));
    }
    if args.seeds.is_empty() {
        return Err(invalid("--seeds must name at least one seed"));
    }
    let model = spec.demand_model();
    let initial_level = match &args.initial_level {
        Some(id) if model.level_index(id).is_none() => {
            return Err(invalid(format!(
                "--initial-level: unknown demand level {id:?}"
            )));
        }
        Some(id) => id.clone(),
        None => model.levels()[0].id.clone(),
    };
    for warning in spec.warnings() {
        eprintln!("warning: {warning}");
    }
    Ok(Prepared {
        spec,
        initial_level,
    })
}

fn solve(spec: &ProvisioningSpec, tolerance: f64) -> Result<SolvedProvisioning, Failure> {
    let options = PolicyIterationOptions {
        evaluation_tolerance: tolerance,
        ..PolicyIterationOptions::default()
    };
    let solved = mdp_policy_with(spec, &options).map_err(invalid)?;
    println!(
        "solved {} states in {} policy-iteration rounds",
        solved.index.len(),
        solved.iterations
    );
    Ok(solved)
}

fn write_solution(
    spec: &ProvisioningSpec,
    solved: &SolvedProvisioning,
    tolerance: f64,
    out: &Path,
) -> Result<(), Failure> {
    let topology = spec.topology();
    let model = spec.demand_model();
    let units = |c: usize| -> serde_json::Map<String, serde_json::Value> {
        solved
            .index
            .configuration(c)
            .entries(topology)
            .map(|(id, u)| (id.to_owned(), json!(u)))
            .collect()
    };
    let states: Vec<_> = (0..solved.index.len())
        .map(|s| {
            let (config, level) = solved.index.pair(s);
            let target = solved.policy.action(s);
            json!({
                "state": s,
                "config_id": config,
                "config": units(config),
                "demand_level": model.levels()[level].id,
                "action_config_id": target,
                "action_config": units(target),
                "value": real(solved.values.value(s)),
            })
        })
        .collect();
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "spec_hash": spec_hash(spec),
        "discount": real(spec.discount()),
        "tolerance": real(tolerance),
        "iterations": solved.iterations,
        "states": states,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("solution serializes");
    text.push('\n');
    let path = out.join("solution.json");
    fs::create_dir_all(out)
        .and_then(|_| fs::write(&path, text))
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    let (args, comparing) = match command {
        Command::Solve(args) => {
            let prepared = prepare(&args)?;
            let solved = solve(&prepared.spec, args.tolerance)?;
            return write_solution(&prepared.spec, &solved, args.tolerance, &args.out);
        }
        Command::Simulate(args) => (args, false),
        Command::Compare(args) => (args, true),
    };

    let Prepared {
        spec,
        initial_level,
    } = prepare(&args)?;
    let choice = if comparing {
        PolicyChoice::Both
    } else {
        args.policy
    };

    let solved = if comparing || choice != PolicyChoice::Greedy {
        Some(solve(&spec, args.tolerance)?)
    } else {
        None
    };
    if comparing {
        write_solution(
            &spec,
            solved.as_ref().expect("solved above"),
            args.tolerance,
            &args.out,
        )?;
    }
    let index = match &solved {
        Some(s) => s.index.clone(),
        None => build_state_index(&spec).map_err(invalid)?,
    };
    let greedy = greedy_policy(&spec, &index);

    let mut policies = Vec::new();
    if let Some(s) = &solved {
        if choice != PolicyChoice::Greedy {
            policies.push(("mdp", &s.policy));
        }
    }
    if choice != PolicyChoice::Mdp {
        policies.push(("greedy", &greedy));
    }

    let value_gap = match (&solved, comparing) {
        (Some(s), true) => {
            Some(compare_policies(&s.mdp, &s.policy, &greedy, args.tolerance).map_err(invalid)?)
        }
        _ => None,
    };

    let hash = spec_hash(&spec);
    let runs = args
        .seeds
        .par_iter()
        .map(|&seed| {
            let trace = generate_trace(spec.demand_model(), args.epochs, seed, &initial_level)?;
            let results = policies
                .iter()
                .map(|(label, policy)| simulate(policy, label, &index, &spec, &trace, 0))
                .collect::<Result<Vec<_>, _>>()?;
            let summary = summarize(&results)?;
            Ok((seed, results, summary))
        })
        .collect::<Result<Vec<_>, crate::sim::SimError>>()
        .map_err(invalid)?;

    for (seed, results, summary) in runs {
        let metadata = RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            generator: GENERATOR_NAME.to_owned(),
            spec_hash: hash.clone(),
            seed,
            epochs: args.epochs,
            initial_level: initial_level.clone(),
            level_ids: spec
                .demand_model()
                .levels()
                .iter()
                .map(|l| l.id.clone())
                .collect(),
            discount: spec.discount(),
            tolerance: args.tolerance,
        };
        let paths = write_results(&results, &summary, &metadata, value_gap.as_ref(), &args.out)
            .map_err(|e| Failure::Io(format!("{}: {e}", args.out.display())))?;
        for row in &summary.rows {
            println!(
                "seed {seed}: {} cumulative migrations {}, violations {}",
                row.policy, row.cumulative_migrations, row.violations
            );
        }
        for path in paths {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
