//! The batch front-end: prepare data, learn a policy, evaluate it, compare
//! two policies, run a tournament, or export a policy drawing.
//!
//! Every subcommand is deterministic given its flags; randomness always
//! flows from an explicit `--seed` (never the clock), and a tournament
//! writes the seeds it derived to a manifest so the run can be reproduced
//! exactly. Configuration comes from flags alone; no environment variables
//! are read.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::costs::{CostConfig, CostModel};
use crate::dataset::{
    discretize, load_csv, load_dataset, load_replicas, make_replicas, preprocess, save_dataset,
    save_replicas, CsvSchema, Dataset, Replica, TrainFrac,
};
use crate::eval::{
    bdelta_cost, render_report, report_json, run_experiment, run_from_manifest, SeedManifest,
    TournamentConfig, DEFAULT_BOOTSTRAP_B,
};
use crate::learners::{learn, Algorithm, LearnOptions};
use crate::mdp::Estimator;
use crate::policy::Policy;

/// Entry point for the `diagpol` binary: parses `argv`, runs the chosen
/// subcommand, and turns any failure into a nonzero exit with a message
/// on stderr.
pub fn main<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().try_into().unwrap_or(2));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "diagpol",
    version,
    about = "Learn and evaluate cost-sensitive diagnostic policies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a CSV file, drop incomplete records, discretize numeric
    /// attributes, and write a prepared dataset plus train/test replicas.
    Prepare(PrepareArgs),
    /// Train one algorithm on one train split and write the policy.
    Learn(LearnArgs),
    /// Evaluate a saved policy on the held-out side of a split.
    Eval(EvalArgs),
    /// Compare two saved policies with the bootstrap cost test.
    Compare(CompareArgs),
    /// Run the full algorithms x cost levels x replicas grid.
    Tournament(TournamentArgs),
    /// Write a policy as a Graphviz drawing.
    ExportDot(ExportDotArgs),
}

fn parse_frac(s: &str) -> Result<TrainFrac, String> {
    let (num, den) = s
        .split_once('/')
        .ok_or_else(|| format!("expected a fraction like 2/3, got {s:?}"))?;
    let num: u32 = num.trim().parse().map_err(|_| format!("bad numerator {num:?}"))?;
    let den: u32 = den.trim().parse().map_err(|_| format!("bad denominator {den:?}"))?;
    TrainFrac::new(num, den).map_err(|e| e.to_string())
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: crate::learners::ParseAlgorithmError| e.to_string())
}

const DEFAULT_MEM_LIMIT: usize = crate::andor::DEFAULT_BYTE_LIMIT;

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the class column in the CSV header.
    #[arg(long)]
    pub class_column: String,
    /// Maximum number of bins when discretizing numeric attributes.
    #[arg(long, default_value_t = 2)]
    pub bins: usize,
    /// Merge a class label into another before discretizing (repeatable).
    #[arg(long = "merge", value_name = "OLD=NEW")]
    pub merges: Vec<String>,
    /// Number of train/test replicas to cut.
    #[arg(long, default_value_t = 20)]
    pub replicas: usize,
    /// Training fraction of each replica, as a fraction N/D.
    #[arg(long, value_parser = parse_frac, default_value = "2/3")]
    pub train_frac: TrainFrac,
    /// Seed for the replica splits.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving dataset.json and replicas.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Prepared dataset (dataset.json from `prepare`).
    #[arg(long)]
    pub data: PathBuf,
    /// Cost configuration file.
    #[arg(long)]
    pub costs: PathBuf,
    /// Which cost level of the configuration to use.
    #[arg(long)]
    pub cost_level: String,
    /// Algorithm name: AO*, SP, ES, PPP, Nor, MC-N, or VOI, with an
    /// optional -L suffix for Laplace-corrected probabilities.
    #[arg(long, value_parser = parse_algo)]
    pub algo: Algorithm,
    /// Seed for the train/test split and any internal split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training fraction, as a fraction N/D.
    #[arg(long, value_parser = parse_frac, default_value = "2/3")]
    pub train_frac: TrainFrac,
    /// Graph memory budget in bytes for the systematic searchers.
    #[arg(long, default_value_t = DEFAULT_MEM_LIMIT)]
    pub mem_limit: usize,
    /// Where to write the learned policy.
    #[arg(long)]
    pub out: PathBuf,
    /// Also print the per-iteration search trace.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved policy file.
    #[arg(long)]
    pub policy: PathBuf,
    /// Prepared dataset the policy was learned from.
    #[arg(long)]
    pub data: PathBuf,
    /// Cost configuration file.
    #[arg(long)]
    pub costs: PathBuf,
    /// Which cost level of the configuration to use.
    #[arg(long)]
    pub cost_level: String,
    /// Seed of the split whose held-out side to evaluate on.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training fraction of that split, as a fraction N/D.
    #[arg(long, value_parser = parse_frac, default_value = "2/3")]
    pub train_frac: TrainFrac,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// The two saved policies to compare.
    #[arg(value_name = "POLICY", num_args = 2)]
    pub policies: Vec<PathBuf>,
    /// Prepared dataset supplying the test examples.
    #[arg(long)]
    pub data: PathBuf,
    /// Cost configuration file.
    #[arg(long)]
    pub costs: PathBuf,
    /// Which cost level of the configuration to use.
    #[arg(long)]
    pub cost_level: String,
    /// Seed for the split and the bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training fraction of the split, as a fraction N/D.
    #[arg(long, value_parser = parse_frac, default_value = "2/3")]
    pub train_frac: TrainFrac,
    /// Bootstrap replicate count.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_B)]
    pub bootstrap: usize,
}

#[derive(Debug, Args)]
pub struct TournamentArgs {
    /// Prepared dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Cost configuration file.
    #[arg(long)]
    pub costs: PathBuf,
    /// Cost levels to include (repeatable; default: every level in the
    /// configuration, in file order).
    #[arg(long = "cost-level")]
    pub cost_levels: Vec<String>,
    /// Algorithms to enter (repeatable; default: all fourteen).
    #[arg(long = "algo", value_parser = parse_algo)]
    pub algos: Vec<Algorithm>,
    /// Number of replicas to cut when --replica-file is not given.
    #[arg(long, default_value_t = 20)]
    pub replicas: usize,
    /// Training fraction of each replica, as a fraction N/D.
    #[arg(long, value_parser = parse_frac, default_value = "2/3")]
    pub train_frac: TrainFrac,
    /// Reuse replicas.json from `prepare` instead of cutting fresh splits.
    #[arg(long)]
    pub replica_file: Option<PathBuf>,
    /// Master seed; every derived seed lands in the manifest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Graph memory budget in bytes for the systematic searchers.
    #[arg(long, default_value_t = DEFAULT_MEM_LIMIT)]
    pub mem_limit: usize,
    /// Worker threads for the grid (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Directory receiving report.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rerun with the bootstrap seeds recorded by a previous run.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportDotArgs {
    /// Saved policy file.
    #[arg(long)]
    pub policy: PathBuf,
    /// Prepared dataset; when given, branches are annotated with training
    /// probabilities and leaves with expected misdiagnosis costs.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Cost configuration file (required with --data).
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Which cost level of the configuration to use (required with --data).
    #[arg(long)]
    pub cost_level: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one parsed command to completion.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => run_prepare(&args),
        Command::Learn(args) => run_learn(&args),
        Command::Eval(args) => run_eval(&args),
        Command::Compare(args) => run_compare(&args),
        Command::Tournament(args) => run_tournament(&args),
        Command::ExportDot(args) => run_export_dot(&args),
    }
}

fn load_prepared(path: &PathBuf) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn resolve_costs(data: &Dataset, path: &PathBuf, level: &str) -> Result<CostModel> {
    let cfg = CostConfig::load(path)
        .with_context(|| format!("loading cost configuration {}", path.display()))?;
    cfg.resolve(data, level)
        .with_context(|| format!("resolving cost level {level:?}"))
}

fn single_split(data: &Dataset, frac: TrainFrac, seed: u64) -> Result<Replica> {
    let mut replicas = make_replicas(data, 1, frac, seed)?;
    Ok(replicas.remove(0))
}

fn run_prepare(args: &PrepareArgs) -> Result<()> {
    let schema = CsvSchema::new(args.class_column.clone());
    let raw = load_csv(&args.data, &schema)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let mut merges = BTreeMap::new();
    for m in &args.merges {
        let (old, new) = m
            .split_once('=')
            .with_context(|| format!("--merge wants OLD=NEW, got {m:?}"))?;
        merges.insert(old.to_string(), new.to_string());
    }
    let kept = preprocess(&raw, &merges)?;
    let dropped = raw.records.len() - kept.records.len();
    let data = discretize(&kept, args.bins)?;
    let replicas = make_replicas(&data, args.replicas, args.train_frac, args.seed)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let dataset_path = args.out.join("dataset.json");
    let replicas_path = args.out.join("replicas.json");
    save_dataset(&data, &dataset_path)?;
    save_replicas(&replicas, args.seed, args.train_frac, &replicas_path)?;

    println!(
        "kept {} of {} records ({} dropped as incomplete)",
        data.n_examples(),
        raw.records.len(),
        dropped
    );
    println!(
        "{} attributes, {} classes {:?}",
        data.n_attributes(),
        data.n_classes(),
        data.classes
    );
    println!(
        "wrote {} and {} ({} replicas at {})",
        dataset_path.display(),
        replicas_path.display(),
        replicas.len(),
        args.train_frac
    );
    Ok(())
}

fn run_learn(args: &LearnArgs) -> Result<()> {
    let data = load_prepared(&args.data)?;
    let cm = resolve_costs(&data, &args.costs, &args.cost_level)?;
    let replica = single_split(&data, args.train_frac, args.seed)?;
    let opts = LearnOptions {
        seed: args.seed,
        byte_limit: args.mem_limit,
        ..LearnOptions::default()
    };
    let out = learn(args.algo, &data, &replica.train_idx, &cm, &opts)?;

    let est = Estimator::new(&data, &replica.train_idx, args.algo.laplace);
    let v_train = out.policy.expected_value(&est, &cm)?;
    let v_test = out.policy.v_test(&data, &replica.test_idx, &cm)?;
    out.policy.save(&args.out)?;

    println!(
        "{}: {} tests, depth {}",
        args.algo,
        out.policy.n_tests(),
        out.policy.depth()
    );
    println!("V_train = {v_train:.6}  V_test = {v_test:.6}");
    if let Some(trace) = &out.trace {
        println!(
            "{} expansions, converged: {}, memory limit hit: {}, iteration cap hit: {}",
            trace.expansions, trace.converged, trace.memory_limit_hit, trace.iteration_cap_hit
        );
        if args.trace {
            for line in trace.lines() {
                println!("{line}");
            }
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let data = load_prepared(&args.data)?;
    let cm = resolve_costs(&data, &args.costs, &args.cost_level)?;
    let replica = single_split(&data, args.train_frac, args.seed)?;
    let policy = Policy::load(&args.policy)?;
    let v_test = policy.v_test(&data, &replica.test_idx, &cm)?;
    println!(
        "V_test = {v_test:.6} over {} held-out examples",
        replica.test_idx.len()
    );
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let data = load_prepared(&args.data)?;
    let cm = resolve_costs(&data, &args.costs, &args.cost_level)?;
    let replica = single_split(&data, args.train_frac, args.seed)?;
    let p1 = Policy::load(&args.policies[0])?;
    let p2 = Policy::load(&args.policies[1])?;
    let outcome = bdelta_cost(
        &p1,
        &p2,
        &data,
        &replica.test_idx,
        &cm,
        args.bootstrap,
        args.seed,
    )?;
    println!(
        "{:?} for {} vs {} (95% CI on cost difference: [{:.6}, {:.6}])",
        outcome.verdict,
        args.policies[0].display(),
        args.policies[1].display(),
        outcome.ci.0,
        outcome.ci.1
    );
    Ok(())
}

fn run_tournament(args: &TournamentArgs) -> Result<()> {
    let data = load_prepared(&args.data)?;
    let cfg = CostConfig::load(&args.costs)
        .with_context(|| format!("loading cost configuration {}", args.costs.display()))?;
    let level_names: Vec<String> = if args.cost_levels.is_empty() {
        cfg.level_names().iter().map(|s| s.to_string()).collect()
    } else {
        args.cost_levels.clone()
    };
    let mut levels = Vec::new();
    for name in &level_names {
        let cm = cfg
            .resolve(&data, name)
            .with_context(|| format!("resolving cost level {name:?}"))?;
        levels.push((name.clone(), cm));
    }
    let algos: Vec<Algorithm> = if args.algos.is_empty() {
        crate::learners::all()
    } else {
        args.algos.clone()
    };
    let replicas = match &args.replica_file {
        Some(path) => load_replicas(path)
            .with_context(|| format!("loading replicas {}", path.display()))?,
        None => make_replicas(&data, args.replicas, args.train_frac, args.seed)?,
    };
    let tcfg = TournamentConfig {
        master_seed: args.seed,
        bootstrap_b: DEFAULT_BOOTSTRAP_B,
        learn: LearnOptions {
            seed: args.seed,
            byte_limit: args.mem_limit,
            ..LearnOptions::default()
        },
    };

    let grid = || -> Result<(crate::eval::ScoreTable, SeedManifest)> {
        match &args.from_manifest {
            Some(path) => {
                let manifest = SeedManifest::load(path)?;
                let table = run_from_manifest(
                    &data, &levels, &replicas, &algos, &tcfg.learn, &manifest,
                )?;
                Ok((table, manifest))
            }
            None => Ok(run_experiment(&data, &levels, &replicas, &algos, &tcfg)?),
        }
    };
    let (table, manifest) = if args.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .context("building worker pool")?
            .install(grid)?
    } else {
        grid()?
    };

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let report_path = dir.join("report.json");
        fs::write(&report_path, report_json(&table))
            .with_context(|| format!("writing {}", report_path.display()))?;
        let manifest_path = dir.join("manifest.json");
        manifest.save(&manifest_path)?;
        println!(
            "wrote {} and {}",
            report_path.display(),
            manifest_path.display()
        );
    }
    print!("{}", render_report(&table));
    Ok(())
}

fn run_export_dot(args: &ExportDotArgs) -> Result<()> {
    let policy = Policy::load(&args.policy)?;
    let dot = match &args.data {
        Some(data_path) => {
            let data = load_prepared(data_path)?;
            let (costs, level) = match (&args.costs, &args.cost_level) {
                (Some(c), Some(l)) => (c, l),
                _ => bail!("--data needs --costs and --cost-level for annotations"),
            };
            let cm = resolve_costs(&data, costs, level)?;
            let all = data.all_indices();
            let est = Estimator::new(&data, &all, false);
            policy.annotated(&est, &cm)?.to_dot()
        }
        None => policy.to_dot(),
    };
    match &args.out {
        Some(path) => {
            fs::write(path, dot).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{dot}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_parse_as_exact_ratios() {
        assert_eq!(parse_frac("2/3").unwrap(), TrainFrac::TWO_THIRDS);
        assert_eq!(parse_frac("1/2").unwrap(), TrainFrac::HALF);
        assert!(parse_frac("0.5").is_err());
        assert!(parse_frac("3/2").is_err());
    }

    #[test]
    fn an_unknown_algorithm_is_a_usage_error_listing_the_names() {
        let err = Cli::try_parse_from([
            "diagpol", "learn", "--data", "d.json", "--costs", "c.toml", "--cost-level",
            "low", "--algo", "XYZ", "--out", "p.json",
        ])
        .unwrap_err();
        let text = err.to_string();
        for name in crate::learners::ALGORITHM_NAMES {
            assert!(text.contains(name), "missing {name} in {text}");
        }
    }

    #[test]
    fn learn_flags_parse_into_the_expected_config() {
        let cli = Cli::try_parse_from([
            "diagpol",
            "learn",
            "--data",
            "d.json",
            "--costs",
            "c.toml",
            "--cost-level",
            "level40",
            "--algo",
            "sp-l",
            "--seed",
            "11",
            "--mem-limit",
            "1048576",
            "--out",
            "p.json",
        ])
        .unwrap();
        match cli.command {
            Command::Learn(args) => {
                assert_eq!(args.algo.to_string(), "SP-L");
                assert_eq!(args.seed, 11);
                assert_eq!(args.mem_limit, 1 << 20);
                assert_eq!(args.cost_level, "level40");
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn only_tournament_accepts_jobs() {
        assert!(Cli::try_parse_from([
            "diagpol", "tournament", "--data", "d.json", "--costs", "c.toml", "--jobs", "4",
        ])
        .is_ok());
        assert!(Cli::try_parse_from([
            "diagpol", "learn", "--data", "d.json", "--costs", "c.toml", "--cost-level",
            "low", "--algo", "AO*", "--out", "p.json", "--jobs", "4",
        ])
        .is_err());
    }

    #[test]
    fn compare_takes_exactly_two_policies() {
        assert!(Cli::try_parse_from([
            "diagpol", "compare", "a.json", "b.json", "--data", "d.json", "--costs",
            "c.toml", "--cost-level", "low",
        ])
        .is_ok());
        assert!(Cli::try_parse_from([
            "diagpol", "compare", "a.json", "--data", "d.json", "--costs", "c.toml",
            "--cost-level", "low",
        ])
        .is_err());
    }
}
