//! Comparing policies: a bootstrap cost test, chess scoring, and the
//! experiment grid.
//!
//! Two policies are compared by the per-example difference in total cost
//! over a held-out test set,
//!
//! ```text
//! delta_i = cost_p1(example_i) - cost_p2(example_i)
//! ```
//!
//! from which 1000 bootstrap resamples (drawn with replacement, each the
//! size of the test set) produce a distribution of mean differences; the
//! middle 950 of the sorted means form a 95% confidence interval. An
//! interval entirely below zero is a win for the first policy, entirely
//! above is a loss, and an interval containing zero is a tie. Resampling
//! draws example *indices*, so running the mirrored comparison with the
//! same seed negates the interval exactly and swaps win and loss.
//!
//! Games are aggregated chess-style, one point per win and half per tie.
//! The grid runner plays every algorithm pair once per cost level and
//! replica; an algorithm facing 6 opponents over 5 levels and 20 replicas
//! therefore plays 600 games, and an overall score of 300 reads as "ties
//! across the board". Every bootstrap seed derives from one master seed
//! and is recorded in a manifest, so a rerun reproduces the report byte
//! for byte.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::CostModel;
use crate::dataset::{Dataset, Replica};
use crate::learners::{learn, Algorithm, LearnOptions};
use crate::policy::{Policy, PolicyError};

/// Bootstrap replicate count used throughout the experiments.
pub const DEFAULT_BOOTSTRAP_B: usize = 1000;

const MANIFEST_FORMAT: &str = "diagpol-manifest";
const REPORT_FORMAT: &str = "diagpol-report";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot compare policies on an empty test set")]
    EmptyTestSet,
    #[error("a tournament needs at least two algorithms")]
    TooFewAlgorithms,
    #[error("tournament cell failed (level {level:?}, replica {replica}, {algorithm})")]
    Cell {
        level: String,
        replica: u32,
        algorithm: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("manifest has no seed for level {level:?} replica {replica}, {first} vs {second}")]
    MissingSeed {
        level: String,
        replica: u32,
        first: String,
        second: String,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("failed to access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest file: {0}")]
    BadFile(String),
    #[error("expected a {expected} file, found format {found:?}")]
    WrongFormat { expected: &'static str, found: String },
    #[error("{format} version {found} is not supported (this build reads version {supported})")]
    UnsupportedVersion {
        format: &'static str,
        found: u32,
        supported: u32,
    },
}

/// How a comparison came out for the first policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Win,
    Tie,
    Loss,
}

/// A comparison result: the verdict and the confidence interval on the
/// mean cost difference (first minus second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub verdict: Verdict,
    pub ci: (f64, f64),
}

impl Outcome {
    fn classify(ci: (f64, f64)) -> Outcome {
        let verdict = if ci.1 < 0.0 {
            Verdict::Win
        } else if ci.0 > 0.0 {
            Verdict::Loss
        } else {
            Verdict::Tie
        };
        Outcome { verdict, ci }
    }
}

/// The bootstrap test on precomputed per-example cost differences.
pub fn bdelta_from_deltas(deltas: &[f64], b: usize, seed: u64) -> Result<Outcome, EvalError> {
    let m = deltas.len();
    if m == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        let mut total = 0.0;
        for _ in 0..m {
            total += deltas[rng.gen_range(0..m)];
        }
        means.push(total / m as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("costs are finite"));
    let drop = b / 40;
    let ci = (means[drop], means[b - 1 - drop]);
    Ok(Outcome::classify(ci))
}

/// Compares two policies on a test split: per-example cost differences,
/// then the bootstrap test.
pub fn bdelta_cost(
    p1: &Policy,
    p2: &Policy,
    data: &Dataset,
    test: &[u32],
    cm: &CostModel,
    b: usize,
    seed: u64,
) -> Result<Outcome, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let c1 = p1.costs_on(data, test, cm)?;
    let c2 = p2.costs_on(data, test, cm)?;
    let deltas: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a - b).collect();
    bdelta_from_deltas(&deltas, b, seed)
}

/// Chess scoring: one point per win, half a point per tie.
pub fn chess_score(outcomes: &[Outcome]) -> f64 {
    let wins = outcomes.iter().filter(|o| o.verdict == Verdict::Win).count();
    let ties = outcomes.iter().filter(|o| o.verdict == Verdict::Tie).count();
    wins as f64 + 0.5 * ties as f64
}

/// Accumulated games of one ordered algorithm pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairScore {
    pub first: String,
    pub second: String,
    pub wins: u32,
    pub ties: u32,
    pub losses: u32,
}

impl PairScore {
    pub fn games(&self) -> u32 {
        self.wins + self.ties + self.losses
    }

    pub fn score(&self) -> f64 {
        f64::from(self.wins) + 0.5 * f64::from(self.ties)
    }
}

/// Win/tie/loss counts for every ordered pair of algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub algorithms: Vec<String>,
    pub pairs: Vec<PairScore>,
}

impl ScoreTable {
    fn new(algorithms: Vec<String>) -> ScoreTable {
        let mut pairs = Vec::new();
        for first in &algorithms {
            for second in &algorithms {
                if first != second {
                    pairs.push(PairScore {
                        first: first.clone(),
                        second: second.clone(),
                        wins: 0,
                        ties: 0,
                        losses: 0,
                    });
                }
            }
        }
        ScoreTable { algorithms, pairs }
    }

    fn pair_mut(&mut self, first: &str, second: &str) -> &mut PairScore {
        self.pairs
            .iter_mut()
            .find(|p| p.first == first && p.second == second)
            .expect("tables hold every ordered pair")
    }

    fn record(&mut self, first: &str, second: &str, outcome: &Outcome) {
        {
            let fwd = self.pair_mut(first, second);
            match outcome.verdict {
                Verdict::Win => fwd.wins += 1,
                Verdict::Tie => fwd.ties += 1,
                Verdict::Loss => fwd.losses += 1,
            }
        }
        let rev = self.pair_mut(second, first);
        match outcome.verdict {
            Verdict::Win => rev.losses += 1,
            Verdict::Tie => rev.ties += 1,
            Verdict::Loss => rev.wins += 1,
        }
    }

    pub fn pair(&self, first: &str, second: &str) -> Option<&PairScore> {
        self.pairs
            .iter()
            .find(|p| p.first == first && p.second == second)
    }

    /// Games played by one algorithm across all opponents.
    pub fn total_games(&self, algorithm: &str) -> u32 {
        self.pairs
            .iter()
            .filter(|p| p.first == algorithm)
            .map(PairScore::games)
            .sum()
    }

    /// Chess score of one algorithm across all opponents.
    pub fn overall_score(&self, algorithm: &str) -> f64 {
        self.pairs
            .iter()
            .filter(|p| p.first == algorithm)
            .map(PairScore::score)
            .sum()
    }

    /// The score an algorithm would have if every game tied.
    pub fn tie_score(&self, algorithm: &str) -> f64 {
        0.5 * f64::from(self.total_games(algorithm))
    }
}

/// One recorded bootstrap seed: the cell and pair it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSeed {
    pub level: String,
    pub replica: u32,
    pub first: String,
    pub second: String,
    pub seed: u64,
}

/// Every seed a tournament consumed, enough to rerun it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub master_seed: u64,
    pub bootstrap_b: usize,
    pub games: Vec<GameSeed>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    manifest: SeedManifest,
}

impl SeedManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        let file = ManifestFile {
            format: MANIFEST_FORMAT.to_string(),
            version: FILE_VERSION,
            manifest: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("manifests serialize");
        fs::write(path, text).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SeedManifest, EvalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ManifestFile =
            serde_json::from_str(&text).map_err(|e| EvalError::BadFile(e.to_string()))?;
        if file.format != MANIFEST_FORMAT {
            return Err(EvalError::WrongFormat {
                expected: MANIFEST_FORMAT,
                found: file.format,
            });
        }
        if file.version != FILE_VERSION {
            return Err(EvalError::UnsupportedVersion {
                format: MANIFEST_FORMAT,
                found: file.version,
                supported: FILE_VERSION,
            });
        }
        Ok(file.manifest)
    }
}

/// Derives a fresh seed from a master seed and a position in the grid,
/// via repeated splitmix64 finalization.
pub fn mix_seed(master: u64, words: &[u64]) -> u64 {
    fn finalize(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut state = finalize(master);
    for &w in words {
        state = finalize(state ^ w);
    }
    state
}

/// Tournament settings beyond the data itself.
#[derive(Debug, Clone)]
pub struct TournamentConfig {
    pub master_seed: u64,
    pub bootstrap_b: usize,
    pub learn: LearnOptions,
}

impl TournamentConfig {
    pub fn new(master_seed: u64) -> TournamentConfig {
        TournamentConfig {
            master_seed,
            bootstrap_b: DEFAULT_BOOTSTRAP_B,
            learn: LearnOptions::default(),
        }
    }
}

struct Game {
    level: String,
    replica: u32,
    first: usize,
    second: usize,
    seed: u64,
    outcome: Outcome,
}

/// How one tournament cell resolves the seed for a pair of algorithms.
enum SeedSource<'a> {
    Mixed(u64),
    Manifest(&'a HashMap<(String, u32, String, String), u64>),
}

fn run_cell(
    data: &Dataset,
    level_index: usize,
    level: &str,
    cm: &CostModel,
    replica: &Replica,
    algorithms: &[Algorithm],
    cfg: &TournamentConfig,
    seeds: &SeedSource,
) -> Result<Vec<Game>, EvalError> {
    let cell_err = |algorithm: String, source: Box<dyn std::error::Error + Send + Sync>| {
        EvalError::Cell {
            level: level.to_string(),
            replica: replica.id,
            algorithm,
            source,
        }
    };
    let mut costs = Vec::with_capacity(algorithms.len());
    for &algo in algorithms {
        let out = learn(algo, data, &replica.train_idx, cm, &cfg.learn)
            .map_err(|e| cell_err(algo.to_string(), Box::new(e)))?;
        let c = out
            .policy
            .costs_on(data, &replica.test_idx, cm)
            .map_err(|e| cell_err(algo.to_string(), Box::new(e)))?;
        costs.push(c);
    }
    let mut games = Vec::new();
    for i in 0..algorithms.len() {
        for j in (i + 1)..algorithms.len() {
            let first = algorithms[i].to_string();
            let second = algorithms[j].to_string();
            let seed = match seeds {
                SeedSource::Mixed(master) => mix_seed(
                    *master,
                    &[
                        level_index as u64,
                        u64::from(replica.id),
                        i as u64,
                        j as u64,
                    ],
                ),
                SeedSource::Manifest(map) => *map
                    .get(&(level.to_string(), replica.id, first.clone(), second.clone()))
                    .ok_or_else(|| EvalError::MissingSeed {
                        level: level.to_string(),
                        replica: replica.id,
                        first: first.clone(),
                        second: second.clone(),
                    })?,
            };
            let deltas: Vec<f64> = costs[i]
                .iter()
                .zip(&costs[j])
                .map(|(a, b)| a - b)
                .collect();
            let outcome = bdelta_from_deltas(&deltas, cfg.bootstrap_b, seed)?;
            games.push(Game {
                level: level.to_string(),
                replica: replica.id,
                first: i,
                second: j,
                seed,
                outcome,
            });
        }
    }
    Ok(games)
}

fn run_grid(
    data: &Dataset,
    levels: &[(String, CostModel)],
    replicas: &[Replica],
    algorithms: &[Algorithm],
    cfg: &TournamentConfig,
    seeds: SeedSource,
) -> Result<(ScoreTable, SeedManifest), EvalError> {
    if algorithms.len() < 2 {
        return Err(EvalError::TooFewAlgorithms);
    }
    let names: Vec<String> = algorithms.iter().map(Algorithm::to_string).collect();
    let cells: Vec<(usize, &(String, CostModel), &Replica)> = levels
        .iter()
        .enumerate()
        .flat_map(|(li, level)| replicas.iter().map(move |r| (li, level, r)))
        .collect();
    let per_cell: Vec<Vec<Game>> = cells
        .par_iter()
        .map(|&(li, (level, cm), replica)| {
            run_cell(data, li, level, cm, replica, algorithms, cfg, &seeds)
        })
        .collect::<Result<_, _>>()?;

    let mut table = ScoreTable::new(names.clone());
    let mut manifest = SeedManifest {
        master_seed: cfg.master_seed,
        bootstrap_b: cfg.bootstrap_b,
        games: Vec::new(),
    };
    for games in per_cell {
        for game in games {
            table.record(&names[game.first], &names[game.second], &game.outcome);
            manifest.games.push(GameSeed {
                level: game.level,
                replica: game.replica,
                first: names[game.first].clone(),
                second: names[game.second].clone(),
                seed: game.seed,
            });
        }
    }
    Ok((table, manifest))
}

/// Runs the full grid: every algorithm trains on every (cost level,
/// replica) cell, every pair is compared on the test split, and the
/// results accumulate chess-style. Deterministic given the master seed;
/// the returned manifest lists every derived seed.
pub fn run_experiment(
    data: &Dataset,
    levels: &[(String, CostModel)],
    replicas: &[Replica],
    algorithms: &[Algorithm],
    cfg: &TournamentConfig,
) -> Result<(ScoreTable, SeedManifest), EvalError> {
    run_grid(
        data,
        levels,
        replicas,
        algorithms,
        cfg,
        SeedSource::Mixed(cfg.master_seed),
    )
}

/// Reruns a grid using the seeds a previous run recorded, reproducing its
/// table exactly.
pub fn run_from_manifest(
    data: &Dataset,
    levels: &[(String, CostModel)],
    replicas: &[Replica],
    algorithms: &[Algorithm],
    learn_opts: &LearnOptions,
    manifest: &SeedManifest,
) -> Result<ScoreTable, EvalError> {
    let map: HashMap<(String, u32, String, String), u64> = manifest
        .games
        .iter()
        .map(|g| {
            (
                (g.level.clone(), g.replica, g.first.clone(), g.second.clone()),
                g.seed,
            )
        })
        .collect();
    let cfg = TournamentConfig {
        master_seed: manifest.master_seed,
        bootstrap_b: manifest.bootstrap_b,
        learn: *learn_opts,
    };
    let (table, _) = run_grid(
        data,
        levels,
        replicas,
        algorithms,
        &cfg,
        SeedSource::Manifest(&map),
    )?;
    Ok(table)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    format: &'static str,
    version: u32,
    table: &'a ScoreTable,
}

/// The score table as versioned JSON.
pub fn report_json(table: &ScoreTable) -> String {
    let file = ReportFile {
        format: REPORT_FORMAT,
        version: FILE_VERSION,
        table,
    };
    serde_json::to_string_pretty(&file).expect("reports serialize")
}

/// A human-readable summary: per-pair rows, per-algorithm totals, the
/// leader, and a flag on every algorithm scoring below an all-ties run.
pub fn render_report(table: &ScoreTable) -> String {
    let mut out = String::new();
    out.push_str("pairwise results (wins-ties-losses for the row algorithm):\n");
    for p in &table.pairs {
        let record = format!("{}-{}-{}", p.wins, p.ties, p.losses);
        let _ = writeln!(
            out,
            "  {:>8} vs {:<8} {:>11}  score {:.1}",
            p.first,
            p.second,
            record,
            p.score()
        );
    }
    out.push_str("totals:\n");
    let mut best: Option<(&str, f64)> = None;
    for name in &table.algorithms {
        let score = table.overall_score(name);
        let tie = table.tie_score(name);
        let flag = if score < tie { "  (below tie-score)" } else { "" };
        let _ = writeln!(
            out,
            "  {:>8}: {:.1} of {} games (tie-score {:.1}){}",
            name,
            score,
            table.total_games(name),
            tie,
            flag
        );
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((name, score));
        }
    }
    if let Some((name, score)) = best {
        let _ = writeln!(out, "leader: {name} with {score:.1}");
    }
    out
}
