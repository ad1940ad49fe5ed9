//! The algorithm registry: names, parsing, and a single entry point.
//!
//! Seven learner families are available. Four drive the systematic search:
//! plain AO*, SP (statistical pruning), ES (early stopping), and PPP
//! (pessimistic post-pruning of the converged policy). Three are greedy
//! tree growers: Nor picks tests by information gain per unit cost, MC-N
//! adds cost-sensitive leaves and expected-cost pruning, and VOI tests
//! only while one step of lookahead beats diagnosing now. Appending `-L`
//! to any name switches the probability estimates to Laplace-corrected
//! ones, giving fourteen algorithms in total.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::aostar::{ao_star, AoConfig, AoError, SearchTrace, CI_Z_95};
use crate::costs::CostModel;
use crate::dataset::Dataset;
use crate::greedy::{grow_mcn, grow_nor, grow_voi, GreedyConfig};
use crate::andor::DEFAULT_BYTE_LIMIT;
use crate::policy::Policy;

/// The seven learner families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    AoStar,
    Sp,
    Es,
    Ppp,
    Nor,
    Mcn,
    Voi,
}

/// A learner family plus the Laplace toggle: one launchable algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Algorithm {
    pub method: Method,
    pub laplace: bool,
}

pub const ALGORITHM_NAMES: [&str; 7] = ["AO*", "SP", "ES", "PPP", "Nor", "MC-N", "VOI"];

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown algorithm {0:?}; valid names are AO*, SP, ES, PPP, Nor, MC-N, VOI, each optionally suffixed with -L")]
pub struct ParseAlgorithmError(pub String);

impl FromStr for Algorithm {
    type Err = ParseAlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let upper = trimmed.to_ascii_uppercase();
        let (body, laplace) = match upper.strip_suffix("-L") {
            Some(body) => (body, true),
            None => (upper.as_str(), false),
        };
        let method = match body {
            "AO*" => Method::AoStar,
            "SP" => Method::Sp,
            "ES" => Method::Es,
            "PPP" => Method::Ppp,
            "NOR" => Method::Nor,
            "MC-N" => Method::Mcn,
            "VOI" => Method::Voi,
            _ => return Err(ParseAlgorithmError(trimmed.to_string())),
        };
        Ok(Algorithm { method, laplace })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.method {
            Method::AoStar => "AO*",
            Method::Sp => "SP",
            Method::Es => "ES",
            Method::Ppp => "PPP",
            Method::Nor => "Nor",
            Method::Mcn => "MC-N",
            Method::Voi => "VOI",
        };
        if self.laplace {
            write!(f, "{name}-L")
        } else {
            f.write_str(name)
        }
    }
}

/// Every algorithm, maximum-likelihood variants first.
pub fn all() -> Vec<Algorithm> {
    let methods = [
        Method::AoStar,
        Method::Sp,
        Method::Es,
        Method::Ppp,
        Method::Nor,
        Method::Mcn,
        Method::Voi,
    ];
    let mut out = Vec::with_capacity(14);
    for laplace in [false, true] {
        for method in methods {
            out.push(Algorithm { method, laplace });
        }
    }
    out
}

/// Shared learning limits and seeds, independent of the algorithm.
#[derive(Debug, Clone, Copy)]
pub struct LearnOptions {
    /// Seeds the early-stopping split; ignored by the other methods.
    pub seed: u64,
    pub byte_limit: usize,
    pub max_iterations: usize,
    pub sp_audit: bool,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            seed: 0,
            byte_limit: DEFAULT_BYTE_LIMIT,
            max_iterations: usize::MAX,
            sp_audit: true,
        }
    }
}

/// What a learner hands back: the policy, and the search log for the
/// methods that keep one.
#[derive(Debug)]
pub struct LearnOutput {
    pub policy: Policy,
    pub trace: Option<SearchTrace>,
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("cannot learn from an empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Search(#[from] AoError),
}

/// Trains one algorithm on one train split.
pub fn learn(
    algo: Algorithm,
    data: &Dataset,
    train: &[u32],
    cm: &CostModel,
    opts: &LearnOptions,
) -> Result<LearnOutput, LearnError> {
    if train.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    match algo.method {
        Method::AoStar | Method::Sp | Method::Es | Method::Ppp => {
            let cfg = AoConfig {
                laplace: algo.laplace,
                sp: algo.method == Method::Sp,
                es: algo.method == Method::Es,
                ppp: algo.method == Method::Ppp,
                byte_limit: opts.byte_limit,
                max_iterations: opts.max_iterations,
                seed: opts.seed,
                ci_z_95: CI_Z_95,
                sp_audit: opts.sp_audit,
            };
            let (policy, trace) = ao_star(data, train, cm, &cfg)?;
            Ok(LearnOutput {
                policy,
                trace: Some(trace),
            })
        }
        Method::Nor | Method::Mcn | Method::Voi => {
            let cfg = GreedyConfig::new(algo.laplace);
            let policy = match algo.method {
                Method::Nor => grow_nor(data, train, cm, &cfg),
                Method::Mcn => grow_mcn(data, train, cm, &cfg),
                _ => grow_voi(data, train, cm, &cfg),
            };
            Ok(LearnOutput {
                policy,
                trace: None,
            })
        }
    }
}
