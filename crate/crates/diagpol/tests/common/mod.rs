//! Shared fixtures and oracles for the integration suites.
//!
//! The dynamic-programming optimum here is written against the dataset
//! directly, with its own match filtering and its own cost arithmetic, so
//! it shares no code with the search it judges.

use std::collections::HashMap;

use diagpol::costs::CostModel;
use diagpol::dataset::{AttributeKind, AttributeMeta, Dataset, Example};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn attribute(name: &str, n_values: usize) -> AttributeMeta {
    AttributeMeta {
        name: name.to_string(),
        kind: AttributeKind::Discrete,
        values: (0..n_values).map(|v| format!("v{v}")).collect(),
        thresholds: Vec::new(),
    }
}

pub fn dataset(examples: Vec<(Vec<u16>, u16)>, arities: &[usize], n_classes: usize) -> Dataset {
    Dataset {
        attributes: arities
            .iter()
            .enumerate()
            .map(|(i, &a)| attribute(&format!("x{i}"), a))
            .collect(),
        classes: (0..n_classes).map(|k| format!("c{k}")).collect(),
        examples: examples
            .into_iter()
            .map(|(values, class)| Example { values, class })
            .collect(),
    }
}

pub fn uniform_mc(k: usize, cost: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.0 } else { cost }).collect())
        .collect()
}

/// Cheapest expected misdiagnosis cost over the given examples, computed
/// from raw class counts.
pub fn cheapest_diagnosis(data: &Dataset, matches: &[u32], cm: &CostModel) -> f64 {
    let m = matches.len() as f64;
    (0..data.n_classes())
        .map(|k| {
            matches
                .iter()
                .map(|&i| cm.mc(k, usize::from(data.examples[i as usize].class)))
                .sum::<f64>()
                / m
        })
        .fold(f64::INFINITY, f64::min)
}

fn dp_value(
    data: &Dataset,
    cm: &CostModel,
    tested: u32,
    matches: &[u32],
    memo: &mut HashMap<(u32, Vec<u32>), f64>,
) -> f64 {
    let key = (tested, matches.to_vec());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let mut best = cheapest_diagnosis(data, matches, cm);
    for a in 0..data.n_attributes() {
        if tested & (1 << a) != 0 {
            continue;
        }
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); data.arity(a)];
        for &i in matches {
            buckets[usize::from(data.examples[i as usize].values[a])].push(i);
        }
        let mut q = cm.test_cost(a);
        for bucket in &buckets {
            if bucket.is_empty() {
                continue;
            }
            let p = bucket.len() as f64 / matches.len() as f64;
            q += p * dp_value(data, cm, tested | (1 << a), bucket, memo);
        }
        if q < best {
            best = q;
        }
    }
    memo.insert(key, best);
    best
}

/// Exhaustive backward-induction optimum of the diagnosis process under
/// maximum-likelihood probabilities: at every reachable state, diagnose at
/// the cheapest expected misdiagnosis cost or run any untested attribute,
/// branching over the value splits actually present in the training
/// examples.
pub fn dp_optimum(data: &Dataset, train: &[u32], cm: &CostModel) -> f64 {
    let mut memo = HashMap::new();
    dp_value(data, cm, 0, train, &mut memo)
}

pub struct RandomInstance {
    pub data: Dataset,
    pub train: Vec<u32>,
    pub cm: CostModel,
}

/// A small random problem: up to 4 binary attributes, two classes, at most
/// 64 examples, positive random costs. Half the instances plant a noisy
/// two-attribute rule so the optimum actually tests something.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_attrs = rng.gen_range(1..=4usize);
    let n_examples = rng.gen_range(4..=64usize);
    let planted = n_attrs >= 2 && rng.gen_bool(0.5);
    let (a, b) = if planted {
        let a = rng.gen_range(0..n_attrs);
        let mut b = rng.gen_range(0..n_attrs);
        while b == a {
            b = rng.gen_range(0..n_attrs);
        }
        (a, b)
    } else {
        (0, 0)
    };
    let mut examples = Vec::with_capacity(n_examples);
    for _ in 0..n_examples {
        let values: Vec<u16> = (0..n_attrs).map(|_| rng.gen_range(0..2u16)).collect();
        let class = if planted {
            let truth = (values[a] ^ values[b]) as u16;
            if rng.gen_bool(0.15) {
                1 - truth
            } else {
                truth
            }
        } else {
            rng.gen_range(0..2u16)
        };
        examples.push((values, class));
    }
    let data = dataset(examples, &vec![2; n_attrs], 2);
    let test_costs: Vec<f64> = (0..n_attrs).map(|_| rng.gen_range(0.5..10.0)).collect();
    let mut mc = vec![vec![0.0; 2], vec![0.0; 2]];
    mc[0][1] = rng.gen_range(1.0..100.0);
    mc[1][0] = rng.gen_range(1.0..100.0);
    let cm = CostModel::new(test_costs, mc).expect("random costs are positive");
    let train = data.all_indices();
    RandomInstance { data, train, cm }
}

/// A synthetic stand-in for the diabetes screening table: 768 records,
/// eight binary attributes, 500 negatives and 268 positives. Four
/// attributes carry a noisy class signal, four are junk, so small leaf
/// counts mislead maximum-likelihood estimates the way real data does.
pub fn pima_like() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9d1a);
    let mut examples = Vec::with_capacity(768);
    for i in 0..768u32 {
        let class: u16 = if i < 500 { 0 } else { 1 };
        let mut values = Vec::with_capacity(8);
        for a in 0..8 {
            let p_high = match (a, class) {
                (0..=3, 0) => 0.30,
                (0..=3, 1) => 0.62,
                _ => 0.50,
            };
            values.push(u16::from(rng.gen_bool(p_high)));
        }
        examples.push((values, class));
    }
    let mut data = dataset(examples, &[2; 8], 2);
    data.classes = vec!["negative".to_string(), "positive".to_string()];
    for (a, name) in [
        "pregnancies",
        "glucose",
        "insulin",
        "mass",
        "pressure",
        "skin",
        "pedigree",
        "age",
    ]
    .iter()
    .enumerate()
    {
        data.attributes[a].name = name.to_string();
    }
    data
}
