//! The three greedy baselines, and what cost-sensitivity buys.
//!
//! Nor grows a tree by information gain per unit test cost and labels
//! leaves with the most likely class; it never looks at the misdiagnosis
//! matrix, so its tree is the same whether a mistake costs 5 or 500.
//! MC-N grows the identical tree but diagnoses and prunes by expected
//! cost, and the value-of-information learner only keeps testing while
//! one more test is expected to pay for itself. Watch how the latter two
//! adapt when mistakes get expensive and Nor does not.

use diagpol::costs::CostModel;
use diagpol::dataset::{make_replicas, AttributeKind, AttributeMeta, Dataset, Example, TrainFrac};
use diagpol::greedy::{grow_mcn, grow_nor, grow_voi, GreedyConfig};
use diagpol::policy::Policy;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn attribute(name: &str, values: &[&str]) -> AttributeMeta {
    AttributeMeta {
        name: name.to_string(),
        kind: AttributeKind::Discrete,
        values: values.iter().map(|v| v.to_string()).collect(),
        thresholds: Vec::new(),
    }
}

fn synth_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.gen_range(0..3u16);
        let mut values = match class {
            0 => vec![0, 0, 0, 0],
            1 => vec![1, 0, 1, 0],
            _ => vec![1, 1, 0, 1],
        };
        for v in values.iter_mut() {
            if rng.gen_bool(0.1) {
                *v = 1 - *v;
            }
        }
        examples.push(Example { values, class });
    }
    Dataset {
        attributes: vec![
            attribute("power_light", &["off", "on"]),
            attribute("fan", &["stopped", "spinning"]),
            attribute("temperature", &["normal", "high"]),
            attribute("beep_code", &["none", "long"]),
        ],
        classes: vec!["supply".into(), "cooling".into(), "board".into()],
        examples,
    }
}

fn uniform_mc(k: usize, cost: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.0 } else { cost }).collect())
        .collect()
}

fn main() -> anyhow::Result<()> {
    let data = synth_data(120, 23);
    let replicas = make_replicas(&data, 1, TrainFrac::TWO_THIRDS, 9)?;
    let replica = &replicas[0];
    let cfg = GreedyConfig::new(false);

    // Same test prices, two worlds: cheap mistakes and ruinous ones.
    let test_costs = vec![1.0, 2.0, 6.0, 3.0];
    let levels = [
        ("mistakes cost 5", CostModel::new(test_costs.clone(), uniform_mc(3, 5.0))?),
        ("mistakes cost 500", CostModel::new(test_costs.clone(), uniform_mc(3, 500.0))?),
    ];

    for (label, cm) in &levels {
        println!("--- {label} ---");
        println!("learner  tests  depth  V_test");
        let grown: [(&str, Policy); 3] = [
            ("Nor", grow_nor(&data, &replica.train_idx, cm, &cfg)),
            ("MC-N", grow_mcn(&data, &replica.train_idx, cm, &cfg)),
            ("VOI", grow_voi(&data, &replica.train_idx, cm, &cfg)),
        ];
        for (name, policy) in &grown {
            println!(
                "{:<7}  {:>5}  {:>5}  {:>7.3}",
                name,
                policy.n_tests(),
                policy.depth(),
                policy.v_test(&data, &replica.test_idx, cm)?
            );
        }
        println!();
    }

    // When a mistake is nearly free, buying even one cheap test is a
    // waste; the value of information says so and diagnoses immediately.
    let stingy = CostModel::new(test_costs, uniform_mc(3, 0.5))?;
    let voi = grow_voi(&data, &replica.train_idx, &stingy, &cfg);
    println!(
        "with mistakes at 0.5, VOI asks {} tests and just diagnoses",
        voi.n_tests()
    );
    Ok(())
}
