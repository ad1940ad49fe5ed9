//! The whole pipeline in one sitting: raw CSV in, evaluated policy out.
//!
//! A repair shop logs four observations per broken appliance and the fault
//! that was eventually confirmed. Measuring an observation costs money
//! (the temperature probe is the expensive one), and shipping the wrong
//! replacement part costs much more. The learned policy decides which
//! observation to buy next, and when to stop and name the fault.
//!
//! Steps: parse the CSV, drop incomplete records, discretize the numeric
//! column, cut a stratified train/test split, run systematic search with
//! Laplace-corrected probabilities, and report costs on the held-out side.

use std::collections::BTreeMap;
use std::io::Cursor;

use diagpol::costs::CostModel;
use diagpol::dataset::{
    discretize, load_csv_reader, make_replicas, preprocess, CsvSchema, TrainFrac,
};
use diagpol::learners::{learn, LearnOptions};
use diagpol::mdp::Estimator;

const RECORDS: &str = "\
power_light,fan,temperature,beep_code,fault
off,stopped,31.5,none,supply
off,stopped,29.0,none,supply
off,stopped,33.2,none,supply
off,spinning,30.1,none,supply
off,stopped,35.8,long,supply
off,stopped,28.4,none,supply
off,stopped,32.0,none,supply
off,stopped,30.7,?,supply
off,stopped,34.1,none,supply
off,stopped,29.9,none,supply
off,stopped,31.1,none,supply
off,stopped,36.0,none,supply
on,stopped,78.2,none,cooling
on,stopped,83.5,none,cooling
on,stopped,76.9,none,cooling
on,stopped,81.0,long,cooling
on,spinning,79.4,none,cooling
on,stopped,85.1,none,cooling
on,stopped,77.7,none,cooling
on,stopped,80.3,none,cooling
on,stopped,?,none,cooling
on,stopped,82.6,none,cooling
on,stopped,75.8,none,cooling
on,stopped,84.0,none,cooling
on,spinning,44.2,long,board
on,spinning,41.8,long,board
on,spinning,46.5,long,board
on,spinning,43.0,long,board
on,spinning,40.9,none,board
on,spinning,45.3,long,board
on,stopped,42.7,long,board
on,spinning,44.8,long,board
on,spinning,41.2,long,board
on,spinning,43.9,long,board
on,spinning,46.0,long,board
on,spinning,42.1,long,board
";

fn main() -> anyhow::Result<()> {
    // Parse and clean. Two records carry a "?" and are dropped.
    let schema = CsvSchema::new("fault");
    let raw = load_csv_reader(Cursor::new(RECORDS), &schema)?;
    let kept = preprocess(&raw, &BTreeMap::new())?;
    println!(
        "parsed {} records, kept {} complete ones",
        raw.records.len(),
        kept.records.len()
    );

    // Discretize: the temperature column is numeric, so it gets cut into
    // two intervals at the threshold that best separates the faults. The
    // categorical columns pass through.
    let data = discretize(&kept, 2)?;
    for attr in &data.attributes {
        if attr.thresholds.is_empty() {
            println!("  {}: {:?}", attr.name, attr.values);
        } else {
            println!(
                "  {}: {:?} (cut at {:?})",
                attr.name, attr.values, attr.thresholds
            );
        }
    }

    // One stratified split: two thirds to learn from, one third held out.
    let replicas = make_replicas(&data, 1, TrainFrac::TWO_THIRDS, 7)?;
    let replica = &replicas[0];
    println!(
        "split: {} training examples, {} test examples",
        replica.train_idx.len(),
        replica.test_idx.len()
    );

    // Observation prices and the price of shipping the wrong part.
    let cm = CostModel::new(
        vec![1.0, 2.0, 6.0, 3.0],
        vec![
            vec![0.0, 50.0, 50.0],
            vec![50.0, 0.0, 50.0],
            vec![50.0, 50.0, 0.0],
        ],
    )?;

    // Systematic search with the Laplace correction.
    let algo = "AO*-L".parse()?;
    let out = learn(algo, &data, &replica.train_idx, &cm, &LearnOptions::default())?;
    let trace = out.trace.as_ref().expect("systematic searches are traced");
    println!(
        "\nlearned {} in {} expansions (converged: {})",
        algo, trace.expansions, trace.converged
    );
    println!(
        "policy asks up to {} tests, depth {}",
        out.policy.n_tests(),
        out.policy.depth()
    );

    let est = Estimator::new(&data, &replica.train_idx, algo.laplace);
    println!(
        "expected cost on training data: {:.3}",
        out.policy.expected_value(&est, &cm)?
    );
    println!(
        "mean cost on held-out data:     {:.3}",
        out.policy.v_test(&data, &replica.test_idx, &cm)?
    );

    // The policy itself, as Graphviz input (pipe through `dot -Tpng`).
    println!("\n{}", out.policy.annotated(&est, &cm)?.to_dot());
    Ok(())
}
