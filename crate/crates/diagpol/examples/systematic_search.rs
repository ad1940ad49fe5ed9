//! Watching the systematic search work: bounds closing, the memory limit,
//! and the three overfitting guards.
//!
//! Every iteration expands one frontier node and re-propagates two bounds
//! at the root: the optimistic value (what the best policy could possibly
//! cost, counting unexplored branches at their admissible estimates) and
//! the realistic value (what the best fully-explored policy does cost).
//! The optimistic value only rises, the realistic value only falls, and
//! the search is done when they meet. Stopping it early, by a memory
//! budget here, still yields the best policy found so far.

use diagpol::aostar::{ao_star, AoConfig, TraceEvent};
use diagpol::costs::CostModel;
use diagpol::dataset::{make_replicas, AttributeKind, AttributeMeta, Dataset, Example, TrainFrac};
use diagpol::learners::{learn, LearnOptions};
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

/// A synthetic appliance-repair domain: four binary symptoms, three
/// faults, and a little label noise so nothing separates perfectly.
fn synth_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.gen_range(0..3u16);
        let mut values = match class {
            0 => vec![0, 0, 0, 0], // supply: power off, fan stopped
            1 => vec![1, 0, 1, 0], // cooling: power on, running hot
            _ => vec![1, 1, 0, 1], // board: fan fine, long beep
        };
        for v in values.iter_mut() {
            if rng.gen_bool(0.08) {
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

fn main() -> anyhow::Result<()> {
    let data = synth_data(90, 11);
    let replicas = make_replicas(&data, 1, TrainFrac::TWO_THIRDS, 2)?;
    let replica = &replicas[0];
    let cm = CostModel::new(
        vec![1.0, 2.0, 6.0, 3.0],
        vec![
            vec![0.0, 60.0, 60.0],
            vec![60.0, 0.0, 60.0],
            vec![60.0, 60.0, 0.0],
        ],
    )?;

    // Plain search, run to convergence. The trace shows the sandwich.
    let cfg = AoConfig::new(false);
    let (policy, trace) = ao_star(&data, &replica.train_idx, &cm, &cfg)?;
    println!("iter  expanded state       root v_opt  root v_real");
    for event in &trace.events {
        if let TraceEvent::Expanded {
            iteration,
            state,
            attribute,
            root_v_opt,
            root_v_real,
            ..
        } = event
        {
            let at = if state.is_empty() { "(root)" } else { state.as_str() };
            println!(
                "{iteration:>4}  {at:<12} x{attribute}   {root_v_opt:>9.4}  {root_v_real:>10.4}"
            );
        }
    }
    println!(
        "converged after {} expansions; policy uses {} tests\n",
        trace.expansions,
        policy.n_tests()
    );

    // The same search against a starvation budget. It refuses the first
    // expansion that would not fit and returns the best complete policy
    // from the graph built so far.
    let mut tight = AoConfig::new(false);
    tight.byte_limit = 6000;
    let (anytime, tight_trace) = ao_star(&data, &replica.train_idx, &cm, &tight)?;
    println!(
        "with a {} byte budget: {} expansions, memory limit hit: {}",
        tight.byte_limit, tight_trace.expansions, tight_trace.memory_limit_hit
    );
    println!(
        "anytime policy still valid: {} tests, V_test {:.3}\n",
        anytime.n_tests(),
        anytime.v_test(&data, &replica.test_idx, &cm)?
    );

    // The regularized family, side by side. SP prunes statistically
    // indistinguishable branches mid-search, ES keeps the snapshot that
    // did best on an internal validation half, PPP contracts the finished
    // policy bottom-up under pessimistic cost bounds.
    println!("variant    tests  depth  V_test");
    for name in ["AO*", "SP", "ES", "PPP", "AO*-L", "SP-L", "ES-L", "PPP-L"] {
        let algo = name.parse()?;
        let out = learn(algo, &data, &replica.train_idx, &cm, &LearnOptions::default())?;
        println!(
            "{:<9}  {:>5}  {:>5}  {:>6.3}",
            name,
            out.policy.n_tests(),
            out.policy.depth(),
            out.policy.v_test(&data, &replica.test_idx, &cm)?
        );
    }
    Ok(())
}
