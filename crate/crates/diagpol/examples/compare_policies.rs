//! Deciding whether one policy is actually better: the bootstrap cost
//! test.
//!
//! Mean test-set costs alone can differ by luck. The comparison here
//! resamples the per-example cost differences a thousand times and reads
//! a 95% confidence interval off the middle of the sorted means: an
//! interval entirely below zero is a win for the first policy, entirely
//! above is a loss, and anything straddling zero is a tie. Because the
//! resampler draws example indices, comparing B against A with the same
//! seed negates the interval exactly; no game is ever scored twice with
//! two different answers.

use diagpol::costs::CostModel;
use diagpol::dataset::{make_replicas, AttributeKind, AttributeMeta, Dataset, Example, TrainFrac};
use diagpol::eval::{bdelta_cost, chess_score, Verdict, DEFAULT_BOOTSTRAP_B};
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

fn main() -> anyhow::Result<()> {
    let data = synth_data(150, 5);
    let cm = CostModel::new(
        vec![1.0, 2.0, 6.0, 3.0],
        vec![
            vec![0.0, 60.0, 60.0],
            vec![60.0, 0.0, 60.0],
            vec![60.0, 60.0, 0.0],
        ],
    )?;
    let replicas = make_replicas(&data, 5, TrainFrac::TWO_THIRDS, 13)?;
    let opts = LearnOptions::default();
    let systematic = "AO*-L".parse()?;
    let greedy = "Nor-L".parse()?;

    // One game per replica, accumulated chess-style: a win is a point,
    // a tie is half.
    let mut outcomes = Vec::new();
    for replica in &replicas {
        let p1 = learn(systematic, &data, &replica.train_idx, &cm, &opts)?.policy;
        let p2 = learn(greedy, &data, &replica.train_idx, &cm, &opts)?.policy;
        let outcome = bdelta_cost(
            &p1,
            &p2,
            &data,
            &replica.test_idx,
            &cm,
            DEFAULT_BOOTSTRAP_B,
            1000 + u64::from(replica.id),
        )?;
        println!(
            "replica {}: {:?} for {systematic} (CI [{:+.3}, {:+.3}] on cost difference)",
            replica.id, outcome.verdict, outcome.ci.0, outcome.ci.1
        );
        outcomes.push(outcome);
    }
    println!(
        "{systematic} scores {:.1} of {} against {greedy} (tie-score {:.1})\n",
        chess_score(&outcomes),
        outcomes.len(),
        0.5 * outcomes.len() as f64
    );

    // A policy against itself: every difference is exactly zero, so the
    // interval is (0, 0) and the verdict a tie, never a spurious win.
    let replica = &replicas[0];
    let p = learn(systematic, &data, &replica.train_idx, &cm, &opts)?.policy;
    let self_game = bdelta_cost(&p, &p, &data, &replica.test_idx, &cm, DEFAULT_BOOTSTRAP_B, 1)?;
    assert_eq!(self_game.verdict, Verdict::Tie);
    assert_eq!(self_game.ci, (0.0, 0.0));
    println!("self-comparison: {:?} with CI {:?}", self_game.verdict, self_game.ci);

    // Order does not matter: the mirrored game has the negated interval.
    let q = learn(greedy, &data, &replica.train_idx, &cm, &opts)?.policy;
    let fwd = bdelta_cost(&p, &q, &data, &replica.test_idx, &cm, DEFAULT_BOOTSTRAP_B, 77)?;
    let rev = bdelta_cost(&q, &p, &data, &replica.test_idx, &cm, DEFAULT_BOOTSTRAP_B, 77)?;
    assert_eq!(fwd.ci.0, -rev.ci.1);
    assert_eq!(fwd.ci.1, -rev.ci.0);
    println!(
        "mirrored: [{:+.3}, {:+.3}] vs [{:+.3}, {:+.3}]",
        fwd.ci.0, fwd.ci.1, rev.ci.0, rev.ci.1
    );
    Ok(())
}
