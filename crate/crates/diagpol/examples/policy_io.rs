//! Policies as files: building one by hand, saving, loading, executing,
//! and drawing it.
//!
//! A policy is an ordinary tree naming attributes and values by their
//! dataset labels, so one written by a person works exactly like one a
//! learner produced. Files are versioned JSON and round-trip exactly.

use diagpol::costs::CostModel;
use diagpol::dataset::{AttributeKind, AttributeMeta, Dataset, Example};
use diagpol::mdp::Estimator;
use diagpol::policy::{Branch, Policy, PolicyNode};

fn attribute(name: &str, values: &[&str]) -> AttributeMeta {
    AttributeMeta {
        name: name.to_string(),
        kind: AttributeKind::Discrete,
        values: values.iter().map(|v| v.to_string()).collect(),
        thresholds: Vec::new(),
    }
}

fn main() -> anyhow::Result<()> {
    // A tiny two-symptom domain, written out longhand.
    let data = Dataset {
        attributes: vec![
            attribute("power_light", &["off", "on"]),
            attribute("fan", &["stopped", "spinning"]),
        ],
        classes: vec!["supply".into(), "board".into()],
        examples: vec![
            Example { values: vec![0, 0], class: 0 },
            Example { values: vec![0, 0], class: 0 },
            Example { values: vec![0, 1], class: 0 },
            Example { values: vec![1, 1], class: 1 },
            Example { values: vec![1, 1], class: 1 },
            Example { values: vec![1, 0], class: 1 },
        ],
    };
    let cm = CostModel::new(vec![1.0, 2.0], vec![vec![0.0, 40.0], vec![40.0, 0.0]])?;

    // Check the power light; if it is on, listen to the fan too.
    let policy = Policy {
        root: PolicyNode::test(
            "power_light",
            vec![
                Branch::new("off", PolicyNode::leaf("supply")),
                Branch::new(
                    "on",
                    PolicyNode::test(
                        "fan",
                        vec![
                            Branch::new("stopped", PolicyNode::leaf("supply")),
                            Branch::new("spinning", PolicyNode::leaf("board")),
                        ],
                    ),
                ),
            ],
        ),
    };

    // Executing a policy on one example yields the diagnosis it reaches
    // and the full cost of the path: tests bought plus the misdiagnosis
    // cost against the example's true class.
    let case = &data.examples[5]; // power on, fan stopped, truly "board"
    let (diagnosis, cost) = policy.execute(&data, case, &cm)?;
    println!(
        "case (power on, fan stopped): diagnosed {:?}, total cost {}",
        data.classes[diagnosis], cost
    );

    // Round trip through a file: byte-exact.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("handmade.json");
    policy.save(&path)?;
    let loaded = Policy::load(&path)?;
    assert_eq!(loaded, policy);
    println!("\nsaved and reloaded identically; the file says:");
    println!("{}", policy.to_json());

    // The Graphviz view. Annotation fills in branch probabilities and
    // leaf costs from an estimator, which makes the drawing legible.
    let all = data.all_indices();
    let est = Estimator::new(&data, &all, false);
    println!("{}", policy.annotated(&est, &cm)?.to_dot());

    // Mistakes are caught at load and compile time, not mid-execution:
    // a policy naming an attribute the dataset lacks refuses to run.
    let bogus = Policy {
        root: PolicyNode::test(
            "voltage",
            vec![
                Branch::new("low", PolicyNode::leaf("supply")),
                Branch::new("high", PolicyNode::leaf("board")),
            ],
        ),
    };
    let err = bogus.execute(&data, case, &cm).unwrap_err();
    println!("bogus policy rejected: {err}");
    Ok(())
}
