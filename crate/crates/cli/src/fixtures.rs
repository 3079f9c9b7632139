//! The built-in problem corpus.

use crate::problem::{parse_samples_csv, Instance, ProblemFile};

/// Ids accepted by `reproduce`, in run order.
pub const IDS: &[&str] = &["ex6.2", "ex6.3", "ex6.4", "ex6.5", "ex6.6", "ex6.7", "ex6.8", "portfolio", "toy"];

fn json(id: &str) -> Option<&'static str> {
    Some(match id {
        "ex6.2" => include_str!("../fixtures/ex6.2.json"),
        "ex6.3" => include_str!("../fixtures/ex6.3.json"),
        "ex6.4" => include_str!("../fixtures/ex6.4.json"),
        "ex6.5" => include_str!("../fixtures/ex6.5.json"),
        "ex6.6" => include_str!("../fixtures/ex6.6.json"),
        "ex6.7" => include_str!("../fixtures/ex6.7.json"),
        "ex6.8" => include_str!("../fixtures/ex6.8.json"),
        "portfolio" => include_str!("../fixtures/portfolio.json"),
        "toy" => include_str!("../fixtures/toy.json"),
        _ => return None,
    })
}

fn csv(name: &str) -> Option<&'static str> {
    match name {
        "ex6.6_samples.csv" => Some(include_str!("../fixtures/ex6.6_samples.csv")),
        _ => None,
    }
}

pub fn problem(id: &str) -> anyhow::Result<ProblemFile> {
    let text = json(id).ok_or_else(|| anyhow::anyhow!("unknown fixture '{id}' (known: {})", IDS.join(", ")))?;
    Ok(ProblemFile::from_json_str(text)?)
}

/// Resolves the samples a fixture refers to.
pub fn instantiate(problem: ProblemFile) -> anyhow::Result<Instance> {
    let samples = match &problem.random.samples_csv {
        Some(name) => {
            let text = csv(name).ok_or_else(|| anyhow::anyhow!("fixture samples '{name}' are not bundled"))?;
            Some(parse_samples_csv(text)?)
        }
        None => None,
    };
    Instance::new(problem, samples)
}

pub fn load(id: &str) -> anyhow::Result<Instance> {
    instantiate(problem(id)?)
}
