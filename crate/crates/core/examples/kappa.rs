//! Agreement between the two sample annotators under both weightings.

use std::path::Path;

use rag_repair::evalharness::{confusion_matrix, load_annotations, weighted_kappa, CorrectnessLabel, KappaWeights};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let a = load_annotations(&sample.join("annotator_a.jsonl"))?.remove(0);
    let b = load_annotations(&sample.join("annotator_b.jsonl"))?.remove(0);

    let mut out = String::new();
    for weights in [KappaWeights::Linear, KappaWeights::Quadratic] {
        out += &format!("{weights:?}: {:.4}\n", weighted_kappa(&a, &b, weights)?);
    }
    out += &format!("self-agreement: {}\n", weighted_kappa(&a, &a, KappaWeights::Linear)?);
    for (label, row) in CorrectnessLabel::ALL.iter().zip(confusion_matrix(&a, &b)?) {
        out += &format!("{:<10} {row:?}\n", label.name());
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
