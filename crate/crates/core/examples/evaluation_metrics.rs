//! Pearson correlation between strategy scores and target accuracy, and
//! top-k error of predicted model sets.

use std::collections::BTreeSet;

use model_scout::evalbench::{pearson, top_k_error};

fn main() -> model_scout::Result<()> {
    let accuracy = [0.91, 0.84, 0.62, 0.55, 0.40];
    let adaptivity = [0.95, 0.90, 0.55, 0.60, 0.20];
    let js = [0.01, 0.03, 0.12, 0.10, 0.30];
    println!("pearson(adaptivity, accuracy) = {:.3}", pearson(&adaptivity, &accuracy)?);
    println!("pearson(JS, accuracy)         = {:.3}", pearson(&js, &accuracy)?);

    let set = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let predictions = [set(&["B", "C", "D"]), set(&["A", "B", "E"]), set(&["C", "D", "E"])];
    let truths = ["C", "D", "E"];
    println!("top-3 error over {} scenarios = {:.3}", truths.len(), top_k_error(&predictions, &truths, 3)?);
    Ok(())
}
