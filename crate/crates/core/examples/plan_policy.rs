//! Plans optimal adaptive subtraction schemes and prints their decision trees.
//!
//! ```text
//! cargo run --example plan_policy
//! ```

use fockconv::fock::DetectorModel;
use fockconv::planner::{build_policy, evaluate_policy, PolicyNode};

fn show(node: &PolicyNode, outcome: Option<usize>, depth: usize) {
    let indent = "  ".repeat(depth);
    let label = outcome.map_or("start".to_string(), |o| format!("saw {o}"));
    println!("{indent}{label}: T = {:.6} ({:?})", node.transmittance, node.status);
    for (o, child) in &node.children {
        show(child, Some(*o), depth + 1);
    }
}

fn main() -> fockconv::Result<()> {
    for (m, n, k) in [(2, 1, 2), (3, 2, 2), (4, 2, 3)] {
        let policy = build_policy(m, n, k)?;
        let eval = evaluate_policy(&policy, m, &DetectorModel::ideal())?;
        println!("|{m}> -> |{n}> with {k} stages: P = {:.6}", eval.success_probability);
        show(&policy.root, None, 1);
        println!();
    }

    // the same tree as stored on disk
    println!("{}", serde_json::to_string_pretty(&build_policy(2, 1, 2)?)?);
    Ok(())
}
