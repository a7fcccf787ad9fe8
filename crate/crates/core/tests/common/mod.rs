//! Reference computations shared by the integration tests. None of them
//! call the planner's root finder.
#![allow(dead_code)]

use fockconv::fock::DetectorModel;
use fockconv::planner::{evaluate_policy, NodeStatus, Policy, PolicyNode};

/// Grid search with step 1e-3 over `[0, 1]`, then golden-section refinement
/// inside the best cell's neighbourhood.
pub fn maximize_unit(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let steps = 1000;
    let mut best = (0.0, f(0.0));
    for i in 1..=steps {
        let x = i as f64 / steps as f64;
        let y = f(x);
        if y > best.1 {
            best = (x, y);
        }
    }
    let (mut a, mut b) = ((best.0 - 1e-3).max(0.0), (best.0 + 1e-3).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    let y = f(x);
    if y > best.1 {
        (x, y)
    } else {
        best
    }
}

fn active_histories(node: &PolicyNode, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if node.status != NodeStatus::Active {
        return;
    }
    for (outcome, child) in &node.children {
        prefix.push(*outcome);
        active_histories(child, prefix, out);
        prefix.pop();
    }
    out.push(prefix.clone());
}

fn node_mut<'a>(root: &'a mut PolicyNode, history: &[usize]) -> &'a mut PolicyNode {
    history
        .iter()
        .fold(root, |node, outcome| node.children.get_mut(outcome).unwrap())
}

/// Best adaptive `|m⟩ → |n⟩` success probability with `k` stages, found by
/// tuning every node of the full outcome tree with [`maximize_unit`] on the
/// exact policy evaluation. Nodes are visited children first; with ideal
/// detectors the photon number at a node is fixed by its history, so one
/// pass reaches the optimum.
pub fn grid_search_pmax(m: usize, n: usize, k: usize) -> (f64, Policy) {
    let mut policy = Policy::fixed(m, n, &vec![0.5; k]).unwrap();
    let mut order = Vec::new();
    active_histories(&policy.root, &mut Vec::new(), &mut order);
    let ideal = DetectorModel::ideal();
    for history in order {
        let (t, _) = maximize_unit(|t| {
            let mut trial = policy.clone();
            node_mut(&mut trial.root, &history).transmittance = t;
            evaluate_policy(&trial, m, &ideal).unwrap().success_probability
        });
        node_mut(&mut policy.root, &history).transmittance = t;
    }
    let p = evaluate_policy(&policy, m, &ideal).unwrap().success_probability;
    (p, policy)
}

/// Binomial coefficient as `f64`, by the multiplicative formula.
pub fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
