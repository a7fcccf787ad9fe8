//! Cross-checks exact policy evaluation against seeded trajectory sampling.
//!
//! ```text
//! cargo run --release --example monte_carlo_check
//! ```

use fockconv::fock::DetectorModel;
use fockconv::montecarlo::{estimate_success, trajectories};
use fockconv::planner::{build_policy, evaluate_policy_lossy};

fn main() -> fockconv::Result<()> {
    let trials = 1_000_000;
    let cases = [
        (2, 1, 2, DetectorModel::ideal(), 1.0),
        (2, 1, 2, DetectorModel::inefficient_pnr(0.6)?, 1.0),
        (2, 1, 2, DetectorModel::click_pair(0.9)?, 0.95),
        (3, 2, 2, DetectorModel::ideal(), 1.0),
        (4, 2, 3, DetectorModel::inefficient_pnr(0.8)?, 0.9),
    ];
    println!(
        "{:<12} {:<12} {:>6} {:>10} {:>10} {:>9} {:>7}",
        "scheme", "detector", "eta_O", "exact", "sampled", "SE", "z"
    );
    for (i, (m, n, k, det, eta_o)) in cases.into_iter().enumerate() {
        let policy = build_policy(m, n, k)?;
        let exact = evaluate_policy_lossy(&policy, m, &det, eta_o)?.success_probability;
        let run = estimate_success(&policy, m, &det, eta_o, trials, i as u64)?;
        let e = run.estimate;
        println!(
            "{:<12} {:<12} {:>6} {:>10.6} {:>10.6} {:>9.2e} {:>7.2}",
            format!("({m},{n}|{k})"),
            det.to_string(),
            eta_o,
            exact,
            e.value,
            e.std_error,
            e.z_score(exact)
        );
    }

    println!("\nfirst trajectories of the (2,1|2) scheme with pnr:0.6:");
    let policy = build_policy(2, 1, 2)?;
    let det = DetectorModel::inefficient_pnr(0.6)?;
    for t in trajectories(&policy, 2, &det, 1.0, 5, 42) {
        println!("  {}", serde_json::to_string(&t)?);
    }
    Ok(())
}
