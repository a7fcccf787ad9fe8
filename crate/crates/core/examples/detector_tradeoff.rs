//! Success probability against single-photon fraction for the two
//! |2> -> |1> schemes when detectors and the inner link are lossy.
//!
//! ```text
//! cargo run --release --example detector_tradeoff
//! ```

use fockconv::tradeoff::{closed_form_optimum, crossover_eta_o, optimize_feedforward, tradeoff_curve};

fn main() -> fockconv::Result<()> {
    let (eta, eta_o) = (0.85, 0.95);
    let curve = tradeoff_curve(eta, eta_o, 11)?;
    println!("eta = {eta}, eta_O = {eta_o}");
    println!("{:>10} {:>12} {:>12}", "P", "p1 single", "p1 ff");
    for (e, f) in curve.elementary.iter().zip(&curve.feedforward) {
        println!(
            "{:>10.4} {:>12.6} {:>12.6}   (ff at P = {:.4})",
            e.probability, e.p1, f.p1, f.probability
        );
    }

    if let Some(cf) = closed_form_optimum(eta, eta_o) {
        let num = optimize_feedforward(eta, eta_o, 2.0 / 3.0)?;
        println!(
            "\nat P = 2/3: closed form T1 = {:.6}, T2 = {:.6}, p1 = {:.6}",
            cf.t1, cf.t2, cf.p1
        );
        println!(
            "            optimizer   T1 = {:.6}, T2 = {:.6}, p1 = {:.6}",
            num.t1, num.t2, num.p1
        );
    }

    println!("\nsmallest eta_O at which feedforward matches the single tap (eta = {eta}):");
    for target in [0.2, 0.4, 0.5] {
        match crossover_eta_o(eta, target)? {
            Some(x) => println!("  P = {target}: eta_O = {x:.4}"),
            None => println!("  P = {target}: never"),
        }
    }

    let mut out = std::io::stdout().lock();
    println!();
    curve.write_csv(&mut out)
}
