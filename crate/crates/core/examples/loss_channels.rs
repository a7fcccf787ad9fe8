//! Photon-number primitives: splitters, loss and the three detector models.
//!
//! ```text
//! cargo run --example loss_channels
//! ```

use fockconv::fock::{apply_loss, detect, splitting_distribution, DetectorModel, PhotonNumberMixture};

fn main() -> fockconv::Result<()> {
    println!("|3> on a T = 1/3 splitter:");
    for o in splitting_distribution(3, 1.0 / 3.0)? {
        println!(
            "  {} transmitted, {} reflected: {:.6}",
            o.transmitted, o.reflected, o.probability
        );
    }

    let two = PhotonNumberMixture::fock(2)?;
    let lossy = apply_loss(&two, 0.8)?;
    println!("\n|2> after 80% transmission: {}", serde_json::to_string(&lossy)?);
    println!("mean photon number {:.3}", lossy.mean());

    let detectors = [
        DetectorModel::ideal(),
        DetectorModel::inefficient_pnr(0.8)?,
        DetectorModel::click_pair(1.0)?,
    ];
    for det in detectors {
        println!("\n{det} looking at |2>:");
        for d in detect(&two, &det) {
            println!(
                "  outcome {} with probability {:.4}, absorbed {}",
                d.outcome,
                d.probability,
                serde_json::to_string(&d.removed)?
            );
        }
    }
    Ok(())
}
