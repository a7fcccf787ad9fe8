//! Maximum conversion probability as a function of the number of stages.
//!
//! ```text
//! cargo run --example pmax_curves
//! ```

use fockconv::planner::PmaxTable;

fn main() -> fockconv::Result<()> {
    let k_max = 9;
    let pairs = [(2, 1), (3, 1), (3, 2), (4, 2), (4, 3), (5, 3)];

    print!("{:>8}", "k");
    for (m, n) in pairs {
        print!("{:>10}", format!("{m}->{n}"));
    }
    println!();
    let tables: Vec<PmaxTable> = pairs
        .iter()
        .map(|&(m, n)| PmaxTable::build(m, n, k_max))
        .collect::<Result<_, _>>()?;
    for k in 1..=k_max {
        print!("{k:>8}");
        for (table, (m, _)) in tables.iter().zip(pairs) {
            print!("{:>10.6}", table.probability(m, k).unwrap());
        }
        println!();
    }

    // one table holds every smaller input too
    println!("\nCSV for |4> -> |2>:");
    tables[3].write_csv(std::io::stdout().lock(), Some(4))?;
    Ok(())
}
