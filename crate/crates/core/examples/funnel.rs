//! Prints the funnel report of a generated dataset.
//!
//! `cargo run --release -p journey-ranker --example funnel -- [n_guests] [seed]`

use journey_ranker::domain::{validate_dataset, Milestone};
use journey_ranker::sim::{generate, summarize, GeneratorConfig};

fn main() -> journey_ranker::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_guests = args.next().and_then(|a| a.parse().ok()).unwrap_or(5_000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(17);
    let cfg = GeneratorConfig {
        n_guests,
        seed,
        ..Default::default()
    };
    let (data, _) = generate(&cfg)?;
    let report = summarize(&data);
    for c in &report.milestones {
        println!("{:>5} {:>8} {:.4}", c.milestone, c.impressions, c.rate);
    }
    println!("outcomes {:?}", report.outcomes);
    println!("pp-filter retains {:.3}", report.pp_filter_retained_fraction);
    let req = report.count(Milestone::Req) as f64;
    let book = report.count(Milestone::Book) as f64;
    println!("rej | req  = {:.4}", report.count(Milestone::Rej) as f64 / req);
    println!("cbh | book = {:.4}", report.count(Milestone::Cbh) as f64 / book);
    println!("cbg | book = {:.4}", report.count(Milestone::Cbg) as f64 / book);
    println!("violations = {}", validate_dataset(&data).total_violations());
    Ok(())
}
