//! Trains the four headline configurations on the golden world and prints
//! eval NDCG per seed, then the paired full-vs-baseline interval.
//!
//! `cargo run --release -p journey-ranker --example golden -- [seeds] [epochs]`

use std::time::Instant;

use journey_ranker::domain::Milestone;
use journey_ranker::eval::{compare, evaluate_scores, oracle_scores, run_seed, ExperimentData};
use journey_ranker::model::{ModelConfig, TrainConfig};
use journey_ranker::sim::{generate, GeneratorConfig};

fn main() -> journey_ranker::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let (data, world) = generate(&GeneratorConfig::golden())?;
    let exp = ExperimentData::prepare(&data, 80);
    let oracle = evaluate_scores(&exp.eval, &oracle_scores(&world, &exp.eval))?;
    println!(
        "searches {} (train {}, eval {} with unc), oracle ndcg {:.5}",
        data.n_searches(),
        exp.train.n_searches(),
        exp.eval_searches(),
        oracle.overall.mean.unwrap_or(f64::NAN)
    );
    let configs = [
        ("baseline", ModelConfig::baseline()),
        ("c+unc", ModelConfig::base_only(&[Milestone::C, Milestone::Unc])),
        ("all-6", ModelConfig::base_only(&Milestone::CHAIN)),
        ("full", ModelConfig::full()),
    ];
    let seed_list: Vec<u64> = (0..seeds).collect();
    let mut ndcg = vec![Vec::new(); configs.len()];
    for &seed in &seed_list {
        for (k, (name, m)) in configs.iter().enumerate() {
            let cfg = TrainConfig {
                model: m.clone(),
                epochs,
                ..Default::default()
            };
            let t = Instant::now();
            let (_, run) = run_seed(&cfg, &exp, seed)?;
            println!("seed {seed} {name:>8} ndcg {:.5}  {:.1}s", run.ndcg, t.elapsed().as_secs_f64());
            ndcg[k].push(run.ndcg);
        }
    }
    for ((name, _), v) in configs.iter().zip(&ndcg) {
        println!("{name:>8} mean {:.5}", v.iter().sum::<f64>() / v.len() as f64);
    }
    if seeds >= 2 {
        let c = compare(&seed_list, &ndcg[3], &ndcg[0], exp.eval_searches())?;
        println!("full - baseline {:+.5}, 95% CI [{:+.5}, {:+.5}]", c.mean_delta, c.ci_low, c.ci_high);
    }
    Ok(())
}
