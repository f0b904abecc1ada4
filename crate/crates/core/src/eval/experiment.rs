use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compare, evaluate, t_interval, Comparison, NdcgReport};
use crate::domain::{filter_training_searches, split_by_guest, Dataset, FilterReport, Milestone};
use crate::error::{Error, Result};
use crate::model::{train, JourneyRanker, ModelConfig, TrainConfig, TrainHistory};

/// Guest-disjoint train/eval split; the training side keeps only journeys
/// that reached a payment page.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub eval: Dataset,
    pub filter: FilterReport,
}

impl ExperimentData {
    pub fn prepare(data: &Dataset, train_percent: u64) -> Self {
        let (train, eval) = split_by_guest(data, train_percent);
        let (train, filter) = filter_training_searches(&train);
        Self { train, eval, filter }
    }

    /// Eval searches with at least one uncancelled booking.
    pub fn eval_searches(&self) -> usize {
        self.eval.searches().filter(|s| s.has_label(Milestone::Unc)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub ndcg: f64,
    pub parameter_count: usize,
    pub history: TrainHistory,
}

/// Trains `config` with its model seed replaced by `seed` and scores the
/// eval split.
pub fn run_seed(config: &TrainConfig, exp: &ExperimentData, seed: u64) -> Result<(JourneyRanker, SeedRun)> {
    let mut cfg = config.clone();
    cfg.model.seed = seed;
    let (model, history) = train(&cfg, &exp.train)?;
    let report = evaluate(&model, &exp.eval)?;
    let ndcg = report
        .overall
        .mean
        .ok_or_else(|| Error::Contract("eval split has no uncancelled bookings".into()))?;
    let run = SeedRun {
        seed,
        ndcg,
        parameter_count: model.parameter_count(),
        history,
    };
    Ok((model, run))
}

/// Runs `f` over `items` on `jobs` threads (sequentially for `jobs <= 1`),
/// keeping input order.
pub fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

pub fn run_seeds(config: &TrainConfig, exp: &ExperimentData, seeds: &[u64], jobs: usize) -> Result<Vec<SeedRun>> {
    par_map(jobs, seeds, |&s| run_seed(config, exp, s).map(|(_, r)| r))
}

pub fn ndcg_report(runs: &[SeedRun], n_searches: usize) -> Result<NdcgReport> {
    NdcgReport::from_seeds(runs.iter().map(|r| r.ndcg).collect(), n_searches)
}

/// Paired comparison of two training configs over the same seeds and data.
pub fn compare_configs(
    a: &TrainConfig,
    b: &TrainConfig,
    exp: &ExperimentData,
    seeds: &[u64],
    jobs: usize,
) -> Result<Comparison> {
    if seeds.len() < 2 {
        return Err(Error::Contract(format!(
            "a confidence interval needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let jobs_list: Vec<(usize, u64)> = seeds.iter().flat_map(|&s| [(0, s), (1, s)]).collect();
    let ndcg = par_map(jobs, &jobs_list, |&(side, s)| {
        run_seed(if side == 0 { a } else { b }, exp, s).map(|(_, r)| r.ndcg)
    })?;
    let na: Vec<f64> = ndcg.iter().step_by(2).copied().collect();
    let nb: Vec<f64> = ndcg.iter().skip(1).step_by(2).copied().collect();
    compare(seeds, &na, &nb, exp.eval_searches())
}

/// One named set of base tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub name: String,
    pub tasks: Vec<Milestone>,
}

/// Unc only, req+book+unc, c+unc, and all six funnel tasks.
pub fn standard_cells() -> Vec<CellSpec> {
    use Milestone::*;
    [
        ("unc", vec![Unc]),
        ("req+book+unc", vec![Req, Book, Unc]),
        ("c+unc", vec![C, Unc]),
        ("all-6", Milestone::CHAIN.to_vec()),
    ]
    .into_iter()
    .map(|(n, t)| CellSpec {
        name: n.to_string(),
        tasks: t,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub tasks: Vec<Milestone>,
    pub per_seed: Vec<f64>,
    pub mean_ndcg: f64,
    /// Paired mean NDCG difference against the first cell.
    pub delta_mean: f64,
    pub ci_half_width: f64,
    pub relative_percent: f64,
    pub parameter_count: usize,
    pub parameter_delta: i64,
    /// Training searches with a positive for any of the cell's tasks.
    pub searches: usize,
    pub search_delta: i64,
}

/// Training searches that carry a positive for any of `tasks`.
pub fn searches_with_any(data: &Dataset, tasks: &[Milestone]) -> usize {
    data.searches().filter(|s| tasks.iter().any(|&t| s.has_label(t))).count()
}

/// Trains a base-only model per cell and seed. The first cell is the
/// reference every delta is measured against.
pub fn run_ablation(
    base: &TrainConfig,
    exp: &ExperimentData,
    cells: &[CellSpec],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<AblationCell>> {
    if cells.is_empty() {
        return Err(Error::config("cells", "at least one cell is required"));
    }
    if seeds.len() < 2 {
        return Err(Error::Contract(format!(
            "a confidence interval needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let configs: Vec<TrainConfig> = cells
        .iter()
        .map(|c| {
            let mut cfg = base.clone();
            cfg.model = ModelConfig {
                base_tasks: c.tasks.clone(),
                twiddler_tasks: Vec::new(),
                combination: false,
                ..base.model.clone()
            };
            cfg.model.validate().map_err(|e| match e {
                Error::Config { key, message } => Error::config(key, format!("cell `{}`: {message}", c.name)),
                other => other,
            })?;
            Ok(cfg)
        })
        .collect::<Result<_>>()?;
    let work: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let runs = par_map(jobs, &work, |&(c, s)| run_seed(&configs[c], exp, s).map(|(_, r)| r))?;
    let per_cell: Vec<&[SeedRun]> = runs.chunks(seeds.len()).collect();
    let reference = per_cell[0];
    let ref_params = reference[0].parameter_count as i64;
    let ref_searches = searches_with_any(&exp.train, &cells[0].tasks) as i64;
    let ref_mean = reference.iter().map(|r| r.ndcg).sum::<f64>() / seeds.len() as f64;
    cells
        .iter()
        .zip(&per_cell)
        .map(|(cell, runs)| {
            let per_seed: Vec<f64> = runs.iter().map(|r| r.ndcg).collect();
            let deltas: Vec<f64> = per_seed.iter().zip(reference).map(|(a, b)| a - b.ndcg).collect();
            let (delta_mean, ci_half_width) = t_interval(&deltas)?;
            let searches = searches_with_any(&exp.train, &cell.tasks);
            Ok(AblationCell {
                name: cell.name.clone(),
                tasks: cell.tasks.clone(),
                mean_ndcg: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                per_seed,
                delta_mean,
                ci_half_width,
                relative_percent: if ref_mean == 0.0 { 0.0 } else { 100.0 * delta_mean / ref_mean },
                parameter_count: runs[0].parameter_count,
                parameter_delta: runs[0].parameter_count as i64 - ref_params,
                searches,
                search_delta: searches as i64 - ref_searches,
            })
        })
        .collect()
}
