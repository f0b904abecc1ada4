//! Offline evaluation: NDCG, multi-seed comparisons, task ablations and
//! coefficient curves.

mod experiment;
mod metrics;
mod ndcg;
mod ntc;
mod table;

pub use experiment::{
    compare_configs, ndcg_report, par_map, run_ablation, run_seed, run_seeds, searches_with_any, standard_cells,
    AblationCell, CellSpec, ExperimentData, SeedRun,
};
pub use metrics::{
    compare, evaluate, evaluate_scores, label_ndcg, oracle_scores, random_scores, t_interval, Comparison, EvalReport,
    LabelNdcg, NdcgReport,
};
pub use ndcg::{ndcg_binary, ndcg_from_scores, rank_by_score};
pub use ntc::{is_increasing, is_u_shaped, ntc_csv, ntc_curves, NtcCurve};
pub use table::{ablation_table, comparison_table, eval_table, Table};
