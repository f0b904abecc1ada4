use std::io::Write;
use std::path::Path;

use journey_ranker::domain::{validate_dataset, Dataset, DAYS_AHEAD, NUM_PREVIOUS_SEARCHES};
use journey_ranker::eval::{
    ablation_table, compare_configs, comparison_table, eval_table, evaluate, evaluate_scores, ntc_csv, ntc_curves,
    oracle_scores, run_ablation, standard_cells, EvalReport, ExperimentData, Table,
};
use journey_ranker::model::{train, JourneyRanker, TrainConfig};
use journey_ranker::sim::{ctr_rejection_correlation, generate, summarize, GeneratorConfig, WorldTruth};
use journey_ranker::Error;
use serde::Serialize;
use serde_json::json;

use crate::manifest::{self, FileRecord, Outputs};
use crate::{config, Cli, CliError, Command, Preset, SplitArgs, TrainArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen { config, golden, guests } => gen(cli, config.as_deref(), *golden, *guests),
        Command::Validate { path, manifest } => validate(cli, path, *manifest),
        Command::Train { train, split } => train_cmd(cli, train, split),
        Command::Eval {
            model,
            world,
            split,
            all,
        } => eval_cmd(cli, model.as_deref(), world.as_deref(), split, *all),
        Command::Compare {
            config_a,
            config_b,
            preset_a,
            preset_b,
            epochs,
            seeds,
            split,
        } => {
            let a = train_config(cli, config_a.as_deref(), *preset_a, *epochs)?;
            let b = train_config(cli, config_b.as_deref(), *preset_b, *epochs)?;
            compare_cmd(cli, (a, config_a.as_deref()), (b, config_b.as_deref()), *seeds, split)
        }
        Command::Ablate {
            config,
            epochs,
            seeds,
            split,
        } => {
            let base = train_config(cli, config.as_deref(), Preset::Baseline, *epochs)?;
            ablate_cmd(cli, base, config.as_deref(), *seeds, split)
        }
        Command::Ntc {
            model,
            feature,
            buckets,
            split,
            all,
        } => ntc_cmd(cli, model, feature, *buckets, split, *all),
    }
}

fn out_dir<'a>(cli: &'a Cli, command: &str) -> Result<&'a Path, CliError> {
    cli.out
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("`{command}` writes artifacts and needs --out <DIR>")))
}

fn emit<T: Serialize>(cli: &Cli, value: &T, table: impl FnOnce() -> String) -> Result<(), CliError> {
    let text = if cli.json {
        serde_json::to_string_pretty(value).map_err(Error::from)? + "\n"
    } else {
        table()
    };
    // a closed pipe (`| head`) is not an error
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Usage(format!("cannot write output: {e}"))),
        _ => Ok(()),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    Ok(serde_json::to_value(v).map_err(Error::from)?)
}

/// Loads and validates a dataset; any violation rejects it.
fn load_dataset(path: &Path) -> Result<(Dataset, FileRecord), CliError> {
    let data = Dataset::load(path).map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", path.display())),
        other => CliError::Core(other),
    })?;
    let report = validate_dataset(&data);
    if !report.accepted() {
        return Err(CliError::Rejected(format!(
            "{} failed validation with {} violations: {}",
            path.display(),
            report.total_violations(),
            report.examples.join("; ")
        )));
    }
    Ok((data, manifest::record(path)?))
}

/// Precedence: flag, then config file, then preset defaults.
fn train_config(cli: &Cli, path: Option<&Path>, preset: Preset, epochs: Option<usize>) -> Result<TrainConfig, CliError> {
    let mut cfg = match path {
        Some(p) => config::load::<TrainConfig>(Some(p))?.0,
        None => TrainConfig {
            model: preset.model(),
            ..Default::default()
        },
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = cli.seed {
        cfg.model.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_inputs(paths: &[Option<&Path>]) -> Result<Vec<FileRecord>, CliError> {
    paths
        .iter()
        .flatten()
        .map(|p| manifest::record(&config::resolve(p)))
        .collect()
}

fn gen(cli: &Cli, path: Option<&Path>, golden: bool, guests: Option<usize>) -> Result<(), CliError> {
    let (mut cfg, resolved) = config::load::<GeneratorConfig>(path)?;
    if golden {
        cfg = GeneratorConfig::golden();
    }
    if let Some(g) = guests {
        cfg.n_guests = g;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = out_dir(cli, "gen")?;
    let (data, world) = generate(&cfg)?;
    let funnel = summarize(&data);
    let summary = json!({
        "funnel": funnel,
        "ctr_rejection_correlation": ctr_rejection_correlation(&data),
    });

    let mut out = Outputs::new(dir)?;
    out.write("dataset.jsonl", &data.to_jsonl_bytes())?;
    out.write_json("world.json", &world)?;
    out.write_json("summary.json", &summary)?;
    let inputs = resolved.map(|p| manifest::record(&p)).transpose()?.into_iter().collect();
    out.finish("gen", to_value(&cfg)?, vec![cfg.seed], inputs)?;

    emit(cli, &summary, || {
        let mut t = Table::new(&["milestone", "impressions", "rate"]);
        for m in &funnel.milestones {
            t.push(vec![m.milestone.to_string(), m.impressions.to_string(), format!("{:.5}", m.rate)]);
        }
        format!(
            "{} journeys, {} searches, {} impressions\n{t}",
            funnel.journeys, funnel.searches, funnel.impressions
        )
    })
}

fn validate(cli: &Cli, path: &Path, is_manifest: bool) -> Result<(), CliError> {
    if is_manifest {
        let bad = manifest::verify(path)?;
        emit(cli, &json!({ "mismatched": bad }), || {
            if bad.is_empty() {
                "all recorded outputs match their hashes\n".to_string()
            } else {
                format!("hash mismatch: {}\n", bad.join(", "))
            }
        })?;
        return if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Rejected(format!("{} outputs do not match the manifest", bad.len())))
        };
    }
    let data = Dataset::load(path).map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", path.display())),
        other => CliError::Core(other),
    })?;
    let report = validate_dataset(&data);
    emit(cli, &report, || {
        let mut s = format!(
            "{} journeys, {} searches, {} impressions\n",
            report.journeys, report.searches, report.impressions
        );
        if report.accepted() {
            s.push_str("accepted\n");
        } else {
            for (k, n) in &report.violations {
                s.push_str(&format!("{k}: {n}\n"));
            }
            for e in &report.examples {
                s.push_str(&format!("  {e}\n"));
            }
        }
        s
    })?;
    if report.accepted() {
        Ok(())
    } else {
        Err(CliError::Rejected(format!("{} violations", report.total_violations())))
    }
}

fn train_cmd(cli: &Cli, args: &TrainArgs, split: &SplitArgs) -> Result<(), CliError> {
    let cfg = train_config(cli, args.config.as_deref(), args.preset, args.epochs)?;
    let dir = out_dir(cli, "train")?;
    let (data, data_rec) = load_dataset(&split.data)?;
    let exp = ExperimentData::prepare(&data, split.train_percent);
    if let Some(w) = &exp.filter.warning {
        return Err(CliError::Rejected(w.clone()));
    }
    let (model, history) = train(&cfg, &exp.train)?;

    let mut out = Outputs::new(dir)?;
    model.save(dir, "model")?;
    out.note("model.json")?;
    out.note("model.bin")?;
    out.write("history.csv", history.to_csv().as_bytes())?;
    let mut inputs = vec![data_rec];
    inputs.extend(config_inputs(&[args.config.as_deref()])?);
    let resolved = json!({ "train": cfg, "train_percent": split.train_percent, "filter": exp.filter });
    out.finish("train", resolved, vec![cfg.model.seed], inputs)?;

    emit(cli, &history, || {
        let mut t = Table::new(&["epoch", "base", "twiddler", "combination", "total"]);
        for e in &history.epochs {
            t.push(vec![
                e.epoch.to_string(),
                format!("{:.6}", e.base),
                format!("{:.6}", e.twiddler),
                format!("{:.6}", e.combination),
                format!("{:.6}", e.total),
            ]);
        }
        format!("{} parameters\n{t}", model.parameter_count())
    })
}

fn eval_split(data: &Dataset, split: &SplitArgs, all: bool) -> Dataset {
    if all {
        data.clone()
    } else {
        ExperimentData::prepare(data, split.train_percent).eval
    }
}

fn check_world(world: &WorldTruth, data: &Dataset) -> Result<(), CliError> {
    let dim = world.features(0).len();
    if dim != data.schema.listing_dim() {
        return Err(Error::SchemaMismatch {
            expected: format!("{dim} listing features"),
            found: format!("{}", data.schema.listing_dim()),
        }
        .into());
    }
    if let Some(bad) = data.impressions().find(|i| i.listing_id as usize >= world.n_listings()) {
        return Err(Error::SchemaMismatch {
            expected: format!("listing ids below {}", world.n_listings()),
            found: format!("listing {}", bad.listing_id),
        }
        .into());
    }
    Ok(())
}

fn eval_cmd(cli: &Cli, model: Option<&Path>, world: Option<&Path>, split: &SplitArgs, all: bool) -> Result<(), CliError> {
    let (data, data_rec) = load_dataset(&split.data)?;
    let eval_data = eval_split(&data, split, all);
    let (report, source): (EvalReport, &Path) = match (model, world) {
        (Some(m), _) => {
            let ranker = JourneyRanker::load(m)?;
            (evaluate(&ranker, &eval_data)?, m)
        }
        (None, Some(w)) => {
            let bytes = std::fs::read(w).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", w.display())))?;
            let truth: WorldTruth = serde_json::from_slice(&bytes).map_err(Error::from)?;
            check_world(&truth, &eval_data)?;
            (evaluate_scores(&eval_data, &oracle_scores(&truth, &eval_data))?, w)
        }
        (None, None) => return Err(CliError::Usage("eval needs --model or --world".into())),
    };
    if let Some(dir) = &cli.out {
        let mut out = Outputs::new(dir)?;
        out.write_json("eval.json", &report)?;
        let resolved = json!({ "train_percent": split.train_percent, "all": all });
        out.finish("eval", resolved, vec![], vec![data_rec, manifest::record(source)?])?;
    }
    emit(cli, &report, || eval_table(&report).to_string())
}

fn seed_list(cli: &Cli, n: u64) -> Vec<u64> {
    let first = cli.seed.unwrap_or(0);
    (first..first + n).collect()
}

fn compare_cmd(
    cli: &Cli,
    (a, path_a): (TrainConfig, Option<&Path>),
    (b, path_b): (TrainConfig, Option<&Path>),
    n_seeds: u64,
    split: &SplitArgs,
) -> Result<(), CliError> {
    let (data, data_rec) = load_dataset(&split.data)?;
    let exp = ExperimentData::prepare(&data, split.train_percent);
    let seeds = seed_list(cli, n_seeds);
    let c = compare_configs(&a, &b, &exp, &seeds, cli.jobs)?;
    if let Some(dir) = &cli.out {
        let mut out = Outputs::new(dir)?;
        out.write_json("comparison.json", &c)?;
        let mut inputs = vec![data_rec];
        inputs.extend(config_inputs(&[path_a, path_b])?);
        let resolved = json!({ "a": a, "b": b, "train_percent": split.train_percent });
        out.finish("compare", resolved, seeds, inputs)?;
    }
    emit(cli, &c, || {
        format!(
            "{}95% CI [{:+.5}, {:+.5}] over {} eval searches\n",
            comparison_table(&c),
            c.ci_low,
            c.ci_high,
            c.n_searches
        )
    })
}

fn ablate_cmd(cli: &Cli, base: TrainConfig, path: Option<&Path>, n_seeds: u64, split: &SplitArgs) -> Result<(), CliError> {
    let (data, data_rec) = load_dataset(&split.data)?;
    let exp = ExperimentData::prepare(&data, split.train_percent);
    let seeds = seed_list(cli, n_seeds);
    let cells = run_ablation(&base, &exp, &standard_cells(), &seeds, cli.jobs)?;
    if let Some(dir) = &cli.out {
        let mut out = Outputs::new(dir)?;
        out.write_json("ablation.json", &cells)?;
        out.write("ablation.txt", ablation_table(&cells).to_string().as_bytes())?;
        let mut inputs = vec![data_rec];
        inputs.extend(config_inputs(&[path])?);
        let resolved = json!({ "base": base, "train_percent": split.train_percent });
        out.finish("ablate", resolved, seeds, inputs)?;
    }
    emit(cli, &cells, || ablation_table(&cells).to_string())
}

fn ntc_cmd(
    cli: &Cli,
    model_path: &Path,
    features: &[String],
    buckets: usize,
    split: &SplitArgs,
    all: bool,
) -> Result<(), CliError> {
    let (data, data_rec) = load_dataset(&split.data)?;
    let eval_data = eval_split(&data, split, all);
    let model = JourneyRanker::load(model_path)?;
    let features: Vec<String> = if features.is_empty() {
        vec![DAYS_AHEAD.to_string(), NUM_PREVIOUS_SEARCHES.to_string()]
    } else {
        features.to_vec()
    };
    let mut curves = Vec::new();
    for f in &features {
        curves.extend(ntc_curves(&model, &eval_data, f, buckets)?);
    }
    let csv = ntc_csv(&curves);
    if let Some(dir) = &cli.out {
        let mut out = Outputs::new(dir)?;
        out.write("ntc.csv", csv.as_bytes())?;
        out.write_json("ntc.json", &curves)?;
        let resolved = json!({ "features": features, "buckets": buckets, "train_percent": split.train_percent, "all": all });
        out.finish("ntc", resolved, vec![], vec![data_rec, manifest::record(model_path)?])?;
    }
    emit(cli, &curves, || csv.clone())
}
