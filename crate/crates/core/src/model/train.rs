use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use journey_nn::{Adam, Tape};

use super::batch::{Batch, Normalizer};
use super::config::TrainConfig;
use super::ranker::JourneyRanker;
use crate::domain::{empirical_task_weight, Dataset, SearchRecord};
use crate::error::{Error, Result};

/// Mean per-batch module losses of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub base: f64,
    pub twiddler: f64,
    pub combination: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLosses>,
}

impl TrainHistory {
    /// `epoch,base,twiddler,combination,total` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,base,twiddler,combination,total\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.base, e.twiddler, e.combination, e.total));
        }
        s
    }
}

/// Model initialized for `data`: normalization statistics and task weights
/// are fitted on it.
pub fn init_model(config: &TrainConfig, data: &Dataset) -> Result<JourneyRanker> {
    config.validate()?;
    let weights = config
        .model
        .base_tasks
        .iter()
        .map(|&t| empirical_task_weight(data, t))
        .collect::<Result<Vec<_>>>()?;
    JourneyRanker::init(&config.model, &data.schema, Normalizer::fit(data), weights)
}

/// Trains on `data` (expected validated and payment-page filtered).
///
/// Searches are shuffled each epoch with a stream derived from the model
/// seed and packed whole into mini-batches.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<(JourneyRanker, TrainHistory)> {
    let mut model = init_model(config, data)?;
    let history = train_from(&mut model, config, data)?;
    Ok((model, history))
}

/// Continues training an existing model.
pub fn train_from(model: &mut JourneyRanker, config: &TrainConfig, data: &Dataset) -> Result<TrainHistory> {
    config.validate()?;
    model.check_schema(&data.schema)?;
    let searches: Vec<&SearchRecord> = data.searches().collect();
    if let Some(s) = searches.iter().find(|s| s.impressions.is_empty()) {
        return Err(Error::Contract(format!("search {} has no impressions", s.search_id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config().seed);
    rng.set_stream(1);
    let mut adam = Adam::new(model.store(), config.adam());
    let mut order: Vec<usize> = (0..searches.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_searches) {
            let picked: Vec<&SearchRecord> = chunk.iter().map(|&i| searches[i]).collect();
            let batch = Batch::from_searches(&picked, model.normalizer())?;
            let mut tape = Tape::new();
            let fw = model.forward(&mut tape, &batch)?;
            let losses = model.losses(&mut tape, &fw, &batch)?;
            let value = |v: Option<journey_nn::Var>| v.map_or(0.0, |v| tape.value(v).values()[0]);
            let parts = [
                value(Some(losses.base)),
                value(losses.twiddler),
                value(losses.combination),
                value(Some(losses.total)),
            ];
            if parts.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite loss {parts:?} at batch {batches}"),
                });
            }
            tape.backward(losses.total, model.store_mut())?;
            adam.step(model.store_mut()).map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
            for (s, p) in sums.iter_mut().zip(parts) {
                *s += p;
            }
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let e = EpochLosses {
            epoch,
            base: sums[0] / n,
            twiddler: sums[1] / n,
            combination: sums[2] / n,
            total: sums[3] / n,
        };
        log::info!("epoch {epoch}: total {:.5} (base {:.5}, twiddler {:.5}, combination {:.5})", e.total, e.base, e.twiddler, e.combination);
        history.epochs.push(e);
    }
    Ok(history)
}
