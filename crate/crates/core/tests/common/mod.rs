#![allow(dead_code)]

use journey_ranker::domain::{Dataset, ImpressionRecord, JourneyRecord, LabelVector, Milestone, Schema, SearchRecord};
use journey_ranker::model::{Batch, JourneyRanker, ModelConfig, Normalizer};
use journey_nn::Activation;
use journey_nn::gradcheck::check_gradients;
use journey_nn::{ParameterStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use Milestone::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A valid label vector drawn across every outcome class.
pub fn random_labels(rng: &mut ChaCha8Rng) -> LabelVector {
    use Milestone::*;
    match rng.gen_range(0..10) {
        0..=2 => LabelVector::impression(),
        3 => LabelVector::through(C),
        4 => LabelVector::through(Lc),
        5 => LabelVector::through(Pp),
        6 => LabelVector::through(Req).with(if rng.gen_bool(0.5) { Rej } else { Req }),
        7 => LabelVector::through(Book),
        8 => LabelVector::through(Book).with(if rng.gen_bool(0.5) { Cbh } else { Cbg }),
        _ => LabelVector::through(Unc),
    }
}

/// Random searches with random valid labels, one journey per search.
pub fn random_dataset(seed: u64, searches: usize, per_search: std::ops::RangeInclusive<usize>, ld: usize, cd: usize) -> Dataset {
    let mut r = rng(seed);
    let schema = Schema::new(ld, Schema::default_context_names(cd), 30.0);
    let journeys = (0..searches)
        .map(|s| {
            let n = r.gen_range(per_search.clone());
            let search = SearchRecord {
                search_id: s as u64,
                t_days: 19_000.0 + s as f64,
                context: (0..cd).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
                impressions: (0..n)
                    .map(|p| ImpressionRecord {
                        listing_id: r.gen_range(0..1000),
                        position: p as u32 + 1,
                        features: (0..ld).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
                        labels: random_labels(&mut r),
                    })
                    .collect(),
            };
            let mut j = JourneyRecord {
                guest_id: s as u64,
                searches: vec![search],
                outcome: journey_ranker::domain::Outcome::Abandoned,
            };
            j.outcome = j.derived_outcome();
            j
        })
        .collect();
    Dataset::new(schema, journeys)
}

pub fn batch_of(data: &Dataset) -> Batch {
    let searches: Vec<&SearchRecord> = data.searches().collect();
    Batch::from_searches(&searches, &Normalizer::identity(data.schema.listing_dim(), data.schema.context_dim())).unwrap()
}

/// A small smooth model so finite differences behave.
pub fn small_config(base: &[Milestone], twiddlers: &[Milestone], combination: bool, seed: u64) -> ModelConfig {
    ModelConfig {
        embedding_dim: 3,
        listing_hidden_dims: vec![4],
        context_hidden_dims: vec![3],
        head_hidden_dims: vec![3],
        combination_hidden_dims: vec![3],
        activation: Activation::Tanh,
        base_tasks: base.to_vec(),
        twiddler_tasks: twiddlers.to_vec(),
        combination,
        seed,
        ..ModelConfig::full()
    }
}

pub fn model_for(config: &ModelConfig, data: &Dataset, weights: Option<Vec<f64>>) -> JourneyRanker {
    let w = weights.unwrap_or_else(|| config.base_tasks.iter().map(|_| 0.5).collect());
    JourneyRanker::init(
        config,
        &data.schema,
        Normalizer::identity(data.schema.listing_dim(), data.schema.context_dim()),
        w,
    )
    .unwrap()
}

/// Overwrites every parameter with N(0, scale²) draws.
pub fn randomize(model: &mut JourneyRanker, seed: u64, scale: f64) {
    let mut r = rng(seed);
    let store = model.store_mut();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).values_mut() {
            *v = scale * r.sample::<f64, _>(StandardNormal);
        }
    }
}

pub fn ln_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---- independent oracles and gradient references ----------------------

pub fn ls(x: f64) -> f64 {
    // plain formula; inputs in these tests stay well inside f64 range
    -(1.0 + (-x).exp()).ln()
}

pub fn eligible_for(task: Milestone) -> Milestone {
    if task == Rej {
        Req
    } else {
        Book
    }
}

pub fn grade_oracle(l: journey_ranker::domain::LabelVector) -> u8 {
    if l.get(Unc) {
        3
    } else if Milestone::NEGATIVE.iter().any(|&n| l.get(n)) {
        0
    } else if l.get(C) {
        2
    } else {
        1
    }
}

pub fn loss_value(model: &JourneyRanker, batch: &Batch) -> (f64, Option<f64>, Option<f64>, f64) {
    let mut tape = Tape::new();
    let fw = model.forward(&mut tape, batch).unwrap();
    let l = model.losses(&mut tape, &fw, batch).unwrap();
    let v = |x| tape.value(x).values()[0];
    (v(l.base), l.twiddler.map(v), l.combination.map(v), v(l.total))
}

pub fn base_oracle(model: &JourneyRanker, batch: &Batch) -> f64 {
    let out = model.outputs(batch).unwrap();
    let mut total = 0.0;
    for (k, &task) in model.config().base_tasks.iter().enumerate() {
        let lj: Vec<f64> = (0..batch.len())
            .map(|i| (0..=k).map(|j| ls(out.cond_logits[j][i])).sum())
            .collect();
        for g in &batch.groups {
            let lse = ln_sum_exp(&lj[g.clone()]);
            for i in g.clone() {
                if batch.labels[i].get(task) {
                    total -= model.task_weights()[k] * (lj[i] - lse);
                }
            }
        }
    }
    total
}

pub fn twiddler_oracle(model: &JourneyRanker, batch: &Batch) -> f64 {
    let out = model.outputs(batch).unwrap();
    let mut total = 0.0;
    for (t, &task) in model.config().twiddler_tasks.iter().enumerate() {
        let rows: Vec<usize> = (0..batch.len()).filter(|&i| batch.labels[i].get(eligible_for(task))).collect();
        if rows.is_empty() {
            continue;
        }
        let s: f64 = rows
            .iter()
            .map(|&i| {
                let z = out.y_twiddler[t][i];
                if batch.labels[i].get(task) {
                    -ls(z)
                } else {
                    -ls(-z)
                }
            })
            .sum();
        total += s / rows.len() as f64;
    }
    total
}

pub fn combination_oracle(scores: &[f64], batch: &Batch) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for g in &batch.groups {
        for i in g.clone() {
            for j in g.clone() {
                if grade_oracle(batch.labels[i]) > grade_oracle(batch.labels[j]) {
                    sum -= ls(scores[i] - scores[j]);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn random_tasks(r: &mut rand_chacha::ChaCha8Rng) -> (Vec<Milestone>, Vec<Milestone>) {
    let mut base: Vec<Milestone> = Milestone::CHAIN[..5].iter().copied().filter(|_| r.gen_bool(0.5)).collect();
    base.push(Unc);
    let mut tw: Vec<Milestone> = Milestone::NEGATIVE.iter().copied().filter(|_| r.gen_bool(0.6)).collect();
    if tw.is_empty() {
        tw.push(*Milestone::NEGATIVE.choose(r).unwrap());
    }
    tw.shuffle(r);
    (base, tw)
}

#[derive(Clone, Copy, PartialEq)]
pub enum Which {
    Base,
    Twiddler,
    Combination,
    Total,
}

/// A loss whose plain derivative is what the model's backward pass should
/// produce: base and twiddler as-is, the combination with `y_base` and every
/// `y_t` replaced by constants.
pub fn reference_loss(
    m: &JourneyRanker,
    store: &ParameterStore,
    tape: &mut Tape,
    batch: &Batch,
    frozen: &(Vec<f64>, Vec<Vec<f64>>),
    which: Which,
) -> journey_nn::Var {
    let fw = m.forward_with(store, tape, batch).unwrap();
    let base = m.base_loss(tape, &fw, batch).unwrap();
    let tw = m.twiddler_loss(tape, &fw, batch).unwrap();
    let comb = fw.alpha_base.map(|ab| {
        let yb = tape.input(Tensor::column(frozen.0.clone()));
        let mut y = tape.mul(ab, yb).unwrap();
        for (a, yt) in fw.alpha_twiddler.iter().zip(&frozen.1) {
            let yt = tape.input(Tensor::column(yt.clone()));
            let term = tape.mul(*a, yt).unwrap();
            y = tape.add(y, term).unwrap();
        }
        tape.pairwise_logistic_loss(y, &batch.groups, &batch.grades()).unwrap()
    });
    match which {
        Which::Base => base,
        Which::Twiddler => tw.unwrap(),
        Which::Combination => comb.unwrap(),
        Which::Total => {
            let mut t = base;
            for p in [tw, comb].into_iter().flatten() {
                t = tape.add(t, p).unwrap();
            }
            t
        }
    }
}

pub fn model_grad(m: &JourneyRanker, batch: &Batch, which: Which) -> Vec<Vec<f64>> {
    let mut store = m.store().clone();
    let mut tape = Tape::new();
    let fw = m.forward(&mut tape, batch).unwrap();
    let l = m.losses(&mut tape, &fw, batch).unwrap();
    let v = match which {
        Which::Base => l.base,
        Which::Twiddler => l.twiddler.unwrap(),
        Which::Combination => l.combination.unwrap(),
        Which::Total => l.total,
    };
    tape.backward(v, &mut store).unwrap();
    store.ids().map(|id| store.get(id).grad().unwrap().to_vec()).collect()
}

/// Largest finite-difference relative error over `configs` random models.
/// Panics if the model's backward pass disagrees with the reference
/// derivative.
pub fn gradient_suite(which: Which, configs: u64) -> f64 {
    let mut r = rng(700 + which as u64);
    let mut worst = 0.0f64;
    for seed in 0..configs {
        let data = random_dataset(1000 * (which as u64 + 1) + seed, 3, 2..=5, 3, 2);
        let (base, tw) = random_tasks(&mut r);
        let comb = which == Which::Combination || (which == Which::Total && r.gen_bool(0.7));
        let mut cfg = small_config(&base, &tw, comb, seed);
        // a stop-gradient on the coefficient input has no finite-difference
        // counterpart; that path is covered by the freeze test
        cfg.combination_grad_to_context = true;
        let w: Vec<f64> = base.iter().map(|_| r.gen_range(0.1..1.0)).collect();
        let mut m = model_for(&cfg, &data, Some(w));
        randomize(&mut m, seed + 50_000, 0.8);
        let batch = batch_of(&data);
        let out = m.outputs(&batch).unwrap();
        let frozen = (out.y_base.clone(), out.y_twiddler.clone());

        // the model's backward pass equals the reference derivative
        let analytic = model_grad(&m, &batch, which);
        let mut store = m.store().clone();
        let mut tape = Tape::new();
        let l = reference_loss(&m, &store, &mut tape, &batch, &frozen, which);
        tape.backward(l, &mut store).unwrap();
        for (id, a) in store.ids().zip(&analytic) {
            let g = store.get(id).grad().unwrap();
            for (x, y) in g.iter().zip(a) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{}: {x} vs {y}", store.name(id));
            }
        }
        // and the reference derivative matches central differences
        let mut store = m.store().clone();
        let check = check_gradients(&mut store, 1e-5, 1e-4, |tape, s| {
            Ok(reference_loss(&m, s, tape, &batch, &frozen, which))
        })
        .unwrap();
        assert!(check.checked == m.parameter_count());
        worst = worst.max(check.max_relative_error);
    }
    worst
}
