mod common;

use common::*;
use journey_nn::{softplus_inverse, Tape, Tensor};
use journey_ranker::domain::{Milestone, Schema};
use journey_ranker::model::{
    init_model, train, Candidate, JourneyRanker, ModelConfig, Module, Normalizer, TrainConfig,
};
use journey_ranker::Error;
use rand::Rng;

use Milestone::*;

// ---- base module -------------------------------------------------------

#[test]
fn zero_logits_give_halving_joint() {
    let data = random_dataset(1, 2, 3..=3, 4, 2);
    let mut m = model_for(&small_config(&Milestone::CHAIN, &[], false, 0), &data, None);
    m.fill_parameters(0.0);
    let out = m.outputs(&batch_of(&data)).unwrap();
    for (k, lj) in out.log_joint.iter().enumerate() {
        for &v in lj {
            assert!((v - (k + 1) as f64 * 0.5f64.ln()).abs() < 1e-15);
        }
    }
    assert!((out.y_base[0].exp() - 1.0 / 64.0).abs() < 1e-15);
}

#[test]
fn unc_only_joint_is_log_sigmoid_of_head() {
    let data = random_dataset(2, 3, 4..=4, 4, 2);
    let mut m = model_for(&small_config(&[Unc], &[], false, 3), &data, Some(vec![1.0]));
    randomize(&mut m, 3, 1.0);
    let out = m.outputs(&batch_of(&data)).unwrap();
    for i in 0..out.len() {
        assert!((out.y_base[i] - ls(out.cond_logits[0][i])).abs() < 1e-12);
    }
}

#[test]
fn chain_rule_and_monotonicity_fuzz() {
    let mut draws = 0;
    for seed in 0..100 {
        let data = random_dataset(100 + seed, 10, 10..=10, 3, 2);
        let mut m = model_for(&small_config(&Milestone::CHAIN, &[], false, seed), &data, None);
        randomize(&mut m, seed, 1.5);
        let out = m.outputs(&batch_of(&data)).unwrap();
        for i in 0..out.len() {
            let mut prod = 1.0;
            let mut prev = 0.0;
            for k in 0..6 {
                let z = out.cond_logits[k][i];
                prod *= 1.0 / (1.0 + (-z).exp());
                let lj = out.log_joint[k][i];
                assert!((lj.exp() - prod).abs() < 1e-12, "seed {seed} row {i} task {k}");
                assert!(lj <= prev && lj.exp() > 0.0 && lj.exp() < 1.0);
                prev = lj;
            }
            draws += 1;
        }
    }
    assert!(draws >= 10_000);
}

#[test]
fn saturated_softmax_has_vanishing_loss() {
    // one search, positive margin 20 over the others
    let data = random_dataset(4, 1, 5..=5, 2, 2);
    let mut batch = batch_of(&data);
    for l in batch.labels.iter_mut() {
        *l = journey_ranker::domain::LabelVector::impression();
    }
    batch.labels[2] = journey_ranker::domain::LabelVector::through(Unc);
    let mut tape = Tape::new();
    let s = tape.input(Tensor::column(vec![0.0, 0.0, 20.0, 0.0, 0.0]));
    let l = tape
        .listwise_softmax_loss(s, &batch.groups, &batch.flags(Unc), 1.0)
        .unwrap();
    assert!(tape.value(l).values()[0] < 1e-8);
    let mut tape = Tape::new();
    let s = tape.input(Tensor::column(vec![0.5, 0.5]));
    let l = tape.listwise_softmax_loss(s, &[0..2], &[true, false], 1.0).unwrap();
    assert!((tape.value(l).values()[0] - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn base_loss_matches_scripted_oracle() {
    let mut r = rng(5);
    for seed in 0..50 {
        let data = random_dataset(200 + seed, 6, 2..=7, 4, 3);
        let (base, _) = random_tasks(&mut r);
        let w: Vec<f64> = base.iter().map(|_| r.gen_range(0.05..1.0)).collect();
        let mut m = model_for(&small_config(&base, &[], false, seed), &data, Some(w));
        randomize(&mut m, seed, 1.0);
        let batch = batch_of(&data);
        let (b, _, _, _) = loss_value(&m, &batch);
        let o = base_oracle(&m, &batch);
        assert!((b - o).abs() < 1e-10 * o.abs().max(1.0), "{b} vs {o}");
    }
}

#[test]
fn baseline_equals_single_task_softmax() {
    let data = random_dataset(6, 8, 3..=9, 4, 2);
    let cfg = ModelConfig {
        seed: 9,
        ..ModelConfig::baseline()
    };
    let mut m = model_for(&cfg, &data, Some(vec![1.0]));
    randomize(&mut m, 9, 0.7);
    let batch = batch_of(&data);
    let out = m.outputs(&batch).unwrap();
    let mut oracle = 0.0;
    for g in &batch.groups {
        let lse = ln_sum_exp(&out.y_base[g.clone()]);
        for i in g.clone() {
            if batch.labels[i].get(Unc) {
                oracle -= out.y_base[i] - lse;
            }
        }
    }
    let (b, t, c, total) = loss_value(&m, &batch);
    assert!(t.is_none() && c.is_none());
    assert_eq!(b, total);
    assert!((b - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
    assert_eq!(out.score(), &out.y_base[..]);
}

// ---- twiddler module ---------------------------------------------------

#[test]
fn zero_twiddler_heads_give_zero_logits() {
    let data = random_dataset(7, 2, 4..=4, 3, 2);
    let mut m = model_for(&small_config(&[Unc], &Milestone::NEGATIVE, true, 1), &data, None);
    randomize(&mut m, 1, 1.0);
    for id in m.module_params(Module::Twiddler) {
        m.store_mut().get_mut(id).values_mut().fill(0.0);
    }
    let out = m.outputs(&batch_of(&data)).unwrap();
    assert!(out.y_twiddler.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn twiddler_logits_are_independent_across_tasks() {
    let data = random_dataset(8, 3, 4..=4, 3, 2);
    let mut m = model_for(&small_config(&[Unc], &Milestone::NEGATIVE, false, 2), &data, None);
    randomize(&mut m, 2, 1.0);
    let batch = batch_of(&data);
    let before = m.outputs(&batch).unwrap();
    let rej: Vec<_> = m
        .store()
        .ids()
        .filter(|&id| m.store().name(id).starts_with("twiddler.rej"))
        .collect();
    assert!(!rej.is_empty());
    for id in rej {
        m.store_mut().get_mut(id).values_mut().iter_mut().for_each(|v| *v += 0.37);
    }
    let after = m.outputs(&batch).unwrap();
    assert_ne!(before.y_twiddler[0], after.y_twiddler[0]);
    assert_eq!(before.y_twiddler[1], after.y_twiddler[1]);
    assert_eq!(before.y_twiddler[2], after.y_twiddler[2]);
}

#[test]
fn twiddler_loss_edge_cases() {
    let data = random_dataset(9, 1, 3..=3, 3, 2);
    let mut batch = batch_of(&data);
    for l in batch.labels.iter_mut() {
        *l = journey_ranker::domain::LabelVector::through(Pp);
    }
    let mut m = model_for(&small_config(&[Unc], &[Rej], false, 0), &data, None);
    randomize(&mut m, 4, 1.0);
    let (_, t, _, _) = loss_value(&m, &batch);
    assert_eq!(t, Some(0.0));

    batch.labels[1] = journey_ranker::domain::LabelVector::through(Req).with(Rej);
    for id in m.module_params(Module::Twiddler) {
        m.store_mut().get_mut(id).values_mut().fill(0.0);
    }
    let (_, t, _, _) = loss_value(&m, &batch);
    assert!((t.unwrap() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn twiddler_loss_matches_masked_bce_oracle() {
    let mut r = rng(10);
    for seed in 0..50 {
        let data = random_dataset(300 + seed, 6, 2..=8, 3, 2);
        let (_, tw) = random_tasks(&mut r);
        let mut m = model_for(&small_config(&[Unc], &tw, false, seed), &data, None);
        randomize(&mut m, seed, 1.2);
        let batch = batch_of(&data);
        let (_, t, _, _) = loss_value(&m, &batch);
        let o = twiddler_oracle(&m, &batch);
        assert!((t.unwrap() - o).abs() < 1e-10 * o.abs().max(1.0));
    }
}

// ---- combination module ------------------------------------------------

#[test]
fn zero_coefficient_network_scales_base_by_ln2() {
    let data = random_dataset(11, 2, 4..=4, 3, 2);
    let mut m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 0), &data, None);
    randomize(&mut m, 11, 1.0);
    for id in m.module_params(Module::Combination) {
        m.store_mut().get_mut(id).values_mut().fill(0.0);
    }
    let out = m.outputs(&batch_of(&data)).unwrap();
    let ab = out.alpha_base.as_ref().unwrap();
    let y = out.y_combination.as_ref().unwrap();
    for i in 0..out.len() {
        assert!((ab[i] - 2f64.ln()).abs() < 1e-15);
        assert!(out.alpha_twiddler.iter().all(|a| a[i] == 0.0));
        assert!((y[i] - 2f64.ln() * out.y_base[i]).abs() < 1e-12);
    }
}

#[test]
fn fresh_model_combination_reproduces_base_ranking() {
    let data = random_dataset(12, 4, 6..=6, 3, 2);
    let m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 5), &data, None);
    let out = m.outputs(&batch_of(&data)).unwrap();
    let y = out.y_combination.as_ref().unwrap();
    for i in 0..out.len() {
        assert!((out.alpha_base.as_ref().unwrap()[i] - 1.0).abs() < 1e-12);
        assert!((y[i] - out.y_base[i]).abs() < 1e-12);
    }
    // same check from the raw bias values
    let bias = m.parameter("combination.l1.bias").unwrap().values().to_vec();
    assert_eq!(bias, vec![softplus_inverse(1.0), 0.0, 0.0, 0.0]);
}

#[test]
fn combination_is_the_linear_mix_of_outputs() {
    for seed in 0..30 {
        let data = random_dataset(400 + seed, 5, 3..=6, 3, 2);
        let mut m = model_for(&small_config(&[C, Unc], &[Cbg, Rej], true, seed), &data, None);
        randomize(&mut m, seed, 1.0);
        let out = m.outputs(&batch_of(&data)).unwrap();
        let y = out.y_combination.as_ref().unwrap();
        for i in 0..out.len() {
            let ab = out.alpha_base.as_ref().unwrap()[i];
            assert!(ab > 0.0);
            let mut o = ab * out.y_base[i];
            for t in 0..2 {
                o += out.alpha_twiddler[t][i] * out.y_twiddler[t][i];
            }
            assert!((y[i] - o).abs() < 1e-12);
        }
    }
}

#[test]
fn coefficients_depend_on_context_only() {
    let data = random_dataset(13, 3, 5..=5, 3, 2);
    let mut m = model_for(&small_config(&[Unc], &Milestone::NEGATIVE, true, 1), &data, None);
    randomize(&mut m, 13, 1.0);
    let batch = batch_of(&data);
    let out = m.outputs(&batch).unwrap();
    for g in &batch.groups {
        let a = out.alpha_base.as_ref().unwrap();
        assert!(a[g.clone()].iter().all(|&v| v == a[g.start]));
    }
}

#[test]
fn combination_loss_edge_cases() {
    let mut tape = Tape::new();
    let s = tape.input(Tensor::column(vec![0.3, -1.0, 2.0]));
    let l = tape.pairwise_logistic_loss(s, &[0..3], &[1, 1, 1]).unwrap();
    assert_eq!(tape.value(l).values()[0], 0.0);
    let s = tape.input(Tensor::column(vec![0.7, 0.7]));
    let l = tape.pairwise_logistic_loss(s, &[0..2], &[2, 1]).unwrap();
    assert!((tape.value(l).values()[0] - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn combination_loss_matches_all_pairs_oracle() {
    for seed in 0..50 {
        let data = random_dataset(500 + seed, 5, 2..=8, 3, 2);
        let mut m = model_for(&small_config(&[Pp, Unc], &Milestone::NEGATIVE, true, seed), &data, None);
        randomize(&mut m, seed, 1.0);
        let batch = batch_of(&data);
        let (_, _, c, _) = loss_value(&m, &batch);
        let out = m.outputs(&batch).unwrap();
        let o = combination_oracle(out.y_combination.as_ref().unwrap(), &batch);
        assert!((c.unwrap() - o).abs() < 1e-10 * o.abs().max(1.0));
    }
}

#[test]
fn grades_follow_the_ordering() {
    let data = random_dataset(14, 20, 10..=10, 2, 2);
    let batch = batch_of(&data);
    let g = batch.grades();
    for (i, l) in batch.labels.iter().enumerate() {
        assert_eq!(g[i], grade_oracle(*l));
    }
}

// ---- total loss --------------------------------------------------------

#[test]
fn total_is_the_sum_of_module_losses() {
    for seed in 0..30 {
        let data = random_dataset(600 + seed, 5, 2..=8, 3, 2);
        let mut m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, seed), &data, None);
        randomize(&mut m, seed, 1.0);
        let batch = batch_of(&data);
        let (_, _, _, total) = loss_value(&m, &batch);
        let out = m.outputs(&batch).unwrap();
        let oracle =
            base_oracle(&m, &batch) + twiddler_oracle(&m, &batch) + combination_oracle(out.score(), &batch);
        assert!((total - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{total} vs {oracle}");
    }
}

#[test]
fn zero_parameter_model_total_has_closed_form() {
    use journey_ranker::domain::LabelVector;
    // two searches of four; every module sees uniform scores
    let mut data = random_dataset(15, 2, 4..=4, 3, 2);
    let labels = [
        [LabelVector::through(Unc), LabelVector::through(C), LabelVector::impression(), LabelVector::through(Req).with(Rej)],
        [LabelVector::through(Book).with(Cbh), LabelVector::through(Lc), LabelVector::impression(), LabelVector::impression()],
    ];
    for (j, ls) in data.journeys.iter_mut().zip(labels) {
        for (imp, l) in j.searches[0].impressions.iter_mut().zip(ls) {
            imp.labels = l;
        }
    }
    let w = vec![0.1, 0.2, 0.3, 0.4, 0.5, 1.0];
    let mut m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 0), &data, Some(w.clone()));
    m.fill_parameters(0.0);
    let batch = batch_of(&data);
    let positives = |t: Milestone| batch.labels.iter().filter(|l| l.get(t)).count() as f64;
    let ln2 = 2f64.ln();
    let base: f64 = Milestone::CHAIN
        .iter()
        .zip(&w)
        .map(|(&t, w)| w * positives(t) * 4f64.ln())
        .sum();
    // rej, cbh and cbg each have eligible rows; equal scores make every pair ln 2
    let expected = base + 3.0 * ln2 + ln2;
    let (_, _, _, total) = loss_value(&m, &batch);
    assert!((total - expected).abs() < 1e-12, "{total} vs {expected}");
}

#[test]
fn loss_weights_scale_module_losses() {
    let data = random_dataset(16, 4, 3..=6, 3, 2);
    let mut cfg = small_config(&[C, Unc], &[Rej, Cbh], true, 2);
    let mut m = model_for(&cfg, &data, None);
    randomize(&mut m, 16, 1.0);
    let batch = batch_of(&data);
    let (b, t, c, _) = loss_value(&m, &batch);
    cfg.loss_weights.base = 0.5;
    cfg.loss_weights.twiddler = 2.0;
    cfg.loss_weights.combination = 0.0;
    let mut m2 = model_for(&cfg, &data, None);
    *m2.store_mut() = m.store().clone();
    let (_, _, _, total) = loss_value(&m2, &batch);
    assert!((total - (0.5 * b + 2.0 * t.unwrap() + 0.0 * c.unwrap())).abs() < 1e-12);
}

// ---- gradients ---------------------------------------------------------

#[test]
fn base_loss_gradients_match_finite_differences() {
    let worst = gradient_suite(Which::Base, 100);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn twiddler_loss_gradients_match_finite_differences() {
    let worst = gradient_suite(Which::Twiddler, 100);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn combination_loss_gradients_match_finite_differences() {
    let worst = gradient_suite(Which::Combination, 100);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    let worst = gradient_suite(Which::Total, 100);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn combination_loss_leaves_heads_untouched() {
    let data = random_dataset(17, 6, 4..=8, 3, 2);
    for grad_to_context in [true, false] {
        let mut cfg = small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 3);
        cfg.combination_grad_to_context = grad_to_context;
        let mut m = model_for(&cfg, &data, None);
        randomize(&mut m, 17, 1.0);
        let batch = batch_of(&data);
        let mut store = m.store().clone();
        let mut tape = Tape::new();
        let fw = m.forward(&mut tape, &batch).unwrap();
        let l = m.combination_loss(&mut tape, &fw, &batch).unwrap().unwrap();
        tape.backward(l, &mut store).unwrap();
        let grads = |module: Module| -> Vec<f64> {
            m.module_params(module)
                .into_iter()
                .flat_map(|id| store.get(id).grad().unwrap().to_vec())
                .collect()
        };
        assert!(grads(Module::Base).iter().all(|&g| g == 0.0));
        assert!(grads(Module::Twiddler).iter().all(|&g| g == 0.0));
        assert!(grads(Module::Combination).iter().filter(|&&g| g != 0.0).count() > 10);
        let listing: Vec<f64> = m
            .module_params(Module::Shared)
            .into_iter()
            .filter(|&id| store.name(id).starts_with("shared.listing"))
            .flat_map(|id| store.get(id).grad().unwrap().to_vec())
            .collect();
        assert!(listing.iter().all(|&g| g == 0.0));
        let context: Vec<f64> = m
            .module_params(Module::Shared)
            .into_iter()
            .filter(|&id| store.name(id).starts_with("shared.context"))
            .flat_map(|id| store.get(id).grad().unwrap().to_vec())
            .collect();
        assert_eq!(context.iter().any(|&g| g != 0.0), grad_to_context);
    }
}

// ---- training ----------------------------------------------------------

fn tiny_train_config(model: ModelConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        model,
        epochs,
        batch_searches: 4,
        ..Default::default()
    }
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let data = random_dataset(18, 10, 4..=6, 3, 2);
    let cfg = tiny_train_config(small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 4), 0);
    let init = init_model(&cfg, &data).unwrap();
    let (trained, history) = train(&cfg, &data).unwrap();
    assert!(history.epochs.is_empty());
    for (a, b) in init.store().iter().zip(trained.store().iter()) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.values(), b.1.values());
    }
}

#[test]
fn separable_data_gives_monotone_base_loss() {
    use journey_ranker::domain::LabelVector;
    // four searches; feature 0 is +1 exactly on the booked listing
    let mut data = random_dataset(19, 4, 5..=5, 3, 2);
    for (s, j) in data.journeys.iter_mut().enumerate() {
        for (p, imp) in j.searches[0].impressions.iter_mut().enumerate() {
            let hit = p == s % 5;
            imp.features[0] = if hit { 1.0 } else { -1.0 };
            imp.labels = if hit { LabelVector::through(Unc) } else { LabelVector::impression() };
        }
        j.outcome = j.derived_outcome();
    }
    let cfg = tiny_train_config(small_config(&[Unc], &[], false, 1), 50);
    let (_, history) = train(&cfg, &data).unwrap();
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.base).collect();
    assert_eq!(losses.len(), 50);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(losses[49] < losses[0]);
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = random_dataset(20, 24, 3..=8, 3, 2);
    let cfg = tiny_train_config(small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 6), 3);
    let (m1, h1) = train(&cfg, &data).unwrap();
    let (m2, h2) = train(&cfg, &data).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1.manifest_and_blob("x").1, m2.manifest_and_blob("x").1);
    let other = TrainConfig {
        model: cfg.model.clone().with_seed(7),
        ..cfg.clone()
    };
    let (_, h3) = train(&other, &data).unwrap();
    assert_ne!(h1, h3);
}

#[test]
fn divergence_is_reported_with_epoch() {
    let data = random_dataset(21, 4, 3..=5, 3, 2);
    let cfg = tiny_train_config(small_config(&[Unc], &[], false, 1), 2);
    let mut m = init_model(&cfg, &data).unwrap();
    m.fill_parameters(f64::NAN);
    let err = journey_ranker::model::train_from(&mut m, &cfg, &data).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err}");
}

// ---- scoring -----------------------------------------------------------

fn candidates(seed: u64, n: usize, ld: usize) -> Vec<Candidate> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| Candidate {
            listing_id: i as u32 * 7 % 101,
            features: (0..ld).map(|_| r.gen_range(-2.0..2.0)).collect(),
        })
        .collect()
}

#[test]
fn score_orders_by_score_then_id() {
    let data = random_dataset(22, 2, 3..=3, 3, 2);
    let mut m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 8), &data, None);
    randomize(&mut m, 22, 1.0);

    let one = m.score(&[0.1, 0.2], &candidates(1, 1, 3)).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].rank, 1);
    assert!(matches!(m.score(&[0.1, 0.2], &[]), Err(Error::Contract(_))));

    for seed in 0..20 {
        let cands = candidates(seed, 12, 3);
        let ranked = m.score(&[0.5, -0.3], &cands).unwrap();
        let mut oracle: Vec<(f64, u32)> = ranked.iter().map(|c| (c.score, c.listing_id)).collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let got: Vec<u32> = ranked.iter().map(|c| c.listing_id).collect();
        assert_eq!(got, oracle.iter().map(|x| x.1).collect::<Vec<_>>());
        assert!(ranked.iter().enumerate().all(|(i, c)| c.rank == i + 1));
        for c in &ranked {
            assert_eq!(c.outputs.len(), 1);
            assert_eq!(c.outputs.score()[0], c.score);
        }
    }

    // identical candidates fall back to id order
    let same: Vec<Candidate> = [9u32, 3, 5]
        .iter()
        .map(|&id| Candidate {
            listing_id: id,
            features: vec![0.5, 0.5, 0.5],
        })
        .collect();
    let ids: Vec<u32> = m.score(&[0.0, 0.0], &same).unwrap().iter().map(|c| c.listing_id).collect();
    assert_eq!(ids, vec![3, 5, 9]);
}

#[test]
fn evaluation_does_not_mutate_the_model() {
    let data = random_dataset(23, 6, 3..=6, 3, 2);
    let m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 8), &data, None);
    let before = m.manifest_and_blob("x");
    let _ = m.score_dataset(&data).unwrap();
    let _ = journey_ranker::eval::evaluate(&m, &data).unwrap();
    assert_eq!(before, m.manifest_and_blob("x"));
}

// ---- persistence -------------------------------------------------------

#[test]
fn manifest_round_trip_preserves_outputs() {
    let data = random_dataset(24, 5, 3..=6, 3, 2);
    let mut m = model_for(&small_config(&Milestone::CHAIN, &Milestone::NEGATIVE, true, 9), &data, None);
    randomize(&mut m, 24, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = m.save(dir.path(), "model").unwrap();
    let loaded = JourneyRanker::load(&path).unwrap();
    let batch = batch_of(&data);
    assert_eq!(m.outputs(&batch).unwrap(), loaded.outputs(&batch).unwrap());
    assert_eq!(loaded.config(), m.config());
    assert_eq!(loaded.task_weights(), m.task_weights());

    // a tampered blob is refused
    let blob = dir.path().join("model.bin");
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[3] ^= 1;
    std::fs::write(&blob, bytes).unwrap();
    assert!(JourneyRanker::load(&path).is_err());
}

#[test]
fn different_schema_is_refused() {
    let data = random_dataset(25, 3, 3..=4, 3, 2);
    let m = model_for(&small_config(&[Unc], &[], false, 0), &data, None);
    let mut other = random_dataset(25, 3, 3..=4, 3, 2);
    other.schema = Schema::new(3, vec!["days_ahead_of_checkin".into(), "guests".into()], 30.0);
    assert!(matches!(m.score_dataset(&other), Err(Error::SchemaMismatch { .. })));
    assert!(matches!(
        journey_ranker::eval::evaluate(&m, &other),
        Err(Error::SchemaMismatch { .. })
    ));
}

#[test]
fn init_rejects_mismatched_inputs() {
    let data = random_dataset(26, 2, 3..=3, 3, 2);
    let cfg = small_config(&[C, Unc], &[], false, 0);
    let norm = Normalizer::identity(3, 2);
    assert!(JourneyRanker::init(&cfg, &data.schema, norm.clone(), vec![1.0]).is_err());
    assert!(JourneyRanker::init(&cfg, &data.schema, Normalizer::identity(4, 2), vec![0.1, 1.0]).is_err());
    let bad = small_config(&[Unc, C], &[], false, 0);
    assert!(matches!(
        JourneyRanker::init(&bad, &data.schema, norm, vec![1.0, 0.1]),
        Err(Error::Config { .. })
    ));
}

// ---- parameter accounting ----------------------------------------------

#[test]
fn parameter_delta_matches_head_formula() {
    let (ld, cd) = (8, 3);
    let full = ModelConfig::full();
    let base = ModelConfig::baseline();
    let e = full.embedding_dim;
    let h = full.head_hidden_dims[0];
    let head = 2 * e * h + h + h + 1;
    let c = full.combination_hidden_dims[0];
    let comb = e * c + c + c * 4 + 4;
    let delta = full.parameter_count(ld, cd) - base.parameter_count(ld, cd);
    assert_eq!(delta, 5 * head + 3 * head + comb);

    let schema = Schema::new(ld, Schema::default_context_names(cd), 30.0);
    let m = JourneyRanker::init(&full, &schema, Normalizer::identity(ld, cd), vec![0.5; 6]).unwrap();
    assert_eq!(m.parameter_count(), full.parameter_count(ld, cd));
    let by_module: usize = [Module::Shared, Module::Base, Module::Twiddler, Module::Combination]
        .iter()
        .flat_map(|&md| m.module_params(md))
        .map(|id| m.store().get(id).len())
        .sum();
    assert_eq!(by_module, m.parameter_count());
}

// ---- snapshot ----------------------------------------------------------

#[test]
fn golden_forward_snapshot() {
    let data = random_dataset(27, 2, 3..=3, 4, 3);
    let mut m = model_for(&ModelConfig::full().with_seed(42), &data, None);
    // move the coefficient network off its identity start
    let ids = m.module_params(Module::Combination);
    for id in ids {
        for (k, v) in m.store_mut().get_mut(id).values_mut().iter_mut().enumerate() {
            *v += 0.01 * (k % 7) as f64 - 0.03;
        }
    }
    let out = m.outputs(&batch_of(&data)).unwrap();
    let snap: Vec<f64> = (0..out.len())
        .flat_map(|i| [out.y_base[i], out.y_twiddler[0][i], out.y_combination.as_ref().unwrap()[i]])
        .collect();
    let expected: [f64; 18] = [
        -4.04657287850674,
        0.525586838272428,
        -3.995106216371255,
        -4.138463141594826,
        0.3539027605148941,
        -4.0815803206484915,
        -4.738122237156131,
        0.47441690738916553,
        -4.676211670789274,
        -3.9572098527642066,
        -0.11346003816180658,
        -3.903216049568486,
        -3.889712860259457,
        -0.23109360906918072,
        -3.8360426667446035,
        -3.8909928318265394,
        0.3044973559871812,
        -3.8431288158816415,
    ];
    for (a, b) in snap.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{snap:?}");
    }
}
