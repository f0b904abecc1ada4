use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

use super::config::GeneratorConfig;
use super::world::WorldTruth;
use crate::domain::{
    attribute_labels, ImpressionRecord, JourneyRecord, LabelVector, Milestone, Schema, SearchRecord, Dataset,
};
use crate::error::Result;

/// Guests per independently seeded stream.
pub const SHARD_SIZE: usize = 512;

const EPOCH_DAY: f64 = 19_000.0;

fn shard_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples a world from `config` and a journey for every guest.
///
/// Labels are attributed before returning, so the dataset passes
/// [`crate::domain::validate_dataset`] as is.
pub fn generate(config: &GeneratorConfig) -> Result<(Dataset, WorldTruth)> {
    config.validate()?;
    let world = WorldTruth::sample(config, &mut shard_rng(config.seed, 0));
    let schema = Schema::new(
        config.listing_feature_dim,
        Schema::default_context_names(config.context_feature_dim),
        config.window_days,
    );
    let n_shards = config.n_guests.div_ceil(SHARD_SIZE);
    let mut journeys = Vec::with_capacity(config.n_guests);
    for shard in 0..n_shards {
        journeys.extend(generate_shard(config, &world, shard)?);
    }
    Ok((Dataset::new(schema, journeys), world))
}

/// Journeys of guests `shard * SHARD_SIZE ..` from their own stream; the
/// result does not depend on which other shards are generated.
pub fn generate_shard(config: &GeneratorConfig, world: &WorldTruth, shard: usize) -> Result<Vec<JourneyRecord>> {
    let mut rng = shard_rng(config.seed, shard as u64 + 1);
    let start = shard * SHARD_SIZE;
    let end = (start + SHARD_SIZE).min(config.n_guests);
    (start..end)
        .map(|g| {
            let raw = sample_journey(config, world, g as u64, &mut rng);
            attribute_labels(&raw)
        })
        .collect()
}

fn sample_journey(cfg: &GeneratorConfig, world: &WorldTruth, guest_id: u64, rng: &mut ChaCha8Rng) -> JourneyRecord {
    let gap = Exp::new(1.0 / cfg.mean_search_gap_days).expect("positive rate");
    let n_searches = rng.gen_range(1..=cfg.max_searches_per_journey);
    let d0 = rng.gen_range(0.0..cfg.max_days_ahead);
    let t0 = EPOCH_DAY + rng.gen_range(0.0..365.0);

    let mut seen: Vec<u32> = Vec::new();
    let mut seen_set: HashSet<u32> = HashSet::new();
    // listings that can no longer be requested: rejected, or booked before
    let mut blocked: HashSet<u32> = HashSet::new();
    let mut done = false;
    let mut t = t0;
    let mut searches = Vec::new();

    for k in 0..n_searches {
        if k > 0 {
            t += rng.sample(gap);
            if t - t0 > cfg.window_days {
                break;
            }
        }
        let mut context = vec![(d0 - (t - t0)).max(0.0), k as f64];
        context.extend((2..cfg.context_feature_dim).map(|_| rng.sample::<f64, _>(StandardNormal)));

        let listings = pick_listings(cfg, &seen, rng);
        let mut impressions = Vec::with_capacity(listings.len());
        for (pos, &l) in listings.iter().enumerate() {
            let labels = sample_funnel(world, l, &context, !done && !blocked.contains(&l), rng);
            if labels.get(Milestone::Req) {
                if labels.get(Milestone::Rej) || labels.get(Milestone::Book) {
                    blocked.insert(l);
                }
                if labels.get(Milestone::Unc) {
                    done = true;
                }
            }
            if seen_set.insert(l) {
                seen.push(l);
            }
            impressions.push(ImpressionRecord {
                listing_id: l,
                position: pos as u32 + 1,
                features: world.features(l).to_vec(),
                labels,
            });
        }
        searches.push(SearchRecord {
            search_id: guest_id * 1000 + k as u64,
            t_days: t,
            context,
            impressions,
        });
        if done {
            break;
        }
    }
    let mut journey = JourneyRecord {
        guest_id,
        searches,
        outcome: crate::domain::Outcome::Abandoned,
    };
    journey.outcome = journey.derived_outcome();
    journey
}

fn pick_listings(cfg: &GeneratorConfig, seen: &[u32], rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut chosen = Vec::with_capacity(cfg.listings_per_search);
    let mut in_search = HashSet::new();
    while chosen.len() < cfg.listings_per_search {
        let revisit = !seen.is_empty() && rng.gen_bool(cfg.revisit_probability);
        let l = if revisit {
            *seen.choose(rng).expect("non-empty")
        } else {
            rng.gen_range(0..cfg.n_listings as u32)
        };
        if in_search.insert(l) {
            chosen.push(l);
        }
    }
    chosen
}

/// Raw labels of one impression. `can_request` is false once the journey
/// has converted or the listing is blocked.
fn sample_funnel(world: &WorldTruth, l: u32, context: &[f64], can_request: bool, rng: &mut ChaCha8Rng) -> LabelVector {
    let stage = world.stage_probabilities(l);
    let mut last = None;
    for (k, &m) in Milestone::CHAIN[..3].iter().enumerate() {
        if !rng.gen_bool(stage[k]) {
            break;
        }
        last = Some(m);
    }
    let mut labels = match last {
        Some(m) => LabelVector::through(m),
        None => LabelVector::impression(),
    };
    if last != Some(Milestone::Pp) || !can_request || !rng.gen_bool(stage[3]) {
        return labels;
    }
    let [p_rej, p_cbh, p_cbg] = world.negative_probabilities(l, context);
    if rng.gen_bool(p_rej) {
        return LabelVector::through(Milestone::Req).with(Milestone::Rej);
    }
    if !rng.gen_bool(stage[4]) {
        // request expired without host action
        return LabelVector::through(Milestone::Req);
    }
    labels = LabelVector::through(Milestone::Book);
    if rng.gen_bool(p_cbh) {
        labels.with(Milestone::Cbh)
    } else if rng.gen_bool(p_cbg) {
        labels.with(Milestone::Cbg)
    } else if rng.gen_bool(stage[5]) {
        LabelVector::through(Milestone::Unc)
    } else {
        labels
    }
}
