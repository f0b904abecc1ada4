//! Training-data selection and task weighting.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::attribution::attribute_labels;
use super::milestone::Milestone;
use super::records::Dataset;
use crate::error::{Error, Result};

/// Applies [`attribute_labels`] to every journey.
pub fn attribute_dataset(data: &Dataset) -> Result<Dataset> {
    let journeys = data
        .journeys
        .iter()
        .map(attribute_labels)
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(data.schema.clone(), journeys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub searches_before: usize,
    pub searches_after: usize,
    pub retained_fraction: f64,
    pub warning: Option<String>,
}

/// Keeps exactly the journeys that reached a payment page on some
/// impression.
pub fn filter_training_searches(data: &Dataset) -> (Dataset, FilterReport) {
    let journeys: Vec<_> = data
        .journeys
        .iter()
        .filter(|j| j.has_label(Milestone::Pp))
        .cloned()
        .collect();
    let out = Dataset::new(data.schema.clone(), journeys);
    let before = data.n_searches();
    let after = out.n_searches();
    let warning = (after == 0).then(|| {
        log::warn!("no payment-page views: filtered dataset is empty");
        "no journey reached a payment page; the filtered dataset is empty".to_string()
    });
    let report = FilterReport {
        searches_before: before,
        searches_after: after,
        retained_fraction: if before == 0 { 0.0 } else { after as f64 / before as f64 },
        warning,
    };
    (out, report)
}

/// Removes impressions of the uncancelled-booked listing that were shown
/// after the booking search; searches left with fewer than two impressions
/// are dropped.
pub fn drop_post_booking_impressions(data: &Dataset) -> Dataset {
    let mut out = data.empty_like();
    for j in &data.journeys {
        let booked = j.searches.iter().enumerate().find_map(|(si, s)| {
            s.impressions
                .iter()
                .find(|i| i.labels.get(Milestone::Unc))
                .map(|i| (si, i.listing_id))
        });
        let mut j2 = j.clone();
        if let Some((first, listing)) = booked {
            // the last search still carrying unc is where the booking happened
            let booking_search = j
                .searches
                .iter()
                .rposition(|s| s.impressions.iter().any(|i| i.listing_id == listing && i.labels.get(Milestone::Unc)))
                .unwrap_or(first);
            for (si, s) in j2.searches.iter_mut().enumerate() {
                if si > booking_search {
                    s.impressions.retain(|i| i.listing_id != listing);
                }
            }
            j2.searches.retain(|s| s.impressions.len() >= 2);
        }
        if !j2.searches.is_empty() {
            out.journeys.push(j2);
        }
    }
    out
}

/// Share of `task`-positive impressions that are also uncancelled bookings.
pub fn empirical_task_weight(data: &Dataset, task: Milestone) -> Result<f64> {
    if task.chain_index().is_none() {
        return Err(Error::Contract(format!(
            "task weight is defined for positive funnel milestones, got `{task}`"
        )));
    }
    let (mut positives, mut converted) = (0usize, 0usize);
    for imp in data.impressions() {
        if imp.labels.get(task) {
            positives += 1;
            if imp.labels.get(Milestone::Unc) {
                converted += 1;
            }
        }
    }
    if positives == 0 {
        return Err(Error::UndefinedWeight(task));
    }
    Ok(converted as f64 / positives as f64)
}

/// Deterministic bucket in `0..100` from a hash of the guest id.
pub fn guest_bucket(guest_id: u64) -> u64 {
    let digest = Sha256::digest(guest_id.to_le_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) % 100
}

/// Splits journeys by guest: buckets below `train_percent` train, the rest
/// evaluate. A guest never lands on both sides.
pub fn split_by_guest(data: &Dataset, train_percent: u64) -> (Dataset, Dataset) {
    let (mut train, mut eval) = (data.empty_like(), data.empty_like());
    for j in &data.journeys {
        if guest_bucket(j.guest_id) < train_percent {
            train.journeys.push(j.clone());
        } else {
            eval.journeys.push(j.clone());
        }
    }
    (train, eval)
}
