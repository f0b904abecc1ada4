//! Spreading journey outcomes back over earlier impressions.

use std::collections::HashMap;

use super::milestone::{LabelVector, Milestone};
use super::records::JourneyRecord;
use crate::error::{Error, Result};

/// Propagates each listing's milestones across the journey.
///
/// Input labels are raw: an action is recorded only on the impression of the
/// search where it happened. For every listing:
///
/// * a chain milestone last recorded in search `s` is set on every
///   impression of that listing in searches `0..=s`;
/// * a negative milestone (and the chain milestones it implies) is set on
///   every impression of that listing in the journey.
///
/// The function is idempotent. Raw labels that break the funnel are
/// rejected, as are combinations that cannot coexist once spread (e.g. a
/// listing both rejected and booked within one journey).
pub fn attribute_labels(journey: &JourneyRecord) -> Result<JourneyRecord> {
    for (si, s) in journey.searches.iter().enumerate() {
        for imp in &s.impressions {
            if let Some(rule) = imp.labels.violations().first() {
                return Err(Error::Validation(format!(
                    "guest {} search {} listing {}: raw labels {:?} violate `{}`",
                    journey.guest_id,
                    si,
                    imp.listing_id,
                    imp.labels,
                    rule.describe()
                )));
            }
        }
    }

    // listing -> (last search index per chain milestone, journey-wide labels)
    let mut last_seen: HashMap<u32, [Option<usize>; 6]> = HashMap::new();
    let mut everywhere: HashMap<u32, LabelVector> = HashMap::new();
    for (si, s) in journey.searches.iter().enumerate() {
        for imp in &s.impressions {
            let entry = last_seen.entry(imp.listing_id).or_insert([None; 6]);
            for (k, &m) in Milestone::CHAIN.iter().enumerate() {
                if imp.labels.get(m) {
                    entry[k] = Some(si);
                }
            }
            for &neg in &Milestone::NEGATIVE {
                if imp.labels.get(neg) {
                    let w = everywhere.entry(imp.listing_id).or_insert_with(LabelVector::empty);
                    *w = w.union(LabelVector::from_milestones(neg.implied_chain()).with(neg));
                }
            }
        }
    }

    let mut out = journey.clone();
    for (si, s) in out.searches.iter_mut().enumerate() {
        for imp in &mut s.impressions {
            let mut labels = imp.labels.with(Milestone::Imp);
            if let Some(last) = last_seen.get(&imp.listing_id) {
                for (k, &m) in Milestone::CHAIN.iter().enumerate() {
                    if last[k].is_some_and(|l| si <= l) {
                        labels.set(m, true);
                    }
                }
            }
            if let Some(w) = everywhere.get(&imp.listing_id) {
                labels = labels.union(*w);
            }
            if let Some(rule) = labels.violations().first() {
                return Err(Error::Validation(format!(
                    "guest {} listing {}: attributed labels {:?} violate `{}`",
                    journey.guest_id,
                    imp.listing_id,
                    labels,
                    rule.describe()
                )));
            }
            imp.labels = labels;
        }
    }
    Ok(out)
}
