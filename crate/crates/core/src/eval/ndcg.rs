use std::collections::HashSet;

use crate::error::{Error, Result};

/// Binary-relevance NDCG with a log2 discount.
///
/// Returns `None` when `positives` is empty (the search carries no signal
/// and is skipped by callers). Positives missing from `ranked` are a
/// contract error.
pub fn ndcg_binary(ranked: &[u32], positives: &[u32]) -> Result<Option<f64>> {
    let pos: HashSet<u32> = positives.iter().copied().collect();
    if pos.is_empty() {
        return Ok(None);
    }
    let mut found = 0usize;
    let mut dcg = 0.0;
    for (r, id) in ranked.iter().enumerate() {
        if pos.contains(id) {
            dcg += discount(r);
            found += 1;
        }
    }
    if found != pos.len() {
        return Err(Error::Contract(format!(
            "{} of {} positives are not in the ranked list",
            pos.len() - found,
            pos.len()
        )));
    }
    Ok(Some(dcg / ideal_dcg(pos.len())))
}

/// `1 / log2(rank + 2)` for a 0-based rank.
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 2) as f64).log2()
}

fn ideal_dcg(n_pos: usize) -> f64 {
    (0..n_pos).map(discount).sum()
}

/// Order of rows by descending score; ties broken by ascending listing id.
pub fn rank_by_score(scores: &[f64], listing_ids: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(listing_ids[a].cmp(&listing_ids[b])));
    order
}

/// NDCG of one search given per-row scores and relevance flags; `None`
/// without relevant rows.
pub fn ndcg_from_scores(scores: &[f64], listing_ids: &[u32], relevant: &[bool]) -> Option<f64> {
    let n_pos = relevant.iter().filter(|&&r| r).count();
    if n_pos == 0 {
        return None;
    }
    let dcg: f64 = rank_by_score(scores, listing_ids)
        .iter()
        .enumerate()
        .filter(|(_, &row)| relevant[row])
        .map(|(r, _)| discount(r))
        .sum();
    Some(dcg / ideal_dcg(n_pos))
}
