use std::ops::Range;

use serde::{Deserialize, Serialize};

use journey_nn::Tensor;

use crate::domain::{Dataset, LabelVector, Milestone, SearchRecord};
use crate::error::{Error, Result};

/// Per-feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub listing_mean: Vec<f64>,
    pub listing_scale: Vec<f64>,
    pub context_mean: Vec<f64>,
    pub context_scale: Vec<f64>,
}

fn moments<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for r in rows {
        n += 1;
        for ((s, q), &v) in sum.iter_mut().zip(sq.iter_mut()).zip(r) {
            *s += v;
            *q += v * v;
        }
    }
    if n == 0 {
        return (vec![0.0; dim], vec![1.0; dim]);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let scale = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let var = (q / n as f64 - m * m).max(0.0);
            // constant features pass through centred
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

impl Normalizer {
    pub fn identity(listing_dim: usize, context_dim: usize) -> Self {
        Self {
            listing_mean: vec![0.0; listing_dim],
            listing_scale: vec![1.0; listing_dim],
            context_mean: vec![0.0; context_dim],
            context_scale: vec![1.0; context_dim],
        }
    }

    /// Listing statistics over impressions, context statistics over searches.
    pub fn fit(data: &Dataset) -> Self {
        let (listing_mean, listing_scale) =
            moments(data.impressions().map(|i| i.features.as_slice()), data.schema.listing_dim());
        let (context_mean, context_scale) =
            moments(data.searches().map(|s| s.context.as_slice()), data.schema.context_dim());
        Self {
            listing_mean,
            listing_scale,
            context_mean,
            context_scale,
        }
    }

    pub fn listing_dim(&self) -> usize {
        self.listing_mean.len()
    }

    pub fn context_dim(&self) -> usize {
        self.context_mean.len()
    }

    pub fn listing(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.listing_mean).zip(&self.listing_scale).map(|((v, m), s)| (v - m) / s));
    }

    pub fn context(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.context_mean).zip(&self.context_scale).map(|((v, m), s)| (v - m) / s));
    }
}

/// Whole searches packed into row-major feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[impressions, listing_dim]`, normalized.
    pub listing: Tensor,
    /// `[searches, context_dim]`, normalized; one row per search.
    pub context: Tensor,
    /// Search index of every impression row.
    pub search_of_row: Vec<usize>,
    /// Row range of each search.
    pub groups: Vec<Range<usize>>,
    pub labels: Vec<LabelVector>,
    pub listing_ids: Vec<u32>,
}

impl Batch {
    pub fn from_searches(searches: &[&SearchRecord], norm: &Normalizer) -> Result<Self> {
        let (dl, dc) = (norm.listing_dim(), norm.context_dim());
        let n: usize = searches.iter().map(|s| s.impressions.len()).sum();
        let mut listing = Vec::with_capacity(n * dl);
        let mut context = Vec::with_capacity(searches.len() * dc);
        let mut search_of_row = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(searches.len());
        let mut labels = Vec::with_capacity(n);
        let mut listing_ids = Vec::with_capacity(n);
        for (si, s) in searches.iter().enumerate() {
            if s.impressions.is_empty() {
                return Err(Error::Contract(format!("search {} has no impressions", s.search_id)));
            }
            if s.context.len() != dc {
                return Err(Error::Contract(format!(
                    "search {} has {} context features, model expects {dc}",
                    s.search_id,
                    s.context.len()
                )));
            }
            norm.context(&s.context, &mut context);
            let start = labels.len();
            for imp in &s.impressions {
                if imp.features.len() != dl {
                    return Err(Error::Contract(format!(
                        "listing {} in search {} has {} features, model expects {dl}",
                        imp.listing_id,
                        s.search_id,
                        imp.features.len()
                    )));
                }
                norm.listing(&imp.features, &mut listing);
                search_of_row.push(si);
                labels.push(imp.labels);
                listing_ids.push(imp.listing_id);
            }
            groups.push(start..labels.len());
        }
        Ok(Self {
            listing: Tensor::new(vec![n, dl], listing)?,
            context: Tensor::new(vec![searches.len(), dc], context)?,
            search_of_row,
            groups,
            labels,
            listing_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn flags(&self, m: Milestone) -> Vec<bool> {
        self.labels.iter().map(|l| l.get(m)).collect()
    }

    pub fn grades(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.grade()).collect()
    }
}
