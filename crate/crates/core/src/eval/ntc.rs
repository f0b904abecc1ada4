use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Milestone};
use crate::error::{Error, Result};
use crate::model::JourneyRanker;

/// Mean normalized twiddler coefficient (`alpha_t / alpha_base`) per bucket
/// of one context feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtcCurve {
    pub feature: String,
    pub task: Milestone,
    /// `n_buckets + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    /// Searches per bucket.
    pub counts: Vec<usize>,
    /// Signed mean NTC; `None` for empty buckets.
    pub signed: Vec<Option<f64>>,
    /// Mean |NTC|.
    pub magnitude: Vec<Option<f64>>,
    /// `signed` divided by its first non-empty bucket.
    pub signed_normalized: Vec<Option<f64>>,
    pub magnitude_normalized: Vec<Option<f64>>,
    pub warning: Option<String>,
}

fn normalized(v: &[Option<f64>]) -> Vec<Option<f64>> {
    let first = v.iter().flatten().next().copied();
    v.iter()
        .map(|x| match (x, first) {
            (Some(x), Some(f)) if f != 0.0 => Some(x / f),
            _ => None,
        })
        .collect()
}

/// Equal-width buckets over the observed range of `feature`, one curve per
/// twiddler task. Each search contributes once (coefficients depend on the
/// context only).
pub fn ntc_curves(model: &JourneyRanker, data: &Dataset, feature: &str, n_buckets: usize) -> Result<Vec<NtcCurve>> {
    model.check_schema(&data.schema)?;
    if !model.config().combination {
        return Err(Error::Contract("NTC curves need a model with a combination module".into()));
    }
    let Some(fi) = data.schema.context_index(feature) else {
        return Err(Error::config("feature", format!("`{feature}` is not a context feature of this dataset")));
    };
    if n_buckets == 0 {
        return Err(Error::config("n_buckets", "must be positive"));
    }
    let outputs = model.outputs_for(data, 256)?;
    let values: Vec<f64> = data.searches().map(|s| s.context[fi]).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (edges, warning) = if values.is_empty() || hi <= lo {
        let msg = format!("feature `{feature}` is constant; a single bucket is reported");
        log::warn!("{msg}");
        let c = if values.is_empty() { 0.0 } else { lo };
        (vec![c - 0.5, c + 0.5], Some(msg))
    } else {
        let w = (hi - lo) / n_buckets as f64;
        let mut e: Vec<f64> = (0..=n_buckets).map(|i| lo + w * i as f64).collect();
        e[n_buckets] = hi;
        (e, None)
    };
    let nb = edges.len() - 1;
    let bucket_of = |v: f64| -> usize {
        let pos = edges[1..nb].partition_point(|&e| e <= v);
        pos.min(nb - 1)
    };

    let tasks = &model.config().twiddler_tasks;
    let mut counts = vec![0usize; nb];
    let mut signed = vec![vec![0.0; nb]; tasks.len()];
    let mut magnitude = vec![vec![0.0; nb]; tasks.len()];
    for (o, &v) in outputs.iter().zip(&values) {
        let b = bucket_of(v);
        counts[b] += 1;
        let ab = o.alpha_base.as_ref().expect("combination present")[0];
        for (t, at) in o.alpha_twiddler.iter().enumerate() {
            let ntc = at[0] / ab;
            signed[t][b] += ntc;
            magnitude[t][b] += ntc.abs();
        }
    }
    let mean = |sums: &[f64]| -> Vec<Option<f64>> {
        sums.iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    };
    Ok(tasks
        .iter()
        .enumerate()
        .map(|(t, &task)| {
            let s = mean(&signed[t]);
            let m = mean(&magnitude[t]);
            NtcCurve {
                feature: feature.to_string(),
                task,
                edges: edges.clone(),
                counts: counts.clone(),
                signed_normalized: normalized(&s),
                magnitude_normalized: normalized(&m),
                signed: s,
                magnitude: m,
                warning: warning.clone(),
            }
        })
        .collect())
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

/// `feature,task,bucket,lower,upper,count,ntc,ntc_abs,ntc_normalized,ntc_abs_normalized`
pub fn ntc_csv(curves: &[NtcCurve]) -> String {
    let mut s = String::from("feature,task,bucket,lower,upper,count,ntc,ntc_abs,ntc_normalized,ntc_abs_normalized\n");
    for c in curves {
        for b in 0..c.counts.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.feature,
                c.task,
                b,
                c.edges[b],
                c.edges[b + 1],
                c.counts[b],
                cell(c.signed[b]),
                cell(c.magnitude[b]),
                cell(c.signed_normalized[b]),
                cell(c.magnitude_normalized[b]),
            ));
        }
    }
    s
}

/// Both end buckets above the middle bucket.
pub fn is_u_shaped(values: &[Option<f64>]) -> bool {
    let n = values.len();
    if n < 3 {
        return false;
    }
    match (values[0], values[n / 2], values[n - 1]) {
        (Some(a), Some(m), Some(b)) => a > m && b > m,
        _ => false,
    }
}

/// Every non-empty bucket above the previous non-empty one.
pub fn is_increasing(values: &[Option<f64>]) -> bool {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0])
}
