use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use journey_nn::{Mlp, ParamId, ParamManifest, ParameterStore, Tape, Tensor, Var};

use super::batch::{Batch, Normalizer};
use super::config::{ModelConfig, ModelSpecs};
use crate::domain::{Dataset, ImpressionRecord, LabelVector, Milestone, Schema, SearchRecord};
use crate::error::{Error, Result};

/// Architecture module a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Shared,
    Base,
    Twiddler,
    Combination,
}

impl Module {
    pub fn prefix(self) -> &'static str {
        match self {
            Module::Shared => "shared.",
            Module::Base => "base.",
            Module::Twiddler => "twiddler.",
            Module::Combination => "combination.",
        }
    }
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// `[rows, embedding_dim]`.
    pub emb_l: Var,
    /// `[rows, embedding_dim]`, the search's context embedding per row.
    pub emb_c: Var,
    /// `[rows, 1]` per base task.
    pub cond_logits: Vec<Var>,
    pub log_joint: Vec<Var>,
    pub y_base: Var,
    pub y_twiddler: Vec<Var>,
    pub alpha_base: Option<Var>,
    pub alpha_twiddler: Vec<Var>,
    pub y_combination: Option<Var>,
}

impl ForwardVars {
    /// The ranking score: the combination output when present, else `y_base`.
    pub fn score(&self) -> Var {
        self.y_combination.unwrap_or(self.y_base)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub base: Var,
    pub twiddler: Option<Var>,
    pub combination: Option<Var>,
    pub total: Var,
}

/// Per-row values of every intermediate output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutputs {
    pub base_tasks: Vec<Milestone>,
    pub cond_logits: Vec<Vec<f64>>,
    pub log_joint: Vec<Vec<f64>>,
    pub y_base: Vec<f64>,
    pub twiddler_tasks: Vec<Milestone>,
    pub y_twiddler: Vec<Vec<f64>>,
    pub alpha_base: Option<Vec<f64>>,
    pub alpha_twiddler: Vec<Vec<f64>>,
    pub y_combination: Option<Vec<f64>>,
}

impl ModelOutputs {
    pub fn score(&self) -> &[f64] {
        self.y_combination.as_deref().unwrap_or(&self.y_base)
    }

    pub fn len(&self) -> usize {
        self.y_base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_base.is_empty()
    }

    /// Outputs of row `i` alone.
    pub fn row(&self, i: usize) -> ModelOutputs {
        let pick = |v: &Vec<Vec<f64>>| v.iter().map(|c| vec![c[i]]).collect();
        ModelOutputs {
            base_tasks: self.base_tasks.clone(),
            cond_logits: pick(&self.cond_logits),
            log_joint: pick(&self.log_joint),
            y_base: vec![self.y_base[i]],
            twiddler_tasks: self.twiddler_tasks.clone(),
            y_twiddler: pick(&self.y_twiddler),
            alpha_base: self.alpha_base.as_ref().map(|a| vec![a[i]]),
            alpha_twiddler: pick(&self.alpha_twiddler),
            y_combination: self.y_combination.as_ref().map(|y| vec![y[i]]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub listing_id: u32,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub listing_id: u32,
    /// 1-based.
    pub rank: usize,
    pub score: f64,
    pub outputs: ModelOutputs,
}

/// The model manifest stored next to the parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub version: u32,
    pub config: ModelConfig,
    pub schema: Schema,
    pub schema_hash: String,
    pub normalizer: Normalizer,
    /// One per base task, same order.
    pub task_weights: Vec<f64>,
    pub params: ParamManifest,
    pub blob_sha256: String,
}

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct JourneyRanker {
    config: ModelConfig,
    schema: Schema,
    normalizer: Normalizer,
    task_weights: Vec<f64>,
    store: ParameterStore,
    listing_tower: Mlp,
    context_tower: Mlp,
    base_heads: Vec<Mlp>,
    twiddler_heads: Vec<Mlp>,
    combination: Option<Mlp>,
}

struct Bound {
    listing_tower: Mlp,
    context_tower: Mlp,
    base_heads: Vec<Mlp>,
    twiddler_heads: Vec<Mlp>,
    combination: Option<Mlp>,
}

fn bind_all(specs: &ModelSpecs, store: &mut ParameterStore, fresh: bool) -> Result<Bound> {
    let mut make = |spec, prefix: &str| -> Result<Mlp> {
        Ok(if fresh {
            Mlp::init(spec, prefix, store)?
        } else {
            Mlp::bind(spec, prefix, store)?
        })
    };
    let listing_tower = make(&specs.listing_tower, "shared.listing")?;
    let context_tower = make(&specs.context_tower, "shared.context")?;
    let base_heads = specs
        .base_heads
        .iter()
        .map(|(t, s)| make(s, &format!("base.{t}")))
        .collect::<Result<_>>()?;
    let twiddler_heads = specs
        .twiddler_heads
        .iter()
        .map(|(t, s)| make(s, &format!("twiddler.{t}")))
        .collect::<Result<_>>()?;
    let combination = specs.combination.as_ref().map(|s| make(s, "combination")).transpose()?;
    Ok(Bound {
        listing_tower,
        context_tower,
        base_heads,
        twiddler_heads,
        combination,
    })
}

impl JourneyRanker {
    /// Freshly initialized model for `schema`. `task_weights` has one entry
    /// per base task.
    pub fn init(config: &ModelConfig, schema: &Schema, normalizer: Normalizer, task_weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if task_weights.len() != config.base_tasks.len() {
            return Err(Error::Contract(format!(
                "{} task weights for {} base tasks",
                task_weights.len(),
                config.base_tasks.len()
            )));
        }
        if normalizer.listing_dim() != schema.listing_dim() || normalizer.context_dim() != schema.context_dim() {
            return Err(Error::Contract("normalizer widths differ from schema".into()));
        }
        let specs = config.specs(schema.listing_dim(), schema.context_dim());
        let mut store = ParameterStore::new();
        let b = bind_all(&specs, &mut store, true)?;
        if let (Some(comb), Some(spec)) = (&b.combination, &specs.combination) {
            identity_start(comb, spec, &mut store);
        }
        Ok(Self {
            config: config.clone(),
            schema: schema.clone(),
            normalizer,
            task_weights,
            store,
            listing_tower: b.listing_tower,
            context_tower: b.context_tower,
            base_heads: b.base_heads,
            twiddler_heads: b.twiddler_heads,
            combination: b.combination,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn task_weights(&self) -> &[f64] {
        &self.task_weights
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    /// Parameter ids of one architecture module.
    pub fn module_params(&self, module: Module) -> Vec<ParamId> {
        self.store
            .ids()
            .filter(|&id| self.store.name(id).starts_with(module.prefix()))
            .collect()
    }

    /// Listing embeddings per row, context embeddings per search, and the
    /// latter expanded to rows.
    pub fn shared_forward(&self, tape: &mut Tape, batch: &Batch) -> Result<(Var, Var, Var)> {
        self.shared_forward_with(&self.store, tape, batch)
    }

    fn shared_forward_with(&self, store: &ParameterStore, tape: &mut Tape, batch: &Batch) -> Result<(Var, Var, Var)> {
        let fl = tape.input(batch.listing.clone());
        let fc = tape.input(batch.context.clone());
        let emb_l = self.listing_tower.forward(tape, store, fl)?;
        let ctx = self.context_tower.forward(tape, store, fc)?;
        let emb_c = tape.gather_rows(ctx, &batch.search_of_row)?;
        Ok((emb_l, ctx, emb_c))
    }

    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<ForwardVars> {
        self.forward_with(&self.store, tape, batch)
    }

    /// [`JourneyRanker::forward`] reading parameters from `store`, which must
    /// have this model's layout (a clone of [`JourneyRanker::store`]).
    pub fn forward_with(&self, store: &ParameterStore, tape: &mut Tape, batch: &Batch) -> Result<ForwardVars> {
        let (emb_l, ctx, emb_c) = self.shared_forward_with(store, tape, batch)?;
        let joint_in = tape.concat_cols(emb_l, emb_c)?;

        let mut cond_logits = Vec::with_capacity(self.base_heads.len());
        let mut log_joint: Vec<Var> = Vec::with_capacity(self.base_heads.len());
        for head in &self.base_heads {
            let z = head.forward(tape, store, joint_in)?;
            let ls = tape.log_sigmoid(z);
            let lj = match log_joint.last() {
                Some(&prev) => tape.add(prev, ls)?,
                None => ls,
            };
            cond_logits.push(z);
            log_joint.push(lj);
        }
        let y_base = *log_joint.last().expect("validated: at least one base task");

        let y_twiddler = self
            .twiddler_heads
            .iter()
            .map(|h| h.forward(tape, store, joint_in).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;

        let (mut alpha_base, mut alpha_twiddler, mut y_combination) = (None, Vec::new(), None);
        if let Some(comb) = &self.combination {
            // coefficients depend on the search only: compute per search, expand to rows
            let input = if self.config.combination_grad_to_context {
                ctx
            } else {
                tape.stop_gradient(ctx)
            };
            let raw_search = comb.forward(tape, store, input)?;
            let raw = tape.gather_rows(raw_search, &batch.search_of_row)?;
            let a0 = tape.column(raw, 0)?;
            let ab = tape.softplus(a0);
            let yb = tape.stop_gradient(y_base);
            let mut y = tape.mul(ab, yb)?;
            for (t, &yt) in y_twiddler.iter().enumerate() {
                let at = tape.column(raw, t + 1)?;
                let yt = tape.stop_gradient(yt);
                let term = tape.mul(at, yt)?;
                y = tape.add(y, term)?;
                alpha_twiddler.push(at);
            }
            alpha_base = Some(ab);
            y_combination = Some(y);
        }
        Ok(ForwardVars {
            emb_l,
            emb_c,
            cond_logits,
            log_joint,
            y_base,
            y_twiddler,
            alpha_base,
            alpha_twiddler,
            y_combination,
        })
    }

    /// Σ over base tasks of the weighted listwise softmax loss on that
    /// task's joint log-probability, summed over searches.
    pub fn base_loss(&self, tape: &mut Tape, fw: &ForwardVars, batch: &Batch) -> Result<Var> {
        let mut total: Option<Var> = None;
        for ((&task, &lj), &w) in self.config.base_tasks.iter().zip(&fw.log_joint).zip(&self.task_weights) {
            let l = tape.listwise_softmax_loss(lj, &batch.groups, &batch.flags(task), w)?;
            total = Some(match total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
        }
        Ok(total.expect("at least one base task"))
    }

    /// Σ over twiddler tasks of masked mean BCE: rejections among requests,
    /// cancellations among bookings. `None` without twiddlers.
    pub fn twiddler_loss(&self, tape: &mut Tape, fw: &ForwardVars, batch: &Batch) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for (&task, &y) in self.config.twiddler_tasks.iter().zip(&fw.y_twiddler) {
            let eligible = batch.flags(eligibility(task));
            let l = tape.masked_bce_with_logits(y, &batch.flags(task), &eligible)?;
            total = Some(match total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
        }
        Ok(total)
    }

    /// Pairwise logistic loss on graded impressions. `None` without a
    /// combination module.
    pub fn combination_loss(&self, tape: &mut Tape, fw: &ForwardVars, batch: &Batch) -> Result<Option<Var>> {
        fw.y_combination
            .map(|y| tape.pairwise_logistic_loss(y, &batch.groups, &batch.grades()))
            .transpose()
            .map_err(Error::from)
    }

    pub fn losses(&self, tape: &mut Tape, fw: &ForwardVars, batch: &Batch) -> Result<LossVars> {
        let w = self.config.loss_weights;
        let base = self.base_loss(tape, fw, batch)?;
        let twiddler = self.twiddler_loss(tape, fw, batch)?;
        let combination = self.combination_loss(tape, fw, batch)?;
        let mut total = if w.base == 1.0 { base } else { tape.scale(base, w.base) };
        for (part, wt) in [(twiddler, w.twiddler), (combination, w.combination)] {
            if let Some(p) = part {
                let p = if wt == 1.0 { p } else { tape.scale(p, wt) };
                total = tape.add(total, p)?;
            }
        }
        Ok(LossVars {
            base,
            twiddler,
            combination,
            total,
        })
    }

    /// Values of every output for `batch`.
    pub fn outputs(&self, batch: &Batch) -> Result<ModelOutputs> {
        let mut tape = Tape::new();
        let fw = self.forward(&mut tape, batch)?;
        let col = |v: Var| tape.value(v).values().to_vec();
        Ok(ModelOutputs {
            base_tasks: self.config.base_tasks.clone(),
            cond_logits: fw.cond_logits.iter().map(|&v| col(v)).collect(),
            log_joint: fw.log_joint.iter().map(|&v| col(v)).collect(),
            y_base: col(fw.y_base),
            twiddler_tasks: self.config.twiddler_tasks.clone(),
            y_twiddler: fw.y_twiddler.iter().map(|&v| col(v)).collect(),
            alpha_base: fw.alpha_base.map(col),
            alpha_twiddler: fw.alpha_twiddler.iter().map(|&v| col(v)).collect(),
            y_combination: fw.y_combination.map(col),
        })
    }

    /// Ranks `candidates` for one search context by score, highest first,
    /// ties by listing id.
    pub fn score(&self, context: &[f64], candidates: &[Candidate]) -> Result<Vec<ScoredCandidate>> {
        if candidates.is_empty() {
            return Err(Error::Contract("no candidates to score".into()));
        }
        let search = SearchRecord {
            search_id: 0,
            t_days: 0.0,
            context: context.to_vec(),
            impressions: candidates
                .iter()
                .enumerate()
                .map(|(p, c)| ImpressionRecord {
                    listing_id: c.listing_id,
                    position: p as u32 + 1,
                    features: c.features.clone(),
                    labels: LabelVector::impression(),
                })
                .collect(),
        };
        let batch = Batch::from_searches(&[&search], &self.normalizer)?;
        let out = self.outputs(&batch)?;
        let scores = out.score();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(candidates[a].listing_id.cmp(&candidates[b].listing_id))
        });
        Ok(order
            .into_iter()
            .enumerate()
            .map(|(r, i)| ScoredCandidate {
                listing_id: candidates[i].listing_id,
                rank: r + 1,
                score: scores[i],
                outputs: out.row(i),
            })
            .collect())
    }

    /// Refuses data whose schema differs from the training schema.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let (expected, found) = (self.schema.hash(), schema.hash());
        if expected != found {
            return Err(Error::SchemaMismatch { expected, found });
        }
        Ok(())
    }

    /// Outputs for every search of `data`, in dataset order, computed in
    /// chunks of `chunk` searches.
    pub fn outputs_for(&self, data: &Dataset, chunk: usize) -> Result<Vec<ModelOutputs>> {
        self.check_schema(&data.schema)?;
        let searches: Vec<&SearchRecord> = data.searches().collect();
        let mut out = Vec::with_capacity(searches.len());
        for group in searches.chunks(chunk.max(1)) {
            let batch = Batch::from_searches(group, &self.normalizer)?;
            let all = self.outputs(&batch)?;
            for g in &batch.groups {
                out.push(slice_rows(&all, g.clone()));
            }
        }
        Ok(out)
    }

    /// Final scores for every search of `data`.
    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .outputs_for(data, 256)?
            .into_iter()
            .map(|o| o.score().to_vec())
            .collect())
    }

    pub fn manifest_and_blob(&self, blob_name: &str) -> (ModelManifest, Vec<u8>) {
        let (params, blob) = self.store.to_parts(blob_name);
        let manifest = ModelManifest {
            version: MANIFEST_VERSION,
            config: self.config.clone(),
            schema: self.schema.clone(),
            schema_hash: self.schema.hash(),
            normalizer: self.normalizer.clone(),
            task_weights: self.task_weights.clone(),
            params,
            blob_sha256: hex::encode(Sha256::digest(&blob)),
        };
        (manifest, blob)
    }

    /// Writes `<stem>.json` (manifest) and `<stem>.bin` (parameters).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let blob_name = format!("{stem}.bin");
        let (manifest, blob) = self.manifest_and_blob(&blob_name);
        std::fs::write(dir.join(&blob_name), &blob)?;
        let path = dir.join(format!("{stem}.json"));
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        std::fs::write(&path, json)?;
        Ok(path)
    }

    /// Loads a manifest written by [`JourneyRanker::save`]; the blob is
    /// resolved relative to the manifest.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let blob = std::fs::read(dir.join(&manifest.params.blob))?;
        Self::from_manifest(manifest, &blob)
    }

    pub fn from_manifest(manifest: ModelManifest, blob: &[u8]) -> Result<Self> {
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Contract(format!("unsupported model manifest version {}", manifest.version)));
        }
        if hex::encode(Sha256::digest(blob)) != manifest.blob_sha256 {
            return Err(Error::Contract("parameter blob does not match its recorded hash".into()));
        }
        if manifest.schema.hash() != manifest.schema_hash {
            return Err(Error::Contract("schema does not match its recorded hash".into()));
        }
        manifest.config.validate()?;
        let mut store = ParameterStore::from_parts(&manifest.params, blob)?;
        let specs = manifest
            .config
            .specs(manifest.schema.listing_dim(), manifest.schema.context_dim());
        if store.parameter_count() != specs.parameter_count() {
            return Err(Error::Contract("parameter blob does not match the config".into()));
        }
        let b = bind_all(&specs, &mut store, false)?;
        Ok(Self {
            config: manifest.config,
            schema: manifest.schema,
            normalizer: manifest.normalizer,
            task_weights: manifest.task_weights,
            store,
            listing_tower: b.listing_tower,
            context_tower: b.context_tower,
            base_heads: b.base_heads,
            twiddler_heads: b.twiddler_heads,
            combination: b.combination,
        })
    }

    /// Overwrites every parameter with `value` (test and diagnostic aid).
    pub fn fill_parameters(&mut self, value: f64) {
        let ids: Vec<ParamId> = self.store.ids().collect();
        for id in ids {
            self.store.get_mut(id).values_mut().fill(value);
        }
    }

    pub fn parameter(&self, name: &str) -> Result<&Tensor> {
        Ok(self.store.by_name(name)?)
    }
}

/// Zeroes the coefficient network's output layer and sets its bias to
/// `alpha_base = 1`, `alpha_t = 0`, so training starts from the base ranking.
fn identity_start(comb: &Mlp, spec: &journey_nn::MlpSpec, store: &mut ParameterStore) {
    let ids = comb.param_ids();
    let (w, b) = (ids[ids.len() - 2], ids[ids.len() - 1]);
    store.get_mut(w).values_mut().fill(0.0);
    let bias = store.get_mut(b).values_mut();
    bias.fill(0.0);
    bias[0] = journey_nn::softplus_inverse(1.0);
    debug_assert_eq!(bias.len(), spec.output_dim);
}

/// The milestone that makes an impression eligible for a twiddler task.
pub fn eligibility(task: Milestone) -> Milestone {
    match task {
        Milestone::Rej => Milestone::Req,
        _ => Milestone::Book,
    }
}

fn slice_rows(o: &ModelOutputs, r: std::ops::Range<usize>) -> ModelOutputs {
    let cut = |v: &Vec<Vec<f64>>| v.iter().map(|c| c[r.clone()].to_vec()).collect();
    ModelOutputs {
        base_tasks: o.base_tasks.clone(),
        cond_logits: cut(&o.cond_logits),
        log_joint: cut(&o.log_joint),
        y_base: o.y_base[r.clone()].to_vec(),
        twiddler_tasks: o.twiddler_tasks.clone(),
        y_twiddler: cut(&o.y_twiddler),
        alpha_base: o.alpha_base.as_ref().map(|a| a[r.clone()].to_vec()),
        alpha_twiddler: cut(&o.alpha_twiddler),
        y_combination: o.y_combination.as_ref().map(|y| y[r.clone()].to_vec()),
    }
}
