use serde::{Deserialize, Serialize};

use journey_nn::{Activation, MlpSpec};

use crate::domain::Milestone;
use crate::error::{Error, Result};

/// Per-module multipliers in the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub base: f64,
    pub twiddler: f64,
    pub combination: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            base: 1.0,
            twiddler: 1.0,
            combination: 1.0,
        }
    }
}

/// Architecture of a ranker. Input widths come from the dataset schema, so
/// the config holds hidden widths only; [`ModelConfig::specs`] resolves
/// the full layer shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub listing_hidden_dims: Vec<usize>,
    pub context_hidden_dims: Vec<usize>,
    pub head_hidden_dims: Vec<usize>,
    pub combination_hidden_dims: Vec<usize>,
    pub activation: Activation,
    /// Positive funnel tasks in funnel order, ending at `unc`.
    pub base_tasks: Vec<Milestone>,
    /// Any of `rej`, `cbh`, `cbg`.
    pub twiddler_tasks: Vec<Milestone>,
    pub combination: bool,
    /// Whether the combination loss reaches the context tower through the
    /// coefficient network. Score inputs are frozen either way.
    pub combination_grad_to_context: bool,
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// All six funnel tasks, all three negatives and the combination.
    pub fn full() -> Self {
        Self {
            embedding_dim: 16,
            listing_hidden_dims: vec![32],
            context_hidden_dims: vec![16],
            head_hidden_dims: vec![8],
            combination_hidden_dims: vec![16],
            activation: Activation::Relu,
            base_tasks: Milestone::CHAIN.to_vec(),
            twiddler_tasks: Milestone::NEGATIVE.to_vec(),
            combination: true,
            combination_grad_to_context: true,
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }

    /// Base module only, trained on `tasks`.
    pub fn base_only(tasks: &[Milestone]) -> Self {
        Self {
            base_tasks: tasks.to_vec(),
            twiddler_tasks: Vec::new(),
            combination: false,
            ..Self::full()
        }
    }

    /// Single `unc` head, no twiddlers, no combination.
    pub fn baseline() -> Self {
        Self::base_only(&[Milestone::Unc])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::config("embedding_dim", "must be positive"));
        }
        for (key, dims) in [
            ("listing_hidden_dims", &self.listing_hidden_dims),
            ("context_hidden_dims", &self.context_hidden_dims),
            ("head_hidden_dims", &self.head_hidden_dims),
            ("combination_hidden_dims", &self.combination_hidden_dims),
        ] {
            if dims.contains(&0) {
                return Err(Error::config(key, "widths must be positive"));
            }
        }
        let mut last = None;
        for &t in &self.base_tasks {
            let Some(k) = t.chain_index() else {
                return Err(Error::config("base_tasks", format!("`{t}` is not a positive funnel milestone")));
            };
            if last.is_some_and(|l| k <= l) {
                return Err(Error::config("base_tasks", "tasks must follow funnel order without repeats"));
            }
            last = Some(k);
        }
        if self.base_tasks.last() != Some(&Milestone::Unc) {
            return Err(Error::config("base_tasks", "must end with `unc`"));
        }
        for (i, &t) in self.twiddler_tasks.iter().enumerate() {
            if !t.is_negative() {
                return Err(Error::config("twiddler_tasks", format!("`{t}` is not a negative milestone")));
            }
            if self.twiddler_tasks[..i].contains(&t) {
                return Err(Error::config("twiddler_tasks", format!("`{t}` listed twice")));
            }
        }
        for (key, w) in [
            ("loss_weights.base", self.loss_weights.base),
            ("loss_weights.twiddler", self.loss_weights.twiddler),
            ("loss_weights.combination", self.loss_weights.combination),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Width of the coefficient network output.
    pub fn combination_width(&self) -> usize {
        1 + self.twiddler_tasks.len()
    }

    /// Layer shapes for a schema with the given feature widths.
    pub fn specs(&self, listing_dim: usize, context_dim: usize) -> ModelSpecs {
        let e = self.embedding_dim;
        let mlp = |input, hidden: &Vec<usize>, output, slot| {
            MlpSpec::new(input, hidden.clone(), output)
                .with_activation(self.activation)
                .with_seed(derive_seed(self.seed, slot))
        };
        ModelSpecs {
            listing_tower: mlp(listing_dim, &self.listing_hidden_dims, e, 0),
            context_tower: mlp(context_dim, &self.context_hidden_dims, e, 1),
            base_heads: self
                .base_tasks
                .iter()
                .map(|&t| (t, mlp(2 * e, &self.head_hidden_dims, 1, 10 + t.chain_index().unwrap_or(0) as u64)))
                .collect(),
            twiddler_heads: self
                .twiddler_tasks
                .iter()
                .map(|&t| (t, mlp(2 * e, &self.head_hidden_dims, 1, 20 + negative_index(t))))
                .collect(),
            combination: self
                .combination
                .then(|| mlp(e, &self.combination_hidden_dims, self.combination_width(), 30)),
        }
    }

    /// Exact number of scalar parameters for the given feature widths.
    pub fn parameter_count(&self, listing_dim: usize, context_dim: usize) -> usize {
        self.specs(listing_dim, context_dim).parameter_count()
    }
}

fn negative_index(t: Milestone) -> u64 {
    Milestone::NEGATIVE.iter().position(|&m| m == t).unwrap_or(0) as u64
}

/// Per-module seed: a fixed slot keeps e.g. the `unc` head's initial
/// weights the same across configs that share the seed.
fn derive_seed(seed: u64, slot: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ slot.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fully resolved layer shapes of every module.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpecs {
    pub listing_tower: MlpSpec,
    pub context_tower: MlpSpec,
    pub base_heads: Vec<(Milestone, MlpSpec)>,
    pub twiddler_heads: Vec<(Milestone, MlpSpec)>,
    pub combination: Option<MlpSpec>,
}

impl ModelSpecs {
    pub fn parameter_count(&self) -> usize {
        self.listing_tower.parameter_count()
            + self.context_tower.parameter_count()
            + self.base_heads.iter().map(|(_, s)| s.parameter_count()).sum::<usize>()
            + self.twiddler_heads.iter().map(|(_, s)| s.parameter_count()).sum::<usize>()
            + self.combination.as_ref().map_or(0, MlpSpec::parameter_count)
    }
}

/// Everything needed to reproduce one training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    /// Searches per mini-batch; searches are never split.
    pub batch_searches: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 4,
            batch_searches: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_searches == 0 {
            return Err(Error::config("batch_searches", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be finite and positive"));
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be finite and positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> journey_nn::AdamConfig {
        journey_nn::AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}
