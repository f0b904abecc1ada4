use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::store::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Shape of a fully connected network. Hidden layers use `activation`;
/// the output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    /// Σ (fan_in + 1) · fan_out.
    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "all MLP widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    fan_in: usize,
}

/// An MLP bound to its parameters in a [`ParameterStore`].
///
/// Weights are named `<prefix>.l<i>.weight` (`[fan_in, fan_out]`) and
/// `<prefix>.l<i>.bias` (`[1, fan_out]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Registers freshly initialized parameters: weights uniform in
    /// ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn init(spec: &MlpSpec, prefix: &str, store: &mut ParameterStore) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut layers = Vec::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..=limit))
                .collect();
            let weight = store.insert(
                format!("{prefix}.l{i}.weight"),
                Tensor::param(vec![fan_in, fan_out], w)?,
            )?;
            let bias = store.insert(
                format!("{prefix}.l{i}.bias"),
                Tensor::param(vec![1, fan_out], vec![0.0; fan_out])?,
            )?;
            layers.push(Layer {
                weight,
                bias,
                fan_in,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Binds to parameters already present in `store` (e.g. after loading).
    pub fn bind(spec: &MlpSpec, prefix: &str, store: &ParameterStore) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let weight = store.id(&format!("{prefix}.l{i}.weight"))?;
            let bias = store.id(&format!("{prefix}.l{i}.bias"))?;
            if store.get(weight).dims() != (fan_in, fan_out) || store.get(bias).len() != fan_out {
                return Err(NnError::LayerShape {
                    layer: i,
                    expected: fan_in,
                    got: store.get(weight).rows(),
                });
            }
            layers.push(Layer {
                weight,
                bias,
                fan_in,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// `input[batch, input_dim] -> [batch, output_dim]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, input: Var) -> Result<Var> {
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let got = tape.value(h).cols();
            if got != layer.fan_in {
                return Err(NnError::LayerShape {
                    layer: i,
                    expected: layer.fan_in,
                    got,
                });
            }
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            let z = tape.matmul(h, w)?;
            h = tape.add_bias(z, b)?;
            if i < last {
                h = match self.spec.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        Ok(h)
    }
}

/// Convenience: run `mlp` on a constant input and return the output values.
pub fn forward_values(mlp: &Mlp, store: &ParameterStore, input: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let y = mlp.forward(&mut tape, store, x)?;
    Ok(tape.value(y).clone())
}
