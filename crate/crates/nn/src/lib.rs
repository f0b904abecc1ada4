//! A deliberately small numerical engine: dense `f64` tensors of rank at most
//! two, a reverse-mode gradient tape, multi-layer perceptrons and an
//! adaptive-moment optimizer.
//!
//! Everything the ranking model needs is here and nothing more. Values live
//! row-major; column vectors are `[n, 1]`.
//!
//! ```
//! use journey_nn::{ParameterStore, Tape, Tensor};
//!
//! let mut store = ParameterStore::new();
//! let w = store.insert("w", Tensor::param(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
//!
//! let mut tape = Tape::new();
//! let wv = tape.param(&store, w);
//! let x = tape.input(Tensor::new(vec![1, 3], vec![4.0, 5.0, 6.0]).unwrap());
//! let prod = tape.mul(wv, x).unwrap();
//! let loss = tape.sum(prod);
//! tape.backward(loss, &mut store).unwrap();
//!
//! assert_eq!(store.get(w).grad().unwrap(), &[4.0, 5.0, 6.0]);
//! ```

mod error;
pub mod gradcheck;
mod mlp;
mod optim;
mod store;
mod tape;
mod tensor;

pub use error::{NnError, Result};
pub use mlp::{forward_values, Activation, Mlp, MlpSpec};
pub use optim::{Adam, AdamConfig};
pub use store::{ParamEntry, ParamId, ParamManifest, ParameterStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Numerically stable `ln(sigmoid(x))`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    // ln(e^y - 1), written to avoid overflow for large y
    y + (-(-y).exp_m1()).ln()
}
