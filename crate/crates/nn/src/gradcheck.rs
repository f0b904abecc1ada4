//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::store::ParameterStore;
use crate::tape::{Tape, Var};

/// Outcome of comparing tape gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_relative_error: f64,
    pub checked: usize,
}

/// Compares the tape gradient of `build` against central differences with
/// step `h` for every trainable scalar in `store`.
///
/// `build` must record a scalar loss and be a pure function of the store.
/// The relative error uses `floor` in the denominator so that gradients
/// that are zero up to rounding do not blow the ratio up.
pub fn check_gradients<F>(store: &mut ParameterStore, h: f64, floor: f64, mut build: F) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store
        .ids()
        .map(|id| store.get(id).grad().map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    store.clear_grads();

    let mut eval = |store: &ParameterStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store)?;
        Ok(tape.value(loss).values()[0])
    };

    let mut worst = 0.0f64;
    let mut checked = 0;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).requires_grad() {
            continue;
        }
        for k in 0..store.get(id).len() {
            let orig = store.get(id).values()[k];
            store.get_mut(id).values_mut()[k] = orig + h;
            let up = eval(store)?;
            store.get_mut(id).values_mut()[k] = orig - h;
            let down = eval(store)?;
            store.get_mut(id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[id.index()][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_relative_error: worst,
        checked,
    })
}
