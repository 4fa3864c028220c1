use super::graph::{Graph, Var};
use super::store::ParameterStore;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares back-propagated gradients of `loss` against central differences
/// on every parameter entry of `store`.
///
/// Returns the largest `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(loss: F, store: &ParameterStore, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var>,
{
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut g = Graph::new();
    let out = loss(&mut g, &analytic)?;
    g.backward(out, &mut analytic)?;

    let eval = |s: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = loss(&mut g, s)?;
        Ok(g.scalar(out))
    };

    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let n = store.value(id).len();
        for k in 0..n {
            let orig = store.value(id).as_slice().expect("contiguous")[k];
            probe.value_mut(id).as_slice_mut().expect("contiguous")[k] = orig + h;
            let up = eval(&probe)?;
            probe.value_mut(id).as_slice_mut().expect("contiguous")[k] = orig - h;
            let down = eval(&probe)?;
            probe.value_mut(id).as_slice_mut().expect("contiguous")[k] = orig;

            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.grad(id).as_slice().expect("contiguous")[k];
            let err = (exact - numeric).abs() / 1f64.max(exact.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
