use super::tape::Detached;
use super::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at that coordinate.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

/// Compares backward-pass gradients of the scalar built by `f` against
/// central differences `(f(θ+εe) − f(θ−εe)) / 2ε` for every coordinate of
/// `params`. Values cut off by [`Tape::detach`] keep their unperturbed
/// values in the perturbed passes, so detached paths count as constants on
/// both sides. The store is restored afterwards.
pub fn grad_check<F>(store: &mut ParamStore, params: &[ParamId], eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let (analytic, frozen): (Vec<Vec<f64>>, _) = {
        let mut tape = Tape::with_detached(store, Detached::Record(Vec::new()));
        let loss = f(&mut tape)?;
        let grads = tape.backward(loss)?;
        let frozen = tape.take_detached();
        let a = params
            .iter()
            .map(|&id| match grads.param(id) {
                Some(g) => g.data().to_vec(),
                None => vec![0.0; store.get(id).len()],
            })
            .collect();
        (a, frozen)
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::with_detached(store, Detached::Replay(frozen.clone().into_iter()));
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).item())
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    for (&id, a) in params.iter().zip(&analytic) {
        for (j, &aj) in a.iter().enumerate() {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig;
            let nj = (plus - minus) / (2.0 * eps);
            let err = rel_error(aj, nj);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), j));
                report.worst_values = (aj, nj);
            }
        }
    }
    Ok(report)
}
