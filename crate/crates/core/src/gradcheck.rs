//! Finite-difference verification of reverse-mode gradients.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Checks the tape's analytic gradients against central finite differences.
///
/// `f` receives a fresh tape plus one leaf per entry of `params` (in order)
/// and must return the scalar loss node. The same closure is evaluated
/// repeatedly with perturbed parameter copies, so it must be deterministic.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - central| / max(|analytic|, |central|, floor)`. The floor is
/// 1e-8, raised to the central-difference resolution `3e4 * eps * |f| / h`
/// when that is larger: differencing a float64 loss of magnitude `|f|`
/// cannot resolve gradient components below roughly `eps * |f| / h`, so
/// without the raise, entries whose true gradient sits at that noise level
/// (deep stacked-LSTM parameters routinely do) would register round-off as
/// gradient error.
pub fn fd_check<F>(f: &F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(h > 0.0) {
        return Err(Error::contract(format!("finite-difference step must be positive, got {h}")));
    }
    if params.is_empty() {
        return Err(Error::contract("fd_check needs at least one parameter".to_string()));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> =
        params.iter().map(|p| tape.param(p)).collect::<Result<_>>()?;
    let loss = f(&mut tape, &ids)?;
    let base = tape.scalar_value(loss)?;
    if !base.is_finite() {
        return Err(Error::numeric(format!("loss is not finite: {base}")));
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| grads.expect(id).to_vec()).collect();

    let eval = |work: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> =
            work.iter().map(|p| tape.constant(p)).collect::<Result<_>>()?;
        let loss = f(&mut tape, &ids)?;
        let v = tape.scalar_value(loss)?;
        if !v.is_finite() {
            return Err(Error::numeric(format!("loss is not finite: {v}")));
        }
        Ok(v)
    };

    let floor = 1e-8f64.max(3e4 * f64::EPSILON * base.abs().max(1.0) / h);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel: f64 = 0.0;
    for (p, grad) in analytic.iter().enumerate() {
        for e in 0..work[p].numel() {
            let original = work[p].data()[e];
            work[p].data_mut()[e] = original + h;
            let plus = eval(&work)?;
            work[p].data_mut()[e] = original - h;
            let minus = eval(&work)?;
            work[p].data_mut()[e] = original;

            let central = (plus - minus) / (2.0 * h);
            let a = grad[e];
            let rel = (a - central).abs() / a.abs().max(central.abs()).max(floor);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
