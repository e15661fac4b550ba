//! Central finite-difference checks against tape gradients.

use crate::error::Result;
use crate::par;
use crate::param::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn discrepancy(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn eval_scalar<F>(f: &F, x: Tensor) -> Result<f64>
where
    F: Fn(&mut Tape<'static>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.input(x);
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).item())
}

/// Worst `|analytic - fd| / max(1, |analytic|)` over every coordinate of `x`
/// for a scalar-valued `f`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'static>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.input(x.clone());
    let out = f(&mut tape, v)?;
    let grads = tape.backward(out)?;
    let analytic = grads.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone().into_data();
        let mut minus = plus.clone();
        plus[i] += eps;
        minus[i] -= eps;
        let fp = eval_scalar(&f, Tensor::new(x.shape(), plus)?)?;
        let fm = eval_scalar(&f, Tensor::new(x.shape(), minus)?)?;
        let numeric = (fp - fm) / (2.0 * eps);
        worst = worst.max(discrepancy(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct ParamCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub coordinates: usize,
}

/// Finite-difference check of every parameter coordinate of a scalar loss
/// built by `f`. Parameters are checked in parallel, one cloned store per
/// parameter.
pub fn param_grad_check<F>(store: &ParamStore, f: F, eps: f64) -> Result<ParamCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var> + Sync + Send,
{
    let grads = {
        let mut tape = Tape::with_params(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?.into_params()
    };
    let ids: Vec<_> = store.ids().collect();
    let per_param = par::map(&ids, |&id| -> Result<(f64, usize)> {
        let mut local = store.clone();
        let n = store.value(id).numel();
        let analytic = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()));
        let mut worst = 0.0f64;
        for i in 0..n {
            let base = store.value(id).data()[i];
            let mut eval = |delta: f64| -> Result<f64> {
                let p = local.get_mut(id);
                let mut data = p.value.clone().into_data();
                data[i] = base + delta;
                p.value = Tensor::new(store.value(id).shape(), data)?;
                let mut tape = Tape::with_params(&local);
                let loss = f(&mut tape)?;
                Ok(tape.value(loss).item())
            };
            let fp = eval(eps)?;
            let fm = eval(-eps)?;
            let p = local.get_mut(id);
            let mut data = p.value.clone().into_data();
            data[i] = base;
            p.value = Tensor::new(store.value(id).shape(), data)?;
            worst = worst.max(discrepancy(analytic.data()[i], (fp - fm) / (2.0 * eps)));
        }
        Ok((worst, n))
    });
    let mut report = ParamCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        coordinates: 0,
    };
    for (id, r) in ids.iter().zip(per_param) {
        let (err, n) = r?;
        report.coordinates += n;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = store.get(*id).name.clone();
        }
    }
    Ok(report)
}
