use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

/// Adam moments for every parameter of one store, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        OptimizerState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor {
        &self.v[index]
    }
}

/// One bias-corrected Adam update from the gradients stored in `store`,
/// which are zeroed afterwards. A non-finite gradient aborts before any
/// parameter is touched.
pub fn adam_step(store: &mut ParamStore, state: &mut OptimizerState, lr: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Config(format!(
            "optimizer tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    if let Some(p) = store.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NanGradient(p.name.clone()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in store.iter_mut().enumerate() {
        let m = state.m[i].zip_with(&p.grad, "adam", |m, g| b1 * m + (1.0 - b1) * g)?;
        let v = state.v[i].zip_with(&p.grad, "adam", |v, g| b2 * v + (1.0 - b2) * g * g)?;
        let update: Vec<f64> = m
            .data()
            .iter()
            .zip(v.data())
            .map(|(&m, &v)| lr * (m / c1) / ((v / c2).sqrt() + eps))
            .collect();
        let values: Vec<f64> = p.value.data().iter().zip(&update).map(|(x, u)| x - u).collect();
        p.value = Tensor::new(p.value.shape(), values)?;
        state.m[i] = m;
        state.v[i] = v;
    }
    store.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("x", Tensor::vector(vec![x])).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = scalar_store(0.0);
        let mut st = OptimizerState::new(&store);
        store.iter_mut().next().unwrap().grad = Tensor::vector(vec![0.5]);
        adam_step(&mut store, &mut st, 1e-4).unwrap();
        let x = store.iter().next().unwrap().value.data()[0];
        assert!((x + 1e-4).abs() < 1e-11);
        assert_eq!(store.iter().next().unwrap().grad.data(), &[0.0]);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut store = scalar_store(1.25);
        let mut st = OptimizerState::new(&store);
        adam_step(&mut store, &mut st, 1e-3).unwrap();
        assert_eq!(store.iter().next().unwrap().value.data(), &[1.25]);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut store = scalar_store(1.0);
        let mut st = OptimizerState::new(&store);
        store.iter_mut().next().unwrap().grad = Tensor::vector(vec![f64::NAN]);
        let err = adam_step(&mut store, &mut st, 1e-3).unwrap_err();
        assert!(err.to_string().contains("`x`"));
        assert_eq!(st.step(), 0);
    }
}
