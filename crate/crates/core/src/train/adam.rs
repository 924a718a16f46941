use crate::autograd::GradientMap;
use crate::error::{Error, Result};
use crate::model::{BoundParams, ParamSet};
use crate::tensor::{Element, Tensor};

/// Adam moments for a fixed list of parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Element = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [Tensor<T>], grads: &[&Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid(
                "adam",
                format!(
                    "state tracks {} parameters, got {} parameters and {} gradients",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        if !(lr > 0.0) {
            return Err(Error::invalid("adam", "learning rate must be positive"));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i];
            p.expect_same_shape(g, "adam")?;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gf = gv.as_f64();
                let mf = b1 * mv.as_f64() + (1.0 - b1) * gf;
                let vf = b2 * vv.as_f64() + (1.0 - b2) * gf * gf;
                *mv = T::from_f64_lossy(mf);
                *vv = T::from_f64_lossy(vf);
                let m_hat = mf / c1;
                let v_hat = vf / c2;
                *pv = T::from_f64_lossy(pv.as_f64() - lr * m_hat / (v_hat.sqrt() + self.eps));
            }
        }
        Ok(())
    }
}

/// Applies one Adam step using gradients looked up for each bound parameter.
pub fn adam_step<T: Element>(
    params: &mut ParamSet<T>,
    bound: &BoundParams<T>,
    grads: &GradientMap<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    let mut gs = Vec::with_capacity(params.len());
    for (name, var) in params.names().iter().zip(bound.vars()) {
        gs.push(grads.get(var).ok_or_else(|| Error::MissingGradient(name.clone()))?);
    }
    state.update(params.tensors_mut(), &gs, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::<f64>::scalar(1.0)];
        let mut s = AdamState::new(&p);
        s.update(&mut p, &[&Tensor::scalar(1.0)], 0.1).unwrap();
        assert!((p[0].item() - 0.9).abs() < 1e-7);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = vec![Tensor::<f32>::from_vec(&[2], vec![0.5, -2.0]).unwrap()];
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let z = Tensor::zeros(&[2]);
        for _ in 0..5 {
            s.update(&mut p, &[&z], 1e-3).unwrap();
        }
        assert_eq!(p, before);
    }

    /// The published recurrence, written out independently on plain floats.
    fn reference_quadratic(w0: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
            out.push(w);
        }
        out
    }

    #[test]
    fn matches_reference_on_quadratic() {
        let reference = reference_quadratic(1.5, 0.05, 10);
        let mut params = ParamSet::<f64>::new();
        params.insert("w", Tensor::scalar(1.5)).unwrap();
        let mut state = AdamState::new(params.tensors());
        for want in reference {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let w = bound.vars()[0].clone();
            let loss = tape.frobenius_sq(&w);
            let grads = tape.backward(&loss).unwrap();
            adam_step(&mut params, &bound, &grads, &mut state, 0.05).unwrap();
            assert!((params.tensors()[0].item() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut params = ParamSet::<f64>::new();
        params.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut state = AdamState::new(params.tensors());
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let mut untracked = Tape::<f64>::no_grad();
        let c = untracked.constant(Tensor::scalar(2.0));
        let loss = untracked.frobenius_sq(&c);
        let grads = untracked.backward(&loss).unwrap();
        let err = adam_step(&mut params, &bound, &grads, &mut state, 0.1).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(name) if name == "w"));
    }
}
