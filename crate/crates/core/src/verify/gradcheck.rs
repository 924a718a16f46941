//! Central finite-difference gradient checking in f64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckOutcome {
    pub max_rel_err: f64,
    pub entries: usize,
}

/// Compares tape gradients of `sum(f(inputs) * p)` (random fixed `p`) with
/// central differences of the same scalar. At most `max_entries` entries per
/// input are probed, spread evenly across the tensor.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], f: F, max_entries: usize, seed: u64) -> Result<GradcheckOutcome>
where
    F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    let mut tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = Tensor::<f64>::randn(out.shape(), 1.0, &mut rng);
    let loss = tape.inner(&out, &projection)?;
    let grads = tape.backward(&loss)?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::no_grad();
        let vars: Vec<_> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        f(&mut tape, &vars)?.value().dot(&projection)
    };

    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(var).expect("every param has a gradient");
        let numel = inputs[i].numel();
        let stride = numel.div_ceil(max_entries.max(1)).max(1);
        for j in (0..numel).step_by(stride) {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - STEP;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
            entries += 1;
        }
    }
    Ok(GradcheckOutcome {
        max_rel_err: worst,
        entries,
    })
}

/// `⟨L(x), y⟩ - ⟨x, Lᵀ(y)⟩` where `Lᵀ` is obtained from the tape's backward
/// pass through the linear map `L`.
pub fn adjoint_gap<F>(x: &Tensor<f64>, y: &Tensor<f64>, linear: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &Var<f64>) -> Result<Var<f64>>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let lx = linear(&mut tape, &xv)?;
    let loss = tape.inner(&lx, y)?;
    let grads = tape.backward(&loss)?;
    let lhs = lx.value().dot(y)?;
    let rhs = x.dot(grads.get(&xv).expect("tracked input"))?;
    Ok(lhs - rhs)
}
