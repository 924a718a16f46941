//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op executed on a grad-enabled [`Tape`] whose inputs are tracked is
//! appended as a record; records are therefore in topological order and
//! [`Tape::backward`] replays them once each, in reverse. A [`Var`] holds its
//! value behind an `Rc`, so a `no_grad` tape keeps nothing alive beyond what
//! the caller still holds.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::ops::conv::{self, ConvGeom};
use crate::ops::{self, pixel_shuffle, space_to_depth};
use crate::tensor::{Element, Tensor};

thread_local! {
    static CORRUPT_CONV_BACKWARD: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with the conv2d weight gradient deliberately perturbed on the
/// current thread. Negative control for the verification suite.
pub fn with_corrupted_conv_backward<R>(f: impl FnOnce() -> R) -> R {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            CORRUPT_CONV_BACKWARD.with(|c| c.set(self.0));
        }
    }
    let _reset = Reset(CORRUPT_CONV_BACKWARD.with(|c| c.replace(true)));
    f()
}

#[derive(Clone, Debug)]
pub struct Var<T: Element = f32> {
    id: usize,
    value: Rc<Tensor<T>>,
    tracked: bool,
}

impl<T: Element> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Whether gradients flow to or through this variable.
    pub fn tracked(&self) -> bool {
        self.tracked
    }

    pub fn into_value(self) -> Tensor<T> {
        Rc::try_unwrap(self.value).unwrap_or_else(|rc| (*rc).clone())
    }
}

#[derive(Debug)]
enum Op<T: Element> {
    Conv2d {
        x: Var<T>,
        w: Var<T>,
        b: Option<Var<T>>,
        geom: ConvGeom,
    },
    /// `geom` describes the forward convolution this op is the adjoint of.
    ConvTranspose2d {
        x: Var<T>,
        w: Var<T>,
        b: Option<Var<T>>,
        geom: ConvGeom,
    },
    PixelShuffle { x: Var<T>, s: usize },
    SpaceToDepth { x: Var<T>, s: usize },
    Relu { x: Var<T> },
    Add { a: Var<T>, b: Var<T> },
    Sub { a: Var<T>, b: Var<T> },
    Scale { x: Var<T>, c: T },
    MulScalar { x: Var<T>, s: Var<T> },
    Mse { pred: Var<T>, target: Var<T> },
    FrobeniusSq { x: Var<T> },
    Matmul { a: Var<T>, b: Var<T> },
    Transpose { x: Var<T> },
    Reshape { x: Var<T> },
    Inner { x: Var<T>, weights: Tensor<T> },
}

#[derive(Debug)]
struct Record<T: Element> {
    out: usize,
    op: Op<T>,
}

#[derive(Debug)]
pub struct Tape<T: Element = f32> {
    records: Vec<Record<T>>,
    leaves: Vec<(usize, Vec<usize>)>,
    next_id: usize,
    grad_enabled: bool,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every tracked leaf of a tape.
#[derive(Debug, Default)]
pub struct GradientMap<T: Element = f32> {
    grads: HashMap<usize, Tensor<T>>,
}

impl<T: Element> GradientMap<T> {
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        self.grads.get(&var.id)
    }

    pub fn take(&mut self, var: &Var<T>) -> Option<Tensor<T>> {
        self.grads.remove(&var.id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn accumulate<T: Element>(grads: &mut HashMap<usize, Tensor<T>>, var: &Var<T>, g: Tensor<T>) {
    if !var.tracked {
        return;
    }
    debug_assert_eq!(var.shape(), g.shape());
    match grads.get_mut(&var.id) {
        Some(acc) => acc.add_assign(&g).expect("gradient shapes agree"),
        None => {
            grads.insert(var.id, g);
        }
    }
}

fn channel_sums<T: Element>(t: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = t.nchw("bias grad").expect("rank-4 gradient");
    let mut out = vec![T::zero(); c];
    for (i, chunk) in t.data().chunks(h * w).enumerate().take(n * c) {
        out[i % c] += chunk.iter().copied().sum::<T>();
    }
    Tensor::from_vec(&[c], out).expect("bias shape")
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            records: Vec::new(),
            leaves: Vec::new(),
            next_id: 0,
            grad_enabled: true,
        }
    }

    /// A tape that records nothing; every variable is untracked.
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn fresh(&mut self, value: Tensor<T>, tracked: bool) -> Var<T> {
        let id = self.next_id;
        self.next_id += 1;
        Var {
            id,
            value: Rc::new(value),
            tracked,
        }
    }

    /// Registers a tensor; it is tracked iff it requires grad and the tape
    /// records.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var<T> {
        let tracked = self.grad_enabled && value.requires_grad();
        let shape = value.shape().to_vec();
        let var = self.fresh(value, tracked);
        if tracked {
            self.leaves.push((var.id, shape));
        }
        var
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var<T> {
        self.leaf(value.with_requires_grad(true))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var<T> {
        self.leaf(value.with_requires_grad(false))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[&Var<T>]) -> Var<T> {
        let tracked = self.grad_enabled && inputs.iter().any(|v| v.tracked);
        let var = self.fresh(value, tracked);
        if tracked {
            self.records.push(Record { out: var.id, op });
        }
        var
    }

    pub fn conv2d(
        &mut self,
        x: &Var<T>,
        w: &Var<T>,
        b: Option<&Var<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<T>> {
        let geom = ConvGeom::new("conv2d", x.shape(), w.shape(), stride, padding)?;
        let value = ops::conv2d(x.value(), w.value(), b.map(|b| b.value()), stride, padding)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let op = Op::Conv2d {
            x: x.clone(),
            w: w.clone(),
            b: b.cloned(),
            geom,
        };
        Ok(self.push(value, op, &inputs))
    }

    /// Transposed convolution; `w` is `[Cin, Cout, kh, kw]`.
    pub fn conv2d_transpose(
        &mut self,
        x: &Var<T>,
        w: &Var<T>,
        b: Option<&Var<T>>,
        stride: usize,
    ) -> Result<Var<T>> {
        let geom = conv::transpose_geom(x.shape(), w.shape(), stride)?;
        let value = ops::conv2d_transpose(x.value(), w.value(), b.map(|b| b.value()), stride)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let op = Op::ConvTranspose2d {
            x: x.clone(),
            w: w.clone(),
            b: b.cloned(),
            geom,
        };
        Ok(self.push(value, op, &inputs))
    }

    pub fn pixel_shuffle(&mut self, x: &Var<T>, s: usize) -> Result<Var<T>> {
        let value = pixel_shuffle(x.value(), s)?;
        Ok(self.push(value, Op::PixelShuffle { x: x.clone(), s }, &[x]))
    }

    pub fn space_to_depth(&mut self, x: &Var<T>, s: usize) -> Result<Var<T>> {
        let value = space_to_depth(x.value(), s)?;
        Ok(self.push(value, Op::SpaceToDepth { x: x.clone(), s }, &[x]))
    }

    pub fn relu(&mut self, x: &Var<T>) -> Var<T> {
        let value = ops::relu(x.value());
        self.push(value, Op::Relu { x: x.clone() }, &[x])
    }

    pub fn add(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let value = a.value().zip_map(b.value(), "add", |x, y| x + y)?;
        Ok(self.push(
            value,
            Op::Add {
                a: a.clone(),
                b: b.clone(),
            },
            &[a, b],
        ))
    }

    pub fn sub(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let value = a.value().zip_map(b.value(), "sub", |x, y| x - y)?;
        Ok(self.push(
            value,
            Op::Sub {
                a: a.clone(),
                b: b.clone(),
            },
            &[a, b],
        ))
    }

    pub fn scale(&mut self, x: &Var<T>, c: T) -> Var<T> {
        let value = x.value().map(|v| v * c);
        self.push(value, Op::Scale { x: x.clone(), c }, &[x])
    }

    /// `x * s` for a one-element variable `s` (e.g. a learnable step size).
    pub fn mul_scalar(&mut self, x: &Var<T>, s: &Var<T>) -> Result<Var<T>> {
        if s.value().numel() != 1 {
            return Err(Error::shape("mul_scalar", "one-element scale", s.shape()));
        }
        let c = s.value().item();
        let value = x.value().map(|v| v * c);
        Ok(self.push(
            value,
            Op::MulScalar {
                x: x.clone(),
                s: s.clone(),
            },
            &[x, s],
        ))
    }

    pub fn mse_loss(&mut self, pred: &Var<T>, target: &Var<T>) -> Result<Var<T>> {
        pred.value().expect_same_shape(target.value(), "mse_loss")?;
        let n = T::from_usize(pred.value().numel()).expect("element count");
        let sq: T = pred
            .value()
            .data()
            .iter()
            .zip(target.value().data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(
            Tensor::scalar(sq / n),
            Op::Mse {
                pred: pred.clone(),
                target: target.clone(),
            },
            &[pred, target],
        ))
    }

    pub fn frobenius_sq(&mut self, x: &Var<T>) -> Var<T> {
        let value = Tensor::scalar(x.value().data().iter().map(|&v| v * v).sum());
        self.push(value, Op::FrobeniusSq { x: x.clone() }, &[x])
    }

    pub fn matmul(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let value = ops::matmul(a.value(), b.value())?;
        Ok(self.push(
            value,
            Op::Matmul {
                a: a.clone(),
                b: b.clone(),
            },
            &[a, b],
        ))
    }

    pub fn transpose(&mut self, x: &Var<T>) -> Result<Var<T>> {
        let value = x.value().transpose()?;
        Ok(self.push(value, Op::Transpose { x: x.clone() }, &[x]))
    }

    pub fn reshape(&mut self, x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
        let value = x.value().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x: x.clone() }, &[x]))
    }

    /// `sum(x * weights)` against a constant weight tensor.
    pub fn inner(&mut self, x: &Var<T>, weights: &Tensor<T>) -> Result<Var<T>> {
        let value = Tensor::scalar(x.value().dot(weights)?);
        let op = Op::Inner {
            x: x.clone(),
            weights: weights.clone(),
        };
        Ok(self.push(value, op, &[x]))
    }

    /// Gradients of the scalar `loss` for every tracked leaf on this tape.
    /// Leaves the loss does not depend on get zero gradients.
    pub fn backward(&self, loss: &Var<T>) -> Result<GradientMap<T>> {
        if loss.value().numel() != 1 {
            return Err(Error::NonScalarLoss(loss.shape().to_vec()));
        }
        let mut grads: HashMap<usize, Tensor<T>> = HashMap::new();
        if loss.tracked {
            grads.insert(loss.id, Tensor::full(loss.shape(), T::one()));
        }
        for record in self.records.iter().rev() {
            let Some(g) = grads.remove(&record.out) else {
                continue;
            };
            Self::propagate(&record.op, g, &mut grads);
        }
        let mut out = HashMap::with_capacity(self.leaves.len());
        for (id, shape) in &self.leaves {
            let g = grads.remove(id).unwrap_or_else(|| Tensor::zeros(shape));
            out.insert(*id, g);
        }
        Ok(GradientMap { grads: out })
    }

    fn propagate(op: &Op<T>, g: Tensor<T>, grads: &mut HashMap<usize, Tensor<T>>) {
        match op {
            Op::Conv2d { x, w, b, geom } => {
                if x.tracked {
                    accumulate(grads, x, conv::conv2d_grad_input(g.data(), w.value(), geom));
                }
                if w.tracked {
                    let mut gw = conv::conv2d_grad_weight(x.value().data(), g.data(), geom);
                    if CORRUPT_CONV_BACKWARD.with(Cell::get) {
                        gw = gw.map(|v| v * T::from_f64_lossy(1.01));
                    }
                    accumulate(grads, w, gw);
                }
                if let Some(b) = b.as_ref().filter(|b| b.tracked) {
                    accumulate(grads, b, conv::conv2d_grad_bias(g.data(), geom));
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                if x.tracked {
                    accumulate(grads, x, conv::conv2d_with_geom(g.data(), w.value().data(), None, geom));
                }
                if w.tracked {
                    accumulate(grads, w, conv::conv2d_grad_weight(g.data(), x.value().data(), geom));
                }
                if let Some(b) = b.as_ref().filter(|b| b.tracked) {
                    accumulate(grads, b, channel_sums(&g));
                }
            }
            Op::PixelShuffle { x, s } => {
                accumulate(grads, x, space_to_depth(&g, *s).expect("inverse shape"));
            }
            Op::SpaceToDepth { x, s } => {
                accumulate(grads, x, pixel_shuffle(&g, *s).expect("inverse shape"));
            }
            Op::Relu { x } => {
                let gx = x
                    .value()
                    .zip_map(&g, "relu", |v, gv| if v > T::zero() { gv } else { T::zero() })
                    .expect("same shape");
                accumulate(grads, x, gx);
            }
            Op::Add { a, b } => {
                if b.tracked {
                    accumulate(grads, b, g.clone());
                }
                accumulate(grads, a, g);
            }
            Op::Sub { a, b } => {
                if b.tracked {
                    accumulate(grads, b, g.map(|v| -v));
                }
                accumulate(grads, a, g);
            }
            Op::Scale { x, c } => accumulate(grads, x, g.map(|v| v * *c)),
            Op::MulScalar { x, s } => {
                if s.tracked {
                    let ds = x.value().dot(&g).expect("same shape");
                    accumulate(grads, s, Tensor::full(s.shape(), ds));
                }
                let c = s.value().item();
                accumulate(grads, x, g.map(|v| v * c));
            }
            Op::Mse { pred, target } => {
                let n = T::from_usize(pred.value().numel()).expect("element count");
                let k = (T::one() + T::one()) * g.item() / n;
                let dp = pred
                    .value()
                    .zip_map(target.value(), "mse", |p, t| k * (p - t))
                    .expect("same shape");
                if target.tracked {
                    accumulate(grads, target, dp.map(|v| -v));
                }
                accumulate(grads, pred, dp);
            }
            Op::FrobeniusSq { x } => {
                let k = (T::one() + T::one()) * g.item();
                accumulate(grads, x, x.value().map(|v| k * v));
            }
            Op::Matmul { a, b } => {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                if a.tracked {
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), false, b.value().data(), true, T::zero(), &mut da);
                    accumulate(grads, a, Tensor::from_vec(&[m, k], da).expect("shape"));
                }
                if b.tracked {
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, T::one(), a.value().data(), true, g.data(), false, T::zero(), &mut db);
                    accumulate(grads, b, Tensor::from_vec(&[k, n], db).expect("shape"));
                }
            }
            Op::Transpose { x } => accumulate(grads, x, g.transpose().expect("rank 2")),
            Op::Reshape { x } => {
                let shape = x.shape().to_vec();
                accumulate(grads, x, g.reshape(&shape).expect("same numel"));
            }
            Op::Inner { x, weights } => {
                let k = g.item();
                accumulate(grads, x, weights.map(|v| v * k));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[3.0]));
        let y = tape.mul_scalar(&x, &x).unwrap();
        let grads = tape.backward(&y).unwrap();
        assert_eq!(grads.get(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn relu_passes_zero_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(&x);
        assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
        let loss = tape.inner(&y, &t(&[3], &[1.0, 1.0, 1.0])).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn scale_gradient_is_constant() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 2], &[1.0, -2.0, 0.5, 4.0]));
        let y = tape.scale(&x, 3.0);
        let loss = tape.inner(&y, &Tensor::full(&[2, 2], 1.0)).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert!(grads.get(&x).unwrap().data().iter().all(|&g| g == 3.0));
    }

    #[test]
    fn add_zero_is_identity() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let z = tape.constant(Tensor::zeros(&[3]));
        assert_eq!(tape.add(&x, &z).unwrap().value(), x.value());
    }

    #[test]
    fn mse_examples() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::zeros(&[2]));
        let q = tape.constant(Tensor::full(&[2], 1.0));
        assert_eq!(tape.mse_loss(&p, &q).unwrap().value().item(), 1.0);
        assert_eq!(tape.mse_loss(&q, &q).unwrap().value().item(), 0.0);
    }

    #[test]
    fn frobenius_and_matmul_examples() {
        let mut tape = Tape::<f64>::new();
        let eye = tape.constant(Tensor::eye(3));
        assert_eq!(tape.frobenius_sq(&eye).value().item(), 3.0);
        let a = tape.constant(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]));
        assert_eq!(tape.matmul(&eye, &a).unwrap().value(), a.value());
    }

    #[test]
    fn disconnected_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let unused = tape.param(t(&[2, 2], &[1.0; 4]));
        let loss = tape.frobenius_sq(&x);
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&unused).unwrap(), &Tensor::zeros(&[2, 2]));
        assert_eq!(grads.get(&x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let y = tape.scale(&x, 2.0);
        assert!(matches!(tape.backward(&y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.add(&a, &b).is_err());
        assert!(tape.sub(&a, &b).is_err());
        assert!(tape.mse_loss(&a, &b).is_err());
        let m = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.matmul(&m, &m).is_err());
    }

    #[test]
    fn no_grad_tape_records_nothing() {
        let mut tape = Tape::no_grad();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let y = tape.frobenius_sq(&x);
        assert!(tape.is_empty());
        assert!(!y.tracked());
        assert!(tape.backward(&y).unwrap().is_empty());
    }

    #[test]
    fn shared_input_accumulates() {
        // loss = |x + x|^2 = 4|x|^2 -> grad 8x
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, -0.5]));
        let y = tape.add(&x, &x).unwrap();
        let loss = tape.frobenius_sq(&y);
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap().data(), &[8.0, -4.0]);
    }
}
