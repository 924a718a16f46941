//! The unfolded reconstruction network.
//!
//! `X_init = Φᵀ-reconstruction of Y`, `F⁰ = lift(X_init)`, then `N_k` phases
//! each made of an information-supplementing step (FSIM) and a dual-scale
//! denoiser (DDM), and finally `X_rec = head(F) + X_init`.

mod checkpoint;
mod params;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, FORMAT_VERSION, MAGIC};
pub use params::{BoundParams, ParamSet};

use crate::autograd::{Tape, Var};
use crate::cs::{self, measurement_count, BoundSampling, SamplingMatrix};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// How each phase consumes the measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariantMode {
    /// Fidelity gradient mapped into feature space (FSIM), then DDM.
    Fsoinet,
    /// Gradient step in pixel space on a one-channel projection, re-lifted, then DDM.
    Oinet,
    /// DDM only; measurements are used for the initial reconstruction alone.
    Vnet,
}

impl VariantMode {
    pub const ALL: [VariantMode; 3] = [VariantMode::Fsoinet, VariantMode::Oinet, VariantMode::Vnet];

    pub fn code(self) -> u32 {
        match self {
            VariantMode::Fsoinet => 0,
            VariantMode::Oinet => 1,
            VariantMode::Vnet => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(VariantMode::Fsoinet),
            1 => Ok(VariantMode::Oinet),
            2 => Ok(VariantMode::Vnet),
            other => Err(Error::Format(format!("unknown variant mode code {other}"))),
        }
    }

    fn uses_gradient(self) -> bool {
        !matches!(self, VariantMode::Vnet)
    }
}

impl fmt::Display for VariantMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantMode::Fsoinet => "fsoinet",
            VariantMode::Oinet => "oinet",
            VariantMode::Vnet => "vnet",
        })
    }
}

impl FromStr for VariantMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fsoinet" => Ok(VariantMode::Fsoinet),
            "oinet" => Ok(VariantMode::Oinet),
            "vnet" => Ok(VariantMode::Vnet),
            other => Err(Error::invalid(
                "mode",
                format!("unknown mode {other:?} (expected fsoinet, oinet or vnet)"),
            )),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub block_side: usize,
    pub ratio: f64,
    pub channels: usize,
    pub phases: usize,
    pub mode: VariantMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            block_side: 32,
            ratio: 0.1,
            channels: 16,
            phases: 16,
            mode: VariantMode::Fsoinet,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        measurement_count(self.block_side, self.ratio)?;
        if self.channels == 0 || self.phases == 0 {
            return Err(Error::invalid("model config", "channels and phases must be positive"));
        }
        // the half-resolution branch needs even extents
        if !self.block_side.is_multiple_of(2) {
            return Err(Error::invalid("model config", "block side must be even"));
        }
        Ok(())
    }
}

/// Output of a forward pass on a tape.
#[derive(Clone, Debug)]
pub struct ForwardVars<T: Element = f32> {
    pub y: Var<T>,
    pub x_init: Var<T>,
    pub x_rec: Var<T>,
}

/// Plain tensors produced by [`FsoiNet::reconstruct`].
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction<T: Element = f32> {
    pub y: Tensor<T>,
    pub x_init: Tensor<T>,
    pub x_rec: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FsoiNet<T: Element = f32> {
    config: ModelConfig,
    params: ParamSet<T>,
}

struct ConvSpec {
    name: String,
    shape: [usize; 4],
    bias: bool,
    zero: bool,
    fan_in: usize,
}

fn conv(name: String, cout: usize, cin: usize, k: usize, bias: bool, zero: bool) -> ConvSpec {
    ConvSpec {
        name,
        shape: [cout, cin, k, k],
        bias,
        zero,
        fan_in: cin * k * k,
    }
}

fn res_block_specs(prefix: &str, c: usize, bias: bool, out: &mut Vec<ConvSpec>) {
    out.push(conv(format!("{prefix}.conv1"), c, c, 3, bias, false));
    out.push(conv(format!("{prefix}.conv2"), c, c, 3, bias, true));
}

fn layer_specs(cfg: &ModelConfig) -> Vec<ConvSpec> {
    let c = cfg.channels;
    let mut specs = vec![conv("lift".into(), c, 1, 3, true, false)];
    for k in 0..cfg.phases {
        if cfg.mode.uses_gradient() {
            let p = format!("phase{k}.fsim");
            specs.push(conv(format!("{p}.to_pixel"), 1, c, 3, false, false));
            specs.push(conv(format!("{p}.to_feat"), c, 1, 3, false, false));
            res_block_specs(&format!("{p}.grad"), c, false, &mut specs);
        }
        let p = format!("phase{k}.ddm");
        res_block_specs(&format!("{p}.high"), c, true, &mut specs);
        specs.push(conv(format!("{p}.down"), 2 * c, c, 3, true, false));
        res_block_specs(&format!("{p}.low"), 2 * c, true, &mut specs);
        // transposed conv weights are [Cin, Cout, k, k]; fan-in counts Cout taps
        specs.push(ConvSpec {
            name: format!("{p}.up"),
            shape: [2 * c, c, 2, 2],
            bias: true,
            zero: false,
            fan_in: c * 4,
        });
        specs.push(conv(format!("{p}.fuse"), c, c, 3, true, true));
    }
    specs.push(conv("head".into(), 1, c, 3, true, true));
    specs
}

impl<T: Element> FsoiNet<T> {
    /// Fresh model: Gaussian Φ, fan-in uniform conv weights, zeroed
    /// residual-path output convs and unit step sizes.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let phi = SamplingMatrix::<T>::gaussian(config.block_side, config.ratio, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f501);
        let mut params = ParamSet::new();
        params.insert("phi", phi.into_phi())?;
        for spec in layer_specs(&config) {
            let bound = 1.0 / (spec.fan_in as f64).sqrt();
            let w = if spec.zero {
                Tensor::zeros(&spec.shape)
            } else {
                Tensor::uniform(&spec.shape, bound, &mut rng)
            };
            params.insert(format!("{}.w", spec.name), w)?;
            if spec.bias {
                let cout = if spec.name.ends_with(".up") { spec.shape[1] } else { spec.shape[0] };
                let b = if spec.zero {
                    Tensor::zeros(&[cout])
                } else {
                    Tensor::uniform(&[cout], bound, &mut rng)
                };
                params.insert(format!("{}.b", spec.name), b)?;
            }
        }
        if config.mode.uses_gradient() {
            for k in 0..config.phases {
                params.insert(format!("phase{k}.rho"), Tensor::scalar(T::one()))?;
            }
        }
        Ok(FsoiNet { config, params })
    }

    /// Rebuilds a model from stored parameters, checking every expected
    /// name and shape.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        let template = FsoiNet::<T>::new(config, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (name, t) in template.params.iter() {
            let got = params.require(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    t.shape(),
                    got.shape()
                )));
            }
        }
        // adopt the canonical order so optimizer state and files are stable
        let mut ordered = ParamSet::new();
        for name in template.params.names() {
            ordered.insert(name.clone(), params.require(name)?.clone())?;
        }
        Ok(FsoiNet { config, params: ordered })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Total scalar parameter count, Φ included.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn sampling(&self) -> SamplingMatrix<T> {
        SamplingMatrix::new(
            self.params.require("phi").expect("phi is always present").clone(),
            self.config.block_side,
            self.config.ratio,
        )
        .expect("phi shape checked at construction")
    }

    pub fn cast<U: Element>(&self) -> FsoiNet<U> {
        FsoiNet {
            config: self.config,
            params: self.params.cast(),
        }
    }

    /// Runs the network on `x` (`[B,1,H,W]`, extents divisible by the block
    /// side) using parameters already bound to `tape`.
    pub fn forward_on(&self, tape: &mut Tape<T>, p: &BoundParams<T>, x: &Var<T>) -> Result<ForwardVars<T>> {
        let s = BoundSampling::new(tape, p.var("phi")?.clone(), self.config.block_side)?;
        let y = cs::sample(tape, x, &s)?;
        let x_init = cs::init_reconstruct(tape, &y, &s)?;
        let mut f = conv_layer(tape, p, "lift", &x_init, 1, 1)?;
        for k in 0..self.config.phases {
            f = match self.config.mode {
                VariantMode::Fsoinet => fsim(tape, p, k, &f, &y, &s)?,
                VariantMode::Oinet => pixel_step(tape, p, k, &f, &y, &s)?,
                VariantMode::Vnet => f,
            };
            f = ddm(tape, p, &format!("phase{k}.ddm"), &f)?;
        }
        let head = conv_layer(tape, p, "head", &f, 1, 1)?;
        let x_rec = tape.add(&head, &x_init)?;
        Ok(ForwardVars { y, x_init, x_rec })
    }

    /// Inference without recording gradients.
    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Reconstruction<T>> {
        let mut tape = Tape::no_grad();
        let p = self.params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward_on(&mut tape, &p, &xv)?;
        Ok(Reconstruction {
            y: out.y.into_value(),
            x_init: out.x_init.into_value(),
            x_rec: out.x_rec.into_value(),
        })
    }
}

/// Convolution named `{name}.w` with optional `{name}.b`.
fn conv_layer<T: Element>(
    tape: &mut Tape<T>,
    p: &BoundParams<T>,
    name: &str,
    x: &Var<T>,
    stride: usize,
    pad: usize,
) -> Result<Var<T>> {
    let w = p.var(&format!("{name}.w"))?.clone();
    let b = p.var(&format!("{name}.b")).ok().cloned();
    tape.conv2d(x, &w, b.as_ref(), stride, pad)
}

/// `F + conv2(relu(conv1(F)))`.
pub fn res_block<T: Element>(tape: &mut Tape<T>, p: &BoundParams<T>, prefix: &str, f: &Var<T>) -> Result<Var<T>> {
    let h = conv_layer(tape, p, &format!("{prefix}.conv1"), f, 1, 1)?;
    let h = tape.relu(&h);
    let h = conv_layer(tape, p, &format!("{prefix}.conv2"), &h, 1, 1)?;
    tape.add(f, &h)
}

/// Maps the pixel-domain fidelity gradient of the projected features into
/// feature space: `F - ρ_k * grad(to_feat(Φᵀ(Φ to_pixel(F) - y)))`.
pub fn fsim<T: Element>(
    tape: &mut Tape<T>,
    p: &BoundParams<T>,
    phase: usize,
    f: &Var<T>,
    y: &Var<T>,
    s: &BoundSampling<T>,
) -> Result<Var<T>> {
    let pre = format!("phase{phase}.fsim");
    let x_hat = conv_layer(tape, p, &format!("{pre}.to_pixel"), f, 1, 1)?;
    let g = cs::fidelity_gradient(tape, &x_hat, y, s)?;
    let g = conv_layer(tape, p, &format!("{pre}.to_feat"), &g, 1, 1)?;
    let g = res_block(tape, p, &format!("{pre}.grad"), &g)?;
    let rho = p.var(&format!("phase{phase}.rho"))?.clone();
    let step = tape.mul_scalar(&g, &rho)?;
    tape.sub(f, &step)
}

/// Pixel-domain counterpart of [`fsim`]: collapse to one channel, take the
/// gradient step there, and re-lift. Features do not survive the phase
/// boundary.
fn pixel_step<T: Element>(
    tape: &mut Tape<T>,
    p: &BoundParams<T>,
    phase: usize,
    f: &Var<T>,
    y: &Var<T>,
    s: &BoundSampling<T>,
) -> Result<Var<T>> {
    let pre = format!("phase{phase}.fsim");
    let x = conv_layer(tape, p, &format!("{pre}.to_pixel"), f, 1, 1)?;
    let g = cs::fidelity_gradient(tape, &x, y, s)?;
    let rho = p.var(&format!("phase{phase}.rho"))?.clone();
    let step = tape.mul_scalar(&g, &rho)?;
    let r = tape.sub(&x, &step)?;
    let lifted = conv_layer(tape, p, &format!("{pre}.to_feat"), &r, 1, 1)?;
    res_block(tape, p, &format!("{pre}.grad"), &lifted)
}

/// Full- and half-resolution denoising fused residually:
/// `F + fuse(high(F) + up(low(down(F))) - 2F)`.
pub fn ddm<T: Element>(tape: &mut Tape<T>, p: &BoundParams<T>, prefix: &str, f: &Var<T>) -> Result<Var<T>> {
    let [_, _, h, w] = f.value().nchw("ddm")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("ddm", "even spatial extents", f.shape()));
    }
    let high = res_block(tape, p, &format!("{prefix}.high"), f)?;
    let low = conv_layer(tape, p, &format!("{prefix}.down"), f, 2, 1)?;
    let low = res_block(tape, p, &format!("{prefix}.low"), &low)?;
    let up_w = p.var(&format!("{prefix}.up.w"))?.clone();
    let up_b = p.var(&format!("{prefix}.up.b"))?.clone();
    let low = tape.conv2d_transpose(&low, &up_w, Some(&up_b), 2)?;
    let both = tape.add(&high, &low)?;
    let twice = tape.scale(f, T::from_f64_lossy(2.0));
    let detail = tape.sub(&both, &twice)?;
    let fused = conv_layer(tape, p, &format!("{prefix}.fuse"), &detail, 1, 1)?;
    tape.add(f, &fused)
}

/// Anything that maps a `[1,1,H,W]` image (extents already block-aligned)
/// to `(X_init, X_rec)`.
pub trait Reconstructor {
    fn block_side(&self) -> usize;
    fn reconstruct_image(&self, x: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)>;
}

impl<T: Element> Reconstructor for FsoiNet<T> {
    fn block_side(&self) -> usize {
        self.config.block_side
    }

    fn reconstruct_image(&self, x: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let out = self.reconstruct(&x.cast())?;
        Ok((out.x_init.cast(), out.x_rec.cast()))
    }
}
