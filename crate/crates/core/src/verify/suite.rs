use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adjoint_gap, gradcheck};
use crate::autograd::{Tape, Var};
use crate::cs::{self, BoundSampling, SamplingMatrix};
use crate::error::Result;
use crate::model::{ddm, fsim, res_block, FsoiNet, ModelConfig, VariantMode};
use crate::tensor::Tensor;

/// Gradcheck pass threshold (max relative error).
pub const GRAD_TOL: f64 = 1e-4;
/// Adjoint identity pass threshold (absolute gap).
pub const ADJOINT_TOL: f64 = 1e-9;
/// Random instances per gradcheck.
pub const INSTANCES: u64 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(8);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>11}  {:>9}  result", "property", "measured", "limit");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<width$}  {:>11.3e}  {:>9.1e}  {}",
                c.name,
                c.value,
                c.threshold,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(
            s,
            "{} of {} properties passed in {:.1}s",
            self.checks.len() - failed,
            self.checks.len(),
            self.elapsed.as_secs_f64()
        );
        s
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn record(&mut self, name: &str, value: Result<f64>, threshold: f64) {
        let (value, passed) = match value {
            Ok(v) => (v, v.abs() < threshold),
            Err(e) => {
                log::error!("{name}: {e}");
                (f64::NAN, false)
            }
        };
        self.checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            passed,
        });
    }

    /// Worst gradcheck error over several random instances.
    fn grad<G, F>(&mut self, name: &str, inputs: G, f: F)
    where
        G: Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
        F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
    {
        let worst = (0..INSTANCES).try_fold(0.0f64, |acc, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x = inputs(&mut rng);
            Ok(acc.max(gradcheck(&x, &f, 48, seed)?.max_rel_err))
        });
        self.record(&format!("gradcheck {name}"), worst, GRAD_TOL);
    }

    fn adjoint<F>(&mut self, name: &str, x_shape: &[usize], y_shape: &[usize], f: F)
    where
        F: Fn(&mut Tape<f64>, &Var<f64>) -> Result<Var<f64>>,
    {
        let worst = (0..INSTANCES).try_fold(0.0f64, |acc, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let x = Tensor::randn(x_shape, 1.0, &mut rng);
            let y = Tensor::randn(y_shape, 1.0, &mut rng);
            Ok(acc.max(adjoint_gap(&x, &y, &f)?.abs()))
        });
        self.record(&format!("adjoint {name}"), worst, ADJOINT_TOL);
    }
}

fn randn(shape: &[usize]) -> impl Fn(&mut ChaCha8Rng) -> Tensor<f64> + '_ {
    move |rng| Tensor::randn(shape, 1.0, rng)
}

fn tiny_model(mode: VariantMode, seed: u64) -> FsoiNet<f64> {
    let cfg = ModelConfig {
        block_side: 4,
        ratio: 0.5,
        channels: 2,
        phases: 2,
        mode,
    };
    let mut model = FsoiNet::<f64>::new(cfg, seed).expect("valid tiny config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 17);
    // nonzero everywhere so every branch contributes to the checked gradient
    for t in model.params_mut().tensors_mut() {
        *t = Tensor::uniform(t.shape(), 0.4, &mut rng);
    }
    model
}

fn op_checks(s: &mut Suite) {
    s.grad(
        "conv2d stride 1",
        |r| vec![randn(&[1, 2, 6, 6])(r), randn(&[3, 2, 3, 3])(r), randn(&[3])(r)],
        |t, v| t.conv2d(&v[0], &v[1], Some(&v[2]), 1, 1),
    );
    s.grad(
        "conv2d stride 2",
        |r| vec![randn(&[2, 2, 7, 6])(r), randn(&[3, 2, 3, 3])(r)],
        |t, v| t.conv2d(&v[0], &v[1], None, 2, 1),
    );
    s.grad(
        "conv2d_transpose",
        |r| vec![randn(&[1, 4, 3, 3])(r), randn(&[4, 2, 2, 2])(r), randn(&[2])(r)],
        |t, v| t.conv2d_transpose(&v[0], &v[1], Some(&v[2]), 2),
    );
    s.grad("pixel_shuffle", |r| vec![randn(&[2, 8, 2, 3])(r)], |t, v| t.pixel_shuffle(&v[0], 2));
    s.grad("space_to_depth", |r| vec![randn(&[2, 2, 4, 6])(r)], |t, v| t.space_to_depth(&v[0], 2));
    s.grad("relu", |r| vec![randn(&[3, 7])(r)], |t, v| Ok(t.relu(&v[0])));
    s.grad("add", |r| vec![randn(&[4, 3])(r), randn(&[4, 3])(r)], |t, v| t.add(&v[0], &v[1]));
    s.grad("sub", |r| vec![randn(&[4, 3])(r), randn(&[4, 3])(r)], |t, v| t.sub(&v[0], &v[1]));
    s.grad("scale", |r| vec![randn(&[5])(r)], |t, v| Ok(t.scale(&v[0], -2.5)));
    s.grad(
        "mul_scalar",
        |r| vec![randn(&[2, 3])(r), randn(&[1])(r)],
        |t, v| t.mul_scalar(&v[0], &v[1]),
    );
    s.grad("mse_loss", |r| vec![randn(&[3, 4])(r), randn(&[3, 4])(r)], |t, v| t.mse_loss(&v[0], &v[1]));
    s.grad("frobenius_sq", |r| vec![randn(&[3, 4])(r)], |t, v| Ok(t.frobenius_sq(&v[0])));
    s.grad("matmul", |r| vec![randn(&[3, 4])(r), randn(&[4, 2])(r)], |t, v| t.matmul(&v[0], &v[1]));
    s.grad("transpose", |r| vec![randn(&[3, 4])(r)], |t, v| t.transpose(&v[0]));
    s.grad("reshape", |r| vec![randn(&[3, 4])(r)], |t, v| t.reshape(&v[0], &[2, 6]));
    s.grad(
        "mse(conv2d(x, w), t)",
        |r| vec![randn(&[1, 2, 5, 5])(r), randn(&[2, 2, 3, 3])(r), randn(&[1, 2, 5, 5])(r)],
        |t, v| {
            let y = t.conv2d(&v[0], &v[1], None, 1, 1)?;
            t.mse_loss(&y, &v[2])
        },
    );
}

fn sampling_checks(s: &mut Suite) {
    let bind = |t: &mut Tape<f64>, phi: &Var<f64>| BoundSampling::new(t, phi.clone(), 4);
    s.grad(
        "sample",
        |r| vec![randn(&[2, 1, 8, 4])(r), randn(&[6, 16])(r)],
        move |t, v| {
            let sb = bind(t, &v[1])?;
            cs::sample(t, &v[0], &sb)
        },
    );
    s.grad(
        "init_reconstruct",
        |r| vec![randn(&[1, 6, 2, 2])(r), randn(&[6, 16])(r)],
        move |t, v| {
            let sb = bind(t, &v[1])?;
            cs::init_reconstruct(t, &v[0], &sb)
        },
    );
    s.grad(
        "fidelity_gradient",
        |r| vec![randn(&[1, 1, 8, 8])(r), randn(&[1, 6, 2, 2])(r), randn(&[6, 16])(r)],
        move |t, v| {
            let sb = bind(t, &v[2])?;
            cs::fidelity_gradient(t, &v[0], &v[1], &sb)
        },
    );
    s.grad("orth_loss", |r| vec![randn(&[6, 16])(r)], move |t, v| {
        let sb = bind(t, &v[0])?;
        Ok(cs::orth_loss(t, &sb))
    });

    let mut w_rng = ChaCha8Rng::seed_from_u64(77);
    let w1 = Tensor::<f64>::randn(&[3, 2, 3, 3], 1.0, &mut w_rng);
    let w2 = Tensor::<f64>::randn(&[3, 2, 3, 3], 1.0, &mut w_rng);
    let wt = Tensor::<f64>::randn(&[3, 2, 2, 2], 1.0, &mut w_rng);
    let m = Tensor::<f64>::randn(&[4, 5], 1.0, &mut w_rng);
    let phi = SamplingMatrix::<f64>::gaussian(4, 0.5, 3).expect("valid ratio");
    s.adjoint("conv2d stride 1", &[1, 2, 6, 6], &[1, 3, 6, 6], |t, x| {
        let w = t.constant(w1.clone());
        t.conv2d(x, &w, None, 1, 1)
    });
    s.adjoint("conv2d stride 2", &[1, 2, 6, 6], &[1, 3, 3, 3], |t, x| {
        let w = t.constant(w2.clone());
        t.conv2d(x, &w, None, 2, 1)
    });
    s.adjoint("conv2d_transpose", &[1, 3, 3, 3], &[1, 2, 6, 6], |t, x| {
        let w = t.constant(wt.clone());
        t.conv2d_transpose(x, &w, None, 2)
    });
    s.adjoint("pixel_shuffle", &[1, 8, 2, 3], &[1, 2, 4, 6], |t, x| t.pixel_shuffle(x, 2));
    s.adjoint("space_to_depth", &[1, 2, 4, 6], &[1, 8, 2, 3], |t, x| t.space_to_depth(x, 2));
    s.adjoint("matmul", &[5, 3], &[4, 3], |t, x| {
        let a = t.constant(m.clone());
        t.matmul(&a, x)
    });
    s.adjoint("scale", &[7], &[7], |t, x| Ok(t.scale(x, 1.7)));
    s.adjoint("transpose", &[3, 5], &[5, 3], |t, x| t.transpose(x));
    s.adjoint("sample / init_reconstruct", &[1, 1, 8, 12], &[1, 8, 2, 3], |t, x| {
        let p = t.constant(phi.phi().clone());
        let sb = BoundSampling::new(t, p, 4)?;
        cs::sample(t, x, &sb)
    });
    let worst = (0..INSTANCES).try_fold(0.0f64, |acc, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let x = Tensor::<f64>::randn(&[1, 1, 8, 12], 1.0, &mut rng);
        let y = Tensor::<f64>::randn(&[1, 8, 2, 3], 1.0, &mut rng);
        let lhs = phi.sample(&x)?.dot(&y)?;
        let rhs = x.dot(&phi.init_reconstruct(&y)?)?;
        Ok(acc.max((lhs - rhs).abs()))
    });
    s.record("adjoint sample vs init_reconstruct ops", worst, ADJOINT_TOL);
}

/// Gradcheck of `f(features, params...)` for a tiny model's parameters.
fn module_check(
    s: &mut Suite,
    name: &str,
    mode: VariantMode,
    feature_shape: &[usize],
    body: impl Fn(&mut Tape<f64>, &crate::model::BoundParams<f64>, &Var<f64>) -> Result<Var<f64>>,
) {
    let worst = (0..INSTANCES).try_fold(0.0f64, |acc, seed| {
        let model = tiny_model(mode, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let mut inputs = vec![Tensor::<f64>::uniform(feature_shape, 1.0, &mut rng)];
        inputs.extend(model.params().tensors().iter().cloned());
        let out = gradcheck(
            &inputs,
            |t, v| {
                let p = model.params().bind_vars(v[1..].to_vec())?;
                body(t, &p, &v[0])
            },
            24,
            seed,
        )?;
        Ok(acc.max(out.max_rel_err))
    });
    s.record(&format!("gradcheck {name}"), worst, GRAD_TOL);
}

fn model_checks(s: &mut Suite) {
    module_check(s, "res_block", VariantMode::Fsoinet, &[1, 2, 8, 8], |t, p, f| {
        res_block(t, p, "phase0.ddm.high", f)
    });
    module_check(s, "ddm", VariantMode::Fsoinet, &[1, 2, 8, 8], |t, p, f| ddm(t, p, "phase0.ddm", f));
    module_check(s, "fsim", VariantMode::Fsoinet, &[1, 2, 8, 8], |t, p, f| {
        let sb = BoundSampling::new(t, p.var("phi")?.clone(), 4)?;
        // measurements of an unrelated image so the residual is nonzero
        let y0 = t.scale(f, 0.5);
        let y0 = t.conv2d(&y0, p.var("phase1.fsim.to_pixel.w")?, None, 1, 1)?;
        let y = cs::sample(t, &y0, &sb)?;
        fsim(t, p, 0, f, &y, &sb)
    });
    for mode in VariantMode::ALL {
        module_check(s, &format!("full model ({mode})"), mode, &[1, 1, 8, 8], |t, p, x| {
            let model = tiny_model(mode, 0);
            Ok(model.forward_on(t, p, x)?.x_rec)
        });
    }
}

fn identity_checks(s: &mut Suite) {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    for mode in VariantMode::ALL {
        let cfg = ModelConfig {
            block_side: 8,
            ratio: 0.25,
            channels: 4,
            phases: 2,
            mode,
        };
        let model = FsoiNet::<f32>::new(cfg, 9).expect("valid config");
        let x = Tensor::<f32>::uniform(&[1, 1, 16, 24], 1.0, &mut rng);
        match model.reconstruct(&x) {
            Ok(out) => {
                let bits_differ = out
                    .x_rec
                    .data()
                    .iter()
                    .zip(out.x_init.data())
                    .filter(|(a, b)| a.to_bits() != b.to_bits())
                    .count();
                worst = worst.max(bits_differ as f64);
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    s.record("zero-init X_rec == X_init (differing values)", Ok(worst), 0.5);

    let fixed = (|| -> Result<f64> {
        let model = tiny_model(VariantMode::Fsoinet, 3);
        let mut tape = Tape::<f64>::no_grad();
        let p = model.params().bind(&mut tape);
        let sb = BoundSampling::new(&mut tape, p.var("phi")?.clone(), 4)?;
        let mut rng = ChaCha8Rng::seed_from_u64(5001);
        let f = tape.constant(Tensor::randn(&[1, 2, 8, 8], 1.0, &mut rng));
        let x_hat = tape.conv2d(&f, p.var("phase0.fsim.to_pixel.w")?, None, 1, 1)?;
        let y = cs::sample(&mut tape, &x_hat, &sb)?;
        let out = fsim(&mut tape, &p, 0, &f, &y, &sb)?;
        out.value().max_abs_diff(f.value())
    })();
    s.record("fsim fixed point |out - F|", fixed, 1e-300);
}

/// Runs every property check and reports all of them; never stops early.
pub fn run_suite() -> VerifyReport {
    let start = Instant::now();
    let mut s = Suite { checks: Vec::new() };
    op_checks(&mut s);
    sampling_checks(&mut s);
    model_checks(&mut s);
    identity_checks(&mut s);
    VerifyReport {
        checks: s.checks,
        elapsed: start.elapsed(),
    }
}
