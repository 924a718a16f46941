//! `key = value` run configuration with command-line overrides.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use fsoinet::pgd::{Continuation, PgdConfig};
use fsoinet::train::TrainConfig;
use fsoinet::{ModelConfig, Precision, VariantMode};

pub const OUT_DIR_ENV: &str = "FSOINET_OUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub ratio: f64,
    pub block_side: usize,
    pub channels: usize,
    pub phases: usize,
    pub mode: VariantMode,
    pub precision: Precision,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub dataset: Option<PathBuf>,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: f64,
    pub gamma: f64,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub patch_limit: Option<usize>,
    pub augment: bool,
    pub checkpoint_every: Option<usize>,

    /// `None` picks `1/σ_max(Φ)²`.
    pub step_size: Option<f64>,
    pub lambda: f64,
    pub iters: usize,
    pub tolerance: f64,
    pub dct: bool,
    pub continuation_start: Option<f64>,
    pub continuation_decay: f64,
    pub orthonormal_phi: bool,

    pub quantize_8bit: bool,

    explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let pgd = PgdConfig::default();
        RunConfig {
            ratio: model.ratio,
            block_side: model.block_side,
            channels: model.channels,
            phases: model.phases,
            mode: model.mode,
            precision: Precision::F32,
            seed: 0,
            out_dir: PathBuf::from("out"),
            dataset: None,
            batch_size: train.batch_size,
            epochs: train.epochs,
            base_lr: train.base_lr,
            final_lr: train.final_lr,
            warmup_epochs: train.warmup_epochs,
            gamma: train.gamma,
            patch_size: train.patch_size,
            patch_stride: train.patch_stride,
            patch_limit: None,
            augment: true,
            checkpoint_every: None,
            step_size: None,
            lambda: pgd.reg_weight,
            iters: pgd.max_iters,
            tolerance: pgd.tolerance,
            dct: pgd.dct,
            continuation_start: None,
            continuation_decay: 0.95,
            orthonormal_phi: false,
            quantize_8bit: false,
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => bail!("invalid value {value:?} for {key}: expected true or false"),
    }
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_precision(value: &str) -> Result<Precision> {
    match value.to_ascii_lowercase().as_str() {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => bail!("invalid precision {other:?}: expected f32 or f64"),
    }
}

pub const KEYS: &[&str] = &[
    "ratio",
    "block_side",
    "channels",
    "phases",
    "mode",
    "precision",
    "seed",
    "out_dir",
    "dataset",
    "batch_size",
    "epochs",
    "base_lr",
    "final_lr",
    "warmup_epochs",
    "gamma",
    "patch_size",
    "patch_stride",
    "patch_limit",
    "augment",
    "checkpoint_every",
    "step_size",
    "lambda",
    "iters",
    "tolerance",
    "dct",
    "continuation_start",
    "continuation_decay",
    "orthonormal_phi",
    "quantize_8bit",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let canonical = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| anyhow!("unknown configuration key {key:?}"))?;
        match canonical {
            "ratio" => self.ratio = parse(key, value)?,
            "block_side" => self.block_side = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "phases" => self.phases = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "precision" => self.precision = parse_precision(value)?,
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "final_lr" => self.final_lr = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "patch_stride" => self.patch_stride = parse(key, value)?,
            "patch_limit" => self.patch_limit = optional(key, value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            "checkpoint_every" => self.checkpoint_every = optional(key, value)?,
            "step_size" => self.step_size = optional(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "dct" => self.dct = parse_bool(key, value)?,
            "continuation_start" => self.continuation_start = optional(key, value)?,
            "continuation_decay" => self.continuation_decay = parse(key, value)?,
            "orthonormal_phi" => self.orthonormal_phi = parse_bool(key, value)?,
            "quantize_8bit" => self.quantize_8bit = parse_bool(key, value)?,
            _ => unreachable!("every key in KEYS is handled"),
        }
        self.explicit.insert(canonical);
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value, got {raw:?}", i + 1))?;
            self.set(key.trim(), value)
                .with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Whether the key was set by a file or flag rather than defaulted.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            block_side: self.block_side,
            ratio: self.ratio,
            channels: self.channels,
            phases: self.phases,
            mode: self.mode,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            model: self.model(),
            batch_size: self.batch_size,
            epochs: self.epochs,
            base_lr: self.base_lr,
            final_lr: self.final_lr,
            warmup_epochs: self.warmup_epochs,
            gamma: self.gamma,
            seed: self.seed,
            patch_size: self.patch_size,
            patch_stride: self.patch_stride,
            patch_limit: self.patch_limit,
            augment: self.augment,
            checkpoint_every: self.checkpoint_every,
            dataset: self.dataset.clone(),
        }
    }

    pub fn pgd(&self, default_step: f64) -> PgdConfig {
        PgdConfig {
            step_size: self.step_size.unwrap_or(default_step),
            reg_weight: self.lambda,
            max_iters: self.iters,
            tolerance: self.tolerance,
            dct: self.dct,
            continuation: self.continuation_start.map(|start| Continuation {
                start,
                decay: self.continuation_decay,
            }),
        }
    }

    /// Every key with its resolved value, in a form [`apply_text`](Self::apply_text) accepts.
    pub fn render(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
        }
        let precision = match self.precision {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("ratio", self.ratio.to_string()),
            ("block_side", self.block_side.to_string()),
            ("channels", self.channels.to_string()),
            ("phases", self.phases.to_string()),
            ("mode", self.mode.to_string()),
            ("precision", precision.into()),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("dataset", opt(&self.dataset.as_ref().map(|d| d.display().to_string()))),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("base_lr", self.base_lr.to_string()),
            ("final_lr", self.final_lr.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("gamma", self.gamma.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("patch_stride", self.patch_stride.to_string()),
            ("patch_limit", opt(&self.patch_limit)),
            ("augment", self.augment.to_string()),
            ("checkpoint_every", opt(&self.checkpoint_every)),
            ("step_size", opt(&self.step_size)),
            ("lambda", self.lambda.to_string()),
            ("iters", self.iters.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("dct", self.dct.to_string()),
            ("continuation_start", opt(&self.continuation_start)),
            ("continuation_decay", self.continuation_decay.to_string()),
            ("orthonormal_phi", self.orthonormal_phi.to_string()),
            ("quantize_8bit", self.quantize_8bit.to_string()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        let mut s = String::new();
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# toy run\nratio = 0.25\nepochs=50  # short\n\nmode = vnet\npatch_limit = 200\n", "t")
            .unwrap();
        c.set("epochs", "7").unwrap();
        assert_eq!(c.ratio, 0.25);
        assert_eq!(c.epochs, 7);
        assert_eq!(c.mode, VariantMode::Vnet);
        assert_eq!(c.patch_limit, Some(200));
        assert!(c.is_explicit("ratio"));
        assert!(!c.is_explicit("gamma"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        let err = c.apply_text("ratio = 0.5\nlearning_rate = 1\n", "cfg").unwrap_err();
        assert!(format!("{err:#}").contains("learning_rate"));
        assert!(format!("{err:#}").contains("cfg:2"));
        assert!(c.set("epochs", "many").is_err());
        assert!(c.set("augment", "maybe").is_err());
        assert!(c.set("precision", "f16").is_err());
        assert!(c.apply_text("just words\n", "cfg").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("lambda", "0.01").unwrap();
        c.set("continuation_start", "0.3").unwrap();
        c.set("precision", "f64").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.render(), "rendered").unwrap();
        assert_eq!(c.render(), d.render());
        assert_eq!(d.pgd(1.0).continuation.unwrap().start, 0.3);
        assert_eq!(d.precision, Precision::F64);
    }

    #[test]
    fn every_key_is_settable() {
        let rendered = RunConfig::default().render();
        for line in rendered.lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            RunConfig::default().set(k, v).unwrap();
        }
    }
}
