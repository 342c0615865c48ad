use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::encoder::{Architecture, InitOptions, InitScheme};
use crate::error::{Error, Result};
use crate::numcore::{LossForm, Mode};
use crate::objective::LossSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Adam constants.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    /// Context sentences on each side of a target.
    pub k: usize,
    /// Negatives per target.
    pub r: usize,
    pub alpha: f64,
    pub epochs: u64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub docs_per_step: usize,
    pub seed: u64,
    pub loss_form: LossForm,
    pub precision: Precision,
    pub deterministic: bool,
    /// Worker threads for the per-document forward/backward passes.
    pub threads: usize,
    /// Check every value for NaN/Inf after each step.
    pub checked: bool,
    pub arch: Architecture,
    pub init: InitOptions,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            k: 1,
            r: 5,
            alpha: 0.7,
            epochs: 1,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            docs_per_step: 1,
            seed: 0,
            loss_form: LossForm::Standard,
            precision: Precision::F32,
            deterministic: true,
            threads: 1,
            checked: false,
            arch: Architecture::default(),
            init: InitOptions::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.docs_per_step == 0 {
            return Err(Error::invalid("docs_per_step must be at least 1"));
        }
        if let Some(b) = self.init.embedding_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid(format!("embedding_init {b} must be positive")));
            }
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads must be at least 1"));
        }
        self.arch.validate()
    }

    /// Loss settings for training, with dropout on.
    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            k: self.k,
            r: self.r,
            alpha: self.alpha,
            form: self.loss_form,
            mode: Mode::Train,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys not listed
    /// are rejected. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainingConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|e| match e {
                Error::UnknownKey(_) => e,
                other => err(format!("{key}: {other}")),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("cannot parse {value:?}")))
        }
        match key {
            "k" => self.k = num(value)?,
            "r" => self.r = num(value)?,
            "alpha" => self.alpha = num(value)?,
            "epochs" => self.epochs = num(value)?,
            "learning_rate" => self.learning_rate = num(value)?,
            "docs_per_step" => self.docs_per_step = num(value)?,
            "seed" => self.seed = num(value)?,
            "threads" => self.threads = num(value)?,
            "deterministic" => self.deterministic = num(value)?,
            "checked" => self.checked = num(value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(Error::invalid(format!("unknown optimizer {value:?}"))),
                }
            }
            "loss_form" => {
                self.loss_form = match value {
                    "standard" => LossForm::Standard,
                    "literal" => LossForm::Literal,
                    _ => return Err(Error::invalid(format!("unknown loss form {value:?}"))),
                }
            }
            "precision" => {
                self.precision = match value {
                    "32" => Precision::F32,
                    "64" => Precision::F64,
                    _ => return Err(Error::invalid(format!("precision must be 32 or 64, got {value:?}"))),
                }
            }
            "embedding_dim" => self.arch.embedding_dim = num(value)?,
            "kernel_width" => self.arch.kernel_width = num(value)?,
            "hidden_dim" => self.arch.hidden_dim = num(value)?,
            "output_dim" => self.arch.output_dim = num(value)?,
            "dropout" => self.arch.dropout = num(value)?,
            "linear_convs" => self.arch.linear_convs = num(value)?,
            "conv_channels" => {
                let parts: Vec<usize> = value.split(',').map(|p| num(p.trim())).collect::<Result<_>>()?;
                self.arch.conv_channels = parts
                    .try_into()
                    .map_err(|_| Error::invalid("conv_channels needs exactly 4 values"))?;
            }
            "init" => {
                self.init.scheme =
                    InitScheme::parse(value).ok_or_else(|| Error::invalid(format!("unknown init {value:?}")))?
            }
            "embedding_init" => {
                self.init.embedding_bound = match value {
                    "auto" => None,
                    v => Some(num(v)?),
                }
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

/// Writes every key, so the output parses back to an equal config.
impl fmt::Display for TrainingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.arch;
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "r = {}", self.r)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "learning_rate = {}", self.learning_rate)?;
        let opt = match self.optimizer {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        };
        writeln!(f, "optimizer = {opt}")?;
        writeln!(f, "docs_per_step = {}", self.docs_per_step)?;
        writeln!(f, "seed = {}", self.seed)?;
        let form = match self.loss_form {
            LossForm::Standard => "standard",
            LossForm::Literal => "literal",
        };
        writeln!(f, "loss_form = {form}")?;
        let bits = match self.precision {
            Precision::F32 => 32,
            Precision::F64 => 64,
        };
        writeln!(f, "precision = {bits}")?;
        writeln!(f, "deterministic = {}", self.deterministic)?;
        writeln!(f, "threads = {}", self.threads)?;
        writeln!(f, "checked = {}", self.checked)?;
        writeln!(f, "embedding_dim = {}", a.embedding_dim)?;
        let c = a.conv_channels;
        writeln!(f, "conv_channels = {},{},{},{}", c[0], c[1], c[2], c[3])?;
        writeln!(f, "kernel_width = {}", a.kernel_width)?;
        writeln!(f, "hidden_dim = {}", a.hidden_dim)?;
        writeln!(f, "output_dim = {}", a.output_dim)?;
        writeln!(f, "dropout = {}", a.dropout)?;
        writeln!(f, "linear_convs = {}", a.linear_convs)?;
        writeln!(f, "init = {}", self.init.scheme.as_str())?;
        match self.init.embedding_bound {
            Some(b) => writeln!(f, "embedding_init = {b}"),
            None => writeln!(f, "embedding_init = auto"),
        }
    }
}
