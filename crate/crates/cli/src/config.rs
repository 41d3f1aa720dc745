//! Run configuration: built-in defaults, overridden by a flat `key = value`
//! file, overridden by command-line flags of the same name.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use splitig_core::metrics::{DEFAULT_INCREMENTS, DEFAULT_PERTURBATIONS, DEFAULT_RADIUS};
use splitig_core::path::DEFAULT_STEPS;
use splitig_core::zoo::fixtures::FIXTURE_SEED;
use splitig_core::zoo::{Activation, Fixture};
use splitig_core::QuadratureRule;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Fixture(Fixture),
    File(PathBuf),
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSource::Fixture(x) => write!(f, "{x}"),
            ModelSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// The fixture's held-out set, or generated samples for a model file.
    Default,
    /// `gen_synthetic(gen_seed, gen_samples, input_dim, gen_classes)`.
    Synthetic,
    File(PathBuf),
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Default => f.write_str("default"),
            DatasetSource::Synthetic => f.write_str("synthetic"),
            DatasetSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Zero,
    /// Every feature set to the same value.
    Constant(f64),
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::Zero => f.write_str("zero"),
            BaselineKind::Constant(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSource,
    pub dataset: DatasetSource,
    pub gen_seed: u64,
    pub gen_samples: usize,
    pub gen_classes: usize,
    /// Use only the first `n` samples.
    pub samples: Option<usize>,
    pub exclude_misclassified: bool,
    pub psi: Vec<f64>,
    pub n_steps: usize,
    pub rule: QuadratureRule,
    pub baseline: BaselineKind,
    pub abpc: bool,
    pub sensitivity: bool,
    pub ablation_increments: usize,
    pub radius: f64,
    pub perturbations: usize,
    pub seed: u64,
    /// Sample index for `scan-path`.
    pub sample: usize,
    pub layer_sizes: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub train_seed: Option<u64>,
    pub fd_step: f64,
    pub gradcheck_tolerance: f64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Fixture(Fixture::MlpSaturating),
            dataset: DatasetSource::Default,
            gen_seed: FIXTURE_SEED,
            gen_samples: 40,
            gen_classes: 2,
            samples: None,
            exclude_misclassified: false,
            psi: vec![0.9, 0.95, 0.99],
            n_steps: DEFAULT_STEPS,
            rule: QuadratureRule::RightRiemann,
            baseline: BaselineKind::Zero,
            abpc: true,
            sensitivity: true,
            ablation_increments: DEFAULT_INCREMENTS,
            radius: DEFAULT_RADIUS,
            perturbations: DEFAULT_PERTURBATIONS,
            seed: FIXTURE_SEED,
            sample: 0,
            layer_sizes: None,
            activation: None,
            epochs: None,
            learning_rate: None,
            train_seed: None,
            fd_step: 1e-5,
            gradcheck_tolerance: 1e-5,
            output: PathBuf::from("splitig-out"),
        }
    }
}

/// Every configuration key, in rendering order.
pub const KEYS: [&str; 26] = [
    "model",
    "dataset",
    "gen-seed",
    "gen-samples",
    "gen-classes",
    "samples",
    "exclude-misclassified",
    "psi",
    "n-steps",
    "rule",
    "baseline",
    "abpc",
    "sensitivity",
    "ablation-increments",
    "radius",
    "perturbations",
    "seed",
    "sample",
    "layer-sizes",
    "activation",
    "epochs",
    "learning-rate",
    "train-seed",
    "fd-step",
    "gradcheck-tolerance",
    "output",
];

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

/// `none`/empty means "not set".
fn parse_opt<T>(key: &str, value: &str, f: impl Fn(&str, &str) -> CliResult<T>) -> CliResult<Option<T>> {
    match value {
        "" | "none" | "fixture" => Ok(None),
        v => f(key, v).map(Some),
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn or_none<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl RunConfig {
    /// Sets one key. Keys may use `_` in place of `-`.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "model" => {
                self.model = match value.parse::<Fixture>() {
                    Ok(f) => ModelSource::Fixture(f),
                    Err(_) => ModelSource::File(PathBuf::from(value)),
                }
            }
            "dataset" => {
                self.dataset = match value {
                    "default" => DatasetSource::Default,
                    "synthetic" => DatasetSource::Synthetic,
                    path => DatasetSource::File(PathBuf::from(path)),
                }
            }
            "gen-seed" => self.gen_seed = parse(k, value)?,
            "gen-samples" => self.gen_samples = parse(k, value)?,
            "gen-classes" => self.gen_classes = parse(k, value)?,
            "samples" => {
                self.samples = match value {
                    "all" => None,
                    v => Some(parse(k, v)?),
                }
            }
            "exclude-misclassified" => self.exclude_misclassified = parse_bool(k, value)?,
            "psi" => self.psi = parse_list(k, value)?,
            "n-steps" => self.n_steps = parse(k, value)?,
            "rule" => self.rule = value.parse().map_err(|e| CliError::Config(format!("`rule`: {e}")))?,
            "baseline" => {
                self.baseline = match value {
                    "zero" => BaselineKind::Zero,
                    v => BaselineKind::Constant(parse(k, v)?),
                }
            }
            "abpc" => self.abpc = parse_bool(k, value)?,
            "sensitivity" => self.sensitivity = parse_bool(k, value)?,
            "ablation-increments" => self.ablation_increments = parse(k, value)?,
            "radius" => self.radius = parse(k, value)?,
            "perturbations" => self.perturbations = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "sample" => self.sample = parse(k, value)?,
            "layer-sizes" => self.layer_sizes = parse_opt(k, value, parse_list)?,
            "activation" => {
                self.activation = parse_opt(k, value, |k, v| {
                    v.parse().map_err(|_| CliError::Config(format!("`{k}`: unknown activation `{v}`")))
                })?
            }
            "epochs" => self.epochs = parse_opt(k, value, parse)?,
            "learning-rate" => self.learning_rate = parse_opt(k, value, parse)?,
            "train-seed" => self.train_seed = parse_opt(k, value, parse)?,
            "fd-step" => self.fd_step = parse(k, value)?,
            "gradcheck-tolerance" => self.gradcheck_tolerance = parse(k, value)?,
            "output" => self.output = PathBuf::from(value),
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file `{}`: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Defaults, then `file`, then `overrides` in order; validated.
    pub fn resolve<'a>(
        file: Option<&Path>,
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> CliResult<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            config.apply_file(path)?;
        }
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.psi.is_empty() {
            return bad("`psi` needs at least one value".into());
        }
        if let Some(p) = self.psi.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("`psi` values must lie in (0, 1), got {p}"));
        }
        if self.n_steps == 0 {
            return bad("`n-steps` must be at least 1".into());
        }
        if self.ablation_increments == 0 {
            return bad("`ablation-increments` must be at least 1".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("`radius` must be positive, got {}", self.radius));
        }
        if self.perturbations == 0 {
            return bad("`perturbations` must be at least 1".into());
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad(format!("`fd-step` must be positive, got {}", self.fd_step));
        }
        if !(self.gradcheck_tolerance > 0.0) {
            return bad("`gradcheck-tolerance` must be positive".into());
        }
        if let BaselineKind::Constant(c) = self.baseline {
            if !c.is_finite() {
                return bad("`baseline` must be finite".into());
            }
        }
        if self.gen_classes == 0 {
            return bad("`gen-classes` must be at least 1".into());
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("`learning-rate` must be positive, got {lr}"));
            }
        }
        Ok(())
    }

    /// Effective configuration as `(key, value)` pairs in [`KEYS`] order.
    /// Training keys left unset resolve to the fixture's own settings. The
    /// output directory is omitted so that payloads do not depend on where
    /// they are written.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let train = match &self.model {
            ModelSource::Fixture(f) => f.train_config(),
            ModelSource::File(_) => None,
        };
        let layer_sizes = self
            .layer_sizes
            .clone()
            .or_else(|| train.as_ref().map(|t| t.layer_sizes.clone()));
        KEYS.iter()
            .filter(|k| **k != "output")
            .map(|&k| {
                let v = match k {
                    "model" => self.model.to_string(),
                    "dataset" => self.dataset.to_string(),
                    "gen-seed" => self.gen_seed.to_string(),
                    "gen-samples" => self.gen_samples.to_string(),
                    "gen-classes" => self.gen_classes.to_string(),
                    "samples" => self.samples.map_or_else(|| "all".into(), |n| n.to_string()),
                    "exclude-misclassified" => self.exclude_misclassified.to_string(),
                    "psi" => join(&self.psi),
                    "n-steps" => self.n_steps.to_string(),
                    "rule" => self.rule.to_string(),
                    "baseline" => self.baseline.to_string(),
                    "abpc" => self.abpc.to_string(),
                    "sensitivity" => self.sensitivity.to_string(),
                    "ablation-increments" => self.ablation_increments.to_string(),
                    "radius" => self.radius.to_string(),
                    "perturbations" => self.perturbations.to_string(),
                    "seed" => self.seed.to_string(),
                    "sample" => self.sample.to_string(),
                    "layer-sizes" => layer_sizes.as_deref().map_or_else(|| "none".into(), join),
                    "activation" => or_none(self.activation.or(train.as_ref().map(|t| t.activation))),
                    "epochs" => or_none(self.epochs.or(train.as_ref().map(|t| t.epochs))),
                    "learning-rate" => or_none(self.learning_rate.or(train.as_ref().map(|t| t.learning_rate))),
                    "train-seed" => or_none(self.train_seed.or(train.as_ref().map(|t| t.seed))),
                    "fd-step" => self.fd_step.to_string(),
                    "gradcheck-tolerance" => self.gradcheck_tolerance.to_string(),
                    _ => unreachable!("key list and renderer out of sync"),
                };
                (k, v)
            })
            .collect()
    }

    /// `key = value` lines, parseable by [`RunConfig::apply_text`].
    pub fn render(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
