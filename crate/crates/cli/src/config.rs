//! Run configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory that holds the
//! configuration file.

use std::fmt;
use std::path::{Path, PathBuf};

use liftseg_core::{LiftingRecipe, SegError, SolverConfig};
use serde::Deserialize;

use crate::error::CliError;
use crate::io::{probe_image, probe_labels};

pub const CONFIG_VERSION: u32 = 1;

/// Largest class count representable in an 8-bit indexed label map.
pub const MAX_CLASSES: usize = 255;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub input: InputConfig,
    /// Absent means one passthrough channel per input channel.
    #[serde(default)]
    pub lifting: Option<LiftingRecipe>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub evaluation: Option<EvaluationConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// How raw sample values become feature values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    /// Divide by the largest value of the sample type (255 or 65535).
    #[default]
    Unit,
    /// Keep the stored sample values.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Images whose channels are concatenated in order: a grayscale file
    /// contributes one channel, a color file three.
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub intensity: Intensity,
    /// Convert color inputs to luminance first.
    #[serde(default)]
    pub grayscale: bool,
    /// Grid spacing `h`.
    #[serde(default = "one")]
    pub spacing: f64,
}

/// `[solver]`: the solver settings plus the class count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverSection {
    /// Number of classes `K`; defaults to the number of lifted channels.
    pub classes: Option<usize>,
    pub config: SolverConfig,
}

// Hand-written so that unknown solver keys are still rejected, which
// `#[serde(flatten)]` would not do.
impl<'de> Deserialize<'de> for SolverSection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut table = toml::Table::deserialize(d)?;
        let classes = match table.remove("classes") {
            None => None,
            Some(v) => Some(
                v.as_integer()
                    .and_then(|i| usize::try_from(i).ok())
                    .ok_or_else(|| D::Error::custom("classes must be a non-negative integer"))?,
            ),
        };
        let config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| D::Error::custom(e.message()))?;
        Ok(Self { classes, config })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Grayscale or indexed-color PNG holding one label per pixel.
    pub ground_truth: PathBuf,
    #[serde(default)]
    pub include_background: bool,
    /// Stored values in label order; `values[i]` is read as label `i`.
    /// Without it the stored value is the label.
    #[serde(default)]
    pub values: Option<Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub masks: bool,
    #[serde(default = "yes")]
    pub labels: bool,
    #[serde(default = "yes")]
    pub curves: bool,
    #[serde(default = "yes")]
    pub metrics: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out(),
            masks: true,
            labels: true,
            curves: true,
            metrics: true,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid configuration: {}", e.message())))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn input_paths(&self) -> Vec<PathBuf> {
        self.input.paths.iter().map(|p| self.resolve(p)).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// The configured recipe, or passthrough of `inputs` channels.
    pub fn recipe(&self, inputs: usize) -> LiftingRecipe {
        self.lifting
            .clone()
            .unwrap_or_else(|| LiftingRecipe::passthrough(inputs))
    }
}

/// A problem with one configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every problem that would stop [`crate::run_pipeline`] before solving.
/// Image headers are read, pixel data is not.
pub fn validate_config(cfg: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if cfg.version != CONFIG_VERSION {
        out.push(Diagnostic::new(
            "version",
            format!(
                "unsupported version {} (expected {CONFIG_VERSION})",
                cfg.version
            ),
        ));
    }

    let mut dims = None;
    let mut channels = Some(0usize);
    if cfg.input.paths.is_empty() {
        out.push(Diagnostic::new(
            "input.paths",
            "at least one input image is required",
        ));
        channels = None;
    }
    for (i, path) in cfg.input_paths().iter().enumerate() {
        let field = format!("input.paths[{i}]");
        if !path.is_file() {
            out.push(Diagnostic::new(
                field,
                format!("file not found: {}", path.display()),
            ));
            channels = None;
            continue;
        }
        match probe_image(path) {
            Ok(p) => {
                match dims {
                    None => dims = Some(p.dims),
                    Some(d) if d != p.dims => out.push(Diagnostic::new(
                        field,
                        format!(
                            "size {}x{} differs from the first input ({}x{})",
                            p.dims.1, p.dims.0, d.1, d.0
                        ),
                    )),
                    _ => {}
                }
                let c = if cfg.input.grayscale { 1 } else { p.channels };
                channels = channels.map(|n| n + c);
            }
            Err(e) => {
                out.push(Diagnostic::new(field, e.to_string()));
                channels = None;
            }
        }
    }
    if !(cfg.input.spacing.is_finite() && cfg.input.spacing > 0.0) {
        out.push(Diagnostic::new(
            "input.spacing",
            format!("must be positive, got {}", cfg.input.spacing),
        ));
    }

    let recipe = cfg.recipe(channels.unwrap_or(0));
    if cfg.lifting.is_some() || channels.is_some() {
        for msg in recipe.diagnose(channels) {
            out.push(Diagnostic::new("lifting.channels", msg));
        }
    }
    let k = cfg.solver.classes.unwrap_or(recipe.len());
    if let Some(classes) = cfg.solver.classes {
        if (cfg.lifting.is_some() || channels.is_some()) && classes != recipe.len() {
            out.push(Diagnostic::new(
                "solver.classes",
                format!(
                    "solver expects K = {classes} but the recipe yields {} channels",
                    recipe.len()
                ),
            ));
        }
    }
    if k > MAX_CLASSES {
        out.push(Diagnostic::new(
            "solver.classes",
            format!("at most {MAX_CLASSES} classes are supported, got {k}"),
        ));
    }
    if let Err(e) = cfg.solver.config.validate() {
        let field = match &e {
            SegError::InvalidParameter { name, .. } => format!("solver.{name}"),
            _ => "solver".to_string(),
        };
        out.push(Diagnostic::new(field, e.to_string()));
    }

    if let Some(ev) = &cfg.evaluation {
        let path = cfg.resolve(&ev.ground_truth);
        if !path.is_file() {
            out.push(Diagnostic::new(
                "evaluation.ground_truth",
                format!("file not found: {}", path.display()),
            ));
        } else {
            match probe_labels(&path) {
                Ok(d) => {
                    if let Some(dims) = dims.filter(|&x| x != d) {
                        out.push(Diagnostic::new(
                            "evaluation.ground_truth",
                            format!(
                                "size {}x{} differs from the input ({}x{})",
                                d.1, d.0, dims.1, dims.0
                            ),
                        ));
                    }
                }
                Err(e) => out.push(Diagnostic::new("evaluation.ground_truth", e.to_string())),
            }
        }
        if let Some(values) = &ev.values {
            let mut sorted = values.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != values.len() {
                out.push(Diagnostic::new(
                    "evaluation.values",
                    "values must be distinct",
                ));
            }
        }
    }
    out
}
