use std::fmt;
use std::path::{Path, PathBuf};

use exitlab_core::models::{BuilderConfig, GridModelSpec};
use exitlab_core::montecarlo::Start;
use exitlab_core::poisson::DomainMask;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One experiment: a model, a domain, the betas and the commands to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: BuilderConfig,
    pub omega: OmegaSpec,
    #[serde(default)]
    pub betas: Vec<f64>,
    pub commands: Vec<Command>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// The domain: `"all"`, a list of state indices, or a predicate on grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Keyword(OmegaKeyword),
    States(Vec<usize>),
    Grid(GridPredicate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaKeyword {
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "grid", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridPredicate {
    /// Grid points in the closed box `[lo, hi]` per axis.
    Box { bounds: Vec<(f64, f64)> },
    /// Grid points within `radius` of `center`.
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Validate {
        #[serde(default)]
        beta_probe: Option<f64>,
    },
    Exit,
    Variational {
        /// Source on the domain; `1_Omega` when absent.
        #[serde(default)]
        source: Option<Vec<f64>>,
    },
    Expmoment,
    Bounds {
        #[serde(default)]
        lyapunov: Option<LyapunovSpec>,
    },
    /// Either `k`, or both `kappa` and `epsilon`.
    Sweep {
        #[serde(default)]
        k: Option<Vec<f64>>,
        #[serde(default)]
        kappa: Option<Vec<f64>>,
        #[serde(default)]
        epsilon: Option<Vec<f64>>,
    },
    Mc {
        #[serde(default = "default_paths")]
        n_paths: usize,
        #[serde(default)]
        seed: u64,
        /// Defaults to the normalized reference measure.
        #[serde(default)]
        start: Option<Start>,
        #[serde(default = "default_max_time")]
        max_time: f64,
        #[serde(default = "default_z")]
        z_tolerance: f64,
        #[serde(default)]
        write_samples: bool,
    },
}

fn default_paths() -> usize {
    10_000
}

fn default_max_time() -> f64 {
    1e6
}

fn default_z() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovSpec {
    /// `x -> E_x tau`, which gives `delta = 1 / max E_x tau`.
    Mean,
    Vector(Vec<f64>),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Exit => "exit",
            Command::Variational { .. } => "variational",
            Command::Expmoment => "expmoment",
            Command::Bounds { .. } => "bounds",
            Command::Sweep { .. } => "sweep",
            Command::Mc { .. } => "mc",
        }
    }

    fn needs_betas(&self) -> bool {
        !matches!(self, Command::Validate { .. })
    }
}

#[derive(Debug)]
pub enum ConfigError {
    NotFound(PathBuf),
    Io(PathBuf, std::io::Error),
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    Invalid {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::NotFound(p) => write!(f, "{}: file not found", p.display()),
            ConfigError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            ConfigError::Parse {
                path,
                line,
                column,
                message,
            } => write!(f, "{}:{line}:{column}: {message}", path.display()),
            ConfigError::Invalid {
                path,
                line: Some(line),
                message,
            } => write!(f, "{}:{line}: {message}", path.display()),
            ConfigError::Invalid {
                path,
                line: None,
                message,
            } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConfigError::NotFound(path.to_path_buf()),
            _ => ConfigError::Io(path.to_path_buf(), e),
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                column: e.column(),
                message: strip_position(&e.to_string()),
            })?;
        let loaded = LoadedConfig {
            path: path.to_path_buf(),
            text,
            config,
        };
        loaded.check()?;
        Ok(loaded)
    }

    /// `sha256:` followed by the hex digest of the raw config bytes.
    pub fn hash(&self) -> String {
        format!(
            "sha256:{}",
            hex::encode(Sha256::digest(self.text.as_bytes()))
        )
    }

    pub fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.clone(),
            line: line_of_key(&self.text, key),
            message: message.into(),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if c.commands.is_empty() {
            return Err(self.invalid("commands", "at least one command is required"));
        }
        if c.formats.is_empty() {
            return Err(self.invalid("formats", "at least one of json, csv is required"));
        }
        if let Some(b) = c.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(self.invalid(
                "betas",
                format!("betas must be positive and finite, got {b}"),
            ));
        }
        if c.betas.is_empty() {
            if let Some(cmd) = c.commands.iter().find(|c| c.needs_betas()) {
                return Err(self.invalid(
                    "betas",
                    format!("command {} needs a nonempty betas list", cmd.name()),
                ));
            }
        }
        for cmd in &c.commands {
            match cmd {
                Command::Sweep { k, kappa, epsilon } => self.check_sweep(k, kappa, epsilon)?,
                Command::Mc {
                    n_paths,
                    max_time,
                    z_tolerance,
                    ..
                } => {
                    if *n_paths == 0 {
                        return Err(self.invalid("n_paths", "n_paths must be at least 1"));
                    }
                    if !(*max_time > 0.0) {
                        return Err(self.invalid("max_time", "max_time must be positive"));
                    }
                    if !(*z_tolerance > 0.0) {
                        return Err(self.invalid("z_tolerance", "z_tolerance must be positive"));
                    }
                }
                Command::Validate {
                    beta_probe: Some(b),
                } if !b.is_finite() => {
                    return Err(self.invalid("beta_probe", "beta_probe must be finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_sweep(
        &self,
        k: &Option<Vec<f64>>,
        kappa: &Option<Vec<f64>>,
        epsilon: &Option<Vec<f64>>,
    ) -> Result<(), ConfigError> {
        match (k, kappa, epsilon) {
            (Some(k), None, None) => {
                if !matches!(self.config.model, BuilderConfig::Perturbed { .. }) {
                    return Err(self.invalid("k", "a k sweep needs a perturbed model"));
                }
                if k.is_empty() || k.iter().any(|v| !v.is_finite()) {
                    return Err(self.invalid("k", "k must be a nonempty list of finite values"));
                }
            }
            (None, Some(kappa), Some(epsilon)) => {
                if !matches!(
                    self.config.model,
                    BuilderConfig::Grid(_) | BuilderConfig::Scaled { .. }
                ) {
                    return Err(self.invalid(
                        "kappa",
                        "a kappa/epsilon sweep needs a grid or scaled model",
                    ));
                }
                for (key, values) in [("kappa", kappa), ("epsilon", epsilon)] {
                    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                        return Err(self.invalid(
                            key,
                            format!("{key} must be a nonempty list of nonnegative values"),
                        ));
                    }
                }
            }
            _ => {
                return Err(self.invalid("sweep", "sweep takes either k, or both kappa and epsilon"))
            }
        }
        Ok(())
    }

    /// Resolves the domain against a model with `n` states.
    pub fn domain(&self, n: usize) -> Result<DomainMask, ConfigError> {
        let c = &self.config;
        let bad = |m: String| self.invalid("omega", m);
        match &c.omega {
            OmegaSpec::Keyword(OmegaKeyword::All) => {
                DomainMask::full(n).map_err(|e| bad(e.to_string()))
            }
            OmegaSpec::States(states) => {
                DomainMask::from_states(n, states).map_err(|e| bad(e.to_string()))
            }
            OmegaSpec::Grid(pred) => {
                let grid = c
                    .model
                    .grid()
                    .ok_or_else(|| bad("a grid predicate needs a grid model".into()))?;
                let inside = grid_points_inside(grid, pred).map_err(bad)?;
                if inside.len() != n {
                    return Err(bad("grid size does not match the model".into()));
                }
                DomainMask::new(inside).map_err(|e| bad(e.to_string()))
            }
        }
    }
}

fn grid_points_inside(grid: &GridModelSpec, pred: &GridPredicate) -> Result<Vec<bool>, String> {
    let points = grid.points().map_err(|e| e.to_string())?;
    let d = grid.dimension;
    let dims = |len: usize| {
        if len == d {
            Ok(())
        } else {
            Err(format!("predicate has {len} coordinates, the grid has {d}"))
        }
    };
    match pred {
        GridPredicate::Box { bounds } => {
            dims(bounds.len())?;
            Ok(points
                .iter()
                .map(|p| p.iter().zip(bounds).all(|(x, (lo, hi))| lo <= x && x <= hi))
                .collect())
        }
        GridPredicate::Ball { center, radius } => {
            dims(center.len())?;
            Ok(points
                .iter()
                .map(|p| {
                    let r2: f64 = p.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum();
                    r2 <= radius * radius
                })
                .collect())
        }
    }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

/// 1-based line of the first occurrence of `"key"` followed by a colon.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| {
            l.find(&needle)
                .is_some_and(|i| l[i + needle.len()..].trim_start().starts_with(':'))
        })
        .map(|i| i + 1)
}
