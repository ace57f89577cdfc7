//! Experiment configuration: a strict TOML schema with field-level
//! diagnostics. Unknown keys are errors — silent misconfiguration is the
//! main hazard in numerical experiments.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zygmund::fields::{FieldError, Symbol};
use zygmund::geometry::{Box3, Interval};

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field '{}': {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub i1: [f64; 2],
    pub i2: [f64; 2],
    pub i3: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthsSpec {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSpec {
    pub n: [usize; 3],
}

/// Either the literal string `"auto"` or a fixed numeric amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmplitudeSpec {
    Fixed(f64),
    Auto(String),
}

impl AmplitudeSpec {
    pub fn auto() -> Self {
        AmplitudeSpec::Auto("auto".to_string())
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match self {
            AmplitudeSpec::Fixed(a) => Some(*a),
            AmplitudeSpec::Auto(_) => None,
        }
    }
}

fn default_seed() -> u64 {
    0
}
fn default_max_rectangles() -> usize {
    10
}
fn default_samples() -> usize {
    10_000
}
fn default_probe_threshold() -> f64 {
    1e-3
}
fn default_grid_per_axis() -> usize {
    48
}
fn default_c_eq() -> f64 {
    16.0
}
fn default_jitter() -> usize {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub amplitude: AmplitudeSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Cap on the number of rectangles processed by per-rectangle sweeps.
    #[serde(default = "default_max_rectangles")]
    pub max_rectangles: usize,
    /// Sample counts for pair-sampling checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_probe_threshold")]
    pub probe_threshold: f64,
    #[serde(default = "default_grid_per_axis")]
    pub grid_per_axis: usize,
    #[serde(default = "default_c_eq")]
    pub c_eq: f64,
    /// Random in-domain translates added per dyadic rectangle in norm sweeps.
    #[serde(default = "default_jitter")]
    pub jitter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub symbol: SymbolSpec,
    pub domain: DomainSpec,
    pub depths: DepthsSpec,
    pub resolution: ResolutionSpec,
    pub params: ParamsSpec,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kernel: KernelSpec { name: "nagel-wainger".into(), theta: 1.0 },
            symbol: SymbolSpec {
                name: "linear-x3".into(),
                value: None,
                beta: None,
                center: None,
                path: None,
            },
            domain: DomainSpec { i1: [0.0, 1.0], i2: [0.0, 1.0], i3: [0.0, 1.0] },
            depths: DepthsSpec { min: 0, max: 1 },
            resolution: ResolutionSpec { n: [12, 12, 12] },
            params: ParamsSpec {
                amplitude: AmplitudeSpec::auto(),
                alpha: Some(0.5),
                p: None,
                q: None,
                seed: default_seed(),
                max_rectangles: default_max_rectangles(),
                samples: default_samples(),
                probe_threshold: default_probe_threshold(),
                grid_per_axis: default_grid_per_axis(),
                c_eq: default_c_eq(),
                jitter: default_jitter(),
            },
            output: OutputSpec { dir: PathBuf::from("out") },
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("(file)", format!("reading {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError::new("(toml)", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.kernel.theta > 0.0 && self.kernel.theta <= 1.0) {
            return Err(ConfigError::new("kernel.theta", "must lie in (0, 1]"));
        }
        for (name, iv) in [
            ("domain.i1", self.domain.i1),
            ("domain.i2", self.domain.i2),
            ("domain.i3", self.domain.i3),
        ] {
            if !(iv[0] < iv[1]) {
                return Err(ConfigError::new(name, "needs lo < hi"));
            }
        }
        if self.depths.min > self.depths.max {
            return Err(ConfigError::new("depths", "min must be <= max"));
        }
        if self.resolution.n.iter().any(|&n| n == 0) {
            return Err(ConfigError::new("resolution.n", "axes must be positive"));
        }
        if let AmplitudeSpec::Auto(s) = &self.params.amplitude {
            if s != "auto" {
                return Err(ConfigError::new(
                    "params.amplitude",
                    format!("expected a number or \"auto\", got \"{s}\""),
                ));
            }
        }
        if let Some(a) = self.params.amplitude.fixed_value() {
            if !(a > 1.0) {
                return Err(ConfigError::new("params.amplitude", "must exceed 1"));
            }
        }
        if let (Some(p), Some(q)) = (self.params.p, self.params.q) {
            if !(p > 1.0 && q > 1.0) {
                return Err(ConfigError::new("params", "p and q must lie in (1, inf)"));
            }
            if p > q {
                return Err(ConfigError::new("params", "p must be <= q"));
            }
            if let Some(alpha) = self.params.alpha {
                let derived = 1.0 / p - 1.0 / q;
                if (alpha - derived).abs() > 1e-12 {
                    return Err(ConfigError::new(
                        "params.alpha",
                        format!("inconsistent with p, q: alpha = {alpha}, 1/p - 1/q = {derived}"),
                    ));
                }
            }
        }
        if let Some(alpha) = self.params.alpha {
            if !(alpha >= 0.0) {
                return Err(ConfigError::new("params.alpha", "must be nonnegative"));
            }
        }
        if self.params.max_rectangles == 0 {
            return Err(ConfigError::new("params.max_rectangles", "must be positive"));
        }
        Ok(())
    }

    /// Effective alpha: explicit, or derived from `p, q`, or zero.
    pub fn alpha(&self) -> f64 {
        if let Some(a) = self.params.alpha {
            return a;
        }
        if let (Some(p), Some(q)) = (self.params.p, self.params.q) {
            return 1.0 / p - 1.0 / q;
        }
        0.0
    }

    pub fn domain_box(&self) -> Box3 {
        Box3::new(
            Interval::new(self.domain.i1[0], self.domain.i1[1]).expect("validated"),
            Interval::new(self.domain.i2[0], self.domain.i2[1]).expect("validated"),
            Interval::new(self.domain.i3[0], self.domain.i3[1]).expect("validated"),
        )
    }

    pub fn build_symbol(&self) -> Result<Symbol, FieldError> {
        Symbol::by_name(
            &self.symbol.name,
            self.symbol.value,
            self.symbol.beta,
            self.symbol.center,
            self.symbol.path.as_deref(),
        )
    }

    /// Hex SHA-256 of the canonical TOML rendering; stamped on every record.
    /// The output directory is excluded: it addresses the artifacts, it is
    /// not part of the experiment.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(canonical.to_toml().as_bytes());
        hex::encode(h.finalize())
    }
}
