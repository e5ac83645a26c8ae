//! Scenario files: TOML, unknown keys rejected, validated before any compute.

use std::path::{Path, PathBuf};

use gibbsflow_core::{InteractionSpec, PairBounds, PairPotential, Window};
use serde::{Deserialize, Serialize};

/// Seed used when neither the CLI, the environment nor the file sets one.
pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub interaction: InteractionConfig,
    pub window: WindowConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InteractionConfig {
    Ideal {
        dim: usize,
        z: f64,
        range: f64,
    },
    Area {
        dim: usize,
        alpha: f64,
        range: f64,
        beta: f64,
    },
    /// Piecewise-linear potential; nonnegative tables give `max_neighbors`,
    /// signed ones the explicit rate envelope.
    Pair {
        dim: usize,
        range: f64,
        beta: f64,
        r: Vec<f64>,
        phi: Vec<f64>,
        #[serde(default)]
        max_neighbors: Option<usize>,
        #[serde(default)]
        b_inf: Option<f64>,
        #[serde(default)]
        b_sup: Option<f64>,
    },
}

impl InteractionConfig {
    pub fn dim(&self) -> usize {
        match self {
            Self::Ideal { dim, .. } | Self::Area { dim, .. } | Self::Pair { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<InteractionSpec, ScenarioError> {
        let spec = match self {
            Self::Ideal { dim, z, range } => InteractionSpec::ideal(*dim, *z, *range),
            Self::Area { dim, alpha, range, beta } => InteractionSpec::area(*dim, *alpha, *range, *beta),
            Self::Pair {
                dim,
                range,
                beta,
                r,
                phi,
                max_neighbors,
                b_inf,
                b_sup,
            } => {
                let bounds = match (max_neighbors, b_inf, b_sup) {
                    (Some(k), None, None) => PairBounds::NonNegative { max_neighbors: *k },
                    (None, Some(lo), Some(hi)) => PairBounds::Explicit { b_inf: *lo, b_sup: *hi },
                    _ => return invalid("pair interaction needs either max_neighbors or both b_inf and b_sup"),
                };
                PairPotential::new(r.clone(), phi.clone(), bounds).and_then(|p| InteractionSpec::pair(*dim, p, *range, *beta))
            }
        };
        spec.map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Buffer added around the window for continuum runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<f64>,
}

impl WindowConfig {
    pub fn build(&self) -> Result<Window, ScenarioError> {
        Window::new(&self.lo, &self.hi).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

/// Experiment-specific parameters; `kind` names the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    DeBruijn {
        cells: Vec<usize>,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_laws")]
        initial_laws: usize,
        #[serde(default = "default_identity_tol")]
        tolerance: f64,
    },
    EntropyDecay {
        cells: Vec<usize>,
        betas: Vec<f64>,
        #[serde(default = "default_decay_grid")]
        grid: usize,
        #[serde(default = "default_laws")]
        initial_laws: usize,
    },
    Series {
        cells: Vec<usize>,
        times: Vec<f64>,
        #[serde(default = "default_series_order")]
        max_order: usize,
        #[serde(default = "default_series_tol")]
        tolerance: f64,
    },
    FiniteSpeed {
        /// Buffers in units of the interaction range.
        buffers: Vec<f64>,
        reference_buffer: f64,
    },
    IdealLaw {
        activities: Vec<f64>,
        times: Vec<f64>,
    },
    Gnz {
        samples: usize,
        #[serde(default = "default_chains")]
        chains: usize,
        #[serde(default = "default_burn_in")]
        burn_in: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    Correlations {
        points: usize,
        #[serde(default = "default_box_side")]
        box_side: f64,
    },
    VariableChange {
        times: Vec<f64>,
    },
    Moments {
        sides: Vec<f64>,
        #[serde(default = "default_moment_order")]
        max_order: usize,
        #[serde(default = "default_constants")]
        constants: [f64; 3],
    },
    Ergodic {
        sides: Vec<f64>,
        radius: f64,
    },
}

fn default_grid() -> usize {
    401
}
fn default_decay_grid() -> usize {
    50
}
fn default_laws() -> usize {
    5
}
fn default_identity_tol() -> f64 {
    1e-7
}
fn default_series_order() -> usize {
    40
}
fn default_series_tol() -> f64 {
    1e-10
}
fn default_chains() -> usize {
    8
}
fn default_burn_in() -> f64 {
    20.0
}
fn default_spacing() -> f64 {
    5.0
}
fn default_box_side() -> f64 {
    0.05
}
fn default_moment_order() -> usize {
    4
}
fn default_constants() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DeBruijn { .. } => "de-bruijn",
            Self::EntropyDecay { .. } => "entropy-decay",
            Self::Series { .. } => "series",
            Self::FiniteSpeed { .. } => "finite-speed",
            Self::IdealLaw { .. } => "ideal-law",
            Self::Gnz { .. } => "gnz",
            Self::Correlations { .. } => "correlations",
            Self::VariableChange { .. } => "variable-change",
            Self::Moments { .. } => "moments",
            Self::Ergodic { .. } => "ergodic",
        }
    }

    /// Lattice-oracle experiments are exact and never use replicas.
    pub fn default_replicas(&self) -> usize {
        match self {
            Self::DeBruijn { .. } | Self::EntropyDecay { .. } | Self::Series { .. } => 0,
            Self::FiniteSpeed { .. } | Self::IdealLaw { .. } | Self::Moments { .. } => 10_000,
            Self::Correlations { .. } | Self::VariableChange { .. } => 100_000,
            Self::Gnz { .. } => 0,
            Self::Ergodic { .. } => 400,
        }
    }

    pub fn default_horizon(&self) -> f64 {
        match self {
            Self::DeBruijn { .. } => 3.0,
            Self::EntropyDecay { .. } => 5.0,
            Self::FiniteSpeed { .. } | Self::Correlations { .. } | Self::Moments { .. } => 1.0,
            _ => 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn replicas(&self) -> usize {
        self.replicas.unwrap_or_else(|| self.experiment.default_replicas())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.experiment.default_horizon())
    }

    /// Semantic checks; everything an experiment needs must be buildable.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return invalid("name must be non-empty and contain no path separators");
        }
        let spec = self.interaction.build()?;
        let window = self.window.build()?;
        if window.dim() != spec.dim() {
            return invalid(format!("window has dimension {} but the interaction {}", window.dim(), spec.dim()));
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0 && h.is_finite()) {
                return invalid("horizon must be finite and non-negative");
            }
        }
        if let Some(b) = self.window.buffer {
            if !(b >= 0.0 && b.is_finite()) {
                return invalid("window.buffer must be finite and non-negative");
            }
        }
        let positive = |xs: &[f64], what: &str| -> Result<(), ScenarioError> {
            if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return invalid(format!("{what} must be a non-empty list of positive numbers"));
            }
            Ok(())
        };
        let lattice_cells = |cells: &[usize]| -> Result<(), ScenarioError> {
            if cells.len() != window.dim() || cells.contains(&0) {
                return invalid("cells must give a positive count per axis");
            }
            if cells.iter().product::<usize>() > gibbsflow_core::lattice::MAX_CELLS {
                return invalid(format!("at most {} lattice cells", gibbsflow_core::lattice::MAX_CELLS));
            }
            Ok(())
        };
        let needs_replicas = |n: usize| -> Result<(), ScenarioError> {
            if n < 2 {
                return invalid("this experiment needs at least two replicas");
            }
            Ok(())
        };
        match &self.experiment {
            ExperimentConfig::DeBruijn { cells, grid, initial_laws, tolerance } => {
                lattice_cells(cells)?;
                if *grid < 3 || grid % 2 == 0 {
                    return invalid("grid must be odd and at least 3");
                }
                if *initial_laws == 0 || !(*tolerance > 0.0) {
                    return invalid("initial_laws and tolerance must be positive");
                }
            }
            ExperimentConfig::EntropyDecay { cells, betas, grid, initial_laws } => {
                lattice_cells(cells)?;
                positive(betas, "betas")?;
                if *grid < 2 || *initial_laws == 0 {
                    return invalid("grid must be at least 2 and initial_laws positive");
                }
                if matches!(self.interaction, InteractionConfig::Ideal { .. }) {
                    return invalid("entropy-decay scans beta and needs an area or pair interaction");
                }
            }
            ExperimentConfig::Series { cells, times, max_order, tolerance } => {
                lattice_cells(cells)?;
                positive(times, "times")?;
                if *max_order == 0 || !(*tolerance > 0.0) {
                    return invalid("max_order and tolerance must be positive");
                }
            }
            ExperimentConfig::FiniteSpeed { buffers, reference_buffer } => {
                positive(buffers, "buffers")?;
                if buffers.iter().any(|b| b >= reference_buffer) {
                    return invalid("reference_buffer must exceed every buffer");
                }
                needs_replicas(self.replicas())?;
            }
            ExperimentConfig::IdealLaw { activities, times } => {
                positive(activities, "activities")?;
                positive(times, "times")?;
                if !matches!(self.interaction, InteractionConfig::Ideal { .. }) {
                    return invalid("ideal-law needs an ideal interaction");
                }
                needs_replicas(self.replicas())?;
            }
            ExperimentConfig::Gnz { samples, chains, burn_in, spacing } => {
                if *samples < 2 || *chains == 0 || !(*burn_in >= 0.0) || !(*spacing > 0.0) {
                    return invalid("gnz needs samples >= 2, chains >= 1, burn_in >= 0, spacing > 0");
                }
                if window.erode(spec.range()).is_none() {
                    return invalid("window has no interior at distance R for the test functions");
                }
            }
            ExperimentConfig::Correlations { points, box_side } => {
                if *points == 0 || !(*box_side > 0.0) || *box_side * *points as f64 > window.side(0) {
                    return invalid("correlations needs points >= 1 and disjoint boxes inside the window");
                }
                needs_replicas(self.replicas())?;
            }
            ExperimentConfig::VariableChange { times } => {
                if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return invalid("times must be a non-empty list of non-negative numbers");
                }
                needs_replicas(self.replicas())?;
            }
            ExperimentConfig::Moments { sides, max_order, constants } => {
                positive(sides, "sides")?;
                positive(constants, "constants")?;
                if *max_order == 0 || *max_order > gibbsflow_core::estimators::MAX_MOMENT_ORDER {
                    return invalid("max_order out of range");
                }
                if sides.iter().any(|s| *s > window.side(0)) {
                    return invalid("moment boxes must fit in the window");
                }
                needs_replicas(self.replicas())?;
            }
            ExperimentConfig::Ergodic { sides, radius } => {
                positive(sides, "sides")?;
                if !(*radius > 0.0) || sides.len() < 2 {
                    return invalid("ergodic needs radius > 0 and at least two sides");
                }
                needs_replicas(self.replicas())?;
            }
        }
        Ok(())
    }
}
