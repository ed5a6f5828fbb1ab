//! Scenario configuration, read from TOML.

use std::path::Path;
use std::sync::Arc;

use hjcell_core::env::benchmarks;
use hjcell_core::env::{GeneratorParams, RealizationFamily};
use hjcell_core::{Environment, PeriodicEnvironment, RandomFamily};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Validate,
    Envelopes,
    Branches,
    Effective,
    Bridge,
    PdeConverge,
    Ergodic,
    FullPipeline,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Envelopes => "envelopes",
            Task::Branches => "branches",
            Task::Effective => "effective",
            Task::Bridge => "bridge",
            Task::PdeConverge => "pde_converge",
            Task::Ergodic => "ergodic",
            Task::FullPipeline => "full_pipeline",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkName {
    QuadraticCosine,
    QuadraticSine,
    DoubleWell,
    PureQuadratic,
    QuadraticCosineVaryingDiffusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// A built-in medium; `parameter` is the amplitude or diffusion depth.
    Benchmark {
        name: BenchmarkName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parameter: Option<f64>,
    },
    /// Expressions in `x` (diffusion) and `p, x` (Hamiltonian).
    Periodic {
        label: Option<String>,
        period: Option<f64>,
        diffusion: Option<String>,
        hamiltonian: Option<String>,
    },
    /// `H = base(p) + V(x)` with a generated potential.
    Random {
        label: Option<String>,
        base: String,
        window: [f64; 2],
        generator: GeneratorParams,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub ode: f64,
    pub root: f64,
    pub joint: f64,
    pub closure: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ode: 1e-11, root: 1e-12, joint: 1e-6, closure: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRange {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub n_lambda: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeParams {
    #[serde(default)]
    pub gap_index: usize,
    pub deltas: Vec<f64>,
    #[serde(default = "default_launch_points")]
    pub launch_points: usize,
    /// Defaults to 50 periods (periodic media) or the end of the window.
    pub x_max: Option<f64>,
}

fn default_launch_points() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeParams {
    pub thetas: Vec<f64>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_dx")]
    pub dx: f64,
}

fn default_dx() -> f64 {
    0.005
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicParams {
    pub lambdas: Vec<f64>,
    pub seeds: usize,
    pub window: f64,
    pub burn_in: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<String>,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub tolerance: Tolerances,
    /// Largest `|p|` for envelopes and assumption checks.
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    pub levels: Option<LevelRange>,
    pub bridge: Option<BridgeParams>,
    pub pde: Option<PdeParams>,
    pub ergodic: Option<ErgodicParams>,
}

fn default_p_max() -> f64 {
    6.0
}

/// A medium built from the configuration.
#[derive(Clone)]
pub enum Medium {
    Periodic(PeriodicEnvironment),
    Random(Arc<RandomFamily>),
}

impl Medium {
    /// The medium itself, or the realization for `seed`.
    pub fn realization(&self, seed: u64) -> Arc<dyn Environment> {
        match self {
            Medium::Periodic(p) => Arc::new(p.clone()),
            Medium::Random(f) => Arc::new(f.realize(seed)),
        }
    }

    pub fn family(&self) -> Arc<dyn RealizationFamily> {
        match self {
            Medium::Periodic(p) => Arc::new(p.clone()),
            Medium::Random(f) => f.clone(),
        }
    }

    pub fn periodic(&self) -> Option<&PeriodicEnvironment> {
        match self {
            Medium::Periodic(p) => Some(p),
            Medium::Random(_) => None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Field-level checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerance;
        for (field, v) in [
            ("tolerance.ode", t.ode),
            ("tolerance.root", t.root),
            ("tolerance.joint", t.joint),
            ("tolerance.closure", t.closure),
            ("p_max", self.p_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid { field, reason: format!("must be positive, got {v}") });
            }
        }
        if let EnvironmentConfig::Periodic { period, diffusion, hamiltonian, .. } = &self.environment {
            let period = period.ok_or(ConfigError::Missing("environment.period"))?;
            if !(period > 0.0) {
                return Err(ConfigError::Invalid { field: "environment.period", reason: format!("{period} is not positive") });
            }
            diffusion.as_ref().ok_or(ConfigError::Missing("environment.diffusion"))?;
            hamiltonian.as_ref().ok_or(ConfigError::Missing("environment.hamiltonian"))?;
        }
        let random = matches!(self.environment, EnvironmentConfig::Random { .. });
        let needs_levels = matches!(self.task, Task::Branches | Task::Effective | Task::Bridge | Task::FullPipeline);
        if needs_levels {
            let l = self.levels.as_ref().ok_or(ConfigError::Missing("levels"))?;
            if !(l.lambda_lo < l.lambda_hi) || l.n_lambda < 3 {
                return Err(ConfigError::Invalid {
                    field: "levels",
                    reason: "need lambda_lo < lambda_hi and at least 3 levels".into(),
                });
            }
        }
        if self.task == Task::Bridge {
            let b = self.bridge.as_ref().ok_or(ConfigError::Missing("bridge"))?;
            if b.deltas.is_empty() || b.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
                return Err(ConfigError::Invalid { field: "bridge.deltas", reason: "each delta must lie in (0, 1)".into() });
            }
        }
        if matches!(self.task, Task::PdeConverge | Task::FullPipeline) {
            let p = self.pde.as_ref().ok_or(ConfigError::Missing("pde"))?;
            if p.thetas.is_empty() || p.epsilons.is_empty() || p.epsilons.iter().any(|e| !(*e > 0.0)) {
                return Err(ConfigError::Invalid {
                    field: "pde",
                    reason: "need thetas and positive epsilons".into(),
                });
            }
            if !(p.dx > 0.0) {
                return Err(ConfigError::Invalid { field: "pde.dx", reason: "must be positive".into() });
            }
        }
        if self.task == Task::Ergodic || (random && self.task == Task::Bridge) {
            let e = self.ergodic.as_ref().ok_or(ConfigError::Missing("ergodic"))?;
            if e.seeds == 0 || !(e.window > 0.0) || !(e.burn_in >= 0.0) {
                return Err(ConfigError::Invalid {
                    field: "ergodic",
                    reason: "need seeds > 0, window > 0, burn_in >= 0".into(),
                });
            }
            if self.task == Task::Ergodic && e.lambdas.is_empty() {
                return Err(ConfigError::Invalid { field: "ergodic.lambdas", reason: "empty".into() });
            }
        }
        if random && matches!(self.task, Task::Branches | Task::Effective | Task::FullPipeline) {
            let field = "task";
            return Err(ConfigError::Invalid {
                field,
                reason: format!("task {} needs a periodic medium", self.task.name()),
            });
        }
        Ok(())
    }

    pub fn medium(&self) -> Result<Medium, ConfigError> {
        let invalid = |field, e: hjcell_core::Error| ConfigError::Invalid { field, reason: e.to_string() };
        match &self.environment {
            EnvironmentConfig::Benchmark { name, parameter } => {
                let m = match name {
                    BenchmarkName::QuadraticCosine => benchmarks::quadratic_cosine(),
                    BenchmarkName::QuadraticSine => benchmarks::quadratic_sine(),
                    BenchmarkName::DoubleWell => benchmarks::double_well(parameter.unwrap_or(2.0)),
                    BenchmarkName::PureQuadratic => benchmarks::pure_quadratic(),
                    BenchmarkName::QuadraticCosineVaryingDiffusion => {
                        benchmarks::quadratic_cosine_varying_diffusion(parameter.unwrap_or(0.5))
                    }
                };
                Ok(Medium::Periodic(m))
            }
            EnvironmentConfig::Periodic { label, period, diffusion, hamiltonian } => {
                let period = period.ok_or(ConfigError::Missing("environment.period"))?;
                let diffusion = diffusion.as_deref().ok_or(ConfigError::Missing("environment.diffusion"))?;
                let hamiltonian = hamiltonian.as_deref().ok_or(ConfigError::Missing("environment.hamiltonian"))?;
                let label = label.clone().unwrap_or_else(|| "periodic".into());
                PeriodicEnvironment::from_expressions(label, period, diffusion, hamiltonian)
                    .map(Medium::Periodic)
                    .map_err(|e| invalid("environment", e))
            }
            EnvironmentConfig::Random { label, base, window, generator } => {
                let label = label.clone().unwrap_or_else(|| "random".into());
                RandomFamily::new(label, base, generator.clone(), (window[0], window[1]))
                    .map(|f| Medium::Random(Arc::new(f)))
                    .map_err(|e| invalid("environment", e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = r#"
task = "effective"
[environment]
kind = "periodic"
period = 1.0
diffusion = "1"
hamiltonian = "p^2 + cos(2*PI*x)"
[levels]
lambda_lo = 0.5
lambda_hi = 4.0
n_lambda = 20
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ScenarioConfig::from_toml(QUAD).unwrap();
        assert_eq!(cfg.task, Task::Effective);
        let again = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert!(cfg.medium().unwrap().periodic().is_some());
    }

    #[test]
    fn missing_period_names_the_field() {
        let text = QUAD.replace("period = 1.0\n", "");
        let err = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("environment.period"), "{err}");
    }

    #[test]
    fn missing_task_section_is_reported() {
        let text = QUAD.replace("task = \"effective\"", "task = \"bridge\"");
        let err = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Missing("bridge")));
    }

    #[test]
    fn random_generator_parses() {
        let text = r#"
task = "ergodic"
[environment]
kind = "random"
base = "p^2"
window = [-10.0, 110.0]
generator = { generator = "random_phase_trig", amplitudes = [1.0, 0.5], frequencies = [1.0, 2.2360679] }
[ergodic]
lambdas = [2.0]
seeds = 4
window = 100.0
burn_in = 10.0
"#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert!(matches!(cfg.medium().unwrap(), Medium::Random(_)));
        assert_eq!(cfg, ScenarioConfig::from_toml(&cfg.to_toml()).unwrap());
    }
}
