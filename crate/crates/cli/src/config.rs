//! System configuration files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use contactum_core::constraints::{ConstraintSystem, RunConfig};
use contactum_core::expr::{ChartSpec, ScalarField, SecondBlock};
use contactum_core::geometry::PrecontactStructure;
use contactum_core::lagrangian::LagrangianSystem;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Lagrangian,
    Hamiltonian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub fd_step: f64,
    pub residual_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let run = RunConfig::default();
        Tolerances {
            rank_tol: run.rank_tol,
            fd_step: run.fd_step,
            residual_tol: run.residual_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub expression: String,
    /// Level 0 constraints cut out the submanifold the algorithm starts from.
    #[serde(default)]
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub kind: SystemKind,
    pub n: usize,
    #[serde(default)]
    pub names: Option<Vec<String>>,
    /// Lagrangian or Hamiltonian, depending on `kind`.
    pub expression: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub user_constraints: Vec<ConstraintConfig>,
    /// Functions tabulated in bracket reports; coordinate functions when empty.
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
}

fn default_schema() -> u32 {
    SCHEMA
}

/// A rejected configuration, located by JSON position or by field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
        ConfigError {
            field: Some(field.into()),
            line: None,
            column: None,
            message: message.to_string(),
        }
    }

    pub fn general(message: impl fmt::Display) -> ConfigError {
        ConfigError {
            field: None,
            line: None,
            column: None,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at line {l}, column {c}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " in `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// The mechanical model a configuration describes.
#[derive(Debug, Clone)]
pub enum Model {
    Lagrangian(LagrangianSystem),
    Hamiltonian {
        structure: PrecontactStructure,
        hamiltonian: ScalarField,
    },
}

/// A validated configuration with every expression parsed.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub config: SystemConfig,
    pub chart: ChartSpec,
    pub model: Model,
    pub constraints: Vec<(String, usize, ScalarField)>,
    pub observables: Vec<(String, ScalarField)>,
}

impl LoadedSystem {
    pub fn structure(&self) -> &PrecontactStructure {
        match &self.model {
            Model::Lagrangian(sys) => sys.structure(),
            Model::Hamiltonian { structure, .. } => structure,
        }
    }

    pub fn lagrangian(&self) -> Option<&LagrangianSystem> {
        match &self.model {
            Model::Lagrangian(sys) => Some(sys),
            Model::Hamiltonian { .. } => None,
        }
    }

    /// Energy for Lagrangian systems, the Hamiltonian otherwise.
    pub fn hamiltonian(&self) -> &ScalarField {
        match &self.model {
            Model::Lagrangian(sys) => sys.energy_field(),
            Model::Hamiltonian { hamiltonian, .. } => hamiltonian,
        }
    }

    pub fn constraint_system(&self) -> ConstraintSystem {
        let mut sys = ConstraintSystem::new(self.structure().clone(), self.hamiltonian().clone())
            .expect("structure and Hamiltonian share the chart");
        for (id, level, field) in &self.constraints {
            sys = sys
                .with_constraint(id.clone(), *level, field.clone())
                .expect("same chart");
        }
        sys
    }

    /// Replace tolerances given on the command line.
    pub fn override_tolerances(
        &mut self,
        rank_tol: Option<f64>,
        fd_step: Option<f64>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = rank_tol {
            positive("--rank-tol", v)?;
            self.config.tolerances.rank_tol = v;
        }
        if let Some(v) = fd_step {
            positive("--fd-step", v)?;
            self.config.tolerances.fd_step = v;
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        let t = &self.config.tolerances;
        RunConfig {
            rank_tol: t.rank_tol,
            fd_step: t.fd_step,
            residual_tol: t.residual_tol,
            ..RunConfig::default()
        }
    }
}

pub fn read_config(path: &Path) -> Result<SystemConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Read, parse and validate a configuration file.
pub fn load_path(path: &Path) -> Result<LoadedSystem, ConfigError> {
    load(read_config(path)?)
}

pub fn parse_config(text: &str) -> Result<SystemConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError {
        field: None,
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    })
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(ConfigError::field(
            field,
            format!("must be a positive number, got {v}"),
        ));
    }
    Ok(())
}

fn parse_field(
    field: &str,
    text: &str,
    chart: &ChartSpec,
    params: &BTreeMap<String, f64>,
) -> Result<ScalarField, ConfigError> {
    ScalarField::parse_with_params(text, chart, params).map_err(|e| ConfigError::field(field, e))
}

/// Check a configuration and parse its expressions.
pub fn load(config: SystemConfig) -> Result<LoadedSystem, ConfigError> {
    if config.schema != SCHEMA {
        return Err(ConfigError::field(
            "schema",
            format!("unsupported schema {}, expected {SCHEMA}", config.schema),
        ));
    }
    if config.n == 0 {
        return Err(ConfigError::field("n", "must be at least 1"));
    }
    let second = match config.kind {
        SystemKind::Lagrangian => SecondBlock::Velocity,
        SystemKind::Hamiltonian => SecondBlock::Momentum,
    };
    let chart = match &config.names {
        Some(names) => {
            if names.len() != 2 * config.n + 1 {
                return Err(ConfigError::field(
                    "names",
                    format!(
                        "expected {} names for n = {}, found {}",
                        2 * config.n + 1,
                        config.n,
                        names.len()
                    ),
                ));
            }
            ChartSpec::new(names.clone(), second)
        }
        None => match second {
            SecondBlock::Velocity => ChartSpec::tangent(config.n),
            SecondBlock::Momentum => ChartSpec::darboux(config.n),
        },
    }
    .map_err(|e| ConfigError::field("names", e))?;
    let t = &config.tolerances;
    positive("tolerances.rank_tol", t.rank_tol)?;
    positive("tolerances.fd_step", t.fd_step)?;
    positive("tolerances.residual_tol", t.residual_tol)?;
    for (i, s) in config.seeds.iter().enumerate() {
        check_point(&format!("seeds[{i}]"), s, &chart)?;
    }
    if let Some(x0) = &config.x0 {
        check_point("x0", x0, &chart)?;
    }
    let expression = parse_field("expression", &config.expression, &chart, &config.params)?;
    let model = match config.kind {
        SystemKind::Lagrangian => Model::Lagrangian(
            LagrangianSystem::new(expression).map_err(|e| ConfigError::field("expression", e))?,
        ),
        SystemKind::Hamiltonian => Model::Hamiltonian {
            structure: PrecontactStructure::canonical_on(&chart)
                .map_err(|e| ConfigError::field("kind", e))?,
            hamiltonian: expression,
        },
    };
    let mut constraints = Vec::new();
    for (i, c) in config.user_constraints.iter().enumerate() {
        let field = parse_field(
            &format!("user_constraints[{i}].expression"),
            &c.expression,
            &chart,
            &config.params,
        )?;
        let id = c.id.clone().unwrap_or_else(|| format!("user{}", i + 1));
        constraints.push((id, c.level, field));
    }
    let observables = if config.observables.is_empty() {
        chart
            .names()
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), ScalarField::coordinate(&chart, i)))
            .collect()
    } else {
        config
            .observables
            .iter()
            .enumerate()
            .map(|(i, o)| {
                Ok((
                    o.name.clone(),
                    parse_field(
                        &format!("observables[{i}].expression"),
                        &o.expression,
                        &chart,
                        &config.params,
                    )?,
                ))
            })
            .collect::<Result<_, ConfigError>>()?
    };
    Ok(LoadedSystem {
        config,
        chart,
        model,
        constraints,
        observables,
    })
}

pub fn check_point(field: &str, x: &[f64], chart: &ChartSpec) -> Result<(), ConfigError> {
    if x.len() != chart.dim() {
        return Err(ConfigError::field(
            field,
            format!(
                "expected {} coordinates ({}), found {}",
                chart.dim(),
                chart.names().join(", "),
                x.len()
            ),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::field(field, "coordinates must be finite"));
    }
    Ok(())
}
