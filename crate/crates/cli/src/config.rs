//! System configuration documents.
//!
//! Summands, coordinates, letters and partition positions are 1-based.
//! Integers and rationals may be JSON numbers or `"p/q"` strings.

use serde::Deserialize;
use villadsen_core::exact::Exact;
use villadsen_core::dimension_system::{validate, LevelSpec, TailRule, TailStep, ValidationReport};
use villadsen_core::partition_scheme::validate_partition;
use villadsen_core::trace_tower::{Letter, Word};
use villadsen_core::{AFVilladsenSystem, DimensionSystem, Int, IntMatrix, PartitionScheme, SeedAlgebra};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// `[level][k][l]` lists of words over `1..=x_size`.
pub type EvalPoints = Vec<Vec<Vec<Vec<Vec<u16>>>>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema_version: u32,
    pub seed_algebra: SeedConfig,
    pub levels: Vec<LevelConfig>,
    #[serde(default)]
    pub tail: Vec<TailStep>,
    #[serde(default)]
    pub partitions: Vec<PartitionScheme>,
    #[serde(default)]
    pub x_size: Option<usize>,
    #[serde(default)]
    pub eval_counts: Vec<IntMatrix>,
    #[serde(default)]
    pub eval_points: Option<EvalPoints>,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub block_dims: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    #[serde(default)]
    pub n: Option<Vec<Exact<Int>>>,
    #[serde(default)]
    pub theta: Option<IntMatrix>,
}

/// A parsed configuration together with its structural validation.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: SystemConfig,
    pub system: DimensionSystem,
    pub seed: SeedAlgebra,
    pub report: ValidationReport,
}

impl Loaded {
    /// Fails unless every structural check passed.
    pub fn require_valid(&self) -> Result<(), CliError> {
        if self.report.is_valid() {
            Ok(())
        } else {
            let first = &self.report.violations[0];
            Err(CliError::InvalidSystem(format!("{} violation(s), first: {}", self.report.violations.len(), first)))
        }
    }

    /// The system with evaluation data; an evaluation-free one when absent.
    pub fn af_system(&self) -> Result<AFVilladsenSystem, CliError> {
        let points = self
            .config
            .eval_points
            .as_ref()
            .map(|levels| {
                levels
                    .iter()
                    .map(|rows| {
                        rows.iter()
                            .map(|cols| cols.iter().map(|words| words.iter().map(|w| shift_word(w)).collect()).collect())
                            .collect()
                    })
                    .collect::<Result<Vec<Vec<Vec<Vec<Word>>>>, CliError>>()
            })
            .transpose()?;
        Ok(AFVilladsenSystem::new(
            self.system.clone(),
            self.config.eval_counts.clone(),
            self.config.x_size.unwrap_or(2),
            points,
        )?)
    }

    pub fn partition(&self, level: usize) -> Option<&PartitionScheme> {
        self.config.partitions.iter().find(|p| p.level == level)
    }
}

fn shift_word(w: &[u16]) -> Result<Word, CliError> {
    w.iter()
        .map(|&x| {
            x.checked_sub(1).and_then(|v| Letter::try_from(v).ok()).ok_or_else(|| CliError::Schema {
                path: "eval_points".into(),
                message: format!("letter {x} outside 1..=256"),
            })
        })
        .collect()
}

fn check_nonnegative(m: &IntMatrix, path: &str) -> Result<(), CliError> {
    match m.entries().find(|(_, _, v)| **v < Int::from(0)) {
        Some((k, l, v)) => Err(CliError::Schema { path: format!("{path}[{k}][{l}]"), message: format!("entry {v} must be nonnegative") }),
        None => Ok(()),
    }
}

pub fn parse_config(text: &str) -> Result<Loaded, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: SystemConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    if config.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(CliError::Schema {
            path: "schema_version".into(),
            message: format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", config.schema_version),
        });
    }
    let seed = SeedAlgebra::new(config.seed_algebra.block_dims.clone())
        .map_err(|e| CliError::Schema { path: "seed_algebra.block_dims".into(), message: e.to_string() })?;
    if config.levels.is_empty() {
        return Err(CliError::Schema { path: "levels".into(), message: "at least one level is required".into() });
    }
    for (i, level) in config.levels.iter().enumerate() {
        if let Some(theta) = &level.theta {
            check_nonnegative(theta, &format!("levels[{i}].theta"))?;
        }
        if level.n.as_ref().is_some_and(|n| n.iter().any(|v| v.0 <= Int::from(0))) {
            return Err(CliError::Schema { path: format!("levels[{i}].n"), message: "order units must be positive".into() });
        }
    }
    for (q, step) in config.tail.iter().enumerate() {
        check_nonnegative(&step.theta, &format!("tail[{q}].theta"))?;
        if let Some(e) = &step.eval_counts {
            check_nonnegative(e, &format!("tail[{q}].eval_counts"))?;
        }
    }
    for (i, e) in config.eval_counts.iter().enumerate() {
        check_nonnegative(e, &format!("eval_counts[{i}]"))?;
    }
    let system = build_system(&config)?;
    let mut report = validate(&system);
    for (idx, scheme) in config.partitions.iter().enumerate() {
        let part = validate_partition(scheme, &system, scheme.level).map_err(|e| CliError::Schema {
            path: format!("partitions[{idx}]"),
            message: e.to_string(),
        })?;
        report.violations.extend(part.violations);
    }
    Ok(Loaded { config, system, seed, report })
}

/// Derives missing order units by unitality; a trailing multiplicity matrix
/// without a tail adds one more level.
fn build_system(config: &SystemConfig) -> Result<DimensionSystem, CliError> {
    let unit = |i: usize| config.levels[i].n.as_ref().map(|n| n.iter().map(|v| v.0.clone()).collect::<Vec<Int>>());
    let first_n = unit(0)
        .ok_or_else(|| CliError::Schema { path: "levels[0].n".into(), message: "the first level needs an order unit".into() })?;
    let mut levels: Vec<LevelSpec> = Vec::with_capacity(config.levels.len() + 1);
    let mut prev_n = first_n;
    for (i, level) in config.levels.iter().enumerate() {
        let n = match (unit(i), i) {
            (Some(n), _) => n,
            (None, 0) => unreachable!("checked above"),
            (None, _) => {
                let theta = levels[i - 1].theta.as_ref().ok_or_else(|| CliError::Schema {
                    path: format!("levels[{}].theta", i - 1),
                    message: "needed to derive the next order unit".into(),
                })?;
                theta.left_apply(&prev_n).map_err(|e| CliError::Schema { path: format!("levels[{}].theta", i - 1), message: e.to_string() })?
            }
        };
        prev_n = n.clone();
        levels.push(LevelSpec { n, theta: level.theta.clone() });
    }
    let last_theta = levels.last().and_then(|l| l.theta.clone());
    match (last_theta, config.tail.is_empty()) {
        (Some(theta), true) => {
            let n = theta
                .left_apply(&prev_n)
                .map_err(|e| CliError::Schema { path: format!("levels[{}].theta", levels.len() - 1), message: e.to_string() })?;
            levels.push(LevelSpec { n, theta: None });
        }
        (Some(_), false) => {
            return Err(CliError::Schema {
                path: format!("levels[{}].theta", levels.len() - 1),
                message: "the last explicit level hands over to the tail and takes no multiplicity matrix".into(),
            })
        }
        (None, _) => {}
    }
    let tail = (!config.tail.is_empty()).then(|| TailRule { start_level: levels.len(), pattern: config.tail.clone() });
    Ok(DimensionSystem::new(levels, tail))
}
