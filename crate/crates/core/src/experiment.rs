//! One-file experiment descriptions: build the map, targets, strategy and Bob,
//! play the game, and check the result.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversaries::BobSpec;
use crate::dynamics::{Assumption, MapSequence, MapSpec};
use crate::error::{Error, Result};
use crate::game::{run, Alice, GameConfig, PassAlice, Trace};
use crate::geometry::Cube;
use crate::scalar::{NumericMode, Scalar};
use crate::strategies::{
    constants_a, constants_a_user, constants_b, constants_b_user, verify_a, verify_b, ReportA, ReportB, StrategyA,
    StrategyB, StrategyOptions, Verification, DEFAULT_N_CAP,
};
use crate::targets::{TargetSequence, TargetSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// A for finitely many branches, otherwise B.
    #[default]
    Auto,
    A,
    B,
    /// Alice always passes.
    Pass,
}

/// Hand-picked constants for empirical runs. Nothing about them is certified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConstants {
    pub n: usize,
    pub s1: usize,
    pub s2: usize,
    pub delta: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    #[serde(default)]
    pub kind: StrategyKind,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
    #[serde(default = "default_endpoint_cap")]
    pub endpoint_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<UserConstants>,
    /// Defaults to true with user constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover_prefix: Option<bool>,
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec {
            kind: StrategyKind::Auto,
            stages: default_stages(),
            n_cap: default_n_cap(),
            endpoint_cap: default_endpoint_cap(),
            constants: None,
            cover_prefix: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<String>,
}

/// Everything needed to reproduce one game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub map: MapSpec,
    pub target: TargetSpec,
    pub gamma: Scalar,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Falls back to the caller's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<NumericMode>,
    pub bob: BobSpec,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub strategy: StrategySpec,
    /// Overrides Bob's seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Times n ≤ horizon get an a-posteriori distance check.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_stages() -> usize {
    3
}
fn default_n_cap() -> usize {
    DEFAULT_N_CAP
}
fn default_endpoint_cap() -> usize {
    64
}
fn default_dim() -> usize {
    1
}
fn default_max_rounds() -> usize {
    1000
}
fn default_horizon() -> usize {
    200
}

/// A finished game and, unless Alice only passed, its verification.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub trace: Trace,
    pub verification: Option<Verification>,
}

/// The built pieces of a spec.
pub struct Setup {
    pub config: GameConfig,
    pub seq: MapSequence,
    pub targets: TargetSequence,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<ExperimentSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn mode_or(&self, default: NumericMode) -> NumericMode {
        self.mode.unwrap_or(default)
    }

    pub fn setup(&self, default_mode: NumericMode, base: Option<&Path>) -> Result<Setup> {
        let mode = self.mode_or(default_mode);
        let config = GameConfig::new(self.gamma.clone(), self.dim, mode, self.max_rounds)?;
        let seq = self.map.build(mode)?;
        let targets = self.target.build(base)?;
        if let Some(u) = &self.strategy.constants {
            if u.delta.signum()? != std::cmp::Ordering::Greater {
                return Err(Error::Spec("delta must be positive".into()));
            }
        }
        Ok(Setup { config, seq, targets })
    }

    fn resolved_kind(&self, seq: &MapSequence) -> Result<StrategyKind> {
        Ok(match self.strategy.kind {
            StrategyKind::Auto if seq.satisfies(Assumption::A) => StrategyKind::A,
            StrategyKind::Auto if seq.satisfies(Assumption::B) => StrategyKind::B,
            StrategyKind::Auto => {
                return Err(Error::UnsupportedAssumption(
                    "the maps have neither finitely many branches nor only full branches".into(),
                ))
            }
            k => k,
        })
    }

    fn options(&self) -> StrategyOptions {
        let user = self.strategy.constants.as_ref();
        StrategyOptions {
            stages: self.strategy.stages,
            checked: user.is_none(),
            endpoint_cap: self.strategy.endpoint_cap,
            delta: user.map(|u| u.delta.clone()),
            cover_prefix: self.strategy.cover_prefix.unwrap_or(user.is_some()),
        }
    }

    fn alice(&self, setup: &Setup) -> Result<Box<dyn Alice>> {
        let Setup { config, seq, targets } = setup;
        let c1 = &targets.lipschitz;
        let g = &config.gamma;
        let user = self.strategy.constants.as_ref();
        Ok(match self.resolved_kind(seq)? {
            StrategyKind::A => {
                let consts = match user {
                    Some(u) => constants_a_user(seq, c1, g, u.n, u.s1, u.s2)?,
                    None => constants_a(seq, c1, g, self.strategy.n_cap)?,
                };
                Box::new(StrategyA::new(seq.clone(), targets.clone(), consts, self.options()))
            }
            StrategyKind::B => {
                let consts = match user {
                    Some(u) => constants_b_user(seq, c1, g, u.n, u.s1, u.s2)?,
                    None => constants_b(seq, c1, g, self.strategy.n_cap)?,
                };
                Box::new(StrategyB::new(seq.clone(), targets.clone(), consts, self.options()))
            }
            StrategyKind::Pass | StrategyKind::Auto => Box::new(PassAlice),
        })
    }
}

/// Play the game a spec describes and verify the outcome.
pub fn run_experiment(spec: &ExperimentSpec, default_mode: NumericMode, base: Option<&Path>) -> Result<Outcome> {
    let setup = spec.setup(default_mode, base)?;
    let mut alice = spec.alice(&setup)?;
    let bob_spec = match spec.seed {
        Some(s) => spec.bob.with_seed(s),
        None => spec.bob.clone(),
    };
    let mut bob = bob_spec.build(&setup.config.gamma, &setup.seq, &setup.targets, base)?;
    let trace = run(&setup.config, alice.as_mut(), bob.as_mut(), Cube::unit(spec.dim))?;
    let verification = verify_with(&setup, &trace, spec.horizon)?;
    Ok(Outcome { trace, verification })
}

/// Re-check a recorded trace against the spec that produced it.
pub fn verify_trace(spec: &ExperimentSpec, trace: &Trace, base: Option<&Path>) -> Result<Option<Verification>> {
    let setup = spec.setup(trace.mode, base)?;
    if setup.config.gamma != trace.gamma || setup.config.dim != trace.dim {
        return Err(Error::Spec("trace does not match the spec's gamma or dimension".into()));
    }
    trace.check_legality()?;
    verify_with(&setup, trace, spec.horizon)
}

fn verify_with(setup: &Setup, trace: &Trace, horizon: usize) -> Result<Option<Verification>> {
    let kind = trace.diagnostics.get("strategy").and_then(|v| v.as_str());
    let v = match kind {
        Some("A") => {
            let report: ReportA = serde_json::from_value(trace.diagnostics.clone())?;
            verify_a(trace, &setup.seq, &setup.targets, &report, horizon)?
        }
        Some("B") => {
            let report: ReportB = serde_json::from_value(trace.diagnostics.clone())?;
            verify_b(trace, &setup.seq, &setup.targets, &report, horizon)?
        }
        _ => return Ok(None),
    };
    Ok(Some(v))
}
