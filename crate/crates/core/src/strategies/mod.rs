//! Alice's side: blockades, bad intervals, the two staged strategies and the
//! checks that their outcome avoids the target.

pub mod bad;
pub mod blockade;
pub mod constants;
pub mod strategy_a;
pub mod strategy_b;
pub mod verify;

pub use bad::{bad_interval, bad_interval_at, BadInterval};
pub use blockade::{avoid_point, blockade, epsilon, rounds_for, AvoidPlan, BlockadeCase, BlockadePlan};
pub use constants::{constants_a, constants_a_user, constants_b, constants_b_user, ConstantsA, ConstantsB, DEFAULT_N_CAP};
pub use strategy_a::{ReportA, StageA, StrategyA};
pub use strategy_b::{delta_b, word_class, ReportB, StageB, StrategyB, WordClass};
pub use verify::{verify_a, verify_b, Verification};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct StrategyOptions {
    /// Stages to complete before Alice stops the game.
    pub stages: usize,
    /// Treat a failed guarantee as an error rather than a logged violation.
    pub checked: bool,
    pub endpoint_cap: usize,
    /// Overrides the certified δ.
    pub delta: Option<Scalar>,
    /// Stage 0 also blockades the bad intervals of every time before its window.
    pub cover_prefix: bool,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        StrategyOptions { stages: 3, checked: true, endpoint_cap: 64, delta: None, cover_prefix: false }
    }
}

/// len ≤ bound, allowing a relative 2⁻⁴⁰ when the bound is only known as a ball.
pub(crate) fn fits(len: &Scalar, bound: &Scalar) -> Result<bool> {
    if bound.is_exact() && len.is_exact() {
        return Ok(len.le(bound)?);
    }
    let slack = &Scalar::one() + &Scalar::pow2(-40);
    Ok(len.le(&(bound * &slack))?)
}
