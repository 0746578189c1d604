use std::collections::BTreeSet;

use serde::Serialize;

use super::strategy_a::ReportA;
use super::strategy_b::{word_class, ReportB};
use crate::dynamics::{Chain, MapSequence};
use crate::error::{Error, Result};
use crate::game::Trace;
use crate::geometry::Cube;
use crate::scalar::Scalar;
use crate::targets::TargetSequence;

/// Outcome of checking a finished game against the strategy's guarantee.
#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub strategy: String,
    pub certified: bool,
    pub delta: Option<Scalar>,
    pub stages_completed: usize,
    /// Times n the completed stages vouch for.
    pub covered: Vec<usize>,
    /// Cube-level checks: the whole cube B_{n_k+s} maps away from the target band.
    pub cube_checks: usize,
    pub cube_failures: Vec<String>,
    /// Covered n where the final centre fails |T_{1,n}(x)₁ − g_n(x)₁| > δ.
    pub pointwise_failures: Vec<usize>,
    /// min over covered n of |T_{1,n}(x)₁ − g_n(x)₁|.
    pub min_covered: Option<Scalar>,
    /// min over every n ≤ horizon, a diagnostic only.
    pub horizon: usize,
    pub min_horizon: Option<f64>,
    /// Why the game stopped early, if it did.
    pub abort: Option<String>,
    pub passed: bool,
}

/// Whether T_{1,n} maps the cube's projection (inside the chain's cylinder)
/// strictly outside the band g_n(c)₁ ± (C₁r + δ).
fn cube_clear(chain: &Chain, targets: &TargetSequence, cube: &Cube, delta: &Scalar) -> Result<bool> {
    let Some((y0, y1)) = chain.push(&cube.lo(0), &cube.hi(0))? else {
        return Ok(true);
    };
    let t = targets.first(chain.depth(), &cube.center)?;
    let w = delta + &(&targets.lipschitz * &cube.radius);
    Ok(y1.lt(&(&t - &w))? || y0.gt(&(&t + &w))?)
}

/// |T_{1,n}(x₁) − g_n(x)₁| for n = 1..=len; stops early if the orbit hits a boundary.
fn distances(seq: &MapSequence, targets: &TargetSequence, x: &[Scalar], len: usize) -> Result<Vec<Scalar>> {
    let mut out = Vec::with_capacity(len);
    let mut y = x[0].clone();
    for n in 1..=len {
        let Some(branch) = seq.at(n).locate(&y)? else { break };
        y = branch.apply(&y);
        let g = targets.first(n, x)?;
        out.push((&y - &g).abs());
    }
    Ok(out)
}

fn finish(
    strategy: &str,
    certified: bool,
    seq: &MapSequence,
    targets: &TargetSequence,
    trace: &Trace,
    delta: Option<Scalar>,
    stages_completed: usize,
    covered: BTreeSet<usize>,
    cube_checks: usize,
    cube_failures: Vec<String>,
    horizon: usize,
) -> Result<Verification> {
    let x = &trace.final_center;
    let top = covered.iter().next_back().copied().unwrap_or(0).max(horizon);
    let dist = distances(seq, targets, x, top)?;
    let mut pointwise_failures = vec![];
    let mut min_covered: Option<Scalar> = None;
    if let Some(delta) = &delta {
        for &n in &covered {
            match dist.get(n - 1) {
                Some(v) => {
                    if !v.gt(delta)? {
                        pointwise_failures.push(n);
                    }
                    min_covered = Some(min_covered.map_or(v.clone(), |m| m.min(v)));
                }
                None => pointwise_failures.push(n),
            }
        }
    }
    let min_horizon = dist.iter().take(horizon).map(|v| v.to_f64()).reduce(f64::min);
    let abort = trace.abort.as_ref().map(|a| a.message.clone());
    let passed = cube_failures.is_empty() && pointwise_failures.is_empty() && stages_completed > 0 && abort.is_none();
    Ok(Verification {
        strategy: strategy.into(),
        certified,
        delta,
        stages_completed,
        covered: covered.into_iter().collect(),
        cube_checks,
        cube_failures,
        pointwise_failures,
        min_covered,
        horizon,
        min_horizon,
        abort,
        passed,
    })
}

/// Check a finite-alphabet game: for each completed stage, every n in [m_k, m_k+N]
/// must keep B_{n_k+s} and the final centre more than δ from the target.
pub fn verify_a(trace: &Trace, seq: &MapSequence, targets: &TargetSequence, report: &ReportA, horizon: usize) -> Result<Verification> {
    let c = &report.constants;
    let cubes = trace.rounds.len() + 1;
    let mut covered = BTreeSet::new();
    let mut cube_checks = 0;
    let mut cube_failures = vec![];
    let mut completed = 0;
    let delta = report.delta.clone();
    for st in &report.stages {
        let idx = st.round + c.s;
        if idx > cubes {
            break;
        }
        let delta = delta.as_ref().ok_or_else(|| Error::Invariant("stage without δ".into()))?;
        completed += 1;
        let cube = trace.cube(idx);
        let depth = st.m_k + c.n;
        let path = seq.descend(1, &cube.lo(0), &cube.hi(0), depth)?;
        let first = if st.k == 0 && report.cover_prefix { 1 } else { st.m_k };
        for n in first..=depth {
            covered.insert(n);
            cube_checks += 1;
            match path.get(n) {
                Some(chain) if cube_clear(chain, targets, cube, delta)? => {}
                Some(_) => cube_failures.push(format!("stage {}: B_{{n_k+s}} meets the band at n = {n}", st.k)),
                None => cube_failures.push(format!("stage {}: B_{{n_k+s}} straddles a depth-{n} endpoint", st.k)),
            }
        }
    }
    finish("A", c.certified, seq, targets, trace, delta, completed, covered, cube_checks, cube_failures, horizon)
}

/// Check a full-branch game: for each completed stage k and every word u of the
/// class γ^{(k+2)s} < |I_u| ≤ γ^{(k+1)s}, B_{n_k+s} ∩ I_u maps more than δ from the target.
pub fn verify_b(trace: &Trace, seq: &MapSequence, targets: &TargetSequence, report: &ReportB, horizon: usize) -> Result<Verification> {
    let c = &report.constants;
    let g = &c.gamma;
    let s = c.s as i64;
    let cubes = trace.rounds.len() + 1;
    let mut covered = BTreeSet::new();
    let mut cube_checks = 0;
    let mut cube_failures = vec![];
    let mut completed = 0;
    let delta = report.delta.clone();
    let x = &trace.final_center;
    let done: Vec<_> = report.stages.iter().take_while(|st| st.round + c.s <= cubes).collect();
    // Times covered at the final centre: depths of its own cylinders in each class.
    let max_depth = done.iter().map(|st| st.longest.max(1) + c.n + 1).max().unwrap_or(0);
    let itinerary = seq.descend(1, &x[0], &x[0], max_depth)?;
    let lengths = itinerary.iter().map(|c| c.length()).collect::<Result<Vec<_>>>()?;
    for st in done {
        let delta = delta.as_ref().ok_or_else(|| Error::Invariant("stage without δ".into()))?;
        completed += 1;
        let k = st.k as i64;
        let lower = g.powi((k + 2) * s);
        let upper = g.powi((k + 1) * s);
        let cube = trace.cube(st.round + c.s);
        let upper = (st.k > 0 || !report.cover_prefix).then_some(upper);
        let class = word_class(seq, &cube.lo(0), &cube.hi(0), &lower, upper.as_ref())?;
        for chain in &class.words {
            cube_checks += 1;
            if !cube_clear(chain, targets, cube, delta)? {
                cube_failures.push(format!("stage {}: word of length {} meets the band", st.k, chain.depth()));
            }
        }
        for (depth, len) in lengths.iter().enumerate().skip(1) {
            if !len.gt(&lower)? {
                break;
            }
            if upper.as_ref().map_or(Ok(true), |u| len.le(u))? {
                covered.insert(depth);
            }
        }
    }
    finish("B", c.certified, seq, targets, trace, delta, completed, covered, cube_checks, cube_failures, horizon)
}
