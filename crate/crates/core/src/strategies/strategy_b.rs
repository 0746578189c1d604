use serde::{Deserialize, Serialize};

use super::bad::bad_interval;
use super::blockade::AvoidPlan;
use super::constants::ConstantsB;
use super::{fits, StrategyOptions};
use crate::dynamics::{Chain, MapSequence, SymbolSet};
use crate::error::{Error, Result};
use crate::game::{Alice, GameState};
use crate::geometry::Slab;
use crate::scalar::Scalar;
use crate::targets::TargetSequence;

const VISIT_CAP: usize = 1_000_000;

/// Nonempty words u (from time 1) with lower < |I_u| ≤ upper whose cylinder meets [x0, x1];
/// without `upper` every nonempty word longer than `lower` counts.
#[derive(Clone, Debug)]
pub struct WordClass {
    pub words: Vec<Chain>,
    /// Largest |v| − |u| over pairs u ⊑ v of words in the class.
    pub max_nested_gap: usize,
}

/// Depth-first search over cylinders meeting [x0, x1], pruned once |I_u| ≤ lower.
///
/// The interval must be shorter than `lower`: then any symbol whose whole branch
/// domain sits inside the image of the interval yields a cylinder inside the
/// interval, too short to matter, so only the outermost symbols are explored.
pub fn word_class(seq: &MapSequence, x0: &Scalar, x1: &Scalar, lower: &Scalar, upper: Option<&Scalar>) -> Result<WordClass> {
    if !(x1 - x0).lt(lower)? {
        return Err(Error::Precondition("cube is not shorter than the class's lower length".into()));
    }
    let mut words = vec![];
    let mut max_nested_gap = 0usize;
    // (chain, depth of the shortest ancestor already in the class)
    let mut stack: Vec<(Chain, Option<usize>)> = vec![(seq.root(1), None)];
    let mut visits = 0usize;
    while let Some((chain, anc)) = stack.pop() {
        visits += 1;
        if visits > VISIT_CAP {
            return Err(Error::Precondition("word enumeration exceeded its visit cap".into()));
        }
        let Some((y0, y1)) = chain.push(x0, x1)? else { continue };
        let len = chain.length()?;
        if len.le(lower)? {
            continue;
        }
        let mut anc = anc;
        if chain.depth() > 0 && upper.map_or(Ok(true), |u| len.le(u))? {
            let depth = chain.depth();
            if let Some(a) = anc {
                max_nested_gap = max_nested_gap.max(depth - a);
            } else {
                anc = Some(depth);
            }
            words.push(chain.clone());
        }
        let time = 1 + chain.depth();
        let map = seq.at(time);
        let syms = match map.symbols_meeting(&y0, &y1)? {
            SymbolSet::Finite(v) => v,
            SymbolSet::Range { from, to: None } => vec![from],
            SymbolSet::Range { from, to: Some(to) } if to == from => vec![from],
            SymbolSet::Range { from, to: Some(to) } => vec![from, to],
        };
        for sym in syms {
            if let Some(next) = chain.extend(seq, sym)? {
                stack.push((next, anc));
            }
        }
    }
    words.sort_by_key(|c| c.depth());
    Ok(WordClass { words, max_nested_gap })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageB {
    pub k: usize,
    pub round: usize,
    pub n_k: usize,
    pub words: usize,
    pub shortest: usize,
    pub longest: usize,
    pub max_nested_gap: usize,
    pub intervals: usize,
    pub max_fill: f64,
    pub bounds_ok: bool,
    pub cleared: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportB {
    pub strategy: String,
    /// Stage 0 also covers every shorter time n.
    #[serde(default)]
    pub cover_prefix: bool,
    pub constants: ConstantsB,
    pub origin: Option<usize>,
    pub rho1: Option<Scalar>,
    pub delta: Option<Scalar>,
    pub stages: Vec<StageB>,
    pub violations: Vec<String>,
    pub phase: String,
}

#[derive(Clone, Debug)]
enum Phase {
    Wait,
    Stage(usize),
    Avoiding { k: usize, left: usize },
    Next(usize),
    Done,
}

/// Alice's strategy for full-branch sequences.
///
/// Once the cube is shorter than γ^{2s}, stage k (at the first cube shorter than
/// γ^{ks}ρ₁) lists the words with γ^{(k+2)s} < |I_u| ≤ γ^{(k+1)s} whose cylinders
/// meet it and blockades their bad intervals over s₁ rounds.
pub struct StrategyB {
    seq: MapSequence,
    targets: TargetSequence,
    consts: ConstantsB,
    opts: StrategyOptions,
    phase: Phase,
    origin: Option<usize>,
    rho1: Option<Scalar>,
    delta: Option<Scalar>,
    stages: Vec<StageB>,
    violations: Vec<String>,
    plan: Option<AvoidPlan>,
}

/// δ = (ρ₁/2)(1/(2C₂γ^{s₂−1}) − C₁γ^s).
pub fn delta_b(consts: &ConstantsB, rho1: &Scalar) -> Scalar {
    let g = &consts.gamma;
    let two = Scalar::from(2);
    let first = (&(&two * &consts.c2) * &g.powi(consts.s2 as i64 - 1)).recip();
    let second = &consts.c1 * &g.powi(consts.s as i64);
    &(rho1 / &two) * &(&first - &second)
}

impl StrategyB {
    pub fn new(seq: MapSequence, targets: TargetSequence, consts: ConstantsB, opts: StrategyOptions) -> StrategyB {
        StrategyB {
            seq,
            targets,
            consts,
            opts,
            phase: Phase::Wait,
            origin: None,
            rho1: None,
            delta: None,
            stages: vec![],
            violations: vec![],
            plan: None,
        }
    }

    pub fn report(&self) -> ReportB {
        ReportB {
            strategy: "B".into(),
            cover_prefix: self.opts.cover_prefix,
            constants: self.consts.clone(),
            origin: self.origin,
            rho1: self.rho1.clone(),
            delta: self.delta.clone(),
            stages: self.stages.clone(),
            violations: self.violations.clone(),
            phase: format!("{:?}", self.phase).to_lowercase(),
        }
    }

    fn violate(&mut self, msg: String) -> Result<()> {
        self.violations.push(msg.clone());
        if self.opts.checked {
            return Err(Error::Invariant(msg));
        }
        Ok(())
    }

    fn stage(&mut self, state: &GameState, k: usize) -> Result<Slab> {
        let cube = state.current.clone();
        let g = self.consts.gamma.clone();
        let s = self.consts.s as i64;
        let n = self.consts.n;
        let lower = g.powi((k as i64 + 2) * s);
        let upper = g.powi((k as i64 + 1) * s);
        let upper = (k > 0 || !self.opts.cover_prefix).then_some(upper);
        let class = word_class(&self.seq, &cube.lo(0), &cube.hi(0), &lower, upper.as_ref())?;
        let delta = self.delta.clone().unwrap();
        let mut js = vec![];
        let mut bounds_ok = true;
        for chain in &class.words {
            let j = bad_interval(chain, &self.targets, &cube, &delta)?;
            if let Some(iv) = &j.interval {
                bounds_ok &= fits(&j.length(), &j.bound)?;
                js.push(iv.clone());
            }
        }
        let limit = &(&g.powi(self.consts.s1 as i64) * &cube.diameter()) / &Scalar::from(2);
        let max_fill = js.iter().map(|(a, b)| (&(b - a) / &limit).to_f64()).fold(0.0f64, f64::max);
        let origin = self.origin.unwrap();
        self.stages.push(StageB {
            k,
            round: state.round(),
            n_k: state.round() + 1 - origin,
            words: class.words.len(),
            shortest: class.words.first().map_or(0, |c| c.depth()),
            longest: class.words.last().map_or(0, |c| c.depth()),
            max_nested_gap: class.max_nested_gap,
            intervals: js.len(),
            max_fill,
            bounds_ok,
            cleared: None,
        });
        if class.words.len() > 2 * n {
            self.violate(format!("stage {k}: {} words exceed 2N = {}", class.words.len(), 2 * n))?;
        }
        if !class.words.is_empty() && class.max_nested_gap >= n {
            self.violate(format!("stage {k}: nested words differ in length by {} ≥ N", class.max_nested_gap))?;
        }
        if !bounds_ok {
            self.violate(format!("stage {k}: a bad interval exceeds its length bound"))?;
        }
        if max_fill > 1.0 {
            self.violate(format!("stage {k}: bad intervals too long for the blockade (fill {max_fill:.3})"))?;
        }
        let mut plan = AvoidPlan::new(&cube, 0, &g, js, false)?;
        let slab = plan.step(&cube, &g)?;
        self.plan = Some(plan);
        self.phase = Phase::Avoiding { k, left: self.consts.s1.saturating_sub(1) };
        Ok(slab)
    }
}

impl Alice for StrategyB {
    fn play(&mut self, state: &GameState) -> Result<Option<Slab>> {
        let cube = &state.current;
        let d = cube.dim();
        let g = self.consts.gamma.clone();
        loop {
            match self.phase.clone() {
                Phase::Wait => {
                    if cube.diameter().lt(&g.powi(2 * self.consts.s as i64))? {
                        let rho1 = cube.diameter();
                        let delta = match &self.opts.delta {
                            Some(d) => d.clone(),
                            None => delta_b(&self.consts, &rho1),
                        };
                        if delta.signum()? != std::cmp::Ordering::Greater {
                            return Err(Error::CertificateTooWeak("δ is not positive".into()));
                        }
                        self.origin = Some(state.round());
                        self.rho1 = Some(rho1);
                        self.delta = Some(delta);
                        self.phase = Phase::Stage(0);
                        continue;
                    }
                    return Ok(Some(Slab::pass(d)));
                }
                Phase::Stage(k) => return self.stage(state, k).map(Some),
                Phase::Avoiding { k, left } => {
                    let plan = self.plan.as_mut().unwrap();
                    if left == 0 {
                        let cleared = plan.pending(cube)?.is_empty();
                        self.stages.last_mut().unwrap().cleared = Some(cleared);
                        self.plan = None;
                        self.phase = Phase::Next(k + 1);
                        if !cleared {
                            self.violate(format!("stage {k}: bad intervals still meet the cube"))?;
                        }
                        continue;
                    }
                    let slab = plan.step(cube, &g)?;
                    self.phase = Phase::Avoiding { k, left: left - 1 };
                    return Ok(Some(slab));
                }
                Phase::Next(k) => {
                    let thr = &g.powi((k * self.consts.s) as i64) * self.rho1.as_ref().unwrap();
                    if !cube.diameter().lt(&thr)? {
                        return Ok(Some(Slab::pass(d)));
                    }
                    if k >= self.opts.stages {
                        self.phase = Phase::Done;
                        continue;
                    }
                    self.phase = Phase::Stage(k);
                }
                Phase::Done => return Ok(None),
            }
        }
    }

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::to_value(self.report()).unwrap_or(serde_json::Value::Null)
    }
}
