use serde::{Deserialize, Serialize};

use super::bad::bad_interval;
use super::blockade::{blockade, AvoidPlan};
use super::constants::ConstantsA;
use super::{fits, StrategyOptions};
use crate::dynamics::{Chain, MapSequence};
use crate::error::{Error, Result};
use crate::game::{Alice, GameState};
use crate::geometry::{Cube, Slab};
use crate::scalar::Scalar;
use crate::targets::TargetSequence;

/// One stage of the finite-alphabet strategy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageA {
    pub k: usize,
    /// Absolute game index of B_{n_k}.
    pub round: usize,
    /// n_k counted from the relabelled first cube.
    pub n_k: usize,
    pub m_k: usize,
    /// Depth-(m_k+N) cylinder endpoints met by B_{n_k}.
    pub endpoints: usize,
    pub intervals: usize,
    /// max |J| / (γ^{s₁}|B|/2); at most 1 when the blockade precondition holds.
    pub max_fill: f64,
    /// Every |J| is within its mean-value bound.
    pub bounds_ok: bool,
    /// After the avoidance rounds no interval meets the cube.
    pub cleared: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapCheck {
    pub k: usize,
    pub previous: usize,
    pub m_k: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportA {
    pub strategy: String,
    /// Stage 0 also covers every shorter time n.
    #[serde(default)]
    pub cover_prefix: bool,
    pub constants: ConstantsA,
    pub origin: Option<usize>,
    pub rho2: Option<Scalar>,
    pub delta: Option<Scalar>,
    pub stages: Vec<StageA>,
    pub gaps: Vec<GapCheck>,
    pub violations: Vec<String>,
    pub phase: String,
}

#[derive(Clone, Debug)]
enum Phase {
    Wait,
    First,
    Second,
    Intervals(usize),
    Avoiding { k: usize, left: usize },
    Next(usize),
    Done,
}

/// Alice's strategy for sequences of maps with finitely many branches.
///
/// After a waiting phase shrinks the cube below ℓ·min{γ^s, 1/M}, stage k steers
/// the cube into one depth-(m_k+N) cylinder, computes the bad interval for every
/// n in [m_k, m_k+N] and blockades them away over s₁ rounds. Stage k+1 begins
/// once the diameter drops below γ^{(k+1)s}ρ₂.
pub struct StrategyA {
    seq: MapSequence,
    targets: TargetSequence,
    consts: ConstantsA,
    opts: StrategyOptions,
    phase: Phase,
    origin: Option<usize>,
    rho2: Option<Scalar>,
    delta: Option<Scalar>,
    stages: Vec<StageA>,
    gaps: Vec<GapCheck>,
    violations: Vec<String>,
    plan: Option<AvoidPlan>,
}

impl StrategyA {
    pub fn new(seq: MapSequence, targets: TargetSequence, consts: ConstantsA, opts: StrategyOptions) -> StrategyA {
        StrategyA {
            seq,
            targets,
            consts,
            opts,
            phase: Phase::Wait,
            origin: None,
            rho2: None,
            delta: None,
            stages: vec![],
            gaps: vec![],
            violations: vec![],
            plan: None,
        }
    }

    pub fn report(&self) -> ReportA {
        ReportA {
            strategy: "A".into(),
            cover_prefix: self.opts.cover_prefix,
            constants: self.consts.clone(),
            origin: self.origin,
            rho2: self.rho2.clone(),
            delta: self.delta.clone(),
            stages: self.stages.clone(),
            gaps: self.gaps.clone(),
            violations: self.violations.clone(),
            phase: format!("{:?}", self.phase).to_lowercase(),
        }
    }

    fn gamma(&self) -> &Scalar {
        &self.consts.gamma
    }

    /// Record a failed guarantee; fatal in checked mode.
    fn violate(&mut self, msg: String) -> Result<()> {
        self.violations.push(msg.clone());
        if self.opts.checked {
            return Err(Error::Invariant(msg));
        }
        Ok(())
    }

    fn wait_threshold(&self) -> Scalar {
        let g = self.gamma().powi(self.consts.s as i64);
        let m = self.consts.sup_derivative.recip();
        &self.consts.ell * &g.min(&m)
    }

    /// Blockade the depth-`depth` cylinder endpoints lying in the cube.
    fn steer(&mut self, cube: &Cube, depth: usize) -> Result<(Slab, usize)> {
        let pts = self.seq.endpoints_in(1, &cube.lo(0), &cube.hi(0), depth, self.opts.endpoint_cap)?;
        if pts.len() > 1 {
            self.violate(format!("{} depth-{depth} cylinder endpoints in one cube", pts.len()))?;
        }
        let plan = blockade(cube, 0, self.gamma(), &pts)?;
        Ok((plan.slab, pts.len()))
    }

    /// m_k: least n ≤ depth with sup over the cube of |T′_{1,n}| above M⁻¹γ^{−(k+1)s}.
    fn find_m(&self, path: &[Chain], cube: &Cube, k: usize) -> Result<Option<usize>> {
        let s = self.consts.s as i64;
        let thr = &self.consts.sup_derivative.recip() * &self.gamma().powi(-((k as i64) + 1) * s);
        for (n, chain) in path.iter().enumerate().skip(1) {
            let (_, sup) = chain.derivative_range(&cube.lo(0), &cube.hi(0));
            if sup.gt(&thr)? {
                return Ok(Some(n));
            }
        }
        Ok(None)
    }

    /// Start of stage k at B_{n_k}: find m_k, then steer into a depth-(m_k+N) cylinder.
    fn begin_stage(&mut self, state: &GameState, k: usize, n_k: usize) -> Result<Slab> {
        let cube = &state.current;
        let n = self.consts.n;
        let depth = match self.stages.last() {
            Some(prev) => prev.m_k + n,
            None => n,
        };
        let path = self.seq.descend(1, &cube.lo(0), &cube.hi(0), depth)?;
        if path.len() <= depth {
            self.violate(format!("stage {k}: cube not inside a depth-{depth} cylinder"))?;
        }
        let Some(m_k) = self.find_m(&path, cube, k)? else {
            if let Some(prev) = self.stages.last() {
                self.gaps.push(GapCheck { k, previous: prev.m_k, m_k: usize::MAX, ok: false });
            }
            self.violate(format!("stage {k}: no m_k up to depth {}", path.len() - 1))?;
            self.phase = Phase::Next(k + 1);
            return Ok(Slab::pass(cube.dim()));
        };
        if let Some(prev) = self.stages.last() {
            let ok = m_k >= prev.m_k && m_k - prev.m_k <= n;
            self.gaps.push(GapCheck { k, previous: prev.m_k, m_k, ok });
            if !ok {
                self.violate(format!("stage {k}: m_k − m_(k−1) = {} − {} outside [0, N]", m_k, prev.m_k))?;
            }
        }
        let (slab, endpoints) = self.steer(cube, m_k + n)?;
        self.stages.push(StageA {
            k,
            round: state.round(),
            n_k,
            m_k,
            endpoints,
            intervals: 0,
            max_fill: 0.0,
            bounds_ok: true,
            cleared: None,
        });
        self.phase = Phase::Intervals(k);
        Ok(slab)
    }

    /// At B_{n_k+1}: bad intervals for n in [m_k, m_k+N], then the first avoidance round.
    fn intervals(&mut self, state: &GameState, k: usize) -> Result<Slab> {
        let cube = state.current.clone();
        let n = self.consts.n;
        let m_k = self.stages.last().unwrap().m_k;
        let path = self.seq.descend(1, &cube.lo(0), &cube.hi(0), m_k + n)?;
        if path.len() <= m_k + n {
            self.violate(format!("stage {k}: steering left the cube across a depth-{} endpoint", m_k + n))?;
        }
        let delta = self.delta.clone().unwrap();
        let mut js = vec![];
        let mut bounds_ok = true;
        let first = if k == 0 && self.opts.cover_prefix { 1 } else { m_k };
        for chain in path.iter().skip(first).take(m_k + n + 1 - first) {
            let j = bad_interval(chain, &self.targets, &cube, &delta)?;
            if let Some(iv) = &j.interval {
                bounds_ok &= fits(&j.length(), &j.bound)?;
                js.push(iv.clone());
            }
        }
        let limit = &(&self.gamma().powi(self.consts.s1 as i64) * &cube.diameter()) / &Scalar::from(2);
        let max_fill = js
            .iter()
            .map(|(a, b)| (&(b - a) / &limit).to_f64())
            .fold(0.0f64, f64::max);
        {
            let st = self.stages.last_mut().unwrap();
            st.intervals = js.len();
            st.max_fill = max_fill;
            st.bounds_ok = bounds_ok;
        }
        if !bounds_ok {
            self.violate(format!("stage {k}: a bad interval exceeds its length bound"))?;
        }
        if max_fill > 1.0 {
            self.violate(format!("stage {k}: bad intervals too long for the blockade (fill {max_fill:.3})"))?;
        }
        let mut plan = AvoidPlan::new(&cube, 0, self.gamma(), js, false)?;
        let slab = plan.step(&cube, self.gamma())?;
        self.plan = Some(plan);
        self.phase = Phase::Avoiding { k, left: self.consts.s1.saturating_sub(1) };
        Ok(slab)
    }

    fn relative(&self, round: usize) -> usize {
        round + 1 - self.origin.unwrap()
    }
}

impl Alice for StrategyA {
    fn play(&mut self, state: &GameState) -> Result<Option<Slab>> {
        let cube = &state.current;
        let d = cube.dim();
        loop {
            match self.phase.clone() {
                Phase::Wait => {
                    if cube.diameter().lt(&self.wait_threshold())? {
                        self.origin = Some(state.round());
                        self.phase = Phase::First;
                        continue;
                    }
                    return Ok(Some(Slab::pass(d)));
                }
                Phase::First => {
                    let (slab, _) = self.steer(cube, self.consts.n)?;
                    self.phase = Phase::Second;
                    return Ok(Some(slab));
                }
                Phase::Second => {
                    let rho2 = cube.diameter();
                    self.delta = Some(match &self.opts.delta {
                        Some(d) => d.clone(),
                        None => self.gamma() * &rho2,
                    });
                    self.rho2 = Some(rho2);
                    let n_k = self.relative(state.round());
                    return self.begin_stage(state, 0, n_k).map(Some);
                }
                Phase::Intervals(k) => return self.intervals(state, k).map(Some),
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
                    let slab = plan.step(cube, &self.consts.gamma)?;
                    self.phase = Phase::Avoiding { k, left: left - 1 };
                    return Ok(Some(slab));
                }
                Phase::Next(k) => {
                    let rho2 = self.rho2.clone().unwrap();
                    let thr = &self.gamma().powi((k * self.consts.s) as i64) * &rho2;
                    if !cube.diameter().lt(&thr)? {
                        return Ok(Some(Slab::pass(d)));
                    }
                    if k >= self.opts.stages {
                        self.phase = Phase::Done;
                        continue;
                    }
                    let n_k = self.relative(state.round());
                    return self.begin_stage(state, k, n_k).map(Some);
                }
                Phase::Done => return Ok(None),
            }
        }
    }

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::to_value(self.report()).unwrap_or(serde_json::Value::Null)
    }
}
