//! The γ-hyperplane absolute game: move legality, alternation and traces.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cube_avoids_slab, cube_inside, Cube, Slab};
use crate::scalar::{NumericMode, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub gamma: Scalar,
    pub dim: usize,
    pub mode: NumericMode,
    pub max_rounds: usize,
}

impl GameConfig {
    pub fn new(gamma: Scalar, dim: usize, mode: NumericMode, max_rounds: usize) -> Result<GameConfig> {
        check_gamma(&gamma)?;
        if dim == 0 {
            return Err(Error::Spec("dimension must be positive".into()));
        }
        Ok(GameConfig { gamma, dim, mode, max_rounds })
    }
}

/// 0 < γ < 1/3.
pub fn check_gamma(gamma: &Scalar) -> Result<()> {
    let ok = gamma.gt(&Scalar::zero())? && gamma.lt(&Scalar::ratio(1, 3))?;
    if ok { Ok(()) } else { Err(Error::InvalidGamma) }
}

/// A legality predicate that a move failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// Alice: halfwidth exceeds γ|B|/2.
    Halfwidth,
    /// Alice: the normal vector is zero.
    ZeroNormal,
    Dimension,
    /// Bob: the new cube leaves the old one.
    Inside,
    /// Bob: the new cube meets Alice's slab.
    AvoidsSlab,
    /// Bob: diameter below γ times the previous one.
    Radius,
    /// Bob: centre outside [0,1]^d.
    CenterInUnit,
    /// A move arrived out of turn.
    Turn,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Violation::Halfwidth => "halfwidth",
            Violation::ZeroNormal => "zero_normal",
            Violation::Dimension => "dimension",
            Violation::Inside => "inside",
            Violation::AvoidsSlab => "avoids_slab",
            Violation::Radius => "radius",
            Violation::CenterInUnit => "center_in_unit",
            Violation::Turn => "turn",
        };
        f.write_str(name)
    }
}

fn join(vs: &[Violation]) -> String {
    vs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Predicates an Alice move violates against the current cube.
pub fn check_alice(gamma: &Scalar, current: &Cube, slab: &Slab) -> Result<Vec<Violation>> {
    let mut out = vec![];
    if slab.dim() != current.dim() {
        out.push(Violation::Dimension);
    }
    if slab.normal.iter().all(Scalar::is_zero) {
        out.push(Violation::ZeroNormal);
    }
    // ε ≤ γ|B|/2 = γ r.
    if slab.halfwidth.gt(&(gamma * &current.radius))? || slab.halfwidth.lt(&Scalar::zero())? {
        out.push(Violation::Halfwidth);
    }
    Ok(out)
}

/// Predicates a Bob move violates.
pub fn check_bob(gamma: &Scalar, current: &Cube, slab: &Slab, next: &Cube) -> Result<Vec<Violation>> {
    if next.dim() != current.dim() || slab.dim() != current.dim() {
        return Ok(vec![Violation::Dimension]);
    }
    let mut out = vec![];
    if !cube_inside(next, current)? {
        out.push(Violation::Inside);
    }
    if !slab.normal.iter().all(Scalar::is_zero) && !cube_avoids_slab(next, slab)? {
        out.push(Violation::AvoidsSlab);
    }
    if next.radius.lt(&(gamma * &current.radius))? {
        out.push(Violation::Radius);
    }
    if !next.center_in_unit()? {
        out.push(Violation::CenterInUnit);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub alice: Slab,
    pub bob: Cube,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Finished,
}

/// Live game: the current cube B_i and the committed history.
#[derive(Clone, Debug)]
pub struct GameState {
    pub config: GameConfig,
    pub initial: Cube,
    pub current: Cube,
    pub history: Vec<Round>,
    pub pending: Option<Slab>,
    pub status: Status,
}

impl GameState {
    pub fn new(config: GameConfig, initial: Cube) -> Result<GameState> {
        if initial.dim() != config.dim {
            return Err(Error::Dimension { expected: config.dim, got: initial.dim() });
        }
        if !initial.center_in_unit()? {
            return Err(Error::InvalidCube("initial centre must lie in [0,1]^d".into()));
        }
        Ok(GameState {
            config,
            current: initial.clone(),
            initial,
            history: vec![],
            pending: None,
            status: Status::Running,
        })
    }

    /// Index i of the current cube B_i (the initial cube is B_1).
    pub fn round(&self) -> usize {
        self.history.len() + 1
    }

    pub fn alice_move(&mut self, slab: Slab) -> Result<()> {
        if self.pending.is_some() || self.status != Status::Running {
            return Err(Error::IllegalMove(format!("alice: {}", Violation::Turn)));
        }
        let v = check_alice(&self.config.gamma, &self.current, &slab)?;
        if !v.is_empty() {
            return Err(Error::IllegalMove(format!("alice: {}", join(&v))));
        }
        self.pending = Some(slab);
        Ok(())
    }

    pub fn bob_move(&mut self, cube: Cube) -> Result<()> {
        let Some(slab) = self.pending.take() else {
            return Err(Error::IllegalMove(format!("bob: {}", Violation::Turn)));
        };
        let v = check_bob(&self.config.gamma, &self.current, &slab, &cube)?;
        if !v.is_empty() {
            self.pending = Some(slab);
            return Err(Error::IllegalMove(format!("bob: {}", join(&v))));
        }
        self.current = cube.clone();
        self.history.push(Round { alice: slab, bob: cube });
        if self.history.len() >= self.config.max_rounds {
            self.status = Status::Finished;
        }
        Ok(())
    }
}

/// Alice's side of the protocol. Returning None ends the game early.
pub trait Alice {
    fn play(&mut self, state: &GameState) -> Result<Option<Slab>>;
    fn diagnostics(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Bob's side of the protocol. Returning None ends the game early.
pub trait Bob {
    fn respond(&mut self, state: &GameState, slab: &Slab) -> Result<Option<Cube>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortKind {
    IllegalAlice,
    IllegalBob,
    /// Ball arithmetic could not decide a comparison.
    Precision,
    Alice,
    Bob,
}

/// Why a run stopped before its round budget.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub kind: AbortKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice: Option<Slab>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob: Option<Cube>,
}

/// Complete record of a game, replayable move by move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub gamma: Scalar,
    pub mode: NumericMode,
    pub dim: usize,
    pub max_rounds: usize,
    pub initial: Cube,
    pub rounds: Vec<Round>,
    pub final_center: Vec<Scalar>,
    pub final_radius: Scalar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<Abort>,
    #[serde(default)]
    pub diagnostics: serde_json::Value,
}

impl Trace {
    pub fn config(&self) -> Result<GameConfig> {
        GameConfig::new(self.gamma.clone(), self.dim, self.mode, self.max_rounds)
    }

    /// Radii ρ_1, ρ_2, ... of the cubes B_1, B_2, ...
    pub fn radii(&self) -> Vec<Scalar> {
        std::iter::once(self.initial.radius.clone())
            .chain(self.rounds.iter().map(|r| r.bob.radius.clone()))
            .collect()
    }

    /// The cube B_i, 1-based.
    pub fn cube(&self, i: usize) -> &Cube {
        if i <= 1 { &self.initial } else { &self.rounds[i - 2].bob }
    }

    pub fn final_cube(&self) -> &Cube {
        self.rounds.last().map_or(&self.initial, |r| &r.bob)
    }

    /// Re-check every recorded move.
    pub fn check_legality(&self) -> Result<()> {
        let mut state = GameState::new(self.config()?, self.initial.clone())?;
        for (i, r) in self.rounds.iter().enumerate() {
            let mut slab = r.alice.clone();
            slab.refresh_axis();
            state
                .alice_move(slab)
                .map_err(|e| Error::IllegalMove(format!("round {}: {e}", i + 1)))?;
            state
                .bob_move(r.bob.clone())
                .map_err(|e| Error::IllegalMove(format!("round {}: {e}", i + 1)))?;
        }
        Ok(())
    }
}

fn abort_kind(e: &Error, illegal: AbortKind, other: AbortKind) -> AbortKind {
    match e {
        Error::IllegalMove(_) => illegal,
        Error::Indeterminate(_) => AbortKind::Precision,
        _ => other,
    }
}

/// Alternate the two players from `initial` until the round budget, an early
/// stop, or an error. Errors are recorded in the trace, never lost.
pub fn run(config: &GameConfig, alice: &mut dyn Alice, bob: &mut dyn Bob, initial: Cube) -> Result<Trace> {
    let mut state = GameState::new(config.clone(), initial)?;
    let mut abort = None;
    while state.status == Status::Running && state.history.len() < config.max_rounds {
        let slab = match alice.play(&state) {
            Ok(Some(s)) => s,
            Ok(None) => break,
            Err(e) => {
                let kind = abort_kind(&e, AbortKind::IllegalAlice, AbortKind::Alice);
                abort = Some(Abort { kind, message: e.to_string(), alice: None, bob: None });
                break;
            }
        };
        if let Err(e) = state.alice_move(slab.clone()) {
            let kind = abort_kind(&e, AbortKind::IllegalAlice, AbortKind::Alice);
            abort = Some(Abort { kind, message: e.to_string(), alice: Some(slab), bob: None });
            break;
        }
        let cube = match bob.respond(&state, &slab) {
            Ok(Some(c)) => c,
            Ok(None) => break,
            Err(e) => {
                let kind = abort_kind(&e, AbortKind::IllegalBob, AbortKind::Bob);
                abort = Some(Abort { kind, message: e.to_string(), alice: Some(slab), bob: None });
                break;
            }
        };
        if let Err(e) = state.bob_move(cube.clone()) {
            let kind = abort_kind(&e, AbortKind::IllegalBob, AbortKind::Bob);
            abort = Some(Abort { kind, message: e.to_string(), alice: Some(slab), bob: Some(cube) });
            break;
        }
    }
    let fin = state.current.clone();
    Ok(Trace {
        gamma: config.gamma.clone(),
        mode: config.mode,
        dim: config.dim,
        max_rounds: config.max_rounds,
        initial: state.initial,
        rounds: state.history,
        final_center: fin.center,
        final_radius: fin.radius,
        abort,
        diagnostics: alice.diagnostics(),
    })
}

/// Alice that replays recorded slabs.
pub struct ScriptedAlice {
    slabs: std::vec::IntoIter<Slab>,
}

impl ScriptedAlice {
    pub fn new(slabs: Vec<Slab>) -> ScriptedAlice {
        ScriptedAlice { slabs: slabs.into_iter() }
    }
}

impl Alice for ScriptedAlice {
    fn play(&mut self, _: &GameState) -> Result<Option<Slab>> {
        Ok(self.slabs.next().map(|mut s| {
            s.refresh_axis();
            s
        }))
    }
}

/// Alice who never removes anything.
pub struct PassAlice;

impl Alice for PassAlice {
    fn play(&mut self, state: &GameState) -> Result<Option<Slab>> {
        Ok(Some(Slab::pass(state.config.dim)))
    }
}

/// Bob that replays recorded cubes.
pub struct ScriptedBob {
    cubes: std::vec::IntoIter<Cube>,
}

impl ScriptedBob {
    pub fn new(cubes: Vec<Cube>) -> ScriptedBob {
        ScriptedBob { cubes: cubes.into_iter() }
    }
}

impl Bob for ScriptedBob {
    fn respond(&mut self, _: &GameState, _: &Slab) -> Result<Option<Cube>> {
        Ok(self.cubes.next())
    }
}

/// Replay a trace through the legality checker; the result equals the input
/// for every trace produced by [`run`].
pub fn replay(trace: &Trace) -> Result<Trace> {
    let mut alice = ScriptedAlice::new(trace.rounds.iter().map(|r| r.alice.clone()).collect());
    let mut bob = ScriptedBob::new(trace.rounds.iter().map(|r| r.bob.clone()).collect());
    let mut out = run(&trace.config()?, &mut alice, &mut bob, trace.initial.clone())?;
    if let Some(a) = &trace.abort {
        if out.abort.is_none() {
            out.abort = Some(a.clone());
        }
    }
    out.diagnostics = trace.diagnostics.clone();
    Ok(out)
}
