//! Bob policies used to exercise Alice's strategies.

use num_bigint::{BigInt, RandBigInt};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapSequence;
use crate::error::{Error, Result};
use crate::game::{check_bob, Bob, GameState, ScriptedBob};
use crate::geometry::{cube_avoids_slab, Cube, Slab};
use crate::scalar::Scalar;
use crate::targets::TargetSequence;

/// Grid refinement: feasible centres are snapped to multiples of r′·2^−GRID_BITS.
const GRID_BITS: u32 = 12;
const REJECTION_TRIES: usize = 256;
const RADIUS_BITS: u32 = 24;

fn exact(s: &Scalar) -> Result<BigRational> {
    s.exact()
        .cloned()
        .ok_or_else(|| Error::Precondition("cube coordinates must be exact".into()))
}

/// Uniform rational in [lo, hi] on the grid h·ℤ, strictly inside when `open_lo`/`open_hi`.
fn grid_point(
    rng: &mut ChaCha8Rng,
    lo: &BigRational,
    hi: &BigRational,
    open_lo: bool,
    open_hi: bool,
    h: &BigRational,
) -> Option<BigRational> {
    let mut h = h.clone();
    for _ in 0..8 {
        let mut k0 = (lo / &h).ceil().to_integer();
        let mut k1 = (hi / &h).floor().to_integer();
        if open_lo && BigRational::from(k0.clone()) * &h == *lo {
            k0 += 1;
        }
        if open_hi && BigRational::from(k1.clone()) * &h == *hi {
            k1 -= 1;
        }
        if k0 <= k1 {
            let k = if k0 == k1 { k0 } else { rng.gen_bigint_range(&k0, &(k1 + BigInt::one())) };
            return Some(BigRational::from(k) * &h);
        }
        h /= BigRational::from(BigInt::from(1u32 << GRID_BITS));
    }
    None
}

/// A feasible range for one centre coordinate: [lo, hi] with optionally open ends.
#[derive(Clone, Debug)]
struct Range {
    lo: BigRational,
    hi: BigRational,
    open_lo: bool,
    open_hi: bool,
}

impl Range {
    fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    fn usable(&self) -> bool {
        self.lo < self.hi || (self.lo == self.hi && !self.open_lo && !self.open_hi)
    }
}

/// Sample a legal cube of radius `r2` inside `cube` avoiding `slab`, uniformly on a
/// fine grid, choosing the side of an axis-aligned slab with probability ∝ its measure.
pub fn sample_cube(rng: &mut ChaCha8Rng, cube: &Cube, slab: &Slab, r2: &BigRational) -> Result<Option<Cube>> {
    let r = exact(&cube.radius)?;
    if *r2 > r {
        return Ok(None);
    }
    let d = cube.dim();
    let mut ranges = Vec::with_capacity(d);
    for j in 0..d {
        let c = exact(&cube.center[j])?;
        ranges.push(Range { lo: &c - &r + r2, hi: &c + &r - r2, open_lo: false, open_hi: false });
    }
    let h = r2 / BigRational::from(BigInt::from(1u32 << GRID_BITS));
    let h = if h.is_zero() { BigRational::one() } else { h };
    let axis = slab.axis.filter(|_| !slab.is_pass());
    let draw = |rng: &mut ChaCha8Rng, ranges: &[Range]| -> Option<Vec<Scalar>> {
        ranges
            .iter()
            .map(|q| grid_point(rng, &q.lo, &q.hi, q.open_lo, q.open_hi, &h).map(Scalar::Exact))
            .collect()
    };
    if slab.is_pass() {
        return Ok(draw(rng, &ranges).map(|c| Cube { center: c, radius: Scalar::Exact(r2.clone()) }));
    }
    if let Some(j) = axis {
        let a = exact(&slab.normal[j])?;
        let z = exact(&slab.offset)? / &a;
        let w = exact(&slab.halfwidth)?;
        let base = ranges[j].clone();
        let left = Range { lo: base.lo.clone(), hi: (&z - &w - r2).min(base.hi.clone()), open_lo: false, open_hi: true };
        let right = Range { lo: (&z + &w + r2).max(base.lo.clone()), hi: base.hi.clone(), open_lo: true, open_hi: false };
        let sides: Vec<Range> = [left, right].into_iter().filter(|q| q.usable()).collect();
        if sides.is_empty() {
            return Ok(None);
        }
        let pick = if sides.len() == 1 {
            0
        } else {
            let wl = sides[0].width().to_f64().unwrap_or(0.0).max(0.0);
            let wr = sides[1].width().to_f64().unwrap_or(0.0).max(0.0);
            let total = wl + wr;
            if total > 0.0 && rng.gen::<f64>() * total >= wl { 1 } else { 0 }
        };
        let order = if pick == 0 { [0usize, 1] } else { [1, 0] };
        for &i in order.iter().take(sides.len()) {
            let mut rs = ranges.clone();
            rs[j] = sides[i].clone();
            if let Some(c) = draw(rng, &rs) {
                let cand = Cube { center: c, radius: Scalar::Exact(r2.clone()) };
                if cube_avoids_slab(&cand, slab)? {
                    return Ok(Some(cand));
                }
            }
        }
        return Ok(None);
    }
    for _ in 0..REJECTION_TRIES {
        if let Some(c) = draw(rng, &ranges) {
            let cand = Cube { center: c, radius: Scalar::Exact(r2.clone()) };
            if cube_avoids_slab(&cand, slab)? {
                return Ok(Some(cand));
            }
        }
    }
    Ok(None)
}

/// Check λ against the radius rule and against feasibility for every slab Alice may play.
fn check_lambda(gamma: &Scalar, lambda: &Scalar) -> Result<()> {
    if lambda.lt(gamma)? || lambda.ge(&Scalar::one())? {
        return Err(Error::Spec(format!("lambda {lambda} must lie in [gamma, 1)")));
    }
    // A slab of halfwidth ε ≤ γ|B|/2 leaves a side of width at least (1−γ)|B|/2, and
    // γ < 1/3 makes that wider than γ|B|, so the fallback radius γr always fits.
    let side = &(&Scalar::one() - gamma) / &Scalar::from(2);
    if !side.gt(gamma)? {
        return Err(Error::InvalidGamma);
    }
    Ok(())
}

/// Smallest m·2^−k ≥ x with m of about RADIUS_BITS bits. Short dyadic radii keep
/// every later coordinate dyadic, which keeps exact arithmetic cheap.
fn dyadic_up(x: &BigRational) -> BigRational {
    if x.numer().sign() != num_bigint::Sign::Plus {
        return x.clone();
    }
    let log2 = x.numer().bits() as i64 - x.denom().bits() as i64;
    let k = RADIUS_BITS as i64 - log2;
    let scale = |e: i64| {
        let p = BigInt::one() << e.unsigned_abs();
        if e >= 0 { BigRational::from(p) } else { BigRational::new(BigInt::one(), p) }
    };
    let m = (x * scale(k)).ceil();
    m * scale(-k)
}

/// Shrink by about λ; fall back to about γ, and finally to exactly γ.
fn radii(gamma: &Scalar, lambda: &Scalar, cube: &Cube) -> Result<Vec<BigRational>> {
    let r = exact(&cube.radius)?;
    let lr = &r * exact(lambda)?;
    let gr = &r * exact(gamma)?;
    Ok(vec![dyadic_up(&lr), dyadic_up(&gr), gr])
}

/// Bob drawing a random legal cube each round.
pub struct RandomBob {
    gamma: Scalar,
    lambda: Scalar,
    rng: ChaCha8Rng,
}

impl RandomBob {
    pub fn new(gamma: &Scalar, lambda: &Scalar, seed: u64) -> Result<RandomBob> {
        check_lambda(gamma, lambda)?;
        Ok(RandomBob { gamma: gamma.clone(), lambda: lambda.clone(), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Whether radius λr is feasible against every legal slab: λ ≤ (1−γ)/2 − ε/|B| with ε = γ|B|/2.
    pub fn always_feasible(&self) -> Result<bool> {
        let bound = &(&(&Scalar::one() - &self.gamma) / &Scalar::from(2)) - &(&self.gamma / &Scalar::from(2));
        Ok(self.lambda.le(&bound)?)
    }

    pub fn draw(&mut self, cube: &Cube, slab: &Slab) -> Result<Cube> {
        for r2 in radii(&self.gamma, &self.lambda, cube)? {
            if let Some(c) = sample_cube(&mut self.rng, cube, slab, &r2)? {
                return Ok(c);
            }
        }
        Err(Error::NoLegalMove("no cube of radius γr avoids the slab".into()))
    }
}

impl Bob for RandomBob {
    fn respond(&mut self, state: &GameState, slab: &Slab) -> Result<Option<Cube>> {
        self.draw(&state.current, slab).map(Some)
    }
}

/// Bob steering toward orbits that come close to their targets.
pub struct GreedyBob {
    inner: RandomBob,
    seq: MapSequence,
    targets: TargetSequence,
    horizon: usize,
    candidates: usize,
}

impl GreedyBob {
    pub fn new(
        gamma: &Scalar,
        lambda: &Scalar,
        seed: u64,
        seq: MapSequence,
        targets: TargetSequence,
        horizon: usize,
        candidates: usize,
    ) -> Result<GreedyBob> {
        Ok(GreedyBob { inner: RandomBob::new(gamma, lambda, seed)?, seq, targets, horizon, candidates: candidates.max(1) })
    }

    /// min over n ≤ horizon of |T_{1,n}(x₁) − g_n(x)₁|; an orbit through a branch
    /// boundary scores zero from that step on.
    pub fn score(&self, x: &[Scalar]) -> Result<f64> {
        let mut y = x[0].clone();
        let mut best = f64::INFINITY;
        for n in 1..=self.horizon {
            let Some(b) = self.seq.at(n).locate(&y)? else { return Ok(0.0) };
            y = b.apply(&y);
            let g = self.targets.first(n, x)?;
            best = best.min((&y - &g).abs().to_f64());
        }
        Ok(best)
    }
}

impl Bob for GreedyBob {
    fn respond(&mut self, state: &GameState, slab: &Slab) -> Result<Option<Cube>> {
        if self.horizon == 0 {
            return self.inner.respond(state, slab);
        }
        let mut best: Option<(f64, Cube)> = None;
        for _ in 0..self.candidates {
            let c = self.inner.draw(&state.current, slab)?;
            let sc = self.score(&c.center)?;
            if best.as_ref().is_none_or(|(b, _)| sc < *b) {
                best = Some((sc, c));
            }
        }
        Ok(best.map(|(_, c)| c))
    }
}

/// Decorator asserting every emitted cube is legal.
pub struct CheckedBob<B: Bob> {
    pub inner: B,
}

impl<B: Bob> Bob for CheckedBob<B> {
    fn respond(&mut self, state: &GameState, slab: &Slab) -> Result<Option<Cube>> {
        let out = self.inner.respond(state, slab)?;
        if let Some(c) = &out {
            let v = check_bob(&state.config.gamma, &state.current, slab, c)?;
            if !v.is_empty() {
                let names: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                return Err(Error::IllegalMove(format!("bob: {}", names.join(", "))));
            }
        }
        Ok(out)
    }
}

/// Policy description, e.g. {"kind":"random","lambda":"0.3","seed":42}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BobSpec {
    Random {
        lambda: Scalar,
        #[serde(default)]
        seed: u64,
    },
    Greedy {
        lambda: Scalar,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default = "default_candidates")]
        candidates: usize,
    },
    /// Fixed list of cubes.
    Scripted { cubes: Vec<Cube> },
    /// Bob's moves from a recorded trace file.
    Replay { trace: String },
}

fn default_horizon() -> usize {
    10
}

fn default_candidates() -> usize {
    16
}

impl BobSpec {
    /// Same policy with a different seed; scripted policies are unchanged.
    pub fn with_seed(&self, s: u64) -> BobSpec {
        let mut out = self.clone();
        match &mut out {
            BobSpec::Random { seed, .. } | BobSpec::Greedy { seed, .. } => *seed = s,
            _ => {}
        }
        out
    }

    pub fn build(
        &self,
        gamma: &Scalar,
        seq: &MapSequence,
        targets: &TargetSequence,
        base: Option<&std::path::Path>,
    ) -> Result<Box<dyn Bob>> {
        Ok(match self {
            BobSpec::Random { lambda, seed } => Box::new(RandomBob::new(gamma, lambda, *seed)?),
            BobSpec::Greedy { lambda, seed, horizon, candidates } => Box::new(GreedyBob::new(
                gamma,
                lambda,
                *seed,
                seq.clone(),
                targets.clone(),
                *horizon,
                *candidates,
            )?),
            BobSpec::Scripted { cubes } => Box::new(ScriptedBob::new(cubes.clone())),
            BobSpec::Replay { trace } => {
                let path = base.map_or_else(|| trace.into(), |b| b.join(trace));
                let text = std::fs::read_to_string(path)?;
                let t: crate::game::Trace = serde_json::from_str(&text)?;
                Box::new(ScriptedBob::new(t.rounds.into_iter().map(|r| r.bob).collect()))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_rounding_is_tight_and_upward() {
        let x = BigRational::new(BigInt::from(1), BigInt::from(5).pow(40));
        let y = dyadic_up(&x);
        assert!(y >= x);
        assert!((&y - &x) / &x < BigRational::new(BigInt::one(), BigInt::from(1u64 << 22)));
        assert_eq!(y.denom().magnitude().count_ones(), 1);
        let q = BigRational::new(BigInt::from(3), BigInt::from(8));
        assert_eq!(dyadic_up(&q), q);
    }
    use crate::dynamics::PiecewiseMap;
    use crate::game::{run, GameConfig, PassAlice};
    use crate::scalar::NumericMode;

    fn s(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    #[test]
    fn lambda_rules() {
        assert!(RandomBob::new(&s("0.25"), &s("0.2"), 1).is_err());
        assert!(RandomBob::new(&s("0.25"), &s("1"), 1).is_err());
        let b = RandomBob::new(&s("0.25"), &s("0.25"), 1).unwrap();
        assert!(b.always_feasible().unwrap());
        let b = RandomBob::new(&s("0.2"), &s("0.45"), 1).unwrap();
        assert!(!b.always_feasible().unwrap());
    }

    #[test]
    fn pass_slab_gives_subcube() {
        let mut b = RandomBob::new(&s("0.2"), &s("0.3"), 3).unwrap();
        let cube = Cube::unit(2);
        let c = b.draw(&cube, &Slab::pass(2)).unwrap();
        assert!(c.radius.ge(&s("0.15")).unwrap() && c.radius.lt(&s("0.1500001")).unwrap());
        assert!(check_bob(&s("0.2"), &cube, &Slab::pass(2), &c).unwrap().is_empty());
    }

    #[test]
    fn splitting_slab_is_avoided() {
        let g = s("0.25");
        let cube = Cube::unit(1);
        let slab = Slab::axis_aligned(1, 0, s("0.5"), s("0.125"));
        for seed in 0..50 {
            let mut b = RandomBob::new(&g, &s("0.3"), seed).unwrap();
            let c = b.draw(&cube, &slab).unwrap();
            assert!(check_bob(&g, &cube, &slab, &c).unwrap().is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn infeasible_lambda_falls_back_to_gamma() {
        let g = s("0.3");
        let cube = Cube::unit(1);
        let slab = Slab::axis_aligned(1, 0, s("0.5"), s("0.15"));
        let mut b = RandomBob::new(&g, &s("0.9"), 5).unwrap();
        let c = b.draw(&cube, &slab).unwrap();
        assert!(c.radius.ge(&s("0.15")).unwrap() && c.radius.lt(&s("0.1500001")).unwrap());
        assert!(check_bob(&g, &cube, &slab, &c).unwrap().is_empty());
    }

    #[test]
    fn oblique_slab_by_rejection() {
        let g = s("0.2");
        let cube = Cube::unit(2);
        let slab = Slab::new(vec![s("1"), s("1")], s("1"), s("0.1")).unwrap();
        let mut b = RandomBob::new(&g, &s("0.25"), 9).unwrap();
        let c = b.draw(&cube, &slab).unwrap();
        assert!(check_bob(&g, &cube, &slab, &c).unwrap().is_empty());
    }

    #[test]
    fn greedy_chases_small_orbits() {
        let seq = MapSequence::single(PiecewiseMap::times(2, NumericMode::Rational).unwrap()).unwrap();
        let zero = TargetSequence::constant(vec![s("0")]);
        let g = s("0.25");
        let greedy = GreedyBob::new(&g, &s("0.25"), 1, seq.clone(), zero.clone(), 10, 32).unwrap();
        let cfg = GameConfig::new(g.clone(), 1, NumericMode::Rational, 6).unwrap();
        let mut bob = CheckedBob { inner: greedy };
        let t = run(&cfg, &mut PassAlice, &mut bob, Cube::unit(1)).unwrap();
        assert!(t.abort.is_none());
        let best = GreedyBob::new(&g, &s("0.25"), 1, seq, zero, 10, 1).unwrap().score(&t.final_center).unwrap();
        assert!(best < 0.05, "greedy score {best}");
    }

    #[test]
    fn horizon_zero_is_random() {
        let seq = MapSequence::single(PiecewiseMap::times(2, NumericMode::Rational).unwrap()).unwrap();
        let t = TargetSequence::identity();
        let g = s("0.25");
        let cfg = GameConfig::new(g.clone(), 1, NumericMode::Rational, 8).unwrap();
        let mut a = GreedyBob::new(&g, &s("0.25"), 4, seq, t, 0, 16).unwrap();
        let mut b = RandomBob::new(&g, &s("0.25"), 4).unwrap();
        let ta = run(&cfg, &mut PassAlice, &mut a, Cube::unit(1)).unwrap();
        let tb = run(&cfg, &mut PassAlice, &mut b, Cube::unit(1)).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn spec_json() {
        let b: BobSpec = serde_json::from_str(r#"{"kind":"random","lambda":"0.3","seed":42}"#).unwrap();
        assert_eq!(b, BobSpec::Random { lambda: s("0.3"), seed: 42 });
        let g: BobSpec = serde_json::from_str(r#"{"kind":"greedy","lambda":"0.25"}"#).unwrap();
        assert!(matches!(g, BobSpec::Greedy { horizon: 10, candidates: 16, .. }));
    }
}
