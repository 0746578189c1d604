use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Cube, Interval, Slab};
use crate::scalar::Scalar;

/// ε(γ) = 1 − γ/(4 + 6γ): the fraction of hyperplanes a single blockade may leave near the cube.
pub fn epsilon(gamma: &Scalar) -> Scalar {
    let six = Scalar::from(6);
    let four = Scalar::from(4);
    &Scalar::one() - &(gamma / &(&four + &(&six * gamma)))
}

/// ⌊log_{1/ε} count⌋ + 1: the smallest s with (1/ε)^s > count. Zero for an empty set.
pub fn rounds_for(gamma: &Scalar, count: usize) -> Result<usize> {
    if count == 0 {
        return Ok(0);
    }
    let inv = epsilon(gamma).recip();
    let target = Scalar::from(count as i64);
    // Floating-point guess, then settle it exactly.
    let guess = ((count as f64).ln() / inv.to_f64().ln()).floor();
    let mut s = if guess.is_finite() && guess >= 0.0 { guess as usize + 1 } else { 1 };
    while s > 1 && inv.powi(s as i64 - 1).gt(&target)? {
        s -= 1;
    }
    while !inv.powi(s as i64).gt(&target)? {
        s += 1;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockadeCase {
    /// No hyperplanes to keep away from.
    Empty,
    /// At least half of them are already farther than γ|B|/2 from the cube.
    Far,
    /// A slab centred on the densest short subinterval.
    Densest,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockadePlan {
    pub axis: usize,
    pub case: BlockadeCase,
    pub slab: Slab,
    pub densest: Option<Interval>,
    /// Points within γ|B|/4 of the slab centre; each ends up more than γ|B|/4 from the next cube.
    pub covered: usize,
    pub total: usize,
}

/// Alice's answer to the hyperplanes x_axis = y_i, i.e. one round of blockade.
///
/// If at least ⌈N/2⌉ of them are more than γ|B|/2 away from the cube Alice passes.
/// Otherwise [a − γ|B|/2, b + γ|B|/2] is cut into ⌈2(1+γ)/γ⌉ equal pieces, the
/// piece holding the most points (lowest index on ties) is chosen and the slab
/// of halfwidth γ|B|/2 is centred on it.
pub fn blockade(cube: &Cube, axis: usize, gamma: &Scalar, points: &[Scalar]) -> Result<BlockadePlan> {
    let d = cube.dim();
    if axis >= d {
        return Err(Error::Dimension { expected: d, got: axis + 1 });
    }
    let total = points.len();
    if total == 0 {
        return Ok(BlockadePlan { axis, case: BlockadeCase::Empty, slab: Slab::pass(d), densest: None, covered: 0, total });
    }
    let reach = gamma * &cube.radius;
    let wlo = &cube.lo(axis) - &reach;
    let whi = &cube.hi(axis) + &reach;
    let mut far = 0usize;
    for y in points {
        if y.lt(&wlo)? || y.gt(&whi)? {
            far += 1;
        }
    }
    if far >= total.div_ceil(2) {
        return Ok(BlockadePlan { axis, case: BlockadeCase::Far, slab: Slab::pass(d), densest: None, covered: far, total });
    }
    let pieces = piece_count(gamma)?;
    let width = &(&whi - &wlo) / &Scalar::from(pieces as i64);
    let mut counts = vec![0usize; pieces];
    for y in points {
        if y.lt(&wlo)? || y.gt(&whi)? {
            continue;
        }
        let t = &(y - &wlo) / &width;
        let k = t.floor()?;
        let idx = k.to_usize().unwrap_or(pieces).min(pieces);
        if idx < pieces {
            counts[idx] += 1;
        }
        // A point on a shared edge belongs to both closed pieces.
        if idx > 0 && t == Scalar::from(k) {
            counts[idx - 1] += 1;
        }
    }
    let (best, &covered) = counts
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
        .unwrap();
    let lo = &wlo + &(&width * &Scalar::from(best as i64));
    let hi = &lo + &width;
    let piece = Interval::closed(lo, hi)?;
    let slab = Slab::axis_aligned(d, axis, piece.midpoint(), reach);
    Ok(BlockadePlan { axis, case: BlockadeCase::Densest, slab, densest: Some(piece), covered, total })
}

/// ⌈2(1+γ)/γ⌉ pieces, each of length at most γ|B|/2.
fn piece_count(gamma: &Scalar) -> Result<usize> {
    let q = &(&Scalar::from(2) * &(&Scalar::one() + gamma)) / gamma;
    let f = q.floor()?;
    let c = if q == Scalar::from(f.clone()) { f } else { f + BigInt::one() };
    c.to_usize().ok_or_else(|| Error::Precondition("gamma too small".into()))
}

/// Keep the next cube away from the single hyperplane x_axis = y.
pub fn avoid_point(cube: &Cube, axis: usize, gamma: &Scalar, y: &Scalar) -> Result<Slab> {
    Ok(blockade(cube, axis, gamma, std::slice::from_ref(y))?.slab)
}

/// Stateful multi-round plan that steers the cube's `axis` projection off a set
/// of closed intervals, one blockade per round on the midpoints of those still met.
#[derive(Clone, Debug)]
pub struct AvoidPlan {
    pub axis: usize,
    pub intervals: Vec<(Scalar, Scalar)>,
    /// Rounds guaranteed to suffice, ⌊log_{1/ε} N⌋ + 1.
    pub budget: usize,
    pub rounds: usize,
    pub history: Vec<BlockadePlan>,
}

impl AvoidPlan {
    /// With `checked`, every interval must be no longer than γ^budget |B| / 2.
    pub fn new(cube: &Cube, axis: usize, gamma: &Scalar, intervals: Vec<(Scalar, Scalar)>, checked: bool) -> Result<AvoidPlan> {
        let budget = rounds_for(gamma, intervals.len())?;
        if checked && !intervals.is_empty() {
            let limit = &(&gamma.powi(budget as i64) * &cube.diameter()) / &Scalar::from(2);
            for (a, b) in &intervals {
                if (b - a).gt(&limit)? {
                    return Err(Error::Precondition(format!(
                        "interval of length {} exceeds γ^{budget}|B|/2 = {}",
                        (b - a).to_f64(),
                        limit.to_f64()
                    )));
                }
            }
        }
        Ok(AvoidPlan { axis, intervals, budget, rounds: 0, history: vec![] })
    }

    /// Intervals still meeting the cube's projection.
    pub fn pending(&self, cube: &Cube) -> Result<Vec<usize>> {
        let (lo, hi) = (cube.lo(self.axis), cube.hi(self.axis));
        let mut out = vec![];
        for (i, (a, b)) in self.intervals.iter().enumerate() {
            if a.le(&hi)? && b.ge(&lo)? {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn step(&mut self, cube: &Cube, gamma: &Scalar) -> Result<Slab> {
        let mids: Vec<Scalar> = self
            .pending(cube)?
            .into_iter()
            .map(|i| {
                let (a, b) = &self.intervals[i];
                &(a + b) / &Scalar::from(2)
            })
            .collect();
        let plan = blockade(cube, self.axis, gamma, &mids)?;
        let slab = plan.slab.clone();
        self.history.push(plan);
        self.rounds += 1;
        Ok(slab)
    }
}
