use num_rational::BigRational;
use serde::Serialize;

use crate::dynamics::{Chain, MapSequence};
use crate::error::{Error, Result};
use crate::geometry::Cube;
use crate::scalar::Scalar;
use crate::targets::TargetSequence;

/// Where, along the first axis, the cube can still meet the bad set
/// { x : ‖T_{1,n}(x) − g_n(x)‖ ≤ δ } inside one cylinder.
#[derive(Clone, Debug, Serialize)]
pub struct BadInterval {
    pub n: usize,
    /// Closed interval with exact ends; None when the cube is already safe.
    pub interval: Option<(Scalar, Scalar)>,
    /// (2δ + C₁|B|) / inf |T′_{1,n}| over the cube inside the cylinder.
    pub bound: Scalar,
}

impl BadInterval {
    pub fn length(&self) -> Scalar {
        self.interval.as_ref().map_or_else(Scalar::zero, |(a, b)| b - a)
    }
}

/// Widen to exact rational ends, outward.
fn outer(a: &Scalar, b: &Scalar) -> Result<(Scalar, Scalar)> {
    let lo: BigRational = a
        .bounds()
        .ok_or_else(|| Error::Invariant("unbounded interval end".into()))?
        .0;
    let hi: BigRational = b
        .bounds()
        .ok_or_else(|| Error::Invariant("unbounded interval end".into()))?
        .1;
    Ok((Scalar::Exact(lo), Scalar::Exact(hi)))
}

/// Bad interval for the cylinder carried by `chain` (start time 1, n = its depth).
///
/// For x in the cube and the cylinder, |g_n(x)₁ − g_n(c)₁| ≤ C₁ r, so every bad x
/// has T_{1,n}(x₁) within δ + C₁ r of g_n(c)₁. Pulling that window back through the
/// cylinder's inverse branch gives J, and the mean value theorem bounds its length.
pub fn bad_interval(chain: &Chain, targets: &TargetSequence, cube: &Cube, delta: &Scalar) -> Result<BadInterval> {
    let n = chain.depth();
    let (x0, x1) = (cube.lo(0), cube.hi(0));
    let reach = &targets.lipschitz * &cube.radius;
    let two = Scalar::from(2);
    let Some((y0, y1)) = chain.push(&x0, &x1)? else {
        return Ok(BadInterval { n, interval: None, bound: Scalar::zero() });
    };
    let (c0, c1) = chain.interval()?;
    let lo = if x0.le(&c0)? { c0 } else { x0.clone() };
    let hi = if x1.ge(&c1)? { c1 } else { x1.clone() };
    let (inf, _) = chain.derivative_range(&lo, &hi);
    let bound = &(&(&two * delta) + &(&two * &reach)) / &inf;

    let t = targets.first(n, &cube.center)?;
    let w = delta + &reach;
    let (t0, t1) = (&t - &w, &t + &w);
    let a = if t0.le(&y0)? { y0.clone() } else { t0 };
    let b = if t1.ge(&y1)? { y1.clone() } else { t1 };
    if !a.le(&b)? {
        return Ok(BadInterval { n, interval: None, bound });
    }
    let (p0, p1) = chain.inverse.image(&a, &b)?;
    let (mut p0, mut p1) = outer(&p0, &p1)?;
    // Outward rounding may poke out of the cube; the part outside is irrelevant.
    if p0.lt(&lo)? {
        p0 = lo.clone();
    }
    if p1.gt(&hi)? {
        p1 = hi.clone();
    }
    let interval = if p0.le(&p1)? { Some(outer(&p0, &p1)?) } else { None };
    Ok(BadInterval { n, interval, bound })
}

/// Convenience wrapper: descends to depth n first and insists that the cube's
/// projection lies in the closure of a single depth-n cylinder.
pub fn bad_interval_at(
    seq: &MapSequence,
    targets: &TargetSequence,
    n: usize,
    cube: &Cube,
    delta: &Scalar,
) -> Result<BadInterval> {
    let path = seq.descend(1, &cube.lo(0), &cube.hi(0), n)?;
    if path.len() <= n {
        return Err(Error::Precondition(format!(
            "cube is not inside a single depth-{n} cylinder"
        )));
    }
    bad_interval(&path[n], targets, cube, delta)
}
