//! Intervals, max-norm cubes and hyperplane slabs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Interval on the line with independently open or closed ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Scalar,
    pub hi: Scalar,
    pub closed_lo: bool,
    pub closed_hi: bool,
}

impl Interval {
    pub fn new(lo: Scalar, hi: Scalar, closed_lo: bool, closed_hi: bool) -> Result<Interval> {
        let ord = lo.try_cmp(&hi);
        match ord {
            Ok(std::cmp::Ordering::Greater) => {
                Err(Error::InvalidInterval(format!("lo {lo} exceeds hi {hi}")))
            }
            Ok(std::cmp::Ordering::Equal) if !(closed_lo && closed_hi) => {
                Err(Error::InvalidInterval("degenerate interval must be closed".into()))
            }
            _ => Ok(Interval { lo, hi, closed_lo, closed_hi }),
        }
    }

    pub fn closed(lo: Scalar, hi: Scalar) -> Result<Interval> {
        Interval::new(lo, hi, true, true)
    }

    pub fn open(lo: Scalar, hi: Scalar) -> Result<Interval> {
        Interval::new(lo, hi, false, false)
    }

    pub fn unit_open() -> Interval {
        Interval { lo: Scalar::zero(), hi: Scalar::one(), closed_lo: false, closed_hi: false }
    }

    pub fn length(&self) -> Scalar {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Scalar {
        &(&self.lo + &self.hi) / &Scalar::from(2)
    }

    pub fn contains(&self, x: &Scalar) -> Result<bool> {
        let above = if self.closed_lo { x.ge(&self.lo)? } else { x.gt(&self.lo)? };
        if !above {
            return Ok(false);
        }
        Ok(if self.closed_hi { x.le(&self.hi)? } else { x.lt(&self.hi)? })
    }

    /// Whether the two intervals share a point.
    pub fn meets(&self, o: &Interval) -> Result<bool> {
        // Disjoint iff one ends before the other starts.
        let before = |a: &Interval, b: &Interval| -> Result<bool> {
            if a.closed_hi && b.closed_lo {
                a.hi.lt(&b.lo).map_err(Error::from)
            } else {
                a.hi.le(&b.lo).map_err(Error::from)
            }
        };
        Ok(!before(self, o)? && !before(o, self)?)
    }

    /// Intersection, or None when empty.
    pub fn intersect(&self, o: &Interval) -> Result<Option<Interval>> {
        if !self.meets(o)? {
            return Ok(None);
        }
        let (lo, closed_lo) = match self.lo.try_cmp(&o.lo)? {
            std::cmp::Ordering::Greater => (self.lo.clone(), self.closed_lo),
            std::cmp::Ordering::Less => (o.lo.clone(), o.closed_lo),
            std::cmp::Ordering::Equal => (self.lo.clone(), self.closed_lo && o.closed_lo),
        };
        let (hi, closed_hi) = match self.hi.try_cmp(&o.hi)? {
            std::cmp::Ordering::Less => (self.hi.clone(), self.closed_hi),
            std::cmp::Ordering::Greater => (o.hi.clone(), o.closed_hi),
            std::cmp::Ordering::Equal => (self.hi.clone(), self.closed_hi && o.closed_hi),
        };
        Interval::new(lo, hi, closed_lo, closed_hi).map(Some)
    }
}

/// Closed max-norm ball: the product of [c_i - r, c_i + r].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<Scalar>,
    pub radius: Scalar,
}

impl Cube {
    pub fn new(center: Vec<Scalar>, radius: Scalar) -> Result<Cube> {
        if center.is_empty() {
            return Err(Error::InvalidCube("dimension must be positive".into()));
        }
        if !radius.gt(&Scalar::zero())? {
            return Err(Error::InvalidCube(format!("radius {radius} must be positive")));
        }
        let c = Cube { center, radius };
        if !c.meets_unit()? {
            return Err(Error::InvalidCube("cube misses the unit cube".into()));
        }
        Ok(c)
    }

    /// [0,1]^d.
    pub fn unit(d: usize) -> Cube {
        Cube { center: vec![Scalar::ratio(1, 2); d], radius: Scalar::ratio(1, 2) }
    }

    /// 1-D cube [lo, hi].
    pub fn from_interval(lo: &Scalar, hi: &Scalar) -> Result<Cube> {
        let two = Scalar::from(2);
        Cube::new(vec![&(lo + hi) / &two], &(hi - lo) / &two)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn diameter(&self) -> Scalar {
        &self.radius * &Scalar::from(2)
    }

    pub fn lo(&self, j: usize) -> Scalar {
        &self.center[j] - &self.radius
    }

    pub fn hi(&self, j: usize) -> Scalar {
        &self.center[j] + &self.radius
    }

    /// Projection to coordinate j.
    pub fn interval(&self, j: usize) -> Interval {
        Interval { lo: self.lo(j), hi: self.hi(j), closed_lo: true, closed_hi: true }
    }

    pub fn meets_unit(&self) -> Result<bool> {
        for j in 0..self.dim() {
            if self.hi(j).lt(&Scalar::zero())? || self.lo(j).gt(&Scalar::one())? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn center_in_unit(&self) -> Result<bool> {
        for c in &self.center {
            if c.lt(&Scalar::zero())? || c.gt(&Scalar::one())? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn contains_point(&self, x: &[Scalar]) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        for (j, xj) in x.iter().enumerate() {
            if !self.interval(j).contains(xj)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Closed ε-neighbourhood of the hyperplane {x : <normal, x> = offset}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slab {
    pub normal: Vec<Scalar>,
    pub offset: Scalar,
    pub halfwidth: Scalar,
    /// Set when the normal is exactly a coordinate vector.
    #[serde(skip)]
    pub axis: Option<usize>,
}

impl Slab {
    pub fn new(normal: Vec<Scalar>, offset: Scalar, halfwidth: Scalar) -> Result<Slab> {
        if normal.iter().all(|n| n.is_zero()) {
            return Err(Error::ZeroNormal);
        }
        if halfwidth.lt(&Scalar::zero())? {
            return Err(Error::IllegalMove(format!("negative halfwidth {halfwidth}")));
        }
        let axis = detect_axis(&normal);
        Ok(Slab { normal, offset, halfwidth, axis })
    }

    /// The slab {x : |x_j - z| <= halfwidth}.
    pub fn axis_aligned(d: usize, j: usize, z: Scalar, halfwidth: Scalar) -> Slab {
        let mut normal = vec![Scalar::zero(); d];
        normal[j] = Scalar::one();
        Slab { normal, offset: z, halfwidth, axis: Some(j) }
    }

    /// A zero-width slab on a hyperplane outside [0,1]^d; removes nothing.
    pub fn pass(d: usize) -> Slab {
        Slab::axis_aligned(d, 0, Scalar::from(-1), Scalar::zero())
    }

    pub fn is_pass(&self) -> bool {
        self.halfwidth.is_zero()
            && matches!(self.axis, Some(_))
            && (self.offset.lt(&Scalar::zero()).unwrap_or(false)
                || self.offset.gt(&Scalar::one()).unwrap_or(false))
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Restore the axis flag after deserialising.
    pub fn refresh_axis(&mut self) {
        self.axis = detect_axis(&self.normal);
    }

    fn l1_norm(&self) -> Scalar {
        self.normal.iter().fold(Scalar::zero(), |acc, n| &acc + &n.abs())
    }

    /// Range of <normal, x> - offset over the cube.
    fn functional_range(&self, c: &Cube) -> (Scalar, Scalar) {
        let at_center = self
            .normal
            .iter()
            .zip(&c.center)
            .fold(-&self.offset, |acc, (n, x)| &acc + &(n * x));
        let spread = &self.l1_norm() * &c.radius;
        (&at_center - &spread, &at_center + &spread)
    }
}

fn detect_axis(normal: &[Scalar]) -> Option<usize> {
    let ones: Vec<usize> = normal
        .iter()
        .enumerate()
        .filter(|(_, n)| **n == Scalar::one())
        .map(|(j, _)| j)
        .collect();
    let zeros = normal.iter().filter(|n| n.is_zero()).count();
    (ones.len() == 1 && zeros + 1 == normal.len()).then(|| ones[0])
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Max-norm distance from the cube to the slab's core hyperplane.
pub fn slab_distance(c: &Cube, s: &Slab) -> Result<Scalar> {
    if s.normal.iter().all(|n| n.is_zero()) {
        return Err(Error::ZeroNormal);
    }
    check_dim(c.dim(), s.dim())?;
    let (lo, hi) = s.functional_range(c);
    let gap = lo.max(&-&hi).max(&Scalar::zero());
    Ok(&gap / &s.l1_norm())
}

/// True iff the cube misses the closed slab.
pub fn cube_avoids_slab(c: &Cube, s: &Slab) -> Result<bool> {
    if s.normal.iter().all(|n| n.is_zero()) {
        return Err(Error::ZeroNormal);
    }
    check_dim(c.dim(), s.dim())?;
    let (lo, hi) = s.functional_range(c);
    let band = &s.halfwidth * &s.l1_norm();
    Ok(lo.gt(&band)? || hi.lt(&-&band)?)
}

/// Componentwise containment of closed cubes.
pub fn cube_inside(inner: &Cube, outer: &Cube) -> Result<bool> {
    check_dim(outer.dim(), inner.dim())?;
    for j in 0..inner.dim() {
        if inner.lo(j).lt(&outer.lo(j))? || inner.hi(j).gt(&outer.hi(j))? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    fn seg(lo: &str, hi: &str) -> Cube {
        Cube::from_interval(&s(lo), &s(hi)).unwrap()
    }

    #[test]
    fn distance_one_dimensional() {
        let slab = Slab::axis_aligned(1, 0, s("0.2"), Scalar::zero());
        assert_eq!(slab_distance(&seg("0.3", "0.5"), &slab).unwrap(), s("0.1"));
    }

    #[test]
    fn distance_axis_aligned_plane() {
        let c = Cube::new(vec![s("0.5"), s("0.5")], s("0.1")).unwrap();
        let slab = Slab::new(vec![s("1"), s("0")], s("0.9"), Scalar::zero()).unwrap();
        assert_eq!(slab.axis, Some(0));
        assert_eq!(slab_distance(&c, &slab).unwrap(), s("0.3"));
    }

    #[test]
    fn distance_diagonal_plane() {
        // Corner enumeration: values of x+y on [1,2]^2 are 2,3,3,4; min/|n|_1 = 1.
        let c = Cube { center: vec![s("1.5"), s("1.5")], radius: s("0.5") };
        let slab = Slab::new(vec![s("1"), s("1")], s("0"), Scalar::zero()).unwrap();
        assert_eq!(slab.axis, None);
        assert_eq!(slab_distance(&c, &slab).unwrap(), s("1"));
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(matches!(
            Slab::new(vec![s("0"), s("0")], s("0"), s("0.1")),
            Err(Error::ZeroNormal)
        ));
        let bad = Slab { normal: vec![s("0")], offset: s("0"), halfwidth: s("0"), axis: None };
        assert!(matches!(slab_distance(&seg("0", "1"), &bad), Err(Error::ZeroNormal)));
    }

    #[test]
    fn avoidance_examples() {
        let c = seg("0.3", "0.5");
        assert!(cube_avoids_slab(&c, &Slab::axis_aligned(1, 0, s("0.1"), s("0.05"))).unwrap());
        assert!(!cube_avoids_slab(&c, &Slab::axis_aligned(1, 0, s("0.32"), s("0.05"))).unwrap());
        let sq = Cube { center: vec![s("1.5"), s("1.5")], radius: s("0.5") };
        let diag = Slab::new(vec![s("1"), s("1")], s("0"), s("0.4")).unwrap();
        assert!(cube_avoids_slab(&sq, &diag).unwrap());
    }

    #[test]
    fn touching_counts_as_meeting() {
        let c = seg("0.3", "0.5");
        let slab = Slab::axis_aligned(1, 0, s("0.2"), s("0.1"));
        assert!(!cube_avoids_slab(&c, &slab).unwrap());
    }

    #[test]
    fn containment_examples() {
        assert!(cube_inside(&seg("0.2", "0.4"), &seg("0.1", "0.5")).unwrap());
        assert!(!cube_inside(&seg("0.2", "0.6"), &seg("0.1", "0.5")).unwrap());
        assert!(cube_inside(&seg("0.1", "0.5"), &seg("0.1", "0.5")).unwrap());
    }

    #[test]
    fn pass_slab_removes_nothing() {
        let p = Slab::pass(2);
        assert!(p.is_pass());
        assert!(cube_avoids_slab(&Cube::unit(2), &p).unwrap());
    }

    #[test]
    fn interval_rules() {
        assert!(Interval::new(s("1"), s("0"), true, true).is_err());
        assert!(Interval::new(s("1"), s("1"), true, false).is_err());
        assert!(Interval::closed(s("1"), s("1")).is_ok());
        let a = Interval::open(s("0"), s("0.5")).unwrap();
        let b = Interval::closed(s("0.5"), s("1")).unwrap();
        assert!(!a.meets(&b).unwrap());
        let c = Interval::closed(s("0.25"), s("0.75")).unwrap();
        let i = a.intersect(&c).unwrap().unwrap();
        assert_eq!((i.lo, i.hi, i.closed_lo, i.closed_hi), (s("0.25"), s("0.5"), true, false));
    }

    #[test]
    fn cube_validation() {
        assert!(Cube::new(vec![s("0.5")], s("0")).is_err());
        assert!(Cube::new(vec![s("3")], s("0.5")).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small() -> impl Strategy<Value = Scalar> {
            (-64i64..64).prop_map(|n| Scalar::ratio(n, 32))
        }

        proptest! {
            #[test]
            fn avoidance_matches_distance(
                c in prop::collection::vec(small(), 2),
                r in 1i64..32,
                n in prop::collection::vec(small(), 2),
                b in small(),
                w in 0i64..16,
            ) {
                prop_assume!(!n.iter().all(|v| v.is_zero()));
                let cube = Cube { center: c, radius: Scalar::ratio(r, 64) };
                let slab = Slab::new(n, b, Scalar::ratio(w, 32)).unwrap();
                let d = slab_distance(&cube, &slab).unwrap();
                prop_assert!(d.ge(&Scalar::zero()).unwrap());
                prop_assert_eq!(
                    cube_avoids_slab(&cube, &slab).unwrap(),
                    d.gt(&slab.halfwidth).unwrap()
                );
            }

            #[test]
            fn distance_zero_iff_plane_hits_cube(
                c in prop::collection::vec(small(), 2),
                r in 1i64..32,
                n in prop::collection::vec(small(), 2),
                b in small(),
            ) {
                prop_assume!(!n.iter().all(|v| v.is_zero()));
                let cube = Cube { center: c.clone(), radius: Scalar::ratio(r, 64) };
                let slab = Slab::new(n.clone(), b.clone(), Scalar::zero()).unwrap();
                let d = slab_distance(&cube, &slab).unwrap();
                // Corner oracle: the plane meets the cube iff corner values change sign.
                let rr = Scalar::ratio(r, 64);
                let mut vals = vec![];
                for sx in [-1i64, 1] {
                    for sy in [-1i64, 1] {
                        let x = &c[0] + &(&Scalar::from(sx) * &rr);
                        let y = &c[1] + &(&Scalar::from(sy) * &rr);
                        vals.push(&(&(&n[0] * &x) + &(&n[1] * &y)) - &b);
                    }
                }
                let has_nonpos = vals.iter().any(|v| v.le(&Scalar::zero()).unwrap());
                let has_nonneg = vals.iter().any(|v| v.ge(&Scalar::zero()).unwrap());
                prop_assert_eq!(d.is_zero(), has_nonpos && has_nonneg);
            }
        }
    }
}
