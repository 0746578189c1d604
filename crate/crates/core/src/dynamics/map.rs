use std::cmp::Ordering;

use num_traits::ToPrimitive;

use super::mobius::Mobius;
use crate::error::{Error, Result};
use crate::scalar::{NumericMode, Scalar};

/// One monotone piece of a piecewise expanding map, on an open domain.
#[derive(Clone, Debug)]
pub struct Branch {
    pub symbol: i64,
    pub lo: Scalar,
    pub hi: Scalar,
    pub forward: Mobius,
    pub inverse: Mobius,
    pub increasing: bool,
    /// T((lo, hi)), as an ordered open interval.
    pub image_lo: Scalar,
    pub image_hi: Scalar,
    /// inf and sup of |T'| over the domain.
    pub deriv_inf: Scalar,
    pub deriv_sup: Scalar,
    pub affine: bool,
}

impl Branch {
    fn build(symbol: i64, lo: Scalar, hi: Scalar, forward: Mobius) -> Result<Branch> {
        let increasing = forward.increasing()?;
        let (image_lo, image_hi) = forward.image(&lo, &hi)?;
        let (deriv_inf, deriv_sup) = forward.abs_derivative_range(&lo, &hi);
        Ok(Branch {
            symbol,
            inverse: forward.inverse(),
            affine: forward.is_affine(),
            lo,
            hi,
            forward,
            increasing,
            image_lo,
            image_hi,
            deriv_inf,
            deriv_sup,
        })
    }

    /// Branch whose image ends are known exactly.
    fn build_with_image(
        symbol: i64,
        lo: Scalar,
        hi: Scalar,
        forward: Mobius,
        image: (Scalar, Scalar),
    ) -> Result<Branch> {
        let mut b = Branch::build(symbol, lo, hi, forward)?;
        b.image_lo = image.0;
        b.image_hi = image.1;
        Ok(b)
    }

    pub fn is_full(&self) -> bool {
        self.image_lo.is_zero() && self.image_hi == Scalar::one()
    }

    pub fn contains(&self, x: &Scalar) -> Result<bool> {
        Ok(x.gt(&self.lo)? && x.lt(&self.hi)?)
    }

    pub fn apply(&self, x: &Scalar) -> Scalar {
        self.forward.apply(x)
    }

    pub fn derivative(&self, x: &Scalar) -> Scalar {
        self.forward.derivative(x)
    }

    fn forward_point(&self, x: &Scalar) -> Scalar {
        if *x == self.lo {
            if self.increasing { self.image_lo.clone() } else { self.image_hi.clone() }
        } else if *x == self.hi {
            if self.increasing { self.image_hi.clone() } else { self.image_lo.clone() }
        } else {
            self.forward.apply(x)
        }
    }

    fn inverse_point(&self, y: &Scalar) -> Scalar {
        if *y == self.image_lo {
            if self.increasing { self.lo.clone() } else { self.hi.clone() }
        } else if *y == self.image_hi {
            if self.increasing { self.hi.clone() } else { self.lo.clone() }
        } else {
            self.inverse.apply(y)
        }
    }

    /// T([x0, x1] ∩ closure(domain)); None when the clipped interval is degenerate or empty.
    pub fn push_interval(&self, x0: &Scalar, x1: &Scalar) -> Result<Option<(Scalar, Scalar)>> {
        let a = if x0.le(&self.lo)? { self.lo.clone() } else { x0.clone() };
        let b = if x1.ge(&self.hi)? { self.hi.clone() } else { x1.clone() };
        if !a.lt(&b)? {
            return Ok(None);
        }
        let (u, v) = (self.forward_point(&a), self.forward_point(&b));
        Ok(Some(if self.increasing { (u, v) } else { (v, u) }))
    }

    /// T^{-1}([y0, y1] ∩ closure(image)) within this branch.
    pub fn pull_interval(&self, y0: &Scalar, y1: &Scalar) -> Result<Option<(Scalar, Scalar)>> {
        let a = if y0.le(&self.image_lo)? { self.image_lo.clone() } else { y0.clone() };
        let b = if y1.ge(&self.image_hi)? { self.image_hi.clone() } else { y1.clone() };
        if !a.lt(&b)? {
            return Ok(None);
        }
        let (u, v) = (self.inverse_point(&a), self.inverse_point(&b));
        Ok(Some(if self.increasing { (u, v) } else { (v, u) }))
    }

    /// sup of |ψ''/ψ'| over the image, ψ the inverse branch.
    fn nonlinearity(&self) -> Scalar {
        if self.affine {
            return Scalar::zero();
        }
        let f = &self.forward;
        let at = |y: &Scalar| (&(&-&f.c * y) + &f.a).abs();
        let m = at(&self.image_lo).min(&at(&self.image_hi));
        &(&Scalar::from(2) * &f.c.abs()) / &m
    }
}

/// Symbols whose domains meet a query interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymbolSet {
    Finite(Vec<i64>),
    /// from..=to, unbounded above when `to` is None.
    Range { from: i64, to: Option<i64> },
}

impl SymbolSet {
    pub fn is_empty(&self) -> bool {
        match self {
            SymbolSet::Finite(v) => v.is_empty(),
            SymbolSet::Range { from, to } => matches!(to, Some(t) if t < from),
        }
    }

    /// Explicit list, truncated above at `cap` for unbounded ranges.
    pub fn list(&self, cap: i64) -> Vec<i64> {
        match self {
            SymbolSet::Finite(v) => v.clone(),
            SymbolSet::Range { from, to } => {
                let hi = to.map_or(cap, |t| t.min(cap));
                (*from..=hi).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MapKind {
    Beta(Scalar),
    Gauss,
    Luroth,
    PiecewiseAffine,
}

/// A piecewise expanding map of [0,1] with open branch domains.
#[derive(Clone, Debug)]
pub struct PiecewiseMap {
    pub kind: MapKind,
    pub label: String,
    branches: Option<Vec<Branch>>,
    mode: NumericMode,
}

impl PiecewiseMap {
    /// x -> βx mod 1, with ⌈β⌉ branches (the last one partial unless β is an integer).
    pub fn beta(beta: &Scalar, mode: NumericMode) -> Result<PiecewiseMap> {
        if !beta.gt(&Scalar::one())? {
            return Err(Error::InvalidMap(format!("beta {beta} must exceed 1")));
        }
        let b = beta.in_mode(mode);
        let top = b.floor()?;
        let exact_int = Scalar::from(top.clone()) == b;
        let count = if exact_int { top.clone() } else { top.clone() + 1 };
        let count = count
            .to_i64()
            .filter(|c| *c <= 4096)
            .ok_or_else(|| Error::InvalidMap("beta too large".into()))?;
        let mut branches = Vec::with_capacity(count as usize);
        for k in 0..count {
            let lo = &Scalar::from(k) / &b;
            let last = k == count - 1;
            let hi = if last { Scalar::one() } else { &Scalar::from(k + 1) / &b };
            let image_hi = if last { &b - &Scalar::from(k) } else { Scalar::one() };
            let lo = if k == 0 { Scalar::zero() } else { lo };
            branches.push(Branch::build_with_image(
                k,
                lo,
                hi,
                Mobius::affine(b.clone(), Scalar::from(-k)),
                (Scalar::zero(), image_hi),
            )?);
        }
        let label = if exact_int { format!("times({top})") } else { format!("beta({beta})") };
        Ok(PiecewiseMap { kind: MapKind::Beta(b), label, branches: Some(branches), mode })
    }

    pub fn times(m: u32, mode: NumericMode) -> Result<PiecewiseMap> {
        if m < 2 {
            return Err(Error::InvalidMap(format!("times-m needs m >= 2, got {m}")));
        }
        PiecewiseMap::beta(&Scalar::from(m as i64), mode)
    }

    pub fn gauss(mode: NumericMode) -> PiecewiseMap {
        PiecewiseMap { kind: MapKind::Gauss, label: "gauss".into(), branches: None, mode }
    }

    pub fn luroth(mode: NumericMode) -> PiecewiseMap {
        PiecewiseMap { kind: MapKind::Luroth, label: "luroth".into(), branches: None, mode }
    }

    /// Affine pieces on [b_i, b_{i+1}]: positive slopes start at 0, negative ones at 1.
    /// `breakpoints` may list the interior points only, or start at 0 and end at 1.
    pub fn piecewise_affine(
        breakpoints: &[Scalar],
        slopes: &[Scalar],
        mode: NumericMode,
    ) -> Result<PiecewiseMap> {
        let mut pts: Vec<Scalar> = breakpoints.iter().map(|p| p.in_mode(mode)).collect();
        if pts.len() + 1 == slopes.len() {
            pts.insert(0, Scalar::zero());
            pts.push(Scalar::one());
        }
        if pts.len() != slopes.len() + 1 || slopes.is_empty() {
            return Err(Error::InvalidMap("breakpoints and slopes do not match".into()));
        }
        if !pts[0].is_zero() || pts[pts.len() - 1] != Scalar::one() {
            return Err(Error::InvalidMap("breakpoints must run from 0 to 1".into()));
        }
        let mut branches = Vec::with_capacity(slopes.len());
        for (i, s) in slopes.iter().enumerate() {
            let s = s.in_mode(mode);
            let (lo, hi) = (pts[i].clone(), pts[i + 1].clone());
            if !lo.lt(&hi)? {
                return Err(Error::InvalidMap("breakpoints must increase".into()));
            }
            if !s.abs().gt(&Scalar::one())? {
                return Err(Error::InvalidMap(format!("slope {s} must exceed 1 in modulus")));
            }
            let span = &s.abs() * &(&hi - &lo);
            if span.gt(&Scalar::one())? {
                return Err(Error::InvalidMap(format!("piece {i} maps outside [0,1]")));
            }
            let positive = s.gt(&Scalar::zero())?;
            let (forward, image) = if positive {
                (Mobius::affine(s.clone(), -&(&s * &lo)), (Scalar::zero(), span))
            } else {
                (
                    Mobius::affine(s.clone(), &Scalar::one() - &(&s * &lo)),
                    (&Scalar::one() - &span, Scalar::one()),
                )
            };
            branches.push(Branch::build_with_image(i as i64, lo, hi, forward, image)?);
        }
        Ok(PiecewiseMap {
            kind: MapKind::PiecewiseAffine,
            label: "piecewise_affine".into(),
            branches: Some(branches),
            mode,
        })
    }

    pub fn mode(&self) -> NumericMode {
        self.mode
    }

    pub fn is_finite(&self) -> bool {
        self.branches.is_some()
    }

    pub fn finite_branches(&self) -> Option<&[Branch]> {
        self.branches.as_deref()
    }

    pub fn is_full_branch(&self) -> bool {
        match &self.branches {
            Some(bs) => bs.iter().all(Branch::is_full),
            None => true,
        }
    }

    pub fn all_affine(&self) -> bool {
        match (&self.kind, &self.branches) {
            (_, Some(bs)) => bs.iter().all(|b| b.affine),
            (MapKind::Luroth, None) => true,
            _ => false,
        }
    }

    pub fn is_gauss(&self) -> bool {
        self.kind == MapKind::Gauss
    }

    fn infinite_branch(&self, k: i64) -> Result<Branch> {
        let m = |v: Scalar| v.in_mode(self.mode);
        let lo = &m(Scalar::one()) / &m(Scalar::from(k + 1));
        let hi = &m(Scalar::one()) / &m(Scalar::from(k));
        let forward = match self.kind {
            MapKind::Gauss => Mobius::new(Scalar::from(-k), Scalar::one(), Scalar::one(), Scalar::zero()),
            _ => Mobius::affine(Scalar::from(k * (k + 1)), Scalar::from(-k)),
        };
        Branch::build_with_image(k, lo, hi, forward, (Scalar::zero(), Scalar::one()))
    }

    pub fn branch(&self, symbol: i64, time: usize) -> Result<Branch> {
        match &self.branches {
            Some(bs) => bs
                .iter()
                .find(|b| b.symbol == symbol)
                .cloned()
                .ok_or(Error::UnknownSymbol { symbol, time }),
            None if symbol >= 1 && symbol < i64::MAX / 4 => self.infinite_branch(symbol),
            None => Err(Error::UnknownSymbol { symbol, time }),
        }
    }

    /// Branch whose open domain holds x; None on boundaries or outside (0,1).
    pub fn locate(&self, x: &Scalar) -> Result<Option<Branch>> {
        match &self.branches {
            Some(bs) => {
                let mut undecided = None;
                for b in bs {
                    match b.contains(x) {
                        Ok(true) => return Ok(Some(b.clone())),
                        Ok(false) => {}
                        Err(e) => undecided = Some(e),
                    }
                }
                match undecided {
                    Some(e) => Err(e.into()),
                    None => Ok(None),
                }
            }
            None => {
                if !x.gt(&Scalar::zero())? || !x.lt(&Scalar::one())? {
                    return Ok(None);
                }
                let y = x.recip();
                let k = y.floor()?;
                if Scalar::from(k.clone()).try_cmp(&y)? == Ordering::Equal {
                    return Ok(None);
                }
                let k = k.to_i64().ok_or_else(|| Error::OutsideDomain(x.to_string()))?;
                self.infinite_branch(k).map(Some)
            }
        }
    }

    /// Symbols whose open domain meets the closed interval [y0, y1].
    pub fn symbols_meeting(&self, y0: &Scalar, y1: &Scalar) -> Result<SymbolSet> {
        match &self.branches {
            Some(bs) => {
                let mut out = vec![];
                for b in bs {
                    if b.lo.lt(y1)? && b.hi.gt(y0)? {
                        out.push(b.symbol);
                    }
                }
                Ok(SymbolSet::Finite(out))
            }
            None => {
                if !y1.gt(&Scalar::zero())? || !y0.lt(&Scalar::one())? {
                    return Ok(SymbolSet::Finite(vec![]));
                }
                let from = if y1.ge(&Scalar::one())? {
                    1
                } else {
                    y1.recip().floor()?.to_i64().unwrap_or(i64::MAX / 4).max(1)
                };
                let to = if y0.le(&Scalar::zero())? {
                    None
                } else {
                    let inv = y0.recip();
                    let f = inv.floor()?;
                    // k < 1/y0 strictly.
                    let t = if Scalar::from(f.clone()).try_cmp(&inv)? == Ordering::Equal {
                        f - 1
                    } else {
                        f
                    };
                    Some(t.to_i64().unwrap_or(i64::MAX / 4))
                };
                Ok(SymbolSet::Range { from, to })
            }
        }
    }

    /// Branch endpoints (including 0 and 1) lying in [y0, y1]; errors past `cap`.
    pub fn boundaries_in(&self, y0: &Scalar, y1: &Scalar, cap: usize) -> Result<Vec<Scalar>> {
        let mut pts: Vec<Scalar> = vec![];
        let push = |p: Scalar, pts: &mut Vec<Scalar>| -> Result<()> {
            if p.ge(y0)? && p.le(y1)? && !pts.contains(&p) {
                pts.push(p);
            }
            Ok(())
        };
        match &self.branches {
            Some(bs) => {
                push(Scalar::zero(), &mut pts)?;
                push(Scalar::one(), &mut pts)?;
                for b in bs {
                    push(b.lo.clone(), &mut pts)?;
                    push(b.hi.clone(), &mut pts)?;
                }
            }
            None => {
                push(Scalar::zero(), &mut pts)?;
                push(Scalar::one(), &mut pts)?;
                if y0.le(&Scalar::zero())? && y1.gt(&Scalar::zero())? {
                    return Err(Error::Precondition(
                        "interval touches the accumulation point 0 of an infinite alphabet".into(),
                    ));
                }
                if y1.gt(&Scalar::zero())? {
                    let kmin = y1.recip().floor()?.to_i64().unwrap_or(i64::MAX / 4).max(1);
                    let kmax = if y0.gt(&Scalar::zero())? {
                        y0.recip().floor()?.to_i64().unwrap_or(i64::MAX / 4)
                    } else {
                        kmin
                    };
                    if kmax - kmin > cap as i64 {
                        return Err(Error::Precondition(format!("more than {cap} boundaries")));
                    }
                    for k in kmin..=kmax {
                        let p = &Scalar::one().in_mode(self.mode) / &Scalar::from(k).in_mode(self.mode);
                        push(p, &mut pts)?;
                    }
                }
            }
        }
        if pts.len() > cap {
            return Err(Error::Precondition(format!("more than {cap} boundaries")));
        }
        Ok(pts)
    }

    /// inf over branches of inf |T'|.
    pub fn inf_derivative(&self) -> Scalar {
        match (&self.kind, &self.branches) {
            (_, Some(bs)) => bs
                .iter()
                .map(|b| b.deriv_inf.clone())
                .reduce(|a, b| a.min(&b))
                .unwrap_or_else(Scalar::one),
            (MapKind::Luroth, None) => Scalar::from(2),
            _ => Scalar::one(),
        }
    }

    /// sup of |T'|, finite only for finitely many branches.
    pub fn sup_derivative(&self) -> Option<Scalar> {
        self.branches
            .as_ref()
            .map(|bs| bs.iter().map(|b| b.deriv_sup.clone()).reduce(|a, b| a.max(&b)).unwrap())
    }

    /// sup over inverse branches of |ψ''/ψ'|.
    pub fn nonlinearity(&self) -> Scalar {
        match (&self.kind, &self.branches) {
            (_, Some(bs)) => bs
                .iter()
                .map(Branch::nonlinearity)
                .reduce(|a, b| a.max(&b))
                .unwrap_or_else(Scalar::zero),
            (MapKind::Gauss, None) => Scalar::from(2),
            _ => Scalar::zero(),
        }
    }
}
