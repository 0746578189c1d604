//! Real numbers for the engine: exact rationals or outward-rounded dyadic balls.
//!
//! Exact values never round. Ball values carry a guaranteed enclosure; any
//! comparison that the enclosures cannot decide is reported as
//! [`Indeterminate`] instead of being guessed.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Environment variable holding the default ball precision in bits.
pub const PRECISION_ENV: &str = "HYPWIN_PRECISION";
pub const DEFAULT_PRECISION: u32 = 512;

/// Decimal digits kept for ball midpoints in text output.
const BALL_DIGITS: usize = 40;

pub fn default_precision() -> u32 {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u32>().ok())
        .filter(|p| *p >= 16)
        .unwrap_or(DEFAULT_PRECISION)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("comparison undecidable at {precision} bits of precision")]
pub struct Indeterminate {
    pub precision: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid number literal {0:?}")]
pub struct ParseScalarError(pub String);

/// Arithmetic regime for map-side computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericMode {
    Rational,
    BigFloat(u32),
}

impl NumericMode {
    pub fn bigfloat_default() -> Self {
        NumericMode::BigFloat(default_precision())
    }
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericMode::Rational => write!(f, "rational"),
            NumericMode::BigFloat(p) => write!(f, "bigfloat:{p}"),
        }
    }
}

impl FromStr for NumericMode {
    type Err = ParseScalarError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t == "rational" {
            return Ok(NumericMode::Rational);
        }
        if t == "bigfloat" {
            return Ok(NumericMode::bigfloat_default());
        }
        if let Some(p) = t.strip_prefix("bigfloat:") {
            return p
                .parse::<u32>()
                .ok()
                .filter(|p| *p >= 16)
                .map(NumericMode::BigFloat)
                .ok_or_else(|| ParseScalarError(s.to_string()));
        }
        Err(ParseScalarError(s.to_string()))
    }
}

impl Serialize for NumericMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NumericMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// m * 2^e, kept with no trailing zero bits in m.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Dyadic {
    m: BigInt,
    e: i64,
}

impl Dyadic {
    fn new(m: BigInt, e: i64) -> Self {
        if m.is_zero() {
            return Dyadic { m, e: 0 };
        }
        let tz = m.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            Dyadic { m: m >> tz, e: e + tz as i64 }
        } else {
            Dyadic { m, e }
        }
    }

    fn to_rational(&self) -> BigRational {
        if self.e >= 0 {
            BigRational::from_integer(&self.m << self.e as u64)
        } else {
            BigRational::new(self.m.clone(), BigInt::one() << (-self.e) as u64)
        }
    }

    fn add(&self, o: &Dyadic) -> Dyadic {
        let e = self.e.min(o.e);
        let a = &self.m << (self.e - e) as u64;
        let b = &o.m << (o.e - e) as u64;
        Dyadic::new(a + b, e)
    }

    fn mul(&self, o: &Dyadic) -> Dyadic {
        Dyadic::new(&self.m * &o.m, self.e + o.e)
    }

    fn neg(&self) -> Dyadic {
        Dyadic { m: -&self.m, e: self.e }
    }

    fn cmp(&self, o: &Dyadic) -> Ordering {
        let e = self.e.min(o.e);
        let a = &self.m << (self.e - e) as u64;
        let b = &o.m << (o.e - e) as u64;
        a.cmp(&b)
    }

    /// Round to at most `p` significant bits, toward +inf when `up`.
    fn round(self, p: u32, up: bool) -> Dyadic {
        let bits = self.m.bits();
        if bits <= p as u64 {
            return self;
        }
        let t = bits - p as u64;
        let m = if up { -((-&self.m) >> t) } else { &self.m >> t };
        Dyadic::new(m, self.e + t as i64)
    }

    fn from_rational(q: &BigRational, p: u32, up: bool) -> Dyadic {
        let (n, d) = (q.numer(), q.denom());
        if n.is_zero() {
            return Dyadic::new(BigInt::zero(), 0);
        }
        if d.is_one() {
            return Dyadic::new(n.clone(), 0).round(p, up);
        }
        Dyadic::from_fraction(n, d, p, up)
    }

    /// n/d rounded to p bits, for d > 0 (no gcd needed).
    fn from_fraction(n: &BigInt, d: &BigInt, p: u32, up: bool) -> Dyadic {
        if n.is_zero() {
            return Dyadic::new(BigInt::zero(), 0);
        }
        if d.magnitude().count_ones() == 1 {
            let k = d.bits() as i64 - 1;
            return Dyadic::new(n.clone(), -k).round(p, up);
        }
        // Enough bits that the quotient has at least p + 2 significant bits.
        let k = p as i64 + 2 + d.bits() as i64 - n.bits() as i64;
        let (num, den) = if k >= 0 {
            (n << k as u64, d.clone())
        } else {
            (n.clone(), d << (-k) as u64)
        };
        let m = if up { ceil_div(&num, &den) } else { num.div_floor(&den) };
        Dyadic::new(m, -k).round(p, up)
    }

    fn div(a: &Dyadic, b: &Dyadic, p: u32, up: bool) -> Dyadic {
        let r = if b.is_negative() {
            Dyadic::from_fraction(&-&a.m, &-&b.m, p, up)
        } else {
            Dyadic::from_fraction(&a.m, &b.m, p, up)
        };
        Dyadic::new(r.m, r.e + a.e - b.e)
    }

    fn is_nonnegative(&self) -> bool {
        self.m.sign() != Sign::Minus
    }

    fn is_negative(&self) -> bool {
        self.m.sign() == Sign::Minus
    }

    fn is_positive(&self) -> bool {
        self.m.sign() == Sign::Plus
    }
}

/// Cross-multiplied comparison; denominators are always positive.
fn cmp_rational(a: &BigRational, b: &BigRational) -> Ordering {
    if a.denom() == b.denom() {
        return a.numer().cmp(b.numer());
    }
    let (sa, sb) = (a.numer().sign(), b.numer().sign());
    if sa != sb {
        return sa.cmp(&sb);
    }
    (a.numer() * b.denom()).cmp(&(b.numer() * a.denom()))
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    -((-a).div_floor(b))
}

/// Closed enclosure [lo, hi] with dyadic endpoints, or the whole line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ball {
    bounds: Option<(Dyadic, Dyadic)>,
    prec: u32,
}

impl Ball {
    fn from_rational(q: &BigRational, prec: u32) -> Ball {
        Ball {
            bounds: Some((
                Dyadic::from_rational(q, prec, false),
                Dyadic::from_rational(q, prec, true),
            )),
            prec,
        }
    }

    fn from_bounds(lo: &BigRational, hi: &BigRational, prec: u32) -> Ball {
        Ball {
            bounds: Some((
                Dyadic::from_rational(lo, prec, false),
                Dyadic::from_rational(hi, prec, true),
            )),
            prec,
        }
    }

    pub fn unbounded(prec: u32) -> Ball {
        Ball { bounds: None, prec }
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    pub fn is_bounded(&self) -> bool {
        self.bounds.is_some()
    }

    pub fn lower(&self) -> Option<BigRational> {
        self.bounds.as_ref().map(|(l, _)| l.to_rational())
    }

    pub fn upper(&self) -> Option<BigRational> {
        self.bounds.as_ref().map(|(_, h)| h.to_rational())
    }

    fn with_prec(&self, prec: u32) -> Ball {
        match &self.bounds {
            None => Ball::unbounded(prec),
            Some((l, h)) if prec < self.prec => Ball {
                bounds: Some((l.clone().round(prec, false), h.clone().round(prec, true))),
                prec,
            },
            Some(b) => Ball { bounds: Some(b.clone()), prec },
        }
    }

    fn make(lo: Dyadic, hi: Dyadic, prec: u32) -> Ball {
        Ball { bounds: Some((lo.round(prec, false), hi.round(prec, true))), prec }
    }

    fn add(&self, o: &Ball) -> Ball {
        let p = self.prec.max(o.prec);
        match (&self.bounds, &o.bounds) {
            (Some((a, b)), Some((c, d))) => Ball::make(a.add(c), b.add(d), p),
            _ => Ball::unbounded(p),
        }
    }

    fn neg(&self) -> Ball {
        Ball {
            bounds: self.bounds.as_ref().map(|(l, h)| (h.neg(), l.neg())),
            prec: self.prec,
        }
    }

    fn mul(&self, o: &Ball) -> Ball {
        let p = self.prec.max(o.prec);
        match (&self.bounds, &o.bounds) {
            (Some((a, b)), Some((c, d))) if a.is_nonnegative() && c.is_nonnegative() => {
                Ball::make(a.mul(c), b.mul(d), p)
            }
            (Some((a, b)), Some((c, d))) => {
                let prods = [a.mul(c), a.mul(d), b.mul(c), b.mul(d)];
                let lo = prods.iter().min_by(|x, y| x.cmp(y)).unwrap().clone();
                let hi = prods.iter().max_by(|x, y| x.cmp(y)).unwrap().clone();
                Ball::make(lo, hi, p)
            }
            _ => Ball::unbounded(p),
        }
    }

    fn div(&self, o: &Ball) -> Ball {
        let p = self.prec.max(o.prec);
        match (&self.bounds, &o.bounds) {
            (Some((a, b)), Some((c, d))) => {
                if !(c.is_positive() || d.is_negative()) {
                    return Ball::unbounded(p);
                }
                if a.is_nonnegative() && c.is_positive() {
                    return Ball { bounds: Some((Dyadic::div(a, d, p, false), Dyadic::div(b, c, p, true))), prec: p };
                }
                let pairs = [(a, c), (a, d), (b, c), (b, d)];
                let lo = pairs
                    .iter()
                    .map(|(x, y)| Dyadic::div(x, y, p, false))
                    .min_by(|x, y| x.cmp(y))
                    .unwrap();
                let hi = pairs
                    .iter()
                    .map(|(x, y)| Dyadic::div(x, y, p, true))
                    .max_by(|x, y| x.cmp(y))
                    .unwrap();
                Ball { bounds: Some((lo, hi)), prec: p }
            }
            _ => Ball::unbounded(p),
        }
    }
}

/// A real number used throughout the engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scalar {
    Exact(BigRational),
    Ball(Ball),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::zero()
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(v)))
    }
}

impl From<BigInt> for Scalar {
    fn from(v: BigInt) -> Self {
        Scalar::Exact(BigRational::from_integer(v))
    }
}

impl From<BigRational> for Scalar {
    fn from(v: BigRational) -> Self {
        Scalar::Exact(v)
    }
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::from(0)
    }

    pub fn one() -> Self {
        Scalar::from(1)
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        assert!(d != 0, "zero denominator");
        Scalar::Exact(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    /// 2^k as an exact value (k may be negative).
    pub fn pow2(k: i64) -> Self {
        Scalar::Exact(Dyadic::new(BigInt::one(), k).to_rational())
    }

    /// Enclosing ball for an exact rational, or a re-rounded ball.
    pub fn to_ball(&self, prec: u32) -> Scalar {
        Scalar::Ball(self.as_ball(prec))
    }

    /// Ball with the given enclosure endpoints.
    pub fn ball_from_bounds(lo: &BigRational, hi: &BigRational, prec: u32) -> Scalar {
        assert!(lo <= hi, "inverted ball bounds");
        Scalar::Ball(Ball::from_bounds(lo, hi, prec))
    }

    pub fn in_mode(&self, mode: NumericMode) -> Scalar {
        match mode {
            NumericMode::Rational => self.clone(),
            NumericMode::BigFloat(p) => self.to_ball(p),
        }
    }

    fn as_ball(&self, prec: u32) -> Ball {
        match self {
            Scalar::Exact(q) => Ball::from_rational(q, prec),
            Scalar::Ball(b) => b.with_prec(prec),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Ball(_) => None,
        }
    }

    /// Bits of precision, if a ball.
    pub fn precision(&self) -> Option<u32> {
        match self {
            Scalar::Exact(_) => None,
            Scalar::Ball(b) => Some(b.prec),
        }
    }

    /// Lower and upper bounds of the enclosure (equal for exact values).
    pub fn bounds(&self) -> Option<(BigRational, BigRational)> {
        match self {
            Scalar::Exact(q) => Some((q.clone(), q.clone())),
            Scalar::Ball(b) => b.lower().zip(b.upper()),
        }
    }

    /// Midpoint of the enclosure.
    pub fn mid(&self) -> Option<BigRational> {
        self.bounds().map(|(l, h)| (l + h) / BigRational::from_integer(BigInt::from(2)))
    }

    /// Half the enclosure width; zero for exact values.
    pub fn rad(&self) -> Option<BigRational> {
        self.bounds().map(|(l, h)| (h - l) / BigRational::from_integer(BigInt::from(2)))
    }

    fn indeterminate(&self, o: &Scalar) -> Indeterminate {
        Indeterminate {
            precision: self.precision().unwrap_or(0).max(o.precision().unwrap_or(0)),
        }
    }

    fn binop(
        &self,
        o: &Scalar,
        exact: impl FnOnce(&BigRational, &BigRational) -> BigRational,
        ball: impl FnOnce(&Ball, &Ball) -> Ball,
    ) -> Scalar {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(exact(a, b)),
            _ => {
                let p = self.precision().unwrap_or(0).max(o.precision().unwrap_or(0));
                Scalar::Ball(ball(&self.as_ball(p), &o.as_ball(p)))
            }
        }
    }

    pub fn try_cmp(&self, o: &Scalar) -> Result<Ordering, Indeterminate> {
        if let (Scalar::Exact(a), Scalar::Exact(b)) = (self, o) {
            return Ok(cmp_rational(a, b));
        }
        let p = self.precision().unwrap_or(0).max(o.precision().unwrap_or(0));
        let (x, y) = (self.as_ball(p), o.as_ball(p));
        match (&x.bounds, &y.bounds) {
            (Some((a, b)), Some((c, d))) => {
                if b.cmp(c) == Ordering::Less {
                    Ok(Ordering::Less)
                } else if a.cmp(d) == Ordering::Greater {
                    Ok(Ordering::Greater)
                } else if a == b && c == d && a == c {
                    Ok(Ordering::Equal)
                } else {
                    Err(self.indeterminate(o))
                }
            }
            _ => Err(self.indeterminate(o)),
        }
    }

    pub fn lt(&self, o: &Scalar) -> Result<bool, Indeterminate> {
        match self.try_cmp(o) {
            Ok(ord) => Ok(ord == Ordering::Less),
            Err(e) => {
                // a < b is false as soon as a.lo >= b.hi.
                match (self.bounds(), o.bounds()) {
                    (Some((a, _)), Some((_, d))) if a >= d => Ok(false),
                    _ => Err(e),
                }
            }
        }
    }

    pub fn le(&self, o: &Scalar) -> Result<bool, Indeterminate> {
        match self.try_cmp(o) {
            Ok(ord) => Ok(ord != Ordering::Greater),
            Err(e) => match (self.bounds(), o.bounds()) {
                (Some((_, b)), Some((c, _))) if b <= c => Ok(true),
                _ => Err(e),
            },
        }
    }

    pub fn gt(&self, o: &Scalar) -> Result<bool, Indeterminate> {
        o.lt(self)
    }

    pub fn ge(&self, o: &Scalar) -> Result<bool, Indeterminate> {
        o.le(self)
    }

    pub fn signum(&self) -> Result<Ordering, Indeterminate> {
        self.try_cmp(&Scalar::zero())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Scalar::Exact(q) if q.is_zero())
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(q.abs()),
            Scalar::Ball(b) => match &b.bounds {
                None => self.clone(),
                Some((l, h)) => {
                    if !l.is_negative() {
                        self.clone()
                    } else if !h.is_positive() {
                        Scalar::Ball(b.neg())
                    } else {
                        let nl = l.neg();
                        let top = if nl.cmp(h) == Ordering::Greater { nl } else { h.clone() };
                        Scalar::Ball(Ball {
                            bounds: Some((Dyadic::new(BigInt::zero(), 0), top)),
                            prec: b.prec,
                        })
                    }
                }
            },
        }
    }

    /// Enclosure of min(self, o); never indeterminate.
    pub fn min(&self, o: &Scalar) -> Scalar {
        self.lattice(o, true)
    }

    pub fn max(&self, o: &Scalar) -> Scalar {
        self.lattice(o, false)
    }

    fn lattice(&self, o: &Scalar, take_min: bool) -> Scalar {
        if let (Scalar::Exact(a), Scalar::Exact(b)) = (self, o) {
            let pick_a = if take_min { a <= b } else { a >= b };
            return Scalar::Exact(if pick_a { a.clone() } else { b.clone() });
        }
        let p = self.precision().unwrap_or(0).max(o.precision().unwrap_or(0));
        let (x, y) = (self.as_ball(p), o.as_ball(p));
        let pick = |u: &Dyadic, v: &Dyadic| {
            let first = match u.cmp(v) {
                Ordering::Less => take_min,
                _ => !take_min,
            };
            if first { u.clone() } else { v.clone() }
        };
        match (&x.bounds, &y.bounds) {
            (Some((a, b)), Some((c, d))) => {
                Scalar::Ball(Ball { bounds: Some((pick(a, c), pick(b, d))), prec: p })
            }
            _ => Scalar::Ball(Ball::unbounded(p)),
        }
    }

    pub fn floor(&self) -> Result<BigInt, Indeterminate> {
        match self {
            Scalar::Exact(q) => Ok(q.floor().to_integer()),
            Scalar::Ball(b) => match (b.lower(), b.upper()) {
                (Some(l), Some(h)) => {
                    let (fl, fh) = (l.floor().to_integer(), h.floor().to_integer());
                    if fl == fh {
                        Ok(fl)
                    } else {
                        Err(Indeterminate { precision: b.prec })
                    }
                }
                _ => Err(Indeterminate { precision: b.prec }),
            },
        }
    }

    pub fn recip(&self) -> Scalar {
        &Scalar::one() / self
    }

    pub fn powi(&self, k: i64) -> Scalar {
        if k < 0 {
            return self.powi(-k).recip();
        }
        let mut base = self.clone();
        let mut acc = Scalar::one();
        let mut e = k as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Nearest f64 to the midpoint; NaN for an unbounded ball.
    pub fn to_f64(&self) -> f64 {
        match self.mid() {
            Some(q) => rational_to_f64(&q),
            None => f64::NAN,
        }
    }

    /// Exact rational for an f64 (every finite double is dyadic).
    pub fn from_f64_exact(v: f64) -> Option<Scalar> {
        BigRational::from_float(v).map(Scalar::Exact)
    }

    pub fn parse(s: &str) -> Result<Scalar, ParseScalarError> {
        s.parse()
    }
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    if let Some(v) = q.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Scale huge numerators and denominators down before converting.
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    let shift = nb - db;
    let scaled = if shift > 0 {
        q / BigRational::from_integer(BigInt::one() << shift as u64)
    } else {
        q * BigRational::from_integer(BigInt::one() << (-shift) as u64)
    };
    scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift.clamp(-2000, 2000) as i32)
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident, $exact:expr, $ball:expr) => {
        impl<'a, 'b> $tr<&'b Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $m(self, o: &'b Scalar) -> Scalar {
                self.binop(o, $exact, $ball)
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                (&self).$m(&o)
            }
        }
        impl<'b> $tr<&'b Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: &'b Scalar) -> Scalar {
                (&self).$m(o)
            }
        }
        impl<'a> $tr<Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                self.$m(&o)
            }
        }
    };
}

forward_binop!(Add, add, |a, b| a + b, |a, b| a.add(b));
forward_binop!(Sub, sub, |a, b| a - b, |a, b| a.add(&b.neg()));
forward_binop!(Mul, mul, |a, b| a * b, |a, b| a.mul(b));
forward_binop!(
    Div,
    div,
    |a, b| {
        assert!(!b.is_zero(), "exact division by zero");
        a / b
    },
    |a, b| a.div(b)
);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(-q),
            Scalar::Ball(b) => Scalar::Ball(b.neg()),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

/// Exact decimal expansion when the denominator is 2^a 5^b.
pub fn terminating_decimal(q: &BigRational) -> Option<String> {
    let mut d = q.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut a, mut b) = (0u64, 0u64);
    while d.is_even() {
        d /= &two;
        a += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        b += 1;
    }
    if !d.is_one() {
        return None;
    }
    let k = a.max(b);
    let scaled = q.numer() * num_traits::pow(BigInt::from(10), k as usize) / q.denom();
    Some(place_point(&scaled, k as usize))
}

fn place_point(n: &BigInt, k: usize) -> String {
    let neg = n.is_negative();
    let digits = n.magnitude().to_string();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if k == 0 {
        out.push_str(&digits);
        return out;
    }
    let digits = if digits.len() <= k {
        format!("{}{}", "0".repeat(k + 1 - digits.len()), digits)
    } else {
        digits
    };
    let (int, frac) = digits.split_at(digits.len() - k);
    let frac = frac.trim_end_matches('0');
    out.push_str(int);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    out
}

/// Decimal exponent E with 10^E <= |q| < 10^(E+1); q nonzero.
fn decimal_exponent(q: &BigRational) -> i64 {
    let a = q.abs();
    let est = ((a.numer().bits() as f64 - a.denom().bits() as f64) * std::f64::consts::LOG10_2)
        .floor() as i64;
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut e = est - 1;
    loop {
        let p = pow_rational(&ten, e + 1);
        if a < p {
            let lower = pow_rational(&ten, e);
            if a >= lower {
                return e;
            }
            e -= 1;
        } else {
            e += 1;
        }
    }
}

fn pow_rational(base: &BigRational, e: i64) -> BigRational {
    if e >= 0 {
        num_traits::pow(base.clone(), e as usize)
    } else {
        num_traits::pow(base.recip(), (-e) as usize)
    }
}

/// Scientific notation with `digits` significant digits, rounding in the given direction
/// (None = nearest). Returns the text and the exact value it denotes.
fn scientific(q: &BigRational, digits: usize, dir: Option<bool>) -> (String, BigRational) {
    if q.is_zero() {
        return ("0".to_string(), BigRational::zero());
    }
    let e = decimal_exponent(q);
    let shift = digits as i64 - 1 - e;
    let ten = BigRational::from_integer(BigInt::from(10));
    let scaled = q * pow_rational(&ten, shift);
    let n = match dir {
        None => scaled.round().to_integer(),
        Some(true) => scaled.ceil().to_integer(),
        Some(false) => scaled.floor().to_integer(),
    };
    let value = BigRational::from_integer(n.clone()) * pow_rational(&ten, -shift);
    let neg = n.is_negative();
    let ds = n.magnitude().to_string();
    // Rounding may carry into an extra digit; the exponent is re-derived from length.
    let exp = e + (ds.len() as i64 - digits as i64);
    let (head, tail) = ds.split_at(1);
    let tail = tail.trim_end_matches('0');
    let mut s = String::new();
    if neg {
        s.push('-');
    }
    s.push_str(head);
    if !tail.is_empty() {
        s.push('.');
        s.push_str(tail);
    }
    if exp != 0 {
        s.push_str(&format!("e{exp}"));
    }
    (s, value)
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(q) => match terminating_decimal(q) {
                Some(s) => write!(f, "{s}"),
                None => write!(f, "{}/{}", q.numer(), q.denom()),
            },
            Scalar::Ball(b) => match (b.lower(), b.upper()) {
                (Some(l), Some(h)) => {
                    let mid = (&l + &h) / BigRational::from_integer(BigInt::from(2));
                    let (ms, mv) = scientific(&mid, BALL_DIGITS, None);
                    let r = (&h - &mv).max(&mv - &l);
                    if r.is_zero() {
                        write!(f, "{ms}~0")
                    } else {
                        let (rs, _) = scientific(&r, 3, Some(true));
                        write!(f, "{ms}~{rs}")
                    }
                }
                _ => write!(f, "unbounded"),
            },
        }
    }
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i64>().ok()?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = match body.find('.') {
        Some(i) => (&body[..i], &body[i + 1..]),
        None => (body, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|c| c.is_ascii_digit()) || !frac.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut q = BigRational::from_integer(if neg { -n } else { n });
    q *= pow_rational(&ten, exp - frac.len() as i64);
    Some(q)
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let t = s.trim();
    if let Some((a, b)) = t.split_once('/') {
        let n: BigInt = a.trim().parse().ok()?;
        let d: BigInt = b.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    parse_decimal(t)
}

impl FromStr for Scalar {
    type Err = ParseScalarError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseScalarError(s.to_string());
        let t = s.trim();
        if t == "unbounded" {
            return Ok(Scalar::Ball(Ball::unbounded(default_precision())));
        }
        if let Some((m, r)) = t.split_once('~') {
            let m = parse_rational(m).ok_or_else(err)?;
            let r = parse_rational(r).ok_or_else(err)?;
            if r.is_negative() {
                return Err(err());
            }
            return Ok(Scalar::Ball(Ball::from_bounds(&(&m - &r), &(&m + &r), default_precision())));
        }
        parse_rational(t).map(Scalar::Exact).ok_or_else(err)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

struct ScalarVisitor;

impl Visitor<'_> for ScalarVisitor {
    type Value = Scalar;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a decimal or p/q string, or an integer")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
        Ok(Scalar::from(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
        Ok(Scalar::from(BigInt::from(v)))
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ScalarVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Scalar {
        s.parse().unwrap()
    }

    #[test]
    fn bigint_shift_floors_negatives() {
        let m = BigInt::from(-5);
        assert_eq!(&m >> 1u32, BigInt::from(-3));
    }

    #[test]
    fn exact_arithmetic_is_exact() {
        let a = q("1/3");
        let b = q("0.25");
        assert_eq!(&a + &b, q("7/12"));
        assert_eq!(&a * &b, q("1/12"));
        assert_eq!(&a / &b, q("4/3"));
        assert_eq!(-&a, q("-1/3"));
    }

    #[test]
    fn decimal_round_trip() {
        for s in ["0.1", "-2.5", "3", "0.0001220703125", "1/3", "-22/7"] {
            assert_eq!(q(s).to_string(), s);
        }
        assert_eq!(q("1.5e-3").to_string(), "0.0015");
        assert_eq!(q("2E2").to_string(), "200");
    }

    #[test]
    fn bad_literals_rejected() {
        for s in ["", "abc", "1/0", "1.2.3", "--1", "e5"] {
            assert!(s.parse::<Scalar>().is_err(), "{s}");
        }
    }

    #[test]
    fn ball_encloses_third() {
        let t = q("1/3").to_ball(64);
        let (l, h) = t.bounds().unwrap();
        let third = BigRational::new(1.into(), 3.into());
        assert!(l < third && third < h);
        assert!(&h - &l < BigRational::new(1.into(), BigInt::one() << 60u32));
    }

    #[test]
    fn ball_comparisons_are_honest() {
        let a = q("1/3").to_ball(64);
        let b = q("1/3").to_ball(64);
        assert!(a.try_cmp(&b).is_err());
        assert_eq!(a.try_cmp(&q("0.34")), Ok(Ordering::Less));
        assert_eq!(a.lt(&q("0.3")), Ok(false));
        let exact_ball = q("0.5").to_ball(64);
        assert_eq!(exact_ball.try_cmp(&q("1/2")), Ok(Ordering::Equal));
    }

    #[test]
    fn ball_division_by_zero_is_unbounded() {
        let z = (&q("1/3").to_ball(32) - &q("1/3").to_ball(32)).abs();
        let r = &Scalar::one() / &z;
        assert!(matches!(&r, Scalar::Ball(b) if !b.is_bounded()));
        assert!(r.try_cmp(&Scalar::zero()).is_err());
        assert_eq!(r.to_string(), "unbounded");
    }

    #[test]
    fn ball_text_contains_value() {
        let t = q("1/7").to_ball(200);
        let back = q(&t.to_string());
        let (l, h) = back.bounds().unwrap();
        let seventh = BigRational::new(1.into(), 7.into());
        assert!(l <= seventh && seventh <= h);
    }

    #[test]
    fn floor_and_powers() {
        assert_eq!(q("7/2").floor().unwrap(), BigInt::from(3));
        assert_eq!(q("-1/2").floor().unwrap(), BigInt::from(-1));
        assert_eq!(q("2").powi(10), q("1024"));
        assert_eq!(q("2").powi(-2), q("0.25"));
        assert_eq!(Scalar::pow2(-3), q("0.125"));
    }

    #[test]
    fn modes_parse() {
        assert_eq!("rational".parse::<NumericMode>().unwrap(), NumericMode::Rational);
        assert_eq!("bigfloat:256".parse::<NumericMode>().unwrap(), NumericMode::BigFloat(256));
        assert!("float".parse::<NumericMode>().is_err());
    }

    #[test]
    fn min_max_of_balls_enclose() {
        let a = q("1/3").to_ball(64);
        let b = q("0.3");
        let m = a.min(&b);
        assert!(m.gt(&q("0.2999")).unwrap() && m.lt(&q("0.3001")).unwrap());
        assert!(a.max(&b).gt(&q("0.33")).unwrap());
    }

    #[test]
    fn huge_rational_to_f64() {
        let big = Scalar::pow2(-3000);
        assert_eq!(big.to_f64(), 0.0);
        let x = &Scalar::pow2(3000) / &Scalar::pow2(2999);
        assert_eq!(x.to_f64(), 2.0);
    }

    #[test]
    fn serde_as_strings() {
        let v = serde_json::to_string(&q("0.25")).unwrap();
        assert_eq!(v, "\"0.25\"");
        let back: Scalar = serde_json::from_str("\"1/3\"").unwrap();
        assert_eq!(back, q("1/3"));
        let int: Scalar = serde_json::from_str("7").unwrap();
        assert_eq!(int, q("7"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rat() -> impl Strategy<Value = BigRational> {
            (-10_000i64..10_000, 1i64..5_000)
                .prop_map(|(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
        }

        proptest! {
            #[test]
            fn ball_ops_enclose_exact(a in rat(), b in rat(), p in 24u32..200) {
                let (x, y) = (Scalar::Exact(a.clone()), Scalar::Exact(b.clone()));
                let (bx, by) = (x.to_ball(p), y.to_ball(p));
                let mut cases = vec![
                    (&bx + &by, &a + &b),
                    (&bx - &by, &a - &b),
                    (&bx * &by, &a * &b),
                ];
                if !b.is_zero() {
                    cases.push((&bx / &by, &a / &b));
                }
                for (ball, exact) in cases {
                    let (l, h) = ball.bounds().unwrap();
                    prop_assert!(l <= exact && exact <= h);
                }
            }

            #[test]
            fn exact_text_round_trips(a in rat()) {
                let s = Scalar::Exact(a.clone());
                prop_assert_eq!(s.to_string().parse::<Scalar>().unwrap(), s);
            }
        }
    }
}
