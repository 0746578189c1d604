use num_rational::BigRational;
use num_traits::Zero;

use crate::error::Result;
use crate::scalar::Scalar;

/// x -> (a x + b) / (c x + d). Every built-in branch and every composition of
/// branches is of this form, so compositions stay exact in rational mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mobius {
    pub a: Scalar,
    pub b: Scalar,
    pub c: Scalar,
    pub d: Scalar,
}

impl Mobius {
    pub fn identity() -> Mobius {
        Mobius::affine(Scalar::one(), Scalar::zero())
    }

    pub fn affine(slope: Scalar, intercept: Scalar) -> Mobius {
        Mobius { a: slope, b: intercept, c: Scalar::zero(), d: Scalar::one() }
    }

    pub fn new(a: Scalar, b: Scalar, c: Scalar, d: Scalar) -> Mobius {
        Mobius { a, b, c, d }.normalized()
    }

    pub fn is_affine(&self) -> bool {
        self.c.is_zero()
    }

    fn normalized(self) -> Mobius {
        if self.c.is_zero() && self.d != Scalar::one() && self.d.is_exact() && !self.d.is_zero() {
            let d = self.d.clone();
            return Mobius { a: &self.a / &d, b: &self.b / &d, c: Scalar::zero(), d: Scalar::one() };
        }
        self
    }

    pub fn det(&self) -> Scalar {
        &(&self.a * &self.d) - &(&self.b * &self.c)
    }

    pub fn apply(&self, x: &Scalar) -> Scalar {
        if let Some(y) = self.apply_integral(x) {
            return y;
        }
        let num = &(&self.a * x) + &self.b;
        if self.is_affine() && self.d == Scalar::one() {
            return num;
        }
        &num / &(&(&self.c * x) + &self.d)
    }

    /// Integer entries and a rational point: one reduction instead of four.
    fn apply_integral(&self, x: &Scalar) -> Option<Scalar> {
        let q = x.exact()?;
        let ints = [&self.a, &self.b, &self.c, &self.d].map(|e| e.exact().filter(|r| r.is_integer()).map(|r| r.numer()));
        let [Some(a), Some(b), Some(c), Some(d)] = ints else { return None };
        let (p, q) = (q.numer(), q.denom());
        let num = a * p + b * q;
        let den = c * p + d * q;
        if den.is_zero() {
            return None;
        }
        Some(Scalar::Exact(BigRational::new(num, den)))
    }

    pub fn derivative(&self, x: &Scalar) -> Scalar {
        if self.is_affine() && self.d == Scalar::one() {
            return self.a.clone();
        }
        let den = &(&self.c * x) + &self.d;
        &self.det() / &(&den * &den)
    }

    /// |derivative| at both ends of [x0, x1], ordered (inf, sup). The modulus of
    /// a Möbius derivative is monotone on any interval free of the pole.
    pub fn abs_derivative_range(&self, x0: &Scalar, x1: &Scalar) -> (Scalar, Scalar) {
        let u = self.derivative(x0).abs();
        let v = self.derivative(x1).abs();
        (u.min(&v), u.max(&v))
    }

    pub fn inverse(&self) -> Mobius {
        Mobius::new(self.d.clone(), -&self.b, -&self.c, self.a.clone())
    }

    /// self ∘ inner.
    pub fn compose(&self, inner: &Mobius) -> Mobius {
        Mobius::new(
            &(&self.a * &inner.a) + &(&self.b * &inner.c),
            &(&self.a * &inner.b) + &(&self.b * &inner.d),
            &(&self.c * &inner.a) + &(&self.d * &inner.c),
            &(&self.c * &inner.b) + &(&self.d * &inner.d),
        )
    }

    pub fn increasing(&self) -> Result<bool> {
        Ok(self.det().gt(&Scalar::zero())?)
    }

    /// Image of the interval [x0, x1] as an ordered pair.
    pub fn image(&self, x0: &Scalar, x1: &Scalar) -> Result<(Scalar, Scalar)> {
        let (y0, y1) = (self.apply(x0), self.apply(x1));
        Ok(if self.increasing()? { (y0, y1) } else { (y1, y0) })
    }
}
