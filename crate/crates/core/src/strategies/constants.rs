use serde::{Deserialize, Serialize};

use super::blockade::{epsilon, rounds_for};
use crate::dynamics::{Assumption, MapSequence};
use crate::error::{Error, Result};
use crate::game::check_gamma;
use crate::scalar::Scalar;

/// Largest N tried when searching for the expansion depth.
pub const DEFAULT_N_CAP: usize = 512;
const STATE_CAP: usize = 100_000;
const S2_CAP: usize = 4096;

/// Constants for the finite-alphabet strategy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsA {
    pub gamma: Scalar,
    pub epsilon: Scalar,
    /// M = sup |T_n′|.
    pub sup_derivative: Scalar,
    pub c1: Scalar,
    pub c2: Scalar,
    pub n: usize,
    pub s1: usize,
    pub s2: usize,
    pub s: usize,
    /// ℓ: the shortest depth-N cylinder over every start phase.
    pub ell: Scalar,
    /// min_expansion(N) and the C₂Mγ^{−s} it has to beat.
    pub expansion: Scalar,
    pub threshold: Scalar,
    pub certified: bool,
}

/// Constants for the full-branch strategy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsB {
    pub gamma: Scalar,
    pub epsilon: Scalar,
    pub c1: Scalar,
    pub c2: Scalar,
    pub c3: Scalar,
    pub n: usize,
    pub s1: usize,
    pub s2: usize,
    pub s: usize,
    pub expansion: Scalar,
    pub threshold: Scalar,
    pub certified: bool,
}

/// Smallest k ≥ 1 with `ok(k)`.
fn first_k(mut ok: impl FnMut(usize) -> Result<bool>) -> Result<usize> {
    for k in 1..=S2_CAP {
        if ok(k)? {
            return Ok(k);
        }
    }
    Err(Error::CertificateTooWeak(format!("no admissible s₂ up to {S2_CAP}")))
}

/// s₂ for the finite-alphabet strategy: γ^{s₂}(2γ + C₁)C₂M < 1, and
/// γ^{s₂}C₂M(4γ + 2C₁γ²) ≤ 1 so later stages' intervals also fit the blockade.
fn s2_a(gamma: &Scalar, c1: &Scalar, c2: &Scalar, m: &Scalar) -> Result<usize> {
    let two = Scalar::from(2);
    let four = Scalar::from(4);
    let k = c2 * m;
    let first = &k * &(&(&two * gamma) + c1);
    let second = &k * &(&(&four * gamma) + &(&(&two * c1) * &(gamma * gamma)));
    first_k(|s2| {
        let g = gamma.powi(s2 as i64);
        Ok((&g * &first).lt(&Scalar::one())? && (&g * &second).le(&Scalar::one())?)
    })
}

/// s₂ for the full-branch strategy given s₁: γ^{2s₂−1} < (2C₁C₂γ^{s₁})^{−1}, and
/// C₁C₂γ^{s₂}(1 − γ^{s₁+s₂}) ≤ (1 − γ)/2 so the first stage's intervals fit.
fn s2_b(gamma: &Scalar, c1: &Scalar, c2: &Scalar, s1: usize) -> Result<usize> {
    let one = Scalar::one();
    let two = Scalar::from(2);
    let k = c1 * c2;
    let half_gap = &(&one - gamma) / &two;
    first_k(|s2| {
        let a = &(&two * &k) * &gamma.powi((s1 + 2 * s2 - 1) as i64);
        let b = &(&k * &gamma.powi(s2 as i64)) * &(&one - &gamma.powi((s1 + s2) as i64));
        Ok(a.lt(&one)? && b.le(&half_gap)?)
    })
}

fn require_c1(c1: &Scalar) -> Result<()> {
    if c1.signum()? == std::cmp::Ordering::Less {
        return Err(Error::InvalidTarget("negative Lipschitz constant".into()));
    }
    Ok(())
}

/// Certified constants for the finite-alphabet strategy: N is the least depth with
/// min_expansion(N) > C₂Mγ^{−s}, s = 2 + s₁ + s₂, s₁ = ⌊log_{1/ε}(N+1)⌋ + 1.
pub fn constants_a(seq: &MapSequence, c1: &Scalar, gamma: &Scalar, n_cap: usize) -> Result<ConstantsA> {
    check_gamma(gamma)?;
    require_c1(c1)?;
    if !seq.satisfies(Assumption::A) {
        return Err(Error::UnsupportedAssumption("finitely many branches required".into()));
    }
    let m = seq.sup_derivative().ok_or_else(|| Error::UnsupportedAssumption("unbounded derivative".into()))?;
    let c2 = seq.distortion_bound()?;
    let s2 = s2_a(gamma, c1, &c2, &m)?;
    let table = seq.min_expansion_table(n_cap);
    let base = &c2 * &m;
    for n in 1..=n_cap {
        let s1 = rounds_for(gamma, n + 1)?;
        let s = 2 + s1 + s2;
        let threshold = &base * &gamma.powi(-(s as i64));
        if table[n].gt(&threshold)? {
            let ell = seq.min_cylinder_length(n, STATE_CAP)?;
            return Ok(ConstantsA {
                gamma: gamma.clone(),
                epsilon: epsilon(gamma),
                sup_derivative: m,
                c1: c1.clone(),
                c2,
                n,
                s1,
                s2,
                s,
                ell,
                expansion: table[n].clone(),
                threshold,
                certified: true,
            });
        }
    }
    Err(Error::CertificateTooWeak(format!("no expansion depth N ≤ {n_cap}")))
}

/// Finite-alphabet constants with user-chosen N, s₁, s₂; nothing is certified.
pub fn constants_a_user(seq: &MapSequence, c1: &Scalar, gamma: &Scalar, n: usize, s1: usize, s2: usize) -> Result<ConstantsA> {
    check_gamma(gamma)?;
    require_c1(c1)?;
    if !seq.satisfies(Assumption::A) {
        return Err(Error::UnsupportedAssumption("finitely many branches required".into()));
    }
    if n == 0 || s1 == 0 || s2 == 0 {
        return Err(Error::Spec("N, s1 and s2 must be positive".into()));
    }
    let m = seq.sup_derivative().ok_or_else(|| Error::UnsupportedAssumption("unbounded derivative".into()))?;
    let c2 = seq.distortion_bound()?;
    let s = 2 + s1 + s2;
    let threshold = &(&c2 * &m) * &gamma.powi(-(s as i64));
    Ok(ConstantsA {
        gamma: gamma.clone(),
        epsilon: epsilon(gamma),
        sup_derivative: m,
        c1: c1.clone(),
        c2,
        n,
        s1,
        s2,
        s,
        ell: seq.min_cylinder_length(n, STATE_CAP)?,
        expansion: seq.min_expansion(n),
        threshold,
        certified: false,
    })
}

/// Certified constants for the full-branch strategy: N is the least depth with
/// min_expansion(N) > C₂³γ^{−s}, s = s₁ + s₂, s₁ = ⌊log_{1/ε}(2N)⌋ + 1.
pub fn constants_b(seq: &MapSequence, c1: &Scalar, gamma: &Scalar, n_cap: usize) -> Result<ConstantsB> {
    check_gamma(gamma)?;
    require_c1(c1)?;
    if !seq.satisfies(Assumption::B) {
        return Err(Error::UnsupportedAssumption("full branches required".into()));
    }
    let c2 = seq.distortion_bound()?;
    let c3 = &(&c2 * &c2) * &c2;
    let table = seq.min_expansion_table(n_cap);
    for n in 1..=n_cap {
        let s1 = rounds_for(gamma, 2 * n)?;
        let s2 = s2_b(gamma, c1, &c2, s1)?;
        let s = s1 + s2;
        let threshold = &c3 * &gamma.powi(-(s as i64));
        if table[n].gt(&threshold)? {
            return Ok(ConstantsB {
                gamma: gamma.clone(),
                epsilon: epsilon(gamma),
                c1: c1.clone(),
                c2,
                c3,
                n,
                s1,
                s2,
                s,
                expansion: table[n].clone(),
                threshold,
                certified: true,
            });
        }
    }
    Err(Error::CertificateTooWeak(format!("no expansion depth N ≤ {n_cap}")))
}

/// Full-branch constants with user-chosen N, s₁, s₂; nothing is certified.
pub fn constants_b_user(seq: &MapSequence, c1: &Scalar, gamma: &Scalar, n: usize, s1: usize, s2: usize) -> Result<ConstantsB> {
    check_gamma(gamma)?;
    require_c1(c1)?;
    if !seq.satisfies(Assumption::B) {
        return Err(Error::UnsupportedAssumption("full branches required".into()));
    }
    if n == 0 || s1 == 0 || s2 == 0 {
        return Err(Error::Spec("N, s1 and s2 must be positive".into()));
    }
    let c2 = seq.distortion_bound()?;
    let c3 = &(&c2 * &c2) * &c2;
    let s = s1 + s2;
    Ok(ConstantsB {
        gamma: gamma.clone(),
        epsilon: epsilon(gamma),
        c1: c1.clone(),
        threshold: &c3 * &gamma.powi(-(s as i64)),
        c2,
        c3,
        n,
        s1,
        s2,
        s,
        expansion: seq.min_expansion(n),
        certified: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PiecewiseMap;
    use crate::scalar::NumericMode;

    const R: NumericMode = NumericMode::Rational;

    fn s(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    fn doubling() -> MapSequence {
        MapSequence::single(PiecewiseMap::times(2, R).unwrap()).unwrap()
    }

    #[test]
    fn doubling_a_constants_satisfy_their_conditions() {
        let g = s("0.2");
        let c = constants_a(&doubling(), &s("1"), &g, DEFAULT_N_CAP).unwrap();
        assert_eq!(c.s2, 1);
        assert_eq!(c.s, 2 + c.s1 + c.s2);
        assert_eq!(c.s1, rounds_for(&g, c.n + 1).unwrap());
        // N is minimal.
        let prev_s = 2 + rounds_for(&g, c.n).unwrap() + c.s2;
        assert!(!doubling().min_expansion(c.n - 1).gt(&(&s("2") * &g.powi(-(prev_s as i64)))).unwrap());
        assert!(c.expansion.gt(&c.threshold).unwrap());
        assert_eq!(c.ell, Scalar::pow2(-(c.n as i64)));
        let lhs = &(&g.powi(c.s2 as i64) * &(&(&s("2") * &g) + &c.c1)) * &(&c.c2 * &c.sup_derivative);
        assert!(lhs.lt(&s("1")).unwrap());
    }

    #[test]
    fn doubling_b_constants() {
        let g = s("0.25");
        let c = constants_b(&doubling(), &s("1"), &g, DEFAULT_N_CAP).unwrap();
        assert_eq!(c.c3, s("1"));
        assert_eq!(c.s1, rounds_for(&g, 2 * c.n).unwrap());
        assert!(c.expansion.gt(&c.threshold).unwrap());
        // δ > 0 needs γ^{2s₂−1} < 1/(2C₁C₂γ^{s₁}).
        let lhs = &(&s("2") * &g.powi((c.s1 + 2 * c.s2 - 1) as i64)) * &c.c2;
        assert!(lhs.lt(&s("1")).unwrap());
    }

    #[test]
    fn assumptions_are_enforced() {
        let gauss = MapSequence::single(PiecewiseMap::gauss(R)).unwrap();
        assert!(matches!(
            constants_a(&gauss, &s("1"), &s("0.25"), 16),
            Err(Error::UnsupportedAssumption(_))
        ));
        let beta = MapSequence::single(PiecewiseMap::beta(&s("1.5"), R).unwrap()).unwrap();
        assert!(matches!(
            constants_b(&beta, &s("1"), &s("0.25"), 16),
            Err(Error::UnsupportedAssumption(_))
        ));
        assert!(matches!(constants_a(&doubling(), &s("1"), &s("0.4"), 16), Err(Error::InvalidGamma)));
    }

    #[test]
    fn small_cap_is_too_weak() {
        assert!(matches!(
            constants_a(&doubling(), &s("1"), &s("0.2"), 20),
            Err(Error::CertificateTooWeak(_))
        ));
    }
}
