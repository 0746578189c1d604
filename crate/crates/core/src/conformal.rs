//! 1-D iterated function systems of similarities: cut sets at a scale,
//! maximal separated subsystems and dimension lower bounds for them.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{rational_to_f64, Scalar};

/// Branch indices, 0-based.
pub type Word = Vec<usize>;

/// x ↦ ratio·x + offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarMap {
    pub ratio: Scalar,
    pub offset: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfsSpec {
    pub maps: Vec<SimilarMap>,
}

impl IfsSpec {
    pub fn from_json(text: &str) -> Result<IfsSpec> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A finite family of contracting similarities with positive ratios.
#[derive(Clone, Debug)]
pub struct Ifs1d {
    ratios: Vec<BigRational>,
    offsets: Vec<BigRational>,
    lo: BigRational,
    hi: BigRational,
}

fn exact(s: &Scalar, what: &str) -> Result<BigRational> {
    s.exact().cloned().ok_or_else(|| Error::InvalidMap(format!("{what} must be an exact number")))
}

impl Ifs1d {
    pub fn new(maps: Vec<(BigRational, BigRational)>) -> Result<Ifs1d> {
        if maps.len() < 2 {
            return Err(Error::InvalidMap("an IFS needs at least two maps".into()));
        }
        for (r, _) in &maps {
            if !r.is_positive() || *r >= BigRational::one() {
                return Err(Error::InvalidMap(format!("ratio {r} is not in (0,1)")));
            }
        }
        // The hull of the attractor spans the extreme fixed points when every ratio is positive.
        let fixed: Vec<BigRational> = maps.iter().map(|(r, o)| o / (BigRational::one() - r)).collect();
        let lo = fixed.iter().min().unwrap().clone();
        let hi = fixed.iter().max().unwrap().clone();
        if lo == hi {
            return Err(Error::InvalidMap("the attractor is a single point".into()));
        }
        let (ratios, offsets) = maps.into_iter().unzip();
        Ok(Ifs1d { ratios, offsets, lo, hi })
    }

    pub fn from_spec(spec: &IfsSpec) -> Result<Ifs1d> {
        let maps = spec
            .maps
            .iter()
            .map(|m| Ok((exact(&m.ratio, "ratio")?, exact(&m.offset, "offset")?)))
            .collect::<Result<Vec<_>>>()?;
        Ifs1d::new(maps)
    }

    /// The middle-third Cantor system {x/3, x/3 + 2/3}.
    pub fn cantor() -> Ifs1d {
        let third = BigRational::new(1.into(), 3.into());
        Ifs1d::new(vec![(third.clone(), BigRational::zero()), (third, BigRational::new(2.into(), 3.into()))])
            .unwrap()
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn ratios(&self) -> &[BigRational] {
        &self.ratios
    }

    /// Distortion constant; similarities have none.
    pub fn distortion(&self) -> BigRational {
        BigRational::one()
    }

    pub fn min_ratio(&self) -> &BigRational {
        self.ratios.iter().min().unwrap()
    }

    /// Convex hull of the attractor.
    pub fn hull(&self) -> (BigRational, BigRational) {
        (self.lo.clone(), self.hi.clone())
    }

    /// |K|.
    pub fn diameter(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn word_ratio(&self, word: &[usize]) -> BigRational {
        word.iter().fold(BigRational::one(), |acc, &i| acc * &self.ratios[i])
    }

    /// |K_I|, exact for similarities.
    pub fn piece_diameter(&self, word: &[usize]) -> BigRational {
        self.word_ratio(word) * self.diameter()
    }

    /// φ_I(hull), which contains K_I and shares its endpoints.
    pub fn piece(&self, word: &[usize]) -> (BigRational, BigRational) {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for &i in word.iter().rev() {
            lo = &lo * &self.ratios[i] + &self.offsets[i];
            hi = &hi * &self.ratios[i] + &self.offsets[i];
        }
        (lo, hi)
    }

    /// Λ_r: words with |K_I| < r ≤ |K_{I⁻}|, in lexicographic order.
    pub fn lambda_r(&self, r: &BigRational) -> Result<Vec<Word>> {
        let diam = self.diameter();
        if !r.is_positive() || *r > diam {
            return Err(Error::Precondition(format!("scale {r} must lie in (0, |K|]")));
        }
        let mut out = Vec::new();
        self.cut(&mut Vec::new(), diam, r, &mut out);
        Ok(out)
    }

    fn cut(&self, word: &mut Word, d: BigRational, r: &BigRational, out: &mut Vec<Word>) {
        for i in 0..self.len() {
            let child = &d * &self.ratios[i];
            word.push(i);
            if child < *r {
                out.push(word.clone());
            } else {
                self.cut(word, child, r, out);
            }
            word.pop();
        }
    }

    /// Greedy maximal pairwise-disjoint subfamily, scanning `words` in order.
    pub fn maximal_disjoint(&self, r: &BigRational, words: &[Word]) -> Subsystem {
        // Kept hulls sorted by left end; disjoint, so right ends are sorted too.
        let mut kept: Vec<(BigRational, BigRational, usize)> = Vec::new();
        for (idx, w) in words.iter().enumerate() {
            let (lo, hi) = self.piece(w);
            let at = kept.partition_point(|(l, _, _)| *l < lo);
            let clear_left = at == 0 || kept[at - 1].1 < lo;
            let clear_right = at == kept.len() || hi < kept[at].0;
            if clear_left && clear_right {
                kept.insert(at, (lo, hi, idx));
            }
        }
        let delta_sep = kept.windows(2).map(|p| &p[1].0 - &p[0].1).min();
        let mut order: Vec<usize> = kept.iter().map(|k| k.2).collect();
        order.sort_unstable();
        Subsystem {
            r: r.clone(),
            lambda: words.to_vec(),
            kept: order.into_iter().map(|i| words[i].clone()).collect(),
            delta_sep,
        }
    }

    /// Λ_r and its greedy disjoint subfamily.
    pub fn subsystem(&self, r: &BigRational) -> Result<Subsystem> {
        let words = self.lambda_r(r)?;
        Ok(self.maximal_disjoint(r, &words))
    }

    /// Exact check that `words` is the cut set at scale r: prefix-free, complete, and each word
    /// first drops below r.
    pub fn check_cut_set(&self, r: &BigRational, words: &[Word]) -> Result<()> {
        let m = BigInt::from(self.len());
        let mut total = BigRational::zero();
        for w in words {
            if w.is_empty() {
                return Err(Error::Invariant("the empty word is not in a cut set".into()));
            }
            if self.piece_diameter(w) >= *r {
                return Err(Error::Invariant(format!("piece {w:?} is not below the scale")));
            }
            if self.piece_diameter(&w[..w.len() - 1]) < *r {
                return Err(Error::Invariant(format!("parent of {w:?} is already below the scale")));
            }
            total += BigRational::new(BigInt::one(), num_traits::pow(m.clone(), w.len()));
        }
        let mut sorted: Vec<&Word> = words.iter().collect();
        sorted.sort();
        for p in sorted.windows(2) {
            if p[1].starts_with(p[0]) {
                return Err(Error::Invariant(format!("{:?} is a prefix of {:?}", p[0], p[1])));
            }
        }
        // Prefix-free words whose cylinder weights sum to one cover every infinite word.
        if !total.is_one() {
            return Err(Error::Invariant("the words do not cover the attractor".into()));
        }
        Ok(())
    }
}

/// Λ_r together with a maximal disjoint subfamily I_r.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    #[serde(with = "rational_text")]
    pub r: BigRational,
    pub lambda: Vec<Word>,
    pub kept: Vec<Word>,
    /// Smallest gap between kept pieces; None with fewer than two.
    #[serde(with = "opt_rational_text")]
    pub delta_sep: Option<BigRational>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionBound {
    pub pieces: usize,
    /// c₂·r/|K|, a lower bound on every kept piece's ratio.
    pub contraction: f64,
    /// log(#I_r) / log(1/(c₂·r/|K|)).
    pub count_bound: f64,
    /// Root of Σ ratio_I^t = 1 over the kept words.
    pub moran: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassCheck {
    pub samples: usize,
    pub exponent: f64,
    /// c₁ with depth-n pieces at least c₁·(c₂r)^n apart.
    pub c1: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

impl MassCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl Subsystem {
    /// c₂·r/|K|.
    fn contraction(&self, ifs: &Ifs1d) -> BigRational {
        let d = ifs.distortion();
        ifs.min_ratio() * &self.r / ifs.diameter() / (&d * &d)
    }

    pub fn dimension(&self, ifs: &Ifs1d) -> Result<DimensionBound> {
        if self.kept.is_empty() {
            return Err(Error::Precondition("empty subsystem".into()));
        }
        let c = self.contraction(ifs);
        let c_f = rational_to_f64(&c);
        let n = self.kept.len() as f64;
        let ratios: Vec<f64> = self.kept.iter().map(|w| rational_to_f64(&ifs.word_ratio(w))).collect();
        Ok(DimensionBound {
            pieces: self.kept.len(),
            contraction: c_f,
            count_bound: n.ln() / -ln_rational(&c),
            moran: moran_dimension(&ratios),
        })
    }

    /// Subsystem maps sorted by position, with their hulls.
    fn sorted_pieces(&self, ifs: &Ifs1d) -> Vec<Piece> {
        let mut v: Vec<Piece> = self
            .kept
            .iter()
            .map(|w| {
                let (lo, hi) = ifs.piece(w);
                let ratio = ifs.word_ratio(w);
                let offset = &lo - &ratio * &ifs.lo;
                Piece { lo, hi, ratio, offset }
            })
            .collect();
        v.sort_by(|a, b| a.lo.cmp(&b.lo));
        v
    }

    /// Hulls of all depth-n pieces of the subsystem attractor, sorted.
    pub fn pieces_at_depth(&self, ifs: &Ifs1d, n: usize) -> Vec<(BigRational, BigRational)> {
        let base = self.sorted_pieces(ifs);
        let mut level = vec![ifs.hull()];
        for _ in 0..n {
            let mut next = Vec::with_capacity(level.len() * base.len());
            for p in &base {
                for (lo, hi) in &level {
                    next.push((lo * &p.ratio + &p.offset, hi * &p.ratio + &p.offset));
                }
            }
            next.sort();
            level = next;
        }
        level
    }

    /// c₁ = δ_sep/(c₂r): depth-n pieces are then at least c₁(c₂r)^n apart.
    pub fn separation_constant(&self, ifs: &Ifs1d) -> Result<BigRational> {
        let gap = self
            .delta_sep
            .as_ref()
            .ok_or_else(|| Error::Precondition("subsystem has a single piece".into()))?;
        Ok(gap / self.contraction(ifs))
    }

    /// Samples intervals B and compares μ(B) for the uniform word measure on the subsystem
    /// attractor against (|B|/(c₁c₂r))^t, t the counting exponent.
    pub fn mass_distribution_check(&self, ifs: &Ifs1d, samples: usize, seed: u64) -> Result<MassCheck> {
        let t = self.dimension(ifs)?.count_bound;
        let c1 = self.separation_constant(ifs)?;
        let scale = rational_to_f64(&(&c1 * self.contraction(ifs)));
        let pieces = self.sorted_pieces(ifs);
        let diam = rational_to_f64(&ifs.diameter());
        let lo = rational_to_f64(&ifs.lo);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_ratio = 0f64;
        let mut violations = 0;
        for _ in 0..samples {
            let len = diam * 10f64.powf(-rng.gen_range(0.0..6.0));
            let centre = lo + diam * rng.gen::<f64>();
            let b0 = BigRational::from_float(centre - len / 2.0).unwrap();
            let b1 = BigRational::from_float(centre + len / 2.0).unwrap();
            let bound = (rational_to_f64(&(&b1 - &b0)) / scale).powf(t);
            let mu = upper_mass(&pieces, &b0, &b1, 1.0, bound * 1e-9);
            let ratio = mu / bound;
            max_ratio = max_ratio.max(ratio);
            if ratio > 1.0 {
                violations += 1;
            }
        }
        Ok(MassCheck { samples, exponent: t, c1: rational_to_f64(&c1), max_ratio, violations })
    }

    /// μ of [b0,b1] from above, with the same accuracy rule as the sampled check.
    pub fn mass(&self, ifs: &Ifs1d, b0: &BigRational, b1: &BigRational, tol: f64) -> f64 {
        upper_mass(&self.sorted_pieces(ifs), b0, b1, 1.0, tol)
    }
}

struct Piece {
    lo: BigRational,
    hi: BigRational,
    ratio: BigRational,
    offset: BigRational,
}

/// μ([b0,b1]) for a unit-mass copy of the attractor, counting unresolved pieces of mass
/// below `tol` as fully inside.
fn upper_mass(pieces: &[Piece], b0: &BigRational, b1: &BigRational, weight: f64, tol: f64) -> f64 {
    let child = weight / pieces.len() as f64;
    let first = pieces.partition_point(|p| p.hi < *b0);
    let last = pieces.partition_point(|p| p.lo <= *b1);
    let mut mass = 0.0;
    for p in &pieces[first..last.max(first)] {
        if *b0 <= p.lo && p.hi <= *b1 || child < tol {
            mass += child;
        } else {
            let u0 = (b0 - &p.offset) / &p.ratio;
            let u1 = (b1 - &p.offset) / &p.ratio;
            mass += upper_mass(pieces, &u0, &u1, child, tol);
        }
    }
    mass
}

fn ln_rational(q: &BigRational) -> f64 {
    // ln of numerator and denominator separately keeps tiny ratios finite.
    ln_bigint(q.numer()) - ln_bigint(q.denom())
}

fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap().ln();
    }
    let shift = bits - 60;
    (n >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Root of Σ rᵢ^t = 1 by bisection to 1e-12.
pub fn moran_dimension(ratios: &[f64]) -> f64 {
    let f = |t: f64| ratios.iter().map(|r| r.powf(t)).sum::<f64>() - 1.0;
    if ratios.len() < 2 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

mod rational_text {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Scalar;

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        Scalar::from(q.clone()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let v = Scalar::deserialize(d)?;
        v.exact().cloned().ok_or_else(|| serde::de::Error::custom("expected an exact number"))
    }
}

mod opt_rational_text {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Scalar;

    pub fn serialize<S: Serializer>(q: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
        q.clone().map(Scalar::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
        match Option::<Scalar>::deserialize(d)? {
            None => Ok(None),
            Some(v) => v.exact().cloned().map(Some).ok_or_else(|| serde::de::Error::custom("expected an exact number")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn pow3(k: u32) -> BigRational {
        q(1, 3i64.pow(k))
    }

    #[test]
    fn cantor_quarter_scale_is_the_four_words_of_length_two() {
        let c = Ifs1d::cantor();
        let words = c.lambda_r(&q(1, 4)).unwrap();
        assert_eq!(words, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        c.check_cut_set(&q(1, 4), &words).unwrap();
        assert_eq!(c.piece(&[1, 0]), (q(2, 3), q(7, 9)));
    }

    #[test]
    fn scale_just_below_the_diameter_gives_first_level() {
        let c = Ifs1d::cantor();
        let words = c.lambda_r(&q(999, 1000)).unwrap();
        assert_eq!(words, vec![vec![0], vec![1]]);
        assert!(c.lambda_r(&q(0, 1)).is_err());
        assert!(c.lambda_r(&q(3, 2)).is_err());
    }

    #[test]
    fn unequal_ratios_give_a_mixed_cut() {
        // Ratios 1/2 and 1/4 on [0,1]: words with product below 1/5.
        let ifs = Ifs1d::new(vec![(q(1, 2), q(0, 1)), (q(1, 4), q(3, 4))]).unwrap();
        assert_eq!(ifs.diameter(), q(1, 1));
        let words = ifs.lambda_r(&q(1, 5)).unwrap();
        // Tree walk by hand: 0→1/2 splits to 00 (1/4, splits) and 01 (1/8); 1→1/4 splits to 10, 11.
        assert_eq!(words, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1], vec![1, 0], vec![1, 1]]);
        ifs.check_cut_set(&q(1, 5), &words).unwrap();
    }

    #[test]
    fn cut_set_check_rejects_bad_families() {
        let c = Ifs1d::cantor();
        let r = q(1, 4);
        assert!(c.check_cut_set(&r, &[vec![0, 0], vec![0, 1], vec![1, 0]]).is_err());
        assert!(c.check_cut_set(&r, &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![1, 1]]).is_err());
        assert!(c.check_cut_set(&r, &[vec![0], vec![1]]).is_err());
    }

    #[test]
    fn cantor_pieces_are_all_kept() {
        let c = Ifs1d::cantor();
        let sub = c.subsystem(&q(1, 4)).unwrap();
        assert_eq!(sub.kept, sub.lambda);
        assert_eq!(sub.delta_sep, Some(q(1, 9)));
    }

    #[test]
    fn overlapping_system_keeps_a_strict_subfamily() {
        let ifs = Ifs1d::new(vec![(q(1, 2), q(0, 1)), (q(1, 2), q(1, 4))]).unwrap();
        assert_eq!(ifs.hull(), (q(0, 1), q(1, 2)));
        let r = q(1, 40);
        let sub = ifs.subsystem(&r).unwrap();
        // Independent greedy in floating point; all endpoints are dyadic so f64 is exact here.
        let mut kept: Vec<(f64, f64)> = Vec::new();
        let mut expect = Vec::new();
        for w in &sub.lambda {
            let (mut lo, mut hi) = (0.0f64, 0.5f64);
            for &i in w.iter().rev() {
                let o = if i == 0 { 0.0 } else { 0.25 };
                lo = lo / 2.0 + o;
                hi = hi / 2.0 + o;
            }
            if kept.iter().all(|&(a, b)| hi < a || b < lo) {
                kept.push((lo, hi));
                expect.push(w.clone());
            }
        }
        assert_eq!(sub.kept, expect);
        assert!(sub.kept.len() < sub.lambda.len());
        assert!(sub.delta_sep.unwrap().is_positive());
    }

    #[test]
    fn single_word_input_is_kept() {
        let c = Ifs1d::cantor();
        let sub = c.maximal_disjoint(&q(1, 4), &[vec![1, 0]]);
        assert_eq!(sub.kept, vec![vec![1, 0]]);
        assert_eq!(sub.delta_sep, None);
        assert!(sub.separation_constant(&c).is_err());
    }

    #[test]
    fn moran_roots() {
        let t = moran_dimension(&[1.0 / 3.0, 1.0 / 3.0]);
        assert!((t - 2f64.ln() / 3f64.ln()).abs() < 1e-11);
        for (m, r) in [(3usize, 0.2f64), (5, 0.1), (4, 0.25)] {
            let t = moran_dimension(&vec![r; m]);
            assert!((t - (m as f64).ln() / (1.0 / r).ln()).abs() < 1e-11);
        }
    }

    #[test]
    fn cantor_dimension_bound() {
        let c = Ifs1d::cantor();
        let sub = c.subsystem(&pow3(8)).unwrap();
        assert_eq!(sub.kept.len(), 512);
        let dim = sub.dimension(&c).unwrap();
        let s = 2f64.ln() / 3f64.ln();
        assert!(dim.count_bound >= s - 0.05);
        assert!((dim.moran - s).abs() < 1e-11);
    }

    #[test]
    fn depth_pieces_respect_the_separation_constant() {
        let c = Ifs1d::cantor();
        let sub = c.subsystem(&q(1, 4)).unwrap();
        let c1 = sub.separation_constant(&c).unwrap();
        let step = sub.contraction(&c);
        for n in 1..=3u32 {
            let pieces = sub.pieces_at_depth(&c, n as usize);
            assert_eq!(pieces.len(), 4usize.pow(n));
            let need = &c1 * num_traits::pow(step.clone(), n as usize);
            for i in 0..pieces.len() {
                for j in 0..i {
                    let gap = (&pieces[i].0 - &pieces[j].1).max(&pieces[j].0 - &pieces[i].1);
                    assert!(gap >= need);
                }
            }
        }
    }

    #[test]
    fn mass_of_whole_hull_and_of_a_gap() {
        let c = Ifs1d::cantor();
        let sub = c.subsystem(&q(1, 4)).unwrap();
        assert_eq!(sub.mass(&c, &q(0, 1), &q(1, 1), 1e-12), 1.0);
        assert_eq!(sub.mass(&c, &q(4, 10), &q(6, 10), 1e-12), 0.0);
        assert_eq!(sub.mass(&c, &q(0, 1), &q(1, 2), 1e-12), 0.5);
        let check = sub.mass_distribution_check(&c, 2000, 7).unwrap();
        assert!(check.passed(), "{check:?}");
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"maps":[{"ratio":"1/3","offset":"0"},{"ratio":"1/3","offset":"2/3"}]}"#;
        let spec = IfsSpec::from_json(text).unwrap();
        let ifs = Ifs1d::from_spec(&spec).unwrap();
        assert_eq!(ifs.hull(), (q(0, 1), q(1, 1)));
        assert!(IfsSpec::from_json(r#"{"maps":[{"ratio":"2","offset":"0"},{"ratio":"1/3","offset":"1"}]}"#)
            .and_then(|s| Ifs1d::from_spec(&s))
            .is_err());
        let sub = ifs.subsystem(&q(1, 4)).unwrap();
        let back: Subsystem = serde_json::from_str(&serde_json::to_string(&sub).unwrap()).unwrap();
        assert_eq!(back, sub);
    }
}
