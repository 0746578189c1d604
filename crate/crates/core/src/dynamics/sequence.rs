use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use super::map::{PiecewiseMap, SymbolSet};
use super::mobius::Mobius;
use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::scalar::{rational_to_f64, NumericMode, Scalar};

const CERTIFICATE_SEARCH: usize = 16;
const DISTORTION_TERMS: usize = 64;

/// Uniform expansion certificate: |(T_{i,N₀})′| > η on every depth-N₀ cylinder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub n0: usize,
    pub eta: Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Assumption {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
}

/// A non-autonomous sequence T_1, T_2, ... given as an eventually periodic
/// schedule over finitely many distinct maps.
#[derive(Clone, Debug)]
pub struct MapSequence {
    maps: Vec<Arc<PiecewiseMap>>,
    prefix: Vec<usize>,
    cycle: Vec<usize>,
    certificate: Certificate,
}

/// A word and its cylinder interval, both relative to a start time.
#[derive(Clone, Debug)]
pub struct Cylinder {
    pub start: usize,
    pub word: Vec<i64>,
    /// None when the cylinder is empty.
    pub interval: Option<Interval>,
}

impl MapSequence {
    pub fn new(maps: Vec<PiecewiseMap>, prefix: Vec<usize>, cycle: Vec<usize>) -> Result<MapSequence> {
        if maps.is_empty() || cycle.is_empty() {
            return Err(Error::InvalidMap("a sequence needs at least one map and a nonempty cycle".into()));
        }
        if let Some(bad) = prefix.iter().chain(&cycle).find(|&&i| i >= maps.len()) {
            return Err(Error::InvalidMap(format!("schedule index {bad} out of range")));
        }
        let mode = maps[0].mode();
        if maps.iter().any(|m| m.mode() != mode) {
            return Err(Error::InvalidMap("maps use different numeric modes".into()));
        }
        let mut seq = MapSequence {
            maps: maps.into_iter().map(Arc::new).collect(),
            prefix,
            cycle,
            certificate: Certificate { n0: 0, eta: Scalar::one() },
        };
        seq.certificate = seq.find_certificate()?;
        Ok(seq)
    }

    pub fn single(map: PiecewiseMap) -> Result<MapSequence> {
        MapSequence::new(vec![map], vec![], vec![0])
    }

    fn find_certificate(&self) -> Result<Certificate> {
        for n0 in 1..=CERTIFICATE_SEARCH {
            let m = self.min_expansion(n0);
            if m.gt(&Scalar::one())? {
                let eta = &(&Scalar::one() + &m) / &Scalar::from(2);
                return Ok(Certificate { n0, eta });
            }
        }
        Err(Error::InsufficientCertificate(format!(
            "no uniform expansion found up to depth {CERTIFICATE_SEARCH}"
        )))
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn mode(&self) -> NumericMode {
        self.maps[0].mode()
    }

    /// T_n, 1-based.
    pub fn at(&self, n: usize) -> &PiecewiseMap {
        &self.maps[self.index_at(n)]
    }

    /// Which distinct map T_n is.
    fn index_at(&self, n: usize) -> usize {
        assert!(n >= 1, "map times are 1-based");
        let k = n - 1;
        if k < self.prefix.len() {
            self.prefix[k]
        } else {
            self.cycle[(k - self.prefix.len()) % self.cycle.len()]
        }
    }

    pub fn distinct_maps(&self) -> &[Arc<PiecewiseMap>] {
        &self.maps
    }

    /// Number of start times that represent every distinct tail of the schedule.
    pub fn phases(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }

    pub fn label(&self) -> String {
        if self.maps.len() == 1 {
            self.maps[0].label.clone()
        } else {
            let names: Vec<_> = self.maps.iter().map(|m| m.label.as_str()).collect();
            format!("sequence[{}]", names.join(","))
        }
    }

    pub fn satisfies(&self, a: Assumption) -> bool {
        match a {
            Assumption::A => self.maps.iter().all(|m| m.is_finite()),
            Assumption::B => self.maps.iter().all(|m| m.is_full_branch()),
        }
    }

    pub fn all_affine(&self) -> bool {
        self.maps.iter().all(|m| m.all_affine())
    }

    /// M = sup |T_n′| over all n; None for infinite alphabets.
    pub fn sup_derivative(&self) -> Option<Scalar> {
        let mut out: Option<Scalar> = None;
        for m in &self.maps {
            let s = m.sup_derivative()?;
            out = Some(match out {
                Some(o) => o.max(&s),
                None => s,
            });
        }
        out
    }

    /// Certified lower bound for |(T_{start,n})′| on depth-n cylinders.
    pub fn min_expansion_from(&self, start: usize, n: usize) -> Scalar {
        let mut acc = Scalar::one();
        let mut gauss_run = 0usize;
        for j in 0..n {
            let map = self.at(start + j);
            if map.is_gauss() {
                gauss_run += 1;
                continue;
            }
            if gauss_run > 0 {
                acc = &acc * &fib_square(gauss_run + 1);
                gauss_run = 0;
            }
            acc = &acc * &map.inf_derivative();
        }
        if gauss_run > 0 {
            acc = &acc * &fib_square(gauss_run + 1);
        }
        acc
    }

    /// Minimum of `min_expansion_from` over every start time.
    pub fn min_expansion(&self, n: usize) -> Scalar {
        (1..=self.phases())
            .map(|i| self.min_expansion_from(i, n))
            .reduce(|a, b| a.min(&b))
            .unwrap()
    }

    /// Distortion constant C₂: 1 for affine sequences, otherwise exp(K·S) with
    /// K the inverse-branch nonlinearity and S bounding Σ_j sup|T_{i,j} cylinder image scale|.
    pub fn distortion_bound(&self) -> Result<Scalar> {
        if self.all_affine() {
            return Ok(Scalar::one());
        }
        let k = self
            .maps
            .iter()
            .map(|m| m.nonlinearity())
            .reduce(|a, b| a.max(&b))
            .unwrap();
        let upper = |s: &Scalar| -> Result<f64> {
            let (_, hi) = s
                .bounds()
                .ok_or_else(|| Error::InsufficientCertificate("unbounded constant".into()))?;
            Ok(rational_to_f64(&hi) * (1.0 + 1e-12))
        };
        let lower = |s: &Scalar| -> Result<f64> {
            let (lo, _) = s
                .bounds()
                .ok_or_else(|| Error::InsufficientCertificate("unbounded constant".into()))?;
            Ok(rational_to_f64(&lo) * (1.0 - 1e-12))
        };
        let mut sum = 0.0f64;
        for j in 0..DISTORTION_TERMS {
            sum += 1.0 / lower(&self.min_expansion(j))?;
        }
        let cert = &self.certificate;
        let eta = lower(&cert.eta)?;
        if eta <= 1.0 {
            return Err(Error::InsufficientCertificate("expansion rate too close to 1".into()));
        }
        sum += cert.n0 as f64 * eta / ((eta - 1.0) * lower(&self.min_expansion(DISTORTION_TERMS))?);
        let c2 = (upper(&k)? * sum * (1.0 + 1e-9)).exp() * (1.0 + 1e-9);
        if !c2.is_finite() {
            return Err(Error::InsufficientCertificate("distortion constant overflows".into()));
        }
        // Round up to a 1e-6 grid so the constant has a short exact form.
        let micro = (c2 * 1e6).ceil() as i64 + 1;
        Ok(Scalar::Exact(BigRational::new(BigInt::from(micro), BigInt::from(1_000_000))))
    }

    /// I_u(start, |u|) by inverse-branch pullback, innermost domain first.
    pub fn cylinder(&self, start: usize, word: &[i64]) -> Result<Cylinder> {
        let mut lo = Scalar::zero();
        let mut hi = Scalar::one();
        for (j, &u) in word.iter().enumerate().rev() {
            let branch = self.at(start + j).branch(u, start + j)?;
            match branch.pull_interval(&lo, &hi)? {
                Some((a, b)) => {
                    lo = a;
                    hi = b;
                }
                None => return Ok(Cylinder { start, word: word.to_vec(), interval: None }),
            }
        }
        Ok(Cylinder { start, word: word.to_vec(), interval: Some(Interval::open(lo, hi)?) })
    }

    /// Orbit values T_{start,1}(x), ..., T_{start,len}(x) together with the itinerary.
    pub fn orbit(&self, start: usize, x: &Scalar, len: usize) -> Result<(Vec<Scalar>, Vec<i64>)> {
        let mut values = Vec::with_capacity(len);
        let mut word = Vec::with_capacity(len);
        let mut y = x.clone();
        for j in 0..len {
            let branch = self
                .at(start + j)
                .locate(&y)?
                .ok_or(Error::BoundaryOrbit { step: j + 1 })?;
            y = branch.apply(&y);
            word.push(branch.symbol);
            values.push(y.clone());
        }
        Ok((values, word))
    }

    pub fn compose_apply(&self, start: usize, len: usize, x: &Scalar) -> Result<Scalar> {
        let (values, _) = self.orbit(start, x, len)?;
        Ok(values.last().cloned().unwrap_or_else(|| x.clone()))
    }

    /// Product of branch derivatives along the orbit.
    pub fn compose_derivative(&self, start: usize, len: usize, x: &Scalar) -> Result<Scalar> {
        let mut y = x.clone();
        let mut acc = Scalar::one();
        for j in 0..len {
            let branch = self
                .at(start + j)
                .locate(&y)?
                .ok_or(Error::BoundaryOrbit { step: j + 1 })?;
            acc = &acc * &branch.derivative(&y);
            y = branch.apply(&y);
        }
        Ok(acc)
    }

    /// |I_u|·|(T_{start,|u|})′(x)|, for full-branch sequences only.
    pub fn diameter_derivative_check(&self, start: usize, word: &[i64], x: &Scalar) -> Result<Scalar> {
        if !self.satisfies(Assumption::B) {
            return Err(Error::UnsupportedAssumption("full branches required".into()));
        }
        let cyl = self.cylinder(start, word)?;
        let iv = cyl
            .interval
            .ok_or_else(|| Error::Precondition("empty cylinder".into()))?;
        if !iv.contains(x)? {
            return Err(Error::Precondition(format!("{x} is not inside the cylinder")));
        }
        let d = self.compose_derivative(start, word.len(), x)?;
        Ok(&iv.length() * &d.abs())
    }

    /// Chain for the empty word at `start`.
    pub fn root(&self, start: usize) -> Chain {
        Chain {
            start,
            word: vec![],
            inverse: Mobius::identity(),
            img: (Scalar::zero(), Scalar::one()),
        }
    }

    /// Chains of the cylinders whose closures contain [x0, x1], for depths
    /// 0, 1, ..., r with r ≤ `depth`. When r < `depth` the interval meets a
    /// depth-(r+1) cylinder endpoint.
    pub fn descend(&self, start: usize, x0: &Scalar, x1: &Scalar, depth: usize) -> Result<Vec<Chain>> {
        let mut path = vec![self.root(start)];
        let (mut y0, mut y1) = (x0.clone(), x1.clone());
        for j in 0..depth {
            let time = start + j;
            let map = self.at(time);
            let sym = match map.symbols_meeting(&y0, &y1)? {
                SymbolSet::Finite(v) if v.len() == 1 => v[0],
                SymbolSet::Range { from, to: Some(to) } if from == to => from,
                _ => break,
            };
            let branch = map.branch(sym, time)?;
            let (a, b) = if y0 == y1 {
                let z = branch.apply(&y0);
                (z.clone(), z)
            } else {
                let Some(ab) = branch.push_interval(&y0, &y1)? else { break };
                ab
            };
            let Some(next) = path.last().unwrap().extend(self, sym)? else { break };
            path.push(next);
            y0 = a;
            y1 = b;
        }
        Ok(path)
    }

    /// Endpoints of nonempty depth-`depth` cylinders lying in the closed interval [x0, x1].
    pub fn endpoints_in(&self, start: usize, x0: &Scalar, x1: &Scalar, depth: usize, cap: usize) -> Result<Vec<Scalar>> {
        let mut out: Vec<Scalar> = vec![];
        let push = |p: Scalar, out: &mut Vec<Scalar>| -> Result<()> {
            if !out.contains(&p) {
                out.push(p);
            }
            if out.len() > cap {
                return Err(Error::Precondition(format!("more than {cap} cylinder endpoints")));
            }
            Ok(())
        };
        // The ends themselves: an end is a cylinder endpoint exactly when its orbit
        // hits a branch boundary (or leaves the domain) within `depth` steps.
        for x in [x0, x1] {
            match self.orbit(start, x, depth) {
                Ok(_) => {}
                Err(Error::BoundaryOrbit { .. }) | Err(Error::OutsideDomain(_)) => push(x.clone(), &mut out)?,
                Err(e) => return Err(e),
            }
        }
        let mut stack = vec![(self.root(start), x0.clone(), x1.clone())];
        let mut visited = 0usize;
        while let Some((chain, y0, y1)) = stack.pop() {
            visited += 1;
            if visited > cap * 64 + 1024 {
                return Err(Error::Precondition("cylinder endpoint search too large".into()));
            }
            let j = chain.depth();
            if j == depth || !y0.lt(&y1)? {
                continue;
            }
            let time = start + j;
            let map = self.at(time);
            for b in map.boundaries_in(&y0, &y1, cap)? {
                if b.gt(&y0)? && b.lt(&y1)? {
                    push(chain.inverse.apply(&b), &mut out)?;
                }
            }
            for sym in map.symbols_meeting(&y0, &y1)?.list(i64::MAX / 4) {
                let branch = map.branch(sym, time)?;
                if let Some((a, b)) = branch.push_interval(&y0, &y1)? {
                    if let Some(next) = chain.extend(self, sym)? {
                        stack.push((next, a, b));
                    }
                }
            }
        }
        Ok(out)
    }

    /// `min_expansion(n)` for n = 0, ..., `max_n`, computed incrementally.
    pub fn min_expansion_table(&self, max_n: usize) -> Vec<Scalar> {
        let phases = self.phases();
        // Per start phase: product over closed factors and the length of the open Gauss run.
        let mut acc = vec![Scalar::one(); phases];
        let mut run = vec![0usize; phases];
        let mut fib = vec![Scalar::one(), Scalar::one()];
        let mut out = Vec::with_capacity(max_n + 1);
        for n in 0..=max_n {
            if n > 0 {
                for i in 0..phases {
                    let map = self.at(i + n);
                    if map.is_gauss() {
                        run[i] += 1;
                    } else {
                        if run[i] > 0 {
                            acc[i] = &acc[i] * &fib_square(run[i] + 1);
                            run[i] = 0;
                        }
                        acc[i] = &acc[i] * &map.inf_derivative();
                    }
                }
            }
            let mut best: Option<Scalar> = None;
            for i in 0..phases {
                let v = if run[i] > 0 {
                    while fib.len() <= run[i] + 1 {
                        fib.push(fib_square(fib.len()));
                    }
                    &acc[i] * &fib[run[i] + 1]
                } else {
                    acc[i].clone()
                };
                best = Some(match best {
                    Some(b) => b.min(&v),
                    None => v,
                });
            }
            out.push(best.unwrap());
        }
        out
    }

    /// Shortest nonempty depth-`depth` cylinder over every start phase.
    ///
    /// Affine sequences use a dynamic program over cylinder images: an affine
    /// cylinder's length is its image length over the slope product, so only the
    /// largest product per image matters. Other sequences enumerate cylinders.
    pub fn min_cylinder_length(&self, depth: usize, cap: usize) -> Result<Scalar> {
        let mut best: Option<Scalar> = None;
        let mut keep = |v: Scalar| {
            best = Some(match best.take() {
                Some(b) => b.min(&v),
                None => v,
            });
        };
        for start in 1..=self.phases() {
            if self.all_affine() {
                // Distinct images, and per (map, image) the successor images with slopes.
                let mut images: Vec<(Scalar, Scalar)> = vec![(Scalar::zero(), Scalar::one())];
                let mut succ: HashMap<(usize, usize), Vec<(usize, Scalar)>> = HashMap::new();
                let mut states: Vec<(usize, Scalar)> = vec![(0, Scalar::one())];
                for j in 0..depth {
                    let time = start + j;
                    let key_map = self.index_at(time);
                    let map = self.at(time);
                    let mut next: Vec<(usize, Scalar)> = vec![];
                    for (img, prod) in &states {
                        if !succ.contains_key(&(key_map, *img)) {
                            let (y0, y1) = images[*img].clone();
                            let mut out = vec![];
                            for sym in map.symbols_meeting(&y0, &y1)?.list(cap as i64) {
                                let branch = map.branch(sym, time)?;
                                let Some(im) = branch.push_interval(&y0, &y1)? else { continue };
                                let idx = match images.iter().position(|i| *i == im) {
                                    Some(i) => i,
                                    None => {
                                        images.push(im);
                                        images.len() - 1
                                    }
                                };
                                out.push((idx, branch.deriv_inf.clone()));
                            }
                            succ.insert((key_map, *img), out);
                        }
                        for (idx, d) in &succ[&(key_map, *img)] {
                            let p = prod * d;
                            match next.iter_mut().find(|(i, _)| i == idx) {
                                Some((_, q)) => *q = q.max(&p),
                                None => next.push((*idx, p)),
                            }
                        }
                    }
                    if next.len() > cap || images.len() > cap {
                        return Err(Error::CertificateTooWeak(format!(
                            "more than {cap} distinct cylinder images at depth {}",
                            j + 1
                        )));
                    }
                    states = next;
                }
                for (img, prod) in states {
                    let (y0, y1) = &images[img];
                    keep(&(y1 - y0) / &prod);
                }
            } else {
                let mut stack = vec![self.root(start)];
                let mut seen = 0usize;
                while let Some(chain) = stack.pop() {
                    if chain.depth() == depth {
                        keep(chain.length()?);
                        continue;
                    }
                    seen += 1;
                    if seen > cap {
                        return Err(Error::CertificateTooWeak(format!("more than {cap} cylinders to enumerate")));
                    }
                    let time = start + chain.depth();
                    let syms = self.at(time).symbols_meeting(&chain.img.0, &chain.img.1)?;
                    if !matches!(syms, SymbolSet::Finite(_)) {
                        return Err(Error::UnsupportedAssumption("finitely many branches required".into()));
                    }
                    for sym in syms.list(cap as i64) {
                        if let Some(next) = chain.extend(self, sym)? {
                            stack.push(next);
                        }
                    }
                }
            }
        }
        best.ok_or_else(|| Error::Invariant("no nonempty cylinder".into()))
    }
}

/// Cylinder I_u(start, |u|) carried as the inverse composite Ψ_u = T_{start,|u|}^{-1}
/// on the image T_{start,|u|}(I_u).
#[derive(Clone, Debug)]
pub struct Chain {
    pub start: usize,
    pub word: Vec<i64>,
    pub inverse: Mobius,
    /// Open image interval T_{start,|u|}(I_u), ordered.
    pub img: (Scalar, Scalar),
}

impl Chain {
    pub fn depth(&self) -> usize {
        self.word.len()
    }

    /// Append one symbol; None when the longer cylinder is empty.
    pub fn extend(&self, seq: &MapSequence, symbol: i64) -> Result<Option<Chain>> {
        let time = self.start + self.depth();
        let branch = seq.at(time).branch(symbol, time)?;
        let Some(img) = branch.push_interval(&self.img.0, &self.img.1)? else {
            return Ok(None);
        };
        let mut word = self.word.clone();
        word.push(symbol);
        Ok(Some(Chain {
            start: self.start,
            word,
            inverse: self.inverse.compose(&branch.inverse),
            img,
        }))
    }

    /// The cylinder interval, ordered.
    pub fn interval(&self) -> Result<(Scalar, Scalar)> {
        self.inverse.image(&self.img.0, &self.img.1)
    }

    pub fn length(&self) -> Result<Scalar> {
        let (a, b) = self.interval()?;
        Ok(&b - &a)
    }

    /// T_{start,|u|} restricted to the cylinder.
    pub fn forward(&self) -> Mobius {
        self.inverse.inverse()
    }

    /// Image of [x0, x1] ∩ closure(I_u) under T_{start,|u|}; None if they miss.
    pub fn push(&self, x0: &Scalar, x1: &Scalar) -> Result<Option<(Scalar, Scalar)>> {
        let (c0, c1) = self.interval()?;
        let a = if x0.le(&c0)? { c0.clone() } else { x0.clone() };
        let b = if x1.ge(&c1)? { c1.clone() } else { x1.clone() };
        if !a.le(&b)? {
            return Ok(None);
        }
        let f = self.forward();
        let at = |x: &Scalar, c: &Scalar, edge: bool| -> Result<Scalar> {
            // Cylinder ends map exactly onto image ends.
            if x == c {
                let inc = f.increasing()?;
                return Ok(if edge == inc { self.img.0.clone() } else { self.img.1.clone() });
            }
            Ok(f.apply(x))
        };
        let fa = at(&a, &c0, true)?;
        let fb = at(&b, &c1, false)?;
        Ok(Some(if fa.le(&fb)? { (fa, fb) } else { (fb, fa) }))
    }

    /// Preimage of [y0, y1] ∩ image inside the cylinder; None if they miss.
    pub fn pull(&self, y0: &Scalar, y1: &Scalar) -> Result<Option<(Scalar, Scalar)>> {
        let a = if y0.le(&self.img.0)? { self.img.0.clone() } else { y0.clone() };
        let b = if y1.ge(&self.img.1)? { self.img.1.clone() } else { y1.clone() };
        if !a.le(&b)? {
            return Ok(None);
        }
        Ok(Some(self.inverse.image(&a, &b)?))
    }

    /// (inf, sup) of |T′_{start,|u|}| over [x0, x1] inside the cylinder closure.
    pub fn derivative_range(&self, x0: &Scalar, x1: &Scalar) -> (Scalar, Scalar) {
        self.forward().abs_derivative_range(x0, x1)
    }
}

/// F_k², F_1 = F_2 = 1.
fn fib_square(k: usize) -> Scalar {
    let (mut a, mut b) = (BigInt::one(), BigInt::one());
    for _ in 1..k {
        let c = &a + &b;
        a = b;
        b = c;
    }
    Scalar::from(&a * &a)
}

/// Convenience: f64 value of an exact or ball scalar's upper bound.
pub fn upper_f64(s: &Scalar) -> f64 {
    s.bounds().map_or(f64::INFINITY, |(_, h)| rational_to_f64(&h))
}
