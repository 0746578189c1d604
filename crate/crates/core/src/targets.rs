use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type TargetFn = dyn Fn(usize, &[Scalar]) -> Vec<Scalar> + Send + Sync;

/// How g_n is produced.
#[derive(Clone)]
pub enum TargetKind {
    /// g_n ≡ y.
    Constant(Vec<Scalar>),
    /// g_n ≡ y_n, cycling through the list.
    PointSequence(Vec<Vec<Scalar>>),
    /// g_n ≡ (1/n, ..., 1/n).
    Reciprocal,
    Identity,
    /// g_n(x)_j = scale_j x_j + shift_j.
    Affine { scale: Vec<Scalar>, shift: Vec<Scalar> },
    Custom(Arc<TargetFn>),
}

impl fmt::Debug for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::Constant(y) => f.debug_tuple("Constant").field(y).finish(),
            TargetKind::PointSequence(p) => write!(f, "PointSequence({} points)", p.len()),
            TargetKind::Reciprocal => f.write_str("Reciprocal"),
            TargetKind::Identity => f.write_str("Identity"),
            TargetKind::Affine { scale, shift } => {
                f.debug_struct("Affine").field("scale", scale).field("shift", shift).finish()
            }
            TargetKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// The moving targets {g_n} with a declared uniform Lipschitz constant C₁.
#[derive(Clone, Debug)]
pub struct TargetSequence {
    pub kind: TargetKind,
    pub lipschitz: Scalar,
}

/// Worst sampled Lipschitz ratio, and the first pair that broke the declared constant.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub max_ratio: f64,
    pub violation: Option<AuditViolation>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditViolation {
    pub n: usize,
    pub x: Vec<Scalar>,
    pub y: Vec<Scalar>,
    pub ratio: f64,
}

fn max_norm(v: &[Scalar]) -> Scalar {
    v.iter().map(Scalar::abs).fold(Scalar::zero(), |a, b| a.max(&b))
}

impl TargetSequence {
    pub fn constant(y: Vec<Scalar>) -> TargetSequence {
        TargetSequence { kind: TargetKind::Constant(y), lipschitz: Scalar::zero() }
    }

    pub fn identity() -> TargetSequence {
        TargetSequence { kind: TargetKind::Identity, lipschitz: Scalar::one() }
    }

    pub fn reciprocal() -> TargetSequence {
        TargetSequence { kind: TargetKind::Reciprocal, lipschitz: Scalar::zero() }
    }

    pub fn points(points: Vec<Vec<Scalar>>) -> Result<TargetSequence> {
        if points.is_empty() {
            return Err(Error::InvalidTarget("empty point sequence".into()));
        }
        Ok(TargetSequence { kind: TargetKind::PointSequence(points), lipschitz: Scalar::zero() })
    }

    pub fn affine(scale: Vec<Scalar>, shift: Vec<Scalar>) -> Result<TargetSequence> {
        if scale.len() != shift.len() || scale.is_empty() {
            return Err(Error::InvalidTarget("scale and shift lengths differ".into()));
        }
        let lipschitz = max_norm(&scale);
        Ok(TargetSequence { kind: TargetKind::Affine { scale, shift }, lipschitz })
    }

    pub fn custom(f: Arc<TargetFn>, lipschitz: Scalar) -> TargetSequence {
        TargetSequence { kind: TargetKind::Custom(f), lipschitz }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TargetKind::Constant(_) => "constant",
            TargetKind::PointSequence(_) => "point_sequence",
            TargetKind::Reciprocal => "reciprocal",
            TargetKind::Identity => "identity",
            TargetKind::Affine { .. } => "affine",
            TargetKind::Custom(_) => "custom",
        }
    }

    /// g_n(x), checked to lie in [0,1]^d.
    pub fn evaluate(&self, n: usize, x: &[Scalar]) -> Result<Vec<Scalar>> {
        let d = x.len();
        let out = match &self.kind {
            TargetKind::Constant(y) => broadcast(y, d)?,
            TargetKind::PointSequence(ps) => broadcast(&ps[(n.max(1) - 1) % ps.len()], d)?,
            TargetKind::Reciprocal => vec![Scalar::ratio(1, n.max(1) as i64); d],
            TargetKind::Identity => x.to_vec(),
            TargetKind::Affine { scale, shift } => {
                let (a, b) = (broadcast(scale, d)?, broadcast(shift, d)?);
                x.iter().zip(a.iter().zip(&b)).map(|(xi, (ai, bi))| &(ai * xi) + bi).collect()
            }
            TargetKind::Custom(f) => f(n, x),
        };
        if out.len() != d {
            return Err(Error::InvalidTarget(format!("g_{n} returned {} coordinates, expected {d}", out.len())));
        }
        for v in &out {
            let inside = v.ge(&Scalar::zero()).and_then(|lo| Ok(lo && v.le(&Scalar::one())?));
            match inside {
                Ok(true) => {}
                Ok(false) => {
                    return Err(Error::InvalidTarget(format!("g_{n} leaves the unit cube: {v}")));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }

    /// First coordinate of g_n(x).
    pub fn first(&self, n: usize, x: &[Scalar]) -> Result<Scalar> {
        Ok(self.evaluate(n, x)?.swap_remove(0))
    }

    /// Sampled max of ‖g_n(x) − g_n(y)‖/‖x − y‖ against the declared constant.
    pub fn lipschitz_audit(&self, d: usize, samples: usize, seed: u64) -> Result<AuditReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = self.lipschitz.to_f64() * (1.0 + 1e-9);
        let mut report = AuditReport { max_ratio: 0.0, violation: None };
        let point = |rng: &mut ChaCha8Rng| -> Vec<Scalar> {
            (0..d).map(|_| Scalar::from_f64_exact(rng.gen::<f64>()).unwrap()).collect()
        };
        for _ in 0..samples {
            let n = rng.gen_range(1..=1000usize);
            let (x, y) = (point(&mut rng), point(&mut rng));
            let dx: Vec<Scalar> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let den = max_norm(&dx);
            if den.is_zero() {
                continue;
            }
            let (gx, gy) = (self.evaluate(n, &x)?, self.evaluate(n, &y)?);
            let dg: Vec<Scalar> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
            let ratio = (&max_norm(&dg) / &den).to_f64();
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
            }
            if ratio > limit && report.violation.is_none() {
                report.violation = Some(AuditViolation { n, x, y, ratio });
            }
        }
        Ok(report)
    }
}

fn broadcast(v: &[Scalar], d: usize) -> Result<Vec<Scalar>> {
    match v.len() {
        n if n == d => Ok(v.to_vec()),
        1 => Ok(vec![v[0].clone(); d]),
        n => Err(Error::Dimension { expected: d, got: n }),
    }
}

/// JSON description of a target sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Constant {
        point: Vec<Scalar>,
    },
    Identity,
    Reciprocal,
    /// Either inline points or a file with one whitespace-separated decimal vector per line.
    PointSequence {
        #[serde(default)]
        points: Vec<Vec<Scalar>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<String>,
    },
    Affine {
        scale: Vec<Scalar>,
        shift: Vec<Scalar>,
    },
}

impl TargetSpec {
    /// `base` resolves relative point files.
    pub fn build(&self, base: Option<&Path>) -> Result<TargetSequence> {
        match self {
            TargetSpec::Constant { point } => Ok(TargetSequence::constant(point.clone())),
            TargetSpec::Identity => Ok(TargetSequence::identity()),
            TargetSpec::Reciprocal => Ok(TargetSequence::reciprocal()),
            TargetSpec::Affine { scale, shift } => TargetSequence::affine(scale.clone(), shift.clone()),
            TargetSpec::PointSequence { points, file } => {
                let mut pts = points.clone();
                if let Some(f) = file {
                    let path = match base {
                        Some(b) if Path::new(f).is_relative() => b.join(f),
                        _ => Path::new(f).to_path_buf(),
                    };
                    pts.extend(read_points(&std::fs::read_to_string(path)?)?);
                }
                TargetSequence::points(pts)
            }
        }
    }
}

/// One vector per nonblank line; coordinates separated by whitespace or commas.
pub fn read_points(text: &str) -> Result<Vec<Vec<Scalar>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<Scalar>().map_err(Error::from))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    #[test]
    fn evaluate_kinds() {
        let x = [s("0.7")];
        assert_eq!(TargetSequence::constant(vec![s("0")]).evaluate(9, &x).unwrap(), vec![s("0")]);
        assert_eq!(TargetSequence::identity().evaluate(3, &x).unwrap(), x.to_vec());
        assert_eq!(TargetSequence::reciprocal().evaluate(4, &x).unwrap(), vec![s("0.25")]);
        let aff = TargetSequence::affine(vec![s("0.5")], vec![s("0.2")]).unwrap();
        assert_eq!(aff.evaluate(1, &x).unwrap(), vec![s("0.55")]);
        assert_eq!(aff.lipschitz, s("0.5"));
        let pts = TargetSequence::points(vec![vec![s("0.1")], vec![s("0.2")]]).unwrap();
        assert_eq!(pts.evaluate(3, &x).unwrap(), vec![s("0.1")]);
    }

    #[test]
    fn escaping_target_is_rejected() {
        let aff = TargetSequence::affine(vec![s("1")], vec![s("0.5")]).unwrap();
        assert!(matches!(aff.evaluate(1, &[s("0.9")]), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn audits() {
        let c = TargetSequence::constant(vec![s("0.3")]).lipschitz_audit(2, 200, 1).unwrap();
        assert_eq!(c.max_ratio, 0.0);
        let id = TargetSequence::identity().lipschitz_audit(2, 200, 1).unwrap();
        assert!((id.max_ratio - 1.0).abs() < 1e-12 && id.violation.is_none());
        let aff = TargetSequence::affine(vec![s("0.5")], vec![s("0.2")]).unwrap();
        let r = aff.lipschitz_audit(1, 200, 1).unwrap();
        assert!((r.max_ratio - 0.5).abs() < 1e-12);
        let liar = TargetSequence::custom(Arc::new(|_, x: &[Scalar]| x.to_vec()), s("0.5"));
        let r = liar.lipschitz_audit(1, 50, 2).unwrap();
        assert!(r.violation.is_some());
    }

    #[test]
    fn point_file_format() {
        let pts = read_points("# header\n0.5 0.25\n\n1/3, 0\n").unwrap();
        assert_eq!(pts, vec![vec![s("0.5"), s("0.25")], vec![s("1/3"), s("0")]]);
        let spec: TargetSpec = serde_json::from_str(r#"{"kind":"constant","point":["0"]}"#).unwrap();
        assert_eq!(spec.build(None).unwrap().name(), "constant");
    }
}
