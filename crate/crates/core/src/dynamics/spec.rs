use serde::{Deserialize, Serialize};

use super::map::PiecewiseMap;
use super::sequence::MapSequence;
use crate::error::{Error, Result};
use crate::scalar::{NumericMode, Scalar};

/// JSON description of a map or map sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Beta {
        beta: Scalar,
    },
    Times {
        m: u32,
    },
    Gauss,
    Luroth,
    /// T_n(x) = q_n x mod 1. The last `period` entries of `q` repeat forever;
    /// without `period` the whole list repeats.
    Qcantor {
        q: Vec<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<usize>,
    },
    PiecewiseAffine {
        breakpoints: Vec<Scalar>,
        slopes: Vec<Scalar>,
    },
    Sequence {
        items: Vec<MapSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<Schedule>,
    },
}

/// Indices into a sequence's items: a repeating list, or a prefix followed by a cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Cycle(Vec<usize>),
    Split {
        #[serde(default)]
        prefix: Vec<usize>,
        cycle: Vec<usize>,
    },
}

impl MapSpec {
    fn single(&self, mode: NumericMode) -> Result<PiecewiseMap> {
        match self {
            MapSpec::Beta { beta } => PiecewiseMap::beta(beta, mode),
            MapSpec::Times { m } => PiecewiseMap::times(*m, mode),
            MapSpec::Gauss => Ok(PiecewiseMap::gauss(mode)),
            MapSpec::Luroth => Ok(PiecewiseMap::luroth(mode)),
            MapSpec::PiecewiseAffine { breakpoints, slopes } => {
                PiecewiseMap::piecewise_affine(breakpoints, slopes, mode)
            }
            _ => Err(Error::InvalidMap("sequence items must be single maps".into())),
        }
    }

    pub fn build(&self, mode: NumericMode) -> Result<MapSequence> {
        match self {
            MapSpec::Qcantor { q, period } => {
                if q.is_empty() {
                    return Err(Error::InvalidMap("qcantor needs at least one q".into()));
                }
                let period = period.unwrap_or(q.len());
                if period == 0 || period > q.len() {
                    return Err(Error::InvalidMap(format!("period {period} does not fit {} entries", q.len())));
                }
                let mut distinct: Vec<u32> = vec![];
                let mut idx = Vec::with_capacity(q.len());
                for &v in q {
                    let i = distinct.iter().position(|&d| d == v).unwrap_or_else(|| {
                        distinct.push(v);
                        distinct.len() - 1
                    });
                    idx.push(i);
                }
                let maps = distinct
                    .iter()
                    .map(|&v| PiecewiseMap::times(v, mode))
                    .collect::<Result<Vec<_>>>()?;
                let split = q.len() - period;
                MapSequence::new(maps, idx[..split].to_vec(), idx[split..].to_vec())
            }
            MapSpec::Sequence { items, schedule } => {
                let maps = items.iter().map(|m| m.single(mode)).collect::<Result<Vec<_>>>()?;
                let (prefix, cycle) = match schedule {
                    None => (vec![], (0..maps.len()).collect()),
                    Some(Schedule::Cycle(c)) => (vec![], c.clone()),
                    Some(Schedule::Split { prefix, cycle }) => (prefix.clone(), cycle.clone()),
                };
                MapSequence::new(maps, prefix, cycle)
            }
            single => MapSequence::single(single.single(mode)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(j: &str) -> MapSpec {
        serde_json::from_str(j).unwrap()
    }

    #[test]
    fn parses_every_kind() {
        assert_eq!(spec(r#"{"kind":"beta","beta":"1.5"}"#), MapSpec::Beta { beta: "1.5".parse().unwrap() });
        assert_eq!(spec(r#"{"kind":"times","m":2}"#), MapSpec::Times { m: 2 });
        assert_eq!(spec(r#"{"kind":"gauss"}"#), MapSpec::Gauss);
        assert_eq!(spec(r#"{"kind":"luroth"}"#), MapSpec::Luroth);
        let q = spec(r#"{"kind":"qcantor","q":[5,2,3],"period":2}"#);
        let seq = q.build(NumericMode::Rational).unwrap();
        assert_eq!(seq.at(1).label, "times(5)");
        assert_eq!(seq.at(2).label, "times(2)");
        assert_eq!(seq.at(5).label, "times(3)");
        let pa = spec(r#"{"kind":"piecewise_affine","breakpoints":["0","0.5","1"],"slopes":["2","-2"]}"#);
        assert!(pa.build(NumericMode::Rational).unwrap().satisfies(super::super::Assumption::B));
        let s = spec(r#"{"kind":"sequence","items":[{"kind":"times","m":2},{"kind":"gauss"}],"schedule":{"prefix":[0],"cycle":[1]}}"#);
        let seq = s.build(NumericMode::Rational).unwrap();
        assert!(seq.at(3).is_gauss() && !seq.at(1).is_gauss());
        let c = spec(r#"{"kind":"sequence","items":[{"kind":"times","m":2},{"kind":"times","m":3}],"schedule":[1,0]}"#);
        assert_eq!(c.build(NumericMode::Rational).unwrap().at(1).label, "times(3)");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(spec(r#"{"kind":"times","m":1}"#).build(NumericMode::Rational).is_err());
        assert!(spec(r#"{"kind":"beta","beta":"0.9"}"#).build(NumericMode::Rational).is_err());
        assert!(spec(r#"{"kind":"qcantor","q":[2],"period":3}"#).build(NumericMode::Rational).is_err());
        let nested = r#"{"kind":"sequence","items":[{"kind":"qcantor","q":[2]}]}"#;
        assert!(spec(nested).build(NumericMode::Rational).is_err());
        assert!(serde_json::from_str::<MapSpec>(r#"{"kind":"tent"}"#).is_err());
    }
}
