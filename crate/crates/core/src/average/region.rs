use crate::error::{Error, Result};
use crate::expr::parse_expression;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

/// A coordinate box, either in the Euclidean `q` space of an unconstrained
/// system or in the parameter space of a named chart.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Chart { name: String, lo: Vec<f64>, hi: Vec<f64> },
}

fn bound(src: &str, whole: &str) -> Result<f64> {
    let src = src.trim();
    if src == "2pi" {
        return Ok(2.0 * PI);
    }
    if let Some(rest) = src.strip_prefix('-') {
        if rest.trim() == "2pi" {
            return Ok(-2.0 * PI);
        }
    }
    let ast = parse_expression(src).map_err(|e| Error::Invalid(format!("region `{whole}`: {e}")))?;
    let v = ast
        .eval(&BTreeMap::<String, f64>::new())
        .map_err(|e| Error::Invalid(format!("region `{whole}`: {e}")))?;
    Ok(v)
}

fn intervals(src: &str, whole: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in src.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| Error::Invalid(format!("region `{whole}`: expected lo:hi, got `{part}`")))?;
        let (a, b) = (bound(a, whole)?, bound(b, whole)?);
        if !(a < b) {
            return Err(Error::Invalid(format!("region `{whole}`: empty interval {a}:{b}")));
        }
        lo.push(a);
        hi.push(b);
    }
    Ok((lo, hi))
}

impl Region {
    /// `lo:hi[,lo:hi...]` or `chart:<name>:lo:hi[,lo:hi...]`. Bounds may be
    /// constant expressions such as `2*pi` or the literal `2pi`.
    pub fn parse(src: &str) -> Result<Region> {
        let s = src.trim();
        if let Some(rest) = s.strip_prefix("chart:") {
            let (name, boxes) = rest
                .split_once(':')
                .ok_or_else(|| Error::Invalid(format!("region `{src}`: expected chart:<name>:lo:hi")))?;
            let (lo, hi) = intervals(boxes, src)?;
            return Ok(Region::Chart {
                name: name.to_string(),
                lo,
                hi,
            });
        }
        let (lo, hi) = intervals(s, src)?;
        Ok(Region::Box { lo, hi })
    }

    pub fn lo(&self) -> &[f64] {
        match self {
            Region::Box { lo, .. } | Region::Chart { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> &[f64] {
        match self {
            Region::Box { hi, .. } | Region::Chart { hi, .. } => hi,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo().len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lo().iter().zip(self.hi()))
            .all(|(x, (a, b))| x > a && x < b)
    }

    /// Smallest distance from `u` to a face of the box.
    pub fn boundary_distance(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.lo().iter().zip(self.hi()))
            .map(|(x, (a, b))| (x - a).abs().min((b - x).abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Split along `axis` at `at`.
    pub fn split(&self, axis: usize, at: f64) -> (Region, Region) {
        let mut left = self.clone();
        let mut right = self.clone();
        match (&mut left, &mut right) {
            (Region::Box { hi, .. }, Region::Box { lo, .. })
            | (Region::Chart { hi, .. }, Region::Chart { lo, .. }) => {
                hi[axis] = at;
                lo[axis] = at;
            }
            _ => unreachable!(),
        }
        (left, right)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let boxes = self
            .lo()
            .iter()
            .zip(self.hi())
            .map(|(a, b)| format!("{a}:{b}"))
            .collect::<Vec<_>>()
            .join(",");
        match self {
            Region::Box { .. } => write!(f, "{boxes}"),
            Region::Chart { name, .. } => write!(f, "chart:{name}:{boxes}"),
        }
    }
}

impl std::str::FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Region::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_box_and_chart() {
        assert_eq!(
            Region::parse("-2:2").unwrap(),
            Region::Box {
                lo: vec![-2.0],
                hi: vec![2.0]
            }
        );
        let r = Region::parse("chart:angle_speed:0:2pi,-2:2").unwrap();
        assert_eq!(r.dim(), 2);
        assert_eq!(r.hi()[0], 2.0 * PI);
        let r = Region::parse("chart:theta:-pi/2:3*pi/2").unwrap();
        assert!((r.lo()[0] + PI / 2.0).abs() < 1e-15);
        assert_eq!(Region::parse(&r.to_string()).unwrap(), r);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Region::parse("2:-2").is_err());
        assert!(Region::parse("chart:theta").is_err());
        assert!(Region::parse("1,2").is_err());
    }
}
