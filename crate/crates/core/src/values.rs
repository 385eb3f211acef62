//! Foundational value types: variables, assignments, exact probabilities,
//! and finite distributions.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

pub type Rational = BigRational;

/// Role of a variable in a decision model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    State,
    Action,
    Reward,
    Belief,
}

/// Time slice a variable belongs to (two-slice dynamic models).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slice {
    Current,
    Next,
}

/// A named variable with an ordered finite domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<String>,
    pub role: Role,
    pub slice: Slice,
}

impl Variable {
    pub fn new(name: impl Into<String>, domain: &[&str]) -> Self {
        Variable {
            name: name.into(),
            domain: domain.iter().map(|v| v.to_string()).collect(),
            role: Role::State,
            slice: Slice::Current,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_slice(mut self, slice: Slice) -> Self {
        self.slice = slice;
        self
    }

    pub fn has_value(&self, value: &str) -> bool {
        self.domain.iter().any(|v| v == value)
    }
}

/// An exact rational probability, always in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Prob(BigRational);

impl Prob {
    pub fn zero() -> Self {
        Prob(BigRational::zero())
    }

    pub fn one() -> Self {
        Prob(BigRational::one())
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Prob(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_int(n: i64) -> Self {
        Prob(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Prob(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn into_rational(self) -> BigRational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Decimal rendering with `digits` places after the point, truncated.
    pub fn to_decimal(&self, digits: u32) -> String {
        let neg = self.0.is_negative();
        let r = self.0.abs();
        let scale = BigInt::from(10u32).pow(digits);
        let scaled = (r * BigRational::from_integer(scale.clone())).trunc();
        let scaled = scaled.to_integer();
        let int_part = &scaled / &scale;
        let frac_part = &scaled % &scale;
        let sign = if neg { "-" } else { "" };
        if digits == 0 {
            format!("{sign}{int_part}")
        } else {
            format!(
                "{sign}{int_part}.{frac:0>width$}",
                frac = frac_part.to_string(),
                width = digits as usize
            )
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Prob {
    type Err = String;

    /// Parses `p/q` or a plain integer.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let parse_int = |t: &str| -> std::result::Result<BigInt, String> {
            t.trim()
                .parse::<BigInt>()
                .map_err(|_| format!("invalid rational: {s}"))
        };
        if let Some((num, den)) = s.split_once('/') {
            let den = parse_int(den)?;
            if den.is_zero() {
                return Err(format!("zero denominator in rational: {s}"));
            }
            Ok(Prob(BigRational::new(parse_int(num)?, den)))
        } else {
            Ok(Prob(BigRational::from_integer(parse_int(s)?)))
        }
    }
}

impl Add for Prob {
    type Output = Prob;
    fn add(self, rhs: Prob) -> Prob {
        Prob(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Prob> for Prob {
    type Output = Prob;
    fn add(self, rhs: &Prob) -> Prob {
        Prob(self.0 + &rhs.0)
    }
}

impl AddAssign for Prob {
    fn add_assign(&mut self, rhs: Prob) {
        self.0 += rhs.0;
    }
}

impl Sub for Prob {
    type Output = Prob;
    fn sub(self, rhs: Prob) -> Prob {
        Prob(self.0 - rhs.0)
    }
}

impl Mul for Prob {
    type Output = Prob;
    fn mul(self, rhs: Prob) -> Prob {
        Prob(self.0 * rhs.0)
    }
}

impl<'a> Mul<&'a Prob> for Prob {
    type Output = Prob;
    fn mul(self, rhs: &Prob) -> Prob {
        Prob(self.0 * &rhs.0)
    }
}

impl<'a, 'b> Mul<&'b Prob> for &'a Prob {
    type Output = Prob;
    fn mul(self, rhs: &Prob) -> Prob {
        Prob(&self.0 * &rhs.0)
    }
}

impl Div for Prob {
    type Output = Prob;
    fn div(self, rhs: Prob) -> Prob {
        Prob(self.0 / rhs.0)
    }
}

impl std::iter::Sum for Prob {
    fn sum<I: Iterator<Item = Prob>>(iter: I) -> Prob {
        iter.fold(Prob::zero(), |acc, p| acc + p)
    }
}

/// A partial assignment of values to variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Assignment {
    bindings: BTreeMap<String, String>,
}

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn of(pairs: &[(&str, &str)]) -> Self {
        let mut a = Assignment::new();
        for (k, v) in pairs {
            a.bindings.insert(k.to_string(), v.to_string());
        }
        a
    }

    pub fn bind(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.bindings.insert(name.into(), value.into());
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.bindings.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Union of bindings; errors if any variable is bound to two values.
    pub fn merge(&self, other: &Assignment) -> Result<Assignment> {
        let mut out = self.clone();
        for (k, v) in &other.bindings {
            if let Some(existing) = out.bindings.get(k) {
                if existing != v {
                    return Err(Error::Conflict(k.clone()));
                }
            } else {
                out.bindings.insert(k.clone(), v.clone());
            }
        }
        Ok(out)
    }

    /// True if every binding in `self` agrees with `other` where both bind.
    pub fn consistent_with(&self, other: &Assignment) -> bool {
        self.bindings
            .iter()
            .all(|(k, v)| other.bindings.get(k).map_or(true, |w| w == v))
    }

    /// True if `other` binds every variable of `self` to the same value.
    pub fn extends(&self, sub: &Assignment) -> bool {
        sub.bindings
            .iter()
            .all(|(k, v)| self.bindings.get(k) == Some(v))
    }

    /// Keep only bindings for the named variables.
    pub fn restrict<'a, I: IntoIterator<Item = &'a str>>(&self, names: I) -> Assignment {
        let mut out = Assignment::new();
        for n in names {
            if let Some(v) = self.bindings.get(n) {
                out.bindings.insert(n.to_string(), v.clone());
            }
        }
        out
    }

    /// Drop bindings for the named variables.
    pub fn without<'a, I: IntoIterator<Item = &'a str>>(&self, names: I) -> Assignment {
        let mut out = self.clone();
        for n in names {
            out.bindings.remove(n);
        }
        out
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.bindings {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{k}={v}")?;
            first = false;
        }
        Ok(())
    }
}

/// An exact distribution over assignments sharing one variable set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Distribution {
    support: BTreeMap<Assignment, Prob>,
}

impl Distribution {
    /// Normalizes nonnegative weights into a distribution.
    pub fn normalize<I: IntoIterator<Item = (Assignment, Prob)>>(weights: I) -> Result<Self> {
        let mut acc: BTreeMap<Assignment, Prob> = BTreeMap::new();
        for (a, w) in weights {
            *acc.entry(a).or_insert_with(Prob::zero) += w;
        }
        let total: Prob = acc.values().cloned().sum();
        if total.is_zero() {
            return Err(Error::ZeroMass);
        }
        let support = acc
            .into_iter()
            .filter(|(_, w)| !w.is_zero())
            .map(|(a, w)| (a, w / total.clone()))
            .collect();
        Ok(Distribution { support })
    }

    pub fn point(a: Assignment) -> Self {
        let mut support = BTreeMap::new();
        support.insert(a, Prob::one());
        Distribution { support }
    }

    pub fn prob(&self, a: &Assignment) -> Prob {
        self.support.get(a).cloned().unwrap_or_else(Prob::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Assignment, &Prob)> {
        self.support.iter()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> Prob {
        self.support.values().cloned().sum()
    }

    /// Expected value of a rational-valued function of the assignment.
    pub fn expect<F: Fn(&Assignment) -> Prob>(&self, f: F) -> Prob {
        self.support
            .iter()
            .map(|(a, p)| f(a) * p)
            .sum()
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (a, p) in &self.support {
            if !first {
                write!(f, "; ")?;
            }
            write!(f, "{{{a}}}: {p}")?;
            first = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_disjoint_union() {
        let a = Assignment::of(&[("X", "1")]);
        let b = Assignment::of(&[("Y", "0")]);
        assert_eq!(a.merge(&b).unwrap(), Assignment::of(&[("X", "1"), ("Y", "0")]));
    }

    #[test]
    fn merge_identity() {
        let a = Assignment::of(&[("X", "1")]);
        assert_eq!(a.merge(&Assignment::new()).unwrap(), a);
    }

    #[test]
    fn merge_conflict() {
        let a = Assignment::of(&[("X", "1")]);
        let b = Assignment::of(&[("X", "0")]);
        assert_eq!(a.merge(&b), Err(Error::Conflict("X".into())));
    }

    #[test]
    fn normalize_symmetric() {
        let u0 = Assignment::of(&[("u", "0")]);
        let u1 = Assignment::of(&[("u", "1")]);
        let d = Distribution::normalize([
            (u0.clone(), Prob::one()),
            (u1.clone(), Prob::one()),
        ])
        .unwrap();
        assert_eq!(d.prob(&u0), Prob::ratio(1, 2));
        assert_eq!(d.prob(&u1), Prob::ratio(1, 2));
    }

    #[test]
    fn normalize_weighted() {
        let u0 = Assignment::of(&[("u", "0")]);
        let u1 = Assignment::of(&[("u", "1")]);
        let d = Distribution::normalize([
            (u0.clone(), Prob::one()),
            (u1.clone(), Prob::from_int(3)),
        ])
        .unwrap();
        assert_eq!(d.prob(&u0), Prob::ratio(1, 4));
        assert_eq!(d.prob(&u1), Prob::ratio(3, 4));
    }

    #[test]
    fn normalize_zero_mass() {
        let u0 = Assignment::of(&[("u", "0")]);
        let r = Distribution::normalize([(u0, Prob::zero())]);
        assert_eq!(r, Err(Error::ZeroMass));
    }

    #[test]
    fn normalize_idempotent() {
        let u0 = Assignment::of(&[("u", "0")]);
        let u1 = Assignment::of(&[("u", "1")]);
        let d = Distribution::normalize([
            (u0, Prob::ratio(2, 7)),
            (u1, Prob::ratio(3, 7)),
        ])
        .unwrap();
        let again =
            Distribution::normalize(d.iter().map(|(a, p)| (a.clone(), p.clone()))).unwrap();
        assert_eq!(d, again);
        assert_eq!(d.total(), Prob::one());
    }

    #[test]
    fn prob_parse_and_display() {
        let p: Prob = "3/6".parse().unwrap();
        assert_eq!(p, Prob::ratio(1, 2));
        assert_eq!(p.to_string(), "1/2");
        let q: Prob = "1".parse().unwrap();
        assert_eq!(q.to_string(), "1");
        assert!("1/0".parse::<Prob>().is_err());
        assert!("x".parse::<Prob>().is_err());
    }

    #[test]
    fn prob_decimal() {
        assert_eq!(Prob::ratio(1, 3).to_decimal(4), "0.3333");
        assert_eq!(Prob::ratio(1, 2).to_decimal(2), "0.50");
        assert_eq!(Prob::from_int(2).to_decimal(0), "2");
    }
}
