//! Sparse integer polynomials in the four group coordinates.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groups::Ring;
use crate::nt;

pub type Exponent = [u32; 4];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("regular function {0:?} is the zero polynomial")]
    Zero(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Exponent, BigInt>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: impl Into<BigInt>) -> Self {
        let mut p = Poly::zero();
        p.add_term([0; 4], c.into());
        p
    }

    /// The coordinate function `c_{i+1}`.
    pub fn var(i: usize) -> Self {
        let mut e = [0; 4];
        e[i] = 1;
        let mut p = Poly::zero();
        p.add_term(e, BigInt::one());
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (BigInt, Exponent)>) -> Self {
        let mut p = Poly::zero();
        for (c, e) in terms {
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: Exponent, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_insert_with(<BigInt as Zero>::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &BigInt)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn constant_value(&self) -> Option<BigInt> {
        match self.terms.len() {
            0 => Some(<BigInt as Zero>::zero()),
            1 => self.terms.get(&[0; 4]).cloned(),
            _ => None,
        }
    }

    /// Substitute polynomials for the four variables.
    pub fn compose(&self, subs: &[Poly; 4]) -> Poly {
        let mut powers: Vec<Vec<Poly>> = subs.iter().map(|s| vec![Poly::constant(1), s.clone()]).collect();
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            let mut term = Poly::constant(c.clone());
            for (i, &k) in e.iter().enumerate() {
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().unwrap().mul(&subs[i]);
                    powers[i].push(next);
                }
                term = term.mul(&powers[i][k as usize]);
            }
            out = out.add(&term);
        }
        out
    }

    pub fn eval(&self, x: &[BigInt; 4]) -> BigInt {
        let mut acc = <BigInt as Zero>::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= xi.pow(k);
                }
            }
            acc += t;
        }
        acc
    }

    /// Checked evaluation on machine integers; `None` on overflow.
    pub fn eval_i64(&self, x: &[i64; 4]) -> Option<i128> {
        let mut acc: i128 = 0;
        for (e, c) in &self.terms {
            let mut t: i128 = c.to_i128()?;
            for (&xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t = t.checked_mul(xi as i128)?;
                }
            }
            acc = acc.checked_add(t)?;
        }
        Some(acc)
    }

    /// Evaluation modulo `m` on reduced coordinates.
    pub fn eval_mod(&self, x: &[u64; 4], m: u64) -> u64 {
        let mut acc = 0u64;
        for (e, c) in &self.terms {
            let mut t = nt::residue_big(c, m);
            for (&xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t = nt::mul_mod(t, xi, m);
                }
            }
            acc = ((acc as u128 + t as u128) % m as u128) as u64;
        }
        acc % m.max(1)
    }

    /// Content (gcd of coefficients), nonnegative.
    pub fn content(&self) -> BigInt {
        use num_integer::Integer;
        self.terms.values().fold(<BigInt as Zero>::zero(), |g, c| g.gcd(c))
    }
}

impl Ring for Poly {
    fn ring_zero() -> Self {
        Poly::zero()
    }
    fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(*e, c.clone());
        }
        out
    }
    fn sub(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(*e, -c);
        }
        out
    }
    fn mul(&self, o: &Self) -> Self {
        let mut out = Poly::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2], e1[3] + e2[3]];
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
    fn scale(&self, k: i64) -> Self {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, c * k);
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let abs = c.abs();
            let monomial: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| if k == 1 { format!("c{}", i + 1) } else { format!("c{}^{}", i + 1, k) })
                .collect();
            if monomial.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", monomial.join("*"))?;
            } else {
                write!(f, "{abs}*{}", monomial.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    #[serde(with = "crate::serde_big::bigint")]
    coeff: BigInt,
    exp: Exponent,
}

impl Serialize for Poly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<TermRepr> = self.terms.iter().map(|(e, c)| TermRepr { coeff: c.clone(), exp: *e }).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Poly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<TermRepr> = Vec::deserialize(d)?;
        Ok(Poly::from_terms(v.into_iter().map(|t| (t.coeff, t.exp))))
    }
}

/// A named nonzero polynomial function on the group coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RegularFunctionRepr")]
pub struct RegularFunction {
    pub name: String,
    pub terms: Poly,
}

#[derive(Deserialize)]
struct RegularFunctionRepr {
    name: String,
    terms: Poly,
}

impl TryFrom<RegularFunctionRepr> for RegularFunction {
    type Error = PolyError;
    fn try_from(r: RegularFunctionRepr) -> Result<Self, PolyError> {
        RegularFunction::new(r.name, r.terms)
    }
}

impl RegularFunction {
    pub fn new(name: impl Into<String>, poly: Poly) -> Result<Self, PolyError> {
        let name = name.into();
        if poly.is_zero() {
            return Err(PolyError::Zero(name));
        }
        Ok(RegularFunction { name, terms: poly })
    }

    pub fn poly(&self) -> &Poly {
        &self.terms
    }

    pub fn coordinate(i: usize) -> Self {
        RegularFunction::new(format!("c{}", i + 1), Poly::var(i)).expect("nonzero")
    }

    /// `g11 + g22`.
    pub fn sl2_trace() -> Self {
        RegularFunction::new("trace", Poly::var(0).add(&Poly::var(3))).expect("nonzero")
    }

    pub fn constant(c: i64) -> Result<Self, PolyError> {
        RegularFunction::new(format!("const {c}"), Poly::constant(c))
    }

    pub fn eval(&self, x: &[BigInt; 4]) -> BigInt {
        self.terms.eval(x)
    }

    pub fn eval_i64(&self, x: &[i64; 4]) -> Option<i128> {
        self.terms.eval_i64(x)
    }

    pub fn eval_mod(&self, x: &[u64; 4], m: u64) -> u64 {
        self.terms.eval_mod(x, m)
    }

    pub fn degree(&self) -> u32 {
        self.terms.degree()
    }
}
