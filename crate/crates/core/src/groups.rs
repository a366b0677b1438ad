//! The two concrete group models: `SL2` over the integers and the norm-one
//! group of the quaternion algebra `B(a,b)` (`i^2 = a`, `j^2 = b`, `ij = -ji`).
//!
//! Coordinates are always a 4-vector. For `SL2` they are the matrix entries
//! `(g11, g12, g21, g22)`; for the quaternion model they are the coefficients
//! of `x + y i + z j + w ij`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nt::{self, Place};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("elements belong to different group models ({0} vs {1})")]
    SpecMismatch(GroupModel, GroupModel),
    #[error("invalid modulus {0}")]
    InvalidModulus(u64),
    #[error("coordinates {coords} violate the defining equation of {model}: value {value}")]
    NotOnGroup { model: GroupModel, coords: String, value: String },
    #[error("invalid group spec: {0}")]
    InvalidSpec(String),
}

/// Commutative-ring operations needed to evaluate the group law over
/// integers, polynomials, or residues.
pub trait Ring: Clone {
    fn ring_zero() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, k: i64) -> Self;
}

impl Ring for BigInt {
    fn ring_zero() -> Self {
        <BigInt as Zero>::zero()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, k: i64) -> Self {
        self * k
    }
}

impl Ring for i128 {
    fn ring_zero() -> Self {
        0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, k: i64) -> Self {
        self * k as i128
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum GroupModel {
    Sl2,
    Quat { a: i64, b: i64 },
}

impl fmt::Display for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupModel::Sl2 => write!(f, "SL2"),
            GroupModel::Quat { a, b } => write!(f, "QuatNormOne({a},{b})"),
        }
    }
}

impl GroupModel {
    pub fn identity_coords(&self) -> [i64; 4] {
        match self {
            GroupModel::Sl2 => [1, 0, 0, 1],
            GroupModel::Quat { .. } => [1, 0, 0, 0],
        }
    }

    /// Determinant or reduced norm, as a ring element.
    pub fn defining_value<C: Ring>(&self, c: &[C; 4]) -> C {
        match *self {
            GroupModel::Sl2 => c[0].mul(&c[3]).sub(&c[1].mul(&c[2])),
            GroupModel::Quat { a, b } => c[0]
                .mul(&c[0])
                .sub(&c[1].mul(&c[1]).scale(a))
                .sub(&c[2].mul(&c[2]).scale(b))
                .add(&c[3].mul(&c[3]).scale(a * b)),
        }
    }

    /// The group law on coordinates over any commutative ring.
    pub fn mul_coords<C: Ring>(&self, g: &[C; 4], h: &[C; 4]) -> [C; 4] {
        match *self {
            GroupModel::Sl2 => [
                g[0].mul(&h[0]).add(&g[1].mul(&h[2])),
                g[0].mul(&h[1]).add(&g[1].mul(&h[3])),
                g[2].mul(&h[0]).add(&g[3].mul(&h[2])),
                g[2].mul(&h[1]).add(&g[3].mul(&h[3])),
            ],
            GroupModel::Quat { a, b } => {
                let (x1, y1, z1, w1) = (&g[0], &g[1], &g[2], &g[3]);
                let (x2, y2, z2, w2) = (&h[0], &h[1], &h[2], &h[3]);
                [
                    x1.mul(x2)
                        .add(&y1.mul(y2).scale(a))
                        .add(&z1.mul(z2).scale(b))
                        .sub(&w1.mul(w2).scale(a * b)),
                    x1.mul(y2).add(&y1.mul(x2)).sub(&z1.mul(w2).scale(b)).add(&w1.mul(z2).scale(b)),
                    x1.mul(z2).add(&z1.mul(x2)).add(&y1.mul(w2).scale(a)).sub(&w1.mul(y2).scale(a)),
                    x1.mul(w2).add(&w1.mul(x2)).add(&y1.mul(z2)).sub(&z1.mul(y2)),
                ]
            }
        }
    }

    /// Adjugate for `SL2`, quaternion conjugate for the norm-one model.
    pub fn conj_coords<C: Ring>(&self, g: &[C; 4]) -> [C; 4] {
        let neg = |c: &C| C::ring_zero().sub(c);
        match self {
            GroupModel::Sl2 => [g[3].clone(), neg(&g[1]), neg(&g[2]), g[0].clone()],
            GroupModel::Quat { .. } => [g[0].clone(), neg(&g[1]), neg(&g[2]), neg(&g[3])],
        }
    }

    /// Primes where the integral model is declared bad: none for `SL2`,
    /// the divisors of `2ab` for the quaternion model.
    pub fn bad_primes(&self) -> Vec<u64> {
        match *self {
            GroupModel::Sl2 => Vec::new(),
            GroupModel::Quat { a, b } => {
                let n = 2 * a.unsigned_abs() * b.unsigned_abs();
                nt::factor_small(n).into_iter().map(|(p, _)| p).collect()
            }
        }
    }

    pub fn is_good_prime(&self, p: u64) -> bool {
        !self.bad_primes().contains(&p)
    }

    pub fn is_quaternion(&self) -> bool {
        matches!(self, GroupModel::Quat { .. })
    }
}

/// Group model plus principal congruence level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroupSpecRepr", into = "GroupSpecRepr")]
pub struct GroupSpec {
    pub model: GroupModel,
    pub level: u64,
}

#[derive(Serialize, Deserialize)]
struct GroupSpecRepr {
    model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<i64>,
    #[serde(default = "default_level")]
    level: u64,
}

fn default_level() -> u64 {
    1
}

impl TryFrom<GroupSpecRepr> for GroupSpec {
    type Error = GroupError;
    fn try_from(r: GroupSpecRepr) -> Result<Self, GroupError> {
        match r.model.as_str() {
            "sl2" => GroupSpec::sl2(r.level),
            "quat" => {
                let a = r.a.ok_or_else(|| GroupError::InvalidSpec("quat model needs \"a\"".into()))?;
                let b = r.b.ok_or_else(|| GroupError::InvalidSpec("quat model needs \"b\"".into()))?;
                GroupSpec::quat(a, b, r.level)
            }
            other => Err(GroupError::InvalidSpec(format!("unknown model {other:?}"))),
        }
    }
}

impl From<GroupSpec> for GroupSpecRepr {
    fn from(g: GroupSpec) -> Self {
        match g.model {
            GroupModel::Sl2 => GroupSpecRepr { model: "sl2".into(), a: None, b: None, level: g.level },
            GroupModel::Quat { a, b } => {
                GroupSpecRepr { model: "quat".into(), a: Some(a), b: Some(b), level: g.level }
            }
        }
    }
}

impl GroupSpec {
    pub fn sl2(level: u64) -> Result<Self, GroupError> {
        if level == 0 {
            return Err(GroupError::InvalidSpec("level must be >= 1".into()));
        }
        Ok(GroupSpec { model: GroupModel::Sl2, level })
    }

    /// Norm-one group of `B(a,b)`; rejects split algebras and algebras whose
    /// real points are compact.
    pub fn quat(a: i64, b: i64, level: u64) -> Result<Self, GroupError> {
        if level == 0 {
            return Err(GroupError::InvalidSpec("level must be >= 1".into()));
        }
        if a == 0 || b == 0 {
            return Err(GroupError::InvalidSpec("quaternion parameters must be nonzero".into()));
        }
        if a < 0 && b < 0 {
            return Err(GroupError::InvalidSpec(format!("B({a},{b}) is definite: real points are compact")));
        }
        if nt::ternary_form_isotropic(a, b) {
            return Err(GroupError::InvalidSpec(format!(
                "B({a},{b}) is split: {a}x^2 + {b}y^2 - z^2 has a rational zero"
            )));
        }
        Ok(GroupSpec { model: GroupModel::Quat { a, b }, level })
    }

    /// The anisotropic instance `B(2,3)` at the given level.
    pub fn flagship(level: u64) -> Self {
        GroupSpec::quat(2, 3, level).expect("B(2,3) is a division algebra")
    }

    pub fn with_level(self, level: u64) -> Self {
        GroupSpec { level, ..self }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::from_small(self.model, self.model.identity_coords())
    }
}

/// Recorded evidence that `B(a,b)` is a division algebra.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivisionCertificate {
    pub a: i64,
    pub b: i64,
    /// Bound on `|x|, |y|, |z|` in the exhaustive search for `a x^2 + b y^2 = z^2`.
    pub search_bound: i64,
    pub search_solutions: u64,
    pub hilbert_symbols: Vec<(Place, i8)>,
}

impl DivisionCertificate {
    pub fn is_division(&self) -> bool {
        self.search_solutions == 0 && self.hilbert_symbols.iter().any(|&(_, s)| s == -1)
    }
}

/// Hilbert symbols recorded for the flagship algebra `B(2,3)`.
pub const FLAGSHIP_HILBERT: [(Place, i8); 3] = [(Place::Real, 1), (Place::Prime(2), -1), (Place::Prime(3), -1)];

pub fn division_certificate(a: i64, b: i64, search_bound: i64) -> DivisionCertificate {
    let mut found = 0u64;
    for x in -search_bound..=search_bound {
        for y in -search_bound..=search_bound {
            if x == 0 && y == 0 {
                continue;
            }
            let s = a as i128 * (x * x) as i128 + b as i128 * (y * y) as i128;
            if let Some(z) = nt::exact_sqrt_i128(s) {
                if z <= search_bound as i128 {
                    found += 1;
                }
            }
        }
    }
    let hilbert_symbols = nt::relevant_places(a, b).into_iter().map(|v| (v, nt::hilbert_symbol(a, b, v))).collect();
    DivisionCertificate { a, b, search_bound, search_solutions: found, hilbert_symbols }
}

/// An integral point of a group model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GroupElementRepr", into = "GroupElementRepr")]
pub struct GroupElement {
    pub model: GroupModel,
    pub coords: [BigInt; 4],
}

#[derive(Serialize, Deserialize)]
struct GroupElementRepr {
    model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<i64>,
    #[serde(with = "crate::serde_big::bigint4")]
    coords: [BigInt; 4],
}

impl TryFrom<GroupElementRepr> for GroupElement {
    type Error = GroupError;
    fn try_from(r: GroupElementRepr) -> Result<Self, GroupError> {
        let model = match (r.model.as_str(), r.a, r.b) {
            ("sl2", _, _) => GroupModel::Sl2,
            ("quat", Some(a), Some(b)) => GroupModel::Quat { a, b },
            (other, _, _) => return Err(GroupError::InvalidSpec(format!("bad element model {other:?}"))),
        };
        GroupElement::new(model, r.coords)
    }
}

impl From<GroupElement> for GroupElementRepr {
    fn from(g: GroupElement) -> Self {
        let (model, a, b) = match g.model {
            GroupModel::Sl2 => ("sl2".to_string(), None, None),
            GroupModel::Quat { a, b } => ("quat".to_string(), Some(a), Some(b)),
        };
        GroupElementRepr { model, a, b, coords: g.coords }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.coords[0], self.coords[1], self.coords[2], self.coords[3])
    }
}

impl GroupElement {
    /// Validating constructor.
    pub fn new(model: GroupModel, coords: [BigInt; 4]) -> Result<Self, GroupError> {
        let v = model.defining_value(&coords);
        if !v.is_one() {
            return Err(GroupError::NotOnGroup {
                model,
                coords: format!("({}, {}, {}, {})", coords[0], coords[1], coords[2], coords[3]),
                value: v.to_string(),
            });
        }
        Ok(GroupElement { model, coords })
    }

    pub fn from_i64(model: GroupModel, c: [i64; 4]) -> Result<Self, GroupError> {
        Self::new(model, c.map(BigInt::from))
    }

    /// Trusted conversion from enumeration output.
    pub(crate) fn from_small(model: GroupModel, c: [i64; 4]) -> Self {
        debug_assert_eq!(model.defining_value(&c.map(|v| v as i128)), 1);
        GroupElement { model, coords: c.map(BigInt::from) }
    }

    pub fn to_small(&self) -> Option<[i64; 4]> {
        let mut out = [0i64; 4];
        for (o, c) in out.iter_mut().zip(&self.coords) {
            *o = c.to_i64()?;
        }
        Some(out)
    }

    pub fn multiply(&self, other: &GroupElement) -> Result<GroupElement, GroupError> {
        if self.model != other.model {
            return Err(GroupError::SpecMismatch(self.model, other.model));
        }
        Ok(GroupElement { model: self.model, coords: self.model.mul_coords(&self.coords, &other.coords) })
    }

    pub fn conj_inverse(&self) -> GroupElement {
        GroupElement { model: self.model, coords: self.model.conj_coords(&self.coords) }
    }

    pub fn pow(&self, n: u64) -> GroupElement {
        let mut acc = GroupElement::from_small(self.model, self.model.identity_coords());
        for _ in 0..n {
            acc = acc.multiply(self).expect("same model");
        }
        acc
    }

    pub fn is_identity(&self) -> bool {
        self.coords.iter().zip(self.model.identity_coords()).all(|(c, i)| *c == BigInt::from(i))
    }

    /// Max absolute coordinate.
    pub fn height(&self) -> BigUint {
        self.coords.iter().map(|c| c.abs().to_biguint().expect("abs is nonnegative")).max().expect("4 coords")
    }

    pub fn defining_value(&self) -> BigInt {
        self.model.defining_value(&self.coords)
    }

    pub fn reduce_mod(&self, m: u64) -> Result<ResidueElement, GroupError> {
        if m == 0 {
            return Err(GroupError::InvalidModulus(0));
        }
        Ok(ResidueElement { model: self.model, modulus: m, coords: self.coords.clone().map(|c| nt::residue_big(&c, m)) })
    }

    pub fn in_congruence_subgroup(&self, alpha: u64) -> bool {
        match self.reduce_mod(alpha) {
            Ok(r) => r.is_identity(),
            Err(_) => false,
        }
    }
}

/// Coordinates of a group point modulo `m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResidueElement {
    pub model: GroupModel,
    pub modulus: u64,
    pub coords: [u64; 4],
}

impl ResidueElement {
    /// Validating constructor: coordinates are reduced and the defining
    /// equation must hold modulo `m`.
    pub fn new(model: GroupModel, modulus: u64, coords: [i64; 4]) -> Result<Self, GroupError> {
        if modulus == 0 {
            return Err(GroupError::InvalidModulus(0));
        }
        let r = ResidueElement { model, modulus, coords: coords.map(|c| nt::residue_i128(c as i128, modulus)) };
        if !r.satisfies_equation() {
            return Err(GroupError::NotOnGroup {
                model,
                coords: format!("{:?} mod {modulus}", r.coords),
                value: "defining equation fails".into(),
            });
        }
        Ok(r)
    }

    pub fn identity(model: GroupModel, modulus: u64) -> Self {
        ResidueElement { model, modulus, coords: model.identity_coords().map(|c| nt::residue_i128(c as i128, modulus)) }
    }

    pub(crate) fn lifted(&self) -> [i128; 4] {
        self.coords.map(|c| c as i128)
    }

    pub fn satisfies_equation(&self) -> bool {
        let v = self.model.defining_value(&self.lifted());
        nt::residue_i128(v - 1, self.modulus) == 0
    }

    pub fn is_identity(&self) -> bool {
        *self == ResidueElement::identity(self.model, self.modulus)
    }

    pub fn multiply(&self, other: &ResidueElement) -> Result<ResidueElement, GroupError> {
        if self.model != other.model {
            return Err(GroupError::SpecMismatch(self.model, other.model));
        }
        if self.modulus != other.modulus {
            return Err(GroupError::InvalidModulus(other.modulus));
        }
        let m = self.modulus;
        let prod = self.model.mul_coords(&self.lifted(), &other.lifted());
        Ok(ResidueElement { model: self.model, modulus: m, coords: prod.map(|c| nt::residue_i128(c, m)) })
    }

    /// Reduce further to a divisor of the modulus.
    pub fn reduce(&self, m: u64) -> Result<ResidueElement, GroupError> {
        if m == 0 || self.modulus % m != 0 {
            return Err(GroupError::InvalidModulus(m));
        }
        Ok(ResidueElement { model: self.model, modulus: m, coords: self.coords.map(|c| c % m) })
    }
}
