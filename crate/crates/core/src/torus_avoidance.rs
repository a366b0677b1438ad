//! Torus orbits and avoidance of a codimension-2 subset `D`.
//!
//! The torus is `T = {u + v i : u^2 - a v^2 = 1}` inside the norm-one group
//! of `B(a, b)`. The quotient map is `pi(g) = conj(g) i g`, a pure
//! quaternion; `T` centralises `i` and `conj(t) t = 1`, so `pi(t g) = pi(g)`.
//! A function `F` on the pure quaternions pulls back to `f(g) = F(pi(g P))`,
//! constant along left `T`-orbits.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_integer::{Integer, Roots};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{self, FactorBudget, Factorization};
use crate::groups::{GroupElement, GroupError, GroupModel};
use crate::nt;
use crate::poly::{Poly, RegularFunction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TorusError {
    #[error("invalid torus: {0}")]
    InvalidTorus(String),
    #[error("prime {p} is bad for the torus: {reason}")]
    BadReduction { p: u64, reason: String },
    #[error("threshold certification failed; offending primes {0:?}")]
    Certification(Vec<u64>),
    #[error("pipeline violation: prime factor {p} of f(P') is not above M = {m}")]
    PipelineViolation { p: String, m: u64 },
    #[error("pigeonhole violation: no orbit element avoids D at every bad place ({0})")]
    Pigeonhole(String),
    #[error("orbit not injective at {p}: order {order} <= {bound}")]
    NotInjective { p: u64, order: u64, bound: u64 },
    #[error("invalid subset: {0}")]
    InvalidSubset(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Fundamental solution of `u^2 - d v^2 = 1` from the continued fraction
/// of `sqrt(d)`.
pub fn pell_fundamental(d: u64) -> Result<(BigInt, BigInt), TorusError> {
    if d < 2 {
        return Err(TorusError::InvalidTorus(format!("d = {d} gives a degenerate torus")));
    }
    let a0 = d.sqrt();
    if a0 * a0 == d {
        return Err(TorusError::InvalidTorus(format!("d = {d} is a square")));
    }
    let (d_big, a0_big) = (BigInt::from(d), BigInt::from(a0));
    let (mut m, mut q, mut a) = (BigInt::zero(), BigInt::one(), a0_big.clone());
    let (mut p_prev, mut p) = (BigInt::one(), a0_big.clone());
    let (mut q_prev, mut qq) = (BigInt::zero(), BigInt::one());
    loop {
        if &p * &p - &d_big * &qq * &qq == BigInt::one() {
            return Ok((p, qq));
        }
        m = &a * &q - &m;
        q = (&d_big - &m * &m) / &q;
        a = (&a0_big + &m) / &q;
        let p_next = &a * &p + &p_prev;
        let q_next = &a * &qq + &q_prev;
        p_prev = std::mem::replace(&mut p, p_next);
        q_prev = std::mem::replace(&mut qq, q_next);
    }
}

/// The Pell torus inside `B(a, b)` together with a chosen element `Q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub model: GroupModel,
    /// The torus parameter, equal to `a`.
    pub d: u64,
    #[serde(with = "crate::serde_big::bigint")]
    pub u: BigInt,
    #[serde(with = "crate::serde_big::bigint")]
    pub v: BigInt,
}

impl TorusSpec {
    /// `Q = u + v i` with `(u, v)` the fundamental Pell solution.
    pub fn fundamental(model: GroupModel) -> Result<Self, TorusError> {
        let GroupModel::Quat { a, .. } = model else {
            return Err(TorusError::InvalidTorus("the Pell torus needs a quaternion model".into()));
        };
        if a < 2 {
            return Err(TorusError::InvalidTorus(format!("a = {a}: the torus Q(sqrt a) is not split at infinity")));
        }
        let (u, v) = pell_fundamental(a as u64)?;
        Ok(TorusSpec { model, d: a as u64, u, v })
    }

    pub fn new(model: GroupModel, u: BigInt, v: BigInt) -> Result<Self, TorusError> {
        let GroupModel::Quat { a, .. } = model else {
            return Err(TorusError::InvalidTorus("the Pell torus needs a quaternion model".into()));
        };
        if a < 2 {
            return Err(TorusError::InvalidTorus(format!("a = {a} is not a valid torus parameter")));
        }
        let t = TorusSpec { model, d: a as u64, u, v };
        if &t.u * &t.u - BigInt::from(t.d) * &t.v * &t.v != BigInt::one() {
            return Err(TorusError::InvalidTorus(format!("{} + {} i does not have norm 1", t.u, t.v)));
        }
        if t.v.is_zero() {
            return Err(TorusError::InvalidTorus("Q = +-1 has finite order".into()));
        }
        Ok(t)
    }

    pub fn element(&self) -> GroupElement {
        GroupElement::new(self.model, [self.u.clone(), self.v.clone(), BigInt::zero(), BigInt::zero()])
            .expect("norm one by construction")
    }

    /// `Q^k` as a torus element.
    pub fn power(&self, k: u64) -> TorusSpec {
        let g = self.element().pow(k);
        TorusSpec { model: self.model, d: self.d, u: g.coords[0].clone(), v: g.coords[1].clone() }
    }

    fn residue(&self, p: u64) -> (u64, u64) {
        (nt::residue_big(&self.u, p), nt::residue_big(&self.v, p))
    }

    /// Smallest power of `Q` congruent to 1 modulo `m` (`m >= 1`).
    pub fn stabilizing_exponent(&self, m: u64) -> Result<u64, TorusError> {
        if m <= 1 {
            return Ok(1);
        }
        let (u, v) = (nt::residue_big(&self.u, m), nt::residue_big(&self.v, m));
        let d = self.d % m;
        let (mut x, mut y) = (u, v);
        // |T(Z/m)| <= m^2 bounds the search
        for k in 1..=m.saturating_mul(m) {
            if x == 1 % m && y == 0 {
                return Ok(k);
            }
            (x, y) = torus_mul((x, y), (u, v), d, m);
        }
        Err(TorusError::InvalidTorus(format!("Q has no finite order mod {m}")))
    }
}

fn torus_mul(s: (u64, u64), t: (u64, u64), d: u64, m: u64) -> (u64, u64) {
    let re = (nt::mul_mod(s.0, t.0, m) as u128 + nt::mul_mod(d, nt::mul_mod(s.1, t.1, m), m) as u128) % m as u128;
    let im = (nt::mul_mod(s.0, t.1, m) as u128 + nt::mul_mod(s.1, t.0, m) as u128) % m as u128;
    (re as u64, im as u64)
}

/// Order of `Q mod p` in `T(F_p)`.
pub fn torus_order_mod(ts: &TorusSpec, p: u64) -> Result<u64, TorusError> {
    if !nt::is_prime_u64(p) {
        return Err(TorusError::BadReduction { p, reason: "not a prime".into() });
    }
    if p == 2 || ts.d % p == 0 {
        return Err(TorusError::BadReduction { p, reason: format!("{p} divides 2d = {}", 2 * ts.d) });
    }
    let q = ts.residue(p);
    let d = ts.d % p;
    let mut x = q;
    // the order divides p - 1 or p + 1
    for k in 1..=p + 1 {
        if x == (1, 0) {
            return Ok(k);
        }
        x = torus_mul(x, q, d, p);
    }
    Err(TorusError::BadReduction { p, reason: "Q is not invertible mod p".into() })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// `r N_fiber + 1`.
    pub bound: u64,
    pub m: u64,
    /// Good primes `p` with `Q^j = 1 mod p` for some `j <= bound`.
    pub exceptional: Vec<u64>,
    pub prime_bound: u64,
    /// `gcd(u_j - 1, v_j)` for `j = 1..=bound`, as decimal strings.
    pub gcds: Vec<String>,
}

/// Least `M` such that every good prime above `M` has `ord(Q mod p) >
/// r N + 1`, certified by factoring `gcd(u_j - 1, v_j)` for `j <= r N + 1`
/// and cross-checked by computing orders for all good primes up to
/// `prime_bound`.
pub fn threshold_m(ts: &TorusSpec, r: u64, n_fiber: u64, prime_bound: u64) -> Result<ThresholdReport, TorusError> {
    let bound = r * n_fiber + 1;
    let q = ts.element();
    let mut power = q.clone();
    let mut exceptional = BTreeSet::new();
    let mut gcds = Vec::new();
    let budget = FactorBudget::default();
    for j in 1..=bound {
        if j > 1 {
            power = power.multiply(&q)?;
        }
        let g = (&power.coords[0] - BigInt::one()).gcd(&power.coords[1]);
        gcds.push(g.to_string());
        if g.is_zero() {
            return Err(TorusError::InvalidTorus(format!("Q^{j} = 1: Q has finite order")));
        }
        let fac = factor::factor(g.magnitude(), &budget).map_err(|_| TorusError::Certification(vec![]))?;
        for p in fac.primes() {
            let p = p.to_u64().ok_or_else(|| TorusError::Certification(vec![]))?;
            if p != 2 && ts.d % p != 0 {
                exceptional.insert(p);
            }
        }
    }
    let offending: Vec<u64> = nt::primes_up_to(prime_bound)
        .into_par_iter()
        .filter(|&p| p != 2 && ts.d % p != 0)
        .filter(|&p| {
            let small = torus_order_mod(ts, p).map(|o| o <= bound).unwrap_or(true);
            small != exceptional.contains(&p)
        })
        .collect();
    if !offending.is_empty() {
        return Err(TorusError::Certification(offending));
    }
    let m = exceptional.iter().copied().max().unwrap_or(1).max(1);
    Ok(ThresholdReport { bound, m, exceptional: exceptional.into_iter().collect(), prime_bound, gcds })
}

/// `pi(g) = conj(g) i g` as four polynomials in the coordinates of `g`; the
/// real part is identically zero.
pub fn quotient_map(model: GroupModel) -> [Poly; 4] {
    let g = [0, 1, 2, 3].map(Poly::var);
    let i = [Poly::zero(), Poly::constant(1), Poly::zero(), Poly::zero()];
    model.mul_coords(&model.mul_coords(&model.conj_coords(&g), &i), &g)
}

/// A function on the pure quaternions, in the variables `c1, c2, c3` for
/// the `i`, `j`, `ij` coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientFunction {
    pub name: String,
    pub terms: Poly,
}

impl QuotientFunction {
    /// The `ij`-coefficient.
    pub fn ij_coefficient() -> Self {
        QuotientFunction { name: "ij-coefficient".into(), terms: Poly::var(2) }
    }

    /// `F o pi` on the group.
    pub fn on_group(&self, model: GroupModel) -> Poly {
        let [_, pi_i, pi_j, pi_k] = quotient_map(model);
        self.terms.compose(&[pi_i, pi_j, pi_k, Poly::zero()])
    }

    /// `f(g) = F(pi(g P))`.
    pub fn pullback(&self, model: GroupModel, base: &GroupElement) -> Result<RegularFunction, TorusError> {
        let g = [0, 1, 2, 3].map(Poly::var);
        let p = base.coords.clone().map(Poly::constant);
        let gp = model.mul_coords(&g, &p);
        let f = self.on_group(model).compose(&gp);
        RegularFunction::new(format!("{} o pi o (.P)", self.name), f)
            .map_err(|e| TorusError::InvalidSubset(e.to_string()))
    }
}

/// A closed subset `D` of the group, cut out by its generators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub generators: Vec<RegularFunction>,
    #[serde(default = "default_codim")]
    pub codimension: u32,
}

fn default_codim() -> u32 {
    2
}

impl SubsetSpec {
    pub fn new(generators: Vec<RegularFunction>) -> Result<Self, TorusError> {
        let s = SubsetSpec { generators, codimension: 2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TorusError> {
        if self.codimension != 2 {
            return Err(TorusError::InvalidSubset(format!("declared codimension {} (need 2)", self.codimension)));
        }
        if self.generators.is_empty() {
            return Err(TorusError::InvalidSubset("no generators".into()));
        }
        Ok(())
    }

    /// `{y = 0, z = 0}`, the `i`-axis torus translate used by the flagship.
    pub fn flagship() -> Self {
        SubsetSpec { generators: vec![RegularFunction::coordinate(1), RegularFunction::coordinate(2)], codimension: 2 }
    }

    /// `deg = 2 * max generator degree`: a torus coset is a conic.
    pub fn default_fiber_bound(&self) -> u64 {
        2 * self.generators.iter().map(|g| g.degree() as u64).max().unwrap_or(1).max(1)
    }

    pub fn contains_mod(&self, x: &[u64; 4], p: u64) -> bool {
        self.generators.iter().all(|g| g.eval_mod(x, p) == 0)
    }

    pub fn contains_exact(&self, g: &GroupElement) -> bool {
        self.generators.iter().all(|f| f.eval(&g.coords).is_zero())
    }

    /// `gcd` of the generator values at `g`; `g mod p` lies in `D` exactly
    /// when `p` divides it (zero means `g` itself lies in `D`).
    pub fn generator_gcd(&self, g: &GroupElement) -> BigInt {
        self.generators.iter().fold(BigInt::zero(), |acc, f| acc.gcd(&f.eval(&g.coords)))
    }
}

/// `T(F_p)` by the rational parametrisation through `(-1, 0)`.
pub fn torus_points_mod(d: u64, p: u64) -> Vec<(u64, u64)> {
    let d = d % p;
    let mut out = vec![(p - 1, 0)];
    let inv2 = |x: u64| nt::inv_mod(x, p);
    for m in 0..p {
        let am2 = nt::mul_mod(d, nt::mul_mod(m, m, p), p);
        let den = (1 + p - am2) % p;
        let Some(inv) = inv2(den) else { continue };
        let u = nt::mul_mod((1 + am2) % p, inv, p);
        let v = nt::mul_mod(2 * m % p, inv, p);
        out.push((u, v));
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn residue_mul(model: GroupModel, x: &[u64; 4], y: &[u64; 4], p: u64) -> [u64; 4] {
    let r = model.mul_coords(&x.map(|c| c as i128), &y.map(|c| c as i128));
    r.map(|c| nt::residue_i128(c, p))
}

/// Points of `D` in the fibre `T(F_p) g` through `g mod p`.
pub fn fibre_points(model: GroupModel, d: &SubsetSpec, torus_d: u64, g: &[u64; 4], p: u64) -> Vec<[u64; 4]> {
    torus_points_mod(torus_d, p)
        .into_iter()
        .map(|(u, v)| residue_mul(model, &[u, v, 0, 0], g, p))
        .filter(|x| d.contains_mod(x, p))
        .collect()
}

fn residue_of(g: &GroupElement, p: u64) -> [u64; 4] {
    [0, 1, 2, 3].map(|i| nt::residue_big(&g.coords[i], p))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FibreBoundReport {
    pub n_fiber: u64,
    pub primes: Vec<u64>,
    /// Largest number of `D`-points found in one torus coset, per prime.
    pub max_per_prime: Vec<u64>,
    pub holds: bool,
}

/// Exhaustive check of the fibre-degree bound: group the `F_p`-points of
/// `D` by `pi` (whose level sets are the torus cosets at good primes) and
/// compare the largest class with `n_fiber`.
pub fn check_fibre_bound(
    model: GroupModel,
    d: &SubsetSpec,
    n_fiber: u64,
    primes: &[u64],
) -> Result<FibreBoundReport, TorusError> {
    let pi = quotient_map(model);
    let mut max_per_prime = Vec::new();
    for &p in primes {
        if !model.is_good_prime(p) {
            return Err(TorusError::BadReduction { p, reason: "bad prime for the model".into() });
        }
        let mut classes: BTreeMap<[u64; 3], u64> = BTreeMap::new();
        for x in subset_points_mod(model, d, p) {
            let key = [pi[1].eval_mod(&x, p), pi[2].eval_mod(&x, p), pi[3].eval_mod(&x, p)];
            *classes.entry(key).or_default() += 1;
        }
        max_per_prime.push(classes.values().copied().max().unwrap_or(0));
    }
    let holds = max_per_prime.iter().all(|&m| m <= n_fiber);
    Ok(FibreBoundReport { n_fiber, primes: primes.to_vec(), max_per_prime, holds })
}

/// All `F_p`-points of `D` (group points where every generator vanishes).
pub fn subset_points_mod(model: GroupModel, d: &SubsetSpec, p: u64) -> Vec<[u64; 4]> {
    (0..p)
        .into_par_iter()
        .flat_map_iter(|x0| {
            let mut out = Vec::new();
            for x1 in 0..p {
                for x2 in 0..p {
                    for x3 in 0..p {
                        let x = [x0, x1, x2, x3];
                        let v = model.defining_value(&x.map(|c| c as i128));
                        if nt::residue_i128(v - 1, p) == 0 && d.contains_mod(&x, p) {
                            out.push(x);
                        }
                    }
                }
            }
            out
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VanishingReport {
    pub primes: Vec<u64>,
    /// `F o pi` vanishes at every `F_p`-point of `D`.
    pub d_maps_into_zero_locus: bool,
    /// `F o pi` is not identically zero on `G(F_p)`.
    pub nonvanishing_somewhere: bool,
    pub failures: Vec<(u64, [u64; 4])>,
}

/// `pi(D) subset {F = 0}` modulo each prime, and `F o pi` not identically
/// zero there.
pub fn check_pi_d_vanishing(
    model: GroupModel,
    d: &SubsetSpec,
    f: &QuotientFunction,
    primes: &[u64],
) -> VanishingReport {
    let fg = f.on_group(model);
    let mut failures = Vec::new();
    let mut nonvanishing = true;
    for &p in primes {
        for x in subset_points_mod(model, d, p) {
            if fg.eval_mod(&x, p) != 0 {
                failures.push((p, x));
            }
        }
        let g = crate::finite_models::solutions_mod(model, p, 1, &Default::default()).unwrap_or_default();
        if !g.iter().any(|x| fg.eval_mod(x, p) != 0) {
            nonvanishing = false;
        }
    }
    VanishingReport { primes: primes.to_vec(), d_maps_into_zero_locus: failures.is_empty(), nonvanishing_somewhere: nonvanishing, failures }
}

/// `S_0`: prime factors of `f(P')` outside `S` and the divisors of
/// `alpha N`; each must exceed `M`.
pub fn bad_places(
    fac: &Factorization,
    excluded: &BTreeSet<u64>,
    alpha_n: u64,
    m: u64,
) -> Result<Vec<BigUint>, TorusError> {
    let mut out = Vec::new();
    for p in fac.primes() {
        if let Some(s) = p.to_u64() {
            if excluded.contains(&s) || alpha_n % s == 0 {
                continue;
            }
            if s <= m {
                return Err(TorusError::PipelineViolation { p: s.to_string(), m });
            }
        }
        out.push(p.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvoidanceState {
    pub p_prime: GroupElement,
    /// The torus element generating the orbit.
    pub q: GroupElement,
    pub torus_d: u64,
    pub s0: Vec<u64>,
    pub n_fiber: u64,
    pub r0: u64,
    pub subset: SubsetSpec,
}

impl AvoidanceState {
    /// `r0 N + 1`.
    pub fn orbit_len(&self) -> u64 {
        self.r0 * self.n_fiber + 1
    }

    /// `Theta = {Q^l P' : 0 <= l <= r0 N}`.
    pub fn theta(&self) -> Vec<GroupElement> {
        let mut out = Vec::with_capacity(self.orbit_len() as usize);
        let mut cur = self.p_prime.clone();
        for _ in 0..self.orbit_len() {
            out.push(cur.clone());
            cur = self.q.multiply(&cur).expect("same model");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeTable {
    pub p: u64,
    pub order: u64,
    /// Number of distinct reductions of `Theta` modulo `p`.
    pub orbit_distinct: u64,
    pub fibre_count: u64,
    /// Orbit indices whose reduction lies in `D`.
    pub bad_l: Vec<u64>,
    pub reductions: Vec<[u64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PigeonholeTranscript {
    pub orbit_len: u64,
    pub tables: Vec<PrimeTable>,
    pub fibre_product: u64,
    pub fibre_sum: u64,
    /// `r0 N + 1 > prod_p #D-fibre(F_p)`.
    pub product_ok: bool,
    /// `r0 N + 1 > sum_p #D-fibre(F_p)`.
    pub sum_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvoidanceResult {
    pub l: u64,
    pub p_dprime: GroupElement,
    pub transcript: PigeonholeTranscript,
}

/// Build the per-prime tables and the pigeonhole transcript.
pub fn pigeonhole_transcript(state: &AvoidanceState) -> Result<PigeonholeTranscript, TorusError> {
    let theta = state.theta();
    let len = state.orbit_len();
    let model = state.p_prime.model;
    let ts = TorusSpec::new(model, state.q.coords[0].clone(), state.q.coords[1].clone())?;
    let mut tables = Vec::new();
    for &p in &state.s0 {
        let order = torus_order_mod(&ts, p)?;
        if order <= len {
            return Err(TorusError::NotInjective { p, order, bound: len });
        }
        let reductions: Vec<[u64; 4]> = theta.iter().map(|g| residue_of(g, p)).collect();
        let distinct: BTreeSet<[u64; 4]> = reductions.iter().copied().collect();
        let fibre_count = fibre_points(model, &state.subset, state.torus_d, &reductions[0], p).len() as u64;
        let bad_l = reductions
            .iter()
            .enumerate()
            .filter(|(_, x)| state.subset.contains_mod(x, p))
            .map(|(l, _)| l as u64)
            .collect();
        tables.push(PrimeTable { p, order, orbit_distinct: distinct.len() as u64, fibre_count, bad_l, reductions });
    }
    let fibre_product = tables.iter().map(|t| t.fibre_count).product::<u64>();
    let fibre_sum = tables.iter().map(|t| t.fibre_count).sum::<u64>();
    Ok(PigeonholeTranscript {
        orbit_len: len,
        product_ok: len > fibre_product,
        sum_ok: len > fibre_sum,
        tables,
        fibre_product,
        fibre_sum,
    })
}

/// First `Q^l P'` whose reduction avoids `D` at every prime of `S_0`.
pub fn select_avoiding(state: &AvoidanceState) -> Result<AvoidanceResult, TorusError> {
    state.subset.validate()?;
    if state.s0.len() as u64 > state.r0 {
        return Err(TorusError::Pigeonhole(format!("#S0 = {} exceeds r0 = {}", state.s0.len(), state.r0)));
    }
    let transcript = pigeonhole_transcript(state)?;
    log::info!(
        "pigeonhole: |Theta| = {}, product = {}, sum = {}",
        transcript.orbit_len,
        transcript.fibre_product,
        transcript.fibre_sum
    );
    let bad: BTreeSet<u64> = transcript.tables.iter().flat_map(|t| t.bad_l.iter().copied()).collect();
    match (0..transcript.orbit_len).find(|l| !bad.contains(l)) {
        Some(l) => {
            let p_dprime = state.theta().swap_remove(l as usize);
            Ok(AvoidanceResult { l, p_dprime, transcript })
        }
        None => Err(TorusError::Pigeonhole(serde_json::to_string(&transcript).unwrap_or_default())),
    }
}

/// `Q^l` applied on the left keeps `f` fixed.
pub fn f_invariant_along_orbit(f: &RegularFunction, state: &AvoidanceState) -> bool {
    let v0 = f.eval(&state.p_prime.coords);
    state.theta().iter().all(|g| f.eval(&g.coords) == v0)
}

pub fn abs_u64(x: &BigInt) -> Option<u64> {
    x.abs().to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupSpec;
    use proptest::prelude::*;

    fn flag() -> GroupModel {
        GroupModel::Quat { a: 2, b: 3 }
    }

    fn pell_scan(d: u64) -> (u64, u64) {
        for v in 1u64.. {
            let n = 1 + d * v * v;
            let u = n.sqrt();
            if u * u == n {
                return (u, v);
            }
        }
        unreachable!()
    }

    #[test]
    fn pell_examples() {
        assert_eq!(pell_fundamental(2).unwrap(), (3.into(), 2.into()));
        assert_eq!(pell_fundamental(3).unwrap(), (2.into(), 1.into()));
        assert!(pell_fundamental(1).is_err());
        assert!(pell_fundamental(9).is_err());
        for d in 2..=30u64 {
            if d.sqrt().pow(2) == d {
                continue;
            }
            let (u, v) = pell_fundamental(d).unwrap();
            let (su, sv) = pell_scan(d);
            assert_eq!((u, v), (BigInt::from(su), BigInt::from(sv)), "d = {d}");
        }
    }

    #[test]
    fn order_examples() {
        let ts = TorusSpec::fundamental(flag()).unwrap();
        assert_eq!(torus_order_mod(&ts, 5).unwrap(), 6);
        assert_eq!(6 % torus_order_mod(&ts, 7).unwrap(), 0);
        assert!(torus_order_mod(&ts, 2).is_err());
        // brute force with full quaternion products
        let q = ts.element();
        for p in nt::primes_up_to(200).into_iter().filter(|&p| p > 2) {
            let mut k = 1;
            let mut cur = q.reduce_mod(p).unwrap();
            while !cur.is_identity() {
                cur = cur.multiply(&q.reduce_mod(p).unwrap()).unwrap();
                k += 1;
            }
            assert_eq!(torus_order_mod(&ts, p).unwrap(), k, "p = {p}");
        }
    }

    #[test]
    fn stabilizing_power_mod_four() {
        let ts = TorusSpec::fundamental(flag()).unwrap();
        assert_eq!(ts.stabilizing_exponent(4).unwrap(), 2);
        let q2 = ts.power(2);
        assert_eq!((q2.u.clone(), q2.v.clone()), (17.into(), 12.into()));
    }

    #[test]
    fn threshold_examples() {
        let ts = TorusSpec::fundamental(flag()).unwrap();
        assert_eq!(threshold_m(&ts, 0, 2, 500).unwrap().m, 1);
        // orders <= 3 happen exactly at primes dividing gcd(u_j - 1, v_j), j <= 3
        let r = threshold_m(&ts, 1, 2, 2000).unwrap();
        for p in nt::primes_up_to(2000).into_iter().filter(|&p| p > 2) {
            let small = torus_order_mod(&ts, p).unwrap() <= 3;
            assert_eq!(small, r.exceptional.contains(&p));
        }
        let q2 = ts.power(2);
        let r = threshold_m(&q2, 3, 2, 5000).unwrap();
        assert_eq!(r.bound, 7);
        assert_eq!(r.m, 239);
    }

    #[test]
    fn quotient_map_formula() {
        // pi(g) = (x^2 - a y^2 + b z^2 - ab w^2) i + 2a(xw - yz) j + 2(xz - a y w) ij
        let pi = quotient_map(flag());
        assert!(pi[0].is_zero());
        let g = [3i64, 2, 0, 0];
        assert_eq!(pi[1].eval_i64(&g), Some(1));
        for x in [[1i64, 0, 0, 0], [3, 2, 0, 0], [2, 0, 1, 0], [5, 3, 2, 1]] {
            let (a, b) = (2i128, 3i128);
            let [x, y, z, w] = x.map(|c| c as i128);
            assert_eq!(pi[1].eval_i64(&[x, y, z, w].map(|c| c as i64)), Some(x * x - a * y * y + b * z * z - a * b * w * w));
            assert_eq!(pi[2].eval_i64(&[x, y, z, w].map(|c| c as i64)), Some(2 * a * (x * w - y * z)));
            assert_eq!(pi[3].eval_i64(&[x, y, z, w].map(|c| c as i64)), Some(2 * (x * z - a * y * w)));
        }
    }

    #[test]
    fn fibre_bound_and_vanishing_flagship() {
        let d = SubsetSpec::flagship();
        let primes: Vec<u64> = nt::primes_up_to(50).into_iter().filter(|&p| p > 3).collect();
        let r = check_fibre_bound(flag(), &d, 2, &primes).unwrap();
        assert!(r.holds, "{r:?}");
        let v = check_pi_d_vanishing(flag(), &d, &QuotientFunction::ij_coefficient(), &primes[..4]);
        assert!(v.d_maps_into_zero_locus && v.nonvanishing_somewhere);
    }

    #[test]
    fn subset_containing_cosets_is_caught() {
        // {x = 0, y = 0} is a union of left torus cosets
        let d = SubsetSpec { generators: vec![RegularFunction::coordinate(0), RegularFunction::coordinate(1)], codimension: 2 };
        let r = check_fibre_bound(flag(), &d, 2, &[5, 7, 11]).unwrap();
        assert!(!r.holds);
        let v = check_pi_d_vanishing(flag(), &d, &QuotientFunction::ij_coefficient(), &[5, 7]);
        assert!(v.d_maps_into_zero_locus);
    }

    #[test]
    fn torus_points_count() {
        for p in [5u64, 7, 11, 13, 17, 19, 23] {
            let pts = torus_points_mod(2, p);
            let brute: Vec<(u64, u64)> = (0..p)
                .flat_map(|u| (0..p).map(move |v| (u, v)))
                .filter(|&(u, v)| (u * u + 2 * p * p - 2 * v * v) % p == 1 % p)
                .collect();
            assert_eq!(pts, brute);
        }
    }

    #[test]
    fn bad_places_examples() {
        let b = FactorBudget::default();
        let one = factor::factor_u64(1, &b).unwrap();
        assert!(bad_places(&one, &BTreeSet::new(), 1, 10).unwrap().is_empty());
        let pq = factor::factor_u64(101 * 103, &b).unwrap();
        let s0 = bad_places(&pq, &BTreeSet::new(), 1, 50).unwrap();
        assert_eq!(s0, vec![BigUint::from(101u32), BigUint::from(103u32)]);
        assert!(matches!(bad_places(&pq, &BTreeSet::new(), 1, 101), Err(TorusError::PipelineViolation { .. })));
    }

    #[test]
    fn empty_s0_returns_start() {
        let p = GroupElement::from_i64(flag(), [3, 2, 0, 0]).unwrap();
        let ts = TorusSpec::fundamental(flag()).unwrap();
        let st = AvoidanceState { p_prime: p.clone(), q: ts.element(), torus_d: 2, s0: vec![], n_fiber: 2, r0: 3, subset: SubsetSpec::flagship() };
        let r = select_avoiding(&st).unwrap();
        assert_eq!((r.l, r.p_dprime), (0, p));
    }

    #[test]
    fn single_prime_pigeonhole() {
        // start inside D modulo 241 so l = 0 is bad there
        let ts = TorusSpec::fundamental(flag()).unwrap().power(2);
        let p_prime = GroupElement::from_i64(flag(), [1, 0, 0, 0]).unwrap();
        let st = AvoidanceState { p_prime, q: ts.element(), torus_d: 2, s0: vec![241], n_fiber: 2, r0: 3, subset: SubsetSpec::flagship() };
        let r = select_avoiding(&st).unwrap();
        let t = &r.transcript;
        assert_eq!(t.tables[0].orbit_distinct, 7);
        assert!(t.tables[0].bad_l.contains(&0));
        assert!(t.tables[0].bad_l.len() as u64 <= t.tables[0].fibre_count);
        assert!(r.l >= 1);
        assert!(t.sum_ok && t.product_ok);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_is_left_torus_invariant(l in 0u64..7, pick in 0usize..4) {
            let pieces = [[3i64, 2, 0, 0], [2, 0, 1, 0], [-7, 0, 4, 0], [1, 0, 0, 0]];
            let g = GroupElement::from_i64(flag(), pieces[pick]).unwrap()
                .multiply(&GroupElement::from_i64(flag(), pieces[(pick + 1) % 4]).unwrap()).unwrap();
            let base = GroupElement::from_i64(flag(), [2, 0, 1, 0]).unwrap();
            let f = QuotientFunction::ij_coefficient().pullback(flag(), &base).unwrap();
            let q = TorusSpec::fundamental(flag()).unwrap().element().pow(l);
            prop_assert_eq!(f.eval(&q.multiply(&g).unwrap().coords), f.eval(&g.coords));
        }
    }

    #[test]
    fn spec_roundtrip() {
        let st = AvoidanceState {
            p_prime: GroupSpec::flagship(1).identity(),
            q: TorusSpec::fundamental(flag()).unwrap().element(),
            torus_d: 2,
            s0: vec![241],
            n_fiber: 2,
            r0: 3,
            subset: SubsetSpec::flagship(),
        };
        let js = serde_json::to_string(&st).unwrap();
        let back: AvoidanceState = serde_json::from_str(&js).unwrap();
        assert_eq!(back, st);
    }
}
