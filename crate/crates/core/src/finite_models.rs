//! Reductions of the group modulo `d`, zero loci of a regular function on
//! them, and the local densities built from those counts.
//!
//! Two routes produce residue points. Small moduli are scanned coordinate by
//! coordinate over all `d^4` tuples. Larger moduli are split into prime
//! powers; at each prime power three coordinates are enumerated and the
//! fourth is solved from the defining equation (a linear congruence for
//! `SL2`, a lookup in a table of values of `ab w^2` for the quaternion
//! model), and the pieces are recombined by CRT.
//!
//! The solution set of the defining equation and the image of the integral
//! points agree at every prime except `p = 2` for the quaternion model, where
//! a residue point need not lift. Densities use the image: a point modulo
//! `2^k` is kept only if it is the reduction of a solution modulo
//! `2^max(k+1, 3)`, which is enough for a 2-adic lift because the gradient
//! of the norm form has valuation at most one at any norm-one point.

use std::collections::{BTreeMap, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groups::{GroupError, GroupModel, GroupSpec, ResidueElement};
use crate::lattice_enum::{self, BallQuery, EnumError};
use crate::nt;
use crate::poly::{Poly, RegularFunction};

/// Moduli up to this bound are handled by the plain `d^4` scan.
pub const SCAN_LIMIT: u64 = 13;

/// Largest modulus accepted anywhere in this module.
pub const MAX_MODULUS: u64 = 1 << 31;

pub type Residue4 = [u64; 4];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FiniteError {
    #[error("invalid modulus {0}")]
    InvalidModulus(u64),
    #[error("modulus {modulus}: about {estimate} residues exceeds the budget of {limit}")]
    Budget { modulus: u64, estimate: u128, limit: u128 },
    #[error("prime {p} is excluded: {reason}")]
    BadReduction { p: u64, reason: String },
    #[error("empty sample: {0}")]
    EmptySample(String),
    #[error("gcd N is certified only for primes <= {bound}; d = {d} has prime factor {p}")]
    CertificationNeeded { d: u64, p: u64, bound: u64 },
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueBudget {
    /// Cap on materialised residue points.
    pub max_points: u128,
    /// Cap on enumerated coordinate triples in a counting pass.
    pub max_work: u128,
}

impl Default for ResidueBudget {
    fn default() -> Self {
        ResidueBudget { max_points: 20_000_000, max_work: 4_000_000_000 }
    }
}

fn id4(model: GroupModel) -> Residue4 {
    model.identity_coords().map(|c| c as u64)
}

fn on_group(model: GroupModel, x: &Residue4, m: u64) -> bool {
    let v = model.defining_value(&x.map(|c| c as i128));
    nt::residue_i128(v - 1, m) == 0
}

fn near_identity(model: GroupModel, x: &Residue4, g: u64) -> bool {
    let id = id4(model);
    (0..4).all(|i| x[i] % g == id[i] % g)
}

/// Reference scan over all `m^4` tuples.
pub fn scan_solutions(model: GroupModel, m: u64, g: u64) -> Vec<Residue4> {
    let mut out = Vec::new();
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let x = [a, b, c, d];
                    if on_group(model, &x, m) && near_identity(model, &x, g) {
                        out.push(x);
                    }
                }
            }
        }
    }
    out
}

/// Lookup from `ab (g t)^2 mod m` to the admissible `t`.
struct SquareTable {
    by_value: Vec<Vec<u32>>,
}

impl SquareTable {
    fn new(coef: u64, m: u64, g: u64) -> Self {
        let s = m / g;
        let mut by_value = vec![Vec::new(); m as usize];
        for t in 0..s {
            let w = g * t % m;
            let v = nt::mul_mod(coef, nt::mul_mod(w, w, m), m);
            by_value[v as usize].push(t as u32);
        }
        SquareTable { by_value }
    }
}

/// Solver for points modulo `m` that are congruent to the identity modulo
/// `g` (`g | m`), one shard per value of the first coordinate.
struct ShardSolver {
    model: GroupModel,
    m: u64,
    g: u64,
    table: Option<SquareTable>,
}

impl ShardSolver {
    fn new(model: GroupModel, m: u64, g: u64) -> Self {
        let table = match model {
            GroupModel::Sl2 => None,
            GroupModel::Quat { a, b } => {
                Some(SquareTable::new(nt::residue_i128(a as i128 * b as i128, m), m, g))
            }
        };
        ShardSolver { model, m, g, table }
    }

    fn lifts(&self) -> u64 {
        self.m / self.g
    }

    fn shard(&self, t0: u64, visit: &mut impl FnMut(Residue4)) {
        let (m, g) = (self.m, self.g);
        let s = self.lifts();
        let x0 = (1 + g * t0) % m;
        match self.model {
            GroupModel::Sl2 => {
                // x0 d - b c = 1 with d = 1 + g td  =>  x0 g td = 1 + b c - x0 (mod m)
                let alpha = nt::mul_mod(x0, g % m, m);
                let h = nt::gcd_u64(alpha, m);
                let mh = m / h;
                let inv = if mh == 1 { 0 } else { nt::inv_mod((alpha / h) % mh, mh).expect("coprime after division") };
                for tb in 0..s {
                    let b = g * tb % m;
                    for tc in 0..s {
                        let c = g * tc % m;
                        let beta = ((1 + nt::mul_mod(b, c, m)) % m + m - x0) % m;
                        if beta % h != 0 {
                            continue;
                        }
                        let td0 = if mh == 1 { 0 } else { nt::mul_mod((beta / h) % mh, inv, mh) };
                        let mut td = td0;
                        while td < s {
                            visit([x0, b, c, (1 + g * td) % m]);
                            td += mh;
                        }
                    }
                }
            }
            GroupModel::Quat { a, b } => {
                let table = self.table.as_ref().expect("quaternion table");
                let (ra, rb) = (nt::residue_i128(a as i128, m), nt::residue_i128(b as i128, m));
                let x2 = nt::mul_mod(x0, x0, m);
                for ty in 0..s {
                    let y = g * ty % m;
                    let ay2 = nt::mul_mod(ra, nt::mul_mod(y, y, m), m);
                    for tz in 0..s {
                        let z = g * tz % m;
                        let bz2 = nt::mul_mod(rb, nt::mul_mod(z, z, m), m);
                        // ab w^2 = 1 - x^2 + a y^2 + b z^2
                        let r = ((1 + ay2 + bz2) % m + m - x2) % m;
                        for &tw in &table.by_value[r as usize] {
                            visit([x0, y, z, g * tw as u64 % m]);
                        }
                    }
                }
            }
        }
    }

    fn check_work(&self, budget: &ResidueBudget) -> Result<(), FiniteError> {
        let s = self.lifts() as u128;
        let work = s * s * s;
        if work > budget.max_work {
            return Err(FiniteError::Budget { modulus: self.m, estimate: work, limit: budget.max_work });
        }
        Ok(())
    }

    fn collect(&self, budget: &ResidueBudget) -> Result<Vec<Residue4>, FiniteError> {
        self.check_work(budget)?;
        let s = self.lifts() as u128;
        // the solution count is within a small factor of s^3
        let estimate = s * s * s;
        if estimate > budget.max_points.saturating_mul(4) {
            return Err(FiniteError::Budget { modulus: self.m, estimate, limit: budget.max_points });
        }
        let shards: Vec<Vec<Residue4>> = (0..self.lifts())
            .into_par_iter()
            .map(|t0| {
                let mut v = Vec::new();
                self.shard(t0, &mut |x| v.push(x));
                v
            })
            .collect();
        let total: usize = shards.iter().map(|v| v.len()).sum();
        if total as u128 > budget.max_points {
            return Err(FiniteError::Budget { modulus: self.m, estimate: total as u128, limit: budget.max_points });
        }
        let mut out: Vec<Residue4> = shards.into_iter().flatten().collect();
        out.sort_unstable();
        Ok(out)
    }

    /// `(points, points with f = 0 mod m)`.
    fn count(&self, f: Option<&Poly>, budget: &ResidueBudget) -> Result<(u128, u128), FiniteError> {
        self.check_work(budget)?;
        let m = self.m;
        Ok((0..self.lifts())
            .into_par_iter()
            .map(|t0| {
                let (mut n, mut z) = (0u128, 0u128);
                self.shard(t0, &mut |x| {
                    n += 1;
                    if f.is_some_and(|f| f.eval_mod(&x, m) == 0) {
                        z += 1;
                    }
                });
                (n, z)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1)))
    }
}

fn check_modulus(d: u64) -> Result<(), FiniteError> {
    if d < 2 || d > MAX_MODULUS {
        return Err(FiniteError::InvalidModulus(d));
    }
    Ok(())
}

/// Solutions of the defining equation modulo `d` (`d >= 1`) that are
/// congruent to the identity modulo `g`, through the prime-power/CRT path.
pub fn solutions_mod(model: GroupModel, d: u64, g: u64, budget: &ResidueBudget) -> Result<Vec<Residue4>, FiniteError> {
    if d == 0 || d > MAX_MODULUS || g == 0 || d % g != 0 {
        return Err(FiniteError::InvalidModulus(d));
    }
    let mut acc: Vec<Residue4> = vec![[0; 4]];
    let mut acc_mod = 1u64;
    for (p, k) in nt::factor_small(d) {
        let q = p.pow(k);
        let gq = nt::gcd_u64(g, q);
        let part = ShardSolver::new(model, q, gq).collect(budget)?;
        let size = acc.len() as u128 * part.len() as u128;
        if size > budget.max_points {
            return Err(FiniteError::Budget { modulus: d, estimate: size, limit: budget.max_points });
        }
        let mut next = Vec::with_capacity(size as usize);
        for x in &acc {
            for y in &part {
                let mut z = [0u64; 4];
                for i in 0..4 {
                    z[i] = nt::crt_pair(x[i], acc_mod, y[i], q).expect("coprime prime powers").0;
                }
                next.push(z);
            }
        }
        acc = next;
        acc_mod *= q;
    }
    if d == 1 {
        return Ok(acc);
    }
    acc.sort_unstable();
    Ok(acc)
}

/// `Gamma_alpha[d]`: residue points modulo `d` congruent to the identity
/// modulo `gcd(alpha, d)`, with `alpha` the spec's level.
pub fn reduce_group(spec: &GroupSpec, d: u64, budget: &ResidueBudget) -> Result<Vec<ResidueElement>, FiniteError> {
    check_modulus(d)?;
    let g = nt::gcd_u64(spec.level, d);
    let pts = if d <= SCAN_LIMIT { scan_solutions(spec.model, d, g) } else { solutions_mod(spec.model, d, g, budget)? };
    Ok(pts.into_iter().map(|coords| ResidueElement { model: spec.model, modulus: d, coords }).collect())
}

/// Points of `reduce_group(d)` where `f` vanishes modulo `d`.
pub fn fiber_zero_locus(
    spec: &GroupSpec,
    f: &RegularFunction,
    d: u64,
    budget: &ResidueBudget,
) -> Result<Vec<ResidueElement>, FiniteError> {
    Ok(reduce_group(spec, d, budget)?.into_iter().filter(|x| f.eval_mod(&x.coords, d) == 0).collect())
}

fn needs_lift_filter(model: GroupModel, p: u64) -> bool {
    model.is_quaternion() && p == 2
}

/// Counts over the image of the integral points modulo `p^k` (congruent to
/// the identity modulo `p^j`): `(#image, #image with f = 0 mod p^k)`.
pub fn image_counts_prime_power(
    model: GroupModel,
    p: u64,
    k: u32,
    j: u32,
    f: Option<&Poly>,
    budget: &ResidueBudget,
) -> Result<(u128, u128), FiniteError> {
    let q = p.checked_pow(k).filter(|&q| q <= MAX_MODULUS).ok_or(FiniteError::InvalidModulus(p))?;
    let j = j.min(k);
    if !needs_lift_filter(model, p) {
        return ShardSolver::new(model, q, p.pow(j)).count(f, budget);
    }
    let big_k = (k + 1).max(3);
    let big_q = p.pow(big_k);
    let lifted = ShardSolver::new(model, big_q, p.pow(j)).collect(budget)?;
    let image: HashSet<Residue4> = lifted.into_iter().map(|x| x.map(|c| c % q)).collect();
    let zeros = match f {
        Some(f) => image.iter().filter(|x| f.eval_mod(x, q) == 0).count() as u128,
        None => 0,
    };
    Ok((image.len() as u128, zeros))
}

/// The image of the integral points modulo `p^k`, materialised.
pub fn image_prime_power(
    model: GroupModel,
    p: u64,
    k: u32,
    j: u32,
    budget: &ResidueBudget,
) -> Result<Vec<Residue4>, FiniteError> {
    let q = p.checked_pow(k).filter(|&q| q <= MAX_MODULUS).ok_or(FiniteError::InvalidModulus(p))?;
    let j = j.min(k);
    if !needs_lift_filter(model, p) {
        return ShardSolver::new(model, q, p.pow(j)).collect(budget);
    }
    let big_q = p.pow((k + 1).max(3));
    let lifted = ShardSolver::new(model, big_q, p.pow(j)).collect(budget)?;
    let mut image: Vec<Residue4> = lifted.into_iter().map(|x| x.map(|c| c % q)).collect();
    image.sort_unstable();
    image.dedup();
    Ok(image)
}

/// `(#Gamma_alpha[m], #Gamma_alpha^f[m])` over the integral image, by CRT.
pub fn image_counts(
    spec: &GroupSpec,
    f: Option<&Poly>,
    m: u64,
    budget: &ResidueBudget,
) -> Result<(u128, u128), FiniteError> {
    if m == 0 || m > MAX_MODULUS {
        return Err(FiniteError::InvalidModulus(m));
    }
    let mut total = (1u128, 1u128);
    for (p, k) in nt::factor_small(m) {
        let j = nt::valuation(spec.level, p).min(k);
        let (n, z) = image_counts_prime_power(spec.model, p, k, j, f, budget)?;
        total = (total.0 * n, total.1 * z);
    }
    if f.is_none() {
        total.1 = 0;
    }
    Ok(total)
}

/// `#G(Z/m)` for the whole group (no level), from one-dimensional
/// convolutions rather than point enumeration.
pub fn group_order_mod(model: GroupModel, m: u64) -> Result<u128, FiniteError> {
    if m == 0 || m > 1 << 22 {
        return Err(FiniteError::InvalidModulus(m));
    }
    let mut total = 1u128;
    for (p, k) in nt::factor_small(m) {
        total *= group_order_prime_power(model, p.pow(k));
    }
    Ok(total)
}

fn group_order_prime_power(model: GroupModel, q: u64) -> u128 {
    let qs = q as usize;
    match model {
        GroupModel::Sl2 => {
            // P(n) = #{(a, d): a d = n}; det = 1 means b c = a d - 1
            let mut prod = vec![0u128; qs];
            for a in 0..q {
                for d in 0..q {
                    prod[nt::mul_mod(a, d, q) as usize] += 1;
                }
            }
            (0..qs).map(|n| prod[n] * prod[(n + qs - 1) % qs]).sum()
        }
        GroupModel::Quat { a, b } => {
            // x^2 - a y^2 = 1 + b (z^2 - a w^2)
            let ra = nt::residue_i128(a as i128, q);
            let rb = nt::residue_i128(b as i128, q);
            let mut rep = vec![0u128; qs];
            for x in 0..q {
                let x2 = nt::mul_mod(x, x, q);
                for y in 0..q {
                    let ay2 = nt::mul_mod(ra, nt::mul_mod(y, y, q), q);
                    rep[((x2 + q - ay2) % q) as usize] += 1;
                }
            }
            (0..q).map(|n| rep[((1 + nt::mul_mod(rb, n, q)) % q) as usize] * rep[n as usize]).sum()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HenselReport {
    pub p: u64,
    pub m: u32,
    pub count_p: u128,
    pub count_pm: u128,
    pub predicted: u128,
    pub holds: bool,
}

/// Compare `#G(Z/p^m)` with `#G(F_p) p^(3(m-1))`.
pub fn hensel_check(spec: &GroupSpec, p: u64, m: u32) -> Result<HenselReport, FiniteError> {
    if !nt::is_prime_u64(p) {
        return Err(FiniteError::BadReduction { p, reason: "not a prime".into() });
    }
    if m == 0 {
        return Err(FiniteError::InvalidModulus(0));
    }
    if !spec.model.is_good_prime(p) {
        return Err(FiniteError::BadReduction { p, reason: format!("{p} divides 2ab for {}", spec.model) });
    }
    let q = p.checked_pow(m).filter(|&q| q <= 1 << 22).ok_or(FiniteError::InvalidModulus(p))?;
    let count_p = group_order_mod(spec.model, p)?;
    let count_pm = group_order_mod(spec.model, q)?;
    let predicted = count_p * (p as u128).pow(3 * (m - 1));
    Ok(HenselReport { p, m, count_p, count_pm, predicted, holds: predicted == count_pm })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueWitness {
    pub modulus: u64,
    pub point: Residue4,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcdCertificate {
    pub n: u64,
    pub height_bound: u64,
    pub sample_size: u64,
    pub prime_bound: u64,
    /// Prime powers `p^v || N` for which every residue point of
    /// `Gamma_alpha[p^v]` has `f = 0 mod p^v`.
    pub divisibility_checked: Vec<u64>,
    /// For prime powers `q <= B` coprime to `N alpha`, a residue point with
    /// `f != 0 mod q`.
    pub witnesses: Vec<ResidueWitness>,
    pub certified: bool,
}

/// Empirical `gcd f(Gamma_alpha)`, cross-checked by reductions.
pub fn certify_gcd(
    spec: &GroupSpec,
    f: &RegularFunction,
    height_bound: u64,
    prime_bound: u64,
    budget: &ResidueBudget,
) -> Result<GcdCertificate, FiniteError> {
    let pts = lattice_enum::enumerate_ball_small(&BallQuery::gamma(*spec, height_bound))?;
    if pts.len() < 100 {
        return Err(FiniteError::EmptySample(format!(
            "only {} points of Gamma_{} below height {height_bound}; need 100",
            pts.len(),
            spec.level
        )));
    }
    let mut g = BigInt::zero();
    for p in &pts {
        let v = match f.eval_i64(p) {
            Some(v) => BigInt::from(v),
            None => f.eval(&p.map(BigInt::from)),
        };
        g = g.gcd(&v);
    }
    if g.is_zero() {
        return Err(FiniteError::EmptySample(format!("{} vanishes on the whole sample", f.name)));
    }
    let n = g.to_u64().ok_or_else(|| FiniteError::EmptySample("gcd exceeds 64 bits".into()))?;

    let mut divisibility_checked = Vec::new();
    let mut certified = true;
    if f.poly().constant_value().is_none() {
        for (p, v) in nt::factor_small(n) {
            let q = p.pow(v);
            let j = nt::valuation(spec.level, p).min(v);
            let image = image_prime_power(spec.model, p, v, j, budget)?;
            if image.iter().all(|x| f.eval_mod(x, q) == 0) {
                divisibility_checked.push(q);
            } else {
                certified = false;
            }
        }
    }

    let mut witnesses = Vec::new();
    for p in nt::primes_up_to(prime_bound) {
        if n % p == 0 || spec.level % p == 0 {
            continue;
        }
        let mut q = p;
        let mut e = 1;
        while q <= prime_bound {
            match first_nonvanishing(spec.model, p, e, f, budget)? {
                Some(point) => witnesses.push(ResidueWitness { modulus: q, point }),
                None => certified = false,
            }
            e += 1;
            q = match q.checked_mul(p) {
                Some(v) => v,
                None => break,
            };
        }
    }
    Ok(GcdCertificate {
        n,
        height_bound,
        sample_size: pts.len() as u64,
        prime_bound,
        divisibility_checked,
        witnesses,
        certified,
    })
}

fn first_nonvanishing(
    model: GroupModel,
    p: u64,
    e: u32,
    f: &RegularFunction,
    budget: &ResidueBudget,
) -> Result<Option<Residue4>, FiniteError> {
    let q = p.pow(e);
    if needs_lift_filter(model, p) {
        return Ok(image_prime_power(model, p, e, 0, budget)?.into_iter().find(|x| f.eval_mod(x, q) != 0));
    }
    let solver = ShardSolver::new(model, q, 1);
    for t0 in 0..solver.lifts() {
        let mut found = None;
        solver.shard(t0, &mut |x| {
            if found.is_none() && f.eval_mod(&x, q) != 0 {
                found = Some(x);
            }
        });
        if found.is_some() {
            return Ok(found);
        }
    }
    Ok(None)
}

pub type Rational = Ratio<u128>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityRow {
    pub d: u64,
    pub count_group: u128,
    pub count_fiber: u128,
    pub rho_numerator: u128,
    pub rho_denominator: u128,
}

impl DensityRow {
    pub fn rho(&self) -> Rational {
        Ratio::new(self.rho_numerator, self.rho_denominator)
    }
}

/// `rho_f(d) = d #Gamma^f[dN] / #Gamma[dN]`, zero when `gcd(d, N alpha) > 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalDensityTable {
    pub spec: GroupSpec,
    pub f: RegularFunction,
    pub gcd: GcdCertificate,
    pub rows: BTreeMap<u64, DensityRow>,
    #[serde(skip, default)]
    budget: ResidueBudget,
}

impl LocalDensityTable {
    pub fn new(spec: GroupSpec, f: RegularFunction, gcd: GcdCertificate) -> Self {
        LocalDensityTable { spec, f, gcd, rows: BTreeMap::new(), budget: ResidueBudget::default() }
    }

    pub fn with_budget(mut self, budget: ResidueBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn n(&self) -> u64 {
        self.gcd.n
    }

    pub fn row(&mut self, d: u64) -> Result<DensityRow, FiniteError> {
        if let Some(r) = self.rows.get(&d) {
            return Ok(r.clone());
        }
        let r = self.compute(d)?;
        self.rows.insert(d, r.clone());
        Ok(r)
    }

    pub fn rho(&mut self, d: u64) -> Result<Rational, FiniteError> {
        Ok(self.row(d)?.rho())
    }

    fn compute(&self, d: u64) -> Result<DensityRow, FiniteError> {
        if d == 0 {
            return Err(FiniteError::InvalidModulus(0));
        }
        let n = self.gcd.n;
        let zero = DensityRow { d, count_group: 0, count_fiber: 0, rho_numerator: 0, rho_denominator: 1 };
        if nt::gcd_u64(d, n) > 1 || nt::gcd_u64(d, self.spec.level) > 1 {
            return Ok(zero);
        }
        for (p, _) in nt::factor_small(d) {
            if p > self.gcd.prime_bound {
                return Err(FiniteError::CertificationNeeded { d, p, bound: self.gcd.prime_bound });
            }
        }
        let m = d.checked_mul(n).ok_or(FiniteError::InvalidModulus(d))?;
        let (cg, cf) = image_counts(&self.spec, Some(self.f.poly()), m, &self.budget)?;
        let rho = Ratio::new(d as u128 * cf, cg);
        Ok(DensityRow {
            d,
            count_group: cg,
            count_fiber: cf,
            rho_numerator: *rho.numer(),
            rho_denominator: *rho.denom(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangWeilRow {
    pub p: u64,
    pub count_v: u128,
    pub count_g: u128,
    pub observed_c: f64,
    pub good: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangWeilReport {
    pub rows: Vec<LangWeilRow>,
    /// Running maximum of the observed constants over good primes.
    pub c_max: f64,
}

/// `#V_f(F_p) / p^2` for each listed prime.
pub fn langweil_report(
    model: GroupModel,
    f: &RegularFunction,
    primes: &[u64],
    budget: &ResidueBudget,
) -> Result<LangWeilReport, FiniteError> {
    let mut rows = Vec::new();
    let mut c_max = 0.0f64;
    for &p in primes {
        if !nt::is_prime_u64(p) {
            return Err(FiniteError::BadReduction { p, reason: "not a prime".into() });
        }
        let (count_g, count_v) = image_counts_prime_power(model, p, 1, 0, Some(f.poly()), budget)?;
        let observed_c = count_v as f64 / (p as f64 * p as f64);
        let good = model.is_good_prime(p);
        if good {
            c_max = c_max.max(observed_c);
        }
        rows.push(LangWeilRow { p, count_v, count_g, observed_c, good });
    }
    Ok(LangWeilReport { rows, c_max })
}

/// Smallest power-of-two height `T <= t_max` such that the integral points
/// of `Gamma_alpha` below `T` reduce onto every point of `Gamma_alpha[d]`.
pub fn reduction_coverage_height(spec: &GroupSpec, d: u64, t_max: u64) -> Result<Option<u64>, FiniteError> {
    let target: HashSet<Residue4> =
        reduce_group(spec, d, &ResidueBudget::default())?.into_iter().map(|r| r.coords).collect();
    let mut t = 2u64;
    while t <= t_max {
        let pts = lattice_enum::enumerate_ball_small(&BallQuery::gamma(*spec, t))?;
        let hit: HashSet<Residue4> = pts.iter().map(|p| p.map(|c| nt::residue_i128(c as i128, d))).collect();
        if target.is_subset(&hit) {
            return Ok(Some(t));
        }
        t *= 2;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Ring;
    use proptest::prelude::*;

    fn sl2() -> GroupSpec {
        GroupSpec::sl2(1).unwrap()
    }

    fn trace() -> RegularFunction {
        RegularFunction::sl2_trace()
    }

    fn b() -> ResidueBudget {
        ResidueBudget::default()
    }

    #[test]
    fn sl2_reduction_sizes() {
        assert_eq!(reduce_group(&sl2(), 2, &b()).unwrap().len(), 6);
        assert_eq!(reduce_group(&sl2(), 3, &b()).unwrap().len(), 24);
        assert_eq!(reduce_group(&sl2(), 4, &b()).unwrap().len(), 48);
        assert!(matches!(reduce_group(&sl2(), 1, &b()), Err(FiniteError::InvalidModulus(1))));
    }

    #[test]
    fn lifted_path_matches_scan() {
        let models = [GroupModel::Sl2, GroupModel::Quat { a: 2, b: 3 }, GroupModel::Quat { a: -1, b: 3 }];
        for model in models {
            for d in 2..=SCAN_LIMIT {
                for g in [1, 2, 3] {
                    if d % g != 0 {
                        continue;
                    }
                    assert_eq!(solutions_mod(model, d, g, &b()).unwrap(), scan_solutions(model, d, g), "{model} d={d} g={g}");
                }
            }
        }
    }

    #[test]
    fn convolution_order_matches_enumeration() {
        for model in [GroupModel::Sl2, GroupModel::Quat { a: 2, b: 3 }, GroupModel::Quat { a: 5, b: -2 }] {
            for m in [2u64, 3, 4, 5, 7, 8, 9, 12, 25, 27] {
                assert_eq!(
                    group_order_mod(model, m).unwrap(),
                    solutions_mod(model, m, 1, &b()).unwrap().len() as u128,
                    "{model} mod {m}"
                );
            }
        }
    }

    #[test]
    fn hensel_examples() {
        let r = hensel_check(&sl2(), 2, 2).unwrap();
        assert!(r.holds);
        assert_eq!((r.count_p, r.count_pm), (6, 48));
        let r = hensel_check(&sl2(), 3, 2).unwrap();
        assert_eq!((r.count_p, r.count_pm), (24, 24 * 27));
        let q = GroupSpec::flagship(1);
        let r = hensel_check(&q, 5, 2).unwrap();
        assert!(r.holds);
        assert_eq!(r.count_pm, solutions_mod(q.model, 25, 1, &b()).unwrap().len() as u128);
        assert!(matches!(hensel_check(&q, 3, 2), Err(FiniteError::BadReduction { p: 3, .. })));
        assert!(matches!(hensel_check(&q, 2, 2), Err(FiniteError::BadReduction { p: 2, .. })));
    }

    #[test]
    fn hensel_law_small_primes() {
        for spec in [sl2(), GroupSpec::flagship(1)] {
            for p in nt::primes_up_to(11) {
                if !spec.model.is_good_prime(p) {
                    continue;
                }
                for m in 1..=3 {
                    assert!(hensel_check(&spec, p, m).unwrap().holds, "{} p={p} m={m}", spec.model);
                }
            }
        }
    }

    #[test]
    fn fiber_examples() {
        let f = RegularFunction::new("trace - 2", trace().poly().sub(&Poly::constant(2))).unwrap();
        let fib = fiber_zero_locus(&sl2(), &f, 2, &b()).unwrap();
        let expect: Vec<_> = reduce_group(&sl2(), 2, &b())
            .unwrap()
            .into_iter()
            .filter(|x| (x.coords[0] + x.coords[3]) % 2 == 0)
            .collect();
        assert_eq!(fib, expect);
        let one = RegularFunction::constant(1).unwrap();
        assert!(fiber_zero_locus(&sl2(), &one, 7, &b()).unwrap().is_empty());
        assert_eq!(fiber_zero_locus(&sl2(), &trace(), 3, &b()).unwrap().len(), 6);
    }

    #[test]
    fn gcd_examples() {
        let c = certify_gcd(&sl2(), &trace(), 16, 30, &b()).unwrap();
        assert_eq!(c.n, 1);
        assert!(c.certified);
        let g12 = RegularFunction::coordinate(1);
        let c = certify_gcd(&GroupSpec::sl2(2).unwrap(), &g12, 32, 30, &b()).unwrap();
        assert_eq!(c.n, 2);
        assert_eq!(c.divisibility_checked, vec![2]);
        assert!(c.certified);
        let k = RegularFunction::constant(-12).unwrap();
        assert_eq!(certify_gcd(&sl2(), &k, 8, 10, &b()).unwrap().n, 12);
        assert!(matches!(certify_gcd(&sl2(), &trace(), 2, 10, &b()), Err(FiniteError::EmptySample(_))));
    }

    #[test]
    fn density_examples() {
        let cert = certify_gcd(&sl2(), &trace(), 16, 60, &b()).unwrap();
        let mut t = LocalDensityTable::new(sl2(), trace(), cert);
        assert_eq!(t.rho(3).unwrap(), Ratio::new(3, 4));
        let r6 = t.rho(6).unwrap();
        assert_eq!(r6, t.rho(2).unwrap() * t.rho(3).unwrap());
        assert!(matches!(t.rho(61), Err(FiniteError::CertificationNeeded { p: 61, .. })));

        let g12 = RegularFunction::coordinate(1);
        let spec2 = GroupSpec::sl2(2).unwrap();
        let cert = certify_gcd(&spec2, &g12, 32, 30, &b()).unwrap();
        let mut t = LocalDensityTable::new(spec2, g12, cert);
        assert_eq!(t.rho(4).unwrap(), Ratio::from_integer(0));
        // upper-right entry vanishes on p(p-1)... of the p^3 - p points: rho = p * p(p-1) / (p^3 - p) = p/(p+1)
        assert_eq!(t.rho(5).unwrap(), Ratio::new(5, 6));
    }

    #[test]
    fn multiplicativity_up_to_60() {
        let q = GroupSpec::flagship(1);
        let f = RegularFunction::new("F", Poly::var(0).mul(&Poly::var(2)).sub(&Poly::var(1).mul(&Poly::var(3)).scale(2)).scale(2)).unwrap();
        for (spec, f) in [(sl2(), trace()), (q, f)] {
            let cert = certify_gcd(&spec, &f, 24, 60, &b()).unwrap();
            let mut t = LocalDensityTable::new(spec, f, cert);
            for d1 in 1..=60u64 {
                for d2 in 1..=60 / d1 {
                    if nt::gcd_u64(d1, d2) == 1 {
                        assert_eq!(t.rho(d1 * d2).unwrap(), t.rho(d1).unwrap() * t.rho(d2).unwrap(), "d1={d1} d2={d2}");
                    }
                }
            }
        }
    }

    #[test]
    fn lift_filter_agrees_with_integral_points() {
        // residues of integral points modulo 4 must all lie in the image
        let q = GroupSpec::flagship(1);
        let image: HashSet<Residue4> = image_prime_power(q.model, 2, 2, 0, &b()).unwrap().into_iter().collect();
        let pts = lattice_enum::enumerate_ball_small(&BallQuery::new(q, 48)).unwrap();
        let hit: HashSet<Residue4> = pts.iter().map(|p| p.map(|c| nt::residue_i128(c as i128, 4))).collect();
        assert!(hit.is_subset(&image));
        assert_eq!(hit, image);
    }

    #[test]
    fn langweil_examples() {
        let r = langweil_report(GroupModel::Sl2, &trace(), &[3, 5, 7], &b()).unwrap();
        assert!(r.c_max.is_finite() && r.c_max > 0.0);
        for row in &r.rows {
            assert_eq!(row.count_g, (row.p as u128).pow(3) - row.p as u128);
        }
        let one = RegularFunction::constant(1).unwrap();
        let r = langweil_report(GroupModel::Sl2, &one, &[3, 5, 7], &b()).unwrap();
        assert_eq!(r.c_max, 0.0);
    }

    #[test]
    fn surjectivity_small_moduli() {
        for d in 2..=12u64 {
            assert!(reduction_coverage_height(&sl2(), d, 64).unwrap().is_some(), "SL2 d={d}");
        }
        let q = GroupSpec::flagship(1);
        for d in [5u64, 7, 11] {
            assert!(reduction_coverage_height(&q, d, 128).unwrap().is_some(), "quat d={d}");
        }
    }

    #[test]
    fn weak_primitivity() {
        let cert = certify_gcd(&sl2(), &trace(), 16, 50, &b()).unwrap();
        let n = cert.n;
        for p in nt::primes_up_to(50) {
            let (g, z) = image_counts(&sl2(), Some(trace().poly()), p * n, &b()).unwrap();
            assert!(z < g);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn crt_path_matches_scan_with_levels(d in 2u64..=13, level in 1u64..5) {
            let g = nt::gcd_u64(level, d);
            for model in [GroupModel::Sl2, GroupModel::Quat { a: 2, b: 3 }] {
                prop_assert_eq!(solutions_mod(model, d, g, &b()).unwrap(), scan_solutions(model, d, g));
            }
        }
    }
}
