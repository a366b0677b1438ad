//! Combinatorial sieve data model: the multiset `A`, admitted primes `P`,
//! density function `omega`, sifting level `z`; exact sifting, remainder
//! terms, and literal checks of the three sieve hypotheses.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nt;

/// Products of admitted primes above this are refused by the
/// inclusion-exclusion evaluator.
pub const INCLUSION_EXCLUSION_LIMIT: u64 = 1_000_000;

/// Remainder sums never look at moduli beyond this.
pub const REMAINDER_D_CAP: u64 = 100_000;

/// Largest element for which divisor counts go through a value histogram.
const HISTOGRAM_LIMIT: u64 = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SieveError {
    #[error("element at index {0} is zero")]
    ZeroElement(usize),
    #[error("omega({p}) = {value} is nonzero but {p} is not an admitted prime")]
    OmegaOutsideP { p: u64, value: String },
    #[error("omega({p})/p = {value}/{p} is outside [0, 1)")]
    OmegaRange { p: u64, value: String },
    #[error("sifting level must be positive and finite, got {0}")]
    BadLevel(String),
    #[error("P(z) = {0} exceeds the inclusion-exclusion limit")]
    TooManyPrimes(String),
    #[error("{0} is not a prime")]
    NotPrime(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "primes", rename_all = "snake_case")]
pub enum PrimeSet {
    All,
    Only(BTreeSet<u64>),
    AllExcept(BTreeSet<u64>),
}

impl PrimeSet {
    pub fn contains(&self, p: u64) -> bool {
        match self {
            PrimeSet::All => true,
            PrimeSet::Only(s) => s.contains(&p),
            PrimeSet::AllExcept(s) => !s.contains(&p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Omega {
    Constant(BigRational),
    Table(BTreeMap<u64, BigRational>),
}

impl Omega {
    pub fn constant(v: i64) -> Self {
        Omega::Constant(BigRational::from_integer(v.into()))
    }

    fn raw(&self, p: u64) -> BigRational {
        match self {
            Omega::Constant(c) => c.clone(),
            Omega::Table(t) => t.get(&p).cloned().unwrap_or_else(BigRational::zero),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SieveProblem {
    a: Vec<u64>,
    primes: PrimeSet,
    omega: Omega,
    z: f64,
    /// Admitted primes below `z`, ascending.
    grid: Vec<u64>,
}

impl SieveProblem {
    pub fn new(a: Vec<u64>, primes: PrimeSet, omega: Omega, z: f64) -> Result<Self, SieveError> {
        if !(z.is_finite() && z > 0.0) {
            return Err(SieveError::BadLevel(z.to_string()));
        }
        if let Some(i) = a.iter().position(|&v| v == 0) {
            return Err(SieveError::ZeroElement(i));
        }
        let grid: Vec<u64> = nt::primes_below(z).into_iter().filter(|&p| primes.contains(p)).collect();
        if let Omega::Table(t) = &omega {
            for (&p, v) in t {
                if !nt::is_prime_u64(p) {
                    return Err(SieveError::NotPrime(p));
                }
                if !primes.contains(p) && !v.is_zero() {
                    return Err(SieveError::OmegaOutsideP { p, value: v.to_string() });
                }
                check_range(p, v)?;
            }
        }
        if let Omega::Constant(c) = &omega {
            for &p in &grid {
                check_range(p, c)?;
            }
        }
        Ok(SieveProblem { a, primes, omega, z, grid })
    }

    pub fn elements(&self) -> &[u64] {
        &self.a
    }

    pub fn x(&self) -> u64 {
        self.a.len() as u64
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn primes(&self) -> &PrimeSet {
        &self.primes
    }

    /// Admitted primes below `z`.
    pub fn prime_grid(&self) -> &[u64] {
        &self.grid
    }

    pub fn with_level(&self, z: f64) -> Result<Self, SieveError> {
        SieveProblem::new(self.a.clone(), self.primes.clone(), self.omega.clone(), z)
    }

    /// `omega(p)`, zero off `P`.
    pub fn omega(&self, p: u64) -> BigRational {
        if self.primes.contains(p) {
            self.omega.raw(p)
        } else {
            BigRational::zero()
        }
    }

    /// Multiplicative extension to squarefree `d`.
    pub fn omega_d(&self, d: u64) -> BigRational {
        nt::factor_small(d).into_iter().fold(BigRational::one(), |acc, (p, e)| {
            if e > 1 {
                BigRational::zero()
            } else {
                acc * self.omega(p)
            }
        })
    }

    pub fn count_divisible(&self, d: u64) -> u64 {
        self.a.par_iter().filter(|&&v| v % d == 0).count() as u64
    }
}

fn check_range(p: u64, v: &BigRational) -> Result<(), SieveError> {
    if v.is_negative() || *v >= BigRational::from_integer(p.into()) {
        return Err(SieveError::OmegaRange { p, value: v.to_string() });
    }
    Ok(())
}

fn to_f64(r: &BigRational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

/// `#{a in A : gcd(a, P(z)) = 1}`.
pub fn sift(problem: &SieveProblem) -> u64 {
    let grid = &problem.grid;
    problem.a.par_iter().filter(|&&v| grid.iter().all(|&p| v % p != 0)).count() as u64
}

/// `sum_{d | P(z)} mu(d) #A_d`, evaluated divisor by divisor.
pub fn inclusion_exclusion(problem: &SieveProblem) -> Result<i64, SieveError> {
    let mut prod = 1u64;
    for &p in &problem.grid {
        prod = prod.saturating_mul(p);
        if prod > INCLUSION_EXCLUSION_LIMIT {
            return Err(SieveError::TooManyPrimes(format!(">= {prod}")));
        }
    }
    let k = problem.grid.len();
    let mut total = 0i64;
    for mask in 0u64..(1 << k) {
        let mut d = 1u64;
        for (i, &p) in problem.grid.iter().enumerate() {
            if mask >> i & 1 == 1 {
                d *= p;
            }
        }
        let count = problem.a.iter().filter(|&&v| v % d == 0).count() as i64;
        total += if mask.count_ones() % 2 == 0 { count } else { -count };
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderRecord {
    pub d: u64,
    pub a_d: u64,
    /// `omega(d) X / d`, as a reduced fraction string.
    pub main_term: String,
    /// `#A_d - omega(d) X / d`.
    pub remainder: String,
    pub remainder_f64: f64,
    pub nu: u32,
    pub weight: u64,
    #[serde(skip)]
    pub exact_remainder: Option<BigRational>,
    #[serde(skip)]
    pub exact_main: Option<BigRational>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderTable {
    pub records: Vec<RemainderRecord>,
    /// `sum mu^2(d) 3^nu(d) |R(d)|`.
    pub weighted_sum: f64,
    pub d_max: u64,
}

/// Remainders for squarefree `d <= d_max` whose prime factors are admitted.
pub fn remainders(problem: &SieveProblem, d_max: u64) -> RemainderTable {
    let d_max = d_max.min(REMAINDER_D_CAP);
    let x = BigRational::from_integer(BigInt::from(problem.x()));
    let ds: Vec<u64> = (1..=d_max)
        .filter(|&d| {
            let f = nt::factor_small(d);
            f.iter().all(|&(p, e)| e == 1 && problem.primes.contains(p))
        })
        .collect();
    let max = problem.a.iter().copied().max().unwrap_or(0);
    let histogram: Option<Vec<u32>> = (max <= HISTOGRAM_LIMIT).then(|| {
        let mut h = vec![0u32; max as usize + 1];
        for &v in &problem.a {
            h[v as usize] += 1;
        }
        h
    });
    let records: Vec<RemainderRecord> = ds
        .par_iter()
        .map(|&d| {
            let a_d = match &histogram {
                Some(h) => (d..=max).step_by(d as usize).map(|v| h[v as usize] as u64).sum(),
                None => problem.a.iter().filter(|&&v| v % d == 0).count() as u64,
            };
            let main = problem.omega_d(d) * &x / BigRational::from_integer(d.into());
            let rem = BigRational::from_integer(a_d.into()) - &main;
            let nu = nt::factor_small(d).len() as u32;
            RemainderRecord {
                d,
                a_d,
                main_term: main.to_string(),
                remainder: rem.to_string(),
                remainder_f64: to_f64(&rem),
                nu,
                weight: 3u64.pow(nu),
                exact_remainder: Some(rem),
                exact_main: Some(main),
            }
        })
        .collect();
    let weighted_sum = records.iter().map(|r| r.weight as f64 * r.remainder_f64.abs()).sum();
    RemainderTable { records, weighted_sum, d_max }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveParams {
    pub c: f64,
    pub kappa: f64,
    /// Fitted from the data when absent.
    pub a0: Option<f64>,
    pub tau: f64,
    pub a1: f64,
    /// Fitted from the data when absent.
    pub a2: Option<f64>,
}

impl SieveParams {
    /// Constants read off the density data: `c` halfway between the largest
    /// `omega(p)/p` and 1, `kappa` the largest `omega(p)`.
    pub fn fitted(problem: &SieveProblem) -> Self {
        let max_ratio = problem.grid.iter().map(|&p| to_f64(&problem.omega(p)) / p as f64).fold(0.0, f64::max);
        let max_omega = problem.grid.iter().map(|&p| to_f64(&problem.omega(p))).fold(0.0, f64::max);
        SieveParams { c: (1.0 + max_ratio) / 2.0, kappa: max_omega.max(1e-6), a0: None, tau: 1.0, a1: 1.0, a2: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition1 {
    pub c: f64,
    pub max_ratio: f64,
    pub witnesses: Vec<u64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition2 {
    pub kappa: f64,
    pub a0: f64,
    pub a0_fitted: bool,
    /// Largest `sum - kappa log(z/z1)` over grid pairs.
    pub max_excess: f64,
    /// Violating `(z1, z)` pairs, at most 32 recorded.
    pub violations: Vec<(u64, u64)>,
    pub pairs_checked: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition3 {
    pub tau: f64,
    pub a1: f64,
    pub a2: f64,
    pub a2_fitted: bool,
    pub d_bound: f64,
    pub truncated: bool,
    pub weighted_sum: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveConditionReport {
    pub x: u64,
    pub z: f64,
    pub condition1: Condition1,
    pub condition2: Condition2,
    pub condition3: Condition3,
    /// `z^2 <= X^tau (log X)^(-A1)`.
    pub level_admissible: bool,
}

impl SieveConditionReport {
    pub fn all_pass(&self) -> bool {
        self.condition1.pass && self.condition2.pass && self.condition3.pass
    }
}

pub fn check_conditions(problem: &SieveProblem, params: &SieveParams) -> SieveConditionReport {
    let grid = &problem.grid;

    let ratios: Vec<f64> = grid.iter().map(|&p| to_f64(&problem.omega(p)) / p as f64).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let witnesses: Vec<u64> =
        grid.iter().zip(&ratios).filter(|(_, &r)| !(0.0..params.c).contains(&r)).map(|(&p, _)| p).collect();
    let condition1 =
        Condition1 { c: params.c, max_ratio, pass: witnesses.is_empty() && params.c < 1.0, witnesses };

    // sum over p_i <= p <= p_j against kappa log(p_j / p_i): the supremum of
    // the left side minus the right side over real z1 <= z
    let terms: Vec<f64> = grid.iter().map(|&p| to_f64(&problem.omega(p)) * (p as f64).ln() / p as f64).collect();
    let mut max_excess = f64::NEG_INFINITY;
    let mut excess_table = Vec::new();
    for i in 0..grid.len() {
        let mut s = 0.0;
        for j in i..grid.len() {
            s += terms[j];
            let e = s - params.kappa * (grid[j] as f64 / grid[i] as f64).ln();
            max_excess = max_excess.max(e);
            excess_table.push((grid[i], grid[j], e));
        }
    }
    if grid.is_empty() {
        max_excess = 0.0;
    }
    let (a0, a0_fitted) = match params.a0 {
        Some(v) => (v, false),
        None => (max_excess.max(1.0) + 1e-9, true),
    };
    let violations: Vec<(u64, u64)> =
        excess_table.iter().filter(|(_, _, e)| *e > a0).take(32).map(|&(a, b, _)| (a, b)).collect();
    let condition2 = Condition2 {
        kappa: params.kappa,
        a0,
        a0_fitted,
        max_excess,
        pass: params.kappa > 0.0 && a0 > 1.0 && max_excess <= a0,
        violations,
        pairs_checked: excess_table.len() as u64,
    };

    let x = problem.x() as f64;
    let lx = x.ln();
    let d_bound = if x > 1.0 { x.powf(params.tau) * lx.powf(-params.a1) } else { 0.0 };
    let d_max = if d_bound > 1.0 { (d_bound.ceil() as u64).saturating_sub(1) } else { 0 };
    let truncated = d_max > REMAINDER_D_CAP;
    let table = remainders(problem, d_max);
    let scale = if x > 1.0 { x / lx.powf(params.kappa + 1.0) } else { f64::INFINITY };
    let (a2, a2_fitted) = match params.a2 {
        Some(v) => (v, false),
        None => ((table.weighted_sum / scale).max(2.0), true),
    };
    let rhs = a2 * scale;
    let condition3 = Condition3 {
        tau: params.tau,
        a1: params.a1,
        a2,
        a2_fitted,
        d_bound,
        truncated,
        weighted_sum: table.weighted_sum,
        rhs,
        pass: (0.0..=1.0).contains(&params.tau)
            && params.tau > 0.0
            && params.a1 >= 1.0
            && a2 >= 2.0
            && table.weighted_sum <= rhs
            && !truncated,
    };
    let z = problem.z;
    SieveConditionReport {
        x: problem.x(),
        z,
        condition1,
        condition2,
        condition3,
        level_admissible: x > 1.0 && z * z <= d_bound,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub sifted: u64,
    /// `X prod_{p in P, p < z} (1 - omega(p)/p)`.
    pub main_product: f64,
    pub ratio: f64,
    /// Set when the sifted count is zero.
    pub degenerate: bool,
}

pub fn lower_bound_report(problem: &SieveProblem) -> LowerBoundReport {
    let sifted = sift(problem);
    let mut product = problem.x() as f64;
    for &p in &problem.grid {
        product *= 1.0 - to_f64(&problem.omega(p)) / p as f64;
    }
    let ratio = if sifted == 0 {
        0.0
    } else if product > 0.0 {
        sifted as f64 / product
    } else {
        f64::INFINITY
    };
    LowerBoundReport { sifted, main_product: product, ratio, degenerate: sifted == 0 }
}
