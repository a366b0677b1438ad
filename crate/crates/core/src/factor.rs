//! Certified integer factorization: trial division, Miller-Rabin and
//! Pollard-Brent splitting. Every result is rechecked before it is returned.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nt::{gcd_u64, is_prime_u64, mul_mod, primes_up_to};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FactorError {
    #[error("cannot factor zero")]
    Zero,
    #[error("factorization budget exhausted on cofactor {0}")]
    Budget(BigUint),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FactorBudget {
    /// Trial division runs through all primes up to this bound.
    pub trial_bound: u64,
    /// Iteration cap for each Pollard-Brent attempt.
    pub rho_iterations: u64,
    /// Number of polynomial offsets tried before giving up on a cofactor.
    pub rho_attempts: u32,
    pub seed: u64,
}

impl Default for FactorBudget {
    fn default() -> Self {
        FactorBudget { trial_bound: 1_000_000, rho_iterations: 1 << 22, rho_attempts: 32, seed: 0x5a17 }
    }
}

/// `n = prod p^e`, primes sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    #[serde(with = "crate::serde_big::biguint")]
    pub n: BigUint,
    pub factors: Vec<PrimePower>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimePower {
    #[serde(with = "crate::serde_big::biguint")]
    pub p: BigUint,
    pub e: u32,
}

impl Factorization {
    pub fn primes(&self) -> impl Iterator<Item = &BigUint> {
        self.factors.iter().map(|pp| &pp.p)
    }

    /// Product and primality recheck.
    pub fn verify(&self) -> bool {
        let mut prod = BigUint::one();
        let mut last: Option<&BigUint> = None;
        for pp in &self.factors {
            if pp.e == 0 || !is_probable_prime(&pp.p) {
                return false;
            }
            if let Some(l) = last {
                if *l >= pp.p {
                    return false;
                }
            }
            last = Some(&pp.p);
            prod *= pp.p.pow(pp.e);
        }
        prod == self.n
    }
}

/// Deterministic below 2^64; above, Miller-Rabin on the first 24 prime bases.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if n.is_even() {
        return false;
    }
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for a in primes_up_to(89) {
        let a = BigUint::from(a);
        if (&a % n).is_zero() {
            continue;
        }
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Factor `n >= 1` within `budget`. The returned factorization is verified.
pub fn factor(n: &BigUint, budget: &FactorBudget) -> Result<Factorization, FactorError> {
    if n.is_zero() {
        return Err(FactorError::Zero);
    }
    let mut primes: Vec<BigUint> = Vec::new();
    let mut rest = n.clone();

    if let Some(mut small) = rest.to_u64() {
        // machine-word path
        let mut p = 2u64;
        while p * p <= small && p <= budget.trial_bound {
            while small % p == 0 {
                primes.push(BigUint::from(p));
                small /= p;
            }
            p += if p == 2 { 1 } else { 2 };
        }
        let mut stack = vec![small];
        while let Some(m) = stack.pop() {
            if m == 1 {
                continue;
            }
            if is_prime_u64(m) {
                primes.push(BigUint::from(m));
                continue;
            }
            let d = rho_u64(m, budget).ok_or_else(|| FactorError::Budget(BigUint::from(m)))?;
            stack.push(d);
            stack.push(m / d);
        }
        rest = BigUint::one();
    } else {
        for p in primes_up_to(budget.trial_bound) {
            let bp = BigUint::from(p);
            if &bp * &bp > rest {
                break;
            }
            while (&rest % &bp).is_zero() {
                primes.push(bp.clone());
                rest /= &bp;
            }
        }
    }

    let mut stack = vec![rest];
    while let Some(m) = stack.pop() {
        if m.is_one() {
            continue;
        }
        if let Some(small) = m.to_u64() {
            let sub = factor(&BigUint::from(small), budget)?;
            for pp in sub.factors {
                for _ in 0..pp.e {
                    primes.push(pp.p.clone());
                }
            }
            continue;
        }
        if is_probable_prime(&m) {
            primes.push(m);
            continue;
        }
        let d = rho_big(&m, budget).ok_or_else(|| FactorError::Budget(m.clone()))?;
        let q = &m / &d;
        stack.push(d);
        stack.push(q);
    }

    primes.sort();
    let mut factors: Vec<PrimePower> = Vec::new();
    for p in primes {
        match factors.last_mut() {
            Some(last) if last.p == p => last.e += 1,
            _ => factors.push(PrimePower { p, e: 1 }),
        }
    }
    let out = Factorization { n: n.clone(), factors };
    debug_assert!(out.verify());
    if !out.verify() {
        return Err(FactorError::Budget(n.clone()));
    }
    Ok(out)
}

pub fn factor_u64(n: u64, budget: &FactorBudget) -> Result<Factorization, FactorError> {
    factor(&BigUint::from(n), budget)
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rho_u64(n: u64, budget: &FactorBudget) -> Option<u64> {
    if n % 2 == 0 {
        return Some(2);
    }
    let mut state = budget.seed ^ n;
    for _ in 0..budget.rho_attempts {
        let c = splitmix(&mut state) % (n - 1) + 1;
        let mut y = splitmix(&mut state) % n;
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut g, mut r, mut q) = (1u64, 1u64, 1u64);
        let (mut x, mut ys) = (0u64, 0u64);
        let mut iters = 0u64;
        while g == 1 && iters < budget.rho_iterations {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                let m = (r - k).min(128);
                for _ in 0..m {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = gcd_u64(q, n);
                k += m;
            }
            iters += r;
            r *= 2;
        }
        if g == n {
            loop {
                ys = f(ys);
                g = gcd_u64(x.abs_diff(ys), n);
                if g > 1 {
                    break;
                }
            }
        }
        if g > 1 && g < n {
            return Some(g);
        }
    }
    None
}

fn rho_big(n: &BigUint, budget: &FactorBudget) -> Option<BigUint> {
    let one = BigUint::one();
    if n.is_even() {
        return Some(BigUint::from(2u32));
    }
    let mut state = budget.seed ^ (n % BigUint::from(u64::MAX)).to_u64().unwrap_or(0);
    for _ in 0..budget.rho_attempts {
        let c = BigUint::from(splitmix(&mut state)) % n;
        let mut y = BigUint::from(splitmix(&mut state)) % n;
        let f = |x: &BigUint| (x * x + &c) % n;
        let mut g = one.clone();
        let mut r = 1u64;
        let mut q = one.clone();
        let mut x = y.clone();
        let mut ys = y.clone();
        let mut iters = 0u64;
        while g.is_one() && iters < budget.rho_iterations {
            x = y.clone();
            for _ in 0..r {
                y = f(&y);
            }
            let mut k = 0;
            while k < r && g.is_one() {
                ys = y.clone();
                let m = (r - k).min(128);
                for _ in 0..m {
                    y = f(&y);
                    let diff = if x > y { &x - &y } else { &y - &x };
                    q = (q * diff) % n;
                }
                g = q.gcd(n);
                k += m;
            }
            iters += r;
            r *= 2;
        }
        if &g == n {
            loop {
                ys = f(&ys);
                let diff = if x > ys { &x - &ys } else { &ys - &x };
                g = diff.gcd(n);
                if !g.is_one() {
                    break;
                }
            }
        }
        if !g.is_one() && &g != n {
            return Some(g);
        }
    }
    None
}
