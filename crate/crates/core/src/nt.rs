//! Small-integer number theory shared by every module: prime lists, modular
//! arithmetic on machine words, square roots, CRT, and Hilbert symbols.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

/// All primes `p <= n`, by a plain sieve of Eratosthenes.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i.saturating_mul(i);
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// Primes `p < z` for a real sifting level `z`.
pub fn primes_below(z: f64) -> Vec<u64> {
    if !(z > 2.0) {
        return Vec::new();
    }
    let top = z.ceil() as u64;
    primes_up_to(top).into_iter().filter(|&p| (p as f64) < z).collect()
}

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for every 64-bit input.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn lcm_u64(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        return 0;
    }
    a / gcd_u64(a, b) * b
}

/// Extended Euclid: returns `(g, x, y)` with `a*x + b*y = g >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r.div_euclid(r);
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (g, x, _) = ext_gcd(a as i128, m as i128);
    if g != 1 {
        return None;
    }
    Some(x.rem_euclid(m as i128) as u64)
}

/// Reduce a signed value into `[0, m)`.
#[inline]
pub fn residue_i128(x: i128, m: u64) -> u64 {
    x.rem_euclid(m as i128) as u64
}

pub fn residue_big(x: &BigInt, m: u64) -> u64 {
    x.mod_floor(&BigInt::from(m)).to_u64().expect("residue fits u64")
}

/// Floor square root of a nonnegative 128-bit integer.
pub fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// `Some(r)` with `r >= 0` and `r*r == n` when `n` is a perfect square.
pub fn exact_sqrt_i128(n: i128) -> Option<i128> {
    if n < 0 {
        return None;
    }
    // quadratic residues mod 64 reject most non-squares cheaply
    if (0x0202_0212_0203_0213u64 >> (n & 63)) & 1 == 0 {
        return None;
    }
    let r = isqrt_u128(n as u128) as i128;
    (r * r == n).then_some(r)
}

pub fn is_square_u64(n: u64) -> bool {
    exact_sqrt_i128(n as i128).is_some()
}

/// Chinese remaindering of `x = r1 mod m1`, `x = r2 mod m2` for coprime moduli.
pub fn crt_pair(r1: u64, m1: u64, r2: u64, m2: u64) -> Option<(u64, u64)> {
    if gcd_u64(m1, m2) != 1 {
        return None;
    }
    let m = m1.checked_mul(m2)?;
    let inv = inv_mod(m1 % m2, m2)?;
    let diff = (r2 as i128 - r1 as i128).rem_euclid(m2 as i128) as u64;
    let k = mul_mod(diff, inv, m2);
    let x = (r1 as u128 + m1 as u128 * k as u128) % m as u128;
    Some((x as u64, m))
}

/// Prime-power decomposition of a small positive integer by trial division.
pub fn factor_small(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn is_squarefree(n: u64) -> bool {
    factor_small(n).iter().all(|&(_, e)| e == 1)
}

/// Exponent of `p` in `n` (with `v_p(0)` reported as `u32::MAX`).
pub fn valuation(n: u64, p: u64) -> u32 {
    if n == 0 {
        return u32::MAX;
    }
    let mut n = n;
    let mut e = 0;
    while n % p == 0 {
        n /= p;
        e += 1;
    }
    e
}

/// Legendre symbol `(a/p)` for an odd prime `p`, in `{-1, 0, 1}`.
pub fn legendre(a: i64, p: u64) -> i8 {
    let r = residue_i128(a as i128, p);
    if r == 0 {
        return 0;
    }
    if pow_mod(r, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

/// A place of the rationals: a finite prime or the real place.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Place {
    Real,
    Prime(u64),
}

/// Hilbert symbol `(a, b)_v` for nonzero integers.
pub fn hilbert_symbol(a: i64, b: i64, place: Place) -> i8 {
    assert!(a != 0 && b != 0, "hilbert symbol of zero");
    match place {
        Place::Real => {
            if a < 0 && b < 0 {
                -1
            } else {
                1
            }
        }
        Place::Prime(p) => {
            let (alpha, u) = split_power(a, p);
            let (beta, v) = split_power(b, p);
            if p == 2 {
                let eps = |x: i64| (x.rem_euclid(4) == 3) as u32;
                let omega = |x: i64| {
                    let r = x.rem_euclid(8);
                    (r == 3 || r == 5) as u32
                };
                let e = eps(u) * eps(v) + alpha * omega(v) + beta * omega(u);
                if e % 2 == 0 {
                    1
                } else {
                    -1
                }
            } else {
                // (-1)^(alpha*beta*eps(p)) (u/p)^beta (v/p)^alpha
                let mut s: i8 = if (alpha * beta) % 2 == 1 && p % 4 == 3 { -1 } else { 1 };
                if beta % 2 == 1 {
                    s *= legendre(u, p);
                }
                if alpha % 2 == 1 {
                    s *= legendre(v, p);
                }
                s
            }
        }
    }
}

fn split_power(mut x: i64, p: u64) -> (u32, i64) {
    let p = p as i64;
    let mut e = 0;
    while x % p == 0 {
        x /= p;
        e += 1;
    }
    (e, x)
}

/// Whether the ternary form `a x^2 + b y^2 - z^2` has a nonzero rational zero,
/// decided by Hilbert symbols at the real place and every prime dividing `2ab`.
pub fn ternary_form_isotropic(a: i64, b: i64) -> bool {
    relevant_places(a, b).into_iter().all(|v| hilbert_symbol(a, b, v) == 1)
}

/// The real place plus the primes dividing `2ab`.
pub fn relevant_places(a: i64, b: i64) -> Vec<Place> {
    let mut places = vec![Place::Real];
    let n = (2 * a.unsigned_abs()).saturating_mul(b.unsigned_abs());
    for (p, _) in factor_small(n) {
        places.push(Place::Prime(p));
    }
    places
}

pub fn big_abs_to_u64(x: &BigInt) -> Option<u64> {
    x.abs().to_u64()
}

pub fn is_zero_big(x: &BigInt) -> bool {
    x.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes_and_primality_agree() {
        let ps = primes_up_to(10_000);
        assert_eq!(ps.len(), 1229);
        for n in 0..10_000u64 {
            assert_eq!(is_prime_u64(n), ps.binary_search(&n).is_ok(), "n={n}");
        }
        assert!(is_prime_u64(18_446_744_073_709_551_557));
        assert!(!is_prime_u64(3_215_031_751));
    }

    #[test]
    fn primes_below_is_strict() {
        assert_eq!(primes_below(4.0), vec![2, 3]);
        assert_eq!(primes_below(3.0), vec![2]);
        assert!(primes_below(2.0).is_empty());
    }

    #[test]
    fn crt_and_inverse() {
        let (x, m) = crt_pair(2, 3, 3, 5).unwrap();
        assert_eq!((x, m), (8, 15));
        assert_eq!(inv_mod(3, 7), Some(5));
        assert_eq!(inv_mod(2, 4), None);
        assert!(crt_pair(1, 4, 1, 6).is_none());
    }

    #[test]
    fn exact_sqrt() {
        for n in 0..5000i128 {
            let r = isqrt_u128(n as u128) as i128;
            assert_eq!(exact_sqrt_i128(n).is_some(), r * r == n);
        }
        assert_eq!(exact_sqrt_i128(-4), None);
    }

    #[test]
    fn hilbert_symbols_of_flagship_algebra() {
        assert_eq!(hilbert_symbol(2, 3, Place::Real), 1);
        assert_eq!(hilbert_symbol(2, 3, Place::Prime(2)), -1);
        assert_eq!(hilbert_symbol(2, 3, Place::Prime(3)), -1);
        assert!(!ternary_form_isotropic(2, 3));
        // 1 = 1*1 + 0 - 1: a=1 is always split
        assert!(ternary_form_isotropic(1, 7));
        assert!(ternary_form_isotropic(-1, 2));
        assert!(!ternary_form_isotropic(-1, -1));
    }

    #[test]
    fn hilbert_symbols_match_brute_force_solubility() {
        // (a,b) isotropic over Q iff a x^2 + b y^2 = z^2 has a primitive solution;
        // small searches find all the split cases in this range.
        for a in [-7i64, -5, -3, -2, -1, 2, 3, 5, 6, 7] {
            for b in [-7i64, -5, -3, -2, -1, 2, 3, 5, 6, 7] {
                let mut found = false;
                'search: for x in 0i64..=30 {
                    for y in 0i64..=30 {
                        if x == 0 && y == 0 {
                            continue;
                        }
                        let s = a * x * x + b * y * y;
                        if s >= 0 && is_square_u64(s as u64) {
                            found = true;
                            break 'search;
                        }
                    }
                }
                assert_eq!(found, ternary_form_isotropic(a, b), "a={a} b={b}");
            }
        }
    }

    #[test]
    fn legendre_matches_squares() {
        for p in [3u64, 5, 7, 11, 13] {
            let squares: Vec<u64> = (1..p).map(|x| x * x % p).collect();
            for a in 1..p {
                assert_eq!(legendre(a as i64, p) == 1, squares.contains(&a));
            }
        }
    }
}
