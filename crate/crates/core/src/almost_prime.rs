//! Saturation search: count congruence-subgroup points whose `f`-value is
//! free of small primes, and extract points whose `f`-value has few prime
//! factors, all of them large.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{self, FactorBudget, FactorError, Factorization};
use crate::groups::{GroupElement, GroupSpec, ResidueElement};
use crate::lattice_enum::{self, BallQuery, Congruence, EnumError, SmallPoint};
use crate::nt;
use crate::poly::RegularFunction;

/// Hits kept in a scan report.
pub const SAMPLE_HITS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlmostPrimeError {
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error("factorization of f at {point:?} failed: {source}")]
    Factor { point: SmallPoint, source: FactorError },
    #[error("f value at {0:?} does not fit in 64 bits")]
    Overflow(SmallPoint),
    #[error("{0} is constant on the enumerated points")]
    ConstantFunction(String),
    #[error("invalid constraint: {0}")]
    Constraint(String),
    #[error("no almost-prime point of height < {frontier} ({scanned} points scanned)")]
    NotFound { frontier: u64, scanned: u64 },
    #[error("beta must lie in (0, 1], got {0}")]
    BadBeta(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaturationQuery {
    pub spec: GroupSpec,
    pub f: RegularFunction,
    /// Excluded primes `S`.
    pub excluded: BTreeSet<u64>,
    pub beta: f64,
    pub height: u64,
    /// Lower bound `M` for admitted prime factors of hits.
    pub m_bound: u64,
    /// Certified gcd `N` of `f` on `Gamma_alpha`.
    pub n_gcd: u64,
    #[serde(default)]
    pub factor_budget: FactorBudget,
}

impl SaturationQuery {
    /// Primes that are neither in `S` nor divide `alpha N`.
    pub fn admitted(&self, p: u64) -> bool {
        !self.excluded.contains(&p) && self.spec.level % p != 0 && self.n_gcd % p != 0
    }

    /// `z = T^beta`.
    pub fn level(&self) -> f64 {
        (self.height as f64).powf(self.beta)
    }

    fn validate(&self) -> Result<(), AlmostPrimeError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(AlmostPrimeError::BadBeta(self.beta.to_string()));
        }
        Ok(())
    }

    fn sieve_primes(&self) -> Vec<u64> {
        nt::primes_below(self.level()).into_iter().filter(|&p| self.admitted(p)).collect()
    }
}

fn value_u64(f: &RegularFunction, p: &SmallPoint) -> Result<Option<u64>, AlmostPrimeError> {
    let v = f.eval_i64(p).ok_or(AlmostPrimeError::Overflow(*p))?;
    if v == 0 {
        return Ok(None);
    }
    v.unsigned_abs().to_u64().map(Some).ok_or(AlmostPrimeError::Overflow(*p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmostPrimeHit {
    pub g: GroupElement,
    #[serde(with = "crate::serde_big::bigint")]
    pub value: BigInt,
    pub factorization: Factorization,
    /// Distinct prime factors outside `S` and the divisors of `alpha N`.
    #[serde(with = "crate::serde_big::biguint_vec")]
    pub outside: Vec<BigUint>,
    /// Number of such factors counted with multiplicity.
    pub outside_with_multiplicity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub height: u64,
    pub level: f64,
    /// Points of `Gamma_alpha` below the height bound.
    pub x: u64,
    /// Points with `f = 0`, excluded from the count.
    pub zero_values: u64,
    pub count: u64,
    /// The multiplier applied to `f` before sifting; always 1 here.
    pub multiplier: u64,
    pub sample: Vec<SmallPoint>,
}

/// Points of `Gamma_alpha` below the query height in search order.
fn ordered_points(q: &SaturationQuery) -> Result<Vec<SmallPoint>, AlmostPrimeError> {
    let mut pts = lattice_enum::enumerate_ball_small(&BallQuery::gamma(q.spec, q.height))?;
    pts.sort_by_key(|p| lattice_enum::search_key(q.spec.model, p));
    Ok(pts)
}

/// Exact count of `g` with `f(g) != 0` and `f(g)/N` free of admitted
/// primes below `T^beta`.
pub fn saturation_scan(q: &SaturationQuery) -> Result<SaturationReport, AlmostPrimeError> {
    q.validate()?;
    let pts = ordered_points(q)?;
    let primes = q.sieve_primes();
    let n = q.n_gcd.max(1);
    let flags: Vec<Option<bool>> = pts
        .par_iter()
        .map(|p| {
            Ok(value_u64(&q.f, p)?.map(|v| {
                let a = v / n;
                primes.iter().all(|&pr| a % pr != 0)
            }))
        })
        .collect::<Result<_, AlmostPrimeError>>()?;
    let zero_values = flags.iter().filter(|f| f.is_none()).count() as u64;
    let count = flags.iter().filter(|f| **f == Some(true)).count() as u64;
    let sample = pts.iter().zip(&flags).filter(|(_, f)| **f == Some(true)).take(SAMPLE_HITS).map(|(p, _)| *p).collect();
    Ok(SaturationReport {
        height: q.height,
        level: q.level(),
        x: pts.len() as u64,
        zero_values,
        count,
        multiplier: 1,
        sample,
    })
}

/// The multiset `A = {|f(g)|/N}` over the same points, zeros dropped.
pub fn induced_multiset(q: &SaturationQuery) -> Result<Vec<u64>, AlmostPrimeError> {
    let pts = lattice_enum::enumerate_ball_small(&BallQuery::gamma(q.spec, q.height))?;
    let n = q.n_gcd.max(1);
    let mut out = Vec::with_capacity(pts.len());
    for p in &pts {
        if let Some(v) = value_u64(&q.f, p)? {
            out.push(v / n);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub height: u64,
    pub x: u64,
    pub count: u64,
    pub trend: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub lambda_fit: f64,
    pub rows: Vec<TrendRow>,
    pub min_trend: f64,
    pub max_trend: f64,
    /// Every trend value positive and the smallest at least a quarter of
    /// the largest.
    pub bounded_below: bool,
}

/// Saturation counts across a height grid, with `lambda` fitted from
/// `log(count/X) = c - lambda log log X` and the trend
/// `count (log X)^lambda / X`.
pub fn saturation_trend(base: &SaturationQuery, heights: &[u64]) -> Result<TrendReport, AlmostPrimeError> {
    let mut raw = Vec::new();
    for &t in heights {
        let q = SaturationQuery { height: t, ..base.clone() };
        let r = saturation_scan(&q)?;
        raw.push((t, r.x, r.count));
    }
    let usable: Vec<(f64, f64)> = raw
        .iter()
        .filter(|&&(_, x, c)| x > 2 && c > 0)
        .map(|&(_, x, c)| ((x as f64).ln().ln(), (c as f64 / x as f64).ln()))
        .collect();
    let lambda_fit = if usable.len() >= 2 {
        let n = usable.len() as f64;
        let mx = usable.iter().map(|u| u.0).sum::<f64>() / n;
        let my = usable.iter().map(|u| u.1).sum::<f64>() / n;
        let sxx: f64 = usable.iter().map(|u| (u.0 - mx).powi(2)).sum();
        let sxy: f64 = usable.iter().map(|u| (u.0 - mx) * (u.1 - my)).sum();
        if sxx > 0.0 {
            -sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    let rows: Vec<TrendRow> = raw
        .iter()
        .map(|&(height, x, count)| {
            let trend = if x > 1 { count as f64 * (x as f64).ln().powf(lambda_fit) / x as f64 } else { 0.0 };
            TrendRow { height, x, count, trend }
        })
        .collect();
    let min_trend = rows.iter().map(|r| r.trend).fold(f64::INFINITY, f64::min);
    let max_trend = rows.iter().map(|r| r.trend).fold(0.0, f64::max);
    let bounded_below = !rows.is_empty() && min_trend > 0.0 && min_trend >= max_trend / 4.0;
    Ok(TrendReport { lambda_fit, rows, min_trend, max_trend, bounded_below })
}

/// `r = floor(theta / beta) + 1`.
pub fn report_r_formula(theta: f64, beta: f64) -> u64 {
    (theta / beta).floor().max(0.0) as u64 + 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub witness: Option<SmallPoint>,
}

/// `max log|f(g)| / log H(g)` over the points of height `2 <= H < T` in
/// the query's ball (optionally restricted by a congruence).
pub fn theta_fit(
    spec: GroupSpec,
    f: &RegularFunction,
    height: u64,
    congruence: Option<&Congruence>,
) -> Result<ThetaFit, AlmostPrimeError> {
    let mut q = BallQuery::gamma(spec, height);
    if congruence.is_some() {
        q.congruence = congruence.cloned();
    }
    let pts = lattice_enum::enumerate_ball_small(&q)?;
    let mut best = ThetaFit { theta: 0.0, witness: None };
    for p in &pts {
        let h = lattice_enum::small_height(p);
        if h < 2 {
            continue;
        }
        let v = f.eval(&p.map(BigInt::from)).abs();
        if v.is_zero() {
            continue;
        }
        let t = big_ln(&v) / (h as f64).ln();
        if t > best.theta {
            best = ThetaFit { theta: t, witness: Some(*p) };
        }
    }
    Ok(best)
}

fn big_ln(v: &BigInt) -> f64 {
    match v.to_f64() {
        Some(x) if x.is_finite() => x.ln(),
        _ => {
            let bits = v.bits();
            let shifted: BigInt = v >> (bits - 60);
            shifted.to_f64().unwrap().ln() + (bits - 60) as f64 * std::f64::consts::LN_2
        }
    }
}

/// Residue constraints `g mod p^e in allowed`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueConstraint {
    pub modulus: u64,
    pub allowed: Vec<[u64; 4]>,
}

impl ResidueConstraint {
    pub fn admits(&self, p: &SmallPoint) -> bool {
        let r = p.map(|c| nt::residue_i128(c as i128, self.modulus));
        self.allowed.contains(&r)
    }
}

/// Check constraints are realizable and pull singleton sets into one
/// congruence for pruning.
pub fn prepare_constraints(
    spec: &GroupSpec,
    constraints: &[ResidueConstraint],
) -> Result<Option<Congruence>, AlmostPrimeError> {
    let mut singletons = Vec::new();
    for (i, c) in constraints.iter().enumerate() {
        if c.modulus < 2 || c.allowed.is_empty() {
            return Err(AlmostPrimeError::Constraint(format!("constraint mod {} is empty or trivial", c.modulus)));
        }
        for other in &constraints[i + 1..] {
            if nt::gcd_u64(c.modulus, other.modulus) != 1 {
                return Err(AlmostPrimeError::Constraint(format!(
                    "moduli {} and {} are not coprime",
                    c.modulus, other.modulus
                )));
            }
        }
        for r in &c.allowed {
            let e = ResidueElement { model: spec.model, modulus: c.modulus, coords: r.map(|v| v % c.modulus) };
            if !e.satisfies_equation() {
                return Err(AlmostPrimeError::Constraint(format!("{r:?} mod {} is not on the group", c.modulus)));
            }
        }
        if c.allowed.len() == 1 {
            singletons.push(ResidueElement { model: spec.model, modulus: c.modulus, coords: c.allowed[0] });
        }
    }
    Ok(lattice_enum::combine_targets(spec.model, &singletons)?)
}

/// Factor `f(g)` and decide whether it is an almost-prime hit.
pub fn evaluate_hit(
    q: &SaturationQuery,
    r: u64,
    p: &SmallPoint,
) -> Result<Option<AlmostPrimeHit>, AlmostPrimeError> {
    let value = q.f.eval(&p.map(BigInt::from));
    if value.is_zero() {
        return Ok(None);
    }
    let fac = factor::factor(value.magnitude(), &q.factor_budget)
        .map_err(|source| AlmostPrimeError::Factor { point: *p, source })?;
    let mut outside = Vec::new();
    let mut mult = 0u32;
    for pp in &fac.factors {
        let small = pp.p.to_u64();
        let admitted = match small {
            Some(s) => q.admitted(s),
            None => true,
        };
        if !admitted {
            continue;
        }
        if small.is_some_and(|s| s <= q.m_bound) {
            return Ok(None);
        }
        outside.push(pp.p.clone());
        mult += pp.e;
    }
    if mult as u64 > r {
        return Ok(None);
    }
    let g = GroupElement::from_small(q.spec.model, *p);
    Ok(Some(AlmostPrimeHit { g, value, factorization: fac, outside, outside_with_multiplicity: mult }))
}

/// First point (by height, identity first, then lexicographic) meeting the
/// constraints whose `f`-value is nonzero with at most `r` admitted prime
/// factors, all above `M`.
pub fn find_almost_prime_point(
    q: &SaturationQuery,
    r: u64,
    constraints: &[ResidueConstraint],
    t_max: u64,
) -> Result<AlmostPrimeHit, AlmostPrimeError> {
    let mut cong = prepare_constraints(&q.spec, constraints)?;
    if q.spec.level > 1 {
        let lvl = ResidueElement::identity(q.spec.model, q.spec.level);
        let mut targets = vec![lvl];
        if let Some(c) = cong.take() {
            targets.push(c.target);
        }
        cong = lattice_enum::combine_targets(q.spec.model, &targets)
            .map_err(|e| AlmostPrimeError::Constraint(e.to_string()))?;
    }
    let mut scanned = 0u64;
    let mut failure: Option<AlmostPrimeError> = None;
    let found = lattice_enum::search_by_height(q.spec, cong.as_ref(), t_max, |p| {
        if !constraints.iter().all(|c| c.admits(p)) {
            return None;
        }
        scanned += 1;
        match evaluate_hit(q, r, p) {
            Ok(h) => h,
            Err(e) => {
                failure = Some(e);
                None
            }
        }
    })?;
    if let Some(h) = found {
        return Ok(h);
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Err(AlmostPrimeError::NotFound { frontier: t_max, scanned })
}

/// All hits in the query ball, in search order, at most `limit`.
pub fn almost_prime_hits(q: &SaturationQuery, r: u64, limit: usize) -> Result<Vec<AlmostPrimeHit>, AlmostPrimeError> {
    let pts = ordered_points(q)?;
    let evaluated: Vec<Option<AlmostPrimeHit>> =
        pts.par_iter().map(|p| evaluate_hit(q, r, p)).collect::<Result<_, _>>()?;
    Ok(evaluated.into_iter().flatten().take(limit).collect())
}

/// Independent recheck of a hit: group membership, residues, value,
/// factorization and factor-size threshold.
pub fn verify_hit(q: &SaturationQuery, r: u64, constraints: &[ResidueConstraint], hit: &AlmostPrimeHit) -> bool {
    let Some(p) = hit.g.to_small() else { return false };
    if hit.g.defining_value() != BigInt::from(1) || hit.g.model != q.spec.model {
        return false;
    }
    if !hit.g.in_congruence_subgroup(q.spec.level) || !constraints.iter().all(|c| c.admits(&p)) {
        return false;
    }
    if q.f.eval(&hit.g.coords) != hit.value || hit.value.is_zero() {
        return false;
    }
    if hit.factorization.n != *hit.value.magnitude() || !hit.factorization.verify() {
        return false;
    }
    let mut mult = 0;
    for pp in &hit.factorization.factors {
        let admitted = pp.p.to_u64().map_or(true, |s| q.admitted(s));
        if admitted {
            if pp.p <= BigUint::from(q.m_bound) {
                return false;
            }
            mult += pp.e;
        }
    }
    mult as u64 <= r && mult == hit.outside_with_multiplicity
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve_engine::{self, Omega, PrimeSet, SieveProblem};

    fn query(f: RegularFunction, t: u64, beta: f64) -> SaturationQuery {
        SaturationQuery {
            spec: GroupSpec::sl2(1).unwrap(),
            f,
            excluded: BTreeSet::new(),
            beta,
            height: t,
            m_bound: 1,
            n_gcd: 1,
            factor_budget: FactorBudget::default(),
        }
    }

    #[test]
    fn g11_scan_has_prime_hits() {
        let q = query(RegularFunction::coordinate(0), 64, 0.5);
        let r = saturation_scan(&q).unwrap();
        assert!(r.count > 0);
        // every point whose g11 is a prime at least T^beta survives the sift
        let pts = lattice_enum::enumerate_ball_small(&BallQuery::new(q.spec, 64)).unwrap();
        let prime_g11 = pts.iter().filter(|p| p[0].unsigned_abs() >= 8 && nt::is_prime_u64(p[0].unsigned_abs())).count();
        assert!(prime_g11 > 0);
        assert!(r.count as usize >= prime_g11);
        assert!(r.zero_values > 0);
    }

    #[test]
    fn unit_function_counts_everything() {
        let q = query(RegularFunction::constant(1).unwrap(), 16, 1.0);
        let r = saturation_scan(&q).unwrap();
        assert_eq!(r.count, r.x);
        let hit = find_almost_prime_point(&SaturationQuery { m_bound: 50, ..q }, 2, &[], 16).unwrap();
        assert!(hit.g.is_identity());
    }

    #[test]
    fn scan_matches_naive_filter_and_sift() {
        for t in [8u64, 16, 32] {
            let q = query(RegularFunction::sl2_trace(), t, 0.7);
            let r = saturation_scan(&q).unwrap();
            let z = q.level();
            let naive = lattice_enum::naive_ball(&BallQuery::new(q.spec, t))
                .into_iter()
                .filter(|p| {
                    let v = (p[0] + p[3]).unsigned_abs();
                    v != 0 && (2..).take_while(|&d| (d as f64) < z).all(|d| !nt::is_prime_u64(d) || v % d != 0)
                })
                .count() as u64;
            assert_eq!(r.count, naive);
            let a = induced_multiset(&q).unwrap();
            let sp = SieveProblem::new(a, PrimeSet::All, Omega::constant(1), z).unwrap();
            assert_eq!(sieve_engine::sift(&sp), r.count);
        }
    }

    #[test]
    fn r_formula() {
        assert_eq!(report_r_formula(2.0, 1.0), 3);
        assert_eq!(report_r_formula(3.5, 0.5), 8);
    }

    #[test]
    fn g11_almost_prime_point() {
        let q = SaturationQuery { m_bound: 50, ..query(RegularFunction::coordinate(0), 256, 1.0) };
        let hit = find_almost_prime_point(&q, 2, &[], 256).unwrap();
        assert!(verify_hit(&q, 2, &[], &hit));
        assert!(hit.outside.iter().all(|p| *p > BigUint::from(50u32)));
        // g11 itself is the value
        assert_eq!(hit.value, hit.g.coords[0]);
    }

    #[test]
    fn constrained_search_and_corruption() {
        let spec = GroupSpec::flagship(1);
        let f = RegularFunction::coordinate(0);
        let q = SaturationQuery {
            spec,
            f,
            excluded: [2, 3].into(),
            beta: 1.0,
            height: 64,
            m_bound: 5,
            n_gcd: 1,
            factor_budget: FactorBudget::default(),
        };
        let c = ResidueConstraint { modulus: 4, allowed: vec![[1, 0, 0, 0]] };
        let hit = find_almost_prime_point(&q, 3, &[c.clone()], 256).unwrap();
        assert!(verify_hit(&q, 3, &[c.clone()], &hit));
        let mut bad = hit.clone();
        bad.value += 1;
        assert!(!verify_hit(&q, 3, &[c.clone()], &bad));
        let wrong = ResidueConstraint { modulus: 5, allowed: vec![[2, 0, 0, 0]] };
        assert!(matches!(find_almost_prime_point(&q, 3, &[wrong], 8), Err(AlmostPrimeError::Constraint(_))));
    }

    #[test]
    fn trend_is_reported() {
        let q = query(RegularFunction::sl2_trace(), 8, 0.5);
        let r = saturation_trend(&q, &[16, 32, 64]).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.windows(2).all(|w| w[0].count <= w[1].count));
        assert!(r.min_trend > 0.0);
    }
}
