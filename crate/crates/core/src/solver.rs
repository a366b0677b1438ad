//! End-to-end search for a point of a window that avoids `D` at every
//! prime outside `S`, with a certificate that can be rechecked from the
//! embedded config alone.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::almost_prime::{self, AlmostPrimeError, ResidueConstraint, SaturationQuery};
use crate::factor::{self, FactorBudget, PrimePower};
use crate::finite_models::{self, ResidueBudget};
use crate::groups::{GroupElement, GroupModel, GroupSpec};
use crate::lattice_enum::{self, Congruence, SmallPoint};
use crate::nt;
use crate::poly::RegularFunction;
use crate::torus_avoidance::{
    self as torus, AvoidanceState, PigeonholeTranscript, QuotientFunction, SubsetSpec, TorusSpec,
};

pub use crate::torus_avoidance::SubsetSpec as Subset;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("config rejected: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

fn stage(name: &str) -> impl Fn(String) -> SolveError + '_ {
    move |message| SolveError::Stage { stage: name.to_string(), message }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowResidue {
    /// A prime power `p^e`.
    pub modulus: u64,
    pub allowed: Vec<[u64; 4]>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdelicWindow {
    /// The finite set `S` of places where the window is an arbitrary open set.
    #[serde(default)]
    pub excluded: BTreeSet<u64>,
    #[serde(default)]
    pub residues: Vec<WindowResidue>,
}

impl AdelicWindow {
    pub fn modulus(&self) -> u64 {
        self.residues.iter().fold(1, |acc, r| nt::lcm_u64(acc, r.modulus))
    }

    pub fn primes(&self) -> BTreeSet<u64> {
        self.residues.iter().flat_map(|r| nt::factor_small(r.modulus).into_iter().map(|(p, _)| p)).collect()
    }

    pub fn admits(&self, g: &GroupElement) -> bool {
        self.residues.iter().all(|r| {
            let x = [0, 1, 2, 3].map(|i| nt::residue_big(&g.coords[i], r.modulus));
            r.allowed.contains(&x)
        })
    }

    fn validate(&self, model: GroupModel) -> Result<(), SolveError> {
        for (i, r) in self.residues.iter().enumerate() {
            let f = nt::factor_small(r.modulus);
            if r.modulus < 2 || f.len() != 1 {
                return Err(SolveError::Config(format!("window modulus {} is not a prime power", r.modulus)));
            }
            if r.allowed.is_empty() {
                return Err(SolveError::Config(format!("window residue set mod {} is empty", r.modulus)));
            }
            for other in &self.residues[i + 1..] {
                if nt::gcd_u64(r.modulus, other.modulus) != 1 {
                    return Err(SolveError::Config(format!(
                        "window moduli {} and {} are not coprime",
                        r.modulus, other.modulus
                    )));
                }
            }
            for x in &r.allowed {
                let c = x.map(|v| (v % r.modulus) as i128);
                if x.iter().any(|&v| v >= r.modulus) || nt::residue_i128(model.defining_value(&c) - 1, r.modulus) != 0 {
                    return Err(SolveError::Config(format!("{x:?} is not a group point mod {}", r.modulus)));
                }
            }
        }
        Ok(())
    }

    fn constraints(&self) -> Vec<ResidueConstraint> {
        self.residues.iter().map(|r| ResidueConstraint { modulus: r.modulus, allowed: r.allowed.clone() }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusConfig {
    #[serde(with = "crate::serde_big::bigint")]
    pub u: BigInt,
    #[serde(with = "crate::serde_big::bigint")]
    pub v: BigInt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    /// Height bound for the window base point search.
    pub base_height: u64,
    /// Sample height and residue prime bound for the gcd certificate.
    pub gcd_height: u64,
    pub gcd_prime_bound: u64,
    /// Height of the sample used to fit `theta`.
    pub theta_height: u64,
    /// Final height frontier for the almost-prime search (doubling stages).
    pub sieve_height: u64,
    /// Orders of `Q` are computed for all good primes up to this bound.
    pub threshold_prime_bound: u64,
    /// Primes up to this bound certify the fibre bound and `pi(D) in {F = 0}`.
    pub fibre_prime_bound: u64,
    /// Unipotent translation search range for the isotropic solver.
    pub translation_range: u64,
    pub factor: FactorBudget,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            base_height: 4096,
            gcd_height: 48,
            gcd_prime_bound: 30,
            theta_height: 48,
            sieve_height: 1 << 14,
            threshold_prime_bound: 10_000,
            fibre_prime_bound: 50,
            translation_range: 64,
            factor: FactorBudget::default(),
        }
    }
}

fn default_beta() -> f64 {
    1.0
}

fn default_verify_bound() -> u64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub group: GroupSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus: Option<TorusConfig>,
    pub subset: SubsetSpec,
    /// `F` on the pure quaternions; the `ij`-coefficient when absent.
    #[serde(default, rename = "F", skip_serializing_if = "Option::is_none")]
    pub quotient_function: Option<QuotientFunction>,
    #[serde(default)]
    pub window: AdelicWindow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fiber: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<u64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_verify_bound")]
    pub verify_bound: u64,
    /// Skip sieve hits with fewer bad places than this, so that the
    /// avoidance step has work to do.
    #[serde(default)]
    pub min_bad_places: u64,
    #[serde(default)]
    pub budgets: Budgets,
}

impl SolveConfig {
    /// The example configuration: `B(2, 3)`, the `Q(sqrt 2)` torus, `D =
    /// {y = z = 0}`, `F` the `ij`-coefficient and the window `= 1 mod 4`.
    pub fn flagship() -> Self {
        SolveConfig {
            group: GroupSpec::flagship(1),
            torus: None,
            subset: SubsetSpec::flagship(),
            quotient_function: None,
            window: AdelicWindow {
                excluded: [2, 3].into_iter().collect(),
                residues: vec![WindowResidue { modulus: 4, allowed: vec![[1, 0, 0, 0]] }],
            },
            n_fiber: None,
            r0: None,
            beta: 1.0,
            verify_bound: default_verify_bound(),
            min_bad_places: 1,
            budgets: Budgets::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SolveError> {
        serde_json::from_str(text).map_err(|e| SolveError::Config(e.to_string()))
    }

    /// sha256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn n_fiber(&self) -> u64 {
        self.n_fiber.unwrap_or_else(|| self.subset.default_fiber_bound())
    }

    pub fn quotient_function(&self) -> QuotientFunction {
        self.quotient_function.clone().unwrap_or_else(QuotientFunction::ij_coefficient)
    }

    /// `alpha`: the group level combined with the window moduli.
    pub fn alpha(&self) -> u64 {
        nt::lcm_u64(self.group.level, self.window.modulus())
    }

    fn torus(&self) -> Result<TorusSpec, SolveError> {
        let t = match &self.torus {
            Some(t) => TorusSpec::new(self.group.model, t.u.clone(), t.v.clone()),
            None => TorusSpec::fundamental(self.group.model),
        };
        t.map_err(|e| SolveError::Config(e.to_string()))
    }

    /// Places where no avoidance is required: `S`, the bad primes of the
    /// model and the primes dividing `N`.
    pub fn exempt(&self, n_gcd: u64) -> BTreeSet<u64> {
        let mut s = self.window.excluded.clone();
        s.extend(self.group.model.bad_primes());
        s.extend(nt::factor_small(n_gcd.max(1)).into_iter().map(|(p, _)| p));
        s
    }

    /// Window residues at primes outside `S` must also avoid `D` modulo
    /// `p`; drop those that do not and reject when nothing is left.
    fn effective_window(&self) -> Result<AdelicWindow, SolveError> {
        let model = self.group.model;
        let mut out = self.window.clone();
        for r in &mut out.residues {
            let p = nt::factor_small(r.modulus)[0].0;
            if self.window.excluded.contains(&p) || !model.is_good_prime(p) {
                continue;
            }
            r.allowed.retain(|x| !self.subset.contains_mod(&x.map(|c| c % p), p));
            if r.allowed.is_empty() {
                return Err(SolveError::Config(format!(
                    "every allowed residue mod {} lies in D mod {p}, and {p} is not in S",
                    r.modulus
                )));
            }
        }
        Ok(out)
    }

    fn validate(&self) -> Result<(), SolveError> {
        self.subset.validate().map_err(|e| SolveError::Config(e.to_string()))?;
        self.window.validate(self.group.model)?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(SolveError::Config(format!("beta = {} is outside (0, 1]", self.beta)));
        }
        if self.alpha() > finite_models::MAX_MODULUS {
            return Err(SolveError::Config("window modulus too large".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Anisotropic,
    Isotropic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckA {
    pub pass: bool,
    pub moduli: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeResidue {
    pub p: u64,
    pub residue: [u64; 4],
    pub in_d: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckB {
    pub pass: bool,
    pub primes: Vec<PrimeResidue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckC {
    pub pass: bool,
    pub verify_bound: u64,
    pub primes_checked: u64,
    pub failures: Vec<u64>,
    /// `gcd` of the generators of `D` at `P''`.
    #[serde(with = "crate::serde_big::bigint")]
    pub generator_gcd: BigInt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckD {
    pub pass: bool,
    pub transcript: Option<PigeonholeTranscript>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub a: CheckA,
    pub b: CheckB,
    pub c: CheckC,
    pub d: CheckD,
}

impl Checks {
    pub fn all_pass(&self) -> bool {
        self.a.pass && self.b.pass && self.c.pass && self.d.pass
    }
}

/// How `P''` was derived from the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trail {
    /// `f(g) = F(pi(g P))`; for the isotropic solver, the `gcd` of the
    /// generators of `D`.
    pub f: Option<RegularFunction>,
    #[serde(rename = "F")]
    pub quotient_function: Option<QuotientFunction>,
    pub alpha: u64,
    pub n_gcd: u64,
    pub exempt: Vec<u64>,
    pub g: Option<GroupElement>,
    pub q: Option<GroupElement>,
    pub q_exponent: u64,
    pub r0: u64,
    pub theta: Option<f64>,
    pub m_threshold: u64,
    pub n_fiber: u64,
    pub window: AdelicWindow,
    #[serde(default, with = "opt_bigint_pair", skip_serializing_if = "Option::is_none")]
    pub translation: Option<(BigInt, BigInt)>,
    /// Largest `D`-count in one torus coset, per small prime.
    pub fibre_counts: Vec<(u64, u64)>,
}

mod opt_bigint_pair {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<(BigInt, BigInt)>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|(a, b)| [a.to_string(), b.to_string()]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<(BigInt, BigInt)>, D::Error> {
        let v: Option<[String; 2]> = Option::deserialize(d)?;
        v.map(|[a, b]| {
            Ok((a.parse().map_err(serde::de::Error::custom)?, b.parse().map_err(serde::de::Error::custom)?))
        })
        .transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub config_hash: String,
    pub config: SolveConfig,
    #[serde(rename = "P")]
    pub p: GroupElement,
    #[serde(rename = "P_prime")]
    pub p_prime: GroupElement,
    #[serde(rename = "P_dprime")]
    pub p_dprime: GroupElement,
    #[serde(with = "crate::serde_big::bigint")]
    pub f_value: BigInt,
    pub factors: Vec<PrimePower>,
    #[serde(rename = "S0", with = "crate::serde_big::biguint_vec")]
    pub s0: Vec<BigUint>,
    pub l: u64,
    pub checks: Checks,
    pub trail: Trail,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Step IV base point: the first window point by height.
fn base_point(cfg: &SolveConfig, window: &AdelicWindow) -> Result<GroupElement, SolveError> {
    let spec = cfg.group.with_level(1);
    let constraints = window.constraints();
    let cong = if constraints.is_empty() {
        None
    } else {
        almost_prime::prepare_constraints(&spec, &constraints).map_err(|e| SolveError::Config(e.to_string()))?
    };
    let found = lattice_enum::search_by_height(spec, cong.as_ref(), cfg.budgets.base_height, |p| {
        constraints.iter().all(|c| c.admits(p)).then_some(*p)
    })
    .map_err(|e| stage("window")(e.to_string()))?;
    let p = found.ok_or_else(|| {
        stage("window")(format!("no window point of height < {}", cfg.budgets.base_height))
    })?;
    GroupElement::from_i64(spec.model, p).map_err(|e| stage("window")(e.to_string()))
}

fn residue(g: &GroupElement, m: u64) -> [u64; 4] {
    [0, 1, 2, 3].map(|i| nt::residue_big(&g.coords[i], m))
}

fn identity_congruence(model: GroupModel, alpha: u64) -> Option<Congruence> {
    (alpha > 1).then(|| Congruence::identity(model, alpha))
}

fn certify_subset(cfg: &SolveConfig, n_fiber: u64) -> Result<Vec<(u64, u64)>, SolveError> {
    let model = cfg.group.model;
    let primes: Vec<u64> =
        nt::primes_up_to(cfg.budgets.fibre_prime_bound).into_iter().filter(|&p| model.is_good_prime(p)).collect();
    let fibre = torus::check_fibre_bound(model, &cfg.subset, n_fiber, &primes).map_err(|e| SolveError::Config(e.to_string()))?;
    if !fibre.holds {
        return Err(SolveError::Config(format!(
            "D meets a torus coset in more than N = {n_fiber} points mod some p <= {} (counts {:?}); D may contain a fibre of pi",
            cfg.budgets.fibre_prime_bound, fibre.max_per_prime
        )));
    }
    let van = torus::check_pi_d_vanishing(model, &cfg.subset, &cfg.quotient_function(), &primes);
    if !van.d_maps_into_zero_locus {
        return Err(SolveError::Config(format!("pi(D) is not inside {{F = 0}}: {:?}", &van.failures[..van.failures.len().min(4)])));
    }
    if !van.nonvanishing_somewhere {
        return Err(SolveError::Config("F o pi vanishes identically modulo a test prime".into()));
    }
    Ok(primes.into_iter().zip(fibre.max_per_prime).collect())
}

struct SieveOutcome {
    hit: almost_prime::AlmostPrimeHit,
    p_prime: GroupElement,
    s0: Vec<u64>,
    transcript: PigeonholeTranscript,
}

/// The full pipeline for the anisotropic group.
pub fn solve(cfg: &SolveConfig) -> Result<Certificate, SolveError> {
    cfg.validate()?;
    let model = cfg.group.model;
    if !model.is_quaternion() {
        return Err(SolveError::Config("solve needs a quaternion model; use solve_isotropic for SL2".into()));
    }
    let window = cfg.effective_window()?;
    let n_fiber = cfg.n_fiber();
    let fibre_counts = certify_subset(cfg, n_fiber)?;
    let ts = cfg.torus()?;
    let alpha = cfg.alpha();
    let spec_a = cfg.group.with_level(alpha);

    let p = base_point(cfg, &window)?;
    log::info!("base point P = {:?}", p.coords);
    let big_f = cfg.quotient_function();
    let f = big_f.pullback(model, &p).map_err(|e| stage("gcd")(e.to_string()))?;
    let budget = ResidueBudget::default();
    let gcd = finite_models::certify_gcd(&spec_a, &f, cfg.budgets.gcd_height, cfg.budgets.gcd_prime_bound, &budget)
        .map_err(|e| stage("gcd")(e.to_string()))?;
    if !gcd.certified {
        return Err(stage("gcd")(format!("gcd N = {} could not be certified", gcd.n)));
    }
    let n_gcd = gcd.n;

    let (r0, theta) = match cfg.r0 {
        Some(r) => (r, None),
        None => {
            let fit = almost_prime::theta_fit(spec_a, &f, cfg.budgets.theta_height, None)
                .map_err(|e| stage("theta")(e.to_string()))?;
            (almost_prime::report_r_formula(fit.theta, cfg.beta), Some(fit.theta))
        }
    };
    let k = ts.stabilizing_exponent(alpha).map_err(|e| stage("torus")(e.to_string()))?;
    let q_phi = ts.power(k);
    let threshold = torus::threshold_m(&q_phi, r0, n_fiber, cfg.budgets.threshold_prime_bound)
        .map_err(|e| stage("threshold")(e.to_string()))?;
    let m = threshold.m;
    log::info!("N = {n_gcd}, r0 = {r0}, Q_phi = Q^{k}, M = {m}");

    let exempt = cfg.exempt(n_gcd);
    let mut excluded = exempt.clone();
    excluded.extend(window.primes());
    let query = SaturationQuery {
        spec: spec_a,
        f: f.clone(),
        excluded,
        beta: cfg.beta,
        height: cfg.budgets.sieve_height,
        m_bound: m,
        n_gcd,
        factor_budget: cfg.budgets.factor,
    };
    let q_elem = q_phi.element();
    let mut failure: Option<String> = None;
    let mut scanned = 0u64;
    let cong = identity_congruence(model, alpha);
    let outcome = lattice_enum::search_by_height(spec_a, cong.as_ref(), cfg.budgets.sieve_height, |pt: &SmallPoint| {
        scanned += 1;
        let hit = match almost_prime::evaluate_hit(&query, r0, pt) {
            Ok(Some(h)) => h,
            Ok(None) => return None,
            Err(e) => {
                failure.get_or_insert(e.to_string());
                return None;
            }
        };
        let s0: Vec<u64> = match hit.outside.iter().map(|q| q.to_u64().filter(|&v| v < 1 << 32)).collect() {
            Some(v) => v,
            None => {
                failure.get_or_insert(format!("bad place of {} exceeds 2^32", hit.value));
                return None;
            }
        };
        if (s0.len() as u64) < cfg.min_bad_places {
            return None;
        }
        let p_prime = hit.g.multiply(&p).ok()?;
        let state = AvoidanceState {
            p_prime: p_prime.clone(),
            q: q_elem.clone(),
            torus_d: ts.d,
            s0: s0.clone(),
            n_fiber,
            r0,
            subset: cfg.subset.clone(),
        };
        match torus::pigeonhole_transcript(&state) {
            Ok(t) if t.product_ok && t.sum_ok => Some(SieveOutcome { hit, p_prime, s0, transcript: t }),
            Ok(_) => None,
            Err(e) => {
                failure.get_or_insert(e.to_string());
                None
            }
        }
    })
    .map_err(|e| stage("sieve")(e.to_string()))?;
    let Some(out) = outcome else {
        let err = AlmostPrimeError::NotFound { frontier: cfg.budgets.sieve_height, scanned };
        return Err(stage("sieve")(match failure {
            Some(f) => format!("{err}; first failure: {f}"),
            None => err.to_string(),
        }));
    };

    let state = AvoidanceState {
        p_prime: out.p_prime.clone(),
        q: q_elem.clone(),
        torus_d: ts.d,
        s0: out.s0.clone(),
        n_fiber,
        r0,
        subset: cfg.subset.clone(),
    };
    let chosen = torus::select_avoiding(&state).map_err(|e| stage("avoid")(e.to_string()))?;
    debug_assert_eq!(chosen.transcript, out.transcript);

    let trail = Trail {
        f: Some(f),
        quotient_function: Some(big_f),
        alpha,
        n_gcd,
        exempt: exempt.iter().copied().collect(),
        g: Some(out.hit.g.clone()),
        q: Some(q_elem),
        q_exponent: k,
        r0,
        theta,
        m_threshold: m,
        n_fiber,
        window: window.clone(),
        translation: None,
        fibre_counts,
    };
    let s0_big: Vec<BigUint> = out.s0.iter().map(|&v| BigUint::from(v)).collect();
    let checks = compute_checks(cfg, &window, &exempt, &chosen.p_dprime, &out.s0, Some(chosen.transcript));
    let cert = Certificate {
        kind: CertificateKind::Anisotropic,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        p,
        p_prime: out.p_prime,
        p_dprime: chosen.p_dprime,
        f_value: out.hit.value,
        factors: out.hit.factorization.factors,
        s0: s0_big,
        l: chosen.l,
        checks,
        trail,
    };
    if !cert.checks.all_pass() {
        return Err(stage("verify")(format!("checks failed: {:?}", cert.checks)));
    }
    Ok(cert)
}

fn compute_checks(
    cfg: &SolveConfig,
    window: &AdelicWindow,
    exempt: &BTreeSet<u64>,
    p2: &GroupElement,
    s0: &[u64],
    transcript: Option<PigeonholeTranscript>,
) -> Checks {
    let a = CheckA { pass: window.admits(p2), moduli: window.residues.iter().map(|r| r.modulus).collect() };
    let primes: Vec<PrimeResidue> = s0
        .iter()
        .map(|&p| {
            let r = residue(p2, p);
            PrimeResidue { p, residue: r, in_d: cfg.subset.contains_mod(&r, p) }
        })
        .collect();
    let b = CheckB { pass: primes.iter().all(|r| !r.in_d), primes };
    let c = check_c(&cfg.subset, exempt, p2, cfg.verify_bound);
    let d = match transcript {
        Some(t) => CheckD {
            pass: t.product_ok
                && t.sum_ok
                && t.tables.iter().all(|tb| tb.orbit_distinct == t.orbit_len && tb.order > t.orbit_len),
            transcript: Some(t),
        },
        None => CheckD { pass: s0.is_empty(), transcript: None },
    };
    Checks { a, b, c, d }
}

/// `P'' mod p` lies outside `D` for every prime up to the bound that is not
/// exempt.
pub fn check_c(d: &SubsetSpec, exempt: &BTreeSet<u64>, g: &GroupElement, bound: u64) -> CheckC {
    let primes: Vec<u64> = nt::primes_up_to(bound).into_iter().filter(|p| !exempt.contains(p)).collect();
    let failures: Vec<u64> =
        primes.par_iter().copied().filter(|&p| d.contains_mod(&residue(g, p), p)).collect();
    CheckC {
        pass: failures.is_empty(),
        verify_bound: bound,
        primes_checked: primes.len() as u64,
        failures,
        generator_gcd: d.generator_gcd(g),
    }
}

fn unipotent_upper(t: &BigInt) -> GroupElement {
    GroupElement::new(GroupModel::Sl2, [BigInt::one(), t.clone(), BigInt::zero(), BigInt::one()]).expect("det 1")
}

fn unipotent_lower(s: &BigInt) -> GroupElement {
    GroupElement::new(GroupModel::Sl2, [BigInt::one(), BigInt::zero(), s.clone(), BigInt::one()]).expect("det 1")
}

/// Offsets `(i, j)` ordered by `|i| + |j|`, then lexicographically.
fn translation_offsets(range: i64) -> Vec<(i64, i64)> {
    let mut v: Vec<(i64, i64)> =
        (-range..=range).flat_map(|i| (-range..=range).map(move |j| (i, j))).collect();
    v.sort_by_key(|&(i, j)| (i.abs() + j.abs(), i, j));
    v
}

/// `P'' = L(s) P U(t)` with `s, t = 0 mod alpha`, chosen so that every prime
/// dividing the generator gcd at `P''` is exempt.
pub fn solve_isotropic(cfg: &SolveConfig) -> Result<Certificate, SolveError> {
    cfg.validate()?;
    if cfg.group.model != GroupModel::Sl2 {
        return Err(SolveError::Config("solve_isotropic needs the SL2 model".into()));
    }
    let window = cfg.effective_window()?;
    let alpha = cfg.alpha();
    let exempt = cfg.exempt(1);
    let p = base_point(cfg, &window)?;
    let range = cfg.budgets.translation_range.min(1 << 20) as i64;
    let found = translation_offsets(range).into_iter().find_map(|(i, j)| {
        let s = BigInt::from(i) * alpha;
        let t = BigInt::from(j) * alpha;
        let cand = unipotent_lower(&s).multiply(&p).ok()?.multiply(&unipotent_upper(&t)).ok()?;
        let g = cfg.subset.generator_gcd(&cand);
        if g.is_zero() {
            return None;
        }
        let fac = factor::factor(g.magnitude(), &cfg.budgets.factor).ok()?;
        let ok = fac.primes().all(|q| q.to_u64().is_some_and(|q| exempt.contains(&q)));
        ok.then_some((s, t, cand, g, fac))
    });
    let Some((s, t, p2, g, fac)) = found else {
        return Err(stage("translate")(format!("no translation with |i|, |j| <= {range} escapes D")));
    };
    let checks = compute_checks(cfg, &window, &exempt, &p2, &[], None);
    let cert = Certificate {
        kind: CertificateKind::Isotropic,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        p: p.clone(),
        p_prime: p,
        p_dprime: p2,
        f_value: g,
        factors: fac.factors,
        s0: vec![],
        l: 0,
        checks,
        trail: Trail {
            f: None,
            quotient_function: None,
            alpha,
            n_gcd: 1,
            exempt: exempt.iter().copied().collect(),
            g: None,
            q: None,
            q_exponent: 0,
            r0: 0,
            theta: None,
            m_threshold: 1,
            n_fiber: cfg.n_fiber(),
            window,
            translation: Some((s, t)),
            fibre_counts: vec![],
        },
    };
    if !cert.checks.all_pass() {
        return Err(stage("verify")(format!("checks failed: {:?}", cert.checks)));
    }
    Ok(cert)
}

/// Dispatch on the group model.
pub fn solve_any(cfg: &SolveConfig) -> Result<Certificate, SolveError> {
    match cfg.group.model {
        GroupModel::Sl2 => solve_isotropic(cfg),
        GroupModel::Quat { .. } => solve(cfg),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub valid: bool,
    pub failures: Vec<String>,
    pub checks: Option<Checks>,
}

struct Verifier {
    failures: Vec<String>,
}

impl Verifier {
    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) -> bool {
        if !ok {
            self.failures.push(msg());
        }
        ok
    }
}

fn on_group(v: &mut Verifier, name: &str, g: &GroupElement, model: GroupModel) -> bool {
    if g.model != model {
        return v.require(false, || format!("{name} has model {} but the config has {model}", g.model));
    }
    let value = g.defining_value();
    let eq = match model {
        GroupModel::Sl2 => "det = 1",
        GroupModel::Quat { .. } => "nrd = 1",
    };
    v.require(value.is_one(), || format!("{name} violates the defining equation {eq} (value {value})"))
}

/// Recompute every claim of the certificate from its embedded config.
pub fn verify_certificate(cert: &Certificate) -> VerifyReport {
    let mut v = Verifier { failures: Vec::new() };
    let cfg = &cert.config;
    v.require(cfg.hash() == cert.config_hash, || "config_hash does not match the embedded config".into());
    if let Err(e) = cfg.validate() {
        v.failures.push(e.to_string());
        return VerifyReport { valid: false, failures: v.failures, checks: None };
    }
    let model = cfg.group.model;
    let points_ok = on_group(&mut v, "P", &cert.p, model)
        & on_group(&mut v, "P_prime", &cert.p_prime, model)
        & on_group(&mut v, "P_dprime", &cert.p_dprime, model);
    let window = match cfg.effective_window() {
        Ok(w) => w,
        Err(e) => {
            v.failures.push(e.to_string());
            return VerifyReport { valid: false, failures: v.failures, checks: None };
        }
    };
    v.require(window == cert.trail.window, || "recorded window differs from the config".into());
    v.require(window.admits(&cert.p), || "P is not in the window".into());
    let alpha = cfg.alpha();
    v.require(alpha == cert.trail.alpha, || format!("alpha should be {alpha}"));

    let fac_ok = {
        let fac = factor::Factorization {
            n: cert.f_value.magnitude().clone(),
            factors: cert.factors.clone(),
        };
        !cert.f_value.is_zero() && fac.verify()
    };
    v.require(fac_ok, || "factorization of f_value does not verify".into());

    let (exempt, s0, transcript) = match cert.kind {
        CertificateKind::Anisotropic => verify_anisotropic(&mut v, cert, points_ok),
        CertificateKind::Isotropic => verify_isotropic(&mut v, cert, points_ok),
    };
    let checks = compute_checks(cfg, &window, &exempt, &cert.p_dprime, &s0, transcript);
    v.require(checks.a.pass, || "check (a): P'' is not in the window".into());
    v.require(checks.b.pass, || "check (b): P'' lies in D modulo a prime of S0".into());
    v.require(checks.c.pass, || format!("check (c): P'' lies in D modulo {:?}", &checks.c.failures[..checks.c.failures.len().min(8)]));
    v.require(checks.d.pass, || "check (d): pigeonhole transcript fails".into());
    v.require(checks == cert.checks, || "recorded checks differ from the recomputed ones".into());
    VerifyReport { valid: v.failures.is_empty(), failures: v.failures, checks: Some(checks) }
}

fn verify_anisotropic(
    v: &mut Verifier,
    cert: &Certificate,
    points_ok: bool,
) -> (BTreeSet<u64>, Vec<u64>, Option<PigeonholeTranscript>) {
    let cfg = &cert.config;
    let model = cfg.group.model;
    let alpha = cfg.alpha();
    let spec_a = cfg.group.with_level(alpha);
    let n_fiber = cfg.n_fiber();
    let empty = (BTreeSet::new(), vec![], None);
    if !v.require(model.is_quaternion(), || "anisotropic certificate for a split group".into()) {
        return empty;
    }
    if let Err(e) = certify_subset(cfg, n_fiber) {
        v.failures.push(e.to_string());
    }
    let big_f = cfg.quotient_function();
    let Ok(f) = big_f.pullback(model, &cert.p) else {
        v.failures.push("cannot rebuild f".into());
        return empty;
    };
    v.require(cert.trail.f.as_ref() == Some(&f), || "recorded f differs from F o pi o (. P)".into());
    let n_gcd = match finite_models::certify_gcd(
        &spec_a,
        &f,
        cfg.budgets.gcd_height,
        cfg.budgets.gcd_prime_bound,
        &ResidueBudget::default(),
    ) {
        Ok(g) if g.certified => g.n,
        _ => {
            v.failures.push("gcd N cannot be recertified".into());
            return empty;
        }
    };
    v.require(n_gcd == cert.trail.n_gcd, || format!("N should be {n_gcd}"));
    let exempt = cfg.exempt(n_gcd);
    let r0 = match cfg.r0 {
        Some(r) => r,
        None => match almost_prime::theta_fit(spec_a, &f, cfg.budgets.theta_height, None) {
            Ok(fit) => almost_prime::report_r_formula(fit.theta, cfg.beta),
            Err(e) => {
                v.failures.push(e.to_string());
                return empty;
            }
        },
    };
    v.require(r0 == cert.trail.r0, || format!("r0 should be {r0}"));
    let Ok(ts) = cfg.torus() else {
        v.failures.push("invalid torus".into());
        return empty;
    };
    let Ok(k) = ts.stabilizing_exponent(alpha) else {
        v.failures.push("Q has no stabilizing power".into());
        return empty;
    };
    let q_phi = ts.power(k);
    let q = q_phi.element();
    v.require(cert.trail.q.as_ref() == Some(&q) && cert.trail.q_exponent == k, || "recorded Q differs".into());
    let m = match torus::threshold_m(&q_phi, r0, n_fiber, cfg.budgets.threshold_prime_bound) {
        Ok(t) => t.m,
        Err(e) => {
            v.failures.push(e.to_string());
            return empty;
        }
    };
    v.require(m == cert.trail.m_threshold, || format!("M should be {m}"));

    let Some(g) = &cert.trail.g else {
        v.failures.push("missing g".into());
        return empty;
    };
    on_group(v, "g", g, model);
    v.require(g.in_congruence_subgroup(alpha), || format!("g is not = 1 mod {alpha}"));
    if points_ok {
        v.require(g.multiply(&cert.p).ok().as_ref() == Some(&cert.p_prime), || "P_prime != g P".into());
        let orbit = q.pow(cert.l).multiply(&cert.p_prime).ok();
        v.require(orbit.as_ref() == Some(&cert.p_dprime), || format!("P_dprime != Q^{} P_prime", cert.l));
        v.require(cert.l < r0 * n_fiber + 1, || "l outside the orbit Theta".into());
    }
    let fv = f.eval(&g.coords);
    v.require(fv == cert.f_value, || format!("f(g) = {fv}, not f_value"));
    let on_pi = big_f.on_group(model);
    let at_p1 = on_pi.eval(&cert.p_prime.coords);
    let at_p2 = on_pi.eval(&cert.p_dprime.coords);
    v.require(at_p1 == cert.f_value && at_p2 == cert.f_value, || {
        format!("f-invariance fails: F(pi(P')) = {at_p1}, F(pi(P'')) = {at_p2}")
    });

    let mut s0 = Vec::new();
    let mut mult = 0u64;
    for pp in &cert.factors {
        match pp.p.to_u64() {
            Some(p) if exempt.contains(&p) || alpha % p == 0 || n_gcd % p == 0 => {}
            Some(p) => {
                v.require(p > m, || format!("factor {p} is not above M = {m}"));
                s0.push(p);
                mult += pp.e as u64;
            }
            None => {
                v.failures.push(format!("factor {} too large for the residue checks", pp.p));
            }
        }
    }
    v.require(s0.len() as u64 >= cfg.min_bad_places, || format!("fewer than {} bad places", cfg.min_bad_places));
    v.require(mult <= r0, || format!("f_value has {mult} admitted factors, more than r0 = {r0}"));
    let recorded: Vec<u64> = cert.s0.iter().filter_map(|p| p.to_u64()).collect();
    v.require(recorded == s0 && cert.s0.len() == s0.len(), || format!("S0 should be {s0:?}, certificate has {recorded:?}"));

    let state = AvoidanceState {
        p_prime: cert.p_prime.clone(),
        q,
        torus_d: ts.d,
        s0: s0.clone(),
        n_fiber,
        r0,
        subset: cfg.subset.clone(),
    };
    let transcript = match torus::pigeonhole_transcript(&state) {
        Ok(t) => {
            let bad: BTreeSet<u64> = t.tables.iter().flat_map(|tb| tb.bad_l.iter().copied()).collect();
            let first = (0..t.orbit_len).find(|l| !bad.contains(l));
            v.require(first == Some(cert.l), || format!("the first avoiding orbit index is {first:?}"));
            Some(t)
        }
        Err(e) => {
            v.failures.push(e.to_string());
            None
        }
    };
    (exempt, s0, transcript)
}

fn verify_isotropic(
    v: &mut Verifier,
    cert: &Certificate,
    points_ok: bool,
) -> (BTreeSet<u64>, Vec<u64>, Option<PigeonholeTranscript>) {
    let cfg = &cert.config;
    let alpha = cfg.alpha();
    let exempt = cfg.exempt(1);
    v.require(cfg.group.model == GroupModel::Sl2, || "isotropic certificate for a non-split model".into());
    v.require(cert.p == cert.p_prime && cert.l == 0, || "isotropic certificate must have P' = P and l = 0".into());
    let Some((s, t)) = &cert.trail.translation else {
        v.failures.push("missing translation".into());
        return (exempt, vec![], None);
    };
    let a = BigInt::from(alpha);
    v.require((s % &a).is_zero() && (t % &a).is_zero(), || format!("translations are not = 0 mod {alpha}"));
    if points_ok {
        let rebuilt = unipotent_lower(s).multiply(&cert.p).and_then(|x| x.multiply(&unipotent_upper(t)));
        v.require(rebuilt.ok().as_ref() == Some(&cert.p_dprime), || "P_dprime != L(s) P U(t)".into());
    }
    let g = cfg.subset.generator_gcd(&cert.p_dprime);
    v.require(g == cert.f_value, || format!("generator gcd at P'' is {g}"));
    for pp in &cert.factors {
        v.require(pp.p.to_u64().is_some_and(|p| exempt.contains(&p)), || {
            format!("P'' lies in D modulo the non-exempt prime {}", pp.p)
        });
    }
    v.require(cert.s0.is_empty(), || "S0 must be empty".into());
    (exempt, vec![], None)
}

pub fn abs_big(v: &BigInt) -> BigInt {
    v.abs()
}
