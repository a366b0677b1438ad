//! Enumeration of integral group points of bounded height, optionally inside
//! a congruence class, and the growth-law fit for their counts.
//!
//! Points are produced shard by shard, one shard per value of the leading
//! coordinate. Within a shard the defining quadric is solved directly: for
//! `SL2` the last two entries form a line of solutions of `a d - b c = 1`,
//! for the quaternion model the third coordinate is a square root. Shards
//! are sorted and concatenated in order, so the output is lexicographic and
//! independent of how many worker threads ran.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groups::{GroupElement, GroupModel, GroupSpec, ResidueElement};
use crate::nt;

/// Heights are capped so every intermediate fits comfortably in `i128`.
pub const MAX_HEIGHT: u64 = 1 << 24;

const SHARD_BLOCK: usize = 64;

pub type SmallPoint = [i64; 4];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnumError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("element budget {budget} exceeded; leading coordinates {completed_lo}..={completed_hi} finished")]
    BudgetExceeded {
        budget: usize,
        /// Empty when `completed_lo > completed_hi`.
        completed_lo: i64,
        completed_hi: i64,
        partial: Vec<SmallPoint>,
    },
    #[error("no matching point of height < {0}")]
    NotFound(u64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Congruence constraint `g = target (mod modulus)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Congruence {
    pub target: ResidueElement,
}

impl Congruence {
    pub fn new(target: ResidueElement) -> Self {
        Congruence { target }
    }

    pub fn identity(model: GroupModel, modulus: u64) -> Self {
        Congruence { target: ResidueElement::identity(model, modulus) }
    }

    pub fn modulus(&self) -> u64 {
        self.target.modulus
    }

    #[inline]
    fn coord_ok(&self, i: usize, v: i64) -> bool {
        nt::residue_i128(v as i128, self.target.modulus) == self.target.coords[i]
    }

    pub fn matches(&self, p: &SmallPoint) -> bool {
        (0..4).all(|i| self.coord_ok(i, p[i]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallQuery {
    pub spec: GroupSpec,
    /// Strict height bound: points with `max |c_i| < height`.
    pub height: u64,
    pub congruence: Option<Congruence>,
    pub max_elements: Option<usize>,
}

impl BallQuery {
    pub fn new(spec: GroupSpec, height: u64) -> Self {
        BallQuery { spec, height, congruence: None, max_elements: None }
    }

    /// Points of the principal congruence subgroup at the spec's level.
    pub fn gamma(spec: GroupSpec, height: u64) -> Self {
        let congruence = (spec.level > 1).then(|| Congruence::identity(spec.model, spec.level));
        BallQuery { spec, height, congruence, max_elements: None }
    }

    pub fn with_congruence(mut self, c: Congruence) -> Self {
        self.congruence = Some(c);
        self
    }

    pub fn with_budget(mut self, max_elements: usize) -> Self {
        self.max_elements = Some(max_elements);
        self
    }

    fn validate(&self) -> Result<(), EnumError> {
        if self.height == 0 {
            return Err(EnumError::InvalidQuery("height bound must be >= 1".into()));
        }
        if self.height > MAX_HEIGHT {
            return Err(EnumError::InvalidQuery(format!("height bound {} exceeds {}", self.height, MAX_HEIGHT)));
        }
        if let Some(c) = &self.congruence {
            if c.target.model != self.spec.model {
                return Err(EnumError::InvalidQuery("congruence target has a different model".into()));
            }
            if c.modulus() == 0 {
                return Err(EnumError::InvalidQuery("modulus must be >= 1".into()));
            }
        }
        Ok(())
    }
}

fn shard(model: GroupModel, t: i64, lead: i64, cong: Option<&Congruence>) -> Vec<SmallPoint> {
    let mut out = Vec::new();
    if let Some(c) = cong {
        if !c.coord_ok(0, lead) {
            return out;
        }
    }
    match model {
        GroupModel::Sl2 => sl2_shard(t, lead, cong, &mut out),
        GroupModel::Quat { a, b } => quat_shard(a, b, t, lead, cong, &mut out),
    }
    out.sort_unstable();
    out
}

/// First value `>= lo` congruent to the target residue, with step.
fn stepped_range(lo: i64, hi: i64, cong: Option<&Congruence>, coord: usize) -> (i64, i64, i64) {
    match cong {
        None => (lo, hi, 1),
        Some(c) => {
            let m = c.modulus() as i64;
            let r = c.target.coords[coord] as i64;
            let start = lo + (r - lo).rem_euclid(m);
            (start, hi, m)
        }
    }
}

/// `k` range with `|base + k*step| < t`.
fn line_range(base: i128, step: i128, t: i128) -> Option<(i128, i128)> {
    let lim = t - 1;
    if step == 0 {
        return (base.abs() <= lim).then_some((i128::MIN / 4, i128::MAX / 4));
    }
    // -lim <= base + k*step <= lim; flip signs so the step is positive
    let (base, step) = if step > 0 { (base, step) } else { (-base, -step) };
    let lo = div_ceil(-lim - base, step);
    let hi = (lim - base).div_euclid(step);
    (lo <= hi).then_some((lo, hi))
}

fn div_ceil(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    -((-a).div_euclid(b))
}

fn sl2_shard(t: i64, a: i64, cong: Option<&Congruence>, out: &mut Vec<SmallPoint>) {
    let (start, hi, step) = stepped_range(-(t - 1), t - 1, cong, 1);
    let mut b = start;
    while b <= hi {
        let (g, x, y) = nt::ext_gcd(a as i128, b as i128);
        if g == 1 {
            // a*x + b*y = 1  =>  d0 = x, c0 = -y ; general c = c0 + k a, d = d0 + k b
            let (c0, d0) = (-y, x);
            let rc = line_range(c0, a as i128, t as i128);
            let rd = line_range(d0, b as i128, t as i128);
            if let (Some((l1, h1)), Some((l2, h2))) = (rc, rd) {
                let (lo, hi_k) = (l1.max(l2), h1.min(h2));
                for k in lo..=hi_k {
                    let c = (c0 + k * a as i128) as i64;
                    let d = (d0 + k * b as i128) as i64;
                    if let Some(cg) = cong {
                        if !cg.coord_ok(2, c) || !cg.coord_ok(3, d) {
                            continue;
                        }
                    }
                    out.push([a, b, c, d]);
                }
            }
        }
        b += step;
    }
}

fn quat_shard(qa: i64, qb: i64, t: i64, x: i64, cong: Option<&Congruence>, out: &mut Vec<SmallPoint>) {
    // x^2 - a y^2 - b z^2 + ab w^2 = 1  =>  z^2 = n0 + a w^2 with n0 = (x^2 - a y^2 - 1)/b
    let (a, b) = (qa as i128, qb as i128);
    let lim = (t - 1) as i128;
    let zmax2 = lim * lim;
    let (ystart, yhi, ystep) = stepped_range(-(t - 1), t - 1, cong, 1);
    let mut y = ystart;
    while y <= yhi {
        let num = (x as i128) * (x as i128) - a * (y as i128) * (y as i128) - 1;
        if num % b != 0 {
            y += ystep;
            continue;
        }
        let n0 = num / b;
        // need 0 <= n0 + a s <= zmax2 with s = w^2 in [0, lim^2]
        let (slo, shi) = if a > 0 {
            (div_ceil((-n0).max(0), a).max(0), (zmax2 - n0).div_euclid(a).min(zmax2))
        } else {
            let s = -a;
            (div_ceil((n0 - zmax2).max(0), s).max(0), n0.div_euclid(s).min(zmax2))
        };
        if slo <= shi {
            let wlo = nt::isqrt_u128(slo as u128) as i128;
            let wlo = if wlo * wlo < slo { wlo + 1 } else { wlo };
            let whi = nt::isqrt_u128(shi as u128) as i128;
            for wabs in wlo..=whi {
                let z2 = n0 + a * wabs * wabs;
                let Some(z) = nt::exact_sqrt_i128(z2) else { continue };
                if z > lim {
                    continue;
                }
                for w in signed(wabs) {
                    for zz in signed(z) {
                        let p = [x, y, zz as i64, w as i64];
                        if let Some(cg) = cong {
                            if !cg.coord_ok(2, p[2]) || !cg.coord_ok(3, p[3]) {
                                continue;
                            }
                        }
                        out.push(p);
                    }
                }
            }
        }
        y += ystep;
    }
}

fn signed(v: i128) -> impl Iterator<Item = i128> {
    let two = v != 0;
    std::iter::once(v).chain(two.then_some(-v))
}

/// All points of the ball in lexicographic order, as machine integers.
pub fn enumerate_ball_small(q: &BallQuery) -> Result<Vec<SmallPoint>, EnumError> {
    q.validate()?;
    let t = q.height as i64;
    let leads: Vec<i64> = (-(t - 1)..=(t - 1)).collect();
    let cong = q.congruence.as_ref();
    let mut out: Vec<SmallPoint> = Vec::new();
    for (block_idx, block) in leads.chunks(SHARD_BLOCK).enumerate() {
        let shards: Vec<Vec<SmallPoint>> = block.par_iter().map(|&lead| shard(q.spec.model, t, lead, cong)).collect();
        for (i, s) in shards.into_iter().enumerate() {
            if let Some(budget) = q.max_elements {
                if out.len() + s.len() > budget {
                    let done = block_idx * SHARD_BLOCK + i;
                    return Err(EnumError::BudgetExceeded {
                        budget,
                        completed_lo: -(t - 1),
                        completed_hi: -(t - 1) + done as i64 - 1,
                        partial: out,
                    });
                }
            }
            out.extend(s);
        }
    }
    Ok(out)
}

pub fn enumerate_ball(q: &BallQuery) -> Result<Vec<GroupElement>, EnumError> {
    let model = q.spec.model;
    Ok(enumerate_ball_small(q)?.into_iter().map(|p| GroupElement::from_small(model, p)).collect())
}

pub fn count_ball(q: &BallQuery) -> Result<u64, EnumError> {
    q.validate()?;
    if q.max_elements.is_some() {
        return enumerate_ball_small(q).map(|v| v.len() as u64);
    }
    let t = q.height as i64;
    let cong = q.congruence.as_ref();
    Ok((-(t - 1)..=(t - 1)).into_par_iter().map(|lead| shard(q.spec.model, t, lead, cong).len() as u64).sum())
}

/// Naive reference: scan every coordinate tuple in the box.
pub fn naive_ball(q: &BallQuery) -> Vec<SmallPoint> {
    let t = q.height as i64;
    let mut out = Vec::new();
    for c0 in -(t - 1)..t {
        for c1 in -(t - 1)..t {
            for c2 in -(t - 1)..t {
                for c3 in -(t - 1)..t {
                    let p = [c0, c1, c2, c3];
                    if q.spec.model.defining_value(&p.map(|v| v as i128)) != 1 {
                        continue;
                    }
                    if let Some(c) = &q.congruence {
                        if !c.matches(&p) {
                            continue;
                        }
                    }
                    out.push(p);
                }
            }
        }
    }
    out
}

pub fn small_height(p: &SmallPoint) -> u64 {
    p.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
}

/// Search order: height, then the identity ahead of everything else, then
/// lexicographic coordinates.
pub fn search_key(model: GroupModel, p: &SmallPoint) -> (u64, bool, SmallPoint) {
    (small_height(p), *p != model.identity_coords(), *p)
}

/// Visit points in search order, shell by shell (heights in `[2^k, 2^(k+1))`),
/// until `visit` returns `Some` or heights reach `t_max`.
pub fn search_by_height<R>(
    spec: GroupSpec,
    congruence: Option<&Congruence>,
    t_max: u64,
    mut visit: impl FnMut(&SmallPoint) -> Option<R>,
) -> Result<Option<R>, EnumError> {
    let mut lo = 0u64;
    let mut t = 2u64;
    loop {
        let t_eff = t.min(t_max.max(1));
        let mut q = BallQuery::new(spec, t_eff);
        q.congruence = congruence.cloned();
        let mut pts: Vec<SmallPoint> =
            enumerate_ball_small(&q)?.into_iter().filter(|p| small_height(p) >= lo).collect();
        pts.sort_by_key(|p| search_key(spec.model, p));
        for p in &pts {
            if let Some(r) = visit(p) {
                return Ok(Some(r));
            }
        }
        if t_eff >= t_max {
            return Ok(None);
        }
        lo = t_eff;
        t = t.saturating_mul(2);
    }
}

/// Combine pairwise-coprime prime-power targets into a single congruence.
pub fn combine_targets(model: GroupModel, targets: &[ResidueElement]) -> Result<Option<Congruence>, EnumError> {
    let mut acc: Option<ResidueElement> = None;
    for t in targets {
        if t.model != model {
            return Err(EnumError::InvalidQuery("target residue has a different model".into()));
        }
        if !t.satisfies_equation() {
            return Err(EnumError::InvalidQuery(format!("target {:?} mod {} is not on the group", t.coords, t.modulus)));
        }
        acc = Some(match acc {
            None => t.clone(),
            Some(prev) => {
                let mut coords = [0u64; 4];
                let mut modulus = 0;
                for i in 0..4 {
                    let (r, m) = nt::crt_pair(prev.coords[i], prev.modulus, t.coords[i], t.modulus).ok_or_else(|| {
                        EnumError::InvalidQuery(format!("moduli {} and {} are not coprime", prev.modulus, t.modulus))
                    })?;
                    coords[i] = r;
                    modulus = m;
                }
                ResidueElement { model, modulus, coords }
            }
        });
    }
    Ok(acc.map(Congruence::new))
}

/// Minimal-height point matching every target residue.
pub fn find_congruent_point(
    spec: GroupSpec,
    targets: &[ResidueElement],
    t_max: u64,
) -> Result<GroupElement, EnumError> {
    let cong = combine_targets(spec.model, targets)?;
    search_by_height(spec, cong.as_ref(), t_max, |p| Some(*p))?
        .map(|p| GroupElement::from_small(spec.model, p))
        .ok_or(EnumError::NotFound(t_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSample {
    pub height: u64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub samples: Vec<GrowthSample>,
    /// Fitted exponent of `T`.
    pub a: f64,
    /// Best rational approximation of `a` with denominator at most 12.
    pub a_rational: (i64, i64),
    /// Fitted exponent of `log T`.
    pub b: f64,
    /// Fitted log of the leading constant.
    pub log_constant: f64,
    pub residual_rms: f64,
    pub residual_max: f64,
}

pub fn fit_growth(spec: GroupSpec, heights: &[u64]) -> Result<GrowthReport, EnumError> {
    check_heights(heights)?;
    let mut samples = Vec::with_capacity(heights.len());
    for &t in heights {
        let count = count_ball(&BallQuery::new(spec, t))?;
        samples.push(GrowthSample { height: t, count });
    }
    fit_growth_counts(&samples)
}

fn check_heights(heights: &[u64]) -> Result<(), EnumError> {
    if heights.len() < 4 {
        return Err(EnumError::InsufficientData(format!("need at least 4 heights, got {}", heights.len())));
    }
    if heights.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EnumError::InvalidQuery("heights must be strictly increasing".into()));
    }
    if heights[0] < 2 {
        return Err(EnumError::InsufficientData("heights must be >= 2 for a log-scale fit".into()));
    }
    Ok(())
}

/// Least squares for `log count = log C + a log T + b log log T`.
pub fn fit_growth_counts(samples: &[GrowthSample]) -> Result<GrowthReport, EnumError> {
    let heights: Vec<u64> = samples.iter().map(|s| s.height).collect();
    check_heights(&heights)?;
    if let Some(s) = samples.iter().find(|s| s.count == 0) {
        return Err(EnumError::InsufficientData(format!("zero count at height {}", s.height)));
    }
    let rows: Vec<[f64; 3]> = samples
        .iter()
        .map(|s| {
            let lt = (s.height as f64).ln();
            [1.0, lt, lt.ln()]
        })
        .collect();
    let ys: Vec<f64> = samples.iter().map(|s| (s.count as f64).ln()).collect();
    let coef = least_squares3(&rows, &ys)
        .ok_or_else(|| EnumError::InsufficientData("degenerate design matrix".into()))?;
    let residuals: Vec<f64> =
        rows.iter().zip(&ys).map(|(r, y)| y - (coef[0] * r[0] + coef[1] * r[1] + coef[2] * r[2])).collect();
    let residual_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    let residual_max = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(GrowthReport {
        samples: samples.to_vec(),
        a: clean(coef[1]),
        a_rational: rational_approx(coef[1], 12),
        b: clean(coef[2]),
        log_constant: coef[0],
        residual_rms,
        residual_max,
    })
}

fn clean(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r + 0.0
    } else {
        x
    }
}

fn least_squares3(rows: &[[f64; 3]], ys: &[f64]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for (r, y) in rows.iter().zip(ys) {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += r[i] * r[j];
            }
            m[i][3] += r[i] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Closest fraction with denominator at most `max_den`.
pub fn rational_approx(x: f64, max_den: i64) -> (i64, i64) {
    let mut best = (x.round() as i64, 1i64);
    let mut best_err = (x - best.0 as f64).abs();
    for den in 2..=max_den {
        let num = (x * den as f64).round() as i64;
        let err = (x - num as f64 / den as f64).abs();
        if err + 1e-12 < best_err {
            best = (num, den);
            best_err = err;
        }
    }
    let r = Ratio::new(best.0, best.1);
    (*r.numer(), *r.denom())
}
