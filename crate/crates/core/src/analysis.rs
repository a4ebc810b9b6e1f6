// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! False-positive bounds, adversarial correctness and privacy bounds,
//! storage accounting and the parameter planner.
//!
//! Probabilities of the form `(1 - x)^N` are evaluated through `ln_1p` and
//! `expm1`. The planner works with natural logarithms throughout so that
//! bounds far below `f64::MIN_POSITIVE` still order correctly.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amq::{AmqDescriptor, Family, PublicParams};
use crate::error::{Error, Result};

/// `log2` of the default PRF advantage.
pub const DEFAULT_LOG2_EPS_PRF: f64 = -256.0;

/// Output bits of the wrapping PRF assumed by the planner.
pub const DEFAULT_WRAPPED_RANGE_BITS: u32 = 256;

/// Highest load a Cuckoo table is assumed to reach before disabling.
pub const CUCKOO_MAX_LOAD: f64 = 0.95;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryBudget {
    pub n: u64,
    pub q_u: u64,
    pub q_t: u64,
    pub q_v: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpBound {
    /// `(1 - e^{-(n + 1/2) k / (m - 1)})^k`
    pub bound: f64,
    /// `(1 - e^{-n k / m})^k`
    pub estimate: f64,
}

/// `k ln(1 - e^{-k load})`.
fn ln_bloom(k: u32, load: f64) -> f64 {
    let a = load * f64::from(k);
    if a == 0.0 {
        return f64::NEG_INFINITY;
    }
    f64::from(k) * (-(-a).exp_m1()).ln()
}

/// `ln` of the Bloom upper bound with `n` insertions.
pub fn ln_bloom_bound(m: u64, k: u32, n: u64) -> f64 {
    ln_bloom(k, (n as f64 + 0.5) / (m - 1) as f64)
}

pub fn bloom_nai_fp_bound(m: u64, k: u32, n: u64) -> Result<FpBound> {
    if m < 2 {
        return Err(Error::InvalidParams("bloom bound needs m >= 2".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParams("bloom bound needs k >= 1".into()));
    }
    Ok(FpBound {
        bound: ln_bloom_bound(m, k, n).exp(),
        estimate: ln_bloom(k, n as f64 / m as f64).exp(),
    })
}

/// `ln` of the Cuckoo bound, optionally with the wrapping collision term.
pub fn ln_cuckoo_bound(s: u32, tag_bits: u32, wrapped_range_bits: Option<u32>) -> f64 {
    // 1 - (1 - 2^-t)^(2s+1) = -expm1((2s+1) ln(1 - 2^-t))
    let reps = 2.0 * f64::from(s) + 1.0;
    let base = if tag_bits > 1000 {
        reps.ln() - f64::from(tag_bits) * LN_2
    } else {
        (-(reps * (-(-f64::from(tag_bits)).exp2()).ln_1p()).exp_m1()).ln()
    };
    match wrapped_range_bits {
        None => base,
        Some(bits) => ln_add(base, ln_wrapped_collision_term(s, bits)),
    }
}

/// `ln((2s + 2)^2 / 2^(bits + 1))`: chance that `2s + 2` PRF outputs of
/// `bits` bits are not all distinct, upper bounded.
pub fn ln_wrapped_collision_term(s: u32, bits: u32) -> f64 {
    2.0 * (2.0 * f64::from(s) + 2.0).ln() - (f64::from(bits) + 1.0) * LN_2
}

pub fn cuckoo_nai_fp_bound(s: u32, tag_bits: u32, wrapped_range_bits: Option<u32>) -> Result<f64> {
    if s == 0 || tag_bits == 0 {
        return Err(Error::InvalidParams("cuckoo bound needs s >= 1 and lambda_T >= 1".into()));
    }
    Ok(ln_cuckoo_bound(s, tag_bits, wrapped_range_bits).exp().min(1.0))
}

/// `ln(e^a + e^b)`.
fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub nai_fp: f64,
    pub eps_prf: f64,
    /// `eps' = eps + 2 q_t nai_fp`, or `eps` in the immutable setting.
    pub adversarial_bound: f64,
    pub immutable: bool,
    pub budget: QueryBudget,
    pub pp: Option<PublicParams>,
    pub storage_bits: Option<u64>,
    /// The bound applies with one oracle call per `up` and per `qry`.
    pub unit_calls: Option<bool>,
}

impl BoundReport {
    pub fn with_descriptor(mut self, d: &AmqDescriptor) -> Self {
        self.pp = Some(d.pp);
        self.storage_bits = Some(storage_bits(d));
        self.unit_calls = Some(d.alpha == 1 && d.beta == 1);
        self
    }
}

/// `nai_fp` is the NAI false-positive probability after `n + q_u`
/// insertions. The immutable setting forbids `Up` calls.
pub fn adversarial_correctness_bound(
    eps_prf: f64,
    budget: QueryBudget,
    nai_fp: f64,
    immutable: bool,
) -> Result<BoundReport> {
    check_probability("eps_prf", eps_prf)?;
    check_probability("nai_fp", nai_fp)?;
    if immutable && budget.q_u != 0 {
        return Err(Error::Input("the immutable setting requires q_u = 0".into()));
    }
    let adversarial_bound = if immutable {
        eps_prf
    } else {
        (eps_prf + 2.0 * budget.q_t as f64 * nai_fp).min(1.0)
    };
    Ok(BoundReport {
        nai_fp,
        eps_prf,
        adversarial_bound,
        immutable,
        budget,
        pp: None,
        storage_bits: None,
        unit_calls: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyReport {
    pub eps_prf: f64,
    /// Upper bound on the chance that a query hits the hidden set.
    pub guess_bound: f64,
    pub rep_privacy_bound: f64,
    pub min_entropy: f64,
}

pub fn privacy_guessing_bound(q_u: u64, q_t: u64, min_entropy_bits: f64, eps_prf: f64) -> Result<PrivacyReport> {
    check_probability("eps_prf", eps_prf)?;
    if !(min_entropy_bits >= 0.0) {
        return Err(Error::Domain("min-entropy must be non-negative".into()));
    }
    let q = q_u as f64 + q_t as f64;
    let guess_bound = if q == 0.0 {
        0.0
    } else {
        (q.log2() - min_entropy_bits).exp2().min(1.0)
    };
    Ok(PrivacyReport {
        eps_prf,
        guess_bound,
        rep_privacy_bound: (eps_prf + guess_bound).min(1.0),
        min_entropy: min_entropy_bits,
    })
}

/// `m` for Bloom, `s * 2^lambda_I * lambda_T` for Cuckoo.
pub fn storage_bits(d: &AmqDescriptor) -> u64 {
    match d.pp {
        PublicParams::Bloom(pp) => pp.m,
        PublicParams::Cuckoo(pp) => (u64::from(pp.s) << pp.index_bits) * u64::from(pp.tag_bits),
    }
}

/// A candidate parameter set for the planner. Wider than the filter types:
/// the planner may ask for tags or tables no implementation allocates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Shape {
    Bloom { m: u64, k: u32 },
    Cuckoo { s: u32, index_bits: u32, tag_bits: u32 },
}

impl Shape {
    pub fn storage_bits(&self) -> u64 {
        match *self {
            Shape::Bloom { m, .. } => m,
            Shape::Cuckoo {
                s,
                index_bits,
                tag_bits,
            } => (u64::from(s) << index_bits) * u64::from(tag_bits),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Shape::Bloom { m, k } if m >= 2 && k >= 1 => Ok(()),
            Shape::Cuckoo {
                s,
                index_bits,
                tag_bits,
            } if s >= 1 && index_bits <= 48 && tag_bits >= 1 => Ok(()),
            _ => Err(Error::InvalidParams(format!("unusable planner shape {self:?}"))),
        }
    }

    /// Whether `inserted` elements fit the table.
    pub fn feasible(&self, inserted: u64) -> bool {
        match *self {
            Shape::Bloom { .. } => true,
            Shape::Cuckoo { s, index_bits, .. } => {
                inserted as f64 <= CUCKOO_MAX_LOAD * (f64::from(s) * (index_bits as f64).exp2())
            }
        }
    }

    /// `ln` of the NAI FP bound after `inserted` insertions.
    pub fn ln_nai_fp(&self, inserted: u64, wrapped_range_bits: Option<u32>) -> f64 {
        match *self {
            Shape::Bloom { m, k } => ln_bloom_bound(m, k, inserted),
            Shape::Cuckoo { s, tag_bits, .. } => ln_cuckoo_bound(s, tag_bits, wrapped_range_bits),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepConfig {
    pub family: Family,
    pub n: u64,
    /// Total `Up` plus `Qry` budget.
    pub q: u64,
    pub log2_eps_prf: f64,
    pub log2_target_fp: f64,
    pub wrapped_range_bits: Option<u32>,
}

impl SweepConfig {
    /// Bloom, or the PRF-wrapped Cuckoo filter with 256-bit PRF outputs.
    pub fn new(family: Family, n: u64, q: u64, log2_target_fp: f64) -> Self {
        SweepConfig {
            family,
            n,
            q,
            log2_eps_prf: DEFAULT_LOG2_EPS_PRF,
            log2_target_fp,
            wrapped_range_bits: (family == Family::PrfWrappedCuckoo).then_some(DEFAULT_WRAPPED_RANGE_BITS),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub shape: Shape,
    pub storage_bits: u64,
    /// `log2` of `max_t min(1, eps + (2t + 1) P(n + q - t))`: the real-world
    /// bound on finding a false positive with `q_t = t`, `q_u = q - t`.
    pub log2_eps_prime: f64,
    /// `log2 P(n + q)`.
    pub log2_honest_fp: f64,
    /// Maximizing number of `Qry` calls.
    pub worst_t: u64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub config: SweepConfig,
    /// Sorted by storage, ties broken by shape.
    pub points: Vec<CurvePoint>,
    pub min_storage_adversarial: Option<u64>,
    pub min_storage_honest: Option<u64>,
}

impl Sweep {
    /// Adversarial over honest storage at the target FP.
    pub fn storage_ratio(&self) -> Option<f64> {
        Some(self.min_storage_adversarial? as f64 / self.min_storage_honest? as f64)
    }
}

/// `ln(2t + 1) + ln P(n + q - t)`, maximized over `t` in `0..=q`.
///
/// The objective is concave in `t` for both families, so an integer ternary
/// search followed by a short local scan finds the maximum.
pub fn worst_split(shape: &Shape, n: u64, q: u64, wrapped_range_bits: Option<u32>) -> (u64, f64) {
    let h = |t: u64| (2.0 * t as f64 + 1.0).ln() + shape.ln_nai_fp(n + q - t, wrapped_range_bits);
    if let Shape::Cuckoo { .. } = shape {
        return (q, h(q));
    }
    let (mut lo, mut hi) = (0u64, q);
    while hi - lo > 2 {
        let a = lo + (hi - lo) / 3;
        let b = hi - (hi - lo) / 3;
        if h(a) < h(b) {
            lo = a + 1;
        } else {
            hi = b;
        }
    }
    let from = lo.saturating_sub(3);
    let to = (hi + 3).min(q);
    (from..=to)
        .map(|t| (t, h(t)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

fn evaluate(shape: Shape, c: &SweepConfig) -> CurvePoint {
    let (worst_t, ln_g) = worst_split(&shape, c.n, c.q, c.wrapped_range_bits);
    let ln_eps = c.log2_eps_prf * LN_2;
    let ln_adv = ln_add(ln_eps, ln_g).min(0.0);
    let ln_honest = shape.ln_nai_fp(c.n + c.q, c.wrapped_range_bits).min(0.0);
    CurvePoint {
        shape,
        storage_bits: shape.storage_bits(),
        log2_eps_prime: ln_adv / LN_2,
        log2_honest_fp: ln_honest / LN_2,
        worst_t,
        feasible: shape.feasible(c.n + c.q),
    }
}

pub fn parameter_sweep(config: &SweepConfig, grid: &[Shape]) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(Error::Input("empty parameter grid".into()));
    }
    if config.family == Family::Cuckoo {
        return Err(Error::InvalidParams(
            "the correctness bound needs a decomposable filter; plan the PRF-wrapped cuckoo filter".into(),
        ));
    }
    if !(config.log2_eps_prf <= 0.0) || !(config.log2_target_fp <= 0.0) {
        return Err(Error::Domain("log2 probabilities must be <= 0".into()));
    }
    for shape in grid {
        shape.validate()?;
        let matches = matches!(
            (config.family, shape),
            (Family::Bloom, Shape::Bloom { .. }) | (Family::PrfWrappedCuckoo, Shape::Cuckoo { .. })
        );
        if !matches {
            return Err(Error::InvalidParams(format!("{shape:?} does not belong to {:?}", config.family)));
        }
    }
    if config.n.checked_add(config.q).is_none() {
        return Err(Error::Input("n + q overflows".into()));
    }
    let mut points: Vec<CurvePoint> = grid.par_iter().map(|&s| evaluate(s, config)).collect();
    points.sort_by(|a, b| a.storage_bits.cmp(&b.storage_bits).then(a.shape.cmp(&b.shape)));
    let min_meeting = |pick: fn(&CurvePoint) -> f64| {
        points
            .iter()
            .filter(|p| p.feasible && pick(p) <= config.log2_target_fp)
            .map(|p| p.storage_bits)
            .min()
    };
    Ok(Sweep {
        config: *config,
        min_storage_adversarial: min_meeting(|p| p.log2_eps_prime),
        min_storage_honest: min_meeting(|p| p.log2_honest_fp),
        points,
    })
}

/// Bloom shapes with `m = round(2^(j / steps_per_octave))` between
/// `2^log2_m_lo` and `2^log2_m_hi`, for every `k` in `1..=k_max`.
pub fn bloom_grid(log2_m_lo: u32, log2_m_hi: u32, steps_per_octave: u32, k_max: u32) -> Vec<Shape> {
    let mut ms: Vec<u64> = (log2_m_lo * steps_per_octave..=log2_m_hi * steps_per_octave)
        .map(|j| (f64::from(j) / f64::from(steps_per_octave)).exp2().round() as u64)
        .filter(|&m| m >= 2)
        .collect();
    ms.dedup();
    ms.iter()
        .flat_map(|&m| (1..=k_max).map(move |k| Shape::Bloom { m, k }))
        .collect()
}

/// Default Bloom grid around `inserted` elements.
pub fn default_bloom_grid(inserted: u64) -> Vec<Shape> {
    let centre = (inserted.max(1) as f64).log2().ceil() as u32;
    bloom_grid(centre.saturating_sub(2).max(1), centre + 9, 16, 32)
}

/// Cuckoo shapes for `s` in `ss`, `lambda_T` in `tag_bits`, and `lambda_I`
/// from one below the smallest feasible value to one above it.
pub fn cuckoo_grid(inserted: u64, ss: &[u32], tag_bits: std::ops::RangeInclusive<u32>) -> Vec<Shape> {
    let mut out = Vec::new();
    for &s in ss {
        let need = (0..=48)
            .find(|&i| Shape::Cuckoo { s, index_bits: i, tag_bits: 1 }.feasible(inserted))
            .unwrap_or(48);
        for index_bits in need.saturating_sub(1)..=(need + 1).min(48) {
            for t in tag_bits.clone() {
                out.push(Shape::Cuckoo {
                    s,
                    index_bits,
                    tag_bits: t,
                });
            }
        }
    }
    out
}

/// Bucket sizes 4 and 8 (the ones for which a 95% load is supported) and
/// tags of 6 to 96 bits.
pub fn default_cuckoo_grid(inserted: u64) -> Vec<Shape> {
    cuckoo_grid(inserted, &[4, 8], 6..=96)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::BloomParams;
    use crate::cuckoo::CuckooParams;
    use proptest::prelude::*;

    #[test]
    fn bloom_examples() {
        let b = bloom_nai_fp_bound(1024, 7, 0).unwrap();
        assert_eq!(b.estimate, 0.0);
        assert!(b.bound > 0.0);
        let b = bloom_nai_fp_bound(1024, 7, 100).unwrap();
        assert!((b.bound - 7.5e-3).abs() < 2e-4, "{}", b.bound);
        assert!(bloom_nai_fp_bound(1, 1, 0).is_err());
        assert!(bloom_nai_fp_bound(8, 0, 0).is_err());
    }

    #[test]
    fn cuckoo_examples() {
        let p = cuckoo_nai_fp_bound(4, 8, None).unwrap();
        assert!((p - 3.46e-2).abs() < 1e-4, "{p}");
        let tiny = cuckoo_nai_fp_bound(1, 64, None).unwrap();
        assert!((tiny / (3.0 * (-64f64).exp2()) - 1.0).abs() < 1e-12);
        let term = ln_wrapped_collision_term(4, 256).exp();
        assert!((term / (50.0 * (-256f64).exp2()) - 1.0).abs() < 1e-12);
        let wrapped = ln_cuckoo_bound(4, 8, Some(20)).exp();
        let plain = ln_cuckoo_bound(4, 8, None).exp();
        let extra = 100.0 * (-21f64).exp2();
        assert!(((wrapped - plain) / extra - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adversarial_examples() {
        let b = QueryBudget { n: 0, q_u: 0, q_t: 1 << 10, q_v: 0 };
        let r = adversarial_correctness_bound((-256f64).exp2(), b, (-20f64).exp2(), false).unwrap();
        assert!((r.adversarial_bound.log2() + 9.0).abs() < 1e-9);
        let r = adversarial_correctness_bound(1e-9, QueryBudget { q_t: 5, ..Default::default() }, 0.3, true)
            .unwrap();
        assert_eq!(r.adversarial_bound, 1e-9);
        let r = adversarial_correctness_bound(1e-9, QueryBudget::default(), 0.3, false).unwrap();
        assert_eq!(r.adversarial_bound, 1e-9);
        assert!(adversarial_correctness_bound(0.0, QueryBudget { q_u: 1, ..Default::default() }, 0.1, true).is_err());
        let r = adversarial_correctness_bound(0.5, QueryBudget { q_t: 9, ..Default::default() }, 0.5, false).unwrap();
        assert_eq!(r.adversarial_bound, 1.0);
        let d = AmqDescriptor::bloom(BloomParams::new(1 << 20, 4).unwrap());
        let r = r.with_descriptor(&d);
        assert_eq!((r.storage_bits, r.unit_calls), (Some(1 << 20), Some(true)));
    }

    #[test]
    fn privacy_examples() {
        let r = privacy_guessing_bound(1 << 9, 1 << 9, 32.0, 0.0).unwrap();
        assert_eq!(r.guess_bound, (-22f64).exp2());
        assert_eq!(privacy_guessing_bound(1, 0, 0.0, 0.0).unwrap().guess_bound, 1.0);
        let r = privacy_guessing_bound(0, 0, 3.0, 1e-6).unwrap();
        assert_eq!(r.rep_privacy_bound, 1e-6);
        assert!(privacy_guessing_bound(1, 1, -1.0, 0.0).is_err());
    }

    #[test]
    fn storage_examples() {
        assert_eq!(storage_bits(&AmqDescriptor::bloom(BloomParams::new(1 << 20, 3).unwrap())), 1 << 20);
        let pp = CuckooParams::new(4, 15, 8, 500).unwrap();
        assert_eq!(storage_bits(&AmqDescriptor::prf_wrapped_cuckoo(pp)), 1 << 20);
        assert_eq!(Shape::Cuckoo { s: 1, index_bits: 0, tag_bits: 9 }.storage_bits(), 9);
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let c = SweepConfig::new(Family::Bloom, 1, 1, -10.0);
        assert!(parameter_sweep(&c, &[]).is_err());
        assert!(parameter_sweep(&c, &[Shape::Cuckoo { s: 4, index_bits: 4, tag_bits: 8 }]).is_err());
        let c = SweepConfig::new(Family::Cuckoo, 1, 1, -10.0);
        assert!(parameter_sweep(&c, &[Shape::Cuckoo { s: 4, index_bits: 4, tag_bits: 8 }]).is_err());
    }

    #[test]
    fn sweep_with_no_queries_is_shifted_honest() {
        let c = SweepConfig {
            log2_eps_prf: -20.0,
            ..SweepConfig::new(Family::Bloom, 1000, 0, -10.0)
        };
        let sweep = parameter_sweep(&c, &bloom_grid(10, 14, 2, 6)).unwrap();
        for p in &sweep.points {
            let shifted = ((p.log2_honest_fp).exp2() + (-20f64).exp2()).min(1.0).log2();
            assert!((p.log2_eps_prime - shifted).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn sweep_is_sorted_and_dominates_honest() {
        let c = SweepConfig::new(Family::PrfWrappedCuckoo, 1 << 7, 1 << 12, -10.0);
        let sweep = parameter_sweep(&c, &default_cuckoo_grid((1 << 7) + (1 << 12))).unwrap();
        assert!(sweep.points.windows(2).all(|w| w[0].storage_bits <= w[1].storage_bits));
        assert!(sweep.points.iter().all(|p| p.log2_eps_prime >= p.log2_honest_fp));
        assert!(sweep.points.iter().any(|p| !p.feasible));
        assert!(sweep.storage_ratio().unwrap() > 1.0);
    }

    proptest! {
        #[test]
        fn bloom_bound_dominates_estimate(m in 2u64..1 << 24, k in 1u32..=64, n in 0u64..1 << 24) {
            let b = bloom_nai_fp_bound(m, k, n).unwrap();
            prop_assert!(b.bound >= b.estimate);
            prop_assert!((0.0..=1.0).contains(&b.bound));
        }

        #[test]
        fn bloom_bound_monotone_in_n(m in 2u64..1 << 24, k in 1u32..=64, n in 0u64..1 << 24) {
            let a = bloom_nai_fp_bound(m, k, n).unwrap().bound;
            let b = bloom_nai_fp_bound(m, k, n + 1).unwrap().bound;
            prop_assert!(b >= a);
        }

        #[test]
        fn eps_prime_monotone(q_t in 0u64..1 << 20, fp in 0.0f64..1.0, extra in 0u64..100) {
            let at = |q_t| adversarial_correctness_bound(1e-30, QueryBudget { q_t, ..Default::default() }, fp, false)
                .unwrap().adversarial_bound;
            prop_assert!(at(q_t + extra) >= at(q_t));
        }

        #[test]
        fn worst_split_beats_neighbours(m in 64u64..1 << 20, k in 1u32..=16, n in 0u64..1000, q in 0u64..5000) {
            let shape = Shape::Bloom { m, k };
            let (t, v) = worst_split(&shape, n, q, None);
            let h = |t: u64| (2.0 * t as f64 + 1.0).ln() + shape.ln_nai_fp(n + q - t, None);
            for u in [0, q / 4, q / 2, q, t.saturating_sub(1), (t + 1).min(q)] {
                prop_assert!(h(u) <= v + 1e-9);
            }
        }
    }
}
