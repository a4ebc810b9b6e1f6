// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! Concrete adversaries: Bloom pollution, target-set coverage and the
//! Cuckoo permutation-invariance distinguisher.

use std::collections::HashSet;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::amq::{AmqDescriptor, FilterInstance};
use crate::analysis::{bloom_nai_fp_bound, QueryBudget};
use crate::bloom::{BloomParams, BloomState, IndexFunction, PublicIndexHash};
use crate::cuckoo::{encode_tag, CuckooState, RngCoins};
use crate::error::{Error, Result};
use crate::games::{derive_rng, Adversary, GameOracles};
use crate::prf::{Element, Key};

/// Length of attacker candidates and random probes.
pub const CANDIDATE_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BloomTarget {
    /// Index function is the unkeyed [`PublicIndexHash`].
    PublicHash,
    /// Index function is keyed with a fresh key.
    Keyed,
}

impl BloomTarget {
    fn instance(self, pp: BloomParams, rng: &mut ChaCha20Rng) -> FilterInstance {
        match self {
            BloomTarget::PublicHash => FilterInstance::public_bloom(pp),
            BloomTarget::Keyed => FilterInstance::keyed(AmqDescriptor::bloom(pp), &Key::random(rng)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PollutionConfig {
    pub pp: BloomParams,
    /// Honest insertions made before the attacker starts.
    pub n: u64,
    pub q_u: u64,
    /// Fresh candidates scored per greedy step.
    pub candidates: usize,
    /// Random probes used to measure the final FP rate.
    pub probes: u64,
    /// `ε` of the keyed primitive.
    pub eps_prf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PollutionReport {
    pub target: BloomTarget,
    pub achieved_fp: f64,
    /// Standard error of `achieved_fp`.
    pub sigma: f64,
    pub fill_ratio: f64,
    /// Honest bound with `n + q_u` insertions.
    pub honest_bound: f64,
    /// `ε + 2 q_t P̄(n + q_u)` with `q_t = 1` per probe.
    pub envelope: f64,
    pub probes: u64,
}

impl PollutionReport {
    pub fn gap(&self) -> f64 {
        self.achieved_fp / self.honest_bound
    }
}

/// Index vector the attacker believes `x` maps to.
fn model_indices(x: &[u8], pp: BloomParams) -> Vec<u64> {
    PublicIndexHash.indices(x, pp.m, pp.k).indices().to_vec()
}

fn bloom_state(filter: &FilterInstance) -> &BloomState {
    filter.state().as_bloom().expect("bloom target")
}

/// Candidate with the highest score, scored on the attacker's model.
fn best_candidate<R, S>(pp: BloomParams, rng: &mut R, count: usize, skip: &HashSet<Element>, mut score: S) -> Element
where
    R: Rng + ?Sized,
    S: FnMut(&[u64]) -> usize,
{
    let mut best: Option<(usize, Element)> = None;
    for _ in 0..count.max(1) {
        let x = Element::random(rng, CANDIDATE_LEN);
        if skip.contains(&x) {
            continue;
        }
        let s = score(&model_indices(&x, pp));
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, x));
        }
    }
    best.map(|(_, x)| x).unwrap_or_else(|| Element::random(rng, CANDIDATE_LEN))
}

fn honest_fill(filter: &mut FilterInstance, n: u64, rng: &mut ChaCha20Rng) -> HashSet<Element> {
    let mut inserted = HashSet::new();
    while (inserted.len() as u64) < n {
        let x = Element::random(rng, CANDIDATE_LEN);
        if inserted.insert(x.clone()) {
            filter.up(&x, &mut RngCoins(&mut *rng));
        }
    }
    inserted
}

/// Greedy pollution: each of the `q_u` insertions is the candidate that,
/// under the public hash, sets the most bits not yet set in the revealed
/// state. The FP rate is then measured on fresh random probes.
pub fn attack_pollution_bloom(config: &PollutionConfig, target: BloomTarget, seed: u64) -> Result<PollutionReport> {
    if config.probes == 0 {
        return Err(Error::Input("pollution attack needs at least one probe".into()));
    }
    let pp = config.pp;
    let mut rng = derive_rng(seed, "pollution", 0);
    let mut filter = target.instance(pp, &mut rng);
    let mut inserted = honest_fill(&mut filter, config.n, &mut rng);
    for _ in 0..config.q_u {
        let state = bloom_state(&filter).clone();
        let x = best_candidate(pp, &mut rng, config.candidates, &inserted, |v| {
            let mut fresh: Vec<u64> = v.iter().copied().filter(|&i| !state.bit(i - 1)).collect();
            fresh.sort_unstable();
            fresh.dedup();
            fresh.len()
        });
        filter.up(&x, &mut RngCoins(&mut rng));
        inserted.insert(x);
    }
    let mut hits = 0u64;
    let mut probes = 0u64;
    while probes < config.probes {
        let x = Element::random(&mut rng, CANDIDATE_LEN);
        if inserted.contains(&x) {
            continue;
        }
        probes += 1;
        hits += u64::from(filter.qry(&x));
    }
    let p = hits as f64 / probes as f64;
    let honest = bloom_nai_fp_bound(pp.m, pp.k as u32, config.n + config.q_u)?.bound;
    Ok(PollutionReport {
        target,
        achieved_fp: p,
        sigma: (p * (1.0 - p) / probes as f64).sqrt(),
        fill_ratio: bloom_state(&filter).fill_ratio(),
        honest_bound: honest,
        envelope: (config.eps_prf + 2.0 * honest).min(1.0),
        probes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TscConfig {
    pub pp: BloomParams,
    pub n: u64,
    pub q_u: u64,
    pub candidates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TscOutcome {
    pub success: bool,
    pub updates_used: u64,
}

/// Target-set coverage: insert elements (never from `targets`) chosen to
/// set the bits the public hash assigns to `targets`, then query every
/// target. Success iff all of them answer true.
pub fn attack_target_set_coverage(targets: &[Element], config: &TscConfig, target: BloomTarget, seed: u64) -> Result<TscOutcome> {
    let pp = config.pp;
    let mut rng = derive_rng(seed, "tsc", 0);
    let mut filter = target.instance(pp, &mut rng);
    let mut skip: HashSet<Element> = targets.iter().cloned().collect();
    let honest = honest_fill(&mut filter, config.n, &mut rng);
    if honest.iter().any(|x| skip.contains(x)) {
        return Err(Error::Input("target set overlaps inserted elements".into()));
    }
    skip.extend(honest);
    let wanted: HashSet<u64> = targets.iter().flat_map(|x| model_indices(x, pp)).collect();
    let mut used = 0;
    while used < config.q_u {
        let state = bloom_state(&filter).clone();
        let open: HashSet<u64> = wanted.iter().copied().filter(|&i| !state.bit(i - 1)).collect();
        if open.is_empty() {
            break;
        }
        let x = best_candidate(pp, &mut rng, config.candidates, &skip, |v| {
            let mut hit: Vec<u64> = v.iter().copied().filter(|i| open.contains(i)).collect();
            hit.sort_unstable();
            hit.dedup();
            hit.len()
        });
        filter.up(&x, &mut RngCoins(&mut rng));
        skip.insert(x);
        used += 1;
    }
    let success = targets.iter().all(|x| filter.qry(x));
    Ok(TscOutcome {
        success,
        updates_used: used,
    })
}

/// Upper bound on the keyed success probability:
/// `ε + 2|L| P̄(n + q_u) + P̄(n + q_u)`, capped at 1.
pub fn tsc_envelope(eps_prf: f64, targets: usize, honest_fp: f64) -> f64 {
    (eps_prf + 2.0 * targets as f64 * honest_fp + honest_fp).min(1.0)
}

/// The PI distinguisher against the insertion-only Cuckoo filter.
///
/// Inserts fresh random elements, diffing consecutive revealed states until
/// an insertion evicts a stored tag `e` from bucket `a` straight into a free
/// slot of bucket `b`, which gives `H_I(e) = a ^ b`. It then inserts the
/// element whose bytes are the tag encoding of some learned `e` with free
/// room in bucket `H_I(e)`. Without a permutation the only change is an
/// append there, and the guess is 0; otherwise the guess is 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CuckooPiAttack {
    pub budget: QueryBudget,
}

impl CuckooPiAttack {
    pub fn ample() -> Self {
        CuckooPiAttack {
            budget: QueryBudget {
                n: 0,
                q_u: 2000,
                q_t: 0,
                q_v: 2000,
            },
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
enum BucketChange {
    Append(u32),
    /// A slot that held the given tag was overwritten.
    Replace(u32),
    Other,
}

fn bucket_changes(prev: &CuckooState, cur: &CuckooState) -> Vec<(u32, BucketChange)> {
    let mut out = Vec::new();
    for b in 0..prev.params().buckets() as u32 {
        let (p, c) = (prev.bucket(b), cur.bucket(b));
        if p == c {
            continue;
        }
        let change = if c.len() == p.len() + 1 && c[..p.len()] == *p {
            BucketChange::Append(c[p.len()])
        } else if c.len() == p.len() {
            let diff: Vec<usize> = (0..p.len()).filter(|&i| p[i] != c[i]).collect();
            if diff.len() == 1 {
                BucketChange::Replace(p[diff[0]])
            } else {
                BucketChange::Other
            }
        } else {
            BucketChange::Other
        };
        out.push((b, change));
    }
    out
}

/// `(tag, H_I(tag))` if the step was a single eviction into a free slot.
fn learn(prev: &CuckooState, cur: &CuckooState) -> Option<(u32, u32)> {
    if cur.stash().is_some() {
        return None;
    }
    match bucket_changes(prev, cur).as_slice() {
        [(a, x), (b, y)] => match (x, y) {
            (BucketChange::Replace(e), BucketChange::Append(f)) | (BucketChange::Append(f), BucketChange::Replace(e))
                if e == f =>
            {
                Some((*e, a ^ b))
            }
            _ => None,
        },
        _ => None,
    }
}

fn reveal_cuckoo(o: &mut dyn GameOracles) -> Option<CuckooState> {
    o.reveal().and_then(|s| s.as_cuckoo().cloned())
}

impl Adversary for CuckooPiAttack {
    fn budget(&self) -> QueryBudget {
        self.budget
    }

    fn run(&self, o: &mut dyn GameOracles, rng: &mut ChaCha20Rng) -> Vec<u8> {
        let guess = pi_guess(o, rng, self.budget).unwrap_or_else(|| rng.gen());
        vec![u8::from(guess)]
    }
}

fn pi_guess(o: &mut dyn GameOracles, rng: &mut ChaCha20Rng, budget: QueryBudget) -> Option<bool> {
    o.rep(&[]);
    let mut prev = reveal_cuckoo(o)?;
    let pp = prev.params();
    let mut learned: Vec<(u32, u32)> = Vec::new();
    // one Up and one Reveal are kept back for the test
    let rounds = budget.q_u.min(budget.q_v.saturating_sub(1)).saturating_sub(1);
    for _ in 0..rounds {
        if let Some(&(tag, d)) = learned.iter().find(|&&(_, d)| prev.load(d) < pp.s) {
            let x = Element::new(encode_tag(tag, pp.tag_bits)).ok()?;
            o.up(&x);
            let cur = reveal_cuckoo(o)?;
            let only_append = matches!(
                bucket_changes(&prev, &cur).as_slice(),
                [(b, BucketChange::Append(_))] if *b == d
            );
            return Some(!only_append);
        }
        if prev.is_disabled() {
            return None;
        }
        o.up(&Element::random(rng, CANDIDATE_LEN));
        let cur = reveal_cuckoo(o)?;
        if let Some(pair) = learn(&prev, &cur) {
            learned.push(pair);
        }
        prev = cur;
    }
    None
}

/// Random distinct elements, handy as target sets.
pub fn random_elements(count: usize, rng: &mut impl RngCore) -> Vec<Element> {
    let mut seen = HashSet::new();
    while seen.len() < count {
        seen.insert(Element::random(rng, CANDIDATE_LEN));
    }
    let mut v: Vec<_> = seen.into_iter().collect();
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuckoo::CuckooParams;
    use crate::games::{estimate_advantage, run_pi_game};

    fn pollution(q_u: u64) -> PollutionConfig {
        PollutionConfig {
            pp: BloomParams::new(1 << 12, 4).unwrap(),
            n: 0,
            q_u,
            candidates: 256,
            probes: 20_000,
            eps_prf: 0.0,
        }
    }

    #[test]
    fn greedy_sets_more_bits_on_the_public_hash() {
        let public = attack_pollution_bloom(&pollution(256), BloomTarget::PublicHash, 1).unwrap();
        let keyed = attack_pollution_bloom(&pollution(256), BloomTarget::Keyed, 1).unwrap();
        assert!(public.fill_ratio > 0.245, "{public:?}");
        assert!(keyed.fill_ratio < 0.235, "{keyed:?}");
        assert!(public.achieved_fp > keyed.achieved_fp);
        assert!(keyed.achieved_fp <= keyed.envelope + 3.0 * keyed.sigma);
    }

    #[test]
    fn zero_budget_pollution_is_honest() {
        let mut c = pollution(0);
        c.n = 300;
        for t in [BloomTarget::PublicHash, BloomTarget::Keyed] {
            let r = attack_pollution_bloom(&c, t, 3).unwrap();
            let est = bloom_nai_fp_bound(1 << 12, 4, 300).unwrap().estimate;
            assert!((r.achieved_fp - est).abs() < 5.0 * r.sigma.max(1e-3), "{r:?} vs {est}");
        }
        c.n = 0;
        let r = attack_pollution_bloom(&c, BloomTarget::Keyed, 3).unwrap();
        assert_eq!(r.achieved_fp, 0.0);
    }

    #[test]
    fn tsc_empty_target_set_succeeds() {
        let c = TscConfig {
            pp: BloomParams::new(1 << 10, 4).unwrap(),
            n: 0,
            q_u: 0,
            candidates: 1,
        };
        let r = attack_target_set_coverage(&[], &c, BloomTarget::Keyed, 0).unwrap();
        assert!(r.success);
        assert_eq!(r.updates_used, 0);
    }

    #[test]
    fn tsc_public_hash_beats_keyed() {
        let c = TscConfig {
            pp: BloomParams::new(1 << 12, 4).unwrap(),
            n: 0,
            q_u: 64,
            candidates: 1024,
        };
        let run = |t| {
            (0..20)
                .filter(|&s| {
                    let l = random_elements(4, &mut derive_rng(s, "targets", 0));
                    attack_target_set_coverage(&l, &c, t, s).unwrap().success
                })
                .count()
        };
        assert_eq!(run(BloomTarget::PublicHash), 20);
        assert_eq!(run(BloomTarget::Keyed), 0);
    }

    #[test]
    fn learns_from_a_single_eviction() {
        let pp = CuckooParams::new(1, 2, 8, 10).unwrap();
        let mut prev = CuckooState::setup(pp);
        let mut cur = prev.clone();
        // bucket 1 holds tag 7; an insertion evicts it into bucket 3
        let h = crate::cuckoo::TableHashes::new()
            .with_tag(b"a", 7)
            .with_index(b"a", 1)
            .with_tag(b"b", 9)
            .with_index(b"b", 1)
            .with_index(&encode_tag(9, 8), 0)
            .with_index(&encode_tag(7, 8), 2);
        let mut h = h;
        let mut coins = crate::cuckoo::ScriptedCoins::new([]);
        prev.insert(b"a", &mut h, &mut coins);
        cur.insert(b"a", &mut h, &mut coins);
        let mut coins = crate::cuckoo::ScriptedCoins::new([
            crate::cuckoo::CoinDraw::Bucket(false),
            crate::cuckoo::CoinDraw::Slot(0),
        ]);
        cur.insert(b"b", &mut h, &mut coins);
        assert_eq!(cur.bucket(1), &[9]);
        assert_eq!(cur.bucket(3), &[7]);
        assert_eq!(learn(&prev, &cur), Some((7, 2)));
    }

    #[test]
    fn pi_attack_separates_original_from_wrapped() {
        let pp = CuckooParams::new(1, 8, 8, 500).unwrap();
        let attack = CuckooPiAttack::ample();
        let adv = |d: AmqDescriptor| {
            estimate_advantage(|c, s| run_pi_game(&attack, &d, c, s).unwrap(), 100, 9)
                .unwrap()
                .advantage
        };
        assert!(adv(AmqDescriptor::cuckoo(pp)) >= 0.9);
        assert!(adv(AmqDescriptor::prf_wrapped_cuckoo(pp)) <= 0.15);
    }

    #[test]
    fn pi_attack_without_budget_guesses() {
        let pp = CuckooParams::new(1, 8, 8, 500).unwrap();
        let attack = CuckooPiAttack {
            budget: QueryBudget::default(),
        };
        let e = estimate_advantage(
            |c, s| run_pi_game(&attack, &AmqDescriptor::cuckoo(pp), c, s).unwrap(),
            1000,
            4,
        )
        .unwrap();
        assert!(e.advantage <= 3.0 * e.sigma().max(0.016), "{e:?}");
    }
}
