// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! The `setup` / `up` / `qry` interface shared by all filters, the NAI state
//! generator, operation traces and the consistency checker.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bloom::{BloomParams, BloomState, IndexFunction, PublicIndexHash, FAMILY_BLOOM};
use crate::cuckoo::{CoinDraw, CoinSource, CuckooParams, CuckooState, RecordingCoins, FAMILY_CUCKOO};
use crate::error::{Error, Result};
use crate::prf::{Element, FunctionOracle, IndexVector, Key};

/// Output length of the wrapping PRF, in bytes. The wrapped range has
/// `2^256` points.
pub const WRAP_OUTPUT_LEN: usize = 32;

/// Length of the random elements drawn by [`nai_gen`] and FP probes.
pub const SAMPLE_ELEMENT_LEN: usize = 16;

const INNER_KEY_CONTEXT: &str = "amq-core 2026-10 wrapped cuckoo inner hashes";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bloom,
    Cuckoo,
    PrfWrappedCuckoo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PublicParams {
    Bloom(BloomParams),
    Cuckoo(CuckooParams),
}

/// A filter family with its public parameters and the number of oracle
/// calls one `up` (`alpha`) or `qry` (`beta`) may make.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AmqDescriptor {
    pub family: Family,
    pub pp: PublicParams,
    pub alpha: u64,
    pub beta: u64,
}

impl AmqDescriptor {
    pub fn bloom(pp: BloomParams) -> Self {
        AmqDescriptor {
            family: Family::Bloom,
            pp: PublicParams::Bloom(pp),
            alpha: 1,
            beta: 1,
        }
    }

    /// Tag, index and alternate index, plus one index call per eviction.
    pub fn cuckoo(pp: CuckooParams) -> Self {
        AmqDescriptor {
            family: Family::Cuckoo,
            pp: PublicParams::Cuckoo(pp),
            alpha: 3 + u64::from(pp.max_evictions),
            beta: 3,
        }
    }

    pub fn prf_wrapped_cuckoo(pp: CuckooParams) -> Self {
        AmqDescriptor {
            family: Family::PrfWrappedCuckoo,
            pp: PublicParams::Cuckoo(pp),
            alpha: 1,
            beta: 1,
        }
    }

    /// Whether `up` and `qry` factor through one application of `F`.
    pub fn is_decomposable(&self) -> bool {
        self.family != Family::Cuckoo
    }

    pub fn setup(&self) -> FilterState {
        match self.pp {
            PublicParams::Bloom(pp) => FilterState::Bloom(BloomState::setup(pp)),
            PublicParams::Cuckoo(pp) => FilterState::Cuckoo(CuckooState::setup(pp)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FilterState {
    Bloom(BloomState),
    Cuckoo(CuckooState),
}

impl FilterState {
    /// Canonical versioned little-endian encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            FilterState::Bloom(s) => s.to_bytes(),
            FilterState::Cuckoo(s) => s.to_bytes(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.get(1) {
            Some(&FAMILY_BLOOM) => BloomState::from_bytes(bytes).map(FilterState::Bloom),
            Some(&FAMILY_CUCKOO) => CuckooState::from_bytes(bytes).map(FilterState::Cuckoo),
            _ => Err(Error::Decode("unknown state family".into())),
        }
    }

    /// Hex BLAKE3 digest of the canonical encoding, truncated to 128 bits.
    pub fn digest(&self) -> String {
        let h = blake3::hash(&self.to_bytes());
        h.to_hex()[..32].to_string()
    }

    pub fn as_bloom(&self) -> Option<&BloomState> {
        match self {
            FilterState::Bloom(s) => Some(s),
            FilterState::Cuckoo(_) => None,
        }
    }

    pub fn as_cuckoo(&self) -> Option<&CuckooState> {
        match self {
            FilterState::Cuckoo(s) => Some(s),
            FilterState::Bloom(_) => None,
        }
    }

    /// Cuckoo filters can be disabled; Bloom filters never are.
    pub fn is_disabled(&self) -> bool {
        matches!(self, FilterState::Cuckoo(s) if s.is_disabled())
    }
}

/// A point of the range of `F`: `[m]^k` for Bloom, 32-byte strings for the
/// wrapped Cuckoo filter.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RangePoint {
    Indices(IndexVector),
    Bytes(Vec<u8>),
}

/// Index function backing a Bloom instance.
#[derive(Clone, Debug)]
pub enum BloomIndexer {
    Oracle(FunctionOracle),
    Public(PublicIndexHash),
}

impl IndexFunction for BloomIndexer {
    fn indices(&mut self, x: &[u8], m: u64, k: usize) -> IndexVector {
        match self {
            BloomIndexer::Oracle(f) => f.indices(x, m, k),
            BloomIndexer::Public(h) => h.indices(x, m, k),
        }
    }
}

#[derive(Clone, Debug)]
enum Backend {
    Bloom(BloomIndexer),
    Cuckoo(FunctionOracle),
    Wrapped {
        wrap: FunctionOracle,
        inner: FunctionOracle,
    },
}

/// A filter state together with the oracles its algorithms call.
#[derive(Clone, Debug)]
pub struct FilterInstance {
    descriptor: AmqDescriptor,
    state: FilterState,
    backend: Backend,
}

impl FilterInstance {
    /// Keyed instance. The wrapped Cuckoo filter derives an independent key
    /// for its inner hashes.
    pub fn keyed(descriptor: AmqDescriptor, key: &Key) -> Self {
        let backend = match descriptor.family {
            Family::Bloom => Backend::Bloom(BloomIndexer::Oracle(FunctionOracle::keyed(key, 32))),
            Family::Cuckoo => Backend::Cuckoo(FunctionOracle::keyed(key, 32)),
            Family::PrfWrappedCuckoo => {
                let material = match key {
                    Key::Bits128(k) => k.to_vec(),
                    Key::Bits256(k) => k.to_vec(),
                };
                let inner = Key::Bits256(blake3::derive_key(INNER_KEY_CONTEXT, &material));
                Backend::Wrapped {
                    wrap: FunctionOracle::keyed(key, WRAP_OUTPUT_LEN),
                    inner: FunctionOracle::keyed(&inner, 32),
                }
            }
        };
        Self::assemble(descriptor, backend)
    }

    /// Instance over lazily sampled random functions.
    pub fn random(descriptor: AmqDescriptor, seed: u64) -> Self {
        let backend = match descriptor.family {
            Family::Bloom => Backend::Bloom(BloomIndexer::Oracle(FunctionOracle::random(seed, 32))),
            Family::Cuckoo => Backend::Cuckoo(FunctionOracle::random(seed, 32)),
            Family::PrfWrappedCuckoo => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                Backend::Wrapped {
                    wrap: FunctionOracle::random(rng.next_u64(), WRAP_OUTPUT_LEN),
                    inner: FunctionOracle::random(rng.next_u64(), 32),
                }
            }
        };
        Self::assemble(descriptor, backend)
    }

    /// Bloom filter over the unkeyed [`PublicIndexHash`].
    pub fn public_bloom(pp: BloomParams) -> Self {
        Self::assemble(
            AmqDescriptor::bloom(pp),
            Backend::Bloom(BloomIndexer::Public(PublicIndexHash)),
        )
    }

    pub fn bloom_with(pp: BloomParams, f: FunctionOracle) -> Self {
        Self::assemble(AmqDescriptor::bloom(pp), Backend::Bloom(BloomIndexer::Oracle(f)))
    }

    pub fn cuckoo_with(pp: CuckooParams, h: FunctionOracle) -> Self {
        Self::assemble(AmqDescriptor::cuckoo(pp), Backend::Cuckoo(h))
    }

    fn assemble(descriptor: AmqDescriptor, backend: Backend) -> Self {
        FilterInstance {
            state: descriptor.setup(),
            descriptor,
            backend,
        }
    }

    pub fn descriptor(&self) -> &AmqDescriptor {
        &self.descriptor
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn state_bytes(&self) -> Vec<u8> {
        self.state.to_bytes()
    }

    /// Back to `setup(pp)`, keeping the oracles.
    pub fn reset(&mut self) {
        self.state = self.descriptor.setup();
    }

    /// Calls made to the oracle the security argument is about: `F` for
    /// Bloom, the wrapping PRF for the wrapped filter, `H_T`/`H_I` otherwise.
    pub fn oracle_calls(&self) -> u64 {
        match &self.backend {
            Backend::Bloom(BloomIndexer::Oracle(f)) | Backend::Cuckoo(f) => f.call_count(),
            Backend::Bloom(BloomIndexer::Public(_)) => 0,
            Backend::Wrapped { wrap, .. } => wrap.call_count(),
        }
    }

    pub fn up(&mut self, x: &[u8], coins: &mut dyn CoinSource) -> bool {
        match (&mut self.backend, &mut self.state) {
            (Backend::Bloom(f), FilterState::Bloom(s)) => {
                let v = f.indices(x, s.m(), s.params().k);
                s.insert_indices(&v);
                true
            }
            (Backend::Cuckoo(h), FilterState::Cuckoo(s)) => s.insert(x, h, coins),
            (Backend::Wrapped { wrap, inner }, FilterState::Cuckoo(s)) => {
                let y = wrap.evaluate(x);
                s.insert(&y, inner, coins)
            }
            _ => unreachable!("backend and state families always agree"),
        }
    }

    pub fn qry(&mut self, x: &[u8]) -> bool {
        match (&mut self.backend, &self.state) {
            (Backend::Bloom(f), FilterState::Bloom(s)) => {
                let v = f.indices(x, s.m(), s.params().k);
                s.contains_indices(&v)
            }
            (Backend::Cuckoo(h), FilterState::Cuckoo(s)) => s.contains(x, h),
            (Backend::Wrapped { wrap, inner }, FilterState::Cuckoo(s)) => {
                let y = wrap.evaluate(x);
                s.contains(&y, inner)
            }
            _ => unreachable!("backend and state families always agree"),
        }
    }

    /// `F(x)`, or `None` for the original Cuckoo filter.
    pub fn apply_f(&mut self, x: &[u8]) -> Option<RangePoint> {
        match (&mut self.backend, &self.state) {
            (Backend::Bloom(f), FilterState::Bloom(s)) => {
                Some(RangePoint::Indices(f.indices(x, s.m(), s.params().k)))
            }
            (Backend::Wrapped { wrap, .. }, _) => Some(RangePoint::Bytes(wrap.evaluate(x))),
            _ => None,
        }
    }

    /// `up^Id(y, sigma)`.
    pub fn up_id(&mut self, y: &RangePoint, coins: &mut dyn CoinSource) -> Result<bool> {
        match (&mut self.backend, &mut self.state, y) {
            (Backend::Bloom(_), FilterState::Bloom(s), RangePoint::Indices(v)) => {
                check_shape(s, v)?;
                s.insert_indices(v);
                Ok(true)
            }
            (Backend::Wrapped { inner, .. }, FilterState::Cuckoo(s), RangePoint::Bytes(y)) => {
                Ok(s.insert(y, inner, coins))
            }
            _ => Err(Error::Domain("range point does not match this filter".into())),
        }
    }

    /// `qry^Id(y, sigma)`.
    pub fn qry_id(&mut self, y: &RangePoint) -> Result<bool> {
        match (&mut self.backend, &self.state, y) {
            (Backend::Bloom(_), FilterState::Bloom(s), RangePoint::Indices(v)) => {
                check_shape(s, v)?;
                Ok(s.contains_indices(v))
            }
            (Backend::Wrapped { inner, .. }, FilterState::Cuckoo(s), RangePoint::Bytes(y)) => {
                Ok(s.contains(y, inner))
            }
            _ => Err(Error::Domain("range point does not match this filter".into())),
        }
    }

    /// A uniform point of the range, or `None` if the filter is not
    /// decomposable.
    pub fn sample_range_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<RangePoint> {
        match (&self.backend, &self.state) {
            (Backend::Bloom(_), FilterState::Bloom(s)) => Some(RangePoint::Indices(
                IndexVector::random(rng, s.m(), s.params().k),
            )),
            (Backend::Wrapped { .. }, _) => {
                let mut y = vec![0u8; WRAP_OUTPUT_LEN];
                rng.fill_bytes(&mut y);
                Some(RangePoint::Bytes(y))
            }
            _ => None,
        }
    }
}

fn check_shape(s: &BloomState, v: &IndexVector) -> Result<()> {
    if v.m() != s.m() || v.k() != s.params().k {
        return Err(Error::Domain(format!(
            "index vector over [{}]^{} does not fit an ({}, {}) filter",
            v.m(),
            v.k(),
            s.m(),
            s.params().k
        )));
    }
    Ok(())
}

/// Wraps a Cuckoo instance so that `up` and `qry` see `F(x)` instead of `x`.
pub fn prf_wrap(inner: FilterInstance, f: FunctionOracle) -> Result<FilterInstance> {
    match inner.backend {
        Backend::Cuckoo(h) => {
            let PublicParams::Cuckoo(pp) = inner.descriptor.pp else {
                unreachable!()
            };
            Ok(FilterInstance {
                descriptor: AmqDescriptor::prf_wrapped_cuckoo(pp),
                state: inner.state,
                backend: Backend::Wrapped { wrap: f, inner: h },
            })
        }
        _ => Err(Error::InvalidParams(
            "only an unwrapped cuckoo instance can be wrapped".into(),
        )),
    }
}

#[derive(Clone, Debug)]
pub struct NaiSample {
    pub state: FilterState,
    pub elements: Vec<Element>,
    /// Draws discarded because they repeated an earlier element.
    pub retries: u64,
}

/// Resets `filter`, then inserts `n` distinct uniformly random elements.
/// Answers of `up` are ignored.
pub fn nai_gen<R: RngCore + ?Sized>(filter: &mut FilterInstance, n: usize, rng: &mut R) -> NaiSample {
    filter.reset();
    let mut seen = HashSet::with_capacity(n);
    let mut elements = Vec::with_capacity(n);
    let mut retries = 0;
    while elements.len() < n {
        let x = Element::random(rng, SAMPLE_ELEMENT_LEN);
        if !seen.insert(x.clone()) {
            retries += 1;
            continue;
        }
        filter.up(&x, &mut crate::cuckoo::RngCoins(&mut *rng));
        elements.push(x);
    }
    NaiSample {
        state: filter.state.clone(),
        elements,
        retries,
    }
}

/// Fraction of `probes` fresh random elements that `filter` accepts.
pub fn empirical_fp_rate<R: RngCore + ?Sized>(filter: &mut FilterInstance, probes: usize, rng: &mut R) -> f64 {
    let hits = (0..probes)
        .filter(|_| filter.qry(&Element::random(rng, SAMPLE_ELEMENT_LEN)))
        .count();
    hits as f64 / probes as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Up,
    Qry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub op: OpKind,
    pub input: Element,
    /// Draws consumed by an `up`; `None` for `qry`.
    pub coins: Option<Vec<CoinDraw>>,
    pub returned: bool,
    pub state_before: FilterState,
    pub state_after: FilterState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperationTrace {
    pub records: Vec<TraceRecord>,
}

/// A filter that logs every operation.
pub struct TracedFilter {
    pub filter: FilterInstance,
    pub trace: OperationTrace,
}

impl TracedFilter {
    pub fn new(filter: FilterInstance) -> Self {
        TracedFilter {
            filter,
            trace: OperationTrace::default(),
        }
    }

    pub fn up(&mut self, x: &Element, coins: &mut dyn CoinSource) -> bool {
        let before = self.filter.state.clone();
        let mut rec = RecordingCoins::new(coins);
        let b = self.filter.up(x, &mut rec);
        self.trace.records.push(TraceRecord {
            op: OpKind::Up,
            input: x.clone(),
            coins: Some(rec.draws),
            returned: b,
            state_before: before,
            state_after: self.filter.state.clone(),
        });
        b
    }

    pub fn qry(&mut self, x: &Element) -> bool {
        let before = self.filter.state.clone();
        let a = self.filter.qry(x);
        self.trace.records.push(TraceRecord {
            op: OpKind::Qry,
            input: x.clone(),
            coins: None,
            returned: a,
            state_before: before,
            state_after: self.filter.state.clone(),
        });
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    ElementPermanence,
    PermanentDisabling,
    ReinsertionInvariance,
    Monotonicity,
    QueryMutation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub rule: Rule,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

fn grows(before: &FilterState, after: &FilterState) -> Option<bool> {
    match (before, after) {
        (FilterState::Bloom(a), FilterState::Bloom(b)) => Some(a.is_subset_of(b)),
        (FilterState::Cuckoo(a), FilterState::Cuckoo(b)) => {
            Some(is_sub_multiset(&a.tag_multiset(), &b.tag_multiset()))
        }
        _ => None,
    }
}

fn is_sub_multiset(small: &[u32], big: &[u32]) -> bool {
    let mut j = 0;
    for &x in small {
        while j < big.len() && big[j] < x {
            j += 1;
        }
        if j == big.len() || big[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

/// Checks a trace against the consistency rules.
///
/// Returns an error if the records do not chain (the state after one record
/// differs from the state before the next) or mix filter families.
pub fn check_consistency(trace: &OperationTrace) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::default();
    let mut flag = |index, rule, detail: String| {
        report.violations.push(Violation { index, rule, detail });
    };
    let mut positive: HashSet<&Element> = HashSet::new();
    let mut disabled_at: Option<usize> = None;

    for (i, r) in trace.records.iter().enumerate() {
        if i > 0 && trace.records[i - 1].state_after != r.state_before {
            return Err(Error::MalformedTrace {
                index: i,
                reason: "state_before differs from the previous state_after".into(),
            });
        }
        let Some(grew) = grows(&r.state_before, &r.state_after) else {
            return Err(Error::MalformedTrace {
                index: i,
                reason: "filter family changes within the trace".into(),
            });
        };
        let changed = r.state_before != r.state_after;
        if !grew {
            flag(i, Rule::Monotonicity, "stored content shrank".into());
        }
        match r.op {
            OpKind::Qry => {
                if changed {
                    flag(i, Rule::QueryMutation, "qry changed the state".into());
                }
                if r.returned {
                    positive.insert(&r.input);
                } else if positive.contains(&r.input) {
                    flag(i, Rule::ElementPermanence, format!("{:?} was accepted earlier", r.input));
                }
            }
            OpKind::Up => {
                if let Some(at) = disabled_at {
                    if r.returned || changed {
                        flag(
                            i,
                            Rule::PermanentDisabling,
                            format!("up succeeded or changed state after the failure at record {at}"),
                        );
                    }
                }
                if positive.contains(&r.input) && changed {
                    flag(i, Rule::ReinsertionInvariance, format!("reinserting {:?} changed the state", r.input));
                }
                if !r.returned && disabled_at.is_none() {
                    disabled_at = Some(i);
                }
            }
        }
    }
    Ok(report)
}

/// `1/2 * sum |p(z) - q(z)|` over a common support.
pub fn statistical_distance<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> Result<f64> {
    for (name, d) in [("p", p), ("q", q)] {
        if d.values().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("{name} has a negative or non-finite mass")));
        }
        let total: f64 = d.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("{name} sums to {total}, not 1")));
        }
    }
    if p.len() != q.len() || p.keys().zip(q.keys()).any(|(a, b)| a != b) {
        return Err(Error::Domain("distributions have different supports".into()));
    }
    let sum: f64 = p.values().zip(q.values()).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

/// Empirical distributions of two samples over the union of their supports.
pub fn empirical_pair<K: Ord + Clone>(a: &[K], b: &[K]) -> (BTreeMap<K, f64>, BTreeMap<K, f64>) {
    let mut pa: BTreeMap<K, f64> = BTreeMap::new();
    let mut pb: BTreeMap<K, f64> = BTreeMap::new();
    for x in a.iter().chain(b) {
        pa.entry(x.clone()).or_insert(0.0);
        pb.entry(x.clone()).or_insert(0.0);
    }
    for x in a {
        *pa.get_mut(x).unwrap() += 1.0 / a.len() as f64;
    }
    for x in b {
        *pb.get_mut(x).unwrap() += 1.0 / b.len() as f64;
    }
    (pa, pb)
}
