// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! Security games: real-or-ideal correctness, permutation invariance and
//! Elem-Rep / Rep privacy, plus a Monte-Carlo advantage estimator.
//!
//! Adversaries talk to a [`GameOracles`] handle. `Up` and `Qry` answer
//! `false` before `Rep` has been called and a second `Rep` answers `false`.
//! The runner wraps every handle in a budget that answers `false` (or no
//! state) once a limit is reached.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amq::{AmqDescriptor, FilterInstance, FilterState};
use crate::analysis::QueryBudget;
use crate::cuckoo::RngCoins;
use crate::error::{Error, Result};
use crate::prf::{Element, Key};

/// Length of the fresh elements drawn by lazy permutations and injections.
pub const FRESH_ELEMENT_LEN: usize = 32;

/// Oracle interface seen by an adversary.
pub trait GameOracles {
    fn rep(&mut self, v: &[Element]) -> bool;
    fn up(&mut self, x: &Element) -> bool;
    fn qry(&mut self, x: &Element) -> bool;
    fn reveal(&mut self) -> Option<FilterState>;
}

/// A game world: oracles plus a digest of the internal state for
/// transcripts.
pub trait World: GameOracles {
    fn state_digest(&self) -> String;
}

/// An adversary strategy. `run` may be called concurrently from several
/// trials, so per-run state lives on the stack of `run`.
pub trait Adversary: Sync {
    fn budget(&self) -> QueryBudget;
    fn run(&self, oracles: &mut dyn GameOracles, rng: &mut ChaCha20Rng) -> Vec<u8>;
}

/// Adversary from a closure.
pub struct FnAdversary<F> {
    pub budget: QueryBudget,
    pub f: F,
}

impl<F> Adversary for FnAdversary<F>
where
    F: Fn(&mut dyn GameOracles, &mut ChaCha20Rng) -> Vec<u8> + Sync,
{
    fn budget(&self) -> QueryBudget {
        self.budget
    }

    fn run(&self, oracles: &mut dyn GameOracles, rng: &mut ChaCha20Rng) -> Vec<u8> {
        (self.f)(oracles, rng)
    }
}

/// Reads a guess bit from an adversary output: `true` iff the first byte is
/// odd.
pub fn decode_bit(out: &[u8]) -> bool {
    out.first().is_some_and(|b| b & 1 == 1)
}

/// Enforces a [`QueryBudget`]: `Rep` with more than `n` elements, and calls
/// past the `Up` / `Qry` / `Reveal` limits, are refused.
pub struct Budgeted<'a> {
    inner: &'a mut dyn GameOracles,
    budget: QueryBudget,
    pub used: QueryBudget,
}

impl<'a> Budgeted<'a> {
    pub fn new(inner: &'a mut dyn GameOracles, budget: QueryBudget) -> Self {
        Budgeted {
            inner,
            budget,
            used: QueryBudget::default(),
        }
    }
}

impl GameOracles for Budgeted<'_> {
    fn rep(&mut self, v: &[Element]) -> bool {
        if v.len() as u64 > self.budget.n {
            return false;
        }
        self.used.n = v.len() as u64;
        self.inner.rep(v)
    }

    fn up(&mut self, x: &Element) -> bool {
        if self.used.q_u >= self.budget.q_u {
            return false;
        }
        self.used.q_u += 1;
        self.inner.up(x)
    }

    fn qry(&mut self, x: &Element) -> bool {
        if self.used.q_t >= self.budget.q_t {
            return false;
        }
        self.used.q_t += 1;
        self.inner.qry(x)
    }

    fn reveal(&mut self) -> Option<FilterState> {
        if self.used.q_v >= self.budget.q_v {
            return None;
        }
        self.used.q_v += 1;
        self.inner.reveal()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleOp {
    Rep,
    Up,
    Qry,
    Reveal,
}

/// One line of the JSON-lines transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub trial: u64,
    pub world: String,
    pub op: OracleOp,
    #[serde(rename = "input-hash")]
    pub input_hash: String,
    /// `"1"`, `"0"`, `"state"` or `"none"`.
    pub answer: String,
    #[serde(rename = "state-digest")]
    pub state_digest: String,
}

impl TranscriptRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("transcript records always serialize")
    }
}

fn hash_inputs<'a>(xs: impl IntoIterator<Item = &'a Element>) -> String {
    let mut h = blake3::Hasher::new();
    for x in xs {
        h.update(&(x.len() as u64).to_le_bytes());
        h.update(x);
    }
    h.finalize().to_hex()[..32].to_string()
}

struct Recorder<'a, W: World> {
    world: &'a mut W,
    trial: u64,
    label: String,
    log: Vec<TranscriptRecord>,
    record: bool,
    touched: Vec<Element>,
}

impl<W: World> Recorder<'_, W> {
    fn push(&mut self, op: OracleOp, input_hash: String, answer: String) {
        if self.record {
            self.log.push(TranscriptRecord {
                trial: self.trial,
                world: self.label.clone(),
                op,
                input_hash,
                answer,
                state_digest: self.world.state_digest(),
            });
        }
    }
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

impl<W: World> GameOracles for Recorder<'_, W> {
    fn rep(&mut self, v: &[Element]) -> bool {
        let b = self.world.rep(v);
        self.push(OracleOp::Rep, hash_inputs(v), bit(b));
        b
    }

    fn up(&mut self, x: &Element) -> bool {
        self.touched.push(x.clone());
        let b = self.world.up(x);
        self.push(OracleOp::Up, hash_inputs([x]), bit(b));
        b
    }

    fn qry(&mut self, x: &Element) -> bool {
        self.touched.push(x.clone());
        let b = self.world.qry(x);
        self.push(OracleOp::Qry, hash_inputs([x]), bit(b));
        b
    }

    fn reveal(&mut self) -> Option<FilterState> {
        let s = self.world.reveal();
        let answer = if s.is_some() { "state" } else { "none" };
        self.push(OracleOp::Reveal, hash_inputs([]), answer.to_string());
        s
    }
}

/// Output of one game run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameOutcome {
    pub out: Vec<u8>,
    pub transcript: Vec<TranscriptRecord>,
    pub used: QueryBudget,
    /// Elements passed to `Up` or `Qry` by the adversary.
    pub touched: Vec<Element>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Trial number written into transcript lines.
    pub trial: u64,
    /// Keep a transcript.
    pub record: bool,
}

fn play<W: World>(adv: &dyn Adversary, world: &mut W, label: &str, rng: &mut ChaCha20Rng, opts: RunOptions) -> GameOutcome {
    let mut rec = Recorder {
        world,
        trial: opts.trial,
        label: label.to_string(),
        log: Vec::new(),
        record: opts.record,
        touched: Vec::new(),
    };
    let mut budgeted = Budgeted::new(&mut rec, adv.budget());
    let out = adv.run(&mut budgeted, rng);
    let used = budgeted.used;
    GameOutcome {
        out,
        transcript: rec.log,
        used,
        touched: rec.touched,
    }
}

/// A ChaCha20 stream for `(seed, label, index)`.
pub fn derive_rng(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    let mut h = blake3::Hasher::new_derive_key("amq-core 2026-10 game seeds");
    h.update(&seed.to_le_bytes());
    h.update(&(label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(&index.to_le_bytes());
    ChaCha20Rng::from_seed(*h.finalize().as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    Real,
    Ideal,
}

/// The keyed filter behind the correctness game's oracles.
pub struct RealWorld {
    filter: FilterInstance,
    init: bool,
    coins: RngCoins<ChaCha20Rng>,
}

impl RealWorld {
    pub fn new(filter: FilterInstance, coins: ChaCha20Rng) -> Self {
        RealWorld {
            filter,
            init: false,
            coins: RngCoins(coins),
        }
    }

    pub fn filter(&self) -> &FilterInstance {
        &self.filter
    }
}

impl GameOracles for RealWorld {
    fn rep(&mut self, v: &[Element]) -> bool {
        if self.init {
            return false;
        }
        self.init = true;
        for x in v {
            self.filter.up(x, &mut self.coins);
        }
        true
    }

    fn up(&mut self, x: &Element) -> bool {
        self.init && self.filter.up(x, &mut self.coins)
    }

    fn qry(&mut self, x: &Element) -> bool {
        self.init && self.filter.qry(x)
    }

    fn reveal(&mut self) -> Option<FilterState> {
        Some(self.filter.state().clone())
    }
}

impl World for RealWorld {
    fn state_digest(&self) -> String {
        self.filter.state().digest()
    }
}

/// The correctness simulator: a filter over a fresh random function whose
/// query answers for non-inserted elements are computed on uniform range
/// points rather than on the queried element.
pub struct CorrectnessSimulator {
    filter: FilterInstance,
    init: bool,
    up_enabled: bool,
    inserted: HashSet<Element>,
    fp_list: HashSet<Element>,
    calq: HashMap<Element, u64>,
    queries: u64,
    ctr: u64,
    rng: ChaCha20Rng,
}

impl CorrectnessSimulator {
    /// `filter` must be decomposable and built over a random function.
    pub fn new(filter: FilterInstance, rng: ChaCha20Rng) -> Result<Self> {
        if !filter.descriptor().is_decomposable() {
            return Err(Error::InvalidParams(
                "the correctness simulator needs a decomposable filter".into(),
            ));
        }
        Ok(CorrectnessSimulator {
            filter,
            init: false,
            up_enabled: true,
            inserted: HashSet::new(),
            fp_list: HashSet::new(),
            calq: HashMap::new(),
            queries: 0,
            ctr: 0,
            rng,
        })
    }

    pub fn distinct_insertions(&self) -> u64 {
        self.ctr
    }

    pub fn query_count(&self) -> u64 {
        self.queries
    }

    pub fn false_positives(&self) -> &HashSet<Element> {
        &self.fp_list
    }

    fn up_sim(&mut self, x: &Element) -> bool {
        if !self.init {
            return false;
        }
        if self.inserted.contains(x) {
            return self.up_enabled;
        }
        let b = self.filter.up(x, &mut RngCoins(&mut self.rng));
        self.up_enabled = b;
        if b {
            self.inserted.insert(x.clone());
            self.ctr += 1;
        }
        b
    }
}

impl GameOracles for CorrectnessSimulator {
    fn rep(&mut self, v: &[Element]) -> bool {
        if self.init {
            return false;
        }
        self.init = true;
        for x in v {
            self.up_sim(x);
        }
        true
    }

    fn up(&mut self, x: &Element) -> bool {
        self.up_sim(x)
    }

    fn qry(&mut self, x: &Element) -> bool {
        if !self.init {
            return false;
        }
        self.queries += 1;
        if self.inserted.contains(x) || self.fp_list.contains(x) {
            return true;
        }
        if self.calq.get(x) == Some(&self.ctr) {
            return false;
        }
        self.calq.insert(x.clone(), self.ctr);
        let y = self
            .filter
            .sample_range_point(&mut self.rng)
            .expect("decomposable filters have a range");
        let a = self.filter.qry_id(&y).expect("sampled point fits the filter");
        if a {
            self.fp_list.insert(x.clone());
        }
        a
    }

    fn reveal(&mut self) -> Option<FilterState> {
        Some(self.filter.state().clone())
    }
}

impl World for CorrectnessSimulator {
    fn state_digest(&self) -> String {
        self.filter.state().digest()
    }
}

/// One run of the correctness game. The real world keys the filter with a
/// fresh key drawn from the seed; the ideal world runs the simulator.
pub fn run_real_or_ideal(adv: &dyn Adversary, descriptor: &AmqDescriptor, world: WorldKind, seed: u64) -> Result<GameOutcome> {
    run_real_or_ideal_with(adv, descriptor, world, seed, RunOptions { trial: 0, record: true })
}

pub fn run_real_or_ideal_with(
    adv: &dyn Adversary,
    descriptor: &AmqDescriptor,
    world: WorldKind,
    seed: u64,
    opts: RunOptions,
) -> Result<GameOutcome> {
    let mut setup = derive_rng(seed, "roi-setup", 0);
    let mut adv_rng = derive_rng(seed, "roi-adversary", 0);
    let coins = derive_rng(seed, "roi-coins", 0);
    match world {
        WorldKind::Real => {
            let key = Key::random(&mut setup);
            let mut w = RealWorld::new(FilterInstance::keyed(*descriptor, &key), coins);
            Ok(play(adv, &mut w, "real", &mut adv_rng, opts))
        }
        WorldKind::Ideal => {
            let filter = FilterInstance::random(*descriptor, setup.next_u64());
            let mut w = CorrectnessSimulator::new(filter, coins)?;
            Ok(play(adv, &mut w, "ideal", &mut adv_rng, opts))
        }
    }
}

/// A lazily sampled injection with an optional reserved image set `Y`.
///
/// Inputs reported as members map into `Y`, all others outside `Y`. Fresh
/// images are uniform `FRESH_ELEMENT_LEN`-byte strings, redrawn on
/// collision with any image or reserved value.
#[derive(Clone, Debug, Default)]
pub struct LazyInjection {
    forward: HashMap<Element, Element>,
    images: HashSet<Element>,
    reserved: HashSet<Element>,
    unused_reserved: Vec<Element>,
    pub redraws: u64,
}

impl LazyInjection {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Element {
        loop {
            let y = Element::random(rng, FRESH_ELEMENT_LEN);
            if !self.images.contains(&y) && !self.reserved.contains(&y) {
                return y;
            }
            self.redraws += 1;
        }
    }

    /// `y <-$ D \ Y`, added to `Y`.
    pub fn reserve<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Element {
        let y = self.fresh(rng);
        self.reserved.insert(y.clone());
        self.unused_reserved.push(y.clone());
        y
    }

    pub fn reserved(&self) -> &HashSet<Element> {
        &self.reserved
    }

    pub fn get(&self, x: &Element) -> Option<&Element> {
        self.forward.get(x)
    }

    /// `P[x]`, sampling it on first use from `Y \ values(P)` if `in_set`,
    /// else from `D \ (values(P) ∪ Y)`.
    pub fn map<R: Rng + ?Sized>(&mut self, x: &Element, in_set: bool, rng: &mut R) -> Element {
        if let Some(y) = self.forward.get(x) {
            return y.clone();
        }
        let y = if in_set {
            assert!(
                !self.unused_reserved.is_empty(),
                "more members queried than reserved images"
            );
            let i = rng.gen_range(0..self.unused_reserved.len());
            self.unused_reserved.swap_remove(i)
        } else {
            self.fresh(rng)
        };
        self.images.insert(y.clone());
        self.forward.insert(x.clone(), y.clone());
        y
    }

    /// Pairs `(x, P[x])` sampled so far.
    pub fn pairs(&self) -> impl Iterator<Item = (&Element, &Element)> {
        self.forward.iter()
    }
}

/// The permutation-invariance game world.
pub struct PiWorld {
    filter: FilterInstance,
    init: bool,
    perm: Option<LazyInjection>,
    rng: ChaCha20Rng,
}

impl PiWorld {
    pub fn new(filter: FilterInstance, permute: bool, rng: ChaCha20Rng) -> Self {
        PiWorld {
            filter,
            init: false,
            perm: permute.then(LazyInjection::new),
            rng,
        }
    }

    fn pi(&mut self, x: &Element) -> Element {
        match &mut self.perm {
            Some(p) => p.map(x, false, &mut self.rng),
            None => x.clone(),
        }
    }
}

impl GameOracles for PiWorld {
    fn rep(&mut self, v: &[Element]) -> bool {
        if self.init {
            return false;
        }
        self.init = true;
        for x in v {
            let y = self.pi(x);
            self.filter.up(&y, &mut RngCoins(&mut self.rng));
        }
        true
    }

    fn up(&mut self, x: &Element) -> bool {
        if !self.init {
            return false;
        }
        let y = self.pi(x);
        self.filter.up(&y, &mut RngCoins(&mut self.rng))
    }

    fn qry(&mut self, x: &Element) -> bool {
        if !self.init {
            return false;
        }
        let y = self.pi(x);
        self.filter.qry(&y)
    }

    fn reveal(&mut self) -> Option<FilterState> {
        Some(self.filter.state().clone())
    }
}

impl World for PiWorld {
    fn state_digest(&self) -> String {
        self.filter.state().digest()
    }
}

/// One run of the PI game with bit `c`; the guess is [`decode_bit`] of the
/// adversary output.
pub fn run_pi_game(adv: &dyn Adversary, descriptor: &AmqDescriptor, c: bool, seed: u64) -> Result<bool> {
    Ok(decode_bit(&run_pi_game_with(adv, descriptor, c, seed, RunOptions::default())?.out))
}

pub fn run_pi_game_with(
    adv: &dyn Adversary,
    descriptor: &AmqDescriptor,
    c: bool,
    seed: u64,
    opts: RunOptions,
) -> Result<GameOutcome> {
    let mut setup = derive_rng(seed, "pi-setup", 0);
    let filter = FilterInstance::random(*descriptor, setup.next_u64());
    let mut w = PiWorld::new(filter, c, derive_rng(seed, "pi-world", 0));
    let label = if c { "pi-1" } else { "pi-0" };
    Ok(play(adv, &mut w, label, &mut derive_rng(seed, "pi-adversary", 0), opts))
}

/// Leakage oracles over a hidden set `V`.
pub struct Leakage<'v> {
    v: &'v HashSet<Element>,
    rep_calls: u32,
    elem_calls: u64,
}

impl<'v> Leakage<'v> {
    pub fn new(v: &'v HashSet<Element>) -> Self {
        Leakage {
            v,
            rep_calls: 0,
            elem_calls: 0,
        }
    }

    /// `|V|`. May be consulted once.
    pub fn rep_leak(&mut self) -> usize {
        self.rep_calls += 1;
        assert!(self.rep_calls <= 1, "RepLeak consulted more than once");
        self.v.len()
    }

    /// `[x ∈ V]`.
    pub fn elem_leak(&mut self, x: &Element) -> bool {
        self.elem_calls += 1;
        self.v.contains(x)
    }

    pub fn elem_calls(&self) -> u64 {
        self.elem_calls
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyWorld {
    Real,
    /// Simulator with `RepLeak` and `ElemLeak`.
    IdealElemRep,
    /// Simulator with `RepLeak` only.
    IdealRep,
}

/// Privacy simulator: inserts `|V|` fresh elements, then routes every
/// adversary input through a lazy injection.
pub struct PrivacySimulator<'v> {
    filter: FilterInstance,
    inj: LazyInjection,
    leak: Leakage<'v>,
    use_elem_leak: bool,
    rng: ChaCha20Rng,
}

impl<'v> PrivacySimulator<'v> {
    pub fn new(mut filter: FilterInstance, leak: Leakage<'v>, use_elem_leak: bool, mut rng: ChaCha20Rng) -> Self {
        let mut inj = LazyInjection::new();
        let mut leak = leak;
        let n = leak.rep_leak();
        for _ in 0..n {
            let y = inj.reserve(&mut rng);
            filter.up(&y, &mut RngCoins(&mut rng));
        }
        PrivacySimulator {
            filter,
            inj,
            leak,
            use_elem_leak,
            rng,
        }
    }

    fn per(&mut self, x: &Element) -> Element {
        if let Some(y) = self.inj.get(x) {
            return y.clone();
        }
        let in_set = self.use_elem_leak && self.leak.elem_leak(x);
        self.inj.map(x, in_set, &mut self.rng)
    }

    pub fn injection(&self) -> &LazyInjection {
        &self.inj
    }
}

impl GameOracles for PrivacySimulator<'_> {
    fn rep(&mut self, _: &[Element]) -> bool {
        false
    }

    fn up(&mut self, x: &Element) -> bool {
        let y = self.per(x);
        self.filter.up(&y, &mut RngCoins(&mut self.rng))
    }

    fn qry(&mut self, x: &Element) -> bool {
        let y = self.per(x);
        self.filter.qry(&y)
    }

    fn reveal(&mut self) -> Option<FilterState> {
        Some(self.filter.state().clone())
    }
}

impl World for PrivacySimulator<'_> {
    fn state_digest(&self) -> String {
        self.filter.state().digest()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivacyOutcome {
    pub game: GameOutcome,
    /// Some element of `V` was passed to `Up` or `Qry`.
    pub touched_v: bool,
}

/// One run of the Elem-Rep (or Rep) privacy game for a fixed `V`.
pub fn run_elem_rep_privacy(
    adv: &dyn Adversary,
    descriptor: &AmqDescriptor,
    v: &[Element],
    world: PrivacyWorld,
    seed: u64,
    opts: RunOptions,
) -> Result<PrivacyOutcome> {
    let set: HashSet<Element> = v.iter().cloned().collect();
    if set.len() != v.len() {
        return Err(Error::Input("V contains repeated elements".into()));
    }
    let mut setup = derive_rng(seed, "priv-setup", 0);
    let mut adv_rng = derive_rng(seed, "priv-adversary", 0);
    let coins = derive_rng(seed, "priv-coins", 0);
    let game = match world {
        PrivacyWorld::Real => {
            let key = Key::random(&mut setup);
            let mut w = RealWorld::new(FilterInstance::keyed(*descriptor, &key), coins);
            w.rep(v);
            play(adv, &mut w, "real", &mut adv_rng, opts)
        }
        PrivacyWorld::IdealElemRep | PrivacyWorld::IdealRep => {
            if !descriptor.is_decomposable() {
                return Err(Error::InvalidParams(
                    "the privacy simulator needs a decomposable filter".into(),
                ));
            }
            let filter = FilterInstance::random(*descriptor, setup.next_u64());
            let use_elem = world == PrivacyWorld::IdealElemRep;
            let mut w = PrivacySimulator::new(filter, Leakage::new(&set), use_elem, coins);
            let label = if use_elem { "ideal-elem-rep" } else { "ideal-rep" };
            play(adv, &mut w, label, &mut adv_rng, opts)
        }
    };
    let touched_v = game.touched.iter().any(|x| set.contains(x));
    Ok(PrivacyOutcome { game, touched_v })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageEstimate {
    pub advantage: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub p0: f64,
    pub p1: f64,
    pub trials: u64,
}

impl AdvantageEstimate {
    /// Standard error of `p1 - p0`.
    pub fn sigma(&self) -> f64 {
        self.half_width / 1.96
    }
}

/// Runs `runner(false, seed_i)` and `runner(true, seed_i')` for `trials`
/// independent seeds each and reports `|p1 - p0|`.
pub fn estimate_advantage<F>(runner: F, trials: u64, seed: u64) -> Result<AdvantageEstimate>
where
    F: Fn(bool, u64) -> bool + Sync,
{
    if trials < 100 {
        return Err(Error::Input(format!("need at least 100 trials, got {trials}")));
    }
    let rate = |world: bool| {
        let label = if world { "world-1" } else { "world-0" };
        let hits = (0..trials)
            .into_par_iter()
            .filter(|&i| runner(world, derive_rng(seed, label, i).next_u64()))
            .count();
        hits as f64 / trials as f64
    };
    let (p0, p1) = (rate(false), rate(true));
    let t = trials as f64;
    Ok(AdvantageEstimate {
        advantage: (p1 - p0).abs(),
        half_width: 1.96 * (p0 * (1.0 - p0) / t + p1 * (1.0 - p1) / t).sqrt(),
        p0,
        p1,
        trials,
    })
}

/// Inserts `elements` with `Rep`, reveals once and outputs the state bytes.
pub struct RepThenReveal {
    pub elements: Vec<Element>,
}

impl Adversary for RepThenReveal {
    fn budget(&self) -> QueryBudget {
        QueryBudget {
            n: self.elements.len() as u64,
            q_v: 1,
            ..Default::default()
        }
    }

    fn run(&self, o: &mut dyn GameOracles, _: &mut ChaCha20Rng) -> Vec<u8> {
        o.rep(&self.elements);
        o.reveal().map(|s| s.to_bytes()).unwrap_or_default()
    }
}

/// Shuffles `xs` with `rng`; used by strategies that randomize order.
pub fn shuffled<R: Rng + ?Sized>(mut xs: Vec<Element>, rng: &mut R) -> Vec<Element> {
    xs.shuffle(rng);
    xs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::BloomParams;
    use crate::cuckoo::CuckooParams;

    fn bloom(m: u64, k: usize) -> AmqDescriptor {
        AmqDescriptor::bloom(BloomParams::new(m, k).unwrap())
    }

    fn adversary<F>(budget: QueryBudget, f: F) -> FnAdversary<F>
    where
        F: Fn(&mut dyn GameOracles, &mut ChaCha20Rng) -> Vec<u8> + Sync,
    {
        FnAdversary { budget, f }
    }

    fn generous() -> QueryBudget {
        QueryBudget { n: 100, q_u: 100, q_t: 100, q_v: 100 }
    }

    #[test]
    fn gating_before_and_after_rep() {
        for world in [WorldKind::Real, WorldKind::Ideal] {
            let adv = adversary(generous(), |o, _| {
                let x = Element::from("x");
                let mut out = vec![o.up(&x) as u8, o.qry(&x) as u8];
                out.push(o.rep(&[]) as u8);
                out.push(o.rep(&[]) as u8);
                out.push(o.up(&x) as u8);
                out.push(o.qry(&x) as u8);
                out
            });
            let r = run_real_or_ideal(&adv, &bloom(64, 3), world, 1).unwrap();
            assert_eq!(r.out, vec![0, 0, 1, 0, 1, 1], "{world:?}");
            assert_eq!(r.transcript.len(), 6);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let budget = QueryBudget { n: 1, q_u: 2, q_t: 1, q_v: 1 };
        let adv = adversary(budget, |o, _| {
            let xs: Vec<_> = (0..2).map(Element::from_u64).collect();
            let mut out = vec![o.rep(&xs) as u8];
            for x in &xs {
                out.push(o.up(x) as u8);
            }
            out.push(o.up(&Element::from("z")) as u8);
            out.push(o.qry(&xs[0]) as u8);
            out.push(o.qry(&xs[0]) as u8);
            out.push(o.reveal().is_some() as u8);
            out.push(o.reveal().is_some() as u8);
            out
        });
        let r = run_real_or_ideal(&adv, &bloom(64, 3), WorldKind::Real, 1).unwrap();
        // Rep of two elements exceeds n = 1, so Up stays gated
        assert_eq!(r.out, vec![0, 0, 0, 0, 0, 0, 1, 0]);
    }

    #[test]
    fn no_false_negatives_in_either_world() {
        let adv = adversary(generous(), |o, _| {
            o.rep(&[]);
            let x = Element::from("hello");
            o.up(&x);
            vec![o.qry(&x) as u8]
        });
        for world in [WorldKind::Real, WorldKind::Ideal] {
            let r = run_real_or_ideal(&adv, &bloom(64, 3), world, 2).unwrap();
            assert_eq!(r.out, vec![1]);
            assert_eq!(r.transcript.last().unwrap().answer, "1");
        }
    }

    #[test]
    fn real_transcripts_are_reproducible() {
        let adv = adversary(generous(), |o, rng| {
            o.rep(&[Element::from_u64(1), Element::from_u64(2)]);
            for _ in 0..20 {
                let x = Element::random(rng, 8);
                o.up(&x);
                o.qry(&Element::random(rng, 8));
            }
            o.reveal().unwrap().to_bytes()
        });
        let pp = CuckooParams::new(2, 3, 6, 20).unwrap();
        let d = AmqDescriptor::cuckoo(pp);
        let a = run_real_or_ideal(&adv, &d, WorldKind::Real, 7).unwrap();
        let b = run_real_or_ideal(&adv, &d, WorldKind::Real, 7).unwrap();
        assert_eq!(a, b);
        let c = run_real_or_ideal(&adv, &d, WorldKind::Real, 8).unwrap();
        assert_ne!(a.out, c.out);
        let line = a.transcript[0].to_json_line();
        assert!(line.contains("\"input-hash\"") && line.contains("\"state-digest\""));
    }

    #[test]
    fn ideal_world_rejects_original_cuckoo() {
        let adv = adversary(generous(), |_, _| vec![]);
        let d = AmqDescriptor::cuckoo(CuckooParams::new(2, 3, 6, 20).unwrap());
        assert!(run_real_or_ideal(&adv, &d, WorldKind::Ideal, 0).is_err());
        let w = AmqDescriptor::prf_wrapped_cuckoo(CuckooParams::new(2, 3, 6, 20).unwrap());
        assert!(run_real_or_ideal(&adv, &w, WorldKind::Ideal, 0).is_ok());
    }

    #[test]
    fn simulator_bookkeeping() {
        // tiny filter so that false positives are common
        let filter = FilterInstance::random(bloom(4, 1), 3);
        let mut sim = CorrectnessSimulator::new(filter, derive_rng(3, "t", 0)).unwrap();
        assert!(sim.rep(&[Element::from_u64(0)]));
        let probes: Vec<_> = (100..200).map(Element::from_u64).collect();
        let first: Vec<bool> = probes.iter().map(|x| sim.qry(x)).collect();
        // no insertion since: answers repeat, positives stay on FPlist
        let again: Vec<bool> = probes.iter().map(|x| sim.qry(x)).collect();
        assert_eq!(first, again);
        for (x, &a) in probes.iter().zip(&first) {
            assert_eq!(sim.false_positives().contains(x), a);
        }
        let before = sim.false_positives().clone();
        for i in 1..4 {
            sim.up(&Element::from_u64(i));
        }
        for x in &probes {
            sim.qry(x);
        }
        assert!(before.is_subset(sim.false_positives()));
        assert!(before.iter().all(|x| sim.qry(x)));
        assert_eq!(sim.distinct_insertions(), 4);
        // reinsertion does not count
        sim.up(&Element::from_u64(1));
        assert_eq!(sim.distinct_insertions(), 4);
    }

    #[test]
    fn lazy_injection_respects_partition() {
        let mut rng = derive_rng(1, "inj", 0);
        let mut inj = LazyInjection::new();
        let ys: HashSet<_> = (0..5).map(|_| inj.reserve(&mut rng)).collect();
        let mut images = HashSet::new();
        for i in 0..5u64 {
            let y = inj.map(&Element::from_u64(i), true, &mut rng);
            assert!(ys.contains(&y));
            assert!(images.insert(y));
        }
        for i in 5..500u64 {
            let y = inj.map(&Element::from_u64(i), false, &mut rng);
            assert!(!ys.contains(&y));
            assert!(images.insert(y));
        }
        assert_eq!(inj.map(&Element::from_u64(3), false, &mut rng), *inj.get(&Element::from_u64(3)).unwrap());
    }

    #[test]
    #[should_panic(expected = "RepLeak consulted more than once")]
    fn rep_leak_twice_panics() {
        let v = HashSet::new();
        let mut l = Leakage::new(&v);
        l.rep_leak();
        l.rep_leak();
    }

    #[test]
    fn empty_v_inserts_nothing() {
        let adv = adversary(generous(), |o, _| o.reveal().unwrap().to_bytes());
        let d = bloom(64, 3);
        let r = run_elem_rep_privacy(&adv, &d, &[], PrivacyWorld::IdealElemRep, 1, RunOptions::default()).unwrap();
        assert_eq!(r.game.out, d.setup().to_bytes());
    }

    #[test]
    fn querying_v_is_flagged() {
        let v: Vec<_> = (0..3).map(Element::from_u64).collect();
        let target = v[1].clone();
        let adv = adversary(generous(), move |o, _| vec![o.qry(&target) as u8]);
        let d = bloom(1 << 12, 4);
        for world in [PrivacyWorld::Real, PrivacyWorld::IdealElemRep, PrivacyWorld::IdealRep] {
            let r = run_elem_rep_privacy(&adv, &d, &v, world, 5, RunOptions::default()).unwrap();
            assert!(r.touched_v);
            if world != PrivacyWorld::IdealRep {
                assert_eq!(r.game.out, vec![1], "{world:?}");
            }
        }
        // without ElemLeak the member almost surely reads as absent
        let misses = (0..50)
            .filter(|&s| {
                let r = run_elem_rep_privacy(&adv, &d, &v, PrivacyWorld::IdealRep, s, RunOptions::default()).unwrap();
                r.game.out == vec![0]
            })
            .count();
        assert!(misses >= 45);
    }

    #[test]
    fn estimator_rejects_few_trials_and_handles_stubs() {
        assert!(estimate_advantage(|_, _| true, 99, 0).is_err());
        let e = estimate_advantage(|_, _| true, 1000, 0).unwrap();
        assert_eq!(e.advantage, 0.0);
        let e = estimate_advantage(|w, _| w, 1000, 0).unwrap();
        assert_eq!(e.advantage, 1.0);
        let e = estimate_advantage(
            |w, s| ChaCha20Rng::seed_from_u64(s).gen_bool(if w { 0.6 } else { 0.5 }),
            10_000,
            42,
        )
        .unwrap();
        assert!((e.advantage - 0.1).abs() < 0.03, "{e:?}");
        assert!((e.half_width - 0.0137).abs() < 0.002, "{e:?}");
        let again = estimate_advantage(
            |w, s| ChaCha20Rng::seed_from_u64(s).gen_bool(if w { 0.6 } else { 0.5 }),
            10_000,
            42,
        )
        .unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn silent_adversary_has_no_advantage() {
        let adv = adversary(generous(), |_, _| vec![1]);
        let d = bloom(64, 3);
        let e = estimate_advantage(
            |w, s| {
                let world = if w { WorldKind::Ideal } else { WorldKind::Real };
                decode_bit(&run_real_or_ideal(&adv, &d, world, s).unwrap().out)
            },
            200,
            0,
        )
        .unwrap();
        assert_eq!(e.advantage, 0.0);
        let e = estimate_advantage(|c, s| run_pi_game(&adv, &d, c, s).unwrap(), 200, 0).unwrap();
        assert_eq!(e.advantage, 0.0);
    }
}
