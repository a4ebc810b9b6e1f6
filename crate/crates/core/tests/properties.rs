// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

use std::collections::HashSet;

use amq_core::amq::{check_consistency, AmqDescriptor, FilterInstance, Rule, TracedFilter};
use amq_core::bloom::BloomParams;
use amq_core::cuckoo::{CuckooParams, RngCoins};
use amq_core::games::{CorrectnessSimulator, GameOracles, LazyInjection};
use amq_core::prf::{Element, Key};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn descriptors() -> Vec<AmqDescriptor> {
    let tight = CuckooParams::new(1, 3, 4, 6).unwrap();
    vec![
        AmqDescriptor::bloom(BloomParams::new(64, 3).unwrap()),
        AmqDescriptor::cuckoo(tight),
        AmqDescriptor::prf_wrapped_cuckoo(tight),
        AmqDescriptor::cuckoo(CuckooParams::new(4, 4, 8, 50).unwrap()),
    ]
}

fn ops() -> impl Strategy<Value = Vec<(bool, u8)>> {
    prop::collection::vec((any::<bool>(), 0u8..40), 0..120)
}

fn run_trace(d: AmqDescriptor, seed: u64, ops: &[(bool, u8)]) -> TracedFilter {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut t = TracedFilter::new(FilterInstance::keyed(d, &Key::random(&mut rng)));
    for &(up, i) in ops {
        let x = Element::from_u64(u64::from(i));
        if up {
            t.up(&x, &mut RngCoins(&mut rng));
        } else {
            t.qry(&x);
        }
    }
    t
}

proptest! {
    #[test]
    fn random_traces_are_consistent(seed in any::<u64>(), ops in ops()) {
        for d in descriptors() {
            let t = run_trace(d, seed, &ops);
            let report = check_consistency(&t.trace).unwrap();
            prop_assert!(report.is_clean(), "{:?}: {:?}", d.family, report);
        }
    }

    #[test]
    fn accepted_elements_stay_members(seed in any::<u64>(), ops in ops()) {
        for d in descriptors() {
            let mut t = run_trace(d, seed, &ops);
            let accepted: HashSet<Element> = t
                .trace
                .records
                .iter()
                .filter(|r| r.returned && r.coins.is_some())
                .map(|r| r.input.clone())
                .collect();
            for x in &accepted {
                prop_assert!(t.filter.qry(x));
            }
        }
    }

    #[test]
    fn reinsertion_leaves_state_identical(seed in any::<u64>(), ops in ops(), x in 0u8..40) {
        for d in descriptors() {
            let mut t = run_trace(d, seed, &ops);
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
            let x = Element::from_u64(u64::from(x));
            t.filter.up(&x, &mut RngCoins(&mut rng));
            if t.filter.qry(&x) {
                let before = t.filter.state_bytes();
                t.filter.up(&x, &mut RngCoins(&mut rng));
                prop_assert_eq!(before, t.filter.state_bytes());
            }
        }
    }

    #[test]
    fn up_factors_through_the_function(seed in any::<u64>(), ops in ops()) {
        for d in descriptors().into_iter().filter(|d| d.is_decomposable()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut a = FilterInstance::keyed(d, &Key::random(&mut rng));
            let mut b = a.clone();
            let mut ca = ChaCha20Rng::seed_from_u64(seed ^ 7);
            let mut cb = ca.clone();
            for &(up, i) in &ops {
                let x = Element::from_u64(u64::from(i));
                let y = b.apply_f(&x).unwrap();
                if up {
                    let ra = a.up(&x, &mut RngCoins(&mut ca));
                    let rb = b.up_id(&y, &mut RngCoins(&mut cb)).unwrap();
                    prop_assert_eq!(ra, rb);
                } else {
                    prop_assert_eq!(a.qry(&x), b.qry_id(&y).unwrap());
                }
                prop_assert_eq!(a.state_bytes(), b.state_bytes());
            }
        }
    }

    #[test]
    fn simulator_false_positives_are_permanent(seed in any::<u64>(), ops in ops()) {
        let d = AmqDescriptor::bloom(BloomParams::new(16, 2).unwrap());
        let mut sim = CorrectnessSimulator::new(
            FilterInstance::random(d, seed),
            ChaCha20Rng::seed_from_u64(seed),
        ).unwrap();
        sim.rep(&[]);
        let mut positives = HashSet::new();
        for &(up, i) in &ops {
            let x = Element::from_u64(u64::from(i));
            if up {
                sim.up(&x);
            } else if sim.qry(&x) {
                positives.insert(x);
            }
            for p in &positives {
                prop_assert!(sim.false_positives().contains(p) || sim.qry(p));
            }
        }
    }

    #[test]
    fn lazy_injection_is_injective(seed in any::<u64>(), reserved in 0usize..20, inputs in prop::collection::vec((0u16..200, any::<bool>()), 0..200)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut inj = LazyInjection::new();
        for _ in 0..reserved {
            inj.reserve(&mut rng);
        }
        let y = inj.reserved().clone();
        let mut budget = reserved;
        let mut in_set = HashSet::new();
        for (x, member) in inputs {
            let x = Element::from_u64(u64::from(x));
            let member = member && budget > 0 && inj.get(&x).is_none();
            if member {
                budget -= 1;
                in_set.insert(x.clone());
            }
            inj.map(&x, member, &mut rng);
        }
        let mut images = HashSet::new();
        for (x, img) in inj.pairs() {
            prop_assert!(images.insert(img.clone()));
            prop_assert_eq!(y.contains(img), in_set.contains(x));
        }
    }
}

#[test]
fn original_cuckoo_is_not_decomposable() {
    let d = AmqDescriptor::cuckoo(CuckooParams::new(2, 3, 6, 10).unwrap());
    let mut f = FilterInstance::random(d, 0);
    assert!(f.apply_f(b"x").is_none());
    assert!(f.sample_range_point(&mut ChaCha20Rng::seed_from_u64(0)).is_none());
}

#[test]
fn tight_cuckoo_traces_exercise_disabling() {
    let ops: Vec<(bool, u8)> = (0..40).map(|i| (true, i)).collect();
    let t = run_trace(descriptors()[1], 3, &ops);
    assert!(t.filter.state().is_disabled());
    let report = check_consistency(&t.trace).unwrap();
    assert_eq!(report.count(Rule::PermanentDisabling), 0);
}
