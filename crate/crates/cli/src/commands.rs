// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use amq_core::amq::{empirical_pair, nai_gen, statistical_distance, AmqDescriptor, Family, FilterInstance, FilterState};
use amq_core::analysis::{
    adversarial_correctness_bound, bloom_nai_fp_bound, cuckoo_nai_fp_bound, default_bloom_grid,
    default_cuckoo_grid, parameter_sweep, privacy_guessing_bound, storage_bits, QueryBudget, SweepConfig,
};
use amq_core::attacks::{
    attack_pollution_bloom, attack_target_set_coverage, random_elements, tsc_envelope, BloomTarget,
    CuckooPiAttack, PollutionConfig, TscConfig,
};
use amq_core::bloom::BloomParams;
use amq_core::cuckoo::{CuckooParams, RngCoins};
use amq_core::games::{
    decode_bit, derive_rng, estimate_advantage, run_elem_rep_privacy, run_pi_game_with, run_real_or_ideal_with,
    AdvantageEstimate, Adversary, FnAdversary, GameOracles, PrivacyWorld, RepThenReveal, RunOptions, WorldKind,
};
use amq_core::prf::{Element, Key};
use anyhow::{Context, Result};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::emit::{emit_curve, Format, Manifest};
use crate::*;

/// Largest Bloom filter an experiment will allocate.
const MAX_BLOOM_BITS: u64 = 1 << 34;
/// Largest Cuckoo table an experiment will allocate.
const MAX_CUCKOO_SLOTS: u64 = 1 << 27;
/// PRF distinguishing advantage assumed when none is given.
const DEFAULT_EPS: f64 = 8.636168555094445e-78;

pub fn run(command: Command, w: &mut dyn Write) -> Result<Verdict> {
    match command {
        Command::FpBound(a) => fp_bound(&a, w),
        Command::AdvBound(a) => adv_bound(&a, w),
        Command::PrivacyBound(a) => privacy_bound(&a, w),
        Command::Plan(a) => plan(&a, w),
        Command::Experiment(Experiment::LoadFactor(a)) => load_factor(&a, w),
        Command::Experiment(Experiment::Fp(a)) => fp_experiment(&a, w),
        Command::Experiment(Experiment::NaiCheck(a)) => nai_check(&a, w),
        Command::Attack(Attack::Pollution(a)) => pollution(&a, w),
        Command::Attack(Attack::Tsc(a)) => tsc(&a, w),
        Command::Attack(Attack::CuckooPi(a)) => cuckoo_pi(&a, w),
        Command::Game(Game::Roi(a)) => roi(&a, w),
        Command::Game(Game::Pi(a)) => pi(&a, w),
        Command::Game(Game::ElemRep(a)) => elem_rep(&a, w),
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str, family: FamilyArg) -> Result<T> {
    v.ok_or_else(|| usage(format!("--{flag} is required for {}", family_name(family))))
}

fn family_name(f: FamilyArg) -> &'static str {
    match f {
        FamilyArg::Bloom => "bloom",
        FamilyArg::Cuckoo => "cuckoo",
        FamilyArg::PrfWrappedCuckoo => "prf-wrapped-cuckoo",
    }
}

fn descriptor(pp: &PpArgs) -> Result<AmqDescriptor> {
    Ok(match pp.family {
        FamilyArg::Bloom => AmqDescriptor::bloom(BloomParams::new(
            need(pp.m, "m", pp.family)?,
            need(pp.k, "k", pp.family)?,
        )?),
        FamilyArg::Cuckoo | FamilyArg::PrfWrappedCuckoo => {
            let cp = CuckooParams::new(
                need(pp.s, "s", pp.family)?,
                need(pp.lambda_i, "lambda-i", pp.family)?,
                need(pp.lambda_t, "lambda-t", pp.family)?,
                pp.num,
            )?;
            if pp.family == FamilyArg::Cuckoo {
                AmqDescriptor::cuckoo(cp)
            } else {
                AmqDescriptor::prf_wrapped_cuckoo(cp)
            }
        }
    })
}

/// NAI false-positive bound after `inserted` insertions.
fn nai_fp(pp: &PpArgs, inserted: u64) -> Result<f64> {
    Ok(match pp.family {
        FamilyArg::Bloom => {
            let k = need(pp.k, "k", pp.family)?;
            let k = u32::try_from(k).map_err(|_| usage("--k is too large"))?;
            bloom_nai_fp_bound(need(pp.m, "m", pp.family)?, k, inserted)?.bound
        }
        FamilyArg::Cuckoo => cuckoo_nai_fp_bound(need(pp.s, "s", pp.family)?, need(pp.lambda_t, "lambda-t", pp.family)?, None)?,
        FamilyArg::PrfWrappedCuckoo => cuckoo_nai_fp_bound(
            need(pp.s, "s", pp.family)?,
            need(pp.lambda_t, "lambda-t", pp.family)?,
            Some(pp.range_bits),
        )?,
    })
}

fn guard_size(d: &AmqDescriptor) -> Result<()> {
    match d.pp {
        amq_core::amq::PublicParams::Bloom(p) if p.m > MAX_BLOOM_BITS => {
            Err(usage(format!("m = {} exceeds the experiment limit of 2^34 bits", p.m)))
        }
        amq_core::amq::PublicParams::Cuckoo(p) if p.slots() > MAX_CUCKOO_SLOTS => {
            Err(usage(format!("{} slots exceed the experiment limit of 2^27", p.slots())))
        }
        _ => Ok(()),
    }
}

fn eps_from_log2(log2: f64) -> Result<f64> {
    if !(log2 <= 0.0) {
        return Err(usage("--eps-prf-log2 must be <= 0"));
    }
    Ok(log2.exp2())
}

fn keyed(d: AmqDescriptor, seed: u64, index: u64) -> FilterInstance {
    FilterInstance::keyed(d, &Key::random(&mut derive_rng(seed, "cli-key", index)))
}

fn occupancy(s: &FilterState) -> u64 {
    match s {
        FilterState::Bloom(b) => b.hamming_weight(),
        FilterState::Cuckoo(c) => c.occupied(),
    }
}

pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn format_for(out: &OutArgs, path: &Path) -> Format {
    out.format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("svg") => Format::Svg,
        Some("json") => Format::Json,
        _ => Format::Csv,
    })
}

fn fp_bound(a: &FpBoundArgs, w: &mut dyn Write) -> Result<Verdict> {
    writeln!(w, "family = {}", family_name(a.pp.family))?;
    match a.pp.family {
        FamilyArg::Bloom => {
            let k = need(a.pp.k, "k", a.pp.family)?;
            let b = bloom_nai_fp_bound(
                need(a.pp.m, "m", a.pp.family)?,
                u32::try_from(k).map_err(|_| usage("--k is too large"))?,
                a.n,
            )?;
            writeln!(w, "n = {}", a.n)?;
            writeln!(w, "bound = {:.6e}", b.bound)?;
            writeln!(w, "estimate = {:.6e}", b.estimate)?;
        }
        _ => writeln!(w, "bound = {:.6e}", nai_fp(&a.pp, a.n)?)?,
    }
    if let Ok(d) = descriptor(&a.pp) {
        writeln!(w, "storage_bits = {}", storage_bits(&d))?;
    }
    Ok(Verdict::Ok)
}

fn adv_bound(a: &AdvBoundArgs, w: &mut dyn Write) -> Result<Verdict> {
    if a.pp.family == FamilyArg::Cuckoo {
        return Err(usage(
            "the correctness bound needs a function-decomposable filter; use --family prf-wrapped-cuckoo",
        ));
    }
    let budget = QueryBudget {
        n: a.n,
        q_u: a.q_u,
        q_t: a.q_t,
        q_v: 0,
    };
    let inserted = a.n.checked_add(a.q_u).ok_or_else(|| usage("n + q_u overflows"))?;
    let fp = nai_fp(&a.pp, inserted)?;
    let r = adversarial_correctness_bound(eps_from_log2(a.eps_prf_log2)?, budget, fp, a.immutable)?;
    writeln!(w, "family = {}", family_name(a.pp.family))?;
    writeln!(w, "nai_fp(n + q_u) = {:.6e}", r.nai_fp)?;
    writeln!(w, "eps_prf = {:.6e}", r.eps_prf)?;
    writeln!(w, "eps_prime = {:.6e}", r.adversarial_bound)?;
    writeln!(w, "immutable = {}", r.immutable)?;
    if let Ok(d) = descriptor(&a.pp) {
        let r = r.with_descriptor(&d);
        writeln!(w, "storage_bits = {}", r.storage_bits.unwrap_or_default())?;
    }
    Ok(Verdict::Ok)
}

fn privacy_bound(a: &PrivacyBoundArgs, w: &mut dyn Write) -> Result<Verdict> {
    let r = privacy_guessing_bound(a.q_u, a.q_t, a.min_entropy, eps_from_log2(a.eps_prf_log2)?)?;
    writeln!(w, "min_entropy = {}", r.min_entropy)?;
    writeln!(w, "guess_bound = {:.6e}", r.guess_bound)?;
    writeln!(w, "privacy_bound = {:.6e}", r.rep_privacy_bound)?;
    Ok(Verdict::Ok)
}

fn plan(a: &PlanArgs, w: &mut dyn Write) -> Result<Verdict> {
    if a.log_n > 62 || a.log_q > 62 {
        return Err(usage("--log-n and --log-q must be at most 62"));
    }
    let (n, q) = (1u64 << a.log_n, 1u64 << a.log_q);
    let families: Vec<(&str, Family)> = match a.family {
        PlanFamily::Bloom => vec![("bloom", Family::Bloom)],
        PlanFamily::Cuckoo => vec![("cuckoo", Family::PrfWrappedCuckoo)],
        PlanFamily::All => vec![("bloom", Family::Bloom), ("cuckoo", Family::PrfWrappedCuckoo)],
    };
    let mut series = Vec::new();
    for (name, family) in families {
        let mut config = SweepConfig::new(family, n, q, a.target_log2);
        config.log2_eps_prf = a.eps_prf_log2;
        let grid = match family {
            Family::Bloom => default_bloom_grid(n + q),
            _ => default_cuckoo_grid(n + q),
        };
        let sweep = parameter_sweep(&config, &grid)?;
        let show = |v: Option<u64>| v.map_or("none".to_string(), |b| b.to_string());
        writeln!(
            w,
            "{name}: min storage adversarial = {} bits, honest = {} bits, ratio = {}",
            show(sweep.min_storage_adversarial),
            show(sweep.min_storage_honest),
            sweep.storage_ratio().map_or("n/a".to_string(), |r| format!("{r:.4}"))
        )?;
        series.push((name.to_string(), sweep.points));
    }
    if let Some(out) = &a.out.out {
        let path = resolve_out(out);
        let mut m = Manifest::new();
        m.push("command", "plan");
        m.push("budget", format!("n=2^{} q=2^{}", a.log_n, a.log_q));
        m.push("eps_prf_log2", a.eps_prf_log2);
        m.push("target_log2", a.target_log2);
        m.push(
            "pp",
            "bloom: m on a 1/16-octave grid, k <= 32; cuckoo (prf-wrapped, 256-bit range): s in {4,8}, lambda_T 6..96",
        );
        m.push("seed", "none (deterministic)");
        emit_curve(&series, format_for(&a.out, &path), &m, &path)?;
        writeln!(w, "wrote {}", path.display())?;
    }
    Ok(Verdict::Ok)
}

fn load_factor(a: &LoadFactorArgs, w: &mut dyn Write) -> Result<Verdict> {
    let cp = CuckooParams::new(a.s, a.lambda_i, a.lambda_t, a.num)?;
    let d = match a.family {
        FamilyArg::Cuckoo => AmqDescriptor::cuckoo(cp),
        FamilyArg::PrfWrappedCuckoo => AmqDescriptor::prf_wrapped_cuckoo(cp),
        FamilyArg::Bloom => return Err(usage("load-factor needs a cuckoo family")),
    };
    guard_size(&d)?;
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let rows: Vec<(u64, u64)> = (0..a.trials)
        .into_par_iter()
        .map(|t| {
            let mut f = keyed(d, a.seed, t);
            let mut rng = derive_rng(a.seed, "load-factor", t);
            loop {
                let before = f.state().as_cuckoo().map_or(0, |c| c.occupied());
                if !f.up(&Element::random(&mut rng, 16), &mut RngCoins(&mut rng)) {
                    return (t, before);
                }
            }
        })
        .collect();
    let slots = cp.slots();
    writeln!(w, "seed = {}", a.seed)?;
    for (t, occ) in &rows {
        writeln!(w, "trial {t}: {:.4}", *occ as f64 / slots as f64)?;
    }
    let mean = rows.iter().map(|r| r.1 as f64 / slots as f64).sum::<f64>() / rows.len() as f64;
    writeln!(w, "mean = {mean:.4}")?;
    if let Some(out) = &a.out.out {
        let path = resolve_out(out);
        let mut m = Manifest::new();
        m.push("command", "experiment load-factor");
        m.push("pp", format!("family={} s={} lambda_I={} lambda_T={} num={}", family_name(a.family), a.s, a.lambda_i, a.lambda_t, a.num));
        m.push("budget", format!("trials={}", a.trials));
        m.push("seed", a.seed);
        let mut text = String::new();
        for (k, v) in &m.lines {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        text.push_str("trial,occupied,slots,fraction\n");
        for (t, occ) in &rows {
            text.push_str(&format!("{t},{occ},{slots},{}\n", *occ as f64 / slots as f64));
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        writeln!(w, "wrote {}", path.display())?;
    }
    Ok(if mean >= a.min_load { Verdict::Ok } else { Verdict::ThresholdMissed })
}

fn fp_experiment(a: &FpExperimentArgs, w: &mut dyn Write) -> Result<Verdict> {
    let d = descriptor(&a.pp)?;
    guard_size(&d)?;
    if a.probes == 0 {
        return Err(usage("--probes must be positive"));
    }
    let n = usize::try_from(a.n).map_err(|_| usage("--n is too large"))?;
    let mut f = keyed(d, a.seed, 0);
    nai_gen(&mut f, n, &mut derive_rng(a.seed, "fp-fill", 0));
    let chunks = 16u64;
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = f.clone();
            let mut rng = derive_rng(a.seed, "fp-probes", c);
            let count = a.probes / chunks + u64::from(c < a.probes % chunks);
            (0..count).filter(|_| g.qry(&Element::random(&mut rng, 16))).count() as u64
        })
        .sum();
    let rate = hits as f64 / a.probes as f64;
    let sigma = (rate * (1.0 - rate) / a.probes as f64).sqrt();
    let bound = nai_fp(&a.pp, a.n)?;
    writeln!(w, "seed = {}", a.seed)?;
    writeln!(w, "disabled = {}", f.state().is_disabled())?;
    writeln!(w, "empirical = {rate:.6e} ({hits} / {})", a.probes)?;
    writeln!(w, "sigma = {sigma:.3e}")?;
    writeln!(w, "bound = {bound:.6e}")?;
    Ok(if rate <= bound + 3.0 * sigma { Verdict::Ok } else { Verdict::ThresholdMissed })
}

fn nai_check(a: &NaiCheckArgs, w: &mut dyn Write) -> Result<Verdict> {
    let d = descriptor(&a.pp)?;
    guard_size(&d)?;
    if !d.is_decomposable() {
        return Err(usage("the ideal world needs a function-decomposable filter"));
    }
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let n = usize::try_from(a.n).map_err(|_| usage("--n is too large"))?;
    let adv = RepThenReveal {
        elements: random_elements(n, &mut derive_rng(a.seed, "nai-elements", 0)),
    };
    let sample = |world, label: &str| -> Result<Vec<Vec<u8>>> {
        (0..a.trials)
            .into_par_iter()
            .map(|i| {
                let seed = derive_rng(a.seed, label, i).gen();
                Ok(run_real_or_ideal_with(&adv, &d, world, seed, RunOptions::default())?.out)
            })
            .collect()
    };
    let (p, q) = empirical_pair(&sample(WorldKind::Real, "real")?, &sample(WorldKind::Ideal, "ideal")?);
    let sd = statistical_distance(&p, &q)?;
    writeln!(w, "seed = {}", a.seed)?;
    writeln!(w, "support = {}", p.len())?;
    writeln!(w, "statistical_distance = {sd:.5}")?;
    Ok(if sd <= a.max_sd { Verdict::Ok } else { Verdict::ThresholdMissed })
}

fn targets(t: TargetArg) -> Vec<BloomTarget> {
    match t {
        TargetArg::Public => vec![BloomTarget::PublicHash],
        TargetArg::Keyed => vec![BloomTarget::Keyed],
        TargetArg::Both => vec![BloomTarget::PublicHash, BloomTarget::Keyed],
    }
}

fn target_name(t: BloomTarget) -> &'static str {
    match t {
        BloomTarget::PublicHash => "public",
        BloomTarget::Keyed => "keyed",
    }
}

fn pollution(a: &PollutionArgs, w: &mut dyn Write) -> Result<Verdict> {
    let pp = BloomParams::new(a.m, a.k)?;
    guard_size(&AmqDescriptor::bloom(pp))?;
    let config = PollutionConfig {
        pp,
        n: a.n,
        q_u: a.q_u,
        candidates: a.candidates,
        probes: a.probes,
        eps_prf: eps_from_log2(a.eps_prf_log2)?,
    };
    writeln!(w, "seed = {}", a.seed)?;
    for t in targets(a.target) {
        let r = attack_pollution_bloom(&config, t, a.seed)?;
        writeln!(
            w,
            "{}: fp = {:.6e} (sigma {:.1e}), fill = {:.4}, honest bound = {:.6e}, gap = {:.3}x, envelope = {:.6e}",
            target_name(t),
            r.achieved_fp,
            r.sigma,
            r.fill_ratio,
            r.honest_bound,
            r.gap(),
            r.envelope
        )?;
    }
    Ok(Verdict::Ok)
}

fn tsc(a: &TscArgs, w: &mut dyn Write) -> Result<Verdict> {
    let pp = BloomParams::new(a.m, a.k)?;
    guard_size(&AmqDescriptor::bloom(pp))?;
    let config = TscConfig {
        pp,
        n: a.n,
        q_u: a.q_u,
        candidates: a.candidates,
    };
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    writeln!(w, "seed = {}", a.seed)?;
    for t in targets(a.target) {
        let wins: Result<Vec<bool>> = (0..a.trials)
            .into_par_iter()
            .map(|i| {
                let l = random_elements(a.targets, &mut derive_rng(a.seed, "tsc-targets", i));
                Ok(attack_target_set_coverage(&l, &config, t, derive_rng(a.seed, "tsc-trial", i).gen())?.success)
            })
            .collect();
        let freq = wins?.iter().filter(|&&b| b).count() as f64 / a.trials as f64;
        write!(w, "{}: success = {freq:.4}", target_name(t))?;
        if t == BloomTarget::Keyed {
            let fp = bloom_nai_fp_bound(a.m, a.k as u32, a.n + a.q_u)?.bound;
            write!(w, ", envelope = {:.6e}", tsc_envelope(eps_from_log2(a.eps_prf_log2)?, a.targets, fp))?;
        }
        writeln!(w)?;
    }
    Ok(Verdict::Ok)
}

fn write_estimate(w: &mut dyn Write, e: &AdvantageEstimate) -> Result<()> {
    writeln!(w, "advantage = {:.4} +/- {:.4}", e.advantage, e.half_width)?;
    writeln!(w, "p0 = {:.4}, p1 = {:.4}, trials = {}", e.p0, e.p1, e.trials)?;
    Ok(())
}

fn cuckoo_pi(a: &CuckooPiArgs, w: &mut dyn Write) -> Result<Verdict> {
    let cp = CuckooParams::new(a.s, a.lambda_i, a.lambda_t, a.num)?;
    let d = match a.family {
        FamilyArg::Cuckoo => AmqDescriptor::cuckoo(cp),
        FamilyArg::PrfWrappedCuckoo => AmqDescriptor::prf_wrapped_cuckoo(cp),
        FamilyArg::Bloom => return Err(usage("cuckoo-pi needs a cuckoo family")),
    };
    guard_size(&d)?;
    let attack = CuckooPiAttack {
        budget: QueryBudget {
            n: 0,
            q_u: a.q_u,
            q_t: 0,
            q_v: a.q_v,
        },
    };
    let e = estimate_advantage(
        |c, s| run_pi_game_with(&attack, &d, c, s, RunOptions::default()).is_ok_and(|o| decode_bit(&o.out)),
        a.trials,
        a.seed,
    )?;
    writeln!(w, "seed = {}", a.seed)?;
    write_estimate(w, &e)?;
    Ok(match a.min_advantage {
        Some(min) if e.advantage < min => Verdict::ThresholdMissed,
        _ => Verdict::Ok,
    })
}

/// Rep, Up and Qry on fresh random elements, then Reveal. The output bit is
/// "some query came back positive", or the low digest bit when `digest` is set.
fn scripted<'a>(
    budget: QueryBudget,
    digest: bool,
) -> FnAdversary<impl Fn(&mut dyn GameOracles, &mut ChaCha20Rng) -> Vec<u8> + Sync + 'a> {
    FnAdversary {
        budget,
        f: move |o: &mut dyn GameOracles, rng: &mut ChaCha20Rng| {
            let v: Vec<Element> = (0..budget.n).map(|_| Element::random(rng, 16)).collect();
            o.rep(&v);
            for _ in 0..budget.q_u {
                o.up(&Element::random(rng, 16));
            }
            let mut positive = false;
            for _ in 0..budget.q_t {
                positive |= o.qry(&Element::random(rng, 16));
            }
            let digest_bit = o
                .reveal()
                .map_or(0, |s| s.digest().as_bytes()[0] & 1);
            vec![if digest { digest_bit } else { u8::from(positive) }]
        },
    }
}

fn roi(a: &RoiArgs, w: &mut dyn Write) -> Result<Verdict> {
    let d = descriptor(&a.pp)?;
    guard_size(&d)?;
    if !d.is_decomposable() {
        return Err(usage("the ideal world needs a function-decomposable filter"));
    }
    let budget = QueryBudget {
        n: a.n,
        q_u: a.q_u,
        q_t: a.q_t,
        q_v: 1,
    };
    let adv = scripted(budget, false);
    let world = |b: bool| if b { WorldKind::Ideal } else { WorldKind::Real };
    let e = estimate_advantage(
        |b, s| run_real_or_ideal_with(&adv, &d, world(b), s, RunOptions::default()).is_ok_and(|o| decode_bit(&o.out)),
        a.trials,
        a.seed,
    )?;
    let fp = nai_fp(&a.pp, a.n + a.q_u)?;
    let bound = adversarial_correctness_bound(DEFAULT_EPS, budget, fp, false)?;
    writeln!(w, "seed = {}", a.seed)?;
    write_estimate(w, &e)?;
    writeln!(w, "eps_prime = {:.6e}", bound.adversarial_bound)?;
    if let Some(path) = &a.transcript {
        let path = resolve_out(path);
        let mut text = String::new();
        for b in [false, true] {
            let opts = RunOptions { trial: 0, record: true };
            let out = run_real_or_ideal_with(&adv, &d, world(b), a.seed, opts)?;
            for r in out.transcript {
                text.push_str(&r.to_json_line());
                text.push('\n');
            }
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        writeln!(w, "wrote {}", path.display())?;
    }
    Ok(Verdict::Ok)
}

fn pi(a: &PiArgs, w: &mut dyn Write) -> Result<Verdict> {
    let d = descriptor(&a.pp)?;
    guard_size(&d)?;
    let pi_attack;
    let generic;
    let adv: &dyn Adversary = if a.pp.family == FamilyArg::Bloom {
        generic = scripted(QueryBudget {
            n: a.n,
            q_u: a.q_u.min(64),
            q_t: 0,
            q_v: 1,
        }, true);
        &generic
    } else {
        pi_attack = CuckooPiAttack {
            budget: QueryBudget {
                n: 0,
                q_u: a.q_u,
                q_t: 0,
                q_v: a.q_v,
            },
        };
        &pi_attack
    };
    let e = estimate_advantage(
        |c, s| run_pi_game_with(adv, &d, c, s, RunOptions::default()).is_ok_and(|o| decode_bit(&o.out)),
        a.trials,
        a.seed,
    )?;
    writeln!(w, "seed = {}", a.seed)?;
    write_estimate(w, &e)?;
    Ok(Verdict::Ok)
}

fn elem_rep(a: &ElemRepArgs, w: &mut dyn Write) -> Result<Verdict> {
    let d = descriptor(&a.pp)?;
    guard_size(&d)?;
    if !d.is_decomposable() {
        return Err(usage("the privacy simulator needs a function-decomposable filter"));
    }
    let n = usize::try_from(a.n).map_err(|_| usage("--n is too large"))?;
    let budget = QueryBudget {
        n: 0,
        q_u: 0,
        q_t: a.q_t,
        q_v: 1,
    };
    let adv = FnAdversary {
        budget,
        f: move |o: &mut dyn GameOracles, rng: &mut ChaCha20Rng| {
            let positives = (0..budget.q_t).filter(|_| o.qry(&Element::random(rng, 16))).count() as u64;
            let occ = o.reveal().map_or(0, |s| occupancy(&s));
            // parity of what was seen; any fixed function of out works here
            vec![((positives + occ) & 1) as u8]
        },
    };
    let ideal = match a.variant {
        PrivacyVariant::ElemRep => PrivacyWorld::IdealElemRep,
        PrivacyVariant::Rep => PrivacyWorld::IdealRep,
    };
    let e = estimate_advantage(
        |b, s| {
            let v = random_elements(n, &mut derive_rng(s, "hidden-set", 0));
            let world = if b { ideal } else { PrivacyWorld::Real };
            run_elem_rep_privacy(&adv, &d, &v, world, s, RunOptions::default()).is_ok_and(|o| decode_bit(&o.game.out))
        },
        a.trials,
        a.seed,
    )?;
    let r = privacy_guessing_bound(0, a.q_t, 128.0 * a.n.min(1) as f64, DEFAULT_EPS)?;
    writeln!(w, "seed = {}", a.seed)?;
    write_estimate(w, &e)?;
    writeln!(w, "guess_bound = {:.6e}", r.guess_bound)?;
    Ok(Verdict::Ok)
}
