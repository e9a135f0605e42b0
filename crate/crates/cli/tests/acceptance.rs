//! Acceptance suite: one test per release criterion, each printing a
//! single PASS line on success (run with `--nocapture` to see them; a
//! failed assertion is the FAIL line). Everything here is seeded and
//! deterministic.
//!
//! 1. Safety over ten thousand runs across the shipped scenarios and
//!    randomized rosters, with zero tolerance.
//! 2. One thousand protected-window runs all learn, with ordered
//!    phase-1/phase-2 witnesses.
//! 3. Exhaustive small-model check: every maximal path learns, is safe,
//!    and replays digest-exact.
//! 4. Livelock reproduction, and recovery from it under the protected
//!    window.
//! 5. Failure-model fidelity: temporary quorum failure recovers, a
//!    permanent one starves, and the validator rejects the contradiction.
//! 6. Transition-rule contracts over a hundred thousand randomized
//!    configurations.
//! 7. Byte-identical reruns from manifests; every emitted trace replays.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use synodsim_core::checker::{self, ExploreLimits, LIVELOCK_REPROPOSAL_THRESHOLD};
use synodsim_core::multiset::Multiset;
use synodsim_core::scenario::{
    parse_scenario, random_scenario, CndPolicy, Policy, Scenario,
};
use synodsim_core::scheduler::{self, RunOutput};
use synodsim_core::{
    AcceptorState, ActorName, ActorState, Ballot, Configuration, Message, ProposerState,
    TransitionStep, Value,
};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn load_scn(name: &str) -> (Scenario, String) {
    let path = repo_root().join("scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    (parse_scenario(&text).unwrap(), text)
}

fn run_seeded(scenario: &Scenario, seed: u64) -> RunOutput {
    let mut s = scenario.clone();
    s.seed = seed;
    scheduler::run(&s).unwrap()
}

#[test]
fn criterion_1_safety_universal() {
    let mut runs = 0usize;
    let mut check = |label: &str, out: &RunOutput| {
        let verdict = checker::check_safety(&out.path);
        assert!(
            verdict.holds,
            "safety violated in {label}: {}",
            verdict.detail
        );
        runs += 1;
    };

    for (name, seeds) in [
        ("single.scn", 1200u64),
        ("cnd.scn", 1200),
        ("crashq.scn", 1200),
        ("duel.scn", 200),
    ] {
        let (scenario, _) = load_scn(name);
        for seed in 0..seeds {
            check(name, &run_seeded(&scenario, seed));
        }
    }

    for seed in 0..6200u64 {
        let scenario = random_scenario(seed);
        let out = scheduler::run(&scenario).unwrap();
        check("randomized roster", &out);
    }

    assert!(runs >= 10_000, "only {runs} runs executed");
    println!("ACCEPTANCE criterion-1 PASS: safety held on all {runs} runs");
}

#[test]
fn criterion_2_theorem1_at_desk_scale() {
    let (scenario, _) = load_scn("cnd.scn");
    let total = 1000u64;
    for seed in 0..total {
        let out = run_seeded(&scenario, seed);
        let (proposer, ballot, quorum) = out
            .protected
            .clone()
            .expect("cnd scenario always injects the protected proposal");

        let t1 = checker::check_theorem1(&out.path);
        assert!(t1.holds, "seed {seed}: no progress within budget");

        let l1 = checker::check_lemma1(&out.path, &proposer, ballot, &quorum);
        let l2 = checker::check_lemma2(&out.path, &proposer, ballot, &quorum);
        assert!(l1.holds, "seed {seed}: promises never covered the quorum");
        assert!(l2.holds, "seed {seed}: votes never covered the quorum");
        let (w1, w2) = (l1.witness_index.unwrap(), l2.witness_index.unwrap());
        let first_learn = out.first_learned_index().unwrap();
        assert!(w1 <= w2, "seed {seed}: witness order {w1} > {w2}");
        assert_eq!(w2, first_learn, "seed {seed}: vote quorum != first learn");
    }
    println!(
        "ACCEPTANCE criterion-2 PASS: {total}/{total} protected-window runs learned, \
         witnesses ordered"
    );
}

#[test]
fn criterion_3_exhaustive_small_model() {
    let (scenario, _) = load_scn("single.scn");
    let limits = ExploreLimits {
        max_depth: 40,
        state_cap: 1_000_000,
    };
    let report = checker::explore(&scenario, &limits);
    assert!(!report.capped, "exceeded the one-million-state budget");
    assert!(report.terminals > 0);
    assert!(
        report.all_terminals_learn(),
        "{} of {} maximal paths end without learning",
        report.terminals - report.terminals_learned,
        report.terminals
    );
    assert!(report.safety_ok);
    assert!(report.predicate_implications_ok);
    assert!(report.replay_ok);
    assert_eq!(report.replayed_paths, report.terminals);
    println!(
        "ACCEPTANCE criterion-3 PASS: {} states, {} transitions, {}/{} maximal paths learn, \
         all replay digest-exact",
        report.states, report.transitions, report.terminals_learned, report.terminals
    );
}

#[test]
fn criterion_4_livelock_reproduction_and_recovery() {
    let (scenario, _) = load_scn("duel.scn");
    assert_eq!(scenario.budget, 10_000);
    let out = scheduler::run(&scenario).unwrap();
    assert!(
        !checker::check_theorem1(&out.path).holds,
        "the duel must never learn"
    );
    let verdict = checker::detect_livelock(&out.path, LIVELOCK_REPROPOSAL_THRESHOLD);
    assert!(verdict.holds, "livelock not detected: {}", verdict.detail);

    // The same scenario under the protected window makes progress.
    let mut recovered = scenario.clone();
    recovered.policy = Policy::Cnd(CndPolicy {
        proposer: ActorName::proposer("P1"),
        ballot: Ballot(100),
        quorum: scenario.quorum_of(&ActorName::proposer("P1")),
        activation: 0,
    });
    let out = scheduler::run(&recovered).unwrap();
    let t1 = checker::check_theorem1(&out.path);
    assert!(t1.holds, "the protected window must yield progress");
    println!(
        "ACCEPTANCE criterion-4 PASS: duel re-proposed without learning ({}), \
         same scenario under cnd learned at index {}",
        verdict.detail,
        t1.witness_index.unwrap()
    );
}

#[test]
fn criterion_5_failure_model_fidelity() {
    let (scenario, _) = load_scn("crashq.scn");
    let out = scheduler::run(&scenario).unwrap();
    assert!(
        checker::check_theorem1(&out.path).holds,
        "recovered quorum member must allow progress"
    );

    // Remove the restart: A2 is now permanently down. Declared faulty,
    // the scenario runs and starves; declared nonfaulty, it is rejected.
    let mut permanent = scenario.clone();
    permanent.failure_plan.retain(|e| e.at == 3);
    assert_eq!(permanent.failure_plan.len(), 1);

    let mut starved = permanent.clone();
    starved.nonfaulty.remove(&ActorName::acceptor("A2"));
    starved.validate().unwrap();
    let out = scheduler::run(&starved).unwrap();
    assert!(
        !checker::check_theorem1(&out.path).holds,
        "a permanently failed quorum member must block progress"
    );

    let err = permanent.validate().unwrap_err();
    assert_eq!(err.invariant, "nonfaulty-recovers");
    println!(
        "ACCEPTANCE criterion-5 PASS: recovery leads to learning, permanent failure starves, \
         contradictory declaration rejected ({})",
        err.invariant
    );
}

#[test]
fn criterion_6_fam_semantics_property_suite() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xfa_5eed);

    let mut configs = 0u64;
    while configs < 100_000 {
        // A randomized configuration: random roster, random split into
        // available/failed, random protocol states and in-flight soup.
        let n_proposers = rng.gen_range(1..=3usize);
        let n_acceptors = rng.gen_range(1..=5usize);
        let mut roster: Vec<ActorName> = (1..=n_proposers)
            .map(|i| ActorName::proposer(format!("P{i}")))
            .collect();
        roster.extend((1..=n_acceptors).map(|i| ActorName::acceptor(format!("A{i}"))));
        let proposers: Vec<ActorName> =
            roster.iter().filter(|a| a.is_proposer()).cloned().collect();
        let acceptors: Vec<ActorName> =
            roster.iter().filter(|a| a.is_acceptor()).cloned().collect();

        let message = |rng: &mut rand_chacha::ChaCha8Rng| -> Message {
            let p = proposers[rng.gen_range(0..proposers.len())].clone();
            let a = acceptors[rng.gen_range(0..acceptors.len())].clone();
            let b = Ballot(rng.gen_range(1..10));
            let v = Value::Num(rng.gen_range(1..5));
            match rng.gen_range(0..4u32) {
                0 => Message::prepare(p, a, b),
                1 => Message::promise(a, p, b, rng.gen_bool(0.5).then_some((b, v))),
                2 => Message::accept(p, a, b, v),
                _ => Message::voted(a, p, b, v),
            }
        };

        let mut available = BTreeMap::new();
        let mut failed = BTreeMap::new();
        for actor in &roster {
            let mut state = if actor.is_proposer() {
                ActorState::Proposer(ProposerState::new(
                    Value::Num(1),
                    n_proposers as u64,
                    0,
                ))
            } else {
                let mut acc = AcceptorState::new();
                acc.highest_seen = Ballot(rng.gen_range(0..10));
                ActorState::Acceptor(acc)
            };
            for _ in 0..rng.gen_range(0..3u32) {
                let m = message(&mut rng);
                if &m.sender == actor {
                    state.outbox_mut().insert(m);
                }
            }
            if rng.gen_bool(0.3) {
                failed.insert(actor.clone(), state);
            } else {
                available.insert(actor.clone(), state);
            }
        }
        let mut in_flight = Multiset::new();
        for _ in 0..rng.gen_range(0..5u32) {
            let m = message(&mut rng);
            in_flight.insert(m.clone());
            if rng.gen_bool(0.25) {
                in_flight.insert(m);
            }
        }
        let cfg = Configuration::new(available, failed, in_flight);
        configs += 1;
        assert!(cfg.is_well_formed());

        // Contract: exactly one of stp/bgn per actor; failed actors have
        // no base-level steps.
        let names: Vec<ActorName> = cfg.roster().cloned().collect();
        for actor in &names {
            let stp = cfg.is_enabled(&TransitionStep::Stp(actor.clone()));
            let bgn = cfg.is_enabled(&TransitionStep::Bgn(actor.clone()));
            assert!(stp ^ bgn);
        }
        for step in cfg.enabled_base_steps() {
            assert!(cfg.is_available(step.actor()));
        }

        // Contract: multiset and domain conservation on one step of each
        // kind, plus the stp;bgn identity.
        let probe = |step: TransitionStep| {
            let next = cfg.apply(&step).unwrap();
            assert!(next.is_well_formed());
            let delta = next.in_flight().len() as i64 - cfg.in_flight().len() as i64;
            match step {
                TransitionStep::Snd(_) => assert_eq!(delta, 1),
                TransitionStep::Rcv(_) => assert_eq!(delta, -1),
                _ => assert_eq!(delta, 0),
            }
            let before: std::collections::BTreeSet<&ActorName> = cfg.roster().collect();
            let after: std::collections::BTreeSet<&ActorName> = next.roster().collect();
            assert_eq!(before, after);
        };
        let base = cfg.enabled_base_steps();
        if let Some(step) = base.iter().find(|s| matches!(s, TransitionStep::Snd(_))) {
            probe(step.clone());
        }
        if let Some(step) = base.iter().find(|s| matches!(s, TransitionStep::Rcv(_))) {
            probe(step.clone());
        }
        if let Some(name) = cfg.available().keys().next() {
            probe(TransitionStep::Stp(name.clone()));
            let stopped = cfg.apply(&TransitionStep::Stp(name.clone())).unwrap();
            let back = stopped.apply(&TransitionStep::Bgn(name.clone())).unwrap();
            assert_eq!(back, cfg, "stp;bgn must be the identity");
        }
        if let Some(name) = cfg.failed().keys().next() {
            probe(TransitionStep::Bgn(name.clone()));
        }
    }
    println!(
        "ACCEPTANCE criterion-6 PASS: transition contracts held on {configs} randomized \
         configurations"
    );
}

#[test]
fn criterion_7_determinism_and_replay() {
    let bin = env!("CARGO_BIN_EXE_synodsim");
    let dir = tempfile::tempdir().unwrap();
    let mut traces_replayed = 0;
    for name in ["single.scn", "duel.scn", "cnd.scn", "crashq.scn"] {
        let stem = name.trim_end_matches(".scn");
        let out_dir = dir.path().join(stem);
        let status = Command::new(bin)
            .args([
                "run",
                repo_root().join("scenarios").join(name).to_str().unwrap(),
                "--check",
                "safety",
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(status.status.code(), Some(0), "{name} run failed");

        let trace_path = out_dir.join(format!("{stem}.trace"));
        let verdicts_path = out_dir.join(format!("{stem}.verdicts"));
        let trace_before = std::fs::read(&trace_path).unwrap();
        let verdicts_before = std::fs::read(&verdicts_path).unwrap();

        // Re-run from the manifest: byte-identical files.
        let rerun = Command::new(bin)
            .args([
                "run",
                "--manifest",
                out_dir.join(format!("{stem}.manifest")).to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(rerun.status.code(), Some(0), "{name} rerun failed");
        assert_eq!(
            std::fs::read(&trace_path).unwrap(),
            trace_before,
            "{name}: trace not byte-identical after rerun"
        );
        assert_eq!(
            std::fs::read(&verdicts_path).unwrap(),
            verdicts_before,
            "{name}: verdicts not byte-identical after rerun"
        );

        // Every emitted trace replays cleanly.
        let replay = Command::new(bin)
            .args(["replay", trace_path.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(replay.status.code(), Some(0), "{name}: replay diverged");
        traces_replayed += 1;
    }
    println!(
        "ACCEPTANCE criterion-7 PASS: {traces_replayed} scenario runs reran byte-identical \
         from their manifests and replayed digest-exact"
    );
}
