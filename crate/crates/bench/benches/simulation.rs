//! Throughput benchmarks: scheduled runs per policy, exhaustive
//! exploration, and the digest/serialization hot path.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use synodsim_core::checker::{explore, ExploreLimits};
use synodsim_core::scenario::{parse_scenario, Scenario};
use synodsim_core::scheduler;
use synodsim_core::trace::{config_digest, write_trace};

fn single_scenario(budget: u64) -> Scenario {
    parse_scenario(&format!(
        "[roster]\n\
         P1 proposer value=10 quorum=A1,A2\n\
         A1 acceptor\nA2 acceptor\nA3 acceptor\n\
         [nonfaulty]\nP1 A1 A2 A3\n\
         [policy]\nkind=fair_random\n\
         [limits]\nbudget={budget}\npatience=50\nfairness_bound=64\nseed=7\nstop=budget\n"
    ))
    .unwrap()
}

fn duel_scenario(budget: u64) -> Scenario {
    parse_scenario(&format!(
        "[roster]\n\
         P1 proposer value=10 quorum=A1,A2\n\
         P2 proposer value=20 quorum=A1,A2\n\
         A1 acceptor\nA2 acceptor\nA3 acceptor\n\
         [nonfaulty]\nP1 P2 A1 A2 A3\n\
         [policy]\nkind=adversarial_duel\n\
         [limits]\nbudget={budget}\npatience=50\nfairness_bound=64\nseed=1\n"
    ))
    .unwrap()
}

fn bench_runs(c: &mut Criterion) {
    let fair = single_scenario(1000);
    c.bench_function("run_fair_random_1k_budget", |b| {
        b.iter(|| scheduler::run(black_box(&fair)).unwrap())
    });

    let duel = duel_scenario(1000);
    c.bench_function("run_adversarial_duel_1k_budget", |b| {
        b.iter(|| scheduler::run(black_box(&duel)).unwrap())
    });
}

fn bench_explore(c: &mut Criterion) {
    let scenario = single_scenario(1000);
    let limits = ExploreLimits {
        max_depth: 40,
        state_cap: 1_000_000,
    };
    c.bench_function("explore_one_proposer_three_acceptors", |b| {
        b.iter(|| explore(black_box(&scenario), black_box(&limits)))
    });
}

fn bench_serialization(c: &mut Criterion) {
    let scenario = duel_scenario(2000);
    let out = scheduler::run(&scenario).unwrap();
    let final_config = out.path.last_config().clone();
    c.bench_function("config_digest", |b| {
        b.iter(|| config_digest(black_box(&final_config)))
    });
    c.bench_function("write_trace_2k_steps", |b| {
        b.iter(|| write_trace(black_box(&out.path), 7, 1).unwrap())
    });
}

criterion_group!(benches, bench_runs, bench_explore, bench_serialization);
criterion_main!(benches);
