//! Scenario definitions and the `.scn` file format.
//!
//! A scenario pins down everything a run depends on: the actor roster (with
//! per-proposer values and target quorums), the set of actors declared
//! nonfaulty, the scheduling policy, a deterministic failure plan, and the
//! run limits (budget, retry patience, fairness bound, seed). Validation
//! happens up front so a run never starts from an inconsistent setup; every
//! rejected scenario names the violated invariant.
//!
//! File format: `#` starts a comment, sections may come in any order.
//!
//! ```text
//! [roster]
//! P1 proposer value=10 quorum=A1,A2
//! A1 acceptor
//!
//! [nonfaulty]
//! P1 A1 A2
//!
//! [policy]
//! kind=fair_random            # fair_random | round_robin | adversarial_duel | cnd
//! # cnd only:
//! proposer=P1
//! ballot=100
//! quorum=A1,A2
//! activation=40
//!
//! [failures]                  # optional
//! 12 A2 stp
//! 80 A2 bgn
//!
//! [limits]
//! budget=5000
//! patience=40
//! fairness_bound=64
//! seed=7
//! stop=first_learn            # optional: first_learn | budget
//! ```

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::actor::{ActorName, Role};
use crate::fam::Configuration;
use crate::synod::{AcceptorState, ActorState, Ballot, ProposerState, Value};

/// One roster line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RosterActor {
    pub name: ActorName,
    /// Proposers carry the value they will push and (optionally) an
    /// explicit target quorum; acceptors carry nothing.
    pub proposer: Option<ProposerSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposerSpec {
    pub value: Value,
    /// Explicit target quorum; defaults to the first simple majority of
    /// the acceptor roster when absent.
    pub quorum: Option<BTreeSet<ActorName>>,
}

/// Failure plan entry: at scheduler clock `at`, force the given transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Stp,
    Bgn,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailureEvent {
    pub at: u64,
    pub actor: ActorName,
    pub kind: FailureKind,
}

/// When a run ends besides budget exhaustion and quiescence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopRule {
    /// Stop as soon as any proposer learns the decree.
    #[default]
    FirstLearn,
    /// Keep going until the budget runs out or nothing can ever happen.
    Budget,
}

/// Scheduling policy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Seeded uniform choice with a bounded-unfairness guarantee.
    FairRandom,
    /// Cycle the roster, servicing each actor's oldest pending step.
    RoundRobin,
    /// Scripted dueling proposers: each completes phase 1 after the
    /// other's phase 1 but before the other's phase 2, forever.
    AdversarialDuel,
    /// A protected proposal window: from `activation` on, nothing with a
    /// higher ballot reaches the protected quorum until the protected
    /// proposer learns.
    Cnd(CndPolicy),
}

impl Policy {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Policy::FairRandom => "fair_random",
            Policy::RoundRobin => "round_robin",
            Policy::AdversarialDuel => "adversarial_duel",
            Policy::Cnd(_) => "cnd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CndPolicy {
    pub proposer: ActorName,
    /// Floor for the protected ballot; the effective ballot is the
    /// smallest member of the proposer's residue class at or above this
    /// that supersedes its current round.
    pub ballot: Ballot,
    pub quorum: BTreeSet<ActorName>,
    /// Scheduler clock at which the protected proposal is injected and the
    /// window opens.
    pub activation: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub roster: Vec<RosterActor>,
    pub nonfaulty: BTreeSet<ActorName>,
    pub policy: Policy,
    pub failure_plan: Vec<FailureEvent>,
    pub budget: u64,
    pub patience: u64,
    pub fairness_bound: u64,
    pub seed: u64,
    pub stop: StopRule,
}

/// A scenario that failed validation; the message names the invariant.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("ill-formed scenario ({invariant}): {msg}")]
pub struct IllFormedScenario {
    pub invariant: &'static str,
    pub msg: String,
}

fn ill(invariant: &'static str, msg: impl Into<String>) -> IllFormedScenario {
    IllFormedScenario {
        invariant,
        msg: msg.into(),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("scenario parse error at line {line}: {msg}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub msg: String,
}

impl Scenario {
    pub fn proposers(&self) -> impl Iterator<Item = &RosterActor> {
        self.roster.iter().filter(|a| a.proposer.is_some())
    }

    pub fn acceptors(&self) -> impl Iterator<Item = &ActorName> {
        self.roster
            .iter()
            .filter(|a| a.proposer.is_none())
            .map(|a| &a.name)
    }

    pub fn acceptor_count(&self) -> usize {
        self.acceptors().count()
    }

    /// Smallest majority of the acceptor roster.
    pub fn majority_size(&self) -> usize {
        self.acceptor_count() / 2 + 1
    }

    /// The quorum a proposer targets: its declared one, or the first
    /// simple majority of the acceptor roster in roster order.
    pub fn quorum_of(&self, proposer: &ActorName) -> BTreeSet<ActorName> {
        let declared = self
            .roster
            .iter()
            .find(|a| &a.name == proposer)
            .and_then(|a| a.proposer.as_ref())
            .and_then(|spec| spec.quorum.clone());
        declared.unwrap_or_else(|| self.acceptors().take(self.majority_size()).cloned().collect())
    }

    pub fn is_nonfaulty(&self, actor: &ActorName) -> bool {
        self.nonfaulty.contains(actor)
    }

    /// The fresh starting configuration: every actor available, proposers
    /// parameterized with their value and ballot residue class (offset =
    /// position among proposers in roster order, stride = proposer count).
    pub fn initial_configuration(&self) -> Configuration {
        let stride = self.proposers().count().max(1) as u64;
        let mut offset = 0u64;
        let mut available = BTreeMap::new();
        for actor in &self.roster {
            let state = match &actor.proposer {
                Some(spec) => {
                    let st = ProposerState::new(spec.value, stride, offset);
                    offset += 1;
                    ActorState::Proposer(st)
                }
                None => ActorState::Acceptor(AcceptorState::new()),
            };
            available.insert(actor.name.clone(), state);
        }
        Configuration::new(available, BTreeMap::new(), Default::default())
    }

    /// Checks every scenario invariant. The returned error names the one
    /// that failed.
    pub fn validate(&self) -> Result<(), IllFormedScenario> {
        let mut seen = BTreeSet::new();
        for actor in &self.roster {
            if !ActorName::valid_id(actor.name.id()) {
                return Err(ill(
                    "actor-id-charset",
                    format!("'{}' contains characters outside [A-Za-z0-9_]", actor.name),
                ));
            }
            if !seen.insert(actor.name.id().to_string()) {
                return Err(ill(
                    "roster-unique-names",
                    format!("actor '{}' appears twice", actor.name),
                ));
            }
            match (&actor.proposer, actor.name.role()) {
                (Some(_), Role::Proposer) | (None, Role::Acceptor) => {}
                _ => {
                    return Err(ill(
                        "roster-role-consistency",
                        format!("'{}' role does not match its declaration", actor.name),
                    ))
                }
            }
            if let Some(spec) = &actor.proposer {
                if spec.value.is_nil() {
                    return Err(ill(
                        "proposer-value-concrete",
                        format!("proposer '{}' has no value to propose", actor.name),
                    ));
                }
            }
        }
        if self.proposers().next().is_none() {
            return Err(ill("roster-has-proposer", "no proposer in roster"));
        }
        if self.acceptor_count() == 0 {
            return Err(ill("roster-has-acceptor", "no acceptor in roster"));
        }

        let roster_names: BTreeSet<&ActorName> = self.roster.iter().map(|a| &a.name).collect();
        for name in &self.nonfaulty {
            if !roster_names.contains(name) {
                return Err(ill(
                    "nonfaulty-in-roster",
                    format!("nonfaulty actor '{name}' is not in the roster"),
                ));
            }
        }

        // Quorums must be non-empty majorities of the acceptor roster so
        // that any two intersect and a full-quorum vote is a chosen decree.
        let check_quorum =
            |owner: &ActorName, quorum: &BTreeSet<ActorName>| -> Result<(), IllFormedScenario> {
                if quorum.is_empty() {
                    return Err(ill(
                        "quorum-nonempty",
                        format!("quorum of '{owner}' is empty"),
                    ));
                }
                for member in quorum {
                    if !member.is_acceptor() || !roster_names.contains(member) {
                        return Err(ill(
                            "quorum-of-acceptors",
                            format!("quorum member '{member}' of '{owner}' is not a roster acceptor"),
                        ));
                    }
                }
                if quorum.len() < self.majority_size() {
                    return Err(ill(
                        "quorum-majority",
                        format!(
                            "quorum of '{owner}' has {} members; a majority of {} acceptors needs {}",
                            quorum.len(),
                            self.acceptor_count(),
                            self.majority_size()
                        ),
                    ));
                }
                Ok(())
            };
        for actor in self.proposers() {
            check_quorum(&actor.name, &self.quorum_of(&actor.name))?;
        }

        if self.budget == 0 {
            return Err(ill("budget-positive", "budget must be positive"));
        }
        if self.patience == 0 {
            return Err(ill("patience-positive", "patience must be positive"));
        }
        if self.fairness_bound == 0 {
            return Err(ill(
                "fairness-bound-positive",
                "fairness_bound must be positive",
            ));
        }

        match &self.policy {
            Policy::AdversarialDuel => {
                let n = self.proposers().count();
                if n != 2 {
                    return Err(ill(
                        "duel-two-proposers",
                        format!("adversarial duel needs exactly 2 proposers, roster has {n}"),
                    ));
                }
            }
            Policy::Cnd(cnd) => {
                if !roster_names.contains(&cnd.proposer) || !cnd.proposer.is_proposer() {
                    return Err(ill(
                        "cnd-proposer-in-roster",
                        format!("'{}' is not a roster proposer", cnd.proposer),
                    ));
                }
                if !self.is_nonfaulty(&cnd.proposer) {
                    return Err(ill(
                        "cnd-proposer-nonfaulty",
                        format!("protected proposer '{}' is not declared nonfaulty", cnd.proposer),
                    ));
                }
                check_quorum(&cnd.proposer, &cnd.quorum)?;
                for member in &cnd.quorum {
                    if !self.is_nonfaulty(member) {
                        return Err(ill(
                            "cnd-quorum-nonfaulty",
                            format!("protected quorum member '{member}' is not declared nonfaulty"),
                        ));
                    }
                }
            }
            Policy::FairRandom | Policy::RoundRobin => {}
        }

        // The failure plan must toggle availability consistently, and a
        // nonfaulty actor may only fail temporarily: every stp needs a
        // later bgn.
        let mut down: BTreeSet<&ActorName> = BTreeSet::new();
        let mut last_at = 0u64;
        for event in &self.failure_plan {
            if !roster_names.contains(&event.actor) {
                return Err(ill(
                    "failure-plan-in-roster",
                    format!("failure plan names unknown actor '{}'", event.actor),
                ));
            }
            if event.at < last_at {
                return Err(ill(
                    "failure-plan-ordered",
                    "failure plan entries must be in nondecreasing clock order",
                ));
            }
            if event.at >= self.budget {
                return Err(ill(
                    "failure-plan-within-budget",
                    format!(
                        "failure plan entry at clock {} never fires under budget {}",
                        event.at, self.budget
                    ),
                ));
            }
            last_at = event.at;
            match event.kind {
                FailureKind::Stp => {
                    if !down.insert(&event.actor) {
                        return Err(ill(
                            "failure-plan-alternates",
                            format!("'{}' stopped while already failed", event.actor),
                        ));
                    }
                }
                FailureKind::Bgn => {
                    if !down.remove(&event.actor) {
                        return Err(ill(
                            "failure-plan-alternates",
                            format!("'{}' restarted while available", event.actor),
                        ));
                    }
                }
            }
        }
        for actor in down {
            if self.is_nonfaulty(actor) {
                return Err(ill(
                    "nonfaulty-recovers",
                    format!(
                        "nonfaulty actor '{actor}' is stopped without a later matching bgn"
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Generates a valid randomized scenario from a seed: roster of up to 3
/// proposers and 5 acceptors, random majority quorums, a random
/// alternating failure plan (nonfaulty actors always get their restart),
/// and randomized limits. Used by fuzz harnesses and the acceptance
/// sweeps; the output always passes [`Scenario::validate`].
pub fn random_scenario(seed: u64) -> Scenario {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xda7a5eed);

    let n_proposers = rng.gen_range(1..=3usize);
    let n_acceptors = [3usize, 5][rng.gen_range(0..2usize)];
    let acceptors: Vec<ActorName> = (1..=n_acceptors)
        .map(|i| ActorName::acceptor(format!("A{i}")))
        .collect();
    let majority = n_acceptors / 2 + 1;

    let pick_quorum = |rng: &mut rand_chacha::ChaCha8Rng| -> BTreeSet<ActorName> {
        let size = rng.gen_range(majority..=n_acceptors);
        let mut pool = acceptors.clone();
        let mut quorum = BTreeSet::new();
        for _ in 0..size {
            let i = rng.gen_range(0..pool.len());
            quorum.insert(pool.swap_remove(i));
        }
        quorum
    };

    let mut roster: Vec<RosterActor> = (1..=n_proposers)
        .map(|i| RosterActor {
            name: ActorName::proposer(format!("P{i}")),
            proposer: Some(ProposerSpec {
                value: Value::Num(10 * i as u64),
                quorum: Some(pick_quorum(&mut rng)),
            }),
        })
        .collect();
    roster.extend(acceptors.iter().map(|a| RosterActor {
        name: a.clone(),
        proposer: None,
    }));

    // Nonfaulty set: each actor independently, proposer P1 always (so the
    // run has a proposer with delivery guarantees to talk about).
    let mut nonfaulty: BTreeSet<ActorName> = roster
        .iter()
        .filter(|_| rng.gen_bool(0.7))
        .map(|a| a.name.clone())
        .collect();
    nonfaulty.insert(ActorName::proposer("P1"));

    let budget = rng.gen_range(500..=5000u64);

    // Alternating failure plan; nonfaulty casualties always recover.
    let mut failure_plan = Vec::new();
    let mut clock = 0u64;
    let mut down: Vec<ActorName> = Vec::new();
    for _ in 0..rng.gen_range(0..6usize) {
        clock += rng.gen_range(1..=budget / 16);
        let target = &roster[rng.gen_range(0..roster.len())].name;
        if down.contains(target) {
            failure_plan.push(FailureEvent {
                at: clock,
                actor: target.clone(),
                kind: FailureKind::Bgn,
            });
            down.retain(|a| a != target);
        } else {
            failure_plan.push(FailureEvent {
                at: clock,
                actor: target.clone(),
                kind: FailureKind::Stp,
            });
            down.push(target.clone());
        }
    }
    for actor in down {
        if nonfaulty.contains(&actor) {
            clock += rng.gen_range(1..=16);
            failure_plan.push(FailureEvent {
                at: clock,
                actor,
                kind: FailureKind::Bgn,
            });
        }
    }

    let policy = match rng.gen_range(0..4u32) {
        0 => Policy::FairRandom,
        1 => Policy::RoundRobin,
        2 if n_proposers == 2 => Policy::AdversarialDuel,
        _ => {
            // A protected window with consistent nonfaulty declarations.
            let proposer = ActorName::proposer("P1");
            let quorum = pick_quorum(&mut rng);
            nonfaulty.insert(proposer.clone());
            nonfaulty.extend(quorum.iter().cloned());
            // Keep the protected set consistent with the failure plan:
            // drop plan entries that would leave a protected actor down.
            let mut live: BTreeSet<&ActorName> = Default::default();
            for event in &failure_plan {
                match event.kind {
                    FailureKind::Stp => live.insert(&event.actor),
                    FailureKind::Bgn => live.remove(&event.actor),
                };
            }
            let stranded: BTreeSet<ActorName> = live
                .into_iter()
                .filter(|a| nonfaulty.contains(*a))
                .cloned()
                .collect();
            for actor in stranded {
                clock += rng.gen_range(1..=16);
                failure_plan.push(FailureEvent {
                    at: clock,
                    actor,
                    kind: FailureKind::Bgn,
                });
            }
            Policy::Cnd(CndPolicy {
                proposer,
                ballot: Ballot(rng.gen_range(100..2000) * n_proposers as u64),
                quorum,
                activation: rng.gen_range(0..budget / 4),
            })
        }
    };

    let scenario = Scenario {
        roster,
        nonfaulty,
        policy,
        failure_plan,
        budget,
        patience: rng.gen_range(20..=80),
        fairness_bound: rng.gen_range(16..=64),
        seed: rng.gen(),
        stop: if rng.gen_bool(0.5) {
            StopRule::FirstLearn
        } else {
            StopRule::Budget
        },
    };
    debug_assert!(
        scenario.validate().is_ok(),
        "generator produced an invalid scenario for seed {seed}: {:?}",
        scenario.validate()
    );
    scenario
}

fn serr(line: usize, msg: impl Into<String>) -> ScenarioParseError {
    ScenarioParseError {
        line,
        msg: msg.into(),
    }
}

#[derive(PartialEq)]
enum Section {
    None,
    Roster,
    Nonfaulty,
    Policy,
    Failures,
    Limits,
}

/// Key=value splitter for policy/limits lines.
fn kv(line_no: usize, s: &str) -> Result<(&str, &str), ScenarioParseError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| serr(line_no, format!("expected key=value, got '{s}'")))
}

/// Parses scenario text. Section and field syntax errors report the line;
/// cross-field invariants are [`Scenario::validate`]'s job (the parser
/// runs it before returning, so a successful parse is a valid scenario).
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioParseError> {
    let mut section = Section::None;
    let mut roster: Vec<RosterActor> = Vec::new();
    let mut names: BTreeMap<String, ActorName> = BTreeMap::new();
    let mut nonfaulty_ids: Vec<(usize, String)> = Vec::new();
    let mut policy_kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut failures_raw: Vec<(usize, u64, String, FailureKind)> = Vec::new();
    let mut limits_kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut seen_sections: BTreeSet<&'static str> = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[roster]" => {
                section = Section::Roster;
                seen_sections.insert("roster");
                continue;
            }
            "[nonfaulty]" => {
                section = Section::Nonfaulty;
                seen_sections.insert("nonfaulty");
                continue;
            }
            "[policy]" => {
                section = Section::Policy;
                seen_sections.insert("policy");
                continue;
            }
            "[failures]" => {
                section = Section::Failures;
                seen_sections.insert("failures");
                continue;
            }
            "[limits]" => {
                section = Section::Limits;
                seen_sections.insert("limits");
                continue;
            }
            _ if line.starts_with('[') => {
                return Err(serr(line_no, format!("unknown section '{line}'")));
            }
            _ => {}
        }

        match section {
            Section::None => return Err(serr(line_no, "content before any section header")),
            Section::Roster => {
                let mut words = line.split_whitespace();
                let id = words.next().unwrap().to_string();
                let role = words
                    .next()
                    .ok_or_else(|| serr(line_no, "roster line needs '<id> proposer|acceptor'"))?;
                let actor = match role {
                    "proposer" => {
                        let mut value = None;
                        let mut quorum_ids: Option<Vec<String>> = None;
                        for attr in words {
                            let (k, v) = kv(line_no, attr)?;
                            match k {
                                "value" => {
                                    value = Some(v.parse::<u64>().map_err(|_| {
                                        serr(line_no, format!("bad proposer value '{v}'"))
                                    })?)
                                }
                                "quorum" => {
                                    quorum_ids =
                                        Some(v.split(',').map(|s| s.trim().to_string()).collect())
                                }
                                other => {
                                    return Err(serr(
                                        line_no,
                                        format!("unknown roster attribute '{other}'"),
                                    ))
                                }
                            }
                        }
                        let value = value.ok_or_else(|| {
                            serr(line_no, format!("proposer '{id}' needs value=<n>"))
                        })?;
                        RosterActor {
                            name: ActorName::proposer(id.as_str()),
                            proposer: Some(ProposerSpec {
                                value: Value::Num(value),
                                // Quorum ids resolve after the roster closes.
                                quorum: quorum_ids.map(|ids| {
                                    ids.iter().map(|s| ActorName::acceptor(s.as_str())).collect()
                                }),
                            }),
                        }
                    }
                    "acceptor" => {
                        if words.next().is_some() {
                            return Err(serr(line_no, "acceptor lines take no attributes"));
                        }
                        RosterActor {
                            name: ActorName::acceptor(id.as_str()),
                            proposer: None,
                        }
                    }
                    other => return Err(serr(line_no, format!("unknown role '{other}'"))),
                };
                if names.contains_key(&id) {
                    return Err(serr(line_no, format!("duplicate actor '{id}'")));
                }
                names.insert(id, actor.name.clone());
                roster.push(actor);
            }
            Section::Nonfaulty => {
                for id in line.split_whitespace() {
                    nonfaulty_ids.push((line_no, id.to_string()));
                }
            }
            Section::Policy => {
                let (k, v) = kv(line_no, line)?;
                policy_kv.insert(k.to_string(), (line_no, v.to_string()));
            }
            Section::Failures => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(serr(line_no, "failure line is '<clock> <actor> stp|bgn'"));
                }
                let at = parts[0]
                    .parse::<u64>()
                    .map_err(|_| serr(line_no, format!("bad failure clock '{}'", parts[0])))?;
                let kind = match parts[2] {
                    "stp" => FailureKind::Stp,
                    "bgn" => FailureKind::Bgn,
                    other => return Err(serr(line_no, format!("bad failure kind '{other}'"))),
                };
                failures_raw.push((line_no, at, parts[1].to_string(), kind));
            }
            Section::Limits => {
                let (k, v) = kv(line_no, line)?;
                limits_kv.insert(k.to_string(), (line_no, v.to_string()));
            }
        }
    }

    for required in ["roster", "nonfaulty", "policy", "limits"] {
        if !seen_sections.contains(required) {
            return Err(serr(0, format!("missing [{required}] section")));
        }
    }

    let resolve = |line_no: usize, id: &str| -> Result<ActorName, ScenarioParseError> {
        names
            .get(id)
            .cloned()
            .ok_or_else(|| serr(line_no, format!("unknown actor '{id}'")))
    };

    let nonfaulty: BTreeSet<ActorName> = nonfaulty_ids
        .iter()
        .map(|(line_no, id)| resolve(*line_no, id))
        .collect::<Result<_, _>>()?;

    let failure_plan: Vec<FailureEvent> = failures_raw
        .iter()
        .map(|(line_no, at, id, kind)| {
            Ok(FailureEvent {
                at: *at,
                actor: resolve(*line_no, id)?,
                kind: *kind,
            })
        })
        .collect::<Result<_, ScenarioParseError>>()?;

    let take_policy = |key: &str| -> Result<(usize, String), ScenarioParseError> {
        policy_kv
            .get(key)
            .cloned()
            .ok_or_else(|| serr(0, format!("[policy] is missing '{key}='")))
    };
    let (kind_line, kind) = take_policy("kind")?;
    let policy = match kind.as_str() {
        "fair_random" => Policy::FairRandom,
        "round_robin" => Policy::RoundRobin,
        "adversarial_duel" => Policy::AdversarialDuel,
        "cnd" => {
            let (pl, pid) = take_policy("proposer")?;
            let (bl, ballot) = take_policy("ballot")?;
            let (ql, quorum) = take_policy("quorum")?;
            let (al, activation) = take_policy("activation")?;
            Policy::Cnd(CndPolicy {
                proposer: resolve(pl, &pid)?,
                ballot: Ballot(
                    ballot
                        .parse::<u64>()
                        .map_err(|_| serr(bl, format!("bad ballot '{ballot}'")))?,
                ),
                quorum: quorum
                    .split(',')
                    .map(|s| resolve(ql, s.trim()))
                    .collect::<Result<_, _>>()?,
                activation: activation
                    .parse::<u64>()
                    .map_err(|_| serr(al, format!("bad activation '{activation}'")))?,
            })
        }
        other => return Err(serr(kind_line, format!("unknown policy kind '{other}'"))),
    };

    let take_limit = |key: &str| -> Result<(usize, String), ScenarioParseError> {
        limits_kv
            .get(key)
            .cloned()
            .ok_or_else(|| serr(0, format!("[limits] is missing '{key}='")))
    };
    let parse_limit = |key: &str| -> Result<u64, ScenarioParseError> {
        let (line_no, v) = take_limit(key)?;
        v.parse::<u64>()
            .map_err(|_| serr(line_no, format!("bad {key} '{v}'")))
    };
    let stop = match limits_kv.get("stop") {
        None => StopRule::FirstLearn,
        Some((_, v)) if v == "first_learn" => StopRule::FirstLearn,
        Some((_, v)) if v == "budget" => StopRule::Budget,
        Some((line_no, v)) => return Err(serr(*line_no, format!("bad stop rule '{v}'"))),
    };

    let scenario = Scenario {
        roster,
        nonfaulty,
        policy,
        failure_plan,
        budget: parse_limit("budget")?,
        patience: parse_limit("patience")?,
        fairness_bound: parse_limit("fairness_bound")?,
        seed: parse_limit("seed")?,
        stop,
    };
    scenario
        .validate()
        .map_err(|e| serr(0, e.to_string()))?;
    Ok(scenario)
}
