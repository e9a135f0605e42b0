//! Trace predicates and the bounded exhaustive explorer.
//!
//! The checkers are omniscient: they read whole paths. "Chosen" is a
//! global notion (some majority of acceptors all voted for a (ballot,
//! value) pair) while "learned" is a proposer's local knowledge that its
//! own quorum voted; safety is stated over the former, progress over the
//! latter, and the two are reported separately on purpose.
//!
//! The explorer walks every reachable interleaving of a small instance up
//! to a depth bound, deduplicating on (configuration, vote history). It is
//! the brute-force oracle the scheduler's single runs are checked against:
//! it verifies safety on every edge, reports what fraction of maximal
//! paths end with a learned proposer, and replays one path per terminal
//! through the transition semantics to confirm the search graph is
//! faithful.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use crate::actor::ActorName;
use crate::fam::{Configuration, Path, TransitionStep};
use crate::scenario::Scenario;
use crate::synod::{ActorState, Ballot, MessageKind, ProposerState, Value};
use crate::trace::config_digest;

/// How many re-proposals count as livelock (absent any learning).
pub const LIVELOCK_REPROPOSAL_THRESHOLD: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Property {
    Safety,
    Theorem1,
    Lemma1,
    Lemma2,
    Livelock,
}

impl Property {
    pub fn name(&self) -> &'static str {
        match self {
            Property::Safety => "safety",
            Property::Theorem1 => "theorem1",
            Property::Lemma1 => "lemma1",
            Property::Lemma2 => "lemma2",
            Property::Livelock => "livelock",
        }
    }
}

/// Outcome of one property check over one path.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub property: Property,
    pub holds: bool,
    /// For the eventuality properties: the least logical time at which the
    /// predicate holds. For livelock: the time of the threshold crossing.
    pub witness_index: Option<usize>,
    /// For safety violations: the path prefix through the violating index.
    pub counterexample: Option<Path>,
    /// Free-form parameters and context, recorded for reproducibility.
    pub detail: String,
}

impl Verdict {
    fn holds_at(property: Property, index: usize, detail: String) -> Self {
        Verdict {
            property,
            holds: true,
            witness_index: Some(index),
            counterexample: None,
            detail,
        }
    }

    fn fails(property: Property, detail: String) -> Self {
        Verdict {
            property,
            holds: false,
            witness_index: None,
            counterexample: None,
            detail,
        }
    }
}

fn majority_size(cfg: &Configuration) -> usize {
    let acceptors = cfg.roster().filter(|a| a.is_acceptor()).count();
    acceptors / 2 + 1
}

/// Accumulated vote history: who has ever voted for which (ballot, value).
/// A pair is chosen once a majority of the acceptor roster has voted it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct VoteBook {
    votes: BTreeMap<(Ballot, Value), BTreeSet<ActorName>>,
}

impl VoteBook {
    /// Records one vote; returns the pair if it just became chosen.
    fn record(
        &mut self,
        acceptor: ActorName,
        ballot: Ballot,
        value: Value,
        majority: usize,
    ) -> Option<(Ballot, Value)> {
        let voters = self.votes.entry((ballot, value)).or_default();
        let was_chosen = voters.len() >= majority;
        voters.insert(acceptor);
        (!was_chosen && voters.len() >= majority).then_some((ballot, value))
    }

    fn chosen(&self, majority: usize) -> impl Iterator<Item = (Ballot, Value)> + '_ {
        self.votes
            .iter()
            .filter(move |(_, voters)| voters.len() >= majority)
            .map(|(&pair, _)| pair)
    }

    /// First agreement violation among chosen pairs: a higher chosen
    /// ballot carrying a different value than a lower chosen one.
    fn violation(&self, majority: usize) -> Option<((Ballot, Value), (Ballot, Value))> {
        let chosen: Vec<(Ballot, Value)> = self.chosen(majority).collect();
        for (i, &(b1, v1)) in chosen.iter().enumerate() {
            for &(b2, v2) in &chosen[i + 1..] {
                if b1 < b2 && v1 != v2 {
                    return Some(((b1, v1), (b2, v2)));
                }
                if b2 < b1 && v1 != v2 {
                    return Some(((b2, v2), (b1, v1)));
                }
            }
        }
        None
    }
}

/// The vote event, if this step is an accept that the acceptor takes.
fn vote_event(pre: &Configuration, step: &TransitionStep) -> Option<(ActorName, Ballot, Value)> {
    let TransitionStep::Rcv(m) = step else {
        return None;
    };
    if m.kind != MessageKind::Accept2a {
        return None;
    }
    let state = pre.available().get(&m.receiver)?.as_acceptor()?;
    (m.ballot >= state.highest_seen).then(|| (m.receiver.clone(), m.ballot, m.value))
}

fn proposer_states(cfg: &Configuration) -> impl Iterator<Item = (&ActorName, &ProposerState)> {
    cfg.available()
        .iter()
        .chain(cfg.failed().iter())
        .filter_map(|(name, st)| st.as_proposer().map(|p| (name, p)))
}

/// Checks the agreement invariant: if (b, v) is chosen, every chosen pair
/// at a higher ballot carries the same value. Zero tolerance; the verdict
/// for a violation carries the offending path prefix.
pub fn check_safety(path: &Path) -> Verdict {
    let majority = majority_size(path.initial());
    let mut book = VoteBook::default();
    for (i, (step, _)) in path.steps().iter().enumerate() {
        let pre = path.config_at(i).expect("in-range index");
        if let Some((acceptor, ballot, value)) = vote_event(pre, step) {
            if book.record(acceptor, ballot, value, majority).is_some() {
                if let Some(((b1, v1), (b2, v2))) = book.violation(majority) {
                    return Verdict {
                        property: Property::Safety,
                        holds: false,
                        witness_index: Some(i + 1),
                        counterexample: Some(path.prefix(i + 1)),
                        detail: format!(
                            "chosen ({b1},{v1}) then chosen ({b2},{v2}) with different values"
                        ),
                    };
                }
            }
        }
    }
    Verdict {
        property: Property::Safety,
        holds: true,
        witness_index: None,
        counterexample: None,
        detail: format!("majority={majority}"),
    }
}

/// Progress: eventually some proposer learns that some ballot was chosen.
pub fn check_theorem1(path: &Path) -> Verdict {
    for (i, cfg) in path.configs().enumerate() {
        if let Some((name, p)) = proposer_states(cfg).find(|(_, p)| p.has_learned()) {
            let (ballot, value) = p.learned.expect("has_learned");
            return Verdict::holds_at(
                Property::Theorem1,
                i,
                format!("proposer={name} ballot={ballot} value={value}"),
            );
        }
    }
    Verdict::fails(Property::Theorem1, "no proposer ever learned".into())
}

fn phase_predicate_index(
    path: &Path,
    proposer: &ActorName,
    ballot: Ballot,
    quorum: &BTreeSet<ActorName>,
    from: usize,
    votes: bool,
) -> Option<usize> {
    (from..=path.len()).find(|&i| {
        let cfg = path.config_at(i).expect("in-range index");
        let Some(p) = cfg.actor_state(proposer).and_then(ActorState::as_proposer) else {
            return false;
        };
        if p.current_ballot != ballot {
            return false;
        }
        let collected = if votes { &p.votes } else { &p.promises };
        quorum.iter().all(|a| collected.contains_key(a))
    })
}

/// Phase-1 progress: eventually `proposer` holds promises for `ballot`
/// from every member of `quorum`.
pub fn check_lemma1(
    path: &Path,
    proposer: &ActorName,
    ballot: Ballot,
    quorum: &BTreeSet<ActorName>,
) -> Verdict {
    let detail = format!("proposer={proposer} ballot={ballot}");
    match phase_predicate_index(path, proposer, ballot, quorum, 0, false) {
        Some(i) => Verdict::holds_at(Property::Lemma1, i, detail),
        None => Verdict::fails(
            Property::Lemma1,
            format!("{detail}: promise quorum never completed"),
        ),
    }
}

/// Phase-2 progress: after the promises are in, eventually `proposer`
/// holds votes for `ballot` from every member of `quorum`.
pub fn check_lemma2(
    path: &Path,
    proposer: &ActorName,
    ballot: Ballot,
    quorum: &BTreeSet<ActorName>,
) -> Verdict {
    let detail = format!("proposer={proposer} ballot={ballot}");
    let Some(p1) = phase_predicate_index(path, proposer, ballot, quorum, 0, false) else {
        return Verdict::fails(
            Property::Lemma2,
            format!("{detail}: precondition failed, no promise quorum"),
        );
    };
    match phase_predicate_index(path, proposer, ballot, quorum, p1, true) {
        Some(i) => Verdict::holds_at(Property::Lemma2, i, detail),
        None => Verdict::fails(
            Property::Lemma2,
            format!("{detail}: vote quorum never completed"),
        ),
    }
}

/// Counts re-proposals (a proposer superseding its own live round). The
/// verdict holds (livelock detected) when at least `threshold` occur and
/// nothing is ever learned anywhere in the path.
pub fn detect_livelock(path: &Path, threshold: usize) -> Verdict {
    let mut reproposals = 0usize;
    let mut crossing = None;
    for (i, (step, _)) in path.steps().iter().enumerate() {
        if let TransitionStep::Propose { proposer, .. } = step {
            let pre = path.config_at(i).expect("in-range index");
            let was_live = pre
                .actor_state(proposer)
                .and_then(ActorState::as_proposer)
                .is_some_and(|p| p.current_ballot > Ballot::ZERO);
            if was_live {
                reproposals += 1;
                if reproposals == threshold {
                    crossing = Some(i + 1);
                }
            }
        }
    }
    let learned = check_theorem1(path).holds;
    let detail = format!("reproposals={reproposals} threshold={threshold} learned={learned}");
    if !learned && reproposals >= threshold {
        Verdict {
            property: Property::Livelock,
            holds: true,
            witness_index: crossing,
            counterexample: None,
            detail,
        }
    } else {
        Verdict::fails(Property::Livelock, detail)
    }
}

/// Depth and size limits for [`explore`].
#[derive(Clone, Copy, Debug)]
pub struct ExploreLimits {
    pub max_depth: usize,
    pub state_cap: usize,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits {
            max_depth: 64,
            state_cap: 1_000_000,
        }
    }
}

/// What the explorer found.
#[derive(Clone, Debug)]
pub struct ExplorationReport {
    /// Distinct (configuration, vote history) states reached.
    pub states: usize,
    /// Edges traversed, including those into already-known states.
    pub transitions: usize,
    pub max_depth_reached: usize,
    /// States with no successors (quiescent) plus depth-cut leaves: one
    /// representative per maximal path class.
    pub terminals: usize,
    /// Terminals in which some proposer has learned.
    pub terminals_learned: usize,
    pub safety_ok: bool,
    pub first_violation: Option<String>,
    /// Local-knowledge soundness: learned implies a vote quorum implies a
    /// promise quorum, in every reached state.
    pub predicate_implications_ok: bool,
    /// Each terminal's path was rebuilt from parent pointers and replayed
    /// step-by-step through the transition semantics, digest-exact.
    pub replayed_paths: usize,
    pub replay_ok: bool,
    /// True when the state cap aborted the search; counts are partial.
    pub capped: bool,
    pub fairness_bound: u64,
    pub max_depth: usize,
    pub state_cap: usize,
    pub elapsed_ms: u128,
}

impl ExplorationReport {
    /// (terminals reaching a learned state, all terminals).
    pub fn learned_fraction(&self) -> (usize, usize) {
        (self.terminals_learned, self.terminals)
    }

    pub fn all_terminals_learn(&self) -> bool {
        self.terminals > 0 && self.terminals_learned == self.terminals
    }

    /// Line-oriented report text. The elapsed-time line is the only
    /// nondeterministic part.
    pub fn to_report_text(&self, scenario_digest: u64) -> String {
        let mut out = String::new();
        out.push_str("synodsim-report v1\n");
        writeln!(out, "scenario|{}", crate::trace::digest_hex(scenario_digest)).unwrap();
        writeln!(
            out,
            "params|depth={};state_cap={};fairness_bound={}",
            self.max_depth, self.state_cap, self.fairness_bound
        )
        .unwrap();
        writeln!(out, "states|{}", self.states).unwrap();
        writeln!(out, "transitions|{}", self.transitions).unwrap();
        writeln!(out, "max_depth|{}", self.max_depth_reached).unwrap();
        writeln!(out, "terminals|{}", self.terminals).unwrap();
        writeln!(out, "terminals_learned|{}", self.terminals_learned).unwrap();
        writeln!(
            out,
            "learned_fraction|{}/{}",
            self.terminals_learned, self.terminals
        )
        .unwrap();
        writeln!(out, "safety|{}", self.safety_ok).unwrap();
        if let Some(v) = &self.first_violation {
            writeln!(out, "violation|{v}").unwrap();
        }
        writeln!(out, "implications|{}", self.predicate_implications_ok).unwrap();
        writeln!(
            out,
            "replayed|{} ok={}",
            self.replayed_paths, self.replay_ok
        )
        .unwrap();
        writeln!(out, "capped|{}", self.capped).unwrap();
        writeln!(out, "elapsed_ms|{}", self.elapsed_ms).unwrap();
        out
    }
}

struct Node {
    config: Configuration,
    votes: VoteBook,
    depth: usize,
    parent: Option<(usize, TransitionStep)>,
}

/// A proposer's live round can no longer complete: some quorum member has
/// moved past its ballot and will never promise or vote for it.
fn round_dead(p: &ProposerState, cfg: &Configuration) -> bool {
    p.target_quorum.iter().any(|a| {
        cfg.actor_state(a)
            .and_then(ActorState::as_acceptor)
            .is_some_and(|st| st.highest_seen > p.current_ballot)
    })
}

/// The successor steps the explorer branches on: every enabled send and
/// receive, plus a proposal for any proposer that has not opened yet, and
/// a retry for any proposer whose round is provably dead. Failures are
/// scenario-driven, not explored.
fn explore_steps(cfg: &Configuration, scenario: &Scenario) -> Vec<TransitionStep> {
    let mut steps: Vec<TransitionStep> = cfg.enabled_base_steps().into_iter().collect();
    for (name, st) in cfg.available() {
        let Some(p) = st.as_proposer() else { continue };
        if p.has_learned() {
            continue;
        }
        let wants = p.current_ballot == Ballot::ZERO || round_dead(p, cfg);
        if wants {
            steps.push(TransitionStep::Propose {
                proposer: name.clone(),
                ballot: p.next_ballot(),
                quorum: scenario.quorum_of(name),
            });
        }
    }
    steps
}

fn implications_hold(cfg: &Configuration) -> bool {
    proposer_states(cfg).all(|(_, p)| {
        let (phi, big_phi, learned) = p.quorum_predicates();
        (!learned || big_phi) && (!big_phi || phi)
    })
}

/// Exhaustive bounded exploration of a scenario's reachable interleavings.
///
/// Runs breadth-first from the fresh initial configuration. Exploration
/// covers base-level steps and the gated proposals described at
/// [`explore_steps`]; every interleaving of those steps is visited, so the
/// fairness bound recorded in the report is vacuous whenever maximal paths
/// are shorter than it (true for the small instances this oracle is for).
pub fn explore(scenario: &Scenario, limits: &ExploreLimits) -> ExplorationReport {
    let start = Instant::now();
    let majority = scenario.majority_size();
    let initial = scenario.initial_configuration();

    let mut report = ExplorationReport {
        states: 0,
        transitions: 0,
        max_depth_reached: 0,
        terminals: 0,
        terminals_learned: 0,
        safety_ok: true,
        first_violation: None,
        predicate_implications_ok: true,
        replayed_paths: 0,
        replay_ok: true,
        capped: false,
        fairness_bound: scenario.fairness_bound,
        max_depth: limits.max_depth,
        state_cap: limits.state_cap,
        elapsed_ms: 0,
    };

    // Dedup by hash bucket with full equality check on collision; the
    // nodes vector is the only owner of the (configuration, votes) pairs.
    fn state_hash(config: &Configuration, votes: &VoteBook) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        config.hash(&mut hasher);
        votes.hash(&mut hasher);
        hasher.finish()
    }

    let mut nodes: Vec<Node> = vec![Node {
        config: initial.clone(),
        votes: VoteBook::default(),
        depth: 0,
        parent: None,
    }];
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    seen.insert(state_hash(&initial, &VoteBook::default()), vec![0]);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);
    let mut terminals: Vec<usize> = Vec::new();

    while let Some(id) = queue.pop_front() {
        if nodes.len() > limits.state_cap {
            report.capped = true;
            break;
        }
        let depth = nodes[id].depth;
        report.max_depth_reached = report.max_depth_reached.max(depth);
        if !implications_hold(&nodes[id].config) {
            report.predicate_implications_ok = false;
        }

        let steps = explore_steps(&nodes[id].config, scenario);
        if steps.is_empty() || depth >= limits.max_depth {
            terminals.push(id);
            continue;
        }
        for step in steps {
            report.transitions += 1;
            let config = nodes[id]
                .config
                .apply(&step)
                .expect("explorer enumerated a disabled step");
            let mut votes = nodes[id].votes.clone();
            if let Some((acceptor, ballot, value)) = vote_event(&nodes[id].config, &step) {
                if votes.record(acceptor, ballot, value, majority).is_some() {
                    if let Some(((b1, v1), (b2, v2))) = votes.violation(majority) {
                        report.safety_ok = false;
                        if report.first_violation.is_none() {
                            report.first_violation = Some(format!(
                                "depth {}: chosen ({b1},{v1}) then ({b2},{v2})",
                                depth + 1
                            ));
                        }
                    }
                }
            }
            let key = state_hash(&config, &votes);
            let bucket = seen.entry(key).or_default();
            let known = bucket
                .iter()
                .any(|&i| nodes[i].config == config && nodes[i].votes == votes);
            if !known {
                let child = nodes.len();
                bucket.push(child);
                nodes.push(Node {
                    config,
                    votes,
                    depth: depth + 1,
                    parent: Some((id, step)),
                });
                queue.push_back(child);
            }
        }
    }

    report.states = nodes.len();
    report.terminals = terminals.len();
    for &id in &terminals {
        let learned = proposer_states(&nodes[id].config).any(|(_, p)| p.has_learned());
        if learned {
            report.terminals_learned += 1;
        }
        // Rebuild this terminal's path from parent pointers and replay it.
        let mut rev = Vec::new();
        let mut cursor = id;
        while let Some((parent, step)) = &nodes[cursor].parent {
            rev.push(step.clone());
            cursor = *parent;
        }
        let mut path = Path::new(nodes[0].config.clone());
        let mut ok = true;
        for step in rev.into_iter().rev() {
            if path.extend(step).is_err() {
                ok = false;
                break;
            }
        }
        if ok {
            ok = config_digest(path.last_config()) == config_digest(&nodes[id].config)
                && path.verify_replay().is_ok();
        }
        if ok {
            report.replayed_paths += 1;
        } else {
            report.replay_ok = false;
        }
    }

    report.elapsed_ms = start.elapsed().as_millis();
    report
}
