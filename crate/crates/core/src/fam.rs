//! The failure-aware actor model: configurations, transition steps, and
//! transition paths.
//!
//! A configuration is a snapshot of the whole system: a map of available
//! actors to their states, a map of failed actors to their (persistent)
//! states, and the multiset of messages en route. Failed actors can
//! neither send nor receive; stop/begin transitions move an actor between
//! the two maps with its state untouched: stable storage survives
//! failure.
//!
//! Five step kinds drive a run:
//!
//! * `Snd`: an available actor hands one obligated outbox message to the
//!   transport (the message joins the in-flight multiset).
//! * `Rcv`: an available actor consumes one in-flight message addressed
//!   to it; its receive handler runs atomically.
//! * `Stp` / `Bgn`: failure and restart, exempt from fairness.
//! * `Propose`: a proposer starts (or restarts) a round. Scheduling
//!   policies inject these; recording them as path steps is what makes
//!   every trace replayable step-for-step.
//!
//! Configurations are immutable values: applying a step returns a fresh
//! configuration, so paths are cheap to snapshot and replay.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::actor::ActorName;
use crate::multiset::Multiset;
use crate::synod::{ActorState, Ballot, Message};

/// Snapshot of the actor system at one instant.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    available: BTreeMap<ActorName, ActorState>,
    failed: BTreeMap<ActorName, ActorState>,
    in_flight: Multiset<Message>,
}

impl Configuration {
    pub fn new(
        available: BTreeMap<ActorName, ActorState>,
        failed: BTreeMap<ActorName, ActorState>,
        in_flight: Multiset<Message>,
    ) -> Self {
        Configuration {
            available,
            failed,
            in_flight,
        }
    }

    pub fn available(&self) -> &BTreeMap<ActorName, ActorState> {
        &self.available
    }

    pub fn failed(&self) -> &BTreeMap<ActorName, ActorState> {
        &self.failed
    }

    /// Messages en route.
    pub fn in_flight(&self) -> &Multiset<Message> {
        &self.in_flight
    }

    pub fn is_available(&self, actor: &ActorName) -> bool {
        self.available.contains_key(actor)
    }

    pub fn is_failed(&self, actor: &ActorName) -> bool {
        self.failed.contains_key(actor)
    }

    /// The actor's state regardless of availability.
    pub fn actor_state(&self, actor: &ActorName) -> Option<&ActorState> {
        self.available.get(actor).or_else(|| self.failed.get(actor))
    }

    /// Every actor in the roster, available or failed.
    pub fn roster(&self) -> impl Iterator<Item = &ActorName> {
        self.available.keys().chain(self.failed.keys())
    }

    fn name_bound(&self, name: &ActorName) -> bool {
        self.available.contains_key(name) || self.failed.contains_key(name)
    }

    /// Syntactic well-formedness:
    ///
    /// 1. every actor name referenced by any actor state is bound by the
    ///    available or failed map,
    /// 2. every name mentioned by an in-flight message is likewise bound,
    /// 3. the available and failed maps have disjoint domains.
    pub fn is_well_formed(&self) -> bool {
        let states_bound = self
            .available
            .values()
            .chain(self.failed.values())
            .all(|st| st.referenced_actors().into_iter().all(|n| self.name_bound(n)));
        let messages_bound = self
            .in_flight
            .distinct()
            .all(|m| m.referenced_actors().all(|n| self.name_bound(n)));
        let disjoint = self.available.keys().all(|n| !self.failed.contains_key(n));
        states_bound && messages_bound && disjoint
    }

    /// Is `step` enabled here?
    ///
    /// * `Snd`: the sender is available and its outbox holds that exact
    ///   message.
    /// * `Rcv`: the receiver is available and the message is en route.
    /// * `Stp`: the actor is available. `Bgn`: the actor is failed.
    /// * `Propose`: the proposer is available, the ballot supersedes its
    ///   current round, and the quorum is a non-empty set of acceptors
    ///   drawn from the roster.
    pub fn is_enabled(&self, step: &TransitionStep) -> bool {
        match step {
            TransitionStep::Snd(m) => self
                .available
                .get(&m.sender)
                .is_some_and(|st| st.outbox().contains(m)),
            TransitionStep::Rcv(m) => {
                self.available.contains_key(&m.receiver) && self.in_flight.contains(m)
            }
            TransitionStep::Stp(a) => self.available.contains_key(a),
            TransitionStep::Bgn(a) => self.failed.contains_key(a),
            TransitionStep::Propose {
                proposer,
                ballot,
                quorum,
            } => {
                let Some(ActorState::Proposer(p)) = self.available.get(proposer) else {
                    return false;
                };
                *ballot > p.current_ballot
                    && !quorum.is_empty()
                    && quorum.iter().all(|a| a.is_acceptor() && self.name_bound(a))
            }
        }
    }

    /// Applies an enabled step, returning the successor configuration.
    pub fn apply(&self, step: &TransitionStep) -> Result<Configuration, NotEnabled> {
        if !self.is_enabled(step) {
            return Err(NotEnabled(step.clone()));
        }
        let mut next = self.clone();
        match step {
            TransitionStep::Snd(m) => {
                let st = next.available.get_mut(&m.sender).unwrap();
                st.outbox_mut().remove_one(m);
                next.in_flight.insert(m.clone());
            }
            TransitionStep::Rcv(m) => {
                next.in_flight.remove_one(m);
                let st = next.available.get_mut(&m.receiver).unwrap();
                *st = st.on_receive(&m.receiver, m);
            }
            TransitionStep::Stp(a) => {
                let st = next.available.remove(a).unwrap();
                next.failed.insert(a.clone(), st);
            }
            TransitionStep::Bgn(a) => {
                let st = next.failed.remove(a).unwrap();
                next.available.insert(a.clone(), st);
            }
            TransitionStep::Propose {
                proposer,
                ballot,
                quorum,
            } => {
                let st = next.available.get_mut(proposer).unwrap();
                let ActorState::Proposer(p) = &*st else {
                    unreachable!("enabledness checked the role");
                };
                // Enabledness guarantees ballot > current, so this cannot
                // be stale.
                let p = p.propose(proposer, *ballot, quorum).unwrap();
                *st = ActorState::Proposer(p);
            }
        }
        debug_assert!(next.is_well_formed(), "apply broke well-formedness");
        Ok(next)
    }

    /// All enabled send and receive steps, in canonical order. These are
    /// the base-level steps scheduling policies choose among; stop/begin
    /// and propose steps are injected, not picked.
    pub fn enabled_base_steps(&self) -> BTreeSet<TransitionStep> {
        let mut steps = BTreeSet::new();
        for (name, st) in &self.available {
            debug_assert!(st.outbox().distinct().all(|m| m.sender == *name));
            for m in st.outbox().distinct() {
                steps.insert(TransitionStep::Snd(m.clone()));
            }
        }
        for m in self.in_flight.distinct() {
            if self.available.contains_key(&m.receiver) {
                steps.insert(TransitionStep::Rcv(m.clone()));
            }
        }
        steps
    }
}

/// One labelled transition.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransitionStep {
    /// An actor sends one obligated message.
    Snd(Message),
    /// An actor receives one in-flight message.
    Rcv(Message),
    /// An available actor fails.
    Stp(ActorName),
    /// A failed actor restarts in its persistent state.
    Bgn(ActorName),
    /// A proposer starts a round: fresh ballot, target quorum.
    Propose {
        proposer: ActorName,
        ballot: Ballot,
        quorum: BTreeSet<ActorName>,
    },
}

impl TransitionStep {
    /// Constructs a send step; the acting actor is the message's sender.
    pub fn snd(m: Message) -> Self {
        TransitionStep::Snd(m)
    }

    /// Constructs a receive step; the acting actor is the message's receiver.
    pub fn rcv(m: Message) -> Self {
        TransitionStep::Rcv(m)
    }

    /// The actor performing this step.
    pub fn actor(&self) -> &ActorName {
        match self {
            TransitionStep::Snd(m) => &m.sender,
            TransitionStep::Rcv(m) => &m.receiver,
            TransitionStep::Stp(a) | TransitionStep::Bgn(a) => a,
            TransitionStep::Propose { proposer, .. } => proposer,
        }
    }

    pub fn message(&self) -> Option<&Message> {
        match self {
            TransitionStep::Snd(m) | TransitionStep::Rcv(m) => Some(m),
            _ => None,
        }
    }

    /// Send or receive: the step kinds fairness assumptions apply to.
    pub fn is_base_level(&self) -> bool {
        matches!(self, TransitionStep::Snd(_) | TransitionStep::Rcv(_))
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            TransitionStep::Snd(_) => "snd",
            TransitionStep::Rcv(_) => "rcv",
            TransitionStep::Stp(_) => "stp",
            TransitionStep::Bgn(_) => "bgn",
            TransitionStep::Propose { .. } => "prop",
        }
    }
}

impl fmt::Display for TransitionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionStep::Snd(m) | TransitionStep::Rcv(m) => write!(
                f,
                "{} {} {}->{} b={}",
                self.kind_str(),
                m.kind.as_str(),
                m.sender,
                m.receiver,
                m.ballot
            ),
            TransitionStep::Stp(a) => write!(f, "stp {a}"),
            TransitionStep::Bgn(a) => write!(f, "bgn {a}"),
            TransitionStep::Propose {
                proposer, ballot, ..
            } => write!(f, "prop {proposer} b={ballot}"),
        }
    }
}

/// The step was not enabled in the configuration it was applied to.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("step not enabled: {0}")]
pub struct NotEnabled(pub TransitionStep);

/// An alternating sequence of configurations and steps: the record of a
/// run. Index `i` addresses the configuration after `i` steps, so index 0
/// is the initial configuration; these indices are the logical time every
/// "eventually" predicate quantifies over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    initial: Configuration,
    steps: Vec<(TransitionStep, Configuration)>,
}

impl Path {
    pub fn new(initial: Configuration) -> Self {
        Path {
            initial,
            steps: Vec::new(),
        }
    }

    /// Reassembles a path from raw parts without revalidating the apply
    /// relation; replay verification is a separate concern (see
    /// [`Path::verify_replay`] and the trace module).
    pub fn from_parts(initial: Configuration, steps: Vec<(TransitionStep, Configuration)>) -> Self {
        Path { initial, steps }
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn steps(&self) -> &[(TransitionStep, Configuration)] {
        &self.steps
    }

    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The configuration after the last step (the initial one if empty).
    pub fn last_config(&self) -> &Configuration {
        self.steps
            .last()
            .map(|(_, c)| c)
            .unwrap_or(&self.initial)
    }

    /// The configuration at logical time `index` (0 ..= len).
    pub fn config_at(&self, index: usize) -> Option<&Configuration> {
        if index == 0 {
            Some(&self.initial)
        } else {
            self.steps.get(index - 1).map(|(_, c)| c)
        }
    }

    /// Configurations in time order, initial first.
    pub fn configs(&self) -> impl Iterator<Item = &Configuration> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|(_, c)| c))
    }

    /// The prefix running through logical time `n` (i.e. the first `n`
    /// steps). `n >= len` returns the whole path.
    pub fn prefix(&self, n: usize) -> Path {
        Path {
            initial: self.initial.clone(),
            steps: self.steps.iter().take(n).cloned().collect(),
        }
    }

    /// Applies `step` to the last configuration and appends the result.
    pub fn extend(&mut self, step: TransitionStep) -> Result<(), NotEnabled> {
        let next = self.last_config().apply(&step)?;
        self.steps.push((step, next));
        Ok(())
    }

    /// Re-applies every step from the initial configuration and checks the
    /// recorded intermediates match bit for bit. Returns the first
    /// divergent step index on failure.
    pub fn verify_replay(&self) -> Result<(), usize> {
        let mut current = self.initial.clone();
        for (i, (step, recorded)) in self.steps.iter().enumerate() {
            match current.apply(step) {
                Ok(next) if next == *recorded => current = next,
                _ => return Err(i),
            }
        }
        Ok(())
    }
}
