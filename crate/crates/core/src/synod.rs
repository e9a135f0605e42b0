//! The Synod protocol: proposer and acceptor state machines.
//!
//! A single decree is decided in two phases. A proposer picks a fresh
//! ballot and asks a quorum of acceptors to promise it (prepare/promise);
//! once the whole quorum has promised, it asks the same quorum to vote for
//! a value (accept/voted). The value is constrained by the promises: if any
//! acceptor reported a previously accepted pair, the proposer must adopt
//! the value of the highest-ballot report; only when every promise is
//! "fresh" may it push its own value.
//!
//! Handlers here are pure: they read and produce only the local state of
//! one actor (plus its outbox of messages it is obligated to send). All
//! cross-actor effects flow through the [`crate::fam`] transition rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::actor::{ActorName, Role};
use crate::multiset::Multiset;

/// A proposal number. Ballots are totally ordered; higher supersedes lower.
///
/// `Ballot(0)` is reserved as "nothing yet": fresh acceptors start with
/// `highest_seen = Ballot::ZERO` and fresh proposers with
/// `current_ballot = Ballot::ZERO`, so every real proposal uses a ballot
/// of at least 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ballot(pub u64);

impl Ballot {
    pub const ZERO: Ballot = Ballot(0);
}

impl fmt::Display for Ballot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A consensus value. `Nil` is the null placeholder carried by prepare
/// messages; accept and voted messages always carry a concrete value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Nil,
    Num(u64),
}

impl Value {
    pub fn is_nil(&self) -> bool {
        matches!(self, Value::Nil)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nil => f.write_str("-"),
            Value::Num(n) => n.fmt(f),
        }
    }
}

/// The four Synod message kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    /// Phase 1a: a proposer asks an acceptor to promise a ballot.
    Prepare1a,
    /// Phase 1b: the acceptor's promise, carrying its prior accept if any.
    Promise1b,
    /// Phase 2a: the proposer asks the quorum to accept (ballot, value).
    Accept2a,
    /// Phase 2b: the acceptor's vote for (ballot, value).
    Voted2b,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::Prepare1a => "1a",
            MessageKind::Promise1b => "1b",
            MessageKind::Accept2a => "2a",
            MessageKind::Voted2b => "2b",
        }
    }
}

/// A protocol message.
///
/// The wire tuple is (sender, receiver, kind, ballot, value); promises
/// additionally carry the acceptor's prior accepted pair in `prior` rather
/// than overloading `value`, so the value-selection rule has unambiguous
/// inputs. `prior` is `None` exactly when the acceptor had accepted
/// nothing.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message {
    pub sender: ActorName,
    pub receiver: ActorName,
    pub kind: MessageKind,
    pub ballot: Ballot,
    pub value: Value,
    pub prior: Option<(Ballot, Value)>,
}

impl Message {
    pub fn prepare(sender: ActorName, receiver: ActorName, ballot: Ballot) -> Self {
        Message {
            sender,
            receiver,
            kind: MessageKind::Prepare1a,
            ballot,
            value: Value::Nil,
            prior: None,
        }
    }

    pub fn promise(
        sender: ActorName,
        receiver: ActorName,
        ballot: Ballot,
        prior: Option<(Ballot, Value)>,
    ) -> Self {
        Message {
            sender,
            receiver,
            kind: MessageKind::Promise1b,
            ballot,
            value: Value::Nil,
            prior,
        }
    }

    pub fn accept(sender: ActorName, receiver: ActorName, ballot: Ballot, value: Value) -> Self {
        debug_assert!(!value.is_nil());
        Message {
            sender,
            receiver,
            kind: MessageKind::Accept2a,
            ballot,
            value,
            prior: None,
        }
    }

    pub fn voted(sender: ActorName, receiver: ActorName, ballot: Ballot, value: Value) -> Self {
        debug_assert!(!value.is_nil());
        Message {
            sender,
            receiver,
            kind: MessageKind::Voted2b,
            ballot,
            value,
            prior: None,
        }
    }

    /// Actor names this message mentions (for configuration well-formedness).
    pub fn referenced_actors(&self) -> impl Iterator<Item = &ActorName> {
        [&self.sender, &self.receiver].into_iter()
    }
}

/// Raised by [`ProposerState::propose`] when the new ballot does not
/// supersede the current one.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("stale ballot: proposed {proposed} but current ballot is {current}")]
pub struct StaleBallot {
    pub proposed: Ballot,
    pub current: Ballot,
}

/// Acceptor-local state: the `(unresponded, highest_seen, accepted)` tuple
/// plus the outbox of replies it is obligated to send.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AcceptorState {
    /// Messages received but not yet responded to. Receipt and response are
    /// one atomic handler step, so this drains within the same transition;
    /// it is kept explicit so the local-state tuple is fully represented.
    pub unresponded: BTreeSet<Message>,
    /// Highest ballot seen in any prepare or accept.
    pub highest_seen: Ballot,
    /// The (ballot, value) of the highest proposal accepted, if any.
    pub accepted: Option<(Ballot, Value)>,
    /// Replies not yet handed to the transport.
    pub outbox: Multiset<Message>,
}

impl AcceptorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Handles a delivered prepare request.
    ///
    /// Promises exactly when the ballot strictly exceeds everything seen so
    /// far; the promise reports the prior accepted pair (absent on a fresh
    /// acceptor). Lower or equal ballots are dropped silently; retrying is
    /// the proposer's job.
    pub fn handle_prepare(&self, own_name: &ActorName, m: &Message) -> AcceptorState {
        debug_assert_eq!(m.kind, MessageKind::Prepare1a);
        let mut next = self.clone();
        next.unresponded.remove(m);
        if m.ballot > self.highest_seen {
            next.highest_seen = m.ballot;
            next.outbox.insert(Message::promise(
                own_name.clone(),
                m.sender.clone(),
                m.ballot,
                self.accepted,
            ));
        }
        next
    }

    /// Handles a delivered accept request.
    ///
    /// Votes exactly when the ballot is at least the highest seen (equality
    /// is the normal promised-round case); voting records the accepted pair
    /// and raises `highest_seen`.
    pub fn handle_accept(&self, own_name: &ActorName, m: &Message) -> AcceptorState {
        debug_assert_eq!(m.kind, MessageKind::Accept2a);
        let mut next = self.clone();
        next.unresponded.remove(m);
        if m.ballot >= self.highest_seen {
            next.highest_seen = m.ballot;
            next.accepted = Some((m.ballot, m.value));
            next.outbox.insert(Message::voted(
                own_name.clone(),
                m.sender.clone(),
                m.ballot,
                m.value,
            ));
        }
        next
    }

    pub fn referenced_actors(&self) -> impl Iterator<Item = &ActorName> {
        self.unresponded
            .iter()
            .flat_map(Message::referenced_actors)
            .chain(self.outbox.distinct().flat_map(Message::referenced_actors))
    }
}

/// Proposer-local state for the round it is currently driving.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProposerState {
    /// The value this proposer wants if the promises leave it free to choose.
    pub own_value: Value,
    /// Ballot of the round in progress (`Ballot::ZERO` before any proposal).
    pub current_ballot: Ballot,
    /// The quorum this round targets.
    pub target_quorum: BTreeSet<ActorName>,
    /// Promises collected for `current_ballot`, keyed by acceptor.
    pub promises: BTreeMap<ActorName, Message>,
    /// Votes collected for `current_ballot`, keyed by acceptor.
    pub votes: BTreeMap<ActorName, Message>,
    /// Set once a full quorum has voted: consensus observed.
    pub learned: Option<(Ballot, Value)>,
    /// Messages not yet handed to the transport.
    pub outbox: Multiset<Message>,
    /// Ballot arithmetic: this proposer draws from the residue class
    /// `ballot_offset` modulo `ballot_stride`, so distinct proposers can
    /// never collide.
    pub ballot_stride: u64,
    pub ballot_offset: u64,
}

impl ProposerState {
    pub fn new(own_value: Value, ballot_stride: u64, ballot_offset: u64) -> Self {
        debug_assert!(ballot_stride > 0 && ballot_offset < ballot_stride);
        debug_assert!(!own_value.is_nil());
        ProposerState {
            own_value,
            current_ballot: Ballot::ZERO,
            target_quorum: BTreeSet::new(),
            promises: BTreeMap::new(),
            votes: BTreeMap::new(),
            learned: None,
            outbox: Multiset::new(),
            ballot_stride,
            ballot_offset,
        }
    }

    /// The smallest ballot in this proposer's residue class that is both
    /// positive and strictly above the current ballot.
    pub fn next_ballot(&self) -> Ballot {
        self.next_ballot_at_least(self.current_ballot.0 + 1)
    }

    /// Like [`Self::next_ballot`], but no smaller than `floor`.
    pub fn next_ballot_at_least(&self, floor: u64) -> Ballot {
        let n = self.ballot_stride;
        let i = self.ballot_offset;
        let lo = floor.max(self.current_ballot.0 + 1).max(1);
        let mut b = (lo / n) * n + i;
        if b < lo {
            b += n;
        }
        Ballot(b)
    }

    /// Starts (or restarts) a round at ballot `b` targeting quorum `quorum`.
    ///
    /// Collected promises and votes belong to the superseded round and are
    /// cleared; the outbox gains one prepare per quorum member.
    pub fn propose(
        &self,
        own_name: &ActorName,
        b: Ballot,
        quorum: &BTreeSet<ActorName>,
    ) -> Result<ProposerState, StaleBallot> {
        if b <= self.current_ballot {
            return Err(StaleBallot {
                proposed: b,
                current: self.current_ballot,
            });
        }
        let mut next = self.clone();
        next.current_ballot = b;
        next.target_quorum = quorum.clone();
        next.promises.clear();
        next.votes.clear();
        for acceptor in quorum {
            next.outbox
                .insert(Message::prepare(own_name.clone(), acceptor.clone(), b));
        }
        Ok(next)
    }

    /// Handles a delivered promise.
    ///
    /// Promises for superseded ballots are discarded. Recording is keyed by
    /// sender, so duplicate deliveries are idempotent; the accept round is
    /// emitted exactly once, at the moment the quorum becomes complete.
    pub fn handle_promise(&self, own_name: &ActorName, m: &Message) -> ProposerState {
        debug_assert_eq!(m.kind, MessageKind::Promise1b);
        if m.ballot != self.current_ballot {
            return self.clone();
        }
        let had_quorum = self.has_promise_quorum();
        let mut next = self.clone();
        next.promises.insert(m.sender.clone(), m.clone());
        if !had_quorum && next.has_promise_quorum() {
            let value = next.decide_value();
            for acceptor in &next.target_quorum {
                next.outbox.insert(Message::accept(
                    own_name.clone(),
                    acceptor.clone(),
                    next.current_ballot,
                    value,
                ));
            }
        }
        next
    }

    /// The value the accept round must carry: the value attached to the
    /// highest-ballot prior accept among the collected promises, or this
    /// proposer's own value when every promise was fresh.
    pub fn decide_value(&self) -> Value {
        self.promises
            .values()
            .filter_map(|m| m.prior)
            .max_by_key(|(ballot, _)| *ballot)
            .map(|(_, value)| value)
            .unwrap_or(self.own_value)
    }

    /// Handles a delivered vote. Once the full target quorum has voted the
    /// round's value, the proposer has learned the decree; later votes are
    /// ignored outright.
    pub fn handle_voted(&self, m: &Message) -> ProposerState {
        debug_assert_eq!(m.kind, MessageKind::Voted2b);
        if m.ballot != self.current_ballot || self.learned.is_some() {
            return self.clone();
        }
        let mut next = self.clone();
        next.votes.insert(m.sender.clone(), m.clone());
        if next.has_vote_quorum() {
            next.learned = Some((next.current_ballot, m.value));
        }
        next
    }

    /// Promises cover the target quorum for the current round.
    pub fn has_promise_quorum(&self) -> bool {
        !self.target_quorum.is_empty()
            && self
                .target_quorum
                .iter()
                .all(|a| self.promises.contains_key(a))
    }

    /// Votes cover the target quorum for the current round.
    pub fn has_vote_quorum(&self) -> bool {
        !self.target_quorum.is_empty() && self.target_quorum.iter().all(|a| self.votes.contains_key(a))
    }

    pub fn has_learned(&self) -> bool {
        self.learned.is_some()
    }

    /// The three quorum predicates in one shot:
    /// (promise quorum, vote quorum, learned).
    pub fn quorum_predicates(&self) -> (bool, bool, bool) {
        (
            self.has_promise_quorum(),
            self.has_vote_quorum(),
            self.has_learned(),
        )
    }

    pub fn referenced_actors(&self) -> impl Iterator<Item = &ActorName> {
        self.target_quorum
            .iter()
            .chain(self.promises.keys())
            .chain(self.votes.keys())
            .chain(self.outbox.distinct().flat_map(Message::referenced_actors))
    }
}

/// The protocol state of one actor; the variant is the actor's role.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorState {
    Proposer(ProposerState),
    Acceptor(AcceptorState),
}

impl ActorState {
    pub fn role(&self) -> Role {
        match self {
            ActorState::Proposer(_) => Role::Proposer,
            ActorState::Acceptor(_) => Role::Acceptor,
        }
    }

    pub fn outbox(&self) -> &Multiset<Message> {
        match self {
            ActorState::Proposer(p) => &p.outbox,
            ActorState::Acceptor(a) => &a.outbox,
        }
    }

    pub fn outbox_mut(&mut self) -> &mut Multiset<Message> {
        match self {
            ActorState::Proposer(p) => &mut p.outbox,
            ActorState::Acceptor(a) => &mut a.outbox,
        }
    }

    pub fn as_proposer(&self) -> Option<&ProposerState> {
        match self {
            ActorState::Proposer(p) => Some(p),
            ActorState::Acceptor(_) => None,
        }
    }

    pub fn as_acceptor(&self) -> Option<&AcceptorState> {
        match self {
            ActorState::Proposer(_) => None,
            ActorState::Acceptor(a) => Some(a),
        }
    }

    /// Runs the receive handler for a delivered message: the message enters
    /// the unresponded set, the role-appropriate rule fires, and the
    /// response (if any) lands in the outbox, all in one atomic step.
    /// Messages that make no sense for the role are swallowed.
    pub fn on_receive(&self, own_name: &ActorName, m: &Message) -> ActorState {
        match self {
            ActorState::Acceptor(a) => {
                let mut st = a.clone();
                st.unresponded.insert(m.clone());
                let next = match m.kind {
                    MessageKind::Prepare1a => st.handle_prepare(own_name, m),
                    MessageKind::Accept2a => st.handle_accept(own_name, m),
                    _ => {
                        st.unresponded.remove(m);
                        st
                    }
                };
                ActorState::Acceptor(next)
            }
            ActorState::Proposer(p) => {
                let next = match m.kind {
                    MessageKind::Promise1b => p.handle_promise(own_name, m),
                    MessageKind::Voted2b => p.handle_voted(m),
                    _ => p.clone(),
                };
                ActorState::Proposer(next)
            }
        }
    }

    pub fn referenced_actors(&self) -> Vec<&ActorName> {
        match self {
            ActorState::Proposer(p) => p.referenced_actors().collect(),
            ActorState::Acceptor(a) => a.referenced_actors().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1() -> ActorName {
        ActorName::proposer("P1")
    }

    fn acc(i: u32) -> ActorName {
        ActorName::acceptor(format!("A{i}"))
    }

    fn quorum(ids: &[u32]) -> BTreeSet<ActorName> {
        ids.iter().map(|&i| acc(i)).collect()
    }

    #[test]
    fn propose_loads_one_prepare_per_quorum_member() {
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let q = quorum(&[1, 2]);
        let p = p.propose(&p1(), Ballot(1), &q).unwrap();
        assert_eq!(p.current_ballot, Ballot(1));
        assert_eq!(p.outbox.len(), 2);
        for (m, n) in p.outbox.iter() {
            assert_eq!(n, 1);
            assert_eq!(m.kind, MessageKind::Prepare1a);
            assert_eq!(m.ballot, Ballot(1));
            assert_eq!(m.value, Value::Nil);
            assert_eq!(m.sender, p1());
            assert!(q.contains(&m.receiver));
        }
    }

    #[test]
    fn propose_to_three_acceptors_emits_three_prepares() {
        let p = ProposerState::new(Value::Num(7), 1, 0);
        let q = quorum(&[1, 2, 3]);
        let p = p.propose(&p1(), Ballot(1), &q).unwrap();
        assert_eq!(p.outbox.len(), 3);
    }

    #[test]
    fn repropose_clears_round_bookkeeping() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 2, 0);
        let p = p.propose(&p1(), Ballot(2), &q).unwrap();
        let promise = Message::promise(acc(1), p1(), Ballot(2), None);
        let p = p.handle_promise(&p1(), &promise);
        assert_eq!(p.promises.len(), 1);

        let p = p.propose(&p1(), Ballot(4), &q).unwrap();
        assert!(p.promises.is_empty());
        assert!(p.votes.is_empty());
        assert_eq!(p.current_ballot, Ballot(4));
    }

    #[test]
    fn propose_rejects_stale_ballot() {
        let q = quorum(&[1]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let p = p.propose(&p1(), Ballot(3), &q).unwrap();
        let err = p.propose(&p1(), Ballot(3), &q).unwrap_err();
        assert_eq!(
            err,
            StaleBallot {
                proposed: Ballot(3),
                current: Ballot(3)
            }
        );
    }

    #[test]
    fn next_ballot_respects_residue_class() {
        let mut p = ProposerState::new(Value::Num(1), 2, 0);
        assert_eq!(p.next_ballot(), Ballot(2));

        let mut q = ProposerState::new(Value::Num(2), 2, 1);
        q.current_ballot = Ballot(3);
        assert_eq!(q.next_ballot(), Ballot(5));

        p.current_ballot = Ballot(2);
        assert_eq!(p.next_ballot(), Ballot(4));
    }

    #[test]
    fn next_ballot_streams_are_disjoint() {
        // Enumerate the first 100 ballots of each of two proposers and
        // intersect: the residue-class scheme must keep them apart.
        let mut seen = [BTreeSet::new(), BTreeSet::new()];
        for (i, out) in seen.iter_mut().enumerate() {
            let mut p = ProposerState::new(Value::Num(1), 2, i as u64);
            for _ in 0..100 {
                let b = p.next_ballot();
                out.insert(b);
                p.current_ballot = b;
            }
        }
        assert!(seen[0].is_disjoint(&seen[1]));
    }

    #[test]
    fn prepare_above_highest_promises_with_prior() {
        let a = AcceptorState {
            highest_seen: Ballot(2),
            accepted: Some((Ballot(2), Value::Num(5))),
            ..AcceptorState::new()
        };
        let m = Message::prepare(p1(), acc(1), Ballot(3));
        let next = a.handle_prepare(&acc(1), &m);
        assert_eq!(next.highest_seen, Ballot(3));
        let reply = next.outbox.distinct().next().unwrap();
        assert_eq!(reply.kind, MessageKind::Promise1b);
        assert_eq!(reply.ballot, Ballot(3));
        assert_eq!(reply.prior, Some((Ballot(2), Value::Num(5))));
    }

    #[test]
    fn prepare_at_equal_ballot_is_ignored() {
        let a = AcceptorState {
            highest_seen: Ballot(3),
            ..AcceptorState::new()
        };
        let m = Message::prepare(p1(), acc(1), Ballot(3));
        let next = a.handle_prepare(&acc(1), &m);
        assert!(next.outbox.is_empty());
        assert_eq!(next.highest_seen, Ballot(3));
    }

    #[test]
    fn fresh_acceptor_promises_default() {
        let a = AcceptorState::new();
        let m = Message::prepare(p1(), acc(1), Ballot(1));
        let next = a.handle_prepare(&acc(1), &m);
        let reply = next.outbox.distinct().next().unwrap();
        assert_eq!(reply.prior, None);
        assert_eq!(next.highest_seen, Ballot(1));
    }

    #[test]
    fn accept_at_promised_ballot_votes() {
        let a = AcceptorState {
            highest_seen: Ballot(3),
            ..AcceptorState::new()
        };
        let m = Message::accept(p1(), acc(1), Ballot(3), Value::Num(9));
        let next = a.handle_accept(&acc(1), &m);
        assert_eq!(next.accepted, Some((Ballot(3), Value::Num(9))));
        let reply = next.outbox.distinct().next().unwrap();
        assert_eq!(reply.kind, MessageKind::Voted2b);
        assert_eq!(reply.value, Value::Num(9));
    }

    #[test]
    fn accept_below_highest_is_ignored() {
        let a = AcceptorState {
            highest_seen: Ballot(5),
            ..AcceptorState::new()
        };
        let m = Message::accept(p1(), acc(1), Ballot(3), Value::Num(9));
        let next = a.handle_accept(&acc(1), &m);
        assert_eq!(next.accepted, None);
        assert!(next.outbox.is_empty());
        assert_eq!(next.highest_seen, Ballot(5));
    }

    #[test]
    fn fresh_acceptor_votes_for_first_accept() {
        let a = AcceptorState::new();
        let m = Message::accept(p1(), acc(1), Ballot(1), Value::Num(4));
        let next = a.handle_accept(&acc(1), &m);
        assert_eq!(next.accepted, Some((Ballot(1), Value::Num(4))));
        assert_eq!(next.outbox.len(), 1);
    }

    #[test]
    fn promise_quorum_completion_emits_accepts_once() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let p = p.propose(&p1(), Ballot(1), &q).unwrap();

        let p = p.handle_promise(&p1(), &Message::promise(acc(1), p1(), Ballot(1), None));
        assert!(!p.has_promise_quorum());
        let accepts_before = count_kind(&p.outbox, MessageKind::Accept2a);
        assert_eq!(accepts_before, 0);

        let p = p.handle_promise(&p1(), &Message::promise(acc(2), p1(), Ballot(1), None));
        assert!(p.has_promise_quorum());
        assert_eq!(count_kind(&p.outbox, MessageKind::Accept2a), 2);

        // Duplicate delivery: no double emission.
        let p = p.handle_promise(&p1(), &Message::promise(acc(1), p1(), Ballot(1), None));
        assert_eq!(count_kind(&p.outbox, MessageKind::Accept2a), 2);
    }

    #[test]
    fn stale_promise_is_discarded() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let p = p.propose(&p1(), Ballot(2), &q).unwrap();
        let stale = Message::promise(acc(1), p1(), Ballot(1), None);
        let next = p.handle_promise(&p1(), &stale);
        assert_eq!(next, p);
    }

    #[test]
    fn decide_value_takes_highest_prior() {
        let q = quorum(&[1, 2, 3]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let mut p = p.propose(&p1(), Ballot(7), &q).unwrap();
        p.promises.insert(
            acc(1),
            Message::promise(acc(1), p1(), Ballot(7), Some((Ballot(2), Value::Num(100)))),
        );
        p.promises.insert(
            acc(2),
            Message::promise(acc(2), p1(), Ballot(7), Some((Ballot(5), Value::Num(200)))),
        );
        p.promises
            .insert(acc(3), Message::promise(acc(3), p1(), Ballot(7), None));
        assert_eq!(p.decide_value(), Value::Num(200));
    }

    #[test]
    fn decide_value_defaults_to_own_value() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let mut p = p.propose(&p1(), Ballot(1), &q).unwrap();
        p.promises
            .insert(acc(1), Message::promise(acc(1), p1(), Ballot(1), None));
        p.promises
            .insert(acc(2), Message::promise(acc(2), p1(), Ballot(1), None));
        assert_eq!(p.decide_value(), Value::Num(10));
    }

    #[test]
    fn decide_value_single_prior() {
        let q = quorum(&[1]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let mut p = p.propose(&p1(), Ballot(2), &q).unwrap();
        p.promises.insert(
            acc(1),
            Message::promise(acc(1), p1(), Ballot(2), Some((Ballot(1), Value::Num(33)))),
        );
        assert_eq!(p.decide_value(), Value::Num(33));
    }

    #[test]
    fn vote_quorum_sets_learned() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let p = p.propose(&p1(), Ballot(1), &q).unwrap();
        let p = p.handle_voted(&Message::voted(acc(1), p1(), Ballot(1), Value::Num(10)));
        assert!(p.learned.is_none());
        let p = p.handle_voted(&Message::voted(acc(2), p1(), Ballot(1), Value::Num(10)));
        assert_eq!(p.learned, Some((Ballot(1), Value::Num(10))));
    }

    #[test]
    fn stale_vote_is_ignored() {
        let q = quorum(&[1]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let p = p.propose(&p1(), Ballot(2), &q).unwrap();
        let next = p.handle_voted(&Message::voted(acc(1), p1(), Ballot(1), Value::Num(10)));
        assert_eq!(next, p);
    }

    #[test]
    fn votes_after_learning_change_nothing() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let p = p.propose(&p1(), Ballot(1), &q).unwrap();
        let p = p.handle_voted(&Message::voted(acc(1), p1(), Ballot(1), Value::Num(10)));
        let p = p.handle_voted(&Message::voted(acc(2), p1(), Ballot(1), Value::Num(10)));
        assert!(p.has_learned());
        let after = p.handle_voted(&Message::voted(acc(3), p1(), Ballot(1), Value::Num(10)));
        assert_eq!(after, p);
    }

    #[test]
    fn quorum_predicates_track_containment() {
        let q = quorum(&[1, 2]);
        let p = ProposerState::new(Value::Num(10), 1, 0);
        let mut p = p.propose(&p1(), Ballot(1), &q).unwrap();
        assert_eq!(p.quorum_predicates(), (false, false, false));
        p.promises
            .insert(acc(1), Message::promise(acc(1), p1(), Ballot(1), None));
        assert_eq!(p.quorum_predicates(), (false, false, false));
        p.promises
            .insert(acc(2), Message::promise(acc(2), p1(), Ballot(1), None));
        assert_eq!(p.quorum_predicates(), (true, false, false));
    }

    #[test]
    fn acceptor_highest_seen_is_monotone_under_message_fuzz() {
        // Feed an acceptor a deterministic pseudo-random message soup and
        // watch the two local invariants: highest_seen never decreases and
        // accepted.ballot never exceeds highest_seen.
        let mut st = ActorState::Acceptor(AcceptorState::new());
        let me = acc(1);
        let mut x: u64 = 0x9e3779b97f4a7c15;
        for _ in 0..2000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let b = Ballot(1 + x % 12);
            let m = if x & 1 == 0 {
                Message::prepare(p1(), me.clone(), b)
            } else {
                Message::accept(p1(), me.clone(), b, Value::Num(x % 5 + 1))
            };
            let before = st.as_acceptor().unwrap().highest_seen;
            st = st.on_receive(&me, &m);
            let a = st.as_acceptor().unwrap();
            assert!(a.highest_seen >= before);
            if let Some((ab, _)) = a.accepted {
                assert!(ab <= a.highest_seen);
            }
        }
    }

    #[test]
    fn promise_obligation_blocks_lower_votes() {
        // After promising ballot b, the acceptor must never vote for b' < b.
        let me = acc(1);
        let a = AcceptorState::new();
        let a = a.handle_prepare(&me, &Message::prepare(p1(), me.clone(), Ballot(5)));
        let promised = a.highest_seen;

        let mut x: u64 = 42;
        let mut st = a;
        for _ in 0..500 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
            let b = Ballot(1 + x % 10);
            let before_votes: Vec<Message> = st
                .outbox
                .distinct()
                .filter(|m| m.kind == MessageKind::Voted2b)
                .cloned()
                .collect();
            st = st.handle_accept(&me, &Message::accept(p1(), me.clone(), b, Value::Num(1)));
            for m in st.outbox.distinct() {
                if m.kind == MessageKind::Voted2b && !before_votes.contains(m) {
                    assert!(m.ballot >= promised, "voted {} below promise {}", m.ballot, promised);
                }
            }
        }
    }

    fn count_kind(outbox: &Multiset<Message>, kind: MessageKind) -> u64 {
        outbox
            .iter()
            .filter(|(m, _)| m.kind == kind)
            .map(|(_, n)| n)
            .sum()
    }
}
