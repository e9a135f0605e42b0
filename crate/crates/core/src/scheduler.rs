//! Drives runs: picks enabled steps under a scheduling policy, injects
//! failures and proposals at deterministic clocks, and records the path.
//!
//! The scheduler advances a clock one tick at a time. A tick either
//! injects a due event (failure-plan entry, protected or initial proposal,
//! patience retry), applies one base-level step chosen by the policy, or
//! idles when nothing is enabled but a future injection is still possible.
//! Idle ticks advance the clock without touching the configuration, so
//! retry patience and activation indices elapse even through quiet spells;
//! path indices count applied steps only.
//!
//! Fairness is realized concretely: the fair picker guarantees that no
//! base-level step stays continuously pending past the fairness bound
//! without being chosen. Stop/begin and propose injections are exempt;
//! fairness governs only sends and receives.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::actor::ActorName;
use crate::fam::{Configuration, Path, TransitionStep};
use crate::scenario::{FailureKind, IllFormedScenario, Policy, Scenario, StopRule};
use crate::synod::{ActorState, Ballot, ProposerState};

/// Why a run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StopCause {
    /// A proposer learned the decree (index = logical time of that config).
    Learned { proposer: ActorName, index: usize },
    /// The step/clock budget ran out.
    BudgetExhausted,
    /// Nothing enabled and no injection can ever fire again.
    Quiescent,
}

/// The result of a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub path: Path,
    /// The protected proposal `(proposer, ballot, quorum)` actually
    /// injected by a `cnd` policy, if any.
    pub protected: Option<(ActorName, Ballot, BTreeSet<ActorName>)>,
    pub stop: StopCause,
}

impl RunOutput {
    /// First logical time at which any proposer has learned, if ever.
    pub fn first_learned_index(&self) -> Option<usize> {
        self.path.configs().position(|cfg| {
            cfg.available()
                .values()
                .chain(cfg.failed().values())
                .any(|st| st.as_proposer().is_some_and(ProposerState::has_learned))
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    IllFormed(#[from] IllFormedScenario),
    /// A failure-plan entry could not be applied even though validation
    /// accepted the plan. Indicates plan/run divergence and aborts the run.
    #[error("failure plan entry at clock {at} for '{actor}' is not applicable")]
    PlanNotApplicable { at: u64, actor: ActorName },
}

/// Bounded-unfairness picker: tracks, per pending step, how many
/// consecutive selections it has been passed over while continuously
/// enabled. A step that reaches the bound is chosen before any random
/// pick; ties go to the higher age, then canonical step order.
#[derive(Clone, Debug)]
pub struct FairPicker {
    aging: BTreeMap<TransitionStep, u64>,
    bound: u64,
}

impl FairPicker {
    pub fn new(bound: u64) -> Self {
        FairPicker {
            aging: BTreeMap::new(),
            bound,
        }
    }

    /// Age of a step: selections it has been enabled-but-not-chosen.
    pub fn age(&self, step: &TransitionStep) -> u64 {
        self.aging.get(step).copied().unwrap_or(0)
    }

    pub fn pick(
        &mut self,
        pending: &BTreeSet<TransitionStep>,
        rng: &mut ChaCha8Rng,
    ) -> TransitionStep {
        assert!(!pending.is_empty(), "fair_pick needs a non-empty pending set");
        // A step that dropped out of the pending set lost continuity; its
        // age restarts if it ever comes back.
        self.aging.retain(|step, _| pending.contains(step));

        let mut overdue: Option<(&TransitionStep, u64)> = None;
        for (step, &age) in &self.aging {
            if age >= self.bound && overdue.is_none_or(|(_, best)| age > best) {
                overdue = Some((step, age));
            }
        }
        let chosen = match overdue {
            Some((step, _)) => step.clone(),
            None => {
                let index = (rng.next_u64() % pending.len() as u64) as usize;
                pending.iter().nth(index).unwrap().clone()
            }
        };
        for step in pending {
            if *step != chosen {
                *self.aging.entry(step.clone()).or_insert(0) += 1;
            }
        }
        self.aging.remove(&chosen);
        chosen
    }
}

/// Convenience free function mirroring the picker method; `aging` carries
/// the wait counters across calls.
pub fn fair_pick(
    pending: &BTreeSet<TransitionStep>,
    aging: &mut FairPicker,
    rng: &mut ChaCha8Rng,
) -> TransitionStep {
    aging.pick(pending, rng)
}

/// The protected-proposal window filter.
///
/// While `window_open`, any send or receive whose message carries a ballot
/// above `ballot` toward a member of `quorum` is withheld from the pending
/// set, so the protected proposal's prepare and accept rounds cannot be
/// interrupted at its quorum. Steps at or below the protected ballot are
/// never touched; with the window closed this is the identity.
pub fn cnd_filter(
    pending: &BTreeSet<TransitionStep>,
    ballot: Ballot,
    quorum: &BTreeSet<ActorName>,
    window_open: bool,
) -> BTreeSet<TransitionStep> {
    if !window_open {
        return pending.clone();
    }
    pending
        .iter()
        .filter(|step| match step.message() {
            Some(m) => !(m.ballot > ballot && quorum.contains(&m.receiver)),
            None => true,
        })
        .cloned()
        .collect()
}

/// Scripted dueling proposers.
///
/// The driver keeps one proposer "in turn": it injects that proposer's
/// next round, delivers only its phase-1 traffic until the quorum has
/// promised, and withholds its phase-2 sends. Then the turn swaps, the new
/// champion's higher-ballot phase 1 goes first, and the stale accepts get
/// flushed into deaf ears. Each proposer thus completes phase 1 after the
/// other's phase 1 but before the other's phase 2, forever.
#[derive(Clone, Debug)]
struct DuelDriver {
    proposers: [ActorName; 2],
    turn: usize,
    needs_proposal: bool,
}

enum DuelMove {
    Inject(TransitionStep),
    Pick(TransitionStep),
    Stuck,
}

impl DuelDriver {
    fn new(config: &Configuration, proposers: [ActorName; 2]) -> Self {
        // The proposer with the smaller upcoming ballot opens the duel.
        let next = |name: &ActorName| {
            config.available()[name]
                .as_proposer()
                .expect("duel proposer")
                .next_ballot()
        };
        let turn = if next(&proposers[0]) <= next(&proposers[1]) {
            0
        } else {
            1
        };
        DuelDriver {
            proposers,
            turn,
            needs_proposal: true,
        }
    }

    fn next_move(
        &mut self,
        config: &Configuration,
        pending: &BTreeSet<TransitionStep>,
        quorum_of: impl Fn(&ActorName) -> BTreeSet<ActorName>,
    ) -> DuelMove {
        let turn_name = self.proposers[self.turn].clone();
        let Some(state) = config.available().get(&turn_name) else {
            return DuelMove::Stuck;
        };
        let turn_state = state.as_proposer().expect("duel proposer");
        if self.needs_proposal {
            self.needs_proposal = false;
            return DuelMove::Inject(TransitionStep::Propose {
                proposer: turn_name.clone(),
                ballot: turn_state.next_ballot(),
                quorum: quorum_of(&turn_name),
            });
        }
        let turn_ballot = turn_state.current_ballot;

        // Phase-1 traffic of the round in turn goes first.
        let phase1 = pending.iter().find(|step| {
            step.message().is_some_and(|m| {
                m.ballot == turn_ballot
                    && matches!(
                        m.kind,
                        crate::synod::MessageKind::Prepare1a | crate::synod::MessageKind::Promise1b
                    )
            })
        });
        if let Some(step) = phase1 {
            return DuelMove::Pick(step.clone());
        }
        // Then stale leftovers (the rival's dead accepts, old promises).
        let stale = pending
            .iter()
            .find(|step| step.message().is_some_and(|m| m.ballot < turn_ballot));
        if let Some(step) = stale {
            return DuelMove::Pick(step.clone());
        }
        // Quorum promised and everything stale is flushed: hand the duel
        // to the rival. The round in turn never gets to send its accepts.
        if turn_state.has_promise_quorum() {
            self.turn ^= 1;
            self.needs_proposal = true;
            let rival = self.proposers[self.turn].clone();
            if let Some(ActorState::Proposer(p)) = config.available().get(&rival) {
                return DuelMove::Inject(TransitionStep::Propose {
                    proposer: rival.clone(),
                    ballot: p.next_ballot(),
                    quorum: quorum_of(&rival),
                });
            }
        }
        DuelMove::Stuck
    }
}

/// One scheduler clock advance.
#[derive(Debug, PartialEq, Eq)]
pub enum Tick {
    /// A step was applied and appended to the path.
    Stepped,
    /// Nothing enabled; the clock advanced anyway.
    Idle,
    /// The run is over.
    Done,
}

pub struct Runner {
    scenario: Scenario,
    policy: Policy,
    path: Path,
    clock: u64,
    rng: ChaCha8Rng,
    picker: FairPicker,
    rr_cursor: usize,
    duel: Option<DuelDriver>,
    plan_cursor: usize,
    /// Proposers that have had their opening proposal injected.
    opened: BTreeSet<ActorName>,
    /// Clock of each proposer's last state change.
    last_progress: BTreeMap<ActorName, u64>,
    protected: Option<(ActorName, Ballot, BTreeSet<ActorName>)>,
    stop: Option<StopCause>,
    error: Option<RunError>,
}

impl Runner {
    pub fn new(scenario: Scenario) -> Result<Self, IllFormedScenario> {
        scenario.validate()?;
        let path = Path::new(scenario.initial_configuration());
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let picker = FairPicker::new(scenario.fairness_bound);
        let policy = scenario.policy.clone();
        let mut runner = Runner {
            scenario,
            policy,
            path,
            clock: 0,
            rng,
            picker,
            rr_cursor: 0,
            duel: None,
            plan_cursor: 0,
            opened: BTreeSet::new(),
            last_progress: BTreeMap::new(),
            protected: None,
            stop: None,
            error: None,
        };
        runner.init_policy();
        Ok(runner)
    }

    fn init_policy(&mut self) {
        self.duel = match &self.policy {
            Policy::AdversarialDuel => {
                let names: Vec<ActorName> =
                    self.scenario.proposers().map(|a| a.name.clone()).collect();
                Some(DuelDriver::new(
                    self.path.last_config(),
                    [names[0].clone(), names[1].clone()],
                ))
            }
            _ => None,
        };
    }

    /// Swaps the scheduling policy mid-run. Used to demonstrate that the
    /// same prefix that duels forever makes progress once the protected
    /// window takes over.
    pub fn set_policy(&mut self, policy: Policy) {
        self.policy = policy;
        self.init_policy();
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn config(&self) -> &Configuration {
        self.path.last_config()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn is_done(&self) -> bool {
        self.stop.is_some() || self.error.is_some()
    }

    fn proposer_state(&self, name: &ActorName) -> Option<&ProposerState> {
        self.config().actor_state(name).and_then(ActorState::as_proposer)
    }

    fn learned_proposer(&self) -> Option<ActorName> {
        self.config()
            .available()
            .iter()
            .chain(self.config().failed().iter())
            .find(|(_, st)| st.as_proposer().is_some_and(ProposerState::has_learned))
            .map(|(name, _)| name.clone())
    }

    fn window_open(&self) -> bool {
        match (&self.policy, &self.protected) {
            (Policy::Cnd(_), Some((p, _, _))) => {
                !self.proposer_state(p).is_some_and(ProposerState::has_learned)
            }
            _ => false,
        }
    }

    /// Applies a step, appends it, advances the clock, and refreshes the
    /// acting proposer's progress stamp.
    fn commit(&mut self, step: TransitionStep) {
        let actor = step.actor().clone();
        self.path.extend(step).expect("scheduler picked a disabled step");
        self.clock += 1;
        if actor.is_proposer() {
            self.last_progress.insert(actor, self.clock);
        }
        if let Some(proposer) = self.learned_proposer() {
            let all_learned = self
                .scenario
                .proposers()
                .all(|a| self.proposer_state(&a.name).is_some_and(ProposerState::has_learned));
            if self.scenario.stop == StopRule::FirstLearn || all_learned {
                self.stop = Some(StopCause::Learned {
                    proposer,
                    index: self.path.len(),
                });
            }
        }
    }

    /// The one due injection for this tick, if any. Failure-plan entries
    /// outrank proposals; at most one injection fires per tick.
    fn due_injection(&mut self) -> Option<Result<TransitionStep, RunError>> {
        // Failure plan.
        if let Some(event) = self.scenario.failure_plan.get(self.plan_cursor) {
            if event.at <= self.clock {
                let step = match event.kind {
                    FailureKind::Stp => TransitionStep::Stp(event.actor.clone()),
                    FailureKind::Bgn => TransitionStep::Bgn(event.actor.clone()),
                };
                self.plan_cursor += 1;
                if !self.config().is_enabled(&step) {
                    return Some(Err(RunError::PlanNotApplicable {
                        at: event.at,
                        actor: event.actor.clone(),
                    }));
                }
                return Some(Ok(step));
            }
        }
        if matches!(self.policy, Policy::AdversarialDuel) {
            return None; // the duel driver injects its own proposals
        }
        // Protected proposal at activation.
        if let Policy::Cnd(cnd) = &self.policy {
            let cnd = cnd.clone();
            if self.protected.is_none()
                && self.clock >= cnd.activation
                && self.config().is_available(&cnd.proposer)
            {
                if let Some(p) = self.proposer_state(&cnd.proposer) {
                    let ballot = p.next_ballot_at_least(cnd.ballot.0);
                    self.protected = Some((cnd.proposer.clone(), ballot, cnd.quorum.clone()));
                    self.opened.insert(cnd.proposer.clone());
                    return Some(Ok(TransitionStep::Propose {
                        proposer: cnd.proposer,
                        ballot,
                        quorum: cnd.quorum,
                    }));
                }
            }
        }
        // Opening proposals, roster order, skipping the protected proposer
        // (its opening is the activation above).
        let protected_name = match &self.policy {
            Policy::Cnd(cnd) => Some(cnd.proposer.clone()),
            _ => None,
        };
        let opening = self
            .scenario
            .proposers()
            .map(|a| a.name.clone())
            .find(|name| {
                Some(name) != protected_name.as_ref()
                    && !self.opened.contains(name)
                    && self.config().is_available(name)
            });
        if let Some(name) = opening {
            let p = self.proposer_state(&name).expect("roster proposer");
            let step = TransitionStep::Propose {
                proposer: name.clone(),
                ballot: p.next_ballot(),
                quorum: self.scenario.quorum_of(&name),
            };
            self.opened.insert(name);
            return Some(Ok(step));
        }
        // Patience retry: a proposer whose state has not changed for
        // `patience` ticks re-proposes at its next ballot. The protected
        // proposer sits out while its window is open, since a retry would
        // climb past its own protected ballot.
        let window_open = self.window_open();
        let retry = self
            .scenario
            .proposers()
            .map(|a| a.name.clone())
            .find(|name| {
                if !self.opened.contains(name) || !self.config().is_available(name) {
                    return false;
                }
                if window_open && Some(name) == protected_name.as_ref() {
                    return false;
                }
                let Some(p) = self.proposer_state(name) else {
                    return false;
                };
                if p.has_learned() {
                    return false;
                }
                let last = self.last_progress.get(name).copied().unwrap_or(0);
                self.clock.saturating_sub(last) >= self.scenario.patience
            });
        if let Some(name) = retry {
            let p = self.proposer_state(&name).expect("roster proposer");
            return Some(Ok(TransitionStep::Propose {
                proposer: name.clone(),
                ballot: p.next_ballot(),
                quorum: self.scenario.quorum_of(&name),
            }));
        }
        None
    }

    /// Could anything still happen in the future if we idle now?
    fn injection_possible(&self) -> bool {
        if self.plan_cursor < self.scenario.failure_plan.len() {
            return true;
        }
        match &self.policy {
            Policy::AdversarialDuel => true,
            Policy::Cnd(_) if self.protected.is_none() => true,
            _ => {
                // An opening or retry will eventually fire for any proposer
                // that has not learned yet.
                self.scenario.proposers().any(|a| {
                    self.proposer_state(&a.name)
                        .is_some_and(|p| !p.has_learned())
                })
            }
        }
    }

    fn pick(&mut self, pending: &BTreeSet<TransitionStep>) -> TransitionStep {
        match &self.policy {
            Policy::FairRandom | Policy::Cnd(_) => self.picker.pick(pending, &mut self.rng),
            Policy::RoundRobin => {
                let roster: Vec<&ActorName> =
                    self.scenario.roster.iter().map(|a| &a.name).collect();
                for k in 0..roster.len() {
                    let actor = roster[(self.rr_cursor + k) % roster.len()];
                    if let Some(step) = pending.iter().find(|s| s.actor() == actor) {
                        self.rr_cursor = (self.rr_cursor + k + 1) % roster.len();
                        return step.clone();
                    }
                }
                unreachable!("pending non-empty implies some actor has a step")
            }
            Policy::AdversarialDuel => unreachable!("duel picks via its driver"),
        }
    }

    pub fn tick(&mut self) -> Tick {
        if self.is_done() {
            return Tick::Done;
        }
        if self.clock >= self.scenario.budget {
            self.stop = Some(StopCause::BudgetExhausted);
            return Tick::Done;
        }
        match self.due_injection() {
            Some(Ok(step)) => {
                self.commit(step);
                return Tick::Stepped;
            }
            Some(Err(e)) => {
                self.error = Some(e);
                return Tick::Done;
            }
            None => {}
        }

        let mut pending = self.config().enabled_base_steps();
        if let Some((_, ballot, quorum)) = &self.protected {
            pending = cnd_filter(&pending, *ballot, quorum, self.window_open());
        }

        if let Policy::AdversarialDuel = self.policy {
            let duel = self.duel.as_mut().expect("duel driver");
            let scenario = &self.scenario;
            let mv = duel.next_move(self.path.last_config(), &pending, |name| {
                scenario.quorum_of(name)
            });
            return match mv {
                DuelMove::Inject(step) | DuelMove::Pick(step) => {
                    self.commit(step);
                    Tick::Stepped
                }
                DuelMove::Stuck => {
                    self.clock += 1;
                    Tick::Idle
                }
            };
        }

        if pending.is_empty() {
            if self.injection_possible() {
                self.clock += 1;
                return Tick::Idle;
            }
            self.stop = Some(StopCause::Quiescent);
            return Tick::Done;
        }
        let step = self.pick(&pending);
        self.commit(step);
        Tick::Stepped
    }

    pub fn finish(self) -> Result<RunOutput, RunError> {
        if let Some(error) = self.error {
            return Err(error);
        }
        Ok(RunOutput {
            path: self.path,
            protected: self.protected,
            stop: self.stop.unwrap_or(StopCause::BudgetExhausted),
        })
    }
}

/// Runs a scenario to completion. Pure in the scenario: identical
/// scenarios (seed included) produce identical outputs.
pub fn run(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let mut runner = Runner::new(scenario.clone())?;
    while runner.tick() != Tick::Done {}
    runner.finish()
}
