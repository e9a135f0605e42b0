//! Simulation and checking of the Synod single-decree consensus protocol
//! running on a failure-aware actor model.
//!
//! The crate is organized around five layers:
//!
//! * [`fam`]: actor configurations (available / failed actor maps plus an
//!   in-flight message multiset), the transition steps that move between
//!   them, and transition paths with bit-exact replay.
//! * [`synod`]: the proposer and acceptor state machines with the
//!   prepare/promise and accept/voted rounds, ballot generation, and
//!   quorum predicates.
//! * [`scheduler`]: drives runs under pluggable policies (fair random,
//!   round robin, an adversarial dueling-proposers script, and a protected
//!   proposal window), with deterministic failure injection.
//! * [`checker`]: trace predicates (safety, phase-1/phase-2 progress,
//!   overall progress, livelock detection) and a bounded exhaustive
//!   explorer that doubles as the brute-force oracle.
//! * [`trace`] / [`scenario`]: the line-oriented trace format with stable
//!   digests for replay verification, and the `.scn` scenario file format.
//!
//! Everything is deterministic: a scenario (seed included) maps to exactly
//! one trace, and any trace replays digest-exact through [`fam`] semantics.

pub mod actor;
pub mod checker;
pub mod fam;
pub mod multiset;
pub mod scenario;
pub mod scheduler;
pub mod synod;
pub mod trace;

pub use actor::{ActorName, Role};
pub use fam::{Configuration, NotEnabled, Path, TransitionStep};
pub use synod::{AcceptorState, ActorState, Ballot, Message, MessageKind, ProposerState, Value};
