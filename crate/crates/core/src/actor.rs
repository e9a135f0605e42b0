//! Actor identities.
//!
//! The roster of a run is static: every actor is named up front, carries a
//! fixed role, and is never created or destroyed mid-run.

use std::fmt;
use std::sync::Arc;

/// What an actor does in the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Proposer,
    Acceptor,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Proposer => "proposer",
            Role::Acceptor => "acceptor",
        }
    }
}

/// A roster-unique actor identity with its fixed role.
///
/// Names are cheap to clone and compare; identifiers are restricted to
/// `[A-Za-z0-9_]` so they embed unambiguously in the line-oriented trace
/// and scenario formats.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActorName {
    id: Arc<str>,
    role: Role,
}

impl ActorName {
    pub fn new(id: impl Into<Arc<str>>, role: Role) -> Self {
        ActorName {
            id: id.into(),
            role,
        }
    }

    pub fn proposer(id: impl Into<Arc<str>>) -> Self {
        Self::new(id, Role::Proposer)
    }

    pub fn acceptor(id: impl Into<Arc<str>>) -> Self {
        Self::new(id, Role::Acceptor)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_proposer(&self) -> bool {
        self.role == Role::Proposer
    }

    pub fn is_acceptor(&self) -> bool {
        self.role == Role::Acceptor
    }

    /// True iff `id` is safe for the text formats.
    pub fn valid_id(id: &str) -> bool {
        !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
    }
}

impl fmt::Display for ActorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

impl fmt::Debug for ActorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.role.as_str())
    }
}
