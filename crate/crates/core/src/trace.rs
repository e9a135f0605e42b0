//! The on-disk trace format and its stable digests.
//!
//! A trace is a line-oriented record of one run: a version tag, provenance
//! (scenario digest and seed), the roster, and one record per step carrying
//! the step itself plus a digest of the configuration it produced. Digests
//! are 64-bit FNV-1a over a canonical text rendering of the configuration,
//! so they are identical across platforms and runs; replay re-applies the
//! recorded steps through the transition semantics and compares digests at
//! every index.
//!
//! Grammar (fields are `|`-separated, `-` marks an absent field):
//!
//! ```text
//! synodsim-trace v1
//! scenario|<16 hex>
//! seed|<u64>
//! actor|<id>|proposer|<value>|<stride>|<offset>
//! actor|<id>|acceptor
//! init|<16 hex>
//! s|<index>|<kind>|<actor>|<mk>|<ms>|<mr>|<mb>|<mv>|<mpb>|<mpv>|<quorum>|<16 hex>
//! end|<step count>|<16 hex>
//! ```
//!
//! `kind` is one of `snd rcv stp bgn prop`. Message fields `mk..mpv` are
//! populated for `snd`/`rcv`; `prop` records its ballot in `mb` and its
//! target quorum (comma-joined acceptor ids) in `quorum`. Traces always
//! start from the fresh roster configuration, so the roster block is all
//! replay needs to rebuild the initial state.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::actor::ActorName;
use crate::fam::{Configuration, Path, TransitionStep};
use crate::synod::{AcceptorState, ActorState, Ballot, Message, MessageKind, ProposerState, Value};

pub const TRACE_VERSION_LINE: &str = "synodsim-trace v1";

/// 64-bit FNV-1a. Stable across platforms and releases, which is the whole
/// point: digests embedded in traces must replay anywhere.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn digest_hex(d: u64) -> String {
    format!("{d:016x}")
}

fn parse_hex_digest(s: &str) -> Option<u64> {
    if s.len() == 16 {
        u64::from_str_radix(s, 16).ok()
    } else {
        None
    }
}

fn ballot_field(b: Ballot) -> String {
    b.0.to_string()
}

fn value_field(v: Value) -> String {
    match v {
        Value::Nil => "-".to_string(),
        Value::Num(n) => n.to_string(),
    }
}

/// Canonical one-line rendering of a message: `kind|s|r|ballot|value|pb|pv`.
pub fn message_canon(m: &Message) -> String {
    let (pb, pv) = match m.prior {
        Some((b, v)) => (ballot_field(b), value_field(v)),
        None => ("-".to_string(), "-".to_string()),
    };
    format!(
        "{}|{}|{}|{}|{}|{}|{}",
        m.kind.as_str(),
        m.sender,
        m.receiver,
        ballot_field(m.ballot),
        value_field(m.value),
        pb,
        pv
    )
}

fn canon_actor_state(out: &mut String, st: &ActorState) {
    match st {
        ActorState::Proposer(p) => {
            let learned = match p.learned {
                Some((b, v)) => format!("{}:{}", ballot_field(b), value_field(v)),
                None => "-".to_string(),
            };
            let quorum: Vec<&str> = p.target_quorum.iter().map(|a| a.id()).collect();
            write!(
                out,
                "proposer own={} cur={} stride={} off={} learned={} q={}",
                value_field(p.own_value),
                ballot_field(p.current_ballot),
                p.ballot_stride,
                p.ballot_offset,
                learned,
                quorum.join(",")
            )
            .unwrap();
            for (from, m) in &p.promises {
                write!(out, " promise[{from}]={}", message_canon(m)).unwrap();
            }
            for (from, m) in &p.votes {
                write!(out, " vote[{from}]={}", message_canon(m)).unwrap();
            }
            for (m, n) in p.outbox.iter() {
                write!(out, " out[{}]x{n}", message_canon(m)).unwrap();
            }
        }
        ActorState::Acceptor(a) => {
            let accepted = match a.accepted {
                Some((b, v)) => format!("{}:{}", ballot_field(b), value_field(v)),
                None => "-".to_string(),
            };
            write!(
                out,
                "acceptor beta={} accepted={}",
                ballot_field(a.highest_seen),
                accepted
            )
            .unwrap();
            for m in &a.unresponded {
                write!(out, " eta[{}]", message_canon(m)).unwrap();
            }
            for (m, n) in a.outbox.iter() {
                write!(out, " out[{}]x{n}", message_canon(m)).unwrap();
            }
        }
    }
}

/// Canonical multi-line rendering of a configuration. Stable field order
/// throughout (maps are ordered), so equal configurations always render to
/// equal strings and digests.
pub fn canonical_config(cfg: &Configuration) -> String {
    let mut out = String::new();
    out.push_str("config\n");
    for (section, map) in [("avail", cfg.available()), ("failed", cfg.failed())] {
        for (name, st) in map {
            write!(out, "{section} {name} ").unwrap();
            canon_actor_state(&mut out, st);
            out.push('\n');
        }
    }
    for (m, n) in cfg.in_flight().iter() {
        writeln!(out, "mu {} x{n}", message_canon(m)).unwrap();
    }
    out
}

/// Stable digest of a configuration.
pub fn config_digest(cfg: &Configuration) -> u64 {
    fnv1a64(canonical_config(cfg).as_bytes())
}

/// Roster entry as recorded in a trace header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceActor {
    pub name: ActorName,
    /// `(own value, ballot stride, ballot offset)` for proposers.
    pub proposer: Option<(Value, u64, u64)>,
}

impl TraceActor {
    pub fn fresh_state(&self) -> ActorState {
        match &self.proposer {
            Some((value, stride, offset)) => {
                ActorState::Proposer(ProposerState::new(*value, *stride, *offset))
            }
            None => ActorState::Acceptor(AcceptorState::new()),
        }
    }
}

/// A parsed trace: everything needed to rebuild and replay the run.
#[derive(Clone, Debug)]
pub struct ParsedTrace {
    pub scenario_digest: u64,
    pub seed: u64,
    pub roster: Vec<TraceActor>,
    pub init_digest: u64,
    pub steps: Vec<(TransitionStep, u64)>,
    pub final_digest: u64,
}

impl ParsedTrace {
    pub fn initial_configuration(&self) -> Configuration {
        Configuration::new(
            self.roster
                .iter()
                .map(|a| (a.name.clone(), a.fresh_state()))
                .collect(),
            Default::default(),
            Default::default(),
        )
    }
}

#[derive(Debug, Error)]
pub enum TraceWriteError {
    #[error("trace must start from a fresh roster configuration")]
    NotFresh,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace parse error at line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

/// Why a replay diverged.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("initial configuration digest mismatch: expected {expected}, rebuilt {actual}")]
    InitDigest { expected: String, actual: String },
    #[error("digest mismatch at step {index}: recorded {recorded}, replayed {replayed}")]
    DigestMismatch {
        index: usize,
        recorded: String,
        replayed: String,
    },
    #[error("step {index} not enabled during replay")]
    StepNotEnabled { index: usize },
    #[error("final digest mismatch")]
    FinalDigest,
}

fn is_fresh(cfg: &Configuration) -> bool {
    cfg.failed().is_empty()
        && cfg.in_flight().is_empty()
        && cfg.available().values().all(|st| match st {
            ActorState::Proposer(p) => {
                p.current_ballot == Ballot::ZERO && p.outbox.is_empty() && p.promises.is_empty()
            }
            ActorState::Acceptor(a) => {
                a.highest_seen == Ballot::ZERO && a.accepted.is_none() && a.outbox.is_empty()
            }
        })
}

fn step_record(index: usize, step: &TransitionStep, post_digest: u64) -> String {
    let (mk, ms, mr, mb, mv, mpb, mpv) = match step.message() {
        Some(m) => {
            let (pb, pv) = match m.prior {
                Some((b, v)) => (ballot_field(b), value_field(v)),
                None => ("-".into(), "-".into()),
            };
            (
                m.kind.as_str().to_string(),
                m.sender.id().to_string(),
                m.receiver.id().to_string(),
                ballot_field(m.ballot),
                value_field(m.value),
                pb,
                pv,
            )
        }
        None => {
            let dash = || "-".to_string();
            let mb = match step {
                TransitionStep::Propose { ballot, .. } => ballot_field(*ballot),
                _ => dash(),
            };
            (dash(), dash(), dash(), mb, dash(), dash(), dash())
        }
    };
    let quorum = match step {
        TransitionStep::Propose { quorum, .. } => quorum
            .iter()
            .map(|a| a.id())
            .collect::<Vec<_>>()
            .join(","),
        _ => "-".to_string(),
    };
    format!(
        "s|{index}|{}|{}|{mk}|{ms}|{mr}|{mb}|{mv}|{mpb}|{mpv}|{quorum}|{}",
        step.kind_str(),
        step.actor().id(),
        digest_hex(post_digest)
    )
}

/// Serializes a path (which must start from a fresh roster configuration)
/// into the trace format.
pub fn write_trace(path: &Path, scenario_digest: u64, seed: u64) -> Result<String, TraceWriteError> {
    let initial = path.initial();
    if !is_fresh(initial) {
        return Err(TraceWriteError::NotFresh);
    }
    let mut out = String::new();
    out.push_str(TRACE_VERSION_LINE);
    out.push('\n');
    writeln!(out, "scenario|{}", digest_hex(scenario_digest)).unwrap();
    writeln!(out, "seed|{seed}").unwrap();
    for (name, st) in initial.available() {
        match st {
            ActorState::Proposer(p) => writeln!(
                out,
                "actor|{}|proposer|{}|{}|{}",
                name.id(),
                value_field(p.own_value),
                p.ballot_stride,
                p.ballot_offset
            )
            .unwrap(),
            ActorState::Acceptor(_) => writeln!(out, "actor|{}|acceptor", name.id()).unwrap(),
        }
    }
    writeln!(out, "init|{}", digest_hex(config_digest(initial))).unwrap();
    let mut last = config_digest(initial);
    for (i, (step, cfg)) in path.steps().iter().enumerate() {
        last = config_digest(cfg);
        out.push_str(&step_record(i, step, last));
        out.push('\n');
    }
    writeln!(out, "end|{}|{}", path.len(), digest_hex(last)).unwrap();
    Ok(out)
}

fn perr(line: usize, msg: impl Into<String>) -> TraceParseError {
    TraceParseError {
        line,
        msg: msg.into(),
    }
}

fn parse_u64_field(line: usize, s: &str, what: &str) -> Result<u64, TraceParseError> {
    s.parse::<u64>()
        .map_err(|_| perr(line, format!("bad {what} '{s}'")))
}

fn parse_value_field(line: usize, s: &str) -> Result<Value, TraceParseError> {
    if s == "-" {
        Ok(Value::Nil)
    } else {
        s.parse::<u64>()
            .map(Value::Num)
            .map_err(|_| perr(line, format!("bad value '{s}'")))
    }
}

struct RosterIndex {
    roster: Vec<TraceActor>,
    names: std::collections::BTreeMap<String, ActorName>,
}

impl RosterIndex {
    fn lookup(&self, line: usize, id: &str) -> Result<ActorName, TraceParseError> {
        self.names
            .get(id)
            .cloned()
            .ok_or_else(|| perr(line, format!("unknown actor '{id}'")))
    }

    fn parse_message(&self, line: usize, fields: &[&str]) -> Result<Message, TraceParseError> {
        let kind = match fields[0] {
            "1a" => MessageKind::Prepare1a,
            "1b" => MessageKind::Promise1b,
            "2a" => MessageKind::Accept2a,
            "2b" => MessageKind::Voted2b,
            other => return Err(perr(line, format!("bad message kind '{other}'"))),
        };
        let sender = self.lookup(line, fields[1])?;
        let receiver = self.lookup(line, fields[2])?;
        let ballot = Ballot(parse_u64_field(line, fields[3], "ballot")?);
        let value = parse_value_field(line, fields[4])?;
        let prior = match (fields[5], fields[6]) {
            ("-", "-") => None,
            (pb, pv) => Some((
                Ballot(parse_u64_field(line, pb, "prior ballot")?),
                parse_value_field(line, pv)?,
            )),
        };
        Ok(Message {
            sender,
            receiver,
            kind,
            ballot,
            value,
            prior,
        })
    }
}

/// Parses the trace text. Structure and field syntax are validated here;
/// semantic validity (are the steps actually applicable?) is replay's job.
pub fn parse_trace(text: &str) -> Result<ParsedTrace, TraceParseError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| perr(1, "empty trace"))?;
    if first != TRACE_VERSION_LINE {
        return Err(perr(1, format!("unsupported trace version '{first}'")));
    }

    let mut index = RosterIndex {
        roster: Vec::new(),
        names: Default::default(),
    };
    let mut scenario_digest = None;
    let mut seed = None;
    let mut init_digest = None;
    let mut steps: Vec<(TransitionStep, u64)> = Vec::new();
    let mut end: Option<(usize, u64)> = None;

    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('|').collect();
        match fields[0] {
            "scenario" if fields.len() == 2 => {
                scenario_digest = Some(
                    parse_hex_digest(fields[1]).ok_or_else(|| perr(line, "bad scenario digest"))?,
                );
            }
            "seed" if fields.len() == 2 => {
                seed = Some(parse_u64_field(line, fields[1], "seed")?);
            }
            "actor" if fields.len() >= 3 => {
                let id = fields[1];
                if !ActorName::valid_id(id) {
                    return Err(perr(line, format!("bad actor id '{id}'")));
                }
                let actor = match fields[2] {
                    "proposer" if fields.len() == 6 => {
                        let value = parse_value_field(line, fields[3])?;
                        if value.is_nil() {
                            return Err(perr(line, "proposer value cannot be nil"));
                        }
                        TraceActor {
                            name: ActorName::proposer(id),
                            proposer: Some((
                                value,
                                parse_u64_field(line, fields[4], "stride")?,
                                parse_u64_field(line, fields[5], "offset")?,
                            )),
                        }
                    }
                    "acceptor" if fields.len() == 3 => TraceActor {
                        name: ActorName::acceptor(id),
                        proposer: None,
                    },
                    other => return Err(perr(line, format!("bad actor role '{other}'"))),
                };
                if index.names.contains_key(id) {
                    return Err(perr(line, format!("duplicate actor '{id}'")));
                }
                index.names.insert(id.to_string(), actor.name.clone());
                index.roster.push(actor);
            }
            "init" if fields.len() == 2 => {
                init_digest =
                    Some(parse_hex_digest(fields[1]).ok_or_else(|| perr(line, "bad init digest"))?);
            }
            "s" if fields.len() == 13 => {
                let step_index = parse_u64_field(line, fields[1], "step index")? as usize;
                if step_index != steps.len() {
                    return Err(perr(line, format!("step index {step_index} out of order")));
                }
                let actor = index.lookup(line, fields[3])?;
                let step = match fields[2] {
                    "snd" => TransitionStep::Snd(index.parse_message(line, &fields[4..11])?),
                    "rcv" => TransitionStep::Rcv(index.parse_message(line, &fields[4..11])?),
                    "stp" => TransitionStep::Stp(actor.clone()),
                    "bgn" => TransitionStep::Bgn(actor.clone()),
                    "prop" => {
                        let ballot = Ballot(parse_u64_field(line, fields[7], "ballot")?);
                        let quorum: BTreeSet<ActorName> = fields[11]
                            .split(',')
                            .map(|id| index.lookup(line, id))
                            .collect::<Result<_, _>>()?;
                        TransitionStep::Propose {
                            proposer: actor.clone(),
                            ballot,
                            quorum,
                        }
                    }
                    other => return Err(perr(line, format!("bad step kind '{other}'"))),
                };
                if step.actor() != &actor {
                    return Err(perr(line, "step actor does not match message"));
                }
                let digest =
                    parse_hex_digest(fields[12]).ok_or_else(|| perr(line, "bad step digest"))?;
                steps.push((step, digest));
            }
            "end" if fields.len() == 3 => {
                let count = parse_u64_field(line, fields[1], "step count")? as usize;
                let digest =
                    parse_hex_digest(fields[2]).ok_or_else(|| perr(line, "bad final digest"))?;
                end = Some((count, digest));
            }
            other => return Err(perr(line, format!("unrecognized record '{other}'"))),
        }
    }

    let init_digest = init_digest.ok_or_else(|| perr(0, "missing init record"))?;
    let (count, final_digest) = end.ok_or_else(|| perr(0, "missing end record"))?;
    if count != steps.len() {
        return Err(perr(0, format!("end count {count} != {} steps", steps.len())));
    }
    Ok(ParsedTrace {
        scenario_digest: scenario_digest.ok_or_else(|| perr(0, "missing scenario record"))?,
        seed: seed.ok_or_else(|| perr(0, "missing seed record"))?,
        roster: index.roster,
        init_digest,
        steps,
        final_digest,
    })
}

/// Replays a parsed trace through the transition semantics, verifying the
/// digest at every index. On success returns the reconstructed path.
pub fn replay_trace(parsed: &ParsedTrace) -> Result<Path, ReplayError> {
    let initial = parsed.initial_configuration();
    let actual = config_digest(&initial);
    if actual != parsed.init_digest {
        return Err(ReplayError::InitDigest {
            expected: digest_hex(parsed.init_digest),
            actual: digest_hex(actual),
        });
    }
    let mut path = Path::new(initial);
    let mut last = actual;
    for (index, (step, recorded)) in parsed.steps.iter().enumerate() {
        path.extend(step.clone())
            .map_err(|_| ReplayError::StepNotEnabled { index })?;
        last = config_digest(path.last_config());
        if last != *recorded {
            return Err(ReplayError::DigestMismatch {
                index,
                recorded: digest_hex(*recorded),
                replayed: digest_hex(last),
            });
        }
    }
    if last != parsed.final_digest {
        return Err(ReplayError::FinalDigest);
    }
    Ok(path)
}
