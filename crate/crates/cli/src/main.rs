//! Command-line front end: run scenarios, explore small instances
//! exhaustively, and replay traces.
//!
//! Exit codes: 0 means everything requested holds; 1 means a requested
//! property failed (or a replay diverged); 2 is a usage, parse, or
//! validation error; 3 means exploration hit the state cap (a partial
//! report is still written).

use std::collections::BTreeSet;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synodsim_core::checker::{
    self, ExploreLimits, Property, Verdict, LIVELOCK_REPROPOSAL_THRESHOLD,
};
use synodsim_core::scenario::{self, Scenario};
use synodsim_core::scheduler::{self, RunOutput};
use synodsim_core::trace::{self, digest_hex, fnv1a64};
use synodsim_core::{ActorName, Ballot, TransitionStep};

const MANIFEST_VERSION_LINE: &str = "synodsim-manifest v1";
const VERDICTS_VERSION_LINE: &str = "synodsim-verdicts v1";

#[derive(Parser)]
#[command(
    name = "synodsim",
    about = "Synod consensus simulator on a failure-aware actor model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write its trace and verdicts.
    Run(RunArgs),
    /// Exhaustively explore a small scenario up to a depth bound.
    Explore(ExploreArgs),
    /// Re-apply a trace through the transition semantics, checking every
    /// recorded digest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (.scn).
    #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
    scenario: Option<PathBuf>,
    /// Re-run a previously written manifest; reproduces its files byte
    /// for byte.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Properties to check, comma-separated:
    /// safety,theorem1,lemma1,lemma2,livelock.
    #[arg(long, value_delimiter = ',', default_value = "safety")]
    check: Vec<String>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep a seed range `A..B` (end exclusive); one run per seed.
    #[arg(long, conflicts_with_all = ["seed", "manifest"])]
    seeds: Option<String>,
    /// Override the scenario budget.
    #[arg(long)]
    budget: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExploreArgs {
    /// Scenario file (.scn); the policy section is ignored by exploration.
    scenario: PathBuf,
    /// Maximum path depth.
    #[arg(long, default_value_t = 64)]
    depth: usize,
    /// Abort (exit 3) past this many distinct states.
    #[arg(long, default_value_t = 1_000_000)]
    state_cap: usize,
    /// Also require that every maximal path reaches a learned state.
    #[arg(long)]
    require_progress: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace file (.trace).
    trace: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Explore(args) => cmd_explore(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Errors that end the command with exit 2.
type UsageError = String;

fn read_file(path: &FsPath) -> Result<String, UsageError> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &FsPath, contents: &str) -> Result<(), UsageError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_checks(names: &[String]) -> Result<Vec<Property>, UsageError> {
    names
        .iter()
        .map(|name| match name.as_str() {
            "safety" => Ok(Property::Safety),
            "theorem1" => Ok(Property::Theorem1),
            "lemma1" => Ok(Property::Lemma1),
            "lemma2" => Ok(Property::Lemma2),
            "livelock" => Ok(Property::Livelock),
            other => Err(format!(
                "unknown property '{other}' (expected safety, theorem1, lemma1, lemma2, livelock)"
            )),
        })
        .collect()
}

fn load_scenario(path: &FsPath) -> Result<(Scenario, String), UsageError> {
    let text = read_file(path)?;
    let scenario =
        scenario::parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((scenario, text))
}

/// The (proposer, ballot, quorum) triple the lemma checks quantify over:
/// the protected proposal when the run had one, otherwise the run's first
/// proposal.
fn lemma_subject(out: &RunOutput) -> Option<(ActorName, Ballot, BTreeSet<ActorName>)> {
    if let Some(subject) = &out.protected {
        return Some(subject.clone());
    }
    out.path.steps().iter().find_map(|(step, _)| match step {
        TransitionStep::Propose {
            proposer,
            ballot,
            quorum,
        } => Some((proposer.clone(), *ballot, quorum.clone())),
        _ => None,
    })
}

fn run_checks(out: &RunOutput, checks: &[Property]) -> Vec<Verdict> {
    checks
        .iter()
        .map(|prop| match prop {
            Property::Safety => checker::check_safety(&out.path),
            Property::Theorem1 => checker::check_theorem1(&out.path),
            Property::Lemma1 | Property::Lemma2 => match lemma_subject(out) {
                Some((p, b, q)) => {
                    if *prop == Property::Lemma1 {
                        checker::check_lemma1(&out.path, &p, b, &q)
                    } else {
                        checker::check_lemma2(&out.path, &p, b, &q)
                    }
                }
                None => Verdict {
                    property: *prop,
                    holds: false,
                    witness_index: None,
                    counterexample: None,
                    detail: "no proposal in trace".into(),
                },
            },
            Property::Livelock => {
                checker::detect_livelock(&out.path, LIVELOCK_REPROPOSAL_THRESHOLD)
            }
        })
        .collect()
}

fn verdict_line(v: &Verdict) -> String {
    let witness = v
        .witness_index
        .map(|i| i.to_string())
        .unwrap_or_else(|| "-".into());
    format!(
        "check|{}|{}|{witness}|{}",
        v.property.name(),
        v.holds,
        v.detail
    )
}

fn verdicts_text(trace_text: &str, verdicts: &[Verdict]) -> (String, bool) {
    let all_hold = verdicts.iter().all(|v| v.holds);
    let mut out = String::new();
    out.push_str(VERDICTS_VERSION_LINE);
    out.push('\n');
    out.push_str(&format!(
        "trace|{}\n",
        digest_hex(fnv1a64(trace_text.as_bytes()))
    ));
    for v in verdicts {
        out.push_str(&verdict_line(v));
        out.push('\n');
    }
    out.push_str(if all_hold {
        "result|pass\n"
    } else {
        "result|fail\n"
    });
    (out, all_hold)
}

struct RunPlan {
    scenario_path: PathBuf,
    scenario: Scenario,
    scenario_digest: u64,
    checks: Vec<Property>,
    trace_path: PathBuf,
    verdicts_path: PathBuf,
    manifest_path: Option<PathBuf>,
}

fn manifest_text(plan: &RunPlan) -> String {
    format!(
        "{MANIFEST_VERSION_LINE}\n\
         scenario|{}\n\
         scenario_digest|{}\n\
         trace|{}\n\
         verdicts|{}\n\
         seed|{}\n\
         budget|{}\n\
         checks|{}\n",
        plan.scenario_path.display(),
        digest_hex(plan.scenario_digest),
        plan.trace_path.display(),
        plan.verdicts_path.display(),
        plan.scenario.seed,
        plan.scenario.budget,
        plan.checks
            .iter()
            .map(|p| p.name())
            .collect::<Vec<_>>()
            .join(",")
    )
}

fn parse_manifest(text: &str) -> Result<RunPlan, UsageError> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_VERSION_LINE) {
        return Err("unsupported manifest version".into());
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('|')
            .ok_or_else(|| format!("bad manifest line '{line}'"))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |key: &str| -> Result<String, UsageError> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| format!("manifest is missing '{key}'"))
    };
    let scenario_path = PathBuf::from(get("scenario")?);
    let (mut scenario, text) = load_scenario(&scenario_path)?;
    let digest = fnv1a64(text.as_bytes());
    if digest_hex(digest) != get("scenario_digest")? {
        return Err(format!(
            "scenario {} changed since the manifest was written",
            scenario_path.display()
        ));
    }
    scenario.seed = get("seed")?
        .parse()
        .map_err(|_| "bad seed in manifest".to_string())?;
    scenario.budget = get("budget")?
        .parse()
        .map_err(|_| "bad budget in manifest".to_string())?;
    let checks: Vec<String> = get("checks")?.split(',').map(str::to_string).collect();
    Ok(RunPlan {
        scenario_path,
        scenario,
        scenario_digest: digest,
        checks: parse_checks(&checks)?,
        trace_path: PathBuf::from(get("trace")?),
        verdicts_path: PathBuf::from(get("verdicts")?),
        manifest_path: None,
    })
}

/// Executes one planned run: simulate, write trace + verdicts (+ manifest,
/// + safety counterexample when applicable), report pass/fail.
fn execute_run(plan: &RunPlan) -> Result<bool, UsageError> {
    let out = scheduler::run(&plan.scenario).map_err(|e| e.to_string())?;
    let trace_text = trace::write_trace(&out.path, plan.scenario_digest, plan.scenario.seed)
        .map_err(|e| e.to_string())?;
    write_file(&plan.trace_path, &trace_text)?;

    let verdicts = run_checks(&out, &plan.checks);
    let (verdict_text, all_hold) = verdicts_text(&trace_text, &verdicts);
    write_file(&plan.verdicts_path, &verdict_text)?;
    if let Some(manifest_path) = &plan.manifest_path {
        write_file(manifest_path, &manifest_text(plan))?;
    }

    for v in &verdicts {
        println!("{}", verdict_line(v));
        if !v.holds {
            if let Some(prefix) = &v.counterexample {
                let ce_path = plan.trace_path.with_extension("counterexample.trace");
                let ce_text = trace::write_trace(prefix, plan.scenario_digest, plan.scenario.seed)
                    .map_err(|e| e.to_string())?;
                write_file(&ce_path, &ce_text)?;
                println!("counterexample|{}", ce_path.display());
            }
        }
    }
    println!("trace|{}", plan.trace_path.display());
    println!("verdicts|{}", plan.verdicts_path.display());
    Ok(all_hold)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, UsageError> {
    if let Some(manifest_path) = &args.manifest {
        let plan = parse_manifest(&read_file(manifest_path)?)?;
        let ok = execute_run(&plan)?;
        return Ok(ExitCode::from(if ok { 0 } else { 1 }));
    }

    let scenario_path = args.scenario.clone().expect("clap enforces scenario");
    let (scenario, text) = load_scenario(&scenario_path)?;
    let scenario_digest = fnv1a64(text.as_bytes());
    let checks = parse_checks(&args.check)?;
    let stem = scenario_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run")
        .to_string();

    if let Some(range) = &args.seeds {
        let (a, b) = range
            .split_once("..")
            .ok_or_else(|| format!("bad seed range '{range}' (expected A..B)"))?;
        let a: u64 = a
            .parse()
            .map_err(|_| format!("bad seed range start '{a}'"))?;
        let b: u64 = b.parse().map_err(|_| format!("bad seed range end '{b}'"))?;
        if a >= b {
            return Err(format!("empty seed range {a}..{b}"));
        }
        let mut all_ok = true;
        let mut summary = String::new();
        summary.push_str(VERDICTS_VERSION_LINE);
        summary.push('\n');
        for seed in a..b {
            let mut s = scenario.clone();
            s.seed = seed;
            if let Some(budget) = args.budget {
                s.budget = budget;
            }
            let plan = RunPlan {
                scenario_path: scenario_path.clone(),
                scenario: s,
                scenario_digest,
                checks: checks.clone(),
                trace_path: args.out.join(format!("{stem}.s{seed}.trace")),
                verdicts_path: args.out.join(format!("{stem}.s{seed}.verdicts")),
                manifest_path: None,
            };
            let ok = execute_run(&plan)?;
            summary.push_str(&format!(
                "seed|{seed}|{}\n",
                if ok { "pass" } else { "fail" }
            ));
            all_ok &= ok;
        }
        summary.push_str(if all_ok {
            "result|pass\n"
        } else {
            "result|fail\n"
        });
        let summary_path = args.out.join(format!("{stem}.sweep.verdicts"));
        write_file(&summary_path, &summary)?;
        println!("sweep|{}", summary_path.display());
        return Ok(ExitCode::from(if all_ok { 0 } else { 1 }));
    }

    let mut scenario = scenario;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(budget) = args.budget {
        scenario.budget = budget;
    }
    let plan = RunPlan {
        scenario_path,
        scenario,
        scenario_digest,
        checks,
        trace_path: args.out.join(format!("{stem}.trace")),
        verdicts_path: args.out.join(format!("{stem}.verdicts")),
        manifest_path: Some(args.out.join(format!("{stem}.manifest"))),
    };
    let ok = execute_run(&plan)?;
    Ok(ExitCode::from(if ok { 0 } else { 1 }))
}

fn cmd_explore(args: ExploreArgs) -> Result<ExitCode, UsageError> {
    let (scenario, text) = load_scenario(&args.scenario)?;
    let scenario_digest = fnv1a64(text.as_bytes());
    let limits = ExploreLimits {
        max_depth: args.depth,
        state_cap: args.state_cap,
    };
    let report = checker::explore(&scenario, &limits);
    let report_text = report.to_report_text(scenario_digest);
    let stem = args
        .scenario
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("explore");
    let report_path = args.out.join(format!("{stem}.report"));
    write_file(&report_path, &report_text)?;
    print!("{report_text}");
    println!("report|{}", report_path.display());

    if report.capped {
        return Ok(ExitCode::from(3));
    }
    let ok = report.safety_ok
        && report.replay_ok
        && report.predicate_implications_ok
        && (!args.require_progress || report.all_terminals_learn());
    Ok(ExitCode::from(if ok { 0 } else { 1 }))
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode, UsageError> {
    let text = read_file(&args.trace)?;
    let parsed =
        trace::parse_trace(&text).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    match trace::replay_trace(&parsed) {
        Ok(path) => {
            println!("replay|ok|steps={}", path.len());
            Ok(ExitCode::from(0))
        }
        Err(e) => {
            println!("replay|diverged|{e}");
            Ok(ExitCode::from(1))
        }
    }
}
