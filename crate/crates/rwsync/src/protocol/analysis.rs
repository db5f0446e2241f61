//! Symbolic analysis of protocol programs: which semaphore operations a
//! role performs per phase, under which branch resolutions.
//!
//! Two kinds of answers come out of here. Path scenarios
//! ([`Scenario::Uncontended`], [`Scenario::Worst`]) enumerate the acyclic
//! paths through a phase and pick the lightest or heaviest one; this is
//! what the operation-count comparison between protocols rests on.
//! [`Scenario::ColdStart`] instead simulates the program concretely from
//! the initial state, single-threadedly — exactly what a runtime lock does
//! when nobody else is around — and is what `conform` checks runtime
//! probes against.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::{compile, CompiledProgram, CompiledStep, ProtocolDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Reader,
    Writer,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Reader, Role::Writer];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reader" | "r" => Ok(Role::Reader),
            "writer" | "w" => Ok(Role::Writer),
            _ => Err(Error::InvalidParameter(format!("unknown role {s:?}"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Reader => "reader",
            Role::Writer => "writer",
        })
    }
}

/// Entry runs from the program start through CS_BEGIN; exit runs from
/// CS_END through END. The caller's critical region sits between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Enter,
    Exit,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Enter, Phase::Exit];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "enter" => Ok(Phase::Enter),
            "exit" => Ok(Phase::Exit),
            _ => Err(Error::InvalidParameter(format!("unknown phase {s:?}"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Enter => "enter",
            Phase::Exit => "exit",
        })
    }
}

/// Branch resolution rule for a symbolic walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// The lightest path through the phase: fewest WAITs, ties broken by
    /// fewest SIGNALs. This is the steady-state no-contention path (for
    /// the counter protocols, the path where the first-reader/last-reader
    /// branch does not fire).
    Uncontended,
    /// The heaviest path: most WAITs, ties broken by most SIGNALs.
    Worst,
    /// Concrete single-threaded simulation from the initial state. This
    /// is what a runtime probe observes in a single-threaded run, first-
    /// reader branches included.
    ColdStart,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uncontended" => Ok(Scenario::Uncontended),
            "worst" => Ok(Scenario::Worst),
            "coldstart" | "cold-start" => Ok(Scenario::ColdStart),
            _ => Err(Error::InvalidParameter(format!("unknown scenario {s:?}"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Uncontended => "uncontended",
            Scenario::Worst => "worst",
            Scenario::ColdStart => "coldstart",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemOp {
    Wait,
    Signal,
}

impl fmt::Display for SemOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SemOp::Wait => "WAIT",
            SemOp::Signal => "SIGNAL",
        })
    }
}

/// An ordered semaphore-operation sequence, e.g. `[(WAIT, out), (SIGNAL, out)]`.
pub type OpTrace = Vec<(SemOp, Arc<str>)>;

pub fn render_trace(trace: &[(SemOp, Arc<str>)]) -> String {
    trace
        .iter()
        .map(|(op, sem)| format!("{op} {sem}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// The exact semaphore-operation sequence on the path selected by the
/// scenario.
pub fn symbolic_trace(
    def: &ProtocolDef,
    role: Role,
    phase: Phase,
    scenario: Scenario,
) -> Result<OpTrace> {
    match scenario {
        Scenario::ColdStart => {
            let mut sim = ReferenceInterpreter::new(def)?;
            match phase {
                Phase::Enter => sim.enter(role),
                Phase::Exit => {
                    sim.enter(role)?;
                    sim.exit(role)
                }
            }
        }
        Scenario::Uncontended | Scenario::Worst => {
            let program = compile(def, role)?;
            let paths = enumerate_paths(def, &program, phase)?;
            let weight = |t: &OpTrace| {
                (
                    t.iter().filter(|(op, _)| *op == SemOp::Wait).count(),
                    t.iter().filter(|(op, _)| *op == SemOp::Signal).count(),
                )
            };
            let chosen = match scenario {
                Scenario::Uncontended => paths.iter().min_by_key(|t| weight(t)),
                Scenario::Worst => paths.iter().max_by_key(|t| weight(t)),
                Scenario::ColdStart => unreachable!(),
            };
            Ok(chosen.expect("a validated program has at least one path").clone())
        }
    }
}

/// Number of WAIT executions on the scenario's path.
pub fn sem_wait_counts(
    def: &ProtocolDef,
    role: Role,
    phase: Phase,
    scenario: Scenario,
) -> Result<usize> {
    Ok(symbolic_trace(def, role, phase, scenario)?
        .iter()
        .filter(|(op, _)| *op == SemOp::Wait)
        .count())
}

/// Number of SIGNAL executions on the scenario's path.
pub fn sem_signal_counts(
    def: &ProtocolDef,
    role: Role,
    phase: Phase,
    scenario: Scenario,
) -> Result<usize> {
    Ok(symbolic_trace(def, role, phase, scenario)?
        .iter()
        .filter(|(op, _)| *op == SemOp::Signal)
        .count())
}

/// One row of the operation-count table.
#[derive(Debug, Clone)]
pub struct OpCountRow {
    pub protocol: String,
    pub role: Role,
    pub phase: Phase,
    pub scenario: Scenario,
    pub waits: usize,
    pub signals: usize,
    pub trace: OpTrace,
}

/// Full WAIT/SIGNAL count table for a set of protocols over role, phase,
/// and the two path scenarios.
pub fn op_count_table(defs: &[ProtocolDef]) -> Result<Vec<OpCountRow>> {
    let mut rows = Vec::new();
    for def in defs {
        for role in Role::BOTH {
            for phase in Phase::BOTH {
                for scenario in [Scenario::Uncontended, Scenario::Worst] {
                    let trace = symbolic_trace(def, role, phase, scenario)?;
                    rows.push(OpCountRow {
                        protocol: def.name(),
                        role,
                        phase,
                        scenario,
                        waits: trace.iter().filter(|(op, _)| *op == SemOp::Wait).count(),
                        signals: trace.iter().filter(|(op, _)| *op == SemOp::Signal).count(),
                        trace,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// All acyclic semaphore-operation paths through one phase of a program.
fn enumerate_paths(
    def: &ProtocolDef,
    program: &CompiledProgram,
    phase: Phase,
) -> Result<Vec<OpTrace>> {
    let (start, stop_kind) = match phase {
        Phase::Enter => (0usize, StopAt::CsBegin),
        Phase::Exit => (program.cs_end, StopAt::End),
    };
    let mut paths = Vec::new();
    let mut trace = Vec::new();
    walk(def, program, start, stop_kind, &mut trace, &mut paths, 0)?;
    Ok(paths)
}

#[derive(Clone, Copy, PartialEq)]
enum StopAt {
    CsBegin,
    End,
}

fn walk(
    def: &ProtocolDef,
    program: &CompiledProgram,
    mut pc: usize,
    stop: StopAt,
    trace: &mut OpTrace,
    paths: &mut Vec<OpTrace>,
    depth: usize,
) -> Result<()> {
    if depth > 4 * program.steps.len() {
        return Err(Error::MalformedProtocol(
            "cyclic path inside a single phase".into(),
        ));
    }
    loop {
        match &program.steps[pc] {
            CompiledStep::Wait(s) => {
                trace.push((SemOp::Wait, def.sems[*s].name.clone()));
                pc += 1;
            }
            CompiledStep::Signal(s) => {
                trace.push((SemOp::Signal, def.sems[*s].name.clone()));
                pc += 1;
            }
            CompiledStep::Add(..) | CompiledStep::Store(..) => pc += 1,
            CompiledStep::Goto(target) => pc = *target,
            CompiledStep::Branch(_, target) => {
                // fall-through branch first, then taken; both are explored
                let mut taken = trace.clone();
                walk(def, program, *target, stop, &mut taken, paths, depth + 1)?;
                pc += 1;
                return walk(def, program, pc, stop, trace, paths, depth + 1);
            }
            CompiledStep::CsBegin => {
                if stop == StopAt::CsBegin {
                    paths.push(trace.clone());
                    return Ok(());
                }
                pc += 1;
            }
            CompiledStep::CsEnd => pc += 1,
            CompiledStep::End => {
                if stop == StopAt::End {
                    paths.push(trace.clone());
                    return Ok(());
                }
                return Err(Error::MalformedProtocol(
                    "phase ran past END without reaching CS_BEGIN".into(),
                ));
            }
        }
    }
}

/// Concrete single-threaded interpreter over a protocol definition.
///
/// State (variables and semaphore values) carries across calls, so a
/// scripted sequence of enter/exit cycles produces exactly the traces a
/// runtime lock's probes report in a single-threaded run. A WAIT on an
/// empty semaphore cannot be satisfied single-threadedly and is reported
/// as a contract error.
pub struct ReferenceInterpreter {
    def: ProtocolDef,
    reader: CompiledProgram,
    writer: CompiledProgram,
    vars: Vec<i64>,
    sem_values: Vec<u64>,
}

impl ReferenceInterpreter {
    pub fn new(def: &ProtocolDef) -> Result<Self> {
        Ok(ReferenceInterpreter {
            reader: compile(def, Role::Reader)?,
            writer: compile(def, Role::Writer)?,
            vars: def.vars.iter().map(|v| v.init).collect(),
            sem_values: def.sems.iter().map(|s| s.init).collect(),
            def: def.clone(),
        })
    }

    pub fn enter(&mut self, role: Role) -> Result<OpTrace> {
        self.run(role, Phase::Enter)
    }

    pub fn exit(&mut self, role: Role) -> Result<OpTrace> {
        self.run(role, Phase::Exit)
    }

    fn run(&mut self, role: Role, phase: Phase) -> Result<OpTrace> {
        let program = match role {
            Role::Reader => &self.reader,
            Role::Writer => &self.writer,
        };
        let mut pc = match phase {
            Phase::Enter => 0,
            Phase::Exit => program.cs_end,
        };
        let mut trace = Vec::new();
        let mut fuel = 4 * program.steps.len();
        loop {
            fuel = fuel.checked_sub(1).ok_or_else(|| {
                Error::MalformedProtocol("single-thread simulation did not terminate".into())
            })?;
            match &program.steps[pc] {
                CompiledStep::Wait(s) => {
                    if self.sem_values[*s] == 0 {
                        return Err(Error::Contract(format!(
                            "single-threaded {role} {phase} would block on {}",
                            self.def.sems[*s].name
                        )));
                    }
                    self.sem_values[*s] -= 1;
                    trace.push((SemOp::Wait, self.def.sems[*s].name.clone()));
                    pc += 1;
                }
                CompiledStep::Signal(s) => {
                    self.sem_values[*s] += 1;
                    trace.push((SemOp::Signal, self.def.sems[*s].name.clone()));
                    pc += 1;
                }
                CompiledStep::Add(v, d) => {
                    self.vars[*v] += d;
                    pc += 1;
                }
                CompiledStep::Store(v, c) => {
                    self.vars[*v] = *c;
                    pc += 1;
                }
                CompiledStep::Branch(cond, target) => {
                    pc = if cond.eval(&self.vars) { *target } else { pc + 1 };
                }
                CompiledStep::Goto(target) => pc = *target,
                CompiledStep::CsBegin => {
                    if phase == Phase::Enter {
                        return Ok(trace);
                    }
                    pc += 1;
                }
                CompiledStep::CsEnd => pc += 1,
                CompiledStep::End => {
                    if phase == Phase::Exit {
                        return Ok(trace);
                    }
                    return Err(Error::MalformedProtocol(
                        "enter phase ran past END".into(),
                    ));
                }
            }
        }
    }
}
