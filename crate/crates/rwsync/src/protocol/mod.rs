//! The four reader-writer protocols, encoded as data.
//!
//! A [`ProtocolDef`] declares semaphores and shared variables and gives one
//! atomic-step program per role. The same definition drives the model
//! checker, the runtime lock interpreter, and the symbolic operation-count
//! analyzer, so there is exactly one source of truth for what each
//! protocol does.
//!
//! Each [`Instruction`] is one atomic step. Compound pseudocode lines such
//! as "if (++ctr)==1 then Wait wrt" are split into ADD, BRANCH, and WAIT
//! steps; the split is what the checker interleaves.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub mod analysis;
pub mod lock;

pub use analysis::{sem_wait_counts, symbolic_trace, OpCountRow, Phase, Role, Scenario, SemOp};
pub use lock::{make_lock, CallProbe, ProtocolLock, RwLock};

/// Which of the four protocols a definition encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    /// Semaphore(R) room: readers take one permit, a writer drains all R.
    Naive,
    /// One mutex plus a reader counter; readers can starve the writer.
    Classic,
    /// Classic plus an entry gate `in` that queues arrivals behind a
    /// waiting writer.
    Fair,
    /// The one-mutex-per-reader-operation protocol: entry and exit gates
    /// plus in/out counters and a writer wait flag.
    FastFair,
}

impl ProtocolKind {
    pub fn base_name(&self) -> &'static str {
        match self {
            ProtocolKind::Naive => "naive",
            ProtocolKind::Classic => "classic",
            ProtocolKind::Fair => "fair",
            ProtocolKind::FastFair => "fastfair",
        }
    }

    pub const ALL: [ProtocolKind; 4] = [
        ProtocolKind::Naive,
        ProtocolKind::Classic,
        ProtocolKind::Fair,
        ProtocolKind::FastFair,
    ];
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base_name())
    }
}

/// A declared semaphore and its initial permit count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemDecl {
    pub name: Arc<str>,
    pub init: u64,
}

/// A declared shared variable and its initial value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: Arc<str>,
    pub init: i64,
}

/// One equality test over variables and constants.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    VarEqConst(Arc<str>, i64),
    VarEqVar(Arc<str>, Arc<str>),
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::VarEqConst(v, c) => write!(f, "{v} == {c}"),
            Atom::VarEqVar(a, b) => write!(f, "{a} == {b}"),
        }
    }
}

/// A conjunction of equality atoms, evaluated in one atomic step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cond {
    pub atoms: Vec<Atom>,
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

/// One atomic step of a role program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// Decrement-or-block on a declared semaphore.
    Wait(Arc<str>),
    /// Increment-or-handoff on a declared semaphore.
    Signal(Arc<str>),
    /// Add a constant (±1 in the protocols here) to a shared variable.
    Add(Arc<str>, i64),
    /// Overwrite a shared variable with a constant.
    Store(Arc<str>, i64),
    /// Jump to the label when the condition holds; fall through otherwise.
    Branch(Cond, Arc<str>),
    /// Unconditional jump.
    Goto(Arc<str>),
    /// Enter the critical section (occupancy bookkeeping only).
    CsBegin,
    /// Leave the critical section.
    CsEnd,
    /// Jump target marker; not an executable step.
    Label(Arc<str>),
    /// Program end; loops back to the start when iterations remain.
    End,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Wait(s) => write!(f, "WAIT {s}"),
            Instruction::Signal(s) => write!(f, "SIGNAL {s}"),
            Instruction::Add(v, d) => write!(f, "ADD {v} {d:+}"),
            Instruction::Store(v, c) => write!(f, "STORE {v} {c}"),
            Instruction::Branch(c, l) => write!(f, "BRANCH {c} -> {l}"),
            Instruction::Goto(l) => write!(f, "GOTO {l}"),
            Instruction::CsBegin => f.write_str("CS_BEGIN"),
            Instruction::CsEnd => f.write_str("CS_END"),
            Instruction::Label(l) => write!(f, "{l}:"),
            Instruction::End => f.write_str("END"),
        }
    }
}

/// A complete protocol: declarations plus one program per role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolDef {
    pub kind: ProtocolKind,
    pub sems: Vec<SemDecl>,
    pub vars: Vec<VarDecl>,
    pub reader: Vec<Instruction>,
    pub writer: Vec<Instruction>,
    /// Number of readers admitted simultaneously; `naive` only.
    pub capacity: Option<u32>,
}

impl ProtocolDef {
    /// Display name, e.g. `fastfair` or `naive(3)`.
    pub fn name(&self) -> String {
        match self.capacity {
            Some(r) => format!("{}({r})", self.kind),
            None => self.kind.to_string(),
        }
    }

    pub fn program(&self, role: Role) -> &[Instruction] {
        match role {
            Role::Reader => &self.reader,
            Role::Writer => &self.writer,
        }
    }

    pub fn sem_index(&self, name: &str) -> Option<usize> {
        self.sems.iter().position(|s| &*s.name == name)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| &*v.name == name)
    }

    /// Checks program well-formedness: unique labels, resolvable jump
    /// targets, declared semaphore/variable names, exactly one
    /// CS_BEGIN/CS_END pair in order, and a terminating END.
    pub fn validate(&self) -> Result<()> {
        for (role, program) in [(Role::Reader, &self.reader), (Role::Writer, &self.writer)] {
            self.validate_program(role, program)?;
        }
        Ok(())
    }

    fn validate_program(&self, role: Role, program: &[Instruction]) -> Result<()> {
        let ctx = |msg: String| Error::MalformedProtocol(format!("{} {role}: {msg}", self.name()));
        if program.is_empty() {
            return Err(ctx("empty program".into()));
        }
        let mut labels: Vec<&str> = Vec::new();
        for instr in program {
            if let Instruction::Label(l) = instr {
                if labels.contains(&&**l) {
                    return Err(ctx(format!("duplicate label {l}")));
                }
                labels.push(l);
            }
        }
        let mut begins = 0usize;
        let mut ends = 0usize;
        let mut saw_begin_at = None;
        for (i, instr) in program.iter().enumerate() {
            match instr {
                Instruction::Wait(s) | Instruction::Signal(s) => {
                    if self.sem_index(s).is_none() {
                        return Err(ctx(format!("undeclared semaphore {s}")));
                    }
                }
                Instruction::Add(v, _) | Instruction::Store(v, _) => {
                    if self.var_index(v).is_none() {
                        return Err(ctx(format!("undeclared variable {v}")));
                    }
                }
                Instruction::Branch(cond, l) => {
                    if !labels.iter().any(|known| *known == &**l) {
                        return Err(ctx(format!("branch to unknown label {l}")));
                    }
                    for atom in &cond.atoms {
                        let vars: Vec<&Arc<str>> = match atom {
                            Atom::VarEqConst(v, _) => vec![v],
                            Atom::VarEqVar(a, b) => vec![a, b],
                        };
                        for v in vars {
                            if self.var_index(v).is_none() {
                                return Err(ctx(format!("undeclared variable {v} in condition")));
                            }
                        }
                    }
                }
                Instruction::Goto(l) => {
                    if !labels.iter().any(|known| *known == &**l) {
                        return Err(ctx(format!("goto unknown label {l}")));
                    }
                }
                Instruction::CsBegin => {
                    begins += 1;
                    saw_begin_at = Some(i);
                }
                Instruction::CsEnd => {
                    ends += 1;
                    if saw_begin_at.is_none() {
                        return Err(ctx("CS_END before CS_BEGIN".into()));
                    }
                }
                Instruction::Label(_) | Instruction::End => {}
            }
        }
        if begins != 1 || ends != 1 {
            return Err(ctx(format!(
                "expected exactly one CS_BEGIN and one CS_END, found {begins}/{ends}"
            )));
        }
        match program.last() {
            Some(Instruction::End) => {}
            _ => return Err(ctx("program must end with END".into())),
        }
        // compile also resolves labels to step positions; surface its errors
        compile(self, role).map(|_| ())
    }

    /// The frozen line-oriented text form: declarations, then one section
    /// per role with one instruction per line and labels as `name:`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("protocol {}\n", self.name()));
        for s in &self.sems {
            out.push_str(&format!("sem {} = {}\n", s.name, s.init));
        }
        for v in &self.vars {
            out.push_str(&format!("var {} = {}\n", v.name, v.init));
        }
        for (header, program) in [("reader", &self.reader), ("writer", &self.writer)] {
            out.push_str(&format!("\n[{header}]\n"));
            for instr in program {
                match instr {
                    Instruction::Label(_) => out.push_str(&format!("{instr}\n")),
                    _ => out.push_str(&format!("  {instr}\n")),
                }
            }
        }
        out
    }
}

/// Builds one of the paper's protocols. `capacity` is required for
/// `naive` (the number of readers admitted simultaneously, R >= 1) and
/// must be absent for the other kinds.
pub fn build_protocol(kind: ProtocolKind, capacity: Option<u32>) -> Result<ProtocolDef> {
    let def = match kind {
        ProtocolKind::Naive => {
            let r = capacity.ok_or_else(|| {
                Error::InvalidParameter("naive requires a capacity R >= 1".into())
            })?;
            if r < 1 {
                return Err(Error::InvalidParameter(
                    "naive requires a capacity R >= 1".into(),
                ));
            }
            naive(r)
        }
        other => {
            if capacity.is_some() {
                return Err(Error::InvalidParameter(format!(
                    "{other} takes no capacity parameter"
                )));
            }
            match other {
                ProtocolKind::Classic => classic(),
                ProtocolKind::Fair => fair(),
                ProtocolKind::FastFair => fastfair(),
                ProtocolKind::Naive => unreachable!(),
            }
        }
    };
    debug_assert!(def.validate().is_ok());
    Ok(def)
}

fn wait(s: &str) -> Instruction {
    Instruction::Wait(s.into())
}
fn signal(s: &str) -> Instruction {
    Instruction::Signal(s.into())
}
fn add(v: &str, d: i64) -> Instruction {
    Instruction::Add(v.into(), d)
}
fn store(v: &str, c: i64) -> Instruction {
    Instruction::Store(v.into(), c)
}
fn goto(l: &str) -> Instruction {
    Instruction::Goto(l.into())
}
fn label(l: &str) -> Instruction {
    Instruction::Label(l.into())
}
fn br1(v: &str, c: i64, l: &str) -> Instruction {
    Instruction::Branch(
        Cond {
            atoms: vec![Atom::VarEqConst(v.into(), c)],
        },
        l.into(),
    )
}

fn sems(decls: &[(&str, u64)]) -> Vec<SemDecl> {
    decls
        .iter()
        .map(|(n, i)| SemDecl {
            name: (*n).into(),
            init: *i,
        })
        .collect()
}

fn vars(decls: &[(&str, i64)]) -> Vec<VarDecl> {
    decls
        .iter()
        .map(|(n, i)| VarDecl {
            name: (*n).into(),
            init: *i,
        })
        .collect()
}

fn naive(r: u32) -> ProtocolDef {
    let mut writer = Vec::new();
    for _ in 0..r {
        writer.push(wait("room"));
    }
    writer.push(Instruction::CsBegin);
    writer.push(Instruction::CsEnd);
    for _ in 0..r {
        writer.push(signal("room"));
    }
    writer.push(Instruction::End);
    ProtocolDef {
        kind: ProtocolKind::Naive,
        sems: sems(&[("room", r as u64)]),
        vars: vars(&[]),
        reader: vec![
            wait("room"),
            Instruction::CsBegin,
            Instruction::CsEnd,
            signal("room"),
            Instruction::End,
        ],
        writer,
        capacity: Some(r),
    }
}

fn classic_reader_entry(program: &mut Vec<Instruction>) {
    program.extend([
        wait("mx"),
        add("ctr", 1),
        br1("ctr", 1, "first_in"),
        goto("enter"),
        label("first_in"),
        wait("wrt"),
        label("enter"),
        signal("mx"),
    ]);
}

fn classic_reader_exit(program: &mut Vec<Instruction>) {
    program.extend([
        wait("mx"),
        add("ctr", -1),
        br1("ctr", 0, "last_out"),
        goto("leave"),
        label("last_out"),
        signal("wrt"),
        label("leave"),
        signal("mx"),
        Instruction::End,
    ]);
}

fn classic() -> ProtocolDef {
    let mut reader = Vec::new();
    classic_reader_entry(&mut reader);
    reader.push(Instruction::CsBegin);
    reader.push(Instruction::CsEnd);
    classic_reader_exit(&mut reader);
    ProtocolDef {
        kind: ProtocolKind::Classic,
        sems: sems(&[("mx", 1), ("wrt", 1)]),
        vars: vars(&[("ctr", 0)]),
        reader,
        writer: vec![
            wait("wrt"),
            Instruction::CsBegin,
            Instruction::CsEnd,
            signal("wrt"),
            Instruction::End,
        ],
        capacity: None,
    }
}

fn fair() -> ProtocolDef {
    let mut reader = vec![wait("in")];
    classic_reader_entry(&mut reader);
    reader.push(signal("in"));
    reader.push(Instruction::CsBegin);
    reader.push(Instruction::CsEnd);
    classic_reader_exit(&mut reader);
    ProtocolDef {
        kind: ProtocolKind::Fair,
        sems: sems(&[("in", 1), ("mx", 1), ("wrt", 1)]),
        vars: vars(&[("ctr", 0)]),
        reader,
        writer: vec![
            wait("in"),
            wait("wrt"),
            Instruction::CsBegin,
            Instruction::CsEnd,
            signal("wrt"),
            signal("in"),
            Instruction::End,
        ],
        capacity: None,
    }
}

fn fastfair() -> ProtocolDef {
    ProtocolDef {
        kind: ProtocolKind::FastFair,
        sems: sems(&[("in", 1), ("out", 1), ("wrt", 0)]),
        vars: vars(&[("ctrin", 0), ("ctrout", 0), ("wait", 0)]),
        reader: vec![
            wait("in"),
            add("ctrin", 1),
            signal("in"),
            Instruction::CsBegin,
            Instruction::CsEnd,
            wait("out"),
            add("ctrout", 1),
            Instruction::Branch(
                Cond {
                    atoms: vec![
                        Atom::VarEqConst("wait".into(), 1),
                        Atom::VarEqVar("ctrin".into(), "ctrout".into()),
                    ],
                },
                "wake_writer".into(),
            ),
            signal("out"),
            goto("done"),
            label("wake_writer"),
            signal("wrt"),
            signal("out"),
            label("done"),
            Instruction::End,
        ],
        writer: vec![
            wait("in"),
            wait("out"),
            Instruction::Branch(
                Cond {
                    atoms: vec![Atom::VarEqVar("ctrin".into(), "ctrout".into())],
                },
                "no_readers".into(),
            ),
            store("wait", 1),
            signal("out"),
            wait("wrt"),
            store("wait", 0),
            goto("enter"),
            label("no_readers"),
            signal("out"),
            label("enter"),
            Instruction::CsBegin,
            Instruction::CsEnd,
            signal("in"),
            Instruction::End,
        ],
        capacity: None,
    }
}

/// Executable form of one role program: labels resolved to step indices,
/// names resolved to declaration indices.
#[derive(Debug, Clone)]
pub(crate) struct CompiledProgram {
    pub steps: Vec<CompiledStep>,
    /// Step index -> index of the source instruction in the ProtocolDef
    /// program (labels excluded).
    pub source: Vec<usize>,
    pub cs_begin: usize,
    pub cs_end: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum CompiledStep {
    Wait(usize),
    Signal(usize),
    Add(usize, i64),
    Store(usize, i64),
    Branch(CompiledCond, usize),
    Goto(usize),
    CsBegin,
    CsEnd,
    End,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledCond {
    pub atoms: Vec<CompiledAtom>,
}

#[derive(Debug, Clone)]
pub(crate) enum CompiledAtom {
    VarEqConst(usize, i64),
    VarEqVar(usize, usize),
}

impl CompiledCond {
    pub fn eval(&self, vars: &[i64]) -> bool {
        self.atoms.iter().all(|atom| match *atom {
            CompiledAtom::VarEqConst(v, c) => vars[v] == c,
            CompiledAtom::VarEqVar(a, b) => vars[a] == vars[b],
        })
    }
}

pub(crate) fn compile(def: &ProtocolDef, role: Role) -> Result<CompiledProgram> {
    let program = def.program(role);
    let ctx = |msg: String| Error::MalformedProtocol(format!("{} {role}: {msg}", def.name()));

    // first pass: step layout and label resolution
    let mut label_pc: Vec<(Arc<str>, usize)> = Vec::new();
    let mut pc = 0usize;
    for instr in program {
        match instr {
            Instruction::Label(l) => label_pc.push((l.clone(), pc)),
            _ => pc += 1,
        }
    }
    let step_count = pc;
    let resolve_label = |l: &Arc<str>| -> Result<usize> {
        let target = label_pc
            .iter()
            .find(|(name, _)| name == l)
            .map(|(_, pc)| *pc)
            .ok_or_else(|| ctx(format!("unresolved label {l}")))?;
        if target >= step_count {
            return Err(ctx(format!("label {l} points past the final instruction")));
        }
        Ok(target)
    };
    let resolve_sem = |s: &Arc<str>| {
        def.sem_index(s)
            .ok_or_else(|| ctx(format!("undeclared semaphore {s}")))
    };
    let resolve_var = |v: &Arc<str>| {
        def.var_index(v)
            .ok_or_else(|| ctx(format!("undeclared variable {v}")))
    };

    let mut steps = Vec::with_capacity(step_count);
    let mut source = Vec::with_capacity(step_count);
    let mut cs_begin = None;
    let mut cs_end = None;
    for (idx, instr) in program.iter().enumerate() {
        let step = match instr {
            Instruction::Label(_) => continue,
            Instruction::Wait(s) => CompiledStep::Wait(resolve_sem(s)?),
            Instruction::Signal(s) => CompiledStep::Signal(resolve_sem(s)?),
            Instruction::Add(v, d) => CompiledStep::Add(resolve_var(v)?, *d),
            Instruction::Store(v, c) => CompiledStep::Store(resolve_var(v)?, *c),
            Instruction::Branch(cond, l) => {
                let atoms = cond
                    .atoms
                    .iter()
                    .map(|atom| {
                        Ok(match atom {
                            Atom::VarEqConst(v, c) => {
                                CompiledAtom::VarEqConst(resolve_var(v)?, *c)
                            }
                            Atom::VarEqVar(a, b) => {
                                CompiledAtom::VarEqVar(resolve_var(a)?, resolve_var(b)?)
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                CompiledStep::Branch(CompiledCond { atoms }, resolve_label(l)?)
            }
            Instruction::Goto(l) => CompiledStep::Goto(resolve_label(l)?),
            Instruction::CsBegin => {
                cs_begin = Some(steps.len());
                CompiledStep::CsBegin
            }
            Instruction::CsEnd => {
                cs_end = Some(steps.len());
                CompiledStep::CsEnd
            }
            Instruction::End => CompiledStep::End,
        };
        steps.push(step);
        source.push(idx);
    }
    let cs_begin = cs_begin.ok_or_else(|| ctx("missing CS_BEGIN".into()))?;
    let cs_end = cs_end.ok_or_else(|| ctx("missing CS_END".into()))?;
    if cs_end < cs_begin {
        return Err(ctx("CS_END precedes CS_BEGIN".into()));
    }
    Ok(CompiledProgram {
        steps,
        source,
        cs_begin,
        cs_end,
    })
}
