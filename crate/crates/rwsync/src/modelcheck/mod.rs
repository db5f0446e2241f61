//! Exhaustive interleaving exploration of a protocol at desk scale.
//!
//! Every thread is an interpreter position in its role program; the
//! checker enumerates all schedules (and, under the RANDOM wake policy,
//! all handoff choices), asserting on every reachable state:
//!
//! * occupancy exclusion — at most one writer, and never a writer
//!   alongside readers,
//! * the semaphore invariants of the [`crate::semaphore`] module,
//! * protocol variable domains (`0 <= ctrin - ctrout <= readers`,
//!   `wait` in {0,1}, `0 <= ctr <= readers`, `wrt` value at most 1).
//!
//! Beyond safety and deadlock it searches for writer-starvation cycles
//! (with looping threads) and reader overtaking (with finite iterations),
//! producing replayable witness traces for everything it finds.
//!
//! Unbounded counters are made finite by [`canonicalize`]: states equal up
//! to a common additive shift of (ctrin, ctrout) collapse to one key,
//! which is sound because every protocol predicate tests only equality
//! between those two counters.

use std::fmt;

use crate::error::{Error, Result};
use crate::protocol::{compile, CompiledProgram, CompiledStep, Instruction, ProtocolDef, Role};
use crate::semaphore::{SemState, ThreadId, WakePolicy, WaitOutcome};

mod explore;
mod witness;

pub use explore::{check_overtaking, explore, find_writer_starvation, CheckReport};
pub use witness::{verify_witness, ViolationKind, Witness, WitnessStep};

/// How many times each thread repeats its program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Iterations {
    Finite(u32),
    /// Threads never finish; enables cycle-based (starvation) checks.
    Loop,
}

impl fmt::Display for Iterations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Iterations::Finite(n) => write!(f, "{n}"),
            Iterations::Loop => f.write_str("loop"),
        }
    }
}

/// Which properties a run checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSet {
    pub safety: bool,
    pub deadlock: bool,
    pub starvation: bool,
    pub overtaking: bool,
}

impl CheckSet {
    pub fn safety_and_deadlock() -> Self {
        CheckSet {
            safety: true,
            deadlock: true,
            starvation: false,
            overtaking: false,
        }
    }

    pub fn starvation() -> Self {
        CheckSet {
            safety: false,
            deadlock: false,
            starvation: true,
            overtaking: false,
        }
    }

    pub fn overtaking() -> Self {
        CheckSet {
            safety: false,
            deadlock: false,
            starvation: false,
            overtaking: true,
        }
    }
}

/// A model-checking run: protocol, thread configuration, policy, budget.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub protocol: ProtocolDef,
    pub readers: usize,
    pub writers: usize,
    pub iterations: Iterations,
    pub policy: WakePolicy,
    pub max_states: usize,
    pub checks: CheckSet,
    /// Collapse shift-equivalent counter states. On by default; turning it
    /// off is only feasible for finite-iteration configurations and exists
    /// so tests can confirm both routes reach the same verdicts.
    pub canonicalize: bool,
}

pub const DEFAULT_MAX_STATES: usize = 10_000_000;

impl CheckConfig {
    pub fn new(protocol: ProtocolDef, readers: usize, writers: usize) -> Self {
        CheckConfig {
            protocol,
            readers,
            writers,
            iterations: Iterations::Finite(1),
            policy: WakePolicy::Fifo,
            max_states: DEFAULT_MAX_STATES,
            checks: CheckSet::safety_and_deadlock(),
            canonicalize: true,
        }
    }

    pub fn with_policy(mut self, policy: WakePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_iterations(mut self, iterations: Iterations) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_checks(mut self, checks: CheckSet) -> Self {
        self.checks = checks;
        self
    }

    pub fn with_max_states(mut self, max_states: usize) -> Self {
        self.max_states = max_states;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.readers + self.writers < 1 {
            return Err(Error::InvalidConfig("need at least one thread".into()));
        }
        if self.readers + self.writers > 32 {
            return Err(Error::InvalidConfig("at most 32 threads".into()));
        }
        if self.max_states < 1 {
            return Err(Error::InvalidConfig("max_states must be at least 1".into()));
        }
        if self.checks.starvation && self.iterations != Iterations::Loop {
            return Err(Error::InvalidConfig(
                "starvation checking requires looping iterations".into(),
            ));
        }
        if self.checks.overtaking && self.iterations == Iterations::Loop {
            return Err(Error::InvalidConfig(
                "overtaking checking requires finite iterations".into(),
            ));
        }
        Ok(())
    }

    pub fn threads(&self) -> usize {
        self.readers + self.writers
    }

    pub fn role_of(&self, t: ThreadId) -> Role {
        if t.0 < self.readers {
            Role::Reader
        } else {
            Role::Writer
        }
    }

    /// Index of the thread within its role (R0, R1, ..., W0, W1, ...).
    pub fn role_index(&self, t: ThreadId) -> usize {
        match self.role_of(t) {
            Role::Reader => t.0,
            Role::Writer => t.0 - self.readers,
        }
    }

    pub fn thread_label(&self, t: ThreadId) -> String {
        match self.role_of(t) {
            Role::Reader => format!("R{}", self.role_index(t)),
            Role::Writer => format!("W{}", self.role_index(t)),
        }
    }
}

/// One thread's interpreter position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ThreadState {
    /// Program counter into the compiled step list.
    pub pc: u32,
    /// Completed repetitions (stays 0 under looping iterations).
    pub iter: u32,
    pub done: bool,
}

/// One node of the interleaving graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlobalState {
    pub threads: Vec<ThreadState>,
    pub vars: Vec<i64>,
    pub sems: Vec<SemState>,
    /// Bitmask of reader threads inside the critical section.
    pub cs_readers: u32,
    /// Bitmask of writer threads inside the critical section.
    pub cs_writers: u32,
    /// Overtaking bookkeeping (populated only when that check runs):
    /// writers that have begun their entry phase and not yet reached
    /// CS_BEGIN.
    pub writer_pending: u32,
    /// Per reader: the writers that were pending when this reader began
    /// its entry phase. Empty unless overtaking is tracked.
    pub late: Vec<u32>,
}

impl GlobalState {
    pub fn cs_reader_ids(&self, cfg: &CheckConfig) -> Vec<ThreadId> {
        (0..cfg.readers)
            .filter(|r| self.cs_readers & (1 << r) != 0)
            .map(ThreadId)
            .collect()
    }

    pub fn cs_writer_ids(&self, cfg: &CheckConfig) -> Vec<ThreadId> {
        (0..cfg.writers)
            .filter(|w| self.cs_writers & (1 << w) != 0)
            .map(|w| ThreadId(cfg.readers + w))
            .collect()
    }

    /// True iff `t` is blocked in some semaphore queue.
    pub fn blocked(&self, t: ThreadId) -> bool {
        self.sems.iter().any(|s| s.holds_waiter(t))
    }
}

/// Compiled protocol plus thread layout: everything `explore` needs to
/// step states.
pub(crate) struct Engine {
    pub cfg: CheckConfig,
    pub reader: CompiledProgram,
    pub writer: CompiledProgram,
    /// Variable indices of (ctrin, ctrout) when the protocol has them.
    pub shift_pair: Option<(usize, usize)>,
    pub track_overtaking: bool,
}

impl Engine {
    pub fn new(cfg: &CheckConfig) -> Result<Engine> {
        cfg.validate()?;
        let shift_pair = match (
            cfg.protocol.var_index("ctrin"),
            cfg.protocol.var_index("ctrout"),
        ) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        Ok(Engine {
            reader: compile(&cfg.protocol, Role::Reader)?,
            writer: compile(&cfg.protocol, Role::Writer)?,
            shift_pair,
            track_overtaking: cfg.checks.overtaking,
            cfg: cfg.clone(),
        })
    }

    pub fn program(&self, t: ThreadId) -> &CompiledProgram {
        match self.cfg.role_of(t) {
            Role::Reader => &self.reader,
            Role::Writer => &self.writer,
        }
    }

    /// The source-level instruction thread `t` executes next.
    pub fn instr_at(&self, s: &GlobalState, t: ThreadId) -> &Instruction {
        let program = self.program(t);
        let src = program.source[s.threads[t.0].pc as usize];
        &self.cfg.protocol.program(self.cfg.role_of(t))[src]
    }

    pub fn initial(&self) -> GlobalState {
        GlobalState {
            threads: vec![
                ThreadState {
                    pc: 0,
                    iter: 0,
                    done: false
                };
                self.cfg.threads()
            ],
            vars: self.cfg.protocol.vars.iter().map(|v| v.init).collect(),
            sems: self
                .cfg
                .protocol
                .sems
                .iter()
                .map(|s| SemState::new(s.name.clone(), s.init, self.cfg.policy))
                .collect(),
            cs_readers: 0,
            cs_writers: 0,
            writer_pending: 0,
            late: if self.track_overtaking {
                vec![0; self.cfg.readers]
            } else {
                Vec::new()
            },
        }
    }

    /// Threads that can take a step: unfinished and not blocked in a
    /// queue. A thread standing at WAIT is enabled (the step either
    /// acquires or blocks); a queued thread is advanced by its waker.
    pub fn enabled_threads(&self, s: &GlobalState) -> Vec<ThreadId> {
        (0..self.cfg.threads())
            .map(ThreadId)
            .filter(|&t| !s.threads[t.0].done && !s.blocked(t))
            .collect()
    }

    /// Applies thread `t`'s next instruction. Returns every successor
    /// (plural only for a RANDOM signal with several waiters) plus the
    /// thread each handoff woke.
    pub fn apply(&self, s: &GlobalState, t: ThreadId) -> Result<Vec<(GlobalState, Option<ThreadId>)>> {
        if s.threads[t.0].done || s.blocked(t) {
            return Err(Error::Contract(format!(
                "thread {} has no enabled transition",
                self.cfg.thread_label(t)
            )));
        }
        let program = self.program(t);
        let pc = s.threads[t.0].pc as usize;
        let mut base = s.clone();

        // Overtaking window: a thread taking any step from its program
        // start is executing the first instruction of its entry phase.
        if self.track_overtaking && pc == 0 {
            match self.cfg.role_of(t) {
                Role::Writer => {
                    base.writer_pending |= 1 << self.cfg.role_index(t);
                }
                Role::Reader => {
                    base.late[t.0] |= base.writer_pending;
                }
            }
        }

        let advance = |st: &mut GlobalState, who: ThreadId| {
            st.threads[who.0].pc += 1;
        };

        let successors = match &program.steps[pc] {
            CompiledStep::Wait(i) => {
                let (sem, outcome) = base.sems[*i].sim_wait(t)?;
                base.sems[*i] = sem;
                if outcome == WaitOutcome::Acquired {
                    advance(&mut base, t);
                }
                vec![(base, None)]
            }
            CompiledStep::Signal(i) => base.sems[*i]
                .sim_signal()
                .into_iter()
                .map(|(sem, woken)| {
                    let mut next = base.clone();
                    next.sems[*i] = sem;
                    if let Some(w) = woken {
                        // handoff: the woken thread moves past its WAIT
                        advance(&mut next, w);
                    }
                    advance(&mut next, t);
                    (next, woken)
                })
                .collect(),
            CompiledStep::Add(v, d) => {
                base.vars[*v] += d;
                advance(&mut base, t);
                vec![(base, None)]
            }
            CompiledStep::Store(v, c) => {
                base.vars[*v] = *c;
                advance(&mut base, t);
                vec![(base, None)]
            }
            CompiledStep::Branch(cond, target) => {
                base.threads[t.0].pc = if cond.eval(&base.vars) {
                    *target as u32
                } else {
                    pc as u32 + 1
                };
                vec![(base, None)]
            }
            CompiledStep::Goto(target) => {
                base.threads[t.0].pc = *target as u32;
                vec![(base, None)]
            }
            CompiledStep::CsBegin => {
                match self.cfg.role_of(t) {
                    Role::Reader => {
                        base.cs_readers |= 1 << self.cfg.role_index(t);
                        if self.track_overtaking {
                            base.late[t.0] = 0;
                        }
                    }
                    Role::Writer => {
                        base.cs_writers |= 1 << self.cfg.role_index(t);
                        if self.track_overtaking {
                            base.writer_pending &= !(1 << self.cfg.role_index(t));
                        }
                    }
                }
                advance(&mut base, t);
                vec![(base, None)]
            }
            CompiledStep::CsEnd => {
                match self.cfg.role_of(t) {
                    Role::Reader => base.cs_readers &= !(1 << self.cfg.role_index(t)),
                    Role::Writer => base.cs_writers &= !(1 << self.cfg.role_index(t)),
                }
                advance(&mut base, t);
                vec![(base, None)]
            }
            CompiledStep::End => {
                match self.cfg.iterations {
                    Iterations::Loop => {
                        base.threads[t.0].pc = 0;
                    }
                    Iterations::Finite(n) => {
                        if base.threads[t.0].iter + 1 < n {
                            base.threads[t.0].iter += 1;
                            base.threads[t.0].pc = 0;
                        } else {
                            base.threads[t.0].done = true;
                        }
                    }
                }
                vec![(base, None)]
            }
        };
        Ok(successors)
    }

    /// Normalizes (ctrin, ctrout) to (ctrin - ctrout, 0). Sound because
    /// every protocol predicate tests those counters only against each
    /// other, and increments are shift-invariant.
    pub fn canonicalize(&self, s: &mut GlobalState) {
        if !self.cfg.canonicalize {
            return;
        }
        if let Some((ci, co)) = self.shift_pair {
            let diff = s.vars[ci] - s.vars[co];
            s.vars[ci] = diff;
            s.vars[co] = 0;
        }
    }

    /// Safety assertion on one state; `None` means the state is clean.
    pub fn safety_error(&self, s: &GlobalState) -> Option<String> {
        let readers_in = s.cs_readers.count_ones();
        let writers_in = s.cs_writers.count_ones();
        if writers_in > 1 {
            return Some(format!("{writers_in} writers inside the critical section"));
        }
        if writers_in == 1 && readers_in > 0 {
            return Some(format!(
                "a writer and {readers_in} reader(s) share the critical section"
            ));
        }
        for sem in &s.sems {
            if sem.value > 0 && !sem.queue.is_empty() {
                return Some(format!(
                    "semaphore {} has value {} with waiters queued",
                    sem.name, sem.value
                ));
            }
            let mut q = sem.queue.clone();
            q.sort_unstable();
            q.dedup();
            if q.len() != sem.queue.len() {
                return Some(format!("semaphore {} queue holds a duplicate waiter", sem.name));
            }
        }
        if let Some((ci, co)) = self.shift_pair {
            let diff = s.vars[ci] - s.vars[co];
            if diff < 0 || diff > self.cfg.readers as i64 {
                return Some(format!("ctrin - ctrout = {diff} outside [0, readers]"));
            }
        }
        if let Some(w) = self.cfg.protocol.var_index("wait") {
            if s.vars[w] != 0 && s.vars[w] != 1 {
                return Some(format!("wait = {} outside {{0, 1}}", s.vars[w]));
            }
        }
        if let Some(c) = self.cfg.protocol.var_index("ctr") {
            if s.vars[c] < 0 || s.vars[c] > self.cfg.readers as i64 {
                return Some(format!("ctr = {} outside [0, readers]", s.vars[c]));
            }
        }
        if let Some(wrt) = self.cfg.protocol.sem_index("wrt") {
            if s.sems[wrt].value > 1 {
                return Some(format!("wrt value {} exceeds 1", s.sems[wrt].value));
            }
        }
        None
    }
}

/// The state every thread starts from: program starts, declared initial
/// values, empty occupancy.
pub fn initial_state(cfg: &CheckConfig) -> Result<GlobalState> {
    Ok(Engine::new(cfg)?.initial())
}

/// The (thread, next instruction) pairs with a transition in `s`.
pub fn enabled(cfg: &CheckConfig, s: &GlobalState) -> Result<Vec<(ThreadId, Instruction)>> {
    let engine = Engine::new(cfg)?;
    Ok(engine
        .enabled_threads(s)
        .into_iter()
        .map(|t| (t, engine.instr_at(s, t).clone()))
        .collect())
}

/// Applies `t`'s next instruction to `s`, yielding every successor state.
pub fn apply(cfg: &CheckConfig, s: &GlobalState, t: ThreadId) -> Result<Vec<GlobalState>> {
    let engine = Engine::new(cfg)?;
    Ok(engine.apply(s, t)?.into_iter().map(|(s, _)| s).collect())
}

/// The canonical key of `s`: (ctrin, ctrout) stored as their difference.
/// States of protocols without that counter pair are their own key.
pub fn canonicalize(cfg: &CheckConfig, s: &GlobalState) -> Result<GlobalState> {
    let engine = Engine::new(cfg)?;
    let mut key = s.clone();
    // the public key is shift-normalized regardless of the exploration flag
    if let Some((ci, co)) = engine.shift_pair {
        let diff = key.vars[ci] - key.vars[co];
        key.vars[ci] = diff;
        key.vars[co] = 0;
    }
    Ok(key)
}
