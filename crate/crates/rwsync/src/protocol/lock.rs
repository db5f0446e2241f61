//! Runtime interpretation of a protocol: a blocking reader-writer lock.
//!
//! `enter` runs the role program from its start through CS_BEGIN; `exit`
//! resumes at CS_END and runs through END. The caller's critical region is
//! whatever it does between the two calls. Shared variables are
//! sequentially consistent atomics because fastfair's writer stores `wait`
//! outside any mutex; semaphores are the crate's handoff-semantics runtime
//! form, so fairness observed under the model checker transfers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::error::{Error, Result};
use crate::semaphore::{RuntimeSemaphore, WakePolicy};

use super::analysis::{OpTrace, Phase, Role, SemOp};
use super::{compile, CompiledAtom, CompiledProgram, CompiledStep, ProtocolDef};

/// Per-call record of the semaphore operations an entry point executed,
/// in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallProbe {
    pub ops: OpTrace,
}

impl CallProbe {
    pub fn waits(&self) -> usize {
        self.ops.iter().filter(|(op, _)| *op == SemOp::Wait).count()
    }

    pub fn signals(&self) -> usize {
        self.ops.iter().filter(|(op, _)| *op == SemOp::Signal).count()
    }

    pub fn ops_on(&self, sem: &str) -> usize {
        self.ops.iter().filter(|(_, name)| &**name == sem).count()
    }
}

/// The four entry points of a reader-writer lock. A thread must call
/// enter/exit in strict alternation per role; each call returns a probe of
/// the semaphore operations it performed.
pub trait RwLock: Send + Sync {
    fn reader_enter(&self) -> Result<CallProbe>;
    fn reader_exit(&self) -> Result<CallProbe>;
    fn writer_enter(&self) -> Result<CallProbe>;
    fn writer_exit(&self) -> Result<CallProbe>;
}

/// A lock executing a [`ProtocolDef`] against runtime semaphores and
/// shared atomic variables.
pub struct ProtocolLock {
    def: ProtocolDef,
    reader: CompiledProgram,
    writer: CompiledProgram,
    sems: Vec<Arc<RuntimeSemaphore>>,
    vars: Vec<AtomicU64>,
    in_cs: Mutex<HashMap<(thread::ThreadId, bool), bool>>,
}

/// Builds the runtime lock for a protocol, with all of its semaphores
/// using the given wake policy.
pub fn make_lock(def: &ProtocolDef, policy: WakePolicy) -> Result<ProtocolLock> {
    def.validate()?;
    Ok(ProtocolLock {
        reader: compile(def, Role::Reader)?,
        writer: compile(def, Role::Writer)?,
        sems: def
            .sems
            .iter()
            .map(|s| Arc::new(RuntimeSemaphore::new(&*s.name, s.init, policy)))
            .collect(),
        vars: def.vars.iter().map(|v| AtomicU64::new(v.init as u64)).collect(),
        in_cs: Mutex::new(HashMap::new()),
        def: def.clone(),
    })
}

impl ProtocolLock {
    pub fn def(&self) -> &ProtocolDef {
        &self.def
    }

    /// The runtime semaphores, for reading instrumentation counters.
    pub fn semaphores(&self) -> &[Arc<RuntimeSemaphore>] {
        &self.sems
    }

    fn cond_holds(&self, atoms: &[CompiledAtom]) -> bool {
        atoms.iter().all(|atom| match *atom {
            CompiledAtom::VarEqConst(v, c) => {
                self.vars[v].load(Ordering::SeqCst) == c as u64
            }
            CompiledAtom::VarEqVar(a, b) => {
                self.vars[a].load(Ordering::SeqCst) == self.vars[b].load(Ordering::SeqCst)
            }
        })
    }

    fn run_phase(&self, role: Role, phase: Phase) -> CallProbe {
        let program = match role {
            Role::Reader => &self.reader,
            Role::Writer => &self.writer,
        };
        let mut pc = match phase {
            Phase::Enter => 0,
            Phase::Exit => program.cs_end,
        };
        let mut ops = Vec::new();
        loop {
            match &program.steps[pc] {
                CompiledStep::Wait(s) => {
                    self.sems[*s].acquire();
                    ops.push((SemOp::Wait, self.def.sems[*s].name.clone()));
                    pc += 1;
                }
                CompiledStep::Signal(s) => {
                    self.sems[*s].release();
                    ops.push((SemOp::Signal, self.def.sems[*s].name.clone()));
                    pc += 1;
                }
                CompiledStep::Add(v, d) => {
                    // fixed-width wraparound; the protocols only ever test
                    // equality between counters, which a common wrap keeps
                    self.vars[*v].fetch_add(*d as u64, Ordering::SeqCst);
                    pc += 1;
                }
                CompiledStep::Store(v, c) => {
                    self.vars[*v].store(*c as u64, Ordering::SeqCst);
                    pc += 1;
                }
                CompiledStep::Branch(cond, target) => {
                    pc = if self.cond_holds(&cond.atoms) { *target } else { pc + 1 };
                }
                CompiledStep::Goto(target) => pc = *target,
                CompiledStep::CsBegin => {
                    debug_assert!(phase == Phase::Enter);
                    return CallProbe { ops };
                }
                CompiledStep::CsEnd => pc += 1,
                CompiledStep::End => {
                    debug_assert!(phase == Phase::Exit);
                    return CallProbe { ops };
                }
            }
        }
    }

    fn checked_call(&self, role: Role, phase: Phase) -> Result<CallProbe> {
        let key = (thread::current().id(), role == Role::Writer);
        {
            let map = self.in_cs.lock().unwrap();
            let inside = map.get(&key).copied().unwrap_or(false);
            match phase {
                Phase::Enter if inside => {
                    return Err(Error::Contract(format!(
                        "{role}_enter called while already inside the critical section"
                    )))
                }
                Phase::Exit if !inside => {
                    return Err(Error::Contract(format!(
                        "{role}_exit called without a matching {role}_enter"
                    )))
                }
                _ => {}
            }
        }
        let probe = self.run_phase(role, phase);
        self.in_cs
            .lock()
            .unwrap()
            .insert(key, phase == Phase::Enter);
        Ok(probe)
    }
}

impl RwLock for ProtocolLock {
    fn reader_enter(&self) -> Result<CallProbe> {
        self.checked_call(Role::Reader, Phase::Enter)
    }

    fn reader_exit(&self) -> Result<CallProbe> {
        self.checked_call(Role::Reader, Phase::Exit)
    }

    fn writer_enter(&self) -> Result<CallProbe> {
        self.checked_call(Role::Writer, Phase::Enter)
    }

    fn writer_exit(&self) -> Result<CallProbe> {
        self.checked_call(Role::Writer, Phase::Exit)
    }
}
