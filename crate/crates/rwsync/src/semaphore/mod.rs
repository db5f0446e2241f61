//! Counting-semaphore semantics, defined once and consumed twice.
//!
//! [`SemState`] is the *simulated* form: a pure value whose operations
//! ([`SemState::sim_wait`], [`SemState::sim_signal`]) return new states
//! instead of mutating. The model checker folds these over interleavings.
//! [`runtime::RuntimeSemaphore`] is the *blocking* form used by real
//! threads; it implements the same handoff semantics so that fairness
//! results observed under the checker transfer to the stress harness.
//!
//! A signal on a semaphore with queued waiters *hands the permit over* to
//! one waiter (chosen by [`WakePolicy`]) instead of incrementing the value.
//! OS-native semaphores typically barge (an arriving thread may seize a
//! permit ahead of queued waiters), which is why they are not used here as
//! the semantics reference.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub mod runtime;

pub use runtime::RuntimeSemaphore;

/// Identifier of a simulated thread. The model checker numbers readers
/// first, then writers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThreadId(pub usize);

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Rule selecting which queued waiter a signal wakes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WakePolicy {
    /// Wake the longest-waiting thread (queue head).
    Fifo,
    /// Wake the most recently blocked thread (queue tail).
    Lifo,
    /// Wake an arbitrary waiter. The checker branches over every choice;
    /// the runtime picks one with a generator seeded by `seed`.
    Random { seed: u64 },
}

impl WakePolicy {
    pub fn kind_str(&self) -> &'static str {
        match self {
            WakePolicy::Fifo => "fifo",
            WakePolicy::Lifo => "lifo",
            WakePolicy::Random { .. } => "random",
        }
    }

    /// Parses `fifo`, `lifo`, `random`, or `random:<seed>`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "fifo" => Ok(WakePolicy::Fifo),
            "lifo" | "filo" => Ok(WakePolicy::Lifo),
            "random" => Ok(WakePolicy::Random { seed: 0 }),
            _ => {
                if let Some(seed) = lower.strip_prefix("random:") {
                    let seed = seed.parse::<u64>().map_err(|_| {
                        Error::InvalidParameter(format!("bad random seed in policy {s:?}"))
                    })?;
                    Ok(WakePolicy::Random { seed })
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown wake policy {s:?} (expected fifo, lifo, random[:seed])"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for WakePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WakePolicy::Random { seed } => write!(f, "random:{seed}"),
            other => f.write_str(other.kind_str()),
        }
    }
}

/// Outcome of a simulated wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    Acquired,
    Blocked,
}

/// A simulated counting semaphore: available permits plus the queue of
/// blocked waiters in arrival order.
///
/// Invariants maintained by construction and checked by the model checker
/// on every reachable state:
/// * `value > 0` implies the queue is empty (no waiter starves while
///   permits exist),
/// * the queue holds no duplicate thread ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemState {
    pub name: Arc<str>,
    pub value: u64,
    pub queue: Vec<ThreadId>,
    pub policy: WakePolicy,
}

impl SemState {
    pub fn new(name: impl Into<Arc<str>>, value: u64, policy: WakePolicy) -> Self {
        SemState {
            name: name.into(),
            value,
            queue: Vec::new(),
            policy,
        }
    }

    /// True iff `t` is blocked on this semaphore.
    pub fn holds_waiter(&self, t: ThreadId) -> bool {
        self.queue.contains(&t)
    }

    /// Simulated decrement: acquire a permit or join the waiter queue.
    ///
    /// Pure; the input state is not mutated. A duplicate waiter is a
    /// contract violation (it would mean the interpreter let a blocked
    /// thread run).
    pub fn sim_wait(&self, t: ThreadId) -> Result<(SemState, WaitOutcome)> {
        if self.holds_waiter(t) {
            return Err(Error::Contract(format!(
                "thread {t} is already blocked on semaphore {}",
                self.name
            )));
        }
        let mut next = self.clone();
        if next.value > 0 {
            next.value -= 1;
            Ok((next, WaitOutcome::Acquired))
        } else {
            next.queue.push(t);
            Ok((next, WaitOutcome::Blocked))
        }
    }

    /// Simulated increment: every possible outcome of one signal.
    ///
    /// With an empty queue there is a single outcome (the value grows).
    /// With waiters queued the permit is handed off: FIFO and LIFO each
    /// yield one outcome; RANDOM yields one outcome per waiter, in queue
    /// order, and the caller branches over them.
    pub fn sim_signal(&self) -> Vec<(SemState, Option<ThreadId>)> {
        if self.queue.is_empty() {
            let mut next = self.clone();
            next.value += 1;
            return vec![(next, None)];
        }
        let wake_at = |idx: usize| {
            let mut next = self.clone();
            let woken = next.queue.remove(idx);
            (next, Some(woken))
        };
        match self.policy {
            WakePolicy::Fifo => vec![wake_at(0)],
            WakePolicy::Lifo => vec![wake_at(self.queue.len() - 1)],
            WakePolicy::Random { .. } => (0..self.queue.len()).map(wake_at).collect(),
        }
    }
}
