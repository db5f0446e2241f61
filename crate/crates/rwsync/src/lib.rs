//! Reader-writer synchronization protocols over counting semaphores, with
//! an exhaustive interleaving checker and a real-thread stress harness.
//!
//! The crate has four layers:
//!
//! * [`semaphore`] — counting-semaphore semantics, in a pure simulated form
//!   (driven by the checker) and a blocking runtime form (driven by real
//!   threads), with FIFO, LIFO, and RANDOM wake policies.
//! * [`protocol`] — the four reader-writer protocols (`naive(R)`,
//!   `classic`, `fair`, `fastfair`) encoded as data: per-role atomic-step
//!   programs over declared semaphores and shared variables. One encoding
//!   feeds both the checker and the runtime lock interpreter, plus a
//!   symbolic analyzer that counts semaphore operations per path.
//! * [`modelcheck`] — exhaustive interleaving exploration at desk scale:
//!   mutual exclusion, semaphore invariants, deadlocks, writer starvation
//!   cycles, and reader overtaking, each with replayable witness traces.
//! * [`stress`] — a benchmark harness that runs the protocols under real
//!   contention with an always-on occupancy guard and instrumented
//!   semaphore-operation counts.
//!
//! The accompanying book (`book/` in the repository) walks through the
//! concepts chapter by chapter; its code snippets compile against this
//! crate as doc-tests.
//!
//! ```ignore
//! use rwsync::protocol::{build_protocol, ProtocolKind};
//! use rwsync::modelcheck::{CheckConfig, explore};
//! use rwsync::semaphore::WakePolicy;
//!
//! let def = build_protocol(ProtocolKind::FastFair, None).unwrap();
//! let cfg = CheckConfig::new(def, 2, 1).with_policy(WakePolicy::Fifo);
//! let report = explore(&cfg).unwrap();
//! assert!(report.safety_violations.is_empty());
//! assert!(report.deadlocks.is_empty());
//! ```

pub mod error;
pub mod protocol;
pub mod semaphore;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book;
