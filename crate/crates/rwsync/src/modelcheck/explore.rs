//! The exploration engine: deterministic depth-first search over
//! canonicalized states with a visited set.
//!
//! Exploration order is fixed — thread ids ascending, handoff fan-out in
//! waiter-queue order — so two runs of the same configuration produce
//! identical reports, witnesses included. Safety-violating states are
//! recorded and not expanded further.

use std::collections::HashMap;

use crate::error::Result;
use crate::protocol::Role;
use crate::semaphore::ThreadId;

use super::witness::{ViolationKind, Witness, WitnessStep};
use super::{CheckConfig, Engine, GlobalState, Iterations};

/// Everything one exploration produced.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub states_explored: u64,
    pub transitions_explored: u64,
    /// Set when the state budget was exhausted; the listed results are
    /// then a lower bound, not a proof.
    pub truncated: bool,
    pub safety_violations: Vec<Witness>,
    pub deadlocks: Vec<Witness>,
    pub starvation_cycles: Vec<Witness>,
    pub overtaking_violations: Vec<Witness>,
}

impl CheckReport {
    /// True when no checked property was violated.
    pub fn clean(&self) -> bool {
        self.safety_violations.is_empty()
            && self.deadlocks.is_empty()
            && self.starvation_cycles.is_empty()
            && self.overtaking_violations.is_empty()
    }
}

#[derive(Clone, Copy)]
struct StepRec {
    thread: ThreadId,
    /// Queue position the handoff woke, for fan-out bookkeeping.
    woken: Option<ThreadId>,
}

struct Explorer {
    engine: Engine,
    states: Vec<GlobalState>,
    index: HashMap<GlobalState, u32>,
    /// Discovery edge of each state (none for the initial state).
    parent: Vec<Option<(u32, StepRec)>>,
    /// Safety-violating states are terminal.
    violating: Vec<bool>,
    expanded: Vec<bool>,
    /// Full adjacency, kept only when a cycle search will need it.
    adjacency: Option<Vec<Vec<(StepRec, u32)>>>,
    report: CheckReport,
}

impl Explorer {
    fn new(engine: Engine) -> Self {
        let keep_adjacency = engine.cfg.checks.starvation;
        Explorer {
            engine,
            states: Vec::new(),
            index: HashMap::new(),
            parent: Vec::new(),
            violating: Vec::new(),
            expanded: Vec::new(),
            adjacency: if keep_adjacency { Some(Vec::new()) } else { None },
            report: CheckReport::default(),
        }
    }

    fn intern(&mut self, state: GlobalState, from: Option<(u32, StepRec)>) -> Option<u32> {
        if let Some(&id) = self.index.get(&state) {
            return Some(id);
        }
        if self.states.len() >= self.engine.cfg.max_states {
            self.report.truncated = true;
            return None;
        }
        let id = self.states.len() as u32;
        self.index.insert(state.clone(), id);
        self.states.push(state);
        self.parent.push(from);
        self.expanded.push(false);
        self.violating.push(false);
        if let Some(adj) = &mut self.adjacency {
            adj.push(Vec::new());
        }
        if self.engine.cfg.checks.safety {
            if let Some(desc) = self.engine.safety_error(&self.states[id as usize]) {
                self.violating[id as usize] = true;
                let witness = self.witness_to(id, ViolationKind::Safety, desc, None);
                self.report.safety_violations.push(witness);
            }
        }
        Some(id)
    }

    /// The discovery path from the initial state to `id`.
    fn path_to(&self, id: u32) -> Vec<WitnessStep> {
        let mut rev: Vec<(u32, StepRec)> = Vec::new();
        let mut cursor = id;
        while let Some((pred, step)) = self.parent[cursor as usize] {
            rev.push((pred, step));
            cursor = pred;
        }
        rev.reverse();
        rev.into_iter().map(|(pred, step)| self.step_at(pred, step)).collect()
    }

    fn step_at(&self, pre: u32, step: StepRec) -> WitnessStep {
        let s = &self.states[pre as usize];
        WitnessStep {
            thread: step.thread,
            label: self.engine.cfg.thread_label(step.thread),
            instr: self.engine.instr_at(s, step.thread).clone(),
            woken: step.woken,
        }
    }

    fn witness_to(
        &self,
        id: u32,
        kind: ViolationKind,
        description: String,
        extra: Option<WitnessStep>,
    ) -> Witness {
        let mut steps = self.path_to(id);
        steps.extend(extra);
        Witness {
            kind,
            description,
            steps,
            cycle_start: None,
            victim: None,
        }
    }

    fn run(&mut self) {
        let initial = {
            let mut s = self.engine.initial();
            self.engine.canonicalize(&mut s);
            s
        };
        let Some(root) = self.intern(initial, None) else {
            return;
        };
        let mut stack = vec![root];
        'dfs: while let Some(id) = stack.pop() {
            if self.expanded[id as usize] || self.violating[id as usize] {
                continue;
            }
            self.expanded[id as usize] = true;
            let s = self.states[id as usize].clone();
            let runnable = self.engine.enabled_threads(&s);
            if runnable.is_empty() {
                let unfinished = s.threads.iter().any(|t| !t.done);
                if unfinished && self.engine.cfg.checks.deadlock {
                    let desc = describe_deadlock(&self.engine, &s);
                    let witness = self.witness_to(id, ViolationKind::Deadlock, desc, None);
                    self.report.deadlocks.push(witness);
                }
                continue;
            }
            // reverse push order so lower thread ids are explored first
            let mut pushes: Vec<u32> = Vec::new();
            for t in runnable {
                if self.engine.track_overtaking && self.overtaking_fires(&s, t) {
                    let step = StepRec { thread: t, woken: None };
                    let extra = self.step_at(id, step);
                    let mut witness = self.witness_to(
                        id,
                        ViolationKind::Overtaking,
                        format!(
                            "reader {} entered the critical section ahead of a writer it arrived after",
                            self.engine.cfg.thread_label(t)
                        ),
                        Some(extra),
                    );
                    witness.victim = Some(t);
                    self.report.overtaking_violations.push(witness);
                }
                let successors = self
                    .engine
                    .apply(&s, t)
                    .expect("runnable threads step");
                for (mut succ, woken) in successors {
                    self.engine.canonicalize(&mut succ);
                    self.report.transitions_explored += 1;
                    let step = StepRec { thread: t, woken };
                    let Some(nid) = self.intern(succ, Some((id, step))) else {
                        break 'dfs;
                    };
                    if let Some(adj) = &mut self.adjacency {
                        adj[id as usize].push((step, nid));
                    }
                    pushes.push(nid);
                }
            }
            for nid in pushes.into_iter().rev() {
                stack.push(nid);
            }
        }
        self.report.states_explored = self.states.len() as u64;
        if self.engine.cfg.checks.starvation && !self.report.truncated {
            self.find_starvation_cycles();
        }
    }

    /// True when `t` is a reader about to execute CS_BEGIN while a writer
    /// it arrived after is still pending.
    fn overtaking_fires(&self, s: &GlobalState, t: ThreadId) -> bool {
        use crate::protocol::Instruction;
        if self.engine.cfg.role_of(t) != Role::Reader {
            return false;
        }
        if !matches!(self.engine.instr_at(s, t), Instruction::CsBegin) {
            return false;
        }
        s.late[t.0] & s.writer_pending != 0
    }

    /// Searches, per writer, for a reachable cycle in which that writer
    /// stays blocked the whole way round. Such a cycle is starvation no
    /// scheduler could fix: the victim has no transitions anywhere on it.
    fn find_starvation_cycles(&mut self) {
        let adjacency = self.adjacency.as_ref().expect("kept for starvation runs");
        for w in 0..self.engine.cfg.writers {
            let victim = ThreadId(self.engine.cfg.readers + w);
            if let Some((entry, cycle)) = self.blocked_cycle(adjacency, victim) {
                let stem = self.path_to(entry);
                let cycle_start = stem.len();
                let mut steps = stem;
                steps.extend(cycle.into_iter().map(|(pre, step)| self.step_at(pre, step)));
                self.report.starvation_cycles.push(Witness {
                    kind: ViolationKind::Starvation,
                    description: format!(
                        "writer {} stays blocked around a cycle of {} step(s)",
                        self.engine.cfg.thread_label(victim),
                        steps.len() - cycle_start
                    ),
                    steps,
                    cycle_start: Some(cycle_start),
                    victim: Some(victim),
                });
            }
        }
    }

    /// First cycle (in exploration order) through states where `victim`
    /// is blocked. Returns the cycle entry state and the edge list.
    fn blocked_cycle(
        &self,
        adjacency: &[Vec<(StepRec, u32)>],
        victim: ThreadId,
    ) -> Option<(u32, Vec<(u32, StepRec)>)> {
        let n = self.states.len();
        let in_sub: Vec<bool> = self.states.iter().map(|s| s.blocked(victim)).collect();
        let mut color = vec![0u8; n]; // 0 white, 1 gray, 2 black

        struct Frame {
            node: u32,
            edge: usize,
            /// Edge that led here from the previous frame.
            via: Option<(u32, StepRec)>,
        }

        for start in 0..n as u32 {
            if !in_sub[start as usize] || color[start as usize] != 0 {
                continue;
            }
            let mut stack = vec![Frame {
                node: start,
                edge: 0,
                via: None,
            }];
            color[start as usize] = 1;
            while let Some(top) = stack.last() {
                let node = top.node;
                let edge = top.edge;
                if edge >= adjacency[node as usize].len() {
                    color[node as usize] = 2;
                    stack.pop();
                    continue;
                }
                stack.last_mut().unwrap().edge += 1;
                let (step, succ) = adjacency[node as usize][edge];
                if !in_sub[succ as usize] {
                    continue;
                }
                match color[succ as usize] {
                    0 => {
                        color[succ as usize] = 1;
                        stack.push(Frame {
                            node: succ,
                            edge: 0,
                            via: Some((node, step)),
                        });
                    }
                    1 => {
                        // back edge: succ is on the stack; the cycle runs
                        // from succ's frame to the top, then closes.
                        let pos = stack
                            .iter()
                            .position(|f| f.node == succ)
                            .expect("gray node is on the DFS stack");
                        let mut cycle: Vec<(u32, StepRec)> = stack[pos + 1..]
                            .iter()
                            .map(|f| f.via.expect("non-root frames have a via edge"))
                            .collect();
                        cycle.push((node, step));
                        return Some((succ, cycle));
                    }
                    _ => {}
                }
            }
        }
        None
    }
}

fn describe_deadlock(engine: &Engine, s: &GlobalState) -> String {
    let blocked: Vec<String> = (0..engine.cfg.threads())
        .map(ThreadId)
        .filter(|&t| !s.threads[t.0].done)
        .map(|t| {
            let on = s
                .sems
                .iter()
                .find(|sem| sem.holds_waiter(t))
                .map(|sem| sem.name.to_string())
                .unwrap_or_else(|| "nothing".into());
            format!("{} on {}", engine.cfg.thread_label(t), on)
        })
        .collect();
    format!("no thread can run; blocked: {}", blocked.join(", "))
}

/// Exhaustively explores `cfg`, checking everything in `cfg.checks`.
pub fn explore(cfg: &CheckConfig) -> Result<CheckReport> {
    let engine = Engine::new(cfg)?;
    let mut explorer = Explorer::new(engine);
    explorer.run();
    Ok(explorer.report)
}

/// Convenience wrapper: looks for a cycle in which a writer stays blocked
/// while looping readers make progress. Requires looping iterations.
pub fn find_writer_starvation(cfg: &CheckConfig) -> Result<Option<Witness>> {
    let mut cfg = cfg.clone();
    cfg.iterations = Iterations::Loop;
    cfg.checks.starvation = true;
    cfg.checks.overtaking = false;
    let report = explore(&cfg)?;
    Ok(report.starvation_cycles.into_iter().next())
}

/// Convenience wrapper: reports every distinct state in which a reader
/// that arrived after a pending writer enters the critical section first.
/// Requires finite iterations.
pub fn check_overtaking(cfg: &CheckConfig) -> Result<Vec<Witness>> {
    let mut cfg = cfg.clone();
    cfg.checks.overtaking = true;
    cfg.checks.starvation = false;
    let report = explore(&cfg)?;
    Ok(report.overtaking_violations)
}
