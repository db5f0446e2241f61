//! Brute-force interleaving enumerator used as an independent oracle for
//! the library's model checker.
//!
//! Written before the checker and kept deliberately separate from it: this
//! module re-implements instruction and semaphore semantics directly over
//! the `ProtocolDef` data, walks raw (un-canonicalized) states, and uses
//! its own state representation. Agreement between the two

//! implementations on every verdict is what the oracle-equivalence suite
//! asserts.

#![allow(dead_code)]

use std::collections::HashMap;

use rwsync::protocol::{Atom, Instruction, ProtocolDef, Role};
use rwsync::semaphore::WakePolicy;

#[derive(Clone)]
pub struct OracleConfig {
    pub def: ProtocolDef,
    pub readers: usize,
    pub writers: usize,
    /// `None` means every thread loops forever.
    pub iterations: Option<u32>,
    pub policy: WakePolicy,
    pub max_states: usize,
    pub track_overtaking: bool,
}

impl OracleConfig {
    pub fn new(def: ProtocolDef, readers: usize, writers: usize) -> Self {
        OracleConfig {
            def,
            readers,
            writers,
            iterations: Some(1),
            policy: WakePolicy::Fifo,
            max_states: 2_000_000,
            track_overtaking: false,
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    pub raw_states: usize,
    pub safety_violation: bool,
    pub deadlock: bool,
    pub overtaking_violation: bool,
    pub writer_starvation: bool,
    pub truncated: bool,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct RawState {
    /// Per thread: index into the source instruction list (never a label).
    pcs: Vec<usize>,
    iters: Vec<u32>,
    done: Vec<bool>,
    vars: Vec<i64>,
    sem_values: Vec<u64>,
    sem_queues: Vec<Vec<usize>>,
    in_cs: Vec<bool>,
    writer_pending: Vec<bool>,
    late: Vec<Vec<bool>>,
}

struct Oracle {
    cfg: OracleConfig,
    programs: Vec<Vec<Instruction>>, // per thread
    label_maps: Vec<HashMap<String, usize>>,
    threads: usize,
}

fn is_label(i: &Instruction) -> bool {
    matches!(i, Instruction::Label(_))
}

impl Oracle {
    fn new(cfg: OracleConfig) -> Self {
        let threads = cfg.readers + cfg.writers;
        let mut programs = Vec::new();
        let mut label_maps = Vec::new();
        for t in 0..threads {
            let role = if t < cfg.readers { Role::Reader } else { Role::Writer };
            let program: Vec<Instruction> = cfg.def.program(role).to_vec();
            let mut labels = HashMap::new();
            for (i, instr) in program.iter().enumerate() {
                if let Instruction::Label(l) = instr {
                    labels.insert(l.to_string(), i);
                }
            }
            programs.push(program);
            label_maps.push(labels);
        }
        Oracle {
            cfg,
            programs,
            label_maps,
            threads,
        }
    }

    fn is_reader(&self, t: usize) -> bool {
        t < self.cfg.readers
    }

    /// First executable instruction at or after `idx`.
    fn skip_labels(&self, t: usize, mut idx: usize) -> usize {
        while idx < self.programs[t].len() && is_label(&self.programs[t][idx]) {
            idx += 1;
        }
        idx
    }

    fn initial(&self) -> RawState {
        RawState {
            pcs: (0..self.threads).map(|t| self.skip_labels(t, 0)).collect(),
            iters: vec![0; self.threads],
            done: vec![false; self.threads],
            vars: self.cfg.def.vars.iter().map(|v| v.init).collect(),
            sem_values: self.cfg.def.sems.iter().map(|s| s.init).collect(),
            sem_queues: vec![Vec::new(); self.cfg.def.sems.len()],
            in_cs: vec![false; self.threads],
            writer_pending: vec![false; self.cfg.writers],
            late: vec![vec![false; self.cfg.writers]; self.cfg.readers],
        }
    }

    fn blocked(&self, s: &RawState, t: usize) -> bool {
        s.sem_queues.iter().any(|q| q.contains(&t))
    }

    fn runnable(&self, s: &RawState, t: usize) -> bool {
        !s.done[t] && !self.blocked(s, t)
    }

    fn var_idx(&self, name: &str) -> usize {
        self.cfg.def.var_index(name).expect("validated def")
    }

    fn sem_idx(&self, name: &str) -> usize {
        self.cfg.def.sem_index(name).expect("validated def")
    }

    fn eval(&self, s: &RawState, atoms: &[Atom]) -> bool {
        atoms.iter().all(|atom| match atom {
            Atom::VarEqConst(v, c) => s.vars[self.var_idx(v)] == *c,
            Atom::VarEqVar(a, b) => s.vars[self.var_idx(a)] == s.vars[self.var_idx(b)],
        })
    }

    /// Advance thread `t` past the instruction at its pc.
    fn advance(&self, s: &mut RawState, t: usize) {
        s.pcs[t] = self.skip_labels(t, s.pcs[t] + 1);
    }

    /// Apply thread `t`'s current instruction; returns every successor
    /// (more than one only for a RANDOM signal with several waiters).
    fn step(&self, s: &RawState, t: usize) -> Vec<RawState> {
        let at_start = s.pcs[t] == self.skip_labels(t, 0) && !s.done[t];
        let instr = &self.programs[t][s.pcs[t]];
        let mut base = s.clone();
        if self.cfg.track_overtaking && at_start {
            if self.is_reader(t) {
                for w in 0..self.cfg.writers {
                    if s.writer_pending[w] {
                        base.late[t][w] = true;
                    }
                }
            } else {
                base.writer_pending[t - self.cfg.readers] = true;
            }
        }
        match instr {
            Instruction::Wait(sem) => {
                let i = self.sem_idx(sem);
                if base.sem_values[i] > 0 {
                    base.sem_values[i] -= 1;
                    self.advance(&mut base, t);
                } else {
                    base.sem_queues[i].push(t);
                    // pc stays; the waker advances this thread
                }
                vec![base]
            }
            Instruction::Signal(sem) => {
                let i = self.sem_idx(sem);
                if base.sem_queues[i].is_empty() {
                    base.sem_values[i] += 1;
                    self.advance(&mut base, t);
                    return vec![base];
                }
                let picks: Vec<usize> = match self.cfg.policy {
                    WakePolicy::Fifo => vec![0],
                    WakePolicy::Lifo => vec![base.sem_queues[i].len() - 1],
                    WakePolicy::Random { .. } => (0..base.sem_queues[i].len()).collect(),
                };
                picks
                    .into_iter()
                    .map(|qpos| {
                        let mut next = base.clone();
                        let woken = next.sem_queues[i].remove(qpos);
                        self.advance(&mut next, woken);
                        self.advance(&mut next, t);
                        next
                    })
                    .collect()
            }
            Instruction::Add(v, d) => {
                let i = self.var_idx(v);
                base.vars[i] += d;
                self.advance(&mut base, t);
                vec![base]
            }
            Instruction::Store(v, c) => {
                let i = self.var_idx(v);
                base.vars[i] = *c;
                self.advance(&mut base, t);
                vec![base]
            }
            Instruction::Branch(cond, l) => {
                if self.eval(&base, &cond.atoms) {
                    base.pcs[t] = self.skip_labels(t, self.label_maps[t][&l.to_string()]);
                } else {
                    self.advance(&mut base, t);
                }
                vec![base]
            }
            Instruction::Goto(l) => {
                base.pcs[t] = self.skip_labels(t, self.label_maps[t][&l.to_string()]);
                vec![base]
            }
            Instruction::CsBegin => {
                base.in_cs[t] = true;
                if self.cfg.track_overtaking {
                    if self.is_reader(t) {
                        // violation is checked by the caller before flags reset
                    } else {
                        base.writer_pending[t - self.cfg.readers] = false;
                    }
                }
                self.advance(&mut base, t);
                vec![base]
            }
            Instruction::CsEnd => {
                base.in_cs[t] = false;
                self.advance(&mut base, t);
                vec![base]
            }
            Instruction::Label(_) => unreachable!("pc never rests on a label"),
            Instruction::End => {
                match self.cfg.iterations {
                    None => {
                        base.pcs[t] = self.skip_labels(t, 0);
                    }
                    Some(n) => {
                        if base.iters[t] + 1 < n {
                            base.iters[t] += 1;
                            base.pcs[t] = self.skip_labels(t, 0);
                        } else {
                            base.done[t] = true;
                        }
                    }
                }
                vec![base]
            }
        }
    }

    /// True when a reader that arrived while `w` was pending enters the CS
    /// with `w` still pending.
    fn overtaking_fires(&self, s: &RawState, t: usize) -> bool {
        if !self.is_reader(t) {
            return false;
        }
        if !matches!(self.programs[t][s.pcs[t]], Instruction::CsBegin) {
            return false;
        }
        (0..self.cfg.writers).any(|w| s.late[t][w] && s.writer_pending[w])
    }

    fn safety_violated(&self, s: &RawState) -> bool {
        let readers_in = (0..self.cfg.readers).filter(|&t| s.in_cs[t]).count();
        let writers_in = (self.cfg.readers..self.threads)
            .filter(|&t| s.in_cs[t])
            .count();
        if writers_in > 1 || (writers_in >= 1 && readers_in >= 1) {
            return true;
        }
        for (i, q) in s.sem_queues.iter().enumerate() {
            if s.sem_values[i] > 0 && !q.is_empty() {
                return true;
            }
            let mut sorted = q.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != q.len() {
                return true;
            }
        }
        // protocol-specific variable domains, keyed on declared names
        if let (Some(ci), Some(co)) = (
            self.cfg.def.var_index("ctrin"),
            self.cfg.def.var_index("ctrout"),
        ) {
            let diff = s.vars[ci] - s.vars[co];
            if diff < 0 || diff > self.cfg.readers as i64 {
                return true;
            }
        }
        if let Some(w) = self.cfg.def.var_index("wait") {
            if s.vars[w] != 0 && s.vars[w] != 1 {
                return true;
            }
        }
        if let Some(c) = self.cfg.def.var_index("ctr") {
            if s.vars[c] < 0 || s.vars[c] > self.cfg.readers as i64 {
                return true;
            }
        }
        if let Some(wrt) = self.cfg.def.sem_index("wrt") {
            if s.sem_values[wrt] > 1 {
                return true;
            }
        }
        false
    }
}

/// Exhaustively explores the raw state space and reports verdicts.
pub fn enumerate(cfg: OracleConfig) -> OracleVerdict {
    let track_starvation = cfg.iterations.is_none();
    let oracle = Oracle::new(cfg);
    let mut verdict = OracleVerdict::default();

    let init = oracle.initial();
    let mut index: HashMap<RawState, usize> = HashMap::new();
    let mut states: Vec<RawState> = Vec::new();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    index.insert(init.clone(), 0);
    states.push(init);
    edges.push(Vec::new());

    let mut stack = vec![0usize];
    let mut expanded = vec![false; 1];
    while let Some(id) = stack.pop() {
        if expanded[id] {
            continue;
        }
        expanded[id] = true;
        if states.len() > oracle.cfg.max_states {
            verdict.truncated = true;
            break;
        }
        let s = states[id].clone();
        if oracle.safety_violated(&s) {
            verdict.safety_violation = true;
            continue; // violating states are terminal
        }
        let runnable: Vec<usize> = (0..oracle.threads)
            .filter(|&t| oracle.runnable(&s, t))
            .collect();
        if runnable.is_empty() {
            if s.done.iter().any(|d| !d) {
                verdict.deadlock = true;
            }
            continue;
        }
        for t in runnable {
            if oracle.overtaking_fires(&s, t) {
                verdict.overtaking_violation = true;
            }
            for mut succ in oracle.step(&s, t) {
                if oracle.cfg.track_overtaking
                    && matches!(oracle.programs[t][s.pcs[t]], Instruction::CsBegin)
                    && oracle.is_reader(t)
                {
                    succ.late[t] = vec![false; oracle.cfg.writers];
                }
                let next_id = match index.get(&succ) {
                    Some(&i) => i,
                    None => {
                        let i = states.len();
                        index.insert(succ.clone(), i);
                        states.push(succ);
                        edges.push(Vec::new());
                        expanded.push(false);
                        stack.push(i);
                        i
                    }
                };
                edges[id].push(next_id);
            }
        }
    }
    verdict.raw_states = states.len();

    if track_starvation && !verdict.truncated {
        verdict.writer_starvation = (0..oracle.cfg.writers).any(|w| {
            let wt = oracle.cfg.readers + w;
            starved_cycle_exists(&oracle, &states, &edges, wt)
        });
    }
    verdict
}

/// Does a cycle exist among reachable states in which thread `wt` stays
/// blocked the whole way round? (Transitions by `wt` are impossible while
/// it is blocked, and any transition that wakes it leaves the subgraph.)
fn starved_cycle_exists(
    oracle: &Oracle,
    states: &[RawState],
    edges: &[Vec<usize>],
    wt: usize,
) -> bool {
    let in_sub: Vec<bool> = states.iter().map(|s| oracle.blocked(s, wt)).collect();
    // iterative DFS with colors over the subgraph
    let mut color = vec![0u8; states.len()]; // 0 white, 1 gray, 2 black
    for start in 0..states.len() {
        if !in_sub[start] || color[start] != 0 {
            continue;
        }
        let mut dfs: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = 1;
        while let Some(&mut (node, ref mut next)) = dfs.last_mut() {
            if *next < edges[node].len() {
                let succ = edges[node][*next];
                *next += 1;
                if !in_sub[succ] {
                    continue;
                }
                match color[succ] {
                    0 => {
                        color[succ] = 1;
                        dfs.push((succ, 0));
                    }
                    1 => return true, // back edge: cycle with wt blocked
                    _ => {}
                }
            } else {
                color[node] = 2;
                dfs.pop();
            }
        }
    }
    false
}
