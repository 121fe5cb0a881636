//! The top layer: a counted action-conditioned transition graph over
//! prototypes (relational learning), goal selection scored by value plus
//! learning progress, max-likelihood path planning, and an addressable
//! episodic memory.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::Rng;
use thiserror::Error;

use crate::num::{lit, Scalar};
use crate::rng::SimRng;
use crate::soma::{Drive, PerDrive};
use crate::world::ACTION_COUNT;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("action index {0} out of range")]
    BadAction(u8),
    #[error("no goals available")]
    NoGoals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContextualParams<S> {
    /// Weight of the learning-progress bonus in goal scores.
    pub beta: S,
    /// Exploration rate of goal selection.
    pub eps_goal: S,
    /// Learning-progress window length (the outcome ring holds `2 * w_lp`).
    pub w_lp: usize,
    /// Consecutive plan mismatches tolerated before aborting.
    pub m_max: u32,
    /// Additive per-edge planning cost on top of `-ln p`.
    pub c_step: S,
    /// Steps allowed for a goal attempt before it counts as a failure.
    pub h_goal: u64,
    /// Episodic memory capacity; oldest entries are evicted beyond it.
    pub memory_capacity: usize,
}

impl<S: Scalar> Default for ContextualParams<S> {
    fn default() -> Self {
        Self {
            beta: lit(0.5),
            eps_goal: lit(0.1),
            w_lp: 10,
            m_max: 2,
            c_step: lit(0.01),
            h_goal: 150,
            memory_capacity: 1_000_000,
        }
    }
}

/// Counted `(p, a) -> p'` edges. Probabilities are exact count ratios; sums
/// per `(p, a)` are checked in integer arithmetic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionGraph {
    counts: BTreeMap<(u32, u8), BTreeMap<u32, u64>>,
    totals: BTreeMap<(u32, u8), u64>,
}

impl TransitionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, p: u32, a: u8, p_next: u32) -> Result<(), ContextError> {
        if a as usize >= ACTION_COUNT {
            return Err(ContextError::BadAction(a));
        }
        *self.counts.entry((p, a)).or_default().entry(p_next).or_insert(0) += 1;
        *self.totals.entry((p, a)).or_insert(0) += 1;
        Ok(())
    }

    pub fn total(&self, p: u32, a: u8) -> u64 {
        self.totals.get(&(p, a)).copied().unwrap_or(0)
    }

    pub fn count(&self, p: u32, a: u8, p_next: u32) -> u64 {
        self.counts.get(&(p, a)).and_then(|m| m.get(&p_next)).copied().unwrap_or(0)
    }

    /// Exact probability as a `(count, total)` ratio.
    pub fn prob_ratio(&self, p: u32, a: u8, p_next: u32) -> (u64, u64) {
        (self.count(p, a, p_next), self.total(p, a))
    }

    pub fn prob(&self, p: u32, a: u8, p_next: u32) -> f64 {
        let (n, t) = self.prob_ratio(p, a, p_next);
        if t == 0 {
            0.0
        } else {
            n as f64 / t as f64
        }
    }

    /// Iterate all edges with positive count in `(p, a, p')` order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u8, u32, u64)> + '_ {
        self.counts.iter().flat_map(|(&(p, a), succ)| {
            succ.iter().map(move |(&pn, &n)| (p, a, pn, n))
        })
    }

    /// Deterministic edge-list text form: one `p a p' count` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (p, a, pn, n) in self.edges() {
            out.push_str(&format!("{p} {a} {pn} {n}\n"));
        }
        out
    }

    /// Parse the edge-list text form (hand-authored graphs are planned over
    /// the same way as learned ones).
    pub fn from_edge_list(text: &str) -> Result<Self, String> {
        let mut g = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = |name: &str| -> Result<u64, String> {
                it.next()
                    .ok_or_else(|| format!("line {}: missing {name}", i + 1))?
                    .parse::<u64>()
                    .map_err(|e| format!("line {}: bad {name}: {e}", i + 1))
            };
            let p = next("p")? as u32;
            let a = next("a")? as u8;
            let pn = next("p'")? as u32;
            let n = next("count")?;
            for _ in 0..n {
                g.record(p, a, pn).map_err(|e| format!("line {}: {e}", i + 1))?;
            }
        }
        Ok(g)
    }
}

/// Outcome ring and learning-progress estimate for one goal prototype.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalRecord {
    ring: VecDeque<bool>,
    w_lp: usize,
}

impl GoalRecord {
    fn new(w_lp: usize) -> Self {
        Self { ring: VecDeque::with_capacity(2 * w_lp), w_lp }
    }

    pub fn outcomes(&self) -> impl Iterator<Item = bool> + '_ {
        self.ring.iter().copied()
    }

    /// `LP = |mean(recent w)| - |mean(previous w)|`; zero until the ring
    /// holds `2 * w_lp` outcomes.
    pub fn learning_progress<S: Scalar>(&self) -> S {
        if self.ring.len() < 2 * self.w_lp {
            return S::zero();
        }
        let mean = |it: &mut dyn Iterator<Item = &bool>| -> f64 {
            let mut sum = 0.0;
            let mut n = 0.0;
            for &b in it {
                sum += if b { 1.0 } else { 0.0 };
                n += 1.0;
            }
            sum / n
        };
        let prev = mean(&mut self.ring.iter().take(self.w_lp));
        let recent = mean(&mut self.ring.iter().skip(self.w_lp));
        lit(recent.abs() - prev.abs())
    }
}

/// All goal records for one agent, keyed by goal prototype.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalBook {
    records: BTreeMap<u32, GoalRecord>,
    w_lp: usize,
}

impl GoalBook {
    pub fn new(w_lp: usize) -> Self {
        assert!(w_lp >= 1);
        Self { records: BTreeMap::new(), w_lp }
    }

    pub fn record(&mut self, goal: u32) -> &GoalRecord {
        let w = self.w_lp;
        self.records.entry(goal).or_insert_with(|| GoalRecord::new(w))
    }

    pub fn get(&self, goal: u32) -> Option<&GoalRecord> {
        self.records.get(&goal)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &GoalRecord)> {
        self.records.iter().map(|(&g, r)| (g, r))
    }

    /// Append an attempt outcome (auto-registering the goal) and keep the
    /// ring within its `2 * w_lp` capacity.
    pub fn update_outcome(&mut self, goal: u32, success: bool) {
        let w = self.w_lp;
        let rec = self.records.entry(goal).or_insert_with(|| GoalRecord::new(w));
        if rec.ring.len() == 2 * w {
            rec.ring.pop_front();
        }
        rec.ring.push_back(success);
    }

    pub fn learning_progress<S: Scalar>(&self, goal: u32) -> S {
        self.records.get(&goal).map(|r| r.learning_progress()).unwrap_or_else(S::zero)
    }
}

/// Score every prototype by `V_drive(p) + beta * max(LP(p), 0)` and pick
/// eps-greedily: uniform random prototype with probability `eps_goal`,
/// otherwise the argmax with uniform random tie-break.
pub fn select_goal<S: Scalar>(
    tables: &crate::adaptive::ValueTables<S>,
    drive: Drive,
    book: Option<&GoalBook>,
    n_prototypes: u32,
    beta: S,
    eps_goal: S,
    rng: &mut SimRng,
) -> Result<u32, ContextError> {
    if n_prototypes == 0 {
        return Err(ContextError::NoGoals);
    }
    let u: f64 = rng.gen();
    if u < crate::num::to_f64(eps_goal) {
        return Ok(rng.gen_range(0..n_prototypes));
    }
    let score = |p: u32| -> S {
        let v = tables.best_value(drive, p).unwrap_or_else(|_| S::zero());
        let lp = book.map(|b| b.learning_progress::<S>(p)).unwrap_or_else(S::zero);
        v + beta * lp.max(S::zero())
    };
    let mut best = S::neg_infinity();
    for p in 0..n_prototypes {
        let s = score(p);
        if s > best {
            best = s;
        }
    }
    let winners: Vec<u32> = (0..n_prototypes).filter(|&p| score(p) == best).collect();
    Ok(if winners.len() == 1 { winners[0] } else { winners[rng.gen_range(0..winners.len())] })
}

/// An adopted route to a goal: the action to take at each expected prototype.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub goal: u32,
    /// Remaining `(expected current prototype, action, expected next)` hops.
    steps: VecDeque<(u32, u8, u32)>,
    pub consecutive_mismatches: u32,
    pub m_max: u32,
    /// Total planned edge cost at adoption.
    pub cost: f64,
}

impl Plan {
    pub fn remaining(&self) -> usize {
        self.steps.len()
    }
}

/// One plan-following decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanStep {
    /// Observation matched: take this action and advance the plan.
    Advance(u8),
    /// Observation mismatched but within tolerance; no action from the plan
    /// this step.
    Hold,
    /// Plan exhausted at the goal prototype.
    Complete,
    /// Too many consecutive mismatches, or exhausted away from the goal.
    Abort,
}

/// Advance the plan state machine against an observed prototype.
pub fn plan_step(plan: &mut Plan, observed: u32) -> PlanStep {
    match plan.steps.front().copied() {
        None => {
            if observed == plan.goal {
                PlanStep::Complete
            } else {
                PlanStep::Abort
            }
        }
        Some((expect, action, _next)) => {
            if observed == expect {
                plan.consecutive_mismatches = 0;
                plan.steps.pop_front();
                PlanStep::Advance(action)
            } else {
                plan.consecutive_mismatches += 1;
                if plan.consecutive_mismatches > plan.m_max {
                    PlanStep::Abort
                } else {
                    PlanStep::Hold
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by cost, then by node id for determinism.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost path in the transition graph with edge cost
/// `-ln p(p'|p,a) + c_step`, expanding only observed edges. Returns `None`
/// when the goal is unreachable. Equal-cost alternatives resolve by the
/// smallest `(prototype id, action id)` predecessor edge.
pub fn plan(
    graph: &TransitionGraph,
    from: u32,
    goal: u32,
    c_step: f64,
    m_max: u32,
) -> Option<Plan> {
    if from == goal {
        return Some(Plan {
            goal,
            steps: VecDeque::new(),
            consecutive_mismatches: 0,
            m_max,
            cost: 0.0,
        });
    }

    let mut dist: HashMap<u32, f64> = HashMap::new();
    let mut pred: HashMap<u32, (u32, u8)> = HashMap::new();
    let mut settled: HashMap<u32, bool> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(from, 0.0);
    heap.push(HeapEntry { cost: 0.0, node: from });

    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if settled.get(&node).copied().unwrap_or(false) {
            continue;
        }
        settled.insert(node, true);
        if node == goal {
            break;
        }
        for a in 0..ACTION_COUNT as u8 {
            let Some(succ) = graph.counts.get(&(node, a)) else { continue };
            let total = graph.totals[&(node, a)] as f64;
            for (&pn, &n) in succ {
                if n == 0 {
                    continue;
                }
                let edge = -(n as f64 / total).ln() + c_step;
                let cand = cost + edge;
                let cur = dist.get(&pn).copied();
                let better = match cur {
                    None => true,
                    Some(c) if cand < c => true,
                    Some(c) if cand == c && !settled.get(&pn).copied().unwrap_or(false) => {
                        pred.get(&pn).map(|&(pp, pa)| (node, a) < (pp, pa)).unwrap_or(true)
                    }
                    _ => false,
                };
                if better {
                    dist.insert(pn, cand);
                    pred.insert(pn, (node, a));
                    heap.push(HeapEntry { cost: cand, node: pn });
                }
            }
        }
    }

    let total_cost = *dist.get(&goal)?;
    let mut steps = VecDeque::new();
    let mut cur = goal;
    while cur != from {
        let (p, a) = *pred.get(&cur)?;
        steps.push_front((p, a, cur));
        cur = p;
    }
    Some(Plan { goal, steps, consecutive_mismatches: 0, m_max, cost: total_cost })
}

/// One remembered step of contextual-layer activity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Episode<S> {
    pub step: u64,
    pub prototype: u32,
    pub action: u8,
    pub reward: PerDrive<S>,
    pub goal: Option<u32>,
}

/// Append-only autobiographical log with a prototype index and bounded
/// capacity (oldest entries evicted, index repaired).
#[derive(Clone, Debug)]
pub struct EpisodeStore<S> {
    log: VecDeque<Episode<S>>,
    /// Absolute position of `log[0]` since the store was created.
    base: u64,
    index: HashMap<u32, VecDeque<u64>>,
    capacity: usize,
}

impl<S: Scalar> EpisodeStore<S> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self { log: VecDeque::new(), base: 0, index: HashMap::new(), capacity }
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode<S>> {
        self.log.iter()
    }

    pub fn append(&mut self, ep: Episode<S>) {
        if self.log.len() == self.capacity {
            let old = self.log.pop_front().expect("capacity >= 1");
            let positions = self.index.get_mut(&old.prototype).expect("indexed");
            positions.pop_front();
            if positions.is_empty() {
                self.index.remove(&old.prototype);
            }
            self.base += 1;
        }
        let pos = self.base + self.log.len() as u64;
        self.index.entry(ep.prototype).or_default().push_back(pos);
        self.log.push_back(ep);
    }

    /// Up to `limit` remembered tuples for a prototype, most recent first.
    pub fn lookup(&self, prototype: u32, limit: usize) -> Vec<&Episode<S>> {
        let Some(positions) = self.index.get(&prototype) else {
            return Vec::new();
        };
        positions
            .iter()
            .rev()
            .take(limit)
            .map(|&pos| &self.log[(pos - self.base) as usize])
            .collect()
    }
}
