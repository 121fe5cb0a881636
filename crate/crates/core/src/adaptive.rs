//! The learning layer: an online prototype quantizer over percept features
//! (the shared abstract state space), per-drive tabular Q-values trained by
//! temporal-difference updates, and epsilon-greedy action selection.

use rand::Rng;
use thiserror::Error;

use crate::num::{lit, Scalar};
use crate::rng::SimRng;
use crate::soma::{Drive, PerDrive};
use crate::world::{ACTION_COUNT, FEATURE_COUNT};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdaptiveError {
    #[error("prototype id {0} out of range")]
    BadPrototype(u32),
    #[error("action index {0} out of range")]
    BadAction(u8),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveParams<S> {
    /// Vigilance radius: inputs farther than this from every centroid grow a
    /// new prototype (below capacity).
    pub vigilance: S,
    /// Winner drift rate toward the assigned input.
    pub drift: S,
    /// Maximum number of prototypes.
    pub capacity: usize,
    /// TD learning rate.
    pub alpha: S,
    /// Discount factor.
    pub gamma: S,
    pub eps_start: S,
    pub eps_min: S,
    pub eps_decay: S,
    /// Visit-count constant in `confidence = n / (n + k)`.
    pub confidence_k: u32,
    /// Confidence at or above which the learned policy overrides reflexes.
    pub confidence_gate: S,
}

impl<S: Scalar> Default for AdaptiveParams<S> {
    fn default() -> Self {
        Self {
            vigilance: lit(0.25),
            drift: lit(0.05),
            capacity: 256,
            alpha: lit(0.1),
            gamma: lit(0.95),
            eps_start: lit(0.3),
            eps_min: lit(0.02),
            eps_decay: lit(0.9995),
            confidence_k: 10,
            confidence_gate: lit(0.5),
        }
    }
}

/// How an input was assigned during quantization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AssignmentKind {
    /// Won by an existing prototype within the vigilance radius; the centroid
    /// drifted toward the input.
    Matched,
    /// A fresh prototype was created at the input.
    Created,
    /// At capacity with no centroid in range: nearest returned, no update.
    CapacityNearest,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment<S> {
    pub id: u32,
    pub kind: AssignmentKind,
    /// Distance to the winning centroid before any drift (zero for creations).
    pub pre_distance: S,
}

/// Online-grown set of feature centroids with visit counts.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeMap<S> {
    centroids: Vec<[S; FEATURE_COUNT]>,
    visits: Vec<u64>,
    pub vigilance: S,
    pub drift: S,
    pub capacity: usize,
}

impl<S: Scalar> PrototypeMap<S> {
    pub fn new(vigilance: S, drift: S, capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self { centroids: Vec::new(), visits: Vec::new(), vigilance, drift, capacity }
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroid(&self, id: u32) -> Result<&[S; FEATURE_COUNT], AdaptiveError> {
        self.centroids.get(id as usize).ok_or(AdaptiveError::BadPrototype(id))
    }

    pub fn visit_count(&self, id: u32) -> u64 {
        self.visits.get(id as usize).copied().unwrap_or(0)
    }

    /// Nearest centroid by Euclidean distance; ties resolve to the lowest id.
    /// Read-only: used by frozen agents and by replay checks.
    pub fn nearest(&self, x: &[S; FEATURE_COUNT]) -> Option<(u32, S)> {
        let mut best: Option<(u32, S)> = None;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = distance(c, x);
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((i as u32, d)),
            }
        }
        best
    }

    /// Assign an input: nearest-within-vigilance wins and drifts toward the
    /// input; out-of-range inputs create a new prototype while below
    /// capacity, otherwise the nearest is returned untouched. Visit counts
    /// track assignments.
    pub fn quantize(&mut self, x: &[S; FEATURE_COUNT]) -> Assignment<S> {
        match self.nearest(x) {
            None => self.create(x),
            Some((id, d)) => {
                if d > self.vigilance {
                    if self.centroids.len() < self.capacity {
                        return self.create(x);
                    }
                    self.visits[id as usize] += 1;
                    return Assignment { id, kind: AssignmentKind::CapacityNearest, pre_distance: d };
                }
                let c = &mut self.centroids[id as usize];
                for k in 0..FEATURE_COUNT {
                    c[k] += self.drift * (x[k] - c[k]);
                }
                self.visits[id as usize] += 1;
                Assignment { id, kind: AssignmentKind::Matched, pre_distance: d }
            }
        }
    }

    fn create(&mut self, x: &[S; FEATURE_COUNT]) -> Assignment<S> {
        let id = self.centroids.len() as u32;
        self.centroids.push(*x);
        self.visits.push(1);
        Assignment { id, kind: AssignmentKind::Created, pre_distance: S::zero() }
    }
}

fn distance<S: Scalar>(a: &[S; FEATURE_COUNT], b: &[S; FEATURE_COUNT]) -> S {
    let mut acc = S::zero();
    for k in 0..FEATURE_COUNT {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc.sqrt()
}

/// Per-drive Q tables over `(prototype, action)`. All drives index the same
/// prototype space: growing it appends one zero row to every drive's table.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTables<S> {
    rows: PerDrive<Vec<[S; ACTION_COUNT]>>,
    pub alpha: S,
    pub gamma: S,
}

impl<S: Scalar> ValueTables<S> {
    pub fn new(alpha: S, gamma: S) -> Self {
        Self { rows: PerDrive([Vec::new(), Vec::new()]), alpha, gamma }
    }

    pub fn states(&self) -> usize {
        self.rows.0[0].len()
    }

    pub fn add_state(&mut self) {
        for t in self.rows.0.iter_mut() {
            t.push([S::zero(); ACTION_COUNT]);
        }
    }

    pub fn row(&self, drive: Drive, p: u32) -> Result<&[S; ACTION_COUNT], AdaptiveError> {
        self.rows[drive].get(p as usize).ok_or(AdaptiveError::BadPrototype(p))
    }

    pub fn best_value(&self, drive: Drive, p: u32) -> Result<S, AdaptiveError> {
        let row = self.row(drive, p)?;
        Ok(row.iter().copied().fold(S::neg_infinity(), S::max))
    }

    /// One Q-learning backup. A `None` successor marks a terminal transition
    /// (death): the target is the reward alone, with no bootstrapping.
    pub fn td_update(
        &mut self,
        drive: Drive,
        p: u32,
        action: u8,
        r: S,
        next: Option<u32>,
    ) -> Result<(), AdaptiveError> {
        if action as usize >= ACTION_COUNT {
            return Err(AdaptiveError::BadAction(action));
        }
        let target = match next {
            Some(pn) => r + self.gamma * self.best_value(drive, pn)?,
            None => r,
        };
        let row = self
            .rows[drive]
            .get_mut(p as usize)
            .ok_or(AdaptiveError::BadPrototype(p))?;
        let q = row[action as usize];
        row[action as usize] = q + self.alpha * (target - q);
        Ok(())
    }
}

/// Exponentially decaying exploration rate `eps(t) = max(eps_min, eps0 * decay^t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule<S> {
    pub eps_start: S,
    pub eps_min: S,
    pub decay: S,
}

impl<S: Scalar> EpsilonSchedule<S> {
    pub fn eps_at(&self, t: u64) -> S {
        let decayed = self.eps_start * (lit::<S>(t as f64) * self.decay.ln()).exp();
        decayed.max(self.eps_min)
    }
}

/// Epsilon-greedy over one Q row; greedy ties break uniformly at random
/// among the maximizers.
pub fn select_action<S: Scalar>(row: &[S; ACTION_COUNT], eps: S, rng: &mut SimRng) -> u8 {
    let u: f64 = rng.gen();
    if u < crate::num::to_f64(eps) {
        return rng.gen_range(0..ACTION_COUNT) as u8;
    }
    let mut best = S::neg_infinity();
    for &q in row.iter() {
        if q > best {
            best = q;
        }
    }
    let maximizers: Vec<u8> =
        (0..ACTION_COUNT as u8).filter(|&a| row[a as usize] == best).collect();
    if maximizers.len() == 1 {
        maximizers[0]
    } else {
        maximizers[rng.gen_range(0..maximizers.len())]
    }
}

/// The assembled learner: shared prototype space plus per-drive values and
/// the exploration schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveLearner<S> {
    pub map: PrototypeMap<S>,
    pub tables: ValueTables<S>,
    pub schedule: EpsilonSchedule<S>,
    pub confidence_k: u32,
    pub confidence_gate: S,
}

impl<S: Scalar> AdaptiveLearner<S> {
    pub fn new(params: &AdaptiveParams<S>) -> Self {
        Self {
            map: PrototypeMap::new(params.vigilance, params.drift, params.capacity),
            tables: ValueTables::new(params.alpha, params.gamma),
            schedule: EpsilonSchedule {
                eps_start: params.eps_start,
                eps_min: params.eps_min,
                decay: params.eps_decay,
            },
            confidence_k: params.confidence_k,
            confidence_gate: params.confidence_gate,
        }
    }

    /// Quantize an input, keeping the value tables' row count in sync with
    /// the prototype count.
    pub fn observe(&mut self, x: &[S; FEATURE_COUNT]) -> Assignment<S> {
        let a = self.map.quantize(x);
        while self.tables.states() < self.map.len() {
            self.tables.add_state();
        }
        a
    }

    /// Visit-count confidence `n / (n + k)` in `[0, 1)`.
    pub fn confidence(&self, p: u32) -> S {
        let n = self.map.visit_count(p);
        let k = self.confidence_k as u64;
        if n == 0 {
            return S::zero();
        }
        lit::<S>(n as f64) / lit::<S>((n + k) as f64)
    }

    /// Snapshot restore: append a prototype verbatim with its visit count.
    pub fn restore_prototype(&mut self, centroid: &[S; FEATURE_COUNT], visits: u64) {
        self.map.centroids.push(*centroid);
        self.map.visits.push(visits);
        while self.tables.states() < self.map.len() {
            self.tables.add_state();
        }
    }

    /// Snapshot restore: set one Q entry verbatim.
    pub fn restore_q(&mut self, drive: Drive, p: u32, action: u8, q: S) {
        self.tables.rows[drive][p as usize][action as usize] = q;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamDomain};
    use rand::Rng;

    fn features(r: &mut SimRng) -> [f64; FEATURE_COUNT] {
        let mut x = [0.0; FEATURE_COUNT];
        for v in x.iter_mut() {
            *v = r.gen::<f64>();
        }
        x
    }

    #[test]
    fn empty_map_bootstraps_prototype_zero() {
        let mut m = PrototypeMap::new(0.25, 0.05, 16);
        let x = [0.1, 0.2, 0.3, 0.0, 0.0, 0.5];
        let a = m.quantize(&x);
        assert_eq!(a.id, 0);
        assert_eq!(a.kind, AssignmentKind::Created);
        assert_eq!(m.centroid(0).unwrap(), &x);
        assert_eq!(m.visit_count(0), 1);
    }

    #[test]
    fn exact_centroid_is_a_fixed_point() {
        let mut m = PrototypeMap::new(0.25, 0.05, 16);
        let x = [0.1, 0.2, 0.3, 0.0, 0.0, 0.5];
        m.quantize(&x);
        let a = m.quantize(&x);
        assert_eq!(a.id, 0);
        assert_eq!(a.kind, AssignmentKind::Matched);
        assert_eq!(m.centroid(0).unwrap(), &x);
    }

    #[test]
    fn vigilance_replay_check_on_random_inputs() {
        // Every assignment either had pre-update distance <= vigilance or was
        // a creation event; verified by exhaustively replaying the stream
        // against a fresh map.
        let mut rng = stream(21, StreamDomain::Harness, 0);
        let inputs: Vec<_> = (0..1000).map(|_| features(&mut rng)).collect();
        let mut m = PrototypeMap::new(0.3, 0.05, 100_000);
        let log: Vec<_> = inputs.iter().map(|x| m.quantize(x)).collect();

        let mut replay = PrototypeMap::new(0.3, 0.05, 100_000);
        for (x, rec) in inputs.iter().zip(&log) {
            let a = replay.quantize(x);
            assert_eq!(a, *rec);
            match a.kind {
                AssignmentKind::Created => assert_eq!(a.pre_distance, 0.0),
                AssignmentKind::Matched => assert!(a.pre_distance <= 0.3),
                AssignmentKind::CapacityNearest => panic!("capacity should not bind here"),
            }
        }
        assert_eq!(m, replay);
    }

    #[test]
    fn at_capacity_returns_nearest_without_update() {
        let mut m = PrototypeMap::new(0.1, 0.05, 1);
        m.quantize(&[0.0; FEATURE_COUNT]);
        let centroid_before = *m.centroid(0).unwrap();
        let far = [1.0; FEATURE_COUNT];
        let a = m.quantize(&far);
        assert_eq!(a.kind, AssignmentKind::CapacityNearest);
        assert_eq!(a.id, 0);
        assert_eq!(m.centroid(0).unwrap(), &centroid_before);
        assert_eq!(m.len(), 1);
        assert_eq!(m.visit_count(0), 2);
    }

    #[test]
    fn td_fixed_point_and_single_backup() {
        let mut t = ValueTables::<f64>::new(0.1, 0.95);
        t.add_state();
        t.add_state();
        // Zero reward on an all-zero table stays all-zero.
        t.td_update(Drive::Energy, 0, 1, 0.0, Some(1)).unwrap();
        assert_eq!(t.row(Drive::Energy, 0).unwrap(), &[0.0; ACTION_COUNT]);
        // Single backup: Q' = 0 + 0.1 * (1 + 0.95 * 0 - 0) = 0.1.
        t.td_update(Drive::Energy, 0, 1, 1.0, Some(1)).unwrap();
        assert!((t.row(Drive::Energy, 0).unwrap()[1] - 0.1).abs() < 1e-15);
        // Terminal transitions do not bootstrap.
        t.td_update(Drive::Energy, 1, 0, -1.0, None).unwrap();
        assert!((t.row(Drive::Energy, 1).unwrap()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn td_rejects_bad_indices() {
        let mut t = ValueTables::<f64>::new(0.1, 0.95);
        t.add_state();
        assert_eq!(
            t.td_update(Drive::Energy, 5, 0, 0.0, Some(0)),
            Err(AdaptiveError::BadPrototype(5))
        );
        assert_eq!(
            t.td_update(Drive::Energy, 0, 9, 0.0, Some(0)),
            Err(AdaptiveError::BadAction(9))
        );
        assert_eq!(
            t.td_update(Drive::Energy, 0, 0, 0.0, Some(7)),
            Err(AdaptiveError::BadPrototype(7))
        );
    }

    #[test]
    fn q_stays_bounded_under_bounded_rewards() {
        // With |r| <= R every entry stays within R / (1 - gamma).
        let mut t = ValueTables::new(0.2, 0.9);
        for _ in 0..4 {
            t.add_state();
        }
        let r_max = 1.0;
        let bound = r_max / (1.0 - 0.9) + 1e-9;
        let mut rng = stream(22, StreamDomain::Harness, 0);
        for _ in 0..20_000 {
            let p = rng.gen_range(0..4u32);
            let pn = rng.gen_range(0..4u32);
            let a = rng.gen_range(0..ACTION_COUNT as u8);
            let r = rng.gen::<f64>() * 2.0 - 1.0;
            let terminal = rng.gen::<f64>() < 0.05;
            t.td_update(Drive::Safety, p, a, r, (!terminal).then_some(pn)).unwrap();
        }
        for p in 0..4u32 {
            for &q in t.row(Drive::Safety, p).unwrap() {
                assert!(q.abs() <= bound, "q = {q} exceeds bound {bound}");
            }
        }
    }

    #[test]
    fn greedy_selection_is_deterministic_with_unique_max() {
        let mut rng = stream(23, StreamDomain::Adaptive, 0);
        let mut row = [0.0; ACTION_COUNT];
        row[3] = 1.0;
        for _ in 0..50 {
            assert_eq!(select_action(&row, 0.0, &mut rng), 3);
        }
    }

    #[test]
    fn full_exploration_is_uniform_within_3_sigma() {
        let mut rng = stream(23, StreamDomain::Adaptive, 1);
        let row = [0.0; ACTION_COUNT];
        let n = 10_000usize;
        let mut counts = [0usize; ACTION_COUNT];
        for _ in 0..n {
            counts[select_action(&row, 1.0, &mut rng) as usize] += 1;
        }
        let p = 1.0 / ACTION_COUNT as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "counts {counts:?}");
        }
    }

    #[test]
    fn per_drive_policies_switch_exactly_when_argmaxes_disjoint() {
        let mut t = ValueTables::new(0.1, 0.95);
        t.add_state();
        // Distinct per-drive rows at the same prototype.
        t.td_update(Drive::Energy, 0, 2, 1.0, None).unwrap();
        t.td_update(Drive::Safety, 0, 5, 1.0, None).unwrap();
        let mut rng = stream(23, StreamDomain::Adaptive, 2);
        let ae = select_action(t.row(Drive::Energy, 0).unwrap(), 0.0, &mut rng);
        let as_ = select_action(t.row(Drive::Safety, 0).unwrap(), 0.0, &mut rng);
        assert_eq!(ae, 2);
        assert_eq!(as_, 5);
    }

    #[test]
    fn greedy_argmax_invariant_under_positive_scaling() {
        // Scaling all rewards by c > 0 leaves the converged per-state argmax
        // unchanged on a small deterministic MDP.
        let argmaxes = |scale: f64| -> Vec<usize> {
            let mut t = ValueTables::new(0.2, 0.9);
            for _ in 0..3 {
                t.add_state();
            }
            // 3 states in a ring; action 0 advances (reward scale * state),
            // action 1 stays (reward 0).
            for _ in 0..4000 {
                for s in 0..3u32 {
                    let r = scale * (s as f64 + 1.0);
                    t.td_update(Drive::Energy, s, 0, r, Some((s + 1) % 3)).unwrap();
                    t.td_update(Drive::Energy, s, 1, 0.0, Some(s)).unwrap();
                }
            }
            (0..3u32)
                .map(|s| {
                    let row = t.row(Drive::Energy, s).unwrap();
                    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.iter().position(|&q| q == best).unwrap()
                })
                .collect()
        };
        assert_eq!(argmaxes(1.0), argmaxes(7.5));
    }

    #[test]
    fn confidence_formula() {
        let mut learner = AdaptiveLearner::<f64>::new(&AdaptiveParams::default());
        assert_eq!(learner.confidence(0), 0.0);
        let x = [0.5; FEATURE_COUNT];
        for _ in 0..10 {
            learner.observe(&x);
        }
        // n = k = 10 gives exactly 0.5.
        assert!((learner.confidence(0) - 0.5).abs() < 1e-15);
        let mut rng = stream(24, StreamDomain::Harness, 0);
        for _ in 0..50 {
            let extra = rng.gen_range(1..40u64);
            for _ in 0..extra {
                learner.observe(&x);
            }
            let n = learner.map.visit_count(0) as f64;
            assert!((learner.confidence(0) - n / (n + 10.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn epsilon_schedule_decays_to_floor() {
        let s = EpsilonSchedule::<f64> { eps_start: 0.3, eps_min: 0.02, decay: 0.9995 };
        assert!((s.eps_at(0) - 0.3).abs() < 1e-12);
        assert!(s.eps_at(1000) < 0.3);
        assert!((s.eps_at(1_000_000) - 0.02).abs() < 1e-12);
        let direct = 0.3 * 0.9995f64.powi(1000);
        assert!((s.eps_at(1000) - direct).abs() < 1e-9);
    }

    #[test]
    fn shared_representation_grows_all_tables() {
        let mut learner = AdaptiveLearner::<f32>::new(&AdaptiveParams::default());
        let mut rng = stream(25, StreamDomain::Harness, 0);
        for _ in 0..200 {
            let mut x = [0.0f32; FEATURE_COUNT];
            for v in x.iter_mut() {
                *v = rng.gen::<f32>();
            }
            learner.observe(&x);
            assert_eq!(learner.tables.states(), learner.map.len());
        }
    }
}
