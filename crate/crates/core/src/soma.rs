//! The agent's body interior: regulated internal variables (energy,
//! integrity), their dynamics under world events, homeostatic drive errors,
//! and the reward signal defined as weighted drive-error reduction.

use crate::num::{clamp01, lit, Scalar};
use crate::world::{ActionCommand, EatTarget, Event};

pub const DRIVE_COUNT: usize = 2;

/// The two regulated drives. Order fixes the tie-break priority: safety
/// before energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum Drive {
    Safety = 0,
    Energy = 1,
}

impl Drive {
    pub const ALL: [Drive; DRIVE_COUNT] = [Drive::Safety, Drive::Energy];

    pub fn as_str(self) -> &'static str {
        match self {
            Drive::Safety => "safety",
            Drive::Energy => "energy",
        }
    }
}

/// Fixed-size container with one slot per drive.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PerDrive<T>(pub [T; DRIVE_COUNT]);

impl<T> PerDrive<T> {
    pub fn get(&self, d: Drive) -> &T {
        &self.0[d as usize]
    }

    pub fn get_mut(&mut self, d: Drive) -> &mut T {
        &mut self.0[d as usize]
    }
}

impl<T: Copy> PerDrive<T> {
    pub fn splat(v: T) -> Self {
        Self([v; DRIVE_COUNT])
    }
}

impl<T> std::ops::Index<Drive> for PerDrive<T> {
    type Output = T;
    fn index(&self, d: Drive) -> &T {
        &self.0[d as usize]
    }
}

impl<T> std::ops::IndexMut<Drive> for PerDrive<T> {
    fn index_mut(&mut self, d: Drive) -> &mut T {
        &mut self.0[d as usize]
    }
}

/// Metabolic and damage constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SomaParams<S> {
    /// Energy burned every step regardless of motion.
    pub kappa_base: S,
    /// Extra energy burned per unit of commanded forward speed.
    pub kappa_move: S,
    /// Integrity lost per damage hit.
    pub delta_damage: S,
    /// Integrity regained every step.
    pub rho_heal: S,
    /// Reward weights per drive.
    pub weights: PerDrive<S>,
    /// Drive priorities for dominant-drive selection.
    pub priorities: PerDrive<S>,
}

impl<S: Scalar> Default for SomaParams<S> {
    fn default() -> Self {
        Self {
            kappa_base: lit(0.002),
            kappa_move: lit(0.002),
            delta_damage: lit(0.25),
            rho_heal: lit(0.001),
            weights: PerDrive::splat(S::one()),
            priorities: PerDrive::splat(S::one()),
        }
    }
}

/// Regulated internal variables, both clamped to `[0, 1]`. The agent is dead
/// exactly when either one has hit zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InternalState<S> {
    pub energy: S,
    pub integrity: S,
}

impl<S: Scalar> InternalState<S> {
    pub fn full() -> Self {
        Self { energy: S::one(), integrity: S::one() }
    }

    pub fn is_dead(&self) -> bool {
        self.energy <= S::zero() || self.integrity <= S::zero()
    }
}

/// Digest of one step's events as they affect a single agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEffects<S> {
    pub energy_gain: S,
    pub damage_hits: u32,
}

impl<S: Scalar> StepEffects<S> {
    pub fn none() -> Self {
        Self { energy_gain: S::zero(), damage_hits: 0 }
    }

    /// Collect the effects addressed to `agent_id` from a step's event list.
    pub fn for_agent(events: &[Event<S>], agent_id: u32) -> Self {
        let mut fx = Self::none();
        for ev in events {
            match *ev {
                Event::Eat { agent, amount, .. } if agent == agent_id => {
                    fx.energy_gain += amount;
                }
                Event::Damage { prey, .. } if prey == agent_id => {
                    fx.damage_hits += 1;
                }
                _ => {}
            }
        }
        fx
    }
}

/// One step of internal dynamics:
/// `energy' = clamp(energy - kappa_base - kappa_move * v + gains)` and
/// `integrity' = clamp(integrity - delta * hits + rho_heal)`.
pub fn update_internal<S: Scalar>(
    state: &InternalState<S>,
    effects: &StepEffects<S>,
    cmd: &ActionCommand<S>,
    params: &SomaParams<S>,
) -> InternalState<S> {
    let energy = clamp01(
        state.energy - params.kappa_base - params.kappa_move * cmd.forward_speed
            + effects.energy_gain,
    );
    let integrity = clamp01(
        state.integrity - params.delta_damage * S::from_u32(effects.damage_hits).unwrap()
            + params.rho_heal,
    );
    InternalState { energy, integrity }
}

/// Setpoint deviations: both setpoints are fixed at 1.0.
pub fn drive_errors<S: Scalar>(state: &InternalState<S>) -> PerDrive<S> {
    let mut e = PerDrive::splat(S::zero());
    e[Drive::Energy] = S::one() - state.energy;
    e[Drive::Safety] = S::one() - state.integrity;
    e
}

/// Per-drive reward `r_d = w_d * (error_before - error_after)`.
pub fn reward<S: Scalar>(
    before: &PerDrive<S>,
    after: &PerDrive<S>,
    weights: &PerDrive<S>,
) -> PerDrive<S> {
    let mut r = PerDrive::splat(S::zero());
    for d in Drive::ALL {
        r[d] = weights[d] * (before[d] - after[d]);
    }
    r
}

/// `EatTarget` re-export convenience for callers splitting capture credit.
pub fn eat_event<S: Scalar>(agent: u32, target: EatTarget, amount: S) -> Event<S> {
    Event::Eat { agent, target, amount }
}
