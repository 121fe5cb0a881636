//! The physical arena: continuous 2D space with clamping walls, unicycle
//! kinematics, bilateral odor sensing, contact detection, food dynamics and a
//! deterministic step loop that applies all actions simultaneously from a
//! pre-step snapshot.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::num::{clamp, lit, wrap_angle, Scalar};
use crate::rng::{stream, SimRng, StreamDomain};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("no such agent: {0}")]
    NoSuchAgent(u32),
    #[error("incomplete command set: missing command for agent {0}")]
    IncompleteCommands(u32),
    #[error("command issued for unknown or dead agent {0}")]
    UnknownCommandTarget(u32),
    #[error("invalid command for agent {0}: out of bounds")]
    InvalidCommand(u32),
}

/// Position and orientation inside the arena.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<S> {
    pub x: S,
    pub y: S,
    pub heading: S,
}

impl<S: Scalar> Pose<S> {
    pub fn new(x: S, y: S, heading: S) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }

    pub fn distance_to(&self, other: &Pose<S>) -> S {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Forward speed and turn rate limits for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionLimits<S> {
    pub v_max: S,
    pub omega_max: S,
}

/// One step's motor command: move-forward distance and heading change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionCommand<S> {
    pub forward_speed: S,
    pub turn_rate: S,
}

impl<S: Scalar> ActionCommand<S> {
    pub fn stop() -> Self {
        Self { forward_speed: S::zero(), turn_rate: S::zero() }
    }

    pub fn in_bounds(&self, limits: &MotionLimits<S>) -> bool {
        self.forward_speed >= S::zero()
            && self.forward_speed <= limits.v_max
            && self.turn_rate.abs() <= limits.omega_max
            && self.forward_speed.is_finite()
            && self.turn_rate.is_finite()
    }
}

pub const ACTION_COUNT: usize = 6;

/// The discrete action set competed over by the value learner and planner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    Stop = 0,
    Forward = 1,
    ForwardLeft = 2,
    ForwardRight = 3,
    SpinLeft = 4,
    SpinRight = 5,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::Stop,
        Action::Forward,
        Action::ForwardLeft,
        Action::ForwardRight,
        Action::SpinLeft,
        Action::SpinRight,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Action> {
        Action::ALL.get(i as usize).copied()
    }

    /// Fixed mapping from action index to a motor command. Positive turn
    /// rate is a left (counterclockwise) turn.
    pub fn command<S: Scalar>(self, limits: &MotionLimits<S>) -> ActionCommand<S> {
        let half = limits.omega_max / lit(2.0);
        match self {
            Action::Stop => ActionCommand::stop(),
            Action::Forward => ActionCommand { forward_speed: limits.v_max, turn_rate: S::zero() },
            Action::ForwardLeft => ActionCommand { forward_speed: limits.v_max, turn_rate: half },
            Action::ForwardRight => {
                ActionCommand { forward_speed: limits.v_max, turn_rate: -half }
            }
            Action::SpinLeft => ActionCommand { forward_speed: S::zero(), turn_rate: limits.omega_max },
            Action::SpinRight => {
                ActionCommand { forward_speed: S::zero(), turn_rate: -limits.omega_max }
            }
        }
    }
}

/// Nearest discrete action to an arbitrary command, used to label reflex
/// output when feeding transitions to the learners. Turn rates are scaled by
/// `v_max / omega_max` so both axes weigh comparably; ties resolve to the
/// lowest action index.
pub fn discretize_command<S: Scalar>(cmd: &ActionCommand<S>, limits: &MotionLimits<S>) -> Action {
    let scale = limits.v_max / limits.omega_max;
    let mut best = Action::Stop;
    let mut best_d = S::infinity();
    for action in Action::ALL {
        let c = action.command(limits);
        let dv = cmd.forward_speed - c.forward_speed;
        let dw = (cmd.turn_rate - c.turn_rate) * scale;
        let d = dv * dv + dw * dw;
        if d < best_d {
            best_d = d;
            best = action;
        }
    }
    best
}

/// What kind of thing an entity is. Kinds never change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Prey,
    Predator,
    Food,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Prey => "prey",
            EntityKind::Predator => "predator",
            EntityKind::Food => "food",
        }
    }
}

pub const CATEGORY_COUNT: usize = 3;

/// Odor categories sensed by the bilateral antennae.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum OdorCategory {
    Food = 0,
    Prey = 1,
    Predator = 2,
}

impl OdorCategory {
    pub const ALL: [OdorCategory; CATEGORY_COUNT] =
        [OdorCategory::Food, OdorCategory::Prey, OdorCategory::Predator];
}

pub const FEATURE_COUNT: usize = 2 * CATEGORY_COUNT;

/// A touching entity reported in a percept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact<S> {
    pub kind: EntityKind,
    pub id: u32,
    /// Overlap fraction `1 - d / (r_i + r_j)` in `(0, 1]`.
    pub magnitude: S,
}

/// One agent's sensory snapshot: per-category left/right odor intensities in
/// `[0, 1]` plus the list of current contacts. Self-emitted odor is excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct Percept<S> {
    /// Indexed `[category][side]` with side 0 = left, 1 = right.
    pub intensity: [[S; 2]; CATEGORY_COUNT],
    pub contacts: Vec<Contact<S>>,
}

impl<S: Scalar> Percept<S> {
    pub fn zero() -> Self {
        Self { intensity: [[S::zero(); 2]; CATEGORY_COUNT], contacts: Vec::new() }
    }

    pub fn left(&self, c: OdorCategory) -> S {
        self.intensity[c as usize][0]
    }

    pub fn right(&self, c: OdorCategory) -> S {
        self.intensity[c as usize][1]
    }

    /// Flattened feature vector `[food_l, food_r, prey_l, prey_r, pred_l, pred_r]`.
    pub fn features(&self) -> [S; FEATURE_COUNT] {
        let mut out = [S::zero(); FEATURE_COUNT];
        for (i, cat) in OdorCategory::ALL.iter().enumerate() {
            out[2 * i] = self.left(*cat);
            out[2 * i + 1] = self.right(*cat);
        }
        out
    }
}

/// Arena and body geometry plus odor-field parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldParams<S> {
    pub width: S,
    pub height: S,
    /// Odor decay length: intensity contribution is `exp(-d / lambda)`.
    pub lambda: S,
    /// Antenna offset angle from the heading, radians (left at `+`, right at `-`).
    pub antenna_angle: S,
    /// Antenna distance from body center.
    pub antenna_radius: S,
    pub limits: MotionLimits<S>,
    pub agent_radius: S,
    pub food_radius: S,
    /// Steps until an eaten patch becomes available again.
    pub regen_steps: u32,
    /// Energy content of one food patch; also the total split among captors
    /// when a prey is brought down.
    pub food_energy: S,
}

impl<S: Scalar> Default for WorldParams<S> {
    fn default() -> Self {
        Self {
            width: lit(100.0),
            height: lit(100.0),
            lambda: lit(15.0),
            antenna_angle: lit(30.0f64.to_radians()),
            antenna_radius: lit(1.5),
            limits: MotionLimits { v_max: lit(1.0), omega_max: lit(0.5) },
            agent_radius: lit(1.0),
            food_radius: lit(1.0),
            regen_steps: 200,
            food_energy: lit(0.3),
        }
    }
}

/// Predation rule: with `wolfpack` set, a predator-prey contact only causes
/// damage when at least `min_pack` predators are within `coop_radius` of the
/// contacted prey.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaptureRule<S> {
    pub wolfpack: bool,
    pub coop_radius: S,
}

pub const MIN_PACK: usize = 2;

impl<S: Scalar> Default for CaptureRule<S> {
    fn default() -> Self {
        Self { wolfpack: false, coop_radius: lit(6.0) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentBody<S> {
    pub id: u32,
    pub kind: EntityKind,
    pub pose: Pose<S>,
    pub radius: S,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoodPatch<S> {
    pub id: u32,
    pub pose: Pose<S>,
    pub radius: S,
    pub available: bool,
    pub regen_left: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EatTarget {
    Food(u32),
    Prey(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeathCause {
    Starved,
    Captured,
}

impl DeathCause {
    pub fn as_str(self) -> &'static str {
        match self {
            DeathCause::Starved => "starved",
            DeathCause::Captured => "captured",
        }
    }
}

/// Something that happened during one world step. Event lists are always
/// sorted by `(event type, subject id, secondary id)` so logs are canonical.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event<S> {
    Eat { agent: u32, target: EatTarget, amount: S },
    Damage { prey: u32, predator: u32 },
    Death { agent: u32, cause: DeathCause, age: u64 },
}

impl<S: Scalar> Event<S> {
    fn sort_key(&self) -> (u8, u32, u32) {
        match *self {
            Event::Eat { agent, target, .. } => {
                let t = match target {
                    EatTarget::Food(id) => id,
                    EatTarget::Prey(id) => id,
                };
                (0, agent, t)
            }
            Event::Damage { prey, predator } => (1, prey, predator),
            Event::Death { agent, .. } => (2, agent, 0),
        }
    }
}

/// Sort an event list into the canonical order.
pub fn sort_events<S: Scalar>(events: &mut [Event<S>]) {
    events.sort_by_key(|e| e.sort_key());
}

/// The arena state: agents, food patches, step counter and the spawn stream.
#[derive(Clone, Debug)]
pub struct World<S> {
    pub params: WorldParams<S>,
    pub capture: CaptureRule<S>,
    agents: Vec<AgentBody<S>>,
    foods: Vec<FoodPatch<S>>,
    pub step_count: u64,
    spawn_rng: SimRng,
}

impl<S: Scalar> World<S> {
    pub fn new(params: WorldParams<S>, capture: CaptureRule<S>, master_seed: u64) -> Self {
        Self {
            params,
            capture,
            agents: Vec::new(),
            foods: Vec::new(),
            step_count: 0,
            spawn_rng: stream(master_seed, StreamDomain::Spawn, 0),
        }
    }

    pub fn agents(&self) -> &[AgentBody<S>] {
        &self.agents
    }

    pub fn foods(&self) -> &[FoodPatch<S>] {
        &self.foods
    }

    pub fn agent(&self, id: u32) -> Result<&AgentBody<S>, WorldError> {
        self.agents.get(id as usize).ok_or(WorldError::NoSuchAgent(id))
    }

    fn agent_mut(&mut self, id: u32) -> Result<&mut AgentBody<S>, WorldError> {
        self.agents.get_mut(id as usize).ok_or(WorldError::NoSuchAgent(id))
    }

    /// Uniform pose from the world's spawn stream.
    pub fn random_pose(&mut self) -> Pose<S> {
        let x = lit::<S>(self.spawn_rng.gen::<f64>()) * self.params.width;
        let y = lit::<S>(self.spawn_rng.gen::<f64>()) * self.params.height;
        let h = lit::<S>(self.spawn_rng.gen::<f64>() * 2.0 - 1.0) * S::PI();
        Pose::new(x, y, h)
    }

    pub fn spawn_agent(&mut self, kind: EntityKind) -> u32 {
        let pose = self.random_pose();
        self.spawn_agent_at(kind, pose)
    }

    pub fn spawn_agent_at(&mut self, kind: EntityKind, pose: Pose<S>) -> u32 {
        assert!(kind != EntityKind::Food, "food is not an agent");
        let id = self.agents.len() as u32;
        let radius = self.params.agent_radius;
        self.agents.push(AgentBody { id, kind, pose: self.clamp_pose(pose), radius, alive: true });
        id
    }

    pub fn add_food(&mut self) -> u32 {
        let pose = self.random_pose();
        self.add_food_at(pose)
    }

    pub fn add_food_at(&mut self, pose: Pose<S>) -> u32 {
        let id = self.foods.len() as u32;
        let radius = self.params.food_radius;
        self.foods.push(FoodPatch {
            id,
            pose: self.clamp_pose(pose),
            radius,
            available: true,
            regen_left: 0,
        });
        id
    }

    fn clamp_pose(&self, pose: Pose<S>) -> Pose<S> {
        Pose {
            x: clamp(pose.x, S::zero(), self.params.width),
            y: clamp(pose.y, S::zero(), self.params.height),
            heading: wrap_angle(pose.heading),
        }
    }

    pub fn kill(&mut self, id: u32) -> Result<(), WorldError> {
        self.agent_mut(id)?.alive = false;
        Ok(())
    }

    pub fn revive_at(&mut self, id: u32, pose: Pose<S>) -> Result<(), WorldError> {
        let clamped = self.clamp_pose(pose);
        let body = self.agent_mut(id)?;
        body.alive = true;
        body.pose = clamped;
        Ok(())
    }

    /// Bilateral odor sensing plus contact detection for one alive agent.
    pub fn sense(&self, agent_id: u32) -> Result<Percept<S>, WorldError> {
        let me = self.agent(agent_id)?;
        if !me.alive {
            return Err(WorldError::NoSuchAgent(agent_id));
        }
        let mut percept = Percept::zero();
        let (ax, ay) = antenna_positions(&me.pose, &self.params);
        for food in &self.foods {
            if food.available {
                accumulate(&mut percept, OdorCategory::Food, &food.pose, ax, ay, &self.params);
            }
        }
        for other in &self.agents {
            if other.id == agent_id || !other.alive {
                continue;
            }
            let cat = match other.kind {
                EntityKind::Prey => OdorCategory::Prey,
                EntityKind::Predator => OdorCategory::Predator,
                EntityKind::Food => unreachable!(),
            };
            accumulate(&mut percept, cat, &other.pose, ax, ay, &self.params);
        }
        for row in percept.intensity.iter_mut() {
            row[0] = clamp(row[0], S::zero(), S::one());
            row[1] = clamp(row[1], S::zero(), S::one());
        }
        // Contacts: agents first (id order), then food patches (id order).
        for other in &self.agents {
            if other.id == agent_id || !other.alive {
                continue;
            }
            let reach = me.radius + other.radius;
            let d = me.pose.distance_to(&other.pose);
            if d <= reach {
                percept.contacts.push(Contact {
                    kind: other.kind,
                    id: other.id,
                    magnitude: S::one() - d / reach,
                });
            }
        }
        for food in &self.foods {
            if !food.available {
                continue;
            }
            let reach = me.radius + food.radius;
            let d = me.pose.distance_to(&food.pose);
            if d <= reach {
                percept.contacts.push(Contact {
                    kind: EntityKind::Food,
                    id: food.id,
                    magnitude: S::one() - d / reach,
                });
            }
        }
        Ok(percept)
    }

    /// Advance the world one step: simultaneous motion from the pre-step
    /// snapshot, then contact resolution (eating, predation damage) and food
    /// regeneration. Returns the step's eat and damage events in canonical
    /// order; deaths are resolved by the caller, which owns internal state.
    pub fn step(
        &mut self,
        commands: &BTreeMap<u32, ActionCommand<S>>,
    ) -> Result<Vec<Event<S>>, WorldError> {
        for body in &self.agents {
            if body.alive && !commands.contains_key(&body.id) {
                return Err(WorldError::IncompleteCommands(body.id));
            }
        }
        for (&id, cmd) in commands {
            let body = self.agent(id).map_err(|_| WorldError::UnknownCommandTarget(id))?;
            if !body.alive {
                return Err(WorldError::UnknownCommandTarget(id));
            }
            if !cmd.in_bounds(&self.params.limits) {
                return Err(WorldError::InvalidCommand(id));
            }
        }

        // Food regeneration counts down before anything moves, so a patch
        // eaten at step t is available again exactly `regen_steps` later.
        for food in &mut self.foods {
            if !food.available && food.regen_left > 0 {
                food.regen_left -= 1;
                if food.regen_left == 0 {
                    food.available = true;
                }
            }
        }

        // Simultaneous motion from the pre-step snapshot.
        let params = self.params;
        for body in &mut self.agents {
            if !body.alive {
                continue;
            }
            let cmd = commands[&body.id];
            body.pose = apply_action(&body.pose, &cmd, &params)
                .expect("commands validated before motion");
        }

        let mut events: Vec<Event<S>> = Vec::new();

        // Eating: each available patch feeds at most the lowest-id touching
        // prey, then immediately starts its regeneration cycle.
        for fi in 0..self.foods.len() {
            if !self.foods[fi].available {
                continue;
            }
            let fpose = self.foods[fi].pose;
            let freach = self.foods[fi].radius;
            let eater = self
                .agents
                .iter()
                .filter(|a| a.alive && a.kind == EntityKind::Prey)
                .find(|a| a.pose.distance_to(&fpose) <= a.radius + freach)
                .map(|a| a.id);
            if let Some(agent) = eater {
                self.foods[fi].available = false;
                self.foods[fi].regen_left = self.params.regen_steps;
                events.push(Event::Eat {
                    agent,
                    target: EatTarget::Food(self.foods[fi].id),
                    amount: self.params.food_energy,
                });
            }
        }

        // Predation damage under the configured capture rule.
        events.extend(capture_damage_events(self, &self.capture));

        self.step_count += 1;
        sort_events(&mut events);
        Ok(events)
    }
}

fn antenna_positions<S: Scalar>(pose: &Pose<S>, params: &WorldParams<S>) -> ((S, S), (S, S)) {
    let left_angle = pose.heading + params.antenna_angle;
    let right_angle = pose.heading - params.antenna_angle;
    let left = (
        pose.x + params.antenna_radius * left_angle.cos(),
        pose.y + params.antenna_radius * left_angle.sin(),
    );
    let right = (
        pose.x + params.antenna_radius * right_angle.cos(),
        pose.y + params.antenna_radius * right_angle.sin(),
    );
    (left, right)
}

fn accumulate<S: Scalar>(
    percept: &mut Percept<S>,
    cat: OdorCategory,
    emitter: &Pose<S>,
    left: (S, S),
    right: (S, S),
    params: &WorldParams<S>,
) {
    let dl = dist(left, (emitter.x, emitter.y));
    let dr = dist(right, (emitter.x, emitter.y));
    percept.intensity[cat as usize][0] += (-dl / params.lambda).exp();
    percept.intensity[cat as usize][1] += (-dr / params.lambda).exp();
}

fn dist<S: Scalar>(a: (S, S), b: (S, S)) -> S {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Unicycle kinematics, turn-then-move, with wall clamping.
pub fn apply_action<S: Scalar>(
    pose: &Pose<S>,
    cmd: &ActionCommand<S>,
    params: &WorldParams<S>,
) -> Result<Pose<S>, WorldError> {
    if !cmd.in_bounds(&params.limits) {
        return Err(WorldError::InvalidCommand(u32::MAX));
    }
    let heading = wrap_angle(pose.heading + cmd.turn_rate);
    let x = clamp(pose.x + cmd.forward_speed * heading.cos(), S::zero(), params.width);
    let y = clamp(pose.y + cmd.forward_speed * heading.sin(), S::zero(), params.height);
    Ok(Pose { x, y, heading })
}

/// Evaluate the predation rule against the current poses: which
/// predator-prey contacts deal damage this step. Pure in the world state, so
/// both rule variants can be compared on identical snapshots.
pub fn capture_damage_events<S: Scalar>(
    world: &World<S>,
    rule: &CaptureRule<S>,
) -> Vec<Event<S>> {
    let mut events = Vec::new();
    let agents = world.agents();
    for prey in agents.iter().filter(|a| a.alive && a.kind == EntityKind::Prey) {
        let mut touching: Vec<u32> = Vec::new();
        let mut pack = 0usize;
        for pred in agents.iter().filter(|a| a.alive && a.kind == EntityKind::Predator) {
            let d = prey.pose.distance_to(&pred.pose);
            if d <= prey.radius + pred.radius {
                touching.push(pred.id);
            }
            if d <= rule.coop_radius {
                pack += 1;
            }
        }
        if touching.is_empty() {
            continue;
        }
        if rule.wolfpack && pack < MIN_PACK {
            continue;
        }
        for predator in touching {
            events.push(Event::Damage { prey: prey.id, predator });
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> WorldParams<f64> {
        WorldParams::default()
    }

    fn world_with(params: WorldParams<f64>) -> World<f64> {
        World::new(params, CaptureRule::default(), 7)
    }

    #[test]
    fn empty_field_gives_zero_intensity() {
        let mut w = world_with(params());
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let p = w.sense(id).unwrap();
        assert_eq!(p.left(OdorCategory::Food), 0.0);
        assert_eq!(p.right(OdorCategory::Food), 0.0);
        assert!(p.contacts.is_empty());
    }

    #[test]
    fn emitter_on_heading_axis_is_symmetric() {
        let mut w = world_with(params());
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        w.add_food_at(Pose::new(70.0, 50.0, 0.0));
        let p = w.sense(id).unwrap();
        assert!((p.left(OdorCategory::Food) - p.right(OdorCategory::Food)).abs() < 1e-12);
        assert!(p.left(OdorCategory::Food) > 0.0);
    }

    #[test]
    fn intensity_matches_direct_formula() {
        // Brute-force evaluation of exp(-d/lambda) at both antenna points.
        let prm = params();
        let mut w = world_with(prm);
        let pose = Pose::new(40.0, 35.0, 0.7);
        let id = w.spawn_agent_at(EntityKind::Prey, pose);
        let food = Pose::new(52.0, 41.0, 0.0);
        w.add_food_at(food);
        let p = w.sense(id).unwrap();

        let phi = 30.0f64.to_radians();
        let ra = 1.5;
        let lx = pose.x + ra * (pose.heading + phi).cos();
        let ly = pose.y + ra * (pose.heading + phi).sin();
        let rx = pose.x + ra * (pose.heading - phi).cos();
        let ry = pose.y + ra * (pose.heading - phi).sin();
        let dl = ((lx - food.x).powi(2) + (ly - food.y).powi(2)).sqrt();
        let dr = ((rx - food.x).powi(2) + (ry - food.y).powi(2)).sqrt();
        assert!((p.left(OdorCategory::Food) - (-dl / 15.0).exp()).abs() < 1e-12);
        assert!((p.right(OdorCategory::Food) - (-dr / 15.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn self_odor_excluded() {
        let mut w = world_with(params());
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let p = w.sense(id).unwrap();
        assert_eq!(p.left(OdorCategory::Prey), 0.0);
    }

    #[test]
    fn dead_agents_do_not_emit_or_sense() {
        let mut w = world_with(params());
        let a = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let b = w.spawn_agent_at(EntityKind::Prey, Pose::new(55.0, 50.0, 0.0));
        w.kill(b).unwrap();
        let p = w.sense(a).unwrap();
        assert_eq!(p.left(OdorCategory::Prey), 0.0);
        assert_eq!(w.sense(b), Err(WorldError::NoSuchAgent(b)));
        assert_eq!(w.sense(99), Err(WorldError::NoSuchAgent(99)));
    }

    #[test]
    fn sensing_locality_moving_farther_never_increases() {
        let prm = params();
        let mut w = world_with(prm);
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(20.0, 20.0, 0.3));
        let mut last = (1.0f64, 1.0f64);
        // Slide the emitter directly away from the agent along a ray.
        for k in 1..20 {
            let d = 5.0 + 4.0 * k as f64;
            let mut w2 = w.clone();
            w2.add_food_at(Pose::new(20.0 + d, 20.0 + d * 0.5, 0.0));
            let p = w2.sense(id).unwrap();
            let cur = (p.left(OdorCategory::Food), p.right(OdorCategory::Food));
            assert!(cur.0 <= last.0 + 1e-15 && cur.1 <= last.1 + 1e-15);
            last = cur;
        }
        let _ = &mut w;
    }

    #[test]
    fn apply_action_identity_and_unit_step() {
        let prm = params();
        let pose = Pose::new(5.0, 5.0, 0.0);
        let same = apply_action(&pose, &ActionCommand::stop(), &prm).unwrap();
        assert_eq!(same, pose);
        let fwd = apply_action(
            &pose,
            &ActionCommand { forward_speed: 1.0, turn_rate: 0.0 },
            &prm,
        )
        .unwrap();
        assert_eq!((fwd.x, fwd.y), (6.0, 5.0));
    }

    #[test]
    fn apply_action_rejects_out_of_bound_commands() {
        let prm = params();
        let pose = Pose::new(5.0, 5.0, 0.0);
        let bad = ActionCommand { forward_speed: 2.0, turn_rate: 0.0 };
        assert!(apply_action(&pose, &bad, &prm).is_err());
        let bad2 = ActionCommand { forward_speed: 0.5, turn_rate: 0.9 };
        assert!(apply_action(&pose, &bad2, &prm).is_err());
        let bad3 = ActionCommand { forward_speed: -0.1, turn_rate: 0.0 };
        assert!(apply_action(&pose, &bad3, &prm).is_err());
    }

    #[test]
    fn random_commands_match_reference_integrator() {
        use rand::Rng;
        let prm = params();
        let mut rng = crate::rng::stream(11, crate::rng::StreamDomain::Harness, 0);
        let mut pose = Pose::new(50.0, 50.0, 0.0);
        // Independent scalar-by-scalar reference.
        let (mut rx, mut ry, mut rh) = (50.0f64, 50.0f64, 0.0f64);
        for _ in 0..1000 {
            let v = rng.gen::<f64>();
            let t = (rng.gen::<f64>() * 2.0 - 1.0) * 0.5;
            let cmd = ActionCommand { forward_speed: v, turn_rate: t };
            pose = apply_action(&pose, &cmd, &prm).unwrap();

            rh += t;
            while rh >= core::f64::consts::PI {
                rh -= 2.0 * core::f64::consts::PI;
            }
            while rh < -core::f64::consts::PI {
                rh += 2.0 * core::f64::consts::PI;
            }
            rx = (rx + v * rh.cos()).clamp(0.0, 100.0);
            ry = (ry + v * rh.sin()).clamp(0.0, 100.0);
            assert!((pose.x - rx).abs() < 1e-9);
            assert!((pose.y - ry).abs() < 1e-9);
            assert!((pose.heading - rh).abs() < 1e-9);
        }
    }

    #[test]
    fn containment_after_any_step() {
        let prm = params();
        let mut w = world_with(prm);
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(0.5, 99.8, 2.5));
        let mut cmds = BTreeMap::new();
        for _ in 0..50 {
            cmds.insert(id, ActionCommand { forward_speed: 1.0, turn_rate: 0.0 });
            w.step(&cmds).unwrap();
            let b = w.agent(id).unwrap();
            assert!(b.pose.x >= 0.0 && b.pose.x <= 100.0);
            assert!(b.pose.y >= 0.0 && b.pose.y <= 100.0);
        }
    }

    #[test]
    fn step_with_no_agents_only_advances_counter() {
        let mut w = world_with(params());
        w.add_food_at(Pose::new(10.0, 10.0, 0.0));
        let before = w.clone();
        let ev = w.step(&BTreeMap::new()).unwrap();
        assert!(ev.is_empty());
        assert_eq!(w.step_count, before.step_count + 1);
        assert_eq!(w.foods(), before.foods());
    }

    #[test]
    fn adjacent_prey_eats_once_and_patch_regenerates() {
        let mut w = world_with(params());
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let f = w.add_food_at(Pose::new(51.0, 50.0, 0.0));
        let mut cmds = BTreeMap::new();
        cmds.insert(id, ActionCommand::stop());
        let ev = w.step(&cmds).unwrap();
        assert_eq!(
            ev,
            vec![Event::Eat { agent: id, target: EatTarget::Food(f), amount: 0.3 }]
        );
        assert!(!w.foods()[0].available);
        assert_eq!(w.foods()[0].regen_left, 200);
        // Unavailable for the next 199 steps; eaten again exactly on the
        // 200th step after the first eat.
        for k in 0..199 {
            let ev = w.step(&cmds).unwrap();
            assert!(ev.is_empty(), "unexpected event at regen step {k}");
        }
        let ev = w.step(&cmds).unwrap();
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn missing_command_is_an_error() {
        let mut w = world_with(params());
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let err = w.step(&BTreeMap::new()).unwrap_err();
        assert_eq!(err, WorldError::IncompleteCommands(id));
    }

    #[test]
    fn command_for_dead_agent_is_an_error() {
        let mut w = world_with(params());
        let id = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        w.kill(id).unwrap();
        let mut cmds = BTreeMap::new();
        cmds.insert(id, ActionCommand::stop());
        assert_eq!(w.step(&cmds), Err(WorldError::UnknownCommandTarget(id)));
    }

    #[test]
    fn wolfpack_requires_support() {
        let mut w = world_with(params());
        w.capture = CaptureRule { wolfpack: true, coop_radius: 6.0 };
        let prey = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let p1 = w.spawn_agent_at(EntityKind::Predator, Pose::new(51.5, 50.0, 0.0));
        // Lone contact: no damage under the wolfpack rule.
        let ev = capture_damage_events(&w, &w.capture);
        assert!(ev.is_empty());
        // Plain rule on the same snapshot: damage.
        let plain = CaptureRule { wolfpack: false, coop_radius: 6.0 };
        let ev = capture_damage_events(&w, &plain);
        assert_eq!(ev, vec![Event::Damage { prey, predator: p1 }]);
        // Second predator inside the cooperation radius: damage under both.
        let _p2 = w.spawn_agent_at(EntityKind::Predator, Pose::new(54.0, 52.0, 0.0));
        let ev = capture_damage_events(&w, &w.capture);
        assert_eq!(ev, vec![Event::Damage { prey, predator: p1 }]);
    }

    #[test]
    fn rollout_replay_is_deterministic() {
        use rand::Rng;
        let run = |seed: u64| -> Vec<Vec<Event<f64>>> {
            let mut w = world_with(params());
            let prey = w.spawn_agent(EntityKind::Prey);
            let pred = w.spawn_agent(EntityKind::Predator);
            for _ in 0..3 {
                w.add_food();
            }
            let mut rng = crate::rng::stream(seed, crate::rng::StreamDomain::Harness, 1);
            let mut log = Vec::new();
            for _ in 0..500 {
                let mut cmds = BTreeMap::new();
                for id in [prey, pred] {
                    let v = rng.gen::<f64>();
                    let t = (rng.gen::<f64>() * 2.0 - 1.0) * 0.5;
                    cmds.insert(id, ActionCommand { forward_speed: v, turn_rate: t });
                }
                log.push(w.step(&cmds).unwrap());
            }
            log
        };
        assert_eq!(run(123), run(123));
    }

    #[test]
    fn food_conserved_one_eat_per_cycle() {
        let mut w = world_with(params());
        let a = w.spawn_agent_at(EntityKind::Prey, Pose::new(50.0, 50.0, 0.0));
        let b = w.spawn_agent_at(EntityKind::Prey, Pose::new(51.0, 50.5, 0.0));
        w.add_food_at(Pose::new(50.5, 50.2, 0.0));
        let mut cmds = BTreeMap::new();
        cmds.insert(a, ActionCommand::stop());
        cmds.insert(b, ActionCommand::stop());
        let ev = w.step(&cmds).unwrap();
        // Both prey touch the patch; only the lowest id eats.
        assert_eq!(ev.len(), 1);
        assert!(matches!(ev[0], Event::Eat { agent, .. } if agent == a));
    }

    #[test]
    fn discretize_recovers_exact_actions() {
        let limits = MotionLimits { v_max: 1.0, omega_max: 0.5 };
        for action in Action::ALL {
            let cmd = action.command(&limits);
            assert_eq!(discretize_command(&cmd, &limits), action);
        }
        // A shallow-turn taxis command labels as the nearest forward-turn.
        let cmd = ActionCommand { forward_speed: 0.8, turn_rate: 0.2 };
        assert_eq!(discretize_command(&cmd, &limits), Action::ForwardLeft);
    }

    #[test]
    fn event_ordering_is_canonical() {
        let mut ev = vec![
            Event::Death { agent: 1, cause: DeathCause::Starved, age: 5 },
            Event::Damage { prey: 2, predator: 9 },
            Event::Eat { agent: 3, target: EatTarget::Food(0), amount: 0.3 },
            Event::Damage { prey: 2, predator: 8 },
            Event::Eat { agent: 1, target: EatTarget::Food(2), amount: 0.3 },
        ];
        sort_events(&mut ev);
        assert!(matches!(ev[0], Event::Eat { agent: 1, .. }));
        assert!(matches!(ev[1], Event::Eat { agent: 3, .. }));
        assert!(matches!(ev[2], Event::Damage { prey: 2, predator: 8 }));
        assert!(matches!(ev[3], Event::Damage { prey: 2, predator: 9 }));
        assert!(matches!(ev[4], Event::Death { agent: 1, .. }));
    }
}
