//! The experiment layer: prey and predator populations in one arena, the
//! per-step pipeline (sense, learn, act, world step, deaths, respawn),
//! epoch bookkeeping with freeze controls, and the co-adaptation report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, AgentParams, AgentState, ArchitectureProfile};
use crate::num::{lit, to_f64, Scalar};
use crate::soma::StepEffects;
use crate::stats;
use crate::world::{
    sort_events, CaptureRule, DeathCause, EatTarget, EntityKind, Event, Percept, Pose, World,
    WorldError, WorldParams,
};

#[derive(Debug, Error)]
pub enum EcologyError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("respawn of a live agent {0}")]
    RespawnAlive(u32),
    #[error("co-adaptation needs at least 4 epochs, got {0}")]
    TooFewEpochs(usize),
}

/// Arena population layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Uniform random placement.
    Open,
    /// A corridor: prey start near the left wall, food sits near the right
    /// wall, predators (if any) hold the middle. Respawns return to the
    /// fixed start poses.
    Corridor,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Open => "open",
            Layout::Corridor => "corridor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(Layout::Open),
            "corridor" => Some(Layout::Corridor),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub prey: u32,
    pub predators: u32,
    pub food: u32,
    pub wolfpack: bool,
    pub epoch_steps: u32,
    pub epochs: u32,
    pub freeze_prey: bool,
    pub freeze_predators: bool,
    pub layout: Layout,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            prey: 8,
            predators: 2,
            food: 6,
            wolfpack: false,
            epoch_steps: 2000,
            epochs: 50,
            freeze_prey: false,
            freeze_predators: false,
            layout: Layout::Open,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationProfiles {
    pub prey: ArchitectureProfile,
    pub predators: ArchitectureProfile,
}

impl Default for PopulationProfiles {
    fn default() -> Self {
        Self { prey: ArchitectureProfile::FULL, predators: ArchitectureProfile::FULL }
    }
}

/// Everything a run needs besides the seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationConfig<S> {
    pub world: WorldParams<S>,
    pub coop_radius: S,
    pub agent: AgentParams<S>,
    pub scenario: ScenarioSpec,
    pub profiles: PopulationProfiles,
}

impl<S: Scalar> Default for SimulationConfig<S> {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            coop_radius: lit(6.0),
            agent: AgentParams::default(),
            scenario: ScenarioSpec::default(),
            profiles: PopulationProfiles::default(),
        }
    }
}

impl<S: Scalar> SimulationConfig<S> {
    pub fn validate(&self) -> Result<(), EcologyError> {
        let s = &self.scenario;
        if s.epoch_steps < 1 || s.epochs < 1 {
            return Err(EcologyError::InvalidScenario(
                "epoch_steps and epochs must be at least 1".into(),
            ));
        }
        if s.wolfpack && s.predators < 2 {
            return Err(EcologyError::InvalidScenario(
                "wolfpack requires at least 2 predators".into(),
            ));
        }
        self.profiles.prey.validate()?;
        self.profiles.predators.validate()?;
        Ok(())
    }
}

/// Per-epoch population measurements; one JSONL object per epoch. Keys are
/// fixed: fields without data in an epoch serialize as null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub steps: u32,
    pub captures: u64,
    pub captures_per_predator_per_1k: f64,
    pub no_predators: bool,
    pub prey_deaths: u64,
    pub predator_deaths: u64,
    pub mean_prey_lifetime: Option<f64>,
    pub prey_eats: u64,
    pub prey_intake_per_1k: f64,
    pub mean_prey_energy: Option<f64>,
    pub mean_predator_energy: Option<f64>,
    pub prey_prototypes_mean: Option<f64>,
    pub predator_prototypes_mean: Option<f64>,
    pub prey_goal_attempts: u64,
    pub prey_goal_successes: u64,
    pub predator_goal_attempts: u64,
    pub predator_goal_successes: u64,
    pub prey_goal_success_rate: Option<f64>,
    pub predator_goal_success_rate: Option<f64>,
}

/// Observer hook for trajectory/event sinks; called once per completed step.
pub trait StepObserver<S> {
    fn on_step(&mut self, step: u64, world: &World<S>, events: &[Event<S>]);
}

pub struct NullObserver;

impl<S> StepObserver<S> for NullObserver {
    fn on_step(&mut self, _step: u64, _world: &World<S>, _events: &[Event<S>]) {}
}

#[derive(Clone, Copy, Debug)]
enum RespawnPolicy<S> {
    Random,
    Fixed(Pose<S>),
}

/// One running scenario: the arena, its agents and the epoch accumulators.
pub struct Simulation<S> {
    pub world: World<S>,
    pub agents: Vec<AgentState<S>>,
    pub config: SimulationConfig<S>,
    respawn: Vec<RespawnPolicy<S>>,
    percepts: Vec<Option<Percept<S>>>,
    pending_effects: Vec<StepEffects<S>>,
    has_transition: Vec<bool>,
    acc: EpochAccumulator,
    goal_attempt_base: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, Default)]
struct EpochAccumulator {
    captures: u64,
    prey_deaths: u64,
    predator_deaths: u64,
    prey_lifetime_sum: f64,
    prey_eats: u64,
    prey_intake: f64,
    prey_energy_sum: f64,
    prey_energy_n: u64,
    predator_energy_sum: f64,
    predator_energy_n: u64,
}

impl<S: Scalar> Simulation<S> {
    pub fn new(config: SimulationConfig<S>, master_seed: u64) -> Result<Self, EcologyError> {
        config.validate()?;
        let capture = CaptureRule { wolfpack: config.scenario.wolfpack, coop_radius: config.coop_radius };
        let mut world = World::new(config.world, capture, master_seed);
        let mut agents = Vec::new();
        let mut respawn = Vec::new();

        let w = config.world.width;
        let h = config.world.height;
        let margin: S = lit(5.0);
        let corridor_prey = |i: u32, n: u32| -> Pose<S> {
            let frac = lit::<S>((i + 1) as f64 / (n + 1) as f64);
            Pose::new(margin, h * frac, S::zero())
        };
        let corridor_food = |i: u32, n: u32| -> Pose<S> {
            let frac = lit::<S>((i + 1) as f64 / (n + 1) as f64);
            Pose::new(w - margin, h * frac, S::zero())
        };
        let corridor_pred = |i: u32, n: u32| -> Pose<S> {
            let frac = lit::<S>((i + 1) as f64 / (n + 1) as f64);
            Pose::new(w / lit(2.0), h * frac, S::zero())
        };

        for i in 0..config.scenario.prey {
            let (id, policy) = match config.scenario.layout {
                Layout::Open => {
                    (world.spawn_agent(EntityKind::Prey), RespawnPolicy::Random)
                }
                Layout::Corridor => {
                    let pose = corridor_prey(i, config.scenario.prey);
                    (world.spawn_agent_at(EntityKind::Prey, pose), RespawnPolicy::Fixed(pose))
                }
            };
            agents.push(AgentState::new(
                id,
                EntityKind::Prey,
                config.profiles.prey,
                config.agent,
                master_seed,
            )?);
            respawn.push(policy);
        }
        for i in 0..config.scenario.predators {
            let (id, policy) = match config.scenario.layout {
                Layout::Open => {
                    (world.spawn_agent(EntityKind::Predator), RespawnPolicy::Random)
                }
                Layout::Corridor => {
                    let pose = corridor_pred(i, config.scenario.predators);
                    (world.spawn_agent_at(EntityKind::Predator, pose), RespawnPolicy::Fixed(pose))
                }
            };
            agents.push(AgentState::new(
                id,
                EntityKind::Predator,
                config.profiles.predators,
                config.agent,
                master_seed,
            )?);
            respawn.push(policy);
        }
        for i in 0..config.scenario.food {
            match config.scenario.layout {
                Layout::Open => {
                    world.add_food();
                }
                Layout::Corridor => {
                    world.add_food_at(corridor_food(i, config.scenario.food));
                }
            }
        }

        let n = agents.len();
        let goal_attempt_base = vec![(0, 0); n];
        Ok(Self {
            world,
            agents,
            config,
            respawn,
            percepts: vec![None; n],
            pending_effects: vec![StepEffects::none(); n],
            has_transition: vec![false; n],
            acc: EpochAccumulator::default(),
            goal_attempt_base,
        })
    }

    fn learning_enabled(&self, kind: EntityKind) -> bool {
        match kind {
            EntityKind::Prey => !self.config.scenario.freeze_prey,
            EntityKind::Predator => !self.config.scenario.freeze_predators,
            EntityKind::Food => false,
        }
    }

    /// One full pipeline step. Order, for every agent in id order:
    /// finish the previous transition (somatic update + learning against the
    /// fresh percept), act, world step, death resolution with capture
    /// credit, terminal learning, respawn.
    pub fn step(&mut self) -> Result<Vec<Event<S>>, EcologyError> {
        // 1. Sense the current world.
        for a in 0..self.agents.len() {
            let id = self.agents[a].id;
            self.percepts[a] = if self.world.agent(id)?.alive {
                Some(self.world.sense(id)?)
            } else {
                None
            };
        }

        // 2. Close out the previous step's transitions for survivors.
        for a in 0..self.agents.len() {
            if !self.has_transition[a] {
                continue;
            }
            let learning = self.learning_enabled(self.agents[a].kind);
            let fx = self.pending_effects[a];
            let percept = self.percepts[a].clone();
            self.agents[a].learn(&fx, percept.as_ref(), learning)?;
            self.has_transition[a] = false;
            self.pending_effects[a] = StepEffects::none();
        }

        // 3. Act.
        let mut commands = BTreeMap::new();
        for a in 0..self.agents.len() {
            let Some(percept) = self.percepts[a].clone() else { continue };
            let learning = self.learning_enabled(self.agents[a].kind);
            let cmd = self.agents[a].act(&percept, learning)?;
            commands.insert(self.agents[a].id, cmd);
            self.has_transition[a] = true;
        }

        // 4. Move the world.
        let mut events = self.world.step(&commands)?;

        // 5. Somatic preview for prey: determine deaths and capture credit.
        let mut death_events: Vec<Event<S>> = Vec::new();
        let mut capture_credit: Vec<Event<S>> = Vec::new();
        for a in 0..self.agents.len() {
            if self.agents[a].kind != EntityKind::Prey || !self.has_transition[a] {
                continue;
            }
            let id = self.agents[a].id;
            let fx = StepEffects::for_agent(&events, id);
            self.pending_effects[a] = fx;
            let preview = crate::soma::update_internal(
                &self.agents[a].internal,
                &fx,
                &commands[&id],
                &self.config.agent.soma,
            );
            if preview.is_dead() {
                let captured = fx.damage_hits > 0 && preview.integrity <= S::zero();
                let cause = if captured { DeathCause::Captured } else { DeathCause::Starved };
                let age = self.agents[a].step_count - self.agents[a].life_started_at;
                death_events.push(Event::Death { agent: id, cause, age });
                if captured {
                    // Captors split the prey's energy content equally.
                    let captors: Vec<u32> = events
                        .iter()
                        .filter_map(|e| match e {
                            Event::Damage { prey, predator } if *prey == id => Some(*predator),
                            _ => None,
                        })
                        .collect();
                    let share = self.world.params.food_energy
                        / lit::<S>(captors.len().max(1) as f64);
                    for predator in captors {
                        capture_credit.push(Event::Eat {
                            agent: predator,
                            target: EatTarget::Prey(id),
                            amount: share,
                        });
                    }
                }
            }
        }
        events.extend(capture_credit.iter().copied());

        // 6. Somatic preview for predators (capture credit included).
        for a in 0..self.agents.len() {
            if self.agents[a].kind != EntityKind::Predator || !self.has_transition[a] {
                continue;
            }
            let id = self.agents[a].id;
            let fx = StepEffects::for_agent(&events, id);
            self.pending_effects[a] = fx;
            let preview = crate::soma::update_internal(
                &self.agents[a].internal,
                &fx,
                &commands[&id],
                &self.config.agent.soma,
            );
            if preview.is_dead() {
                let age = self.agents[a].step_count - self.agents[a].life_started_at;
                death_events.push(Event::Death { agent: id, cause: DeathCause::Starved, age });
            }
        }

        // 7. Commit deaths: terminal learning, world flag, respawn.
        for ev in &death_events {
            let Event::Death { agent: id, cause, age } = ev else { unreachable!() };
            let a = *id as usize;
            let learning = self.learning_enabled(self.agents[a].kind);
            let fx = self.pending_effects[a];
            self.agents[a].learn(&fx, None, learning)?;
            debug_assert!(self.agents[a].is_dead());
            self.has_transition[a] = false;
            self.pending_effects[a] = StepEffects::none();
            self.world.kill(*id)?;

            match self.agents[a].kind {
                EntityKind::Prey => {
                    self.acc.prey_deaths += 1;
                    self.acc.prey_lifetime_sum += *age as f64;
                    if *cause == DeathCause::Captured {
                        self.acc.captures += 1;
                    }
                }
                EntityKind::Predator => {
                    self.acc.predator_deaths += 1;
                }
                EntityKind::Food => unreachable!(),
            }

            // Respawn immediately: lifelong learning, fresh body.
            self.agents[a].respawn_reset();
            let pose = match self.respawn[a] {
                RespawnPolicy::Random => self.world.random_pose(),
                RespawnPolicy::Fixed(p) => p,
            };
            self.world.revive_at(*id, pose)?;
        }

        events.extend(death_events);
        sort_events(&mut events);

        // 8. Per-step metric accumulation.
        for ev in &events {
            if let Event::Eat { agent, target: EatTarget::Food(_), amount } = ev {
                let a = *agent as usize;
                if self.agents[a].kind == EntityKind::Prey {
                    self.acc.prey_eats += 1;
                    self.acc.prey_intake += to_f64(*amount);
                }
            }
        }
        for agent in &self.agents {
            if self.world.agent(agent.id)?.alive {
                match agent.kind {
                    EntityKind::Prey => {
                        self.acc.prey_energy_sum += to_f64(agent.internal.energy);
                        self.acc.prey_energy_n += 1;
                    }
                    EntityKind::Predator => {
                        self.acc.predator_energy_sum += to_f64(agent.internal.energy);
                        self.acc.predator_energy_n += 1;
                    }
                    EntityKind::Food => {}
                }
            }
        }

        Ok(events)
    }

    fn goal_tally(&self, a: usize) -> (u64, u64) {
        (self.agents[a].goal_attempts, self.agents[a].goal_successes)
    }

    /// Run one epoch of `epoch_steps` steps and aggregate its metrics.
    pub fn run_epoch(
        &mut self,
        epoch: u32,
        observer: &mut dyn StepObserver<S>,
    ) -> Result<EpochMetrics, EcologyError> {
        self.acc = EpochAccumulator::default();
        for a in 0..self.agents.len() {
            self.goal_attempt_base[a] = self.goal_tally(a);
        }
        let steps = self.config.scenario.epoch_steps;
        for _ in 0..steps {
            let events = self.step()?;
            observer.on_step(self.world.step_count, &self.world, &events);
        }
        Ok(self.collect_metrics(epoch, steps))
    }

    fn collect_metrics(&self, epoch: u32, steps: u32) -> EpochMetrics {
        let preds = self.config.scenario.predators as f64;
        let prey = self.config.scenario.prey as f64;
        let acc = &self.acc;

        let mut prey_protos = Vec::new();
        let mut pred_protos = Vec::new();
        let mut prey_goal = (0u64, 0u64);
        let mut pred_goal = (0u64, 0u64);
        for (a, agent) in self.agents.iter().enumerate() {
            let protos = agent.learner.as_ref().map(|l| l.map.len() as f64);
            let (at, su) = self.goal_tally(a);
            let (b_at, b_su) = self.goal_attempt_base[a];
            let d_at = at - b_at;
            let d_su = su - b_su;
            match agent.kind {
                EntityKind::Prey => {
                    if let Some(p) = protos {
                        prey_protos.push(p);
                    }
                    prey_goal.0 += d_at;
                    prey_goal.1 += d_su;
                }
                EntityKind::Predator => {
                    if let Some(p) = protos {
                        pred_protos.push(p);
                    }
                    pred_goal.0 += d_at;
                    pred_goal.1 += d_su;
                }
                EntityKind::Food => {}
            }
        }

        let per_1k = |count: f64, pop: f64| {
            if pop > 0.0 {
                count / pop / steps as f64 * 1000.0
            } else {
                0.0
            }
        };

        EpochMetrics {
            epoch,
            steps,
            captures: acc.captures,
            captures_per_predator_per_1k: per_1k(acc.captures as f64, preds),
            no_predators: self.config.scenario.predators == 0,
            prey_deaths: acc.prey_deaths,
            predator_deaths: acc.predator_deaths,
            mean_prey_lifetime: (acc.prey_deaths > 0)
                .then(|| acc.prey_lifetime_sum / acc.prey_deaths as f64),
            prey_eats: acc.prey_eats,
            prey_intake_per_1k: per_1k(acc.prey_intake, prey),
            mean_prey_energy: (acc.prey_energy_n > 0)
                .then(|| acc.prey_energy_sum / acc.prey_energy_n as f64),
            mean_predator_energy: (acc.predator_energy_n > 0)
                .then(|| acc.predator_energy_sum / acc.predator_energy_n as f64),
            prey_prototypes_mean: (!prey_protos.is_empty()).then(|| stats::mean(&prey_protos)),
            predator_prototypes_mean: (!pred_protos.is_empty()).then(|| stats::mean(&pred_protos)),
            prey_goal_attempts: prey_goal.0,
            prey_goal_successes: prey_goal.1,
            predator_goal_attempts: pred_goal.0,
            predator_goal_successes: pred_goal.1,
            prey_goal_success_rate: (prey_goal.0 > 0)
                .then(|| prey_goal.1 as f64 / prey_goal.0 as f64),
            predator_goal_success_rate: (pred_goal.0 > 0)
                .then(|| pred_goal.1 as f64 / pred_goal.0 as f64),
        }
    }

    /// Run all configured epochs.
    pub fn run(
        &mut self,
        observer: &mut dyn StepObserver<S>,
    ) -> Result<Vec<EpochMetrics>, EcologyError> {
        let mut out = Vec::new();
        for e in 0..self.config.scenario.epochs {
            out.push(self.run_epoch(e, observer)?);
        }
        Ok(out)
    }
}

/// Lag-1 co-adaptation indicators over an epoch series. `lifetime_fill`
/// substitutes for epochs without any prey death (no lifetime sample):
/// use the epoch length, the censoring bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoadaptationReport {
    pub epochs: u32,
    pub capture_series: Vec<f64>,
    pub lifetime_series: Vec<f64>,
    pub delta_capture_z: Vec<f64>,
    pub delta_lifetime_z: Vec<f64>,
    pub corr_capture_to_lifetime_lag1: f64,
    pub corr_lifetime_to_capture_lag1: f64,
    pub dominance_alternations: u32,
    pub degenerate: bool,
    pub note: String,
}

pub fn coadaptation(
    metrics: &[EpochMetrics],
    lifetime_fill: f64,
) -> Result<CoadaptationReport, EcologyError> {
    if metrics.len() < 4 {
        return Err(EcologyError::TooFewEpochs(metrics.len()));
    }
    let captures: Vec<f64> = metrics.iter().map(|m| m.captures_per_predator_per_1k).collect();
    let lifetimes: Vec<f64> =
        metrics.iter().map(|m| m.mean_prey_lifetime.unwrap_or(lifetime_fill)).collect();

    let dc = stats::first_differences(&captures);
    let dl = stats::first_differences(&lifetimes);
    let zc = stats::z_normalize(&dc);
    let zl = stats::z_normalize(&dl);
    let degenerate = zc.is_none() || zl.is_none();
    let n = dc.len();
    let zc = zc.unwrap_or_else(|| vec![0.0; n]);
    let zl = zl.unwrap_or_else(|| vec![0.0; n]);

    let (corr_cl, corr_lc) = if degenerate || n < 2 {
        (0.0, 0.0)
    } else {
        (stats::pearson(&zc[..n - 1], &zl[1..]), stats::pearson(&zl[..n - 1], &zc[1..]))
    };

    let alternations = {
        let zc_raw = stats::z_normalize(&captures);
        let zl_raw = stats::z_normalize(&lifetimes);
        match (zc_raw, zl_raw) {
            (Some(zc), Some(zl)) => {
                let diff: Vec<f64> = zc.iter().zip(&zl).map(|(a, b)| a - b).collect();
                stats::sign_changes(&diff)
            }
            _ => 0,
        }
    };

    Ok(CoadaptationReport {
        epochs: metrics.len() as u32,
        capture_series: captures,
        lifetime_series: lifetimes,
        delta_capture_z: zc,
        delta_lifetime_z: zl,
        corr_capture_to_lifetime_lag1: corr_cl,
        corr_lifetime_to_capture_lag1: corr_lc,
        dominance_alternations: alternations,
        degenerate,
        note: "exploratory co-adaptation indicators defined by this artifact; \
               not a validated arms-race statistic"
            .to_string(),
    })
}
