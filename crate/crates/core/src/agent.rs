//! One agent assembled from the layers: strict-priority arbitration
//! (panic > plan > learned policy > reflex > random), the fixed-order
//! learning pipeline, and the architecture profiles that enable subsets of
//! the stack.

use thiserror::Error;

use crate::adaptive::{select_action, AdaptiveError, AdaptiveLearner, AdaptiveParams};
use crate::contextual::{
    plan, plan_step, select_goal, ContextError, ContextualParams, Episode, EpisodeStore, GoalBook,
    Plan, PlanStep, TransitionGraph,
};
use crate::num::{to_f64, Scalar};
use crate::reactive::{
    dominant_drive, random_action, reflex_action, reflexes_for, ReactiveParams, ReflexSpec,
};
use crate::rng::{stream, SimRng, StreamDomain};
use crate::soma::{
    drive_errors, reward, update_internal, Drive, InternalState, PerDrive, SomaParams, StepEffects,
};
use crate::world::{
    discretize_command, Action, ActionCommand, EntityKind, MotionLimits, Percept, FEATURE_COUNT,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AgentError {
    #[error("agent {0} is dead")]
    Dead(u32),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Adaptive(#[from] AdaptiveError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// Which module subset is enabled. The somatic layer is always on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchitectureProfile {
    pub reactive: bool,
    pub adaptive: bool,
    pub goal_selection: bool,
    pub planning: bool,
    pub memory: bool,
}

impl ArchitectureProfile {
    /// Uniform-random action baseline (no layers at all).
    pub const RANDOM: Self = Self {
        reactive: false,
        adaptive: false,
        goal_selection: false,
        planning: false,
        memory: false,
    };
    /// Pure reflex agent.
    pub const REACTIVE_ONLY: Self = Self { reactive: true, ..Self::RANDOM };
    /// Reflexes plus the prototype/value learner.
    pub const ADAPTIVE: Self = Self { adaptive: true, ..Self::REACTIVE_ONLY };
    /// Adds learning-progress goal bookkeeping (effective once planning is
    /// also enabled).
    pub const ADAPTIVE_GOALS: Self = Self { goal_selection: true, ..Self::ADAPTIVE };
    /// Value-targeted planning over the learned transition graph.
    pub const ADAPTIVE_PLANNING: Self = Self { planning: true, ..Self::ADAPTIVE };
    /// Planning plus the episodic memory.
    pub const MEMORY_PLANNING: Self = Self { memory: true, ..Self::ADAPTIVE_PLANNING };
    /// Everything on.
    pub const FULL: Self = Self {
        reactive: true,
        adaptive: true,
        goal_selection: true,
        planning: true,
        memory: true,
    };

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.planning && !self.adaptive {
            return Err(AgentError::InvalidProfile("planning requires adaptive".into()));
        }
        if self.goal_selection && !self.adaptive {
            return Err(AgentError::InvalidProfile("goal selection requires adaptive".into()));
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().replace('-', "_").as_str() {
            "RANDOM" => Some(Self::RANDOM),
            "REACTIVE_ONLY" => Some(Self::REACTIVE_ONLY),
            "ADAPTIVE" => Some(Self::ADAPTIVE),
            "ADAPTIVE_GOALS" => Some(Self::ADAPTIVE_GOALS),
            "ADAPTIVE_PLANNING" => Some(Self::ADAPTIVE_PLANNING),
            "MEMORY_PLANNING" => Some(Self::MEMORY_PLANNING),
            "FULL" => Some(Self::FULL),
            _ => None,
        }
    }

    pub const PRESET_NAMES: [&'static str; 7] = [
        "RANDOM",
        "REACTIVE_ONLY",
        "ADAPTIVE",
        "ADAPTIVE_GOALS",
        "ADAPTIVE_PLANNING",
        "MEMORY_PLANNING",
        "FULL",
    ];

    pub fn name(&self) -> String {
        for n in Self::PRESET_NAMES {
            if Self::preset(n) == Some(*self) {
                return n.to_string();
            }
        }
        let mut flags = Vec::new();
        for (on, n) in [
            (self.reactive, "reactive"),
            (self.adaptive, "adaptive"),
            (self.goal_selection, "goal_selection"),
            (self.planning, "planning"),
            (self.memory, "memory"),
        ] {
            if on {
                flags.push(n);
            }
        }
        if flags.is_empty() {
            "RANDOM".to_string()
        } else {
            format!("flags:{}", flags.join(","))
        }
    }

    /// Parse a preset name or a `flags:a,b,c` list.
    pub fn parse(text: &str) -> Result<Self, AgentError> {
        if let Some(p) = Self::preset(text.trim()) {
            return Ok(p);
        }
        if let Some(rest) = text.trim().strip_prefix("flags:") {
            let mut p = Self::RANDOM;
            for flag in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match flag {
                    "reactive" => p.reactive = true,
                    "adaptive" => p.adaptive = true,
                    "goal_selection" => p.goal_selection = true,
                    "planning" => p.planning = true,
                    "memory" => p.memory = true,
                    other => {
                        return Err(AgentError::InvalidProfile(format!("unknown flag {other}")))
                    }
                }
            }
            p.validate()?;
            return Ok(p);
        }
        Err(AgentError::InvalidProfile(format!("unknown profile {text}")))
    }
}

/// All per-layer parameters an agent needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentParams<S> {
    pub soma: SomaParams<S>,
    pub reactive: ReactiveParams<S>,
    pub adaptive: AdaptiveParams<S>,
    pub contextual: ContextualParams<S>,
    pub limits: MotionLimits<S>,
}

impl<S: Scalar> Default for AgentParams<S> {
    fn default() -> Self {
        Self {
            soma: SomaParams::default(),
            reactive: ReactiveParams::default(),
            adaptive: AdaptiveParams::default(),
            contextual: ContextualParams::default(),
            limits: MotionLimits { v_max: crate::num::lit(1.0), omega_max: crate::num::lit(0.5) },
        }
    }
}

/// Which layer produced the last emitted command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arbitration {
    Panic,
    Plan,
    Adaptive,
    Reflex,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalAttempt {
    pub goal: u32,
    pub adopted_at: u64,
}

#[derive(Clone, Debug)]
struct Pending<S> {
    proto: Option<u32>,
    action: u8,
    cmd: ActionCommand<S>,
    goal: Option<u32>,
    step: u64,
}

/// One agent: internal state, enabled layer substates, private random
/// streams, and the bookkeeping that ties act and learn together.
#[derive(Clone, Debug)]
pub struct AgentState<S> {
    pub id: u32,
    pub kind: EntityKind,
    pub profile: ArchitectureProfile,
    pub params: AgentParams<S>,
    pub internal: InternalState<S>,
    pub learner: Option<AdaptiveLearner<S>>,
    pub graph: Option<TransitionGraph>,
    pub goals: Option<GoalBook>,
    pub plan: Option<Plan>,
    pub attempt: Option<GoalAttempt>,
    pub memory: Option<EpisodeStore<S>>,
    reflexes: PerDrive<ReflexSpec<S>>,
    rng_reactive: SimRng,
    rng_adaptive: SimRng,
    rng_goal: SimRng,
    /// Number of act() calls; the epsilon schedule's clock.
    pub step_count: u64,
    pending: Option<Pending<S>>,
    cache: Option<([S; FEATURE_COUNT], Option<u32>)>,
    abort_flag: bool,
    /// Instrumentation: quantizer evaluations (cache misses).
    pub quantize_calls: u64,
    pub last_arbitration: Option<Arbitration>,
    /// Lifetime bookkeeping: deaths and the step the current life started.
    pub deaths: u64,
    pub life_started_at: u64,
    /// Resolved goal attempts while learning was enabled.
    pub goal_attempts: u64,
    pub goal_successes: u64,
}

impl<S: Scalar> AgentState<S> {
    pub fn new(
        id: u32,
        kind: EntityKind,
        profile: ArchitectureProfile,
        params: AgentParams<S>,
        master_seed: u64,
    ) -> Result<Self, AgentError> {
        profile.validate()?;
        Ok(Self {
            id,
            kind,
            profile,
            params,
            internal: InternalState::full(),
            learner: profile.adaptive.then(|| AdaptiveLearner::new(&params.adaptive)),
            graph: profile.planning.then(TransitionGraph::new),
            goals: profile.goal_selection.then(|| GoalBook::new(params.contextual.w_lp)),
            plan: None,
            attempt: None,
            memory: profile.memory.then(|| EpisodeStore::new(params.contextual.memory_capacity)),
            reflexes: reflexes_for(kind, params.reactive.gain),
            rng_reactive: stream(master_seed, StreamDomain::Reactive, id as u64),
            rng_adaptive: stream(master_seed, StreamDomain::Adaptive, id as u64),
            rng_goal: stream(master_seed, StreamDomain::Goal, id as u64),
            step_count: 0,
            pending: None,
            cache: None,
            abort_flag: false,
            quantize_calls: 0,
            last_arbitration: None,
            deaths: 0,
            life_started_at: 0,
            goal_attempts: 0,
            goal_successes: 0,
        })
    }

    pub fn is_dead(&self) -> bool {
        self.internal.is_dead()
    }

    pub fn cached_prototype(&self) -> Option<u32> {
        self.cache.as_ref().and_then(|(_, p)| *p)
    }

    pub fn has_pending_transition(&self) -> bool {
        self.pending.is_some()
    }

    /// Quantize a percept at most once: repeated calls with the same percept
    /// reuse the cached assignment. With learning disabled the map is only
    /// read (nearest lookup, no growth, no drift, no visit counting).
    fn quantize_cached(&mut self, percept: &Percept<S>, learning: bool) -> Option<u32> {
        let learner = self.learner.as_mut()?;
        let x = percept.features();
        if let Some((cx, cp)) = &self.cache {
            if *cx == x {
                return *cp;
            }
        }
        self.quantize_calls += 1;
        let proto = if learning {
            Some(learner.observe(&x).id)
        } else {
            learner.map.nearest(&x).map(|(id, _)| id)
        };
        self.cache = Some((x, proto));
        proto
    }

    /// When planning is enabled and no plan or attempt is live, pick a goal
    /// and try to route to it. Goals are scored by value plus (when the
    /// goal-selection module is on) the learning-progress bonus; a goal that
    /// cannot be routed to is recorded as a failed attempt.
    pub fn goal_cycle(&mut self, learning: bool) {
        if !self.profile.planning || self.plan.is_some() || self.attempt.is_some() {
            return;
        }
        let Some(from) = self.cached_prototype() else { return };
        let Some(learner) = self.learner.as_ref() else { return };
        let n = learner.map.len() as u32;
        if n == 0 {
            return;
        }
        let errors = drive_errors(&self.internal);
        let drive = dominant_drive(&errors, &self.params.soma.priorities);
        let beta = if self.profile.goal_selection {
            self.params.contextual.beta
        } else {
            S::zero()
        };
        let book = if self.profile.goal_selection { self.goals.as_ref() } else { None };
        let goal = match select_goal(
            &learner.tables,
            drive,
            book,
            n,
            beta,
            self.params.contextual.eps_goal,
            &mut self.rng_goal,
        ) {
            Ok(g) => g,
            Err(_) => return,
        };
        let graph = self.graph.as_ref().expect("planning profile owns a graph");
        match plan(
            graph,
            from,
            goal,
            to_f64(self.params.contextual.c_step),
            self.params.contextual.m_max,
        ) {
            Some(p) => {
                self.plan = Some(p);
                self.attempt = Some(GoalAttempt { goal, adopted_at: self.step_count });
            }
            None => {
                if learning && self.profile.goal_selection {
                    self.goals
                        .as_mut()
                        .expect("goal_selection profile owns a goal book")
                        .update_outcome(goal, false);
                }
            }
        }
    }

    /// Choose this step's command. The percept is quantized once and the
    /// result reused by every layer. Arbitration is strict priority:
    /// panic escape, then an active plan, then the learned policy where
    /// confident, then the drive reflex, then uniform random.
    pub fn act(
        &mut self,
        percept: &Percept<S>,
        learning: bool,
    ) -> Result<ActionCommand<S>, AgentError> {
        if self.is_dead() {
            return Err(AgentError::Dead(self.id));
        }
        let t = self.step_count;
        self.step_count += 1;

        let proto = if self.profile.adaptive { self.quantize_cached(percept, learning) } else { None };
        self.goal_cycle(learning);

        let errors = drive_errors(&self.internal);
        let dominant = dominant_drive(&errors, &self.params.soma.priorities);

        // (1) Panic pre-emption: escape reflex regardless of everything else.
        if self.profile.reactive && errors[Drive::Safety] >= self.params.reactive.panic_threshold {
            let cmd = reflex_action(
                percept,
                self.reflexes.get(Drive::Safety),
                &self.params.reactive,
                &self.params.limits,
                &mut self.rng_reactive,
            );
            let action = discretize_command(&cmd, &self.params.limits).index();
            return Ok(self.commit(proto, action, cmd, t, Arbitration::Panic));
        }

        // (2) An active plan that yields an action.
        if self.profile.planning {
            if let (Some(pl), Some(p)) = (self.plan.as_mut(), proto) {
                match plan_step(pl, p) {
                    PlanStep::Advance(a) => {
                        let action = Action::from_index(a).expect("plans hold valid actions");
                        let cmd = action.command(&self.params.limits);
                        return Ok(self.commit(proto, a, cmd, t, Arbitration::Plan));
                    }
                    PlanStep::Hold => {}
                    PlanStep::Complete => {
                        self.plan = None;
                    }
                    PlanStep::Abort => {
                        self.plan = None;
                        self.abort_flag = true;
                    }
                }
            }
        }

        // (3) Learned policy where experience warrants confidence.
        if self.profile.adaptive {
            if let Some(p) = proto {
                let learner = self.learner.as_ref().expect("adaptive profile owns a learner");
                if learner.confidence(p) >= learner.confidence_gate {
                    let eps = learner.schedule.eps_at(t);
                    let row = *learner.tables.row(dominant, p)?;
                    let a = select_action(&row, eps, &mut self.rng_adaptive);
                    let cmd = Action::from_index(a).unwrap().command(&self.params.limits);
                    return Ok(self.commit(proto, a, cmd, t, Arbitration::Adaptive));
                }
            }
        }

        // (4) Drive reflex.
        if self.profile.reactive {
            let cmd = reflex_action(
                percept,
                self.reflexes.get(dominant),
                &self.params.reactive,
                &self.params.limits,
                &mut self.rng_reactive,
            );
            let action = discretize_command(&cmd, &self.params.limits).index();
            return Ok(self.commit(proto, action, cmd, t, Arbitration::Reflex));
        }

        // (5) Nothing enabled: uniform random over the discrete action set.
        let (action, cmd) = random_action(&self.params.limits, &mut self.rng_reactive);
        Ok(self.commit(proto, action.index(), cmd, t, Arbitration::Random))
    }

    fn commit(
        &mut self,
        proto: Option<u32>,
        action: u8,
        cmd: ActionCommand<S>,
        step: u64,
        source: Arbitration,
    ) -> ActionCommand<S> {
        self.last_arbitration = Some(source);
        self.pending = Some(Pending {
            proto,
            action,
            cmd,
            goal: self.attempt.as_ref().map(|a| a.goal),
            step,
        });
        cmd
    }

    /// Consume the pending transition in fixed order: somatic update, reward,
    /// quantize the next percept, TD backup per drive, transition recording,
    /// goal-attempt resolution, memory append. With learning disabled only
    /// the somatic update and ephemeral plan bookkeeping run. Pass `None` for
    /// the next percept when the agent did not survive the step.
    pub fn learn(
        &mut self,
        effects: &StepEffects<S>,
        next_percept: Option<&Percept<S>>,
        learning: bool,
    ) -> Result<(), AgentError> {
        let Some(pending) = self.pending.take() else {
            return Ok(());
        };

        let before = drive_errors(&self.internal);
        self.internal = update_internal(&self.internal, effects, &pending.cmd, &self.params.soma);
        let after = drive_errors(&self.internal);
        let rewards = reward(&before, &after, &self.params.soma.weights);
        let died = self.internal.is_dead();

        let next_proto = if died {
            None
        } else if let Some(np) = next_percept {
            if self.profile.adaptive {
                self.quantize_cached(np, learning)
            } else {
                None
            }
        } else {
            None
        };

        if learning && self.profile.adaptive {
            if let Some(p) = pending.proto {
                let learner = self.learner.as_mut().expect("adaptive profile owns a learner");
                let bootstrap = if died { None } else { next_proto };
                for d in Drive::ALL {
                    learner.tables.td_update(d, p, pending.action, rewards[d], bootstrap)?;
                }
            }
        }

        if learning && self.profile.planning {
            if let (Some(p), Some(pn)) = (pending.proto, next_proto) {
                self.graph
                    .as_mut()
                    .expect("planning profile owns a graph")
                    .record(p, pending.action, pn)?;
            }
        }

        if let Some(att) = self.attempt {
            let reached =
                pending.proto == Some(att.goal) || (!died && next_proto == Some(att.goal));
            let resolved = if reached {
                Some(true)
            } else if died || self.abort_flag {
                Some(false)
            } else if self.step_count.saturating_sub(att.adopted_at)
                >= self.params.contextual.h_goal
            {
                Some(false)
            } else {
                None
            };
            if let Some(success) = resolved {
                if learning {
                    self.goal_attempts += 1;
                    if success {
                        self.goal_successes += 1;
                    }
                    if self.profile.goal_selection {
                        self.goals
                            .as_mut()
                            .expect("goal_selection profile owns a goal book")
                            .update_outcome(att.goal, success);
                    }
                }
                self.attempt = None;
                self.plan = None;
                self.abort_flag = false;
            }
        }

        if learning && self.profile.memory {
            if let Some(p) = pending.proto {
                self.memory.as_mut().expect("memory profile owns a store").append(Episode {
                    step: pending.step,
                    prototype: p,
                    action: pending.action,
                    reward: rewards,
                    goal: pending.goal,
                });
            }
        }

        Ok(())
    }

    /// Reset the perishable state for a new life. Everything learned —
    /// prototypes, values, transition graph, goal records, memory — stays.
    pub fn respawn_reset(&mut self) {
        self.internal = InternalState::full();
        self.plan = None;
        self.attempt = None;
        self.pending = None;
        self.cache = None;
        self.abort_flag = false;
        self.deaths += 1;
        self.life_started_at = self.step_count;
    }
}
