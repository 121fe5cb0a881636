//! Core simulation library: a continuous 2D arena populated by prey, predators
//! and food patches, where every agent runs a layered controller — homeostatic
//! internal variables, taxis reflexes, a prototype-quantized tabular value
//! learner, and an optional transition-graph planner with goal selection and
//! an episodic memory.
//!
//! All numeric kernels are generic over the working scalar (`f32`/`f64`) via
//! [`num::Scalar`]; the crate root exports `f64` aliases, which is what the
//! experiment harness uses.

pub mod adaptive;
pub mod agent;
pub mod contextual;
pub mod ecology;
pub mod num;
pub mod reactive;
pub mod rng;
pub mod snapshot;
pub mod soma;
pub mod stats;
pub mod world;

pub use num::Scalar;

/// Default working scalar for the simulation stack.
pub type F = f64;

pub type Pose = world::Pose<F>;
pub type ActionCommand = world::ActionCommand<F>;
pub type Percept = world::Percept<F>;
pub type World = world::World<F>;
pub type Event = world::Event<F>;
pub type InternalState = soma::InternalState<F>;
pub type AgentState = agent::AgentState<F>;
pub type Simulation = ecology::Simulation<F>;
pub type SimulationConfig = ecology::SimulationConfig<F>;
