//! Models a network of K computers under progressive attack as a discrete
//! event system, builds the defender's observer automaton under partial
//! observation, solves the min-max discounted dynamic program for an optimal
//! defense policy, and runs re-image-cost sweeps and closed-loop simulations
//! on top of it.

pub mod automaton;
pub mod error;
pub mod experiments;
pub mod model;
pub mod observer;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    AttackObservation, AttackerEvent, CostModel, DefenderAction, ModelFlags, Observation, Phase,
    SecurityLevel, SystemState,
};
