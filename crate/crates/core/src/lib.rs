//! Aggregate modelling and coordination of thermostatically controlled loads.
//!
//! The population of on/off loads is described by a controlled Markov chain
//! over (mode, temperature bin, lockout counter). A convex program over joint
//! distributions picks a feasible power reference together with randomized
//! switching policies, and a seeded agent simulation checks both.

pub mod error;
pub mod expanded;
pub mod fleet;
pub mod generator;
pub mod grid;
pub mod linalg;
pub mod markov;
pub mod solver;
pub mod synthesis;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Compressor state of a load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Off,
    On,
}

impl Mode {
    pub fn flip(self) -> Mode {
        match self {
            Mode::Off => Mode::On,
            Mode::On => Mode::Off,
        }
    }

    /// 1 for on, 0 for off (the `m(t)` of the thermal model).
    pub fn indicator(self) -> f64 {
        match self {
            Mode::Off => 0.0,
            Mode::On => 1.0,
        }
    }
}
