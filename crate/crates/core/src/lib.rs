//! Simulation core for a sprawling two-segment quadruped with an optional
//! rigid or cable-stiffened flexible tail.
//!
//! The crate is `no_std` with `alloc`; the default `std` feature only adds
//! `std::error::Error` impls.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod controller;
pub mod dynamics;
pub mod experiment;
pub mod math;
pub mod metrics;
pub mod rng;
pub mod robot;
pub mod terrain;

pub use controller::{GaitParams, ServoCommandSet, TailPolicy, TailPolicyKind};
pub use dynamics::{step_world, Stepper, WorldState};
pub use experiment::{run_trial, ExperimentConfig};
pub use math::{Pose, UnitQuat, Vec3};
pub use metrics::{FailureReason, TrajectoryLog, TrialResult};
pub use robot::{build_robot, ArticulatedRobot, Morphology, ReelState, TailKind, TailVariant};
pub use terrain::{StairDirection, Terrain, TerrainKind};
