//! Obstacle avoidance for a 7-DoF arm through a learned two-dimensional
//! latent manifold.
//!
//! The pipeline: sample collision-labelled configurations ([`dataset`]),
//! fit a variational autoencoder with a 2D latent ([`vae`]), build a
//! roadmap over safe latent points ([`roadmap`]), and follow / reroute
//! shortest paths while scripted obstacles move and morph
//! ([`scenario`], [`replanner`]).

pub mod collision;
pub mod dataset;
pub mod metrics;
pub mod oracle;
pub mod replanner;
pub mod roadmap;
pub mod scenario;
pub mod robot;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
pub mod util;
pub mod verify;
pub mod vae;

pub use collision::{
    arm_clearance, clearance_cost, gjk_distance, is_collision, ClearanceReport, CollisionError,
    ConvexShape, CostParams, ShapeKind,
};
pub use robot::{JointVector, Pose, RobotError, RobotModel, DOF};
