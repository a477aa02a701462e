//! Independent reference implementations used by the test suites.
//!
//! Nothing here is used by the library itself; the module is compiled only
//! for tests or with the `testkit` feature.

pub mod graph;
pub mod kinematics;
pub mod surface;
pub mod neighbours;
